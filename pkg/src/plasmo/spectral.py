"""Visible eigenmodes of the Magnetization operator on the reference shape.

Only the modes whose mean ``∫_B e dx`` is non-zero couple to a locally constant
incident field, and for an ellipsoid they are governed by the constant matrix
``∇M(I)`` (the demagnetisation tensor).  Full eigenfunction fields are never
built; the forward and inverse problems only need eigenvalues and means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .geometry import DEFAULT_ORDER, Shape, contains, ray_exit, sphere_rule, volume_quadrature

# mean of the visible eigenfunction of the unit ball
BALL_MEAN = 2.0 / 9.0 * np.sqrt(np.pi / 3.0)

DEMAG_TOL = 1e-10


@dataclass(frozen=True)
class EigenMode:
    """A Magnetization eigenpair reduced to its eigenvalue and mean vector.

    ``mean`` is None when the magnitude is not known (non-spherical shapes);
    ``direction`` is always the unit axis the mean points along.
    """

    lam: float
    direction: tuple[float, float, float]
    mean_magnitude: float | None
    subspace_tag: int = 3

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"eigenvalue {self.lam} outside (0, 1]")
        if self.subspace_tag not in (1, 2, 3):
            raise ValueError("subspace tag must be 1, 2 or 3")
        if self.subspace_tag != 3 and self.mean_magnitude not in (None, 0.0):
            raise ValueError("modes of the first two subspaces have zero mean")

    @property
    def mean(self) -> np.ndarray | None:
        if self.mean_magnitude is None:
            return None
        return self.mean_magnitude * np.asarray(self.direction)

    @property
    def visible(self) -> bool:
        return self.subspace_tag == 3 and self.mean_magnitude != 0.0


@dataclass(frozen=True)
class MagnetizationTensor:
    """Diagonal of ``∇M(I)`` on an ellipsoid (demagnetisation factors)."""

    diag: tuple[float, float, float]

    @property
    def trace(self) -> float:
        return float(sum(self.diag))

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diag)


def demag_integral(r1: float, r2: float, r3: float, j: int) -> float:
    """``∫_0^∞ ds / ((s + r_j^2) sqrt((s + r1^2)(s + r2^2)(s + r3^2)))``.

    ``j`` is 0-based.  The half line is mapped to ``[0, π/2)`` by
    ``s = tan²θ``, which leaves a bounded smooth integrand.
    """
    axes = np.array([r1, r2, r3], dtype=float)
    if np.any(axes <= 0):
        raise ValueError("semi-axes must be positive")
    sq = axes**2
    rj2 = sq[j]

    def integrand(theta):
        c = np.cos(theta)
        s = np.tan(theta) ** 2
        # ds = 2 tanθ sec²θ dθ; multiply through by cos^5 to keep everything bounded
        num = 2.0 * np.sin(theta) * c**2
        den = (1.0 + (rj2 - 1.0) * c**2) * np.sqrt(np.prod(1.0 + (sq - 1.0) * c**2))
        if c == 0.0:
            return 0.0
        return num / den if np.isfinite(s) else 0.0

    value, err = integrate.quad(integrand, 0.0, np.pi / 2, epsabs=1e-13, epsrel=1e-13, limit=500)
    if err > DEMAG_TOL:
        raise ArithmeticError(f"demagnetisation integral did not converge (error estimate {err:.3g})")
    return float(value)


def magnetization_tensor(shape: Shape) -> MagnetizationTensor:
    if shape.is_round:
        third = 1.0 / 3.0
        return MagnetizationTensor((third, third, third))
    r1, r2, r3 = shape.semi_axes
    pref = 0.5 * r1 * r2 * r3
    return MagnetizationTensor(tuple(pref * demag_integral(r1, r2, r3, j) for j in range(3)))


def visible_modes(shape: Shape, mean_magnitudes=None) -> list[EigenMode]:
    """Modes with non-zero mean, sorted by eigenvalue then axis.

    For a round shape this is the triple ``λ = 1/3`` with means
    ``BALL_MEAN * e_j``.  For ellipsoids the eigenvalues are the
    demagnetisation factors and the mean magnitudes are unknown unless
    supplied through ``mean_magnitudes``.
    """
    tensor = magnetization_tensor(shape)
    if mean_magnitudes is None:
        mags = (BALL_MEAN,) * 3 if shape.is_round else (None,) * 3
    else:
        mags = tuple(float(m) for m in mean_magnitudes)
    eye = np.eye(3)
    modes = [EigenMode(tensor.diag[j], tuple(eye[j]), mags[j]) for j in range(3)]
    return sorted(modes, key=lambda m: (m.lam, int(np.argmax(m.direction))))


def distinct_eigenvalues(modes, tol: float = 1e-12) -> list[float]:
    lams: list[float] = []
    for m in sorted(modes, key=lambda m: m.lam):
        if not lams or m.lam - lams[-1] > tol:
            lams.append(m.lam)
    return lams


def newtonian_potential_of_one(shape: Shape, x, order: int = 96) -> float:
    """``N(1)(x) = ∫_B dy / (4π|x - y|)`` for ``x`` inside the shape.

    Polar coordinates around ``x`` reduce it to ``(1/8π) ∫_{S²} ρ(ω)² dω``
    with ``ρ`` the distance to the boundary along ``ω``.
    """
    dirs, w = sphere_rule(order)
    rho = ray_exit(shape, x, dirs)
    return float(w @ rho**2) / (8.0 * np.pi)


def apply_magnetization_to_constant(shape: Shape, x, step: float = 1e-4, order: int = 96) -> np.ndarray:
    """``∇M(I)(x) = -Hess N(1)(x)`` by central differences.

    This is an independent numerical route to the demagnetisation tensor.
    """
    x = np.asarray(x, dtype=float)
    local = np.sum((x / shape.axes) ** 2)
    if local > 1.0 or 1.0 - np.sqrt(local) < 1e-3:
        raise ValueError("point must lie inside the shape, at least 1e-3 from the boundary")

    def N(p):
        return newtonian_potential_of_one(shape, p, order)

    eye = np.eye(3)
    center = N(x)
    hess = np.empty((3, 3))
    for i in range(3):
        hess[i, i] = (N(x + step * eye[i]) - 2.0 * center + N(x - step * eye[i])) / step**2
        for k in range(i + 1, 3):
            e, f = step * eye[i], step * eye[k]
            hess[i, k] = hess[k, i] = (N(x + e + f) - N(x + e - f) - N(x - e + f) + N(x - e - f)) / (4 * step**2)
    return -hess


def newtonian_potential_of_one_closed(shape: Shape, x) -> float:
    """Closed form of ``N(1)`` inside an ellipsoid, used as a cross-check.

    ``(r1 r2 r3 / 4) ∫_0^∞ (1 - Σ x_j²/(s + r_j²)) ds / sqrt(Π (s + r_j²))``.
    """
    r = shape.axes
    x = np.asarray(x, dtype=float)
    base = integrate.quad(
        lambda s: 1.0 / np.sqrt(np.prod(s + r**2)), 0.0, np.inf, epsabs=1e-13, epsrel=1e-13
    )[0]
    I = np.array([demag_integral(*r, j) for j in range(3)])
    return float(np.prod(r) / 4.0 * (base - np.sum(x**2 * I)))


def constant_projection(shape: Shape, field, order: int = DEFAULT_ORDER) -> np.ndarray:
    """``∫_B E dx``: the projection of a vector field on the constant fields."""
    return np.asarray(volume_quadrature(shape, field, order))


def solenoidal_test_field(shape: Shape, vector_potential):
    """A divergence-free field ``curl((1 - q) A)`` with ``q = Σ (x_j / r_j)²``.

    ``(1 - q) A`` vanishes on ``∂B`` so the field has zero mean.
    ``vector_potential`` returns ``(A, curl A)`` for an (N, 3) array of points.
    """
    r2 = shape.axes**2

    def field(x):
        q = np.sum(x**2 / r2, axis=-1)
        A, curl_A = vector_potential(x)
        return (1.0 - q)[:, None] * curl_A - np.cross(2.0 * x / r2, A)

    return field


def gradient_test_field(shape: Shape, weight):
    """A field in ``H_0(curl = 0)``: ``∇φ`` with ``φ = (1 - q) g(x)`` vanishing on ``∂B``.

    ``weight`` returns ``(g, ∇g)`` for an (N, 3) array of points.
    """
    r2 = shape.axes**2

    def field(x):
        q = np.sum(x**2 / r2, axis=-1)
        g, grad_g = weight(x)
        return (1.0 - q)[:, None] * grad_g - (2.0 * g)[:, None] * x / r2

    return field


def is_inside(shape: Shape, x) -> bool:
    return bool(contains(shape, x))
