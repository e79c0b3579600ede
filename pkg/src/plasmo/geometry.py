"""Reference shapes, scaled particles and the quadrature rules used for every
volume and sphere-surface integral in the package.

All volume integrals are done with a polar ("star") rule centred at an interior
point: directions come from a product Gauss rule on the unit sphere and the
radial segment from the centre to the boundary is integrated with
Gauss-Legendre.  The boundary of a ball or ellipsoid is hit analytically along
each ray, so the rule converges spectrally for smooth integrands and also
handles the ``1/|x - y|`` singularity of the Newtonian kernel when centred at
the singular point.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DEFAULT_ORDER = 32
MIN_SEMI_AXIS = 1e-6


@dataclass(frozen=True)
class Shape:
    """Reference domain ``B``: a unit ball or an ellipsoid of maximum radius 1."""

    semi_axes: tuple[float, float, float] = (1.0, 1.0, 1.0)
    kind: str = "ball"

    def __post_init__(self):
        axes = tuple(float(r) for r in self.semi_axes)
        if len(axes) != 3:
            raise ValueError("a shape needs exactly three semi-axes")
        if self.kind not in ("ball", "ellipsoid"):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.kind == "ball" and axes != (1.0, 1.0, 1.0):
            raise ValueError("a ball has unit semi-axes")
        if min(axes) < MIN_SEMI_AXIS:
            raise ValueError(f"degenerate ellipsoid, semi-axes {axes}")
        if abs(max(axes) - 1.0) > 1e-12:
            raise ValueError(f"reference shape must have maximum radius 1, got {max(axes)}")
        object.__setattr__(self, "semi_axes", axes)

    @property
    def axes(self) -> np.ndarray:
        return np.asarray(self.semi_axes)

    @property
    def is_round(self) -> bool:
        """True for the ball and for the ellipsoid with equal semi-axes."""
        r1, r2, r3 = self.semi_axes
        return r1 == r2 == r3

    @property
    def volume(self) -> float:
        return 4.0 * np.pi / 3.0 * float(np.prod(self.semi_axes))


def Ball() -> Shape:
    return Shape((1.0, 1.0, 1.0), "ball")


def Ellipsoid(r1: float, r2: float, r3: float) -> Shape:
    return Shape((r1, r2, r3), "ellipsoid")


@dataclass(frozen=True)
class Particle:
    """The nano-particle ``D = a B + z``."""

    shape: Shape
    center: tuple[float, float, float]
    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"particle scale must be positive, got {self.a}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def z(self) -> np.ndarray:
        return np.asarray(self.center)

    @property
    def radius(self) -> float:
        """Radius of the smallest ball around ``z`` containing ``D``."""
        return self.a * max(self.shape.semi_axes)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def volume(self) -> float:
        return self.a**3 * self.shape.volume

    def contains(self, x) -> np.ndarray:
        return contains(self.shape, (np.asarray(x, dtype=float) - self.z) / self.a)

    def distance(self, x) -> float:
        """Euclidean distance from ``x`` to the closed particle (0 inside)."""
        local = (np.asarray(x, dtype=float) - self.z) / self.a
        return self.a * _ellipsoid_distance(self.shape.axes, local)


def _ellipsoid_distance(axes: np.ndarray, x: np.ndarray) -> float:
    # closest point: y_j = r_j^2 x_j / (r_j^2 + t), with t >= 0 solving sum (y_j/r_j)^2 = 1
    if np.sum((x / axes) ** 2) <= 1.0:
        return 0.0
    if np.all(axes == axes[0]):
        return float(np.linalg.norm(x) - axes[0])
    from scipy.optimize import brentq

    r2 = axes**2

    def g(t):
        return np.sum(r2 * x**2 / (r2 + t) ** 2) - 1.0

    hi = float(np.max(axes) * np.linalg.norm(x)) + 1.0
    while g(hi) > 0:
        hi *= 2.0
    t = brentq(g, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    y = r2 * x / (r2 + t)
    return float(np.linalg.norm(x - y))


def contains(shape: Shape, x) -> np.ndarray | bool:
    """Membership of points in the closed reference shape (vectorised on the last axis)."""
    x = np.asarray(x, dtype=float)
    inside = np.sum((x / shape.axes) ** 2, axis=-1) <= 1.0
    return bool(inside) if inside.ndim == 0 else inside


@lru_cache(maxsize=64)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_interval(lo, hi, n: int):
    """Nodes/weights of an ``n``-point Gauss rule on [lo, hi] (lo, hi may be arrays)."""
    x, w = gauss_legendre(n)
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    return lo + (hi - lo) * x, (hi - lo) * w


@lru_cache(maxsize=64)
def _sphere_rule(order: int, cos_lo: float, cos_hi: float) -> tuple[np.ndarray, np.ndarray]:
    u, wu = gauss_legendre(order)
    c = cos_lo + (cos_hi - cos_lo) * u
    wc = (cos_hi - cos_lo) * wu
    n_phi = 2 * order
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    s = np.sqrt(np.clip(1.0 - c**2, 0.0, None))
    dirs = np.stack(
        [
            np.outer(s, np.cos(phi)).ravel(),
            np.outer(s, np.sin(phi)).ravel(),
            np.repeat(c, n_phi),
        ],
        axis=-1,
    )
    weights = np.repeat(wc, n_phi) * (2.0 * np.pi / n_phi)
    dirs.setflags(write=False)
    weights.setflags(write=False)
    return dirs, weights


def sphere_rule(order: int = DEFAULT_ORDER, cos_min: float = -1.0, axis=None):
    """Product rule on the unit sphere, optionally restricted to a polar cap.

    Gauss-Legendre in ``cos(theta)`` on ``[cos_min, 1]`` times the trapezoid
    rule with ``2 * order`` points in ``phi``.  Integrates spherical harmonics
    of degree ``< 2 * order`` exactly on the full sphere.  ``axis`` orients the
    pole of the cap.

    Returns:
        (directions of shape (N, 3), weights of shape (N,))
    """
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    dirs, weights = _sphere_rule(int(order), float(cos_min), 1.0)
    if axis is not None:
        dirs = dirs @ _frame(np.asarray(axis, dtype=float)).T
    return dirs, weights


def _frame(axis: np.ndarray) -> np.ndarray:
    """Rotation matrix whose third column is ``axis`` (normalised)."""
    e3 = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(e3[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(helper, e3)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    return np.stack([e1, e2, e3], axis=-1)


def ray_exit(shape: Shape, origin, directions) -> np.ndarray:
    """Distance from an interior ``origin`` to the shape boundary along each direction."""
    o = np.asarray(origin, dtype=float) / shape.axes
    d = np.asarray(directions, dtype=float) / shape.axes
    # |o + r d|^2 = 1  ->  A r^2 + 2 B r + C = 0 with C <= 0
    A = np.sum(d * d, axis=-1)
    B = d @ o
    C = o @ o - 1.0
    if C > 1e-14:
        raise ValueError("ray origin must lie inside the shape")
    return (-B + np.sqrt(B * B - A * min(C, 0.0))) / A


def star_quadrature(shape: Shape, f, order: int = DEFAULT_ORDER, origin=None, radial_order=None):
    """Integrate ``f`` over the shape with a polar rule centred at ``origin``.

    ``f`` maps an (N, 3) array of points to N values (or (N, k) arrays).  The
    ``r**2`` Jacobian makes integrands with a ``1/|y - origin|`` singularity
    regular.
    """
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    origin = np.zeros(3) if origin is None else np.asarray(origin, dtype=float)
    nr = radial_order or order
    dirs, wdir = sphere_rule(order)
    rho = ray_exit(shape, origin, dirs)
    r, wr = gauss_interval(np.zeros_like(rho), rho, nr)  # (Ndir, nr)
    pts = origin + r[..., None] * dirs[:, None, :]
    vals = np.asarray(f(pts.reshape(-1, 3)))
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand returned non-finite values")
    w = (wdir[:, None] * wr * r**2).reshape(-1)
    return np.tensordot(w, vals.reshape(w.shape[0], *vals.shape[1:]), axes=(0, 0))


def volume_quadrature(shape: Shape, f, order: int = DEFAULT_ORDER):
    """``∫_shape f`` through the affine map from the unit ball.

    The polar rule on the ball has constant ray length, so eccentric
    ellipsoids converge as fast as the ball does.
    """
    axes = shape.axes
    return float(np.prod(axes)) * star_quadrature(Ball(), lambda y: f(y * axes), order)


def sphere_surface_quadrature(center, radius: float, f, order: int = DEFAULT_ORDER, axis=None, cos_min: float = -1.0):
    """``∫_{∂B(center, radius)} f dσ``, optionally over the cap ``cos(angle to axis) >= cos_min``."""
    if not radius > 0:
        raise ValueError(f"sphere radius must be positive, got {radius}")
    if cos_min >= 1.0:
        return 0.0
    dirs, w = sphere_rule(order, max(cos_min, -1.0), axis if axis is not None else (0.0, 0.0, 1.0))
    vals = np.asarray(f(np.asarray(center, dtype=float) + radius * dirs))
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand returned non-finite values")
    return radius**2 * np.tensordot(w, vals, axes=(0, 0))


@dataclass(frozen=True)
class BallDomain:
    """The background domain ``Ω``, a ball."""

    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("domain radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center)

    @property
    def volume(self) -> float:
        return 4.0 * np.pi / 3.0 * self.radius**3

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, y, tol: float = 0.0):
        y = np.asarray(y, dtype=float)
        return np.linalg.norm(y - self.c, axis=-1) <= self.radius + tol

    def contains_particle(self, particle: Particle) -> bool:
        return np.linalg.norm(particle.z - self.c) + particle.radius < self.radius

    def project_to_boundary(self, y) -> np.ndarray:
        v = np.asarray(y, dtype=float) - self.c
        return self.c + self.radius * v / np.linalg.norm(v, axis=-1, keepdims=True)

    def sphere_cap(self, x, t: float) -> tuple[np.ndarray, float]:
        """Part of ``∂B(x, t)`` inside the domain as ``(axis, cos_min)``.

        Points ``x + t w`` are inside iff ``w · axis >= cos_min``.  A
        ``cos_min`` above 1 means the sphere misses the domain and one at or
        below -1 means the whole sphere is inside.
        """
        x = np.asarray(x, dtype=float)
        v = self.c - x
        d = float(np.linalg.norm(v))
        if d < 1e-14:
            return np.array([0.0, 0.0, 1.0]), (-1.0 if t <= self.radius else 2.0)
        return v / d, (t * t + d * d - self.radius**2) / (2.0 * t * d)
