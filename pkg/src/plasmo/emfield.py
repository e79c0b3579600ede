"""Electromagnetic forward quantities at leading order in the particle size.

The incident field is the host plane wave; the field inside the particle is
carried by the near-resonant visible modes only, which gives closed forms for
the electric energy ``∫_D |u₁|²`` and the scattering-matrix integral.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dispersion import HostPermittivity, LorentzMedium, dispersion_residual
from .geometry import BallDomain, Particle
from .spectral import EigenMode, distinct_eigenvalues, visible_modes

PROFILES = ("uniform", "bump")


@dataclass(frozen=True)
class IncidentWave:
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    polarization: tuple[float, float, float] = (0.0, 0.0, 1.0)
    amplitude: float = 1.0

    def __post_init__(self):
        th = np.asarray(self.direction, dtype=float)
        q = np.asarray(self.polarization, dtype=float)
        if th.shape != (3,) or q.shape != (3,):
            raise ValueError("direction and polarization are 3-vectors")
        if abs(np.linalg.norm(th) - 1.0) > 1e-9 or abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError("direction and polarization must be unit vectors")
        if abs(th @ q) > 1e-9:
            raise ValueError("polarization must be orthogonal to the direction (div u0 = 0)")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        object.__setattr__(self, "direction", tuple(th))
        object.__setattr__(self, "polarization", tuple(q))


@dataclass(frozen=True)
class Scenario:
    """Everything the forward model needs.

    ``profile`` describes ``Im ε₀`` over the domain: ``"uniform"`` keeps the
    value at ``z`` everywhere, ``"bump"`` uses ``(1 - |y-c|²/R²)²`` scaled to
    match the value at ``z``.  ``Re ε₀`` is constant.
    """

    domain: BallDomain
    host: HostPermittivity
    medium: LorentzMedium
    particle: Particle
    incident: IncidentWave = field(default_factory=IncidentWave)
    mu: float = 1.0
    h: float = 0.5
    profile: str = "uniform"
    mean_magnitudes: tuple[float, float, float] | None = None

    def __post_init__(self):
        if not 0.0 < self.h < 1.0:
            raise ValueError("asymptotic exponent h must lie in (0, 1)")
        if not self.mu > 0:
            raise ValueError("permeability must be positive")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown host profile {self.profile!r}")
        if not self.domain.contains_particle(self.particle):
            raise ValueError("particle must lie strictly inside the domain")

    @property
    def eps0(self) -> complex:
        return self.host.value

    @property
    def modes(self) -> list[EigenMode]:
        return visible_modes(self.particle.shape, self.mean_magnitudes)

    def wavenumber(self, omega: float) -> float:
        return omega * np.sqrt(self.mu * self.eps0.real)

    def _profile_weight(self, y) -> np.ndarray:
        r = np.linalg.norm(np.asarray(y, dtype=float) - self.domain.c, axis=-1) / self.domain.radius
        return np.where(r < 1.0, (1.0 - r**2) ** 2, 0.0)

    def im_eps0(self, y) -> np.ndarray:
        """``Im ε₀(y)`` on the domain (zero outside)."""
        y = np.asarray(y, dtype=float)
        inside = self.domain.contains(y)
        if self.profile == "uniform":
            return np.where(inside, self.eps0.imag, 0.0)
        return self.eps0.imag * self._profile_weight(y) / self._profile_weight(self.particle.z)

    def host_field_bound(self) -> float:
        """``sup_Ω Im ε₀ / Re ε₀``."""
        peak = self.eps0.imag
        if self.profile == "bump":
            peak /= float(self._profile_weight(self.particle.z))
        return peak / self.eps0.real


def incident_field(s: Scenario, x, omega: float) -> np.ndarray:
    """``A q exp(i k θ·x)`` with the host wavenumber ``k = ω sqrt(μ Re ε₀)``."""
    x = np.asarray(x, dtype=float)
    inc = s.incident
    phase = np.exp(1j * s.wavenumber(omega) * (x @ np.asarray(inc.direction)))
    return inc.amplitude * np.multiply.outer(phase, np.asarray(inc.polarization))


def _residuals(s: Scenario, modes, omega, gamma) -> np.ndarray:
    return np.array([dispersion_residual(m.lam, s.host, s.medium, omega, gamma) for m in modes])


def mode_projection_solve(s: Scenario, omega: float, gamma: float, modes=None) -> np.ndarray:
    """Leading-order coefficients ``ε₀(z) (u₀(z)·mean_n) / f_n(ω, γ)``."""
    modes = s.modes if modes is None else modes
    res = _residuals(s, modes, omega, gamma)
    if np.any(res == 0):
        raise ZeroDivisionError("exact root hit: evaluate at a frequency detuned by a^h")
    u0 = incident_field(s, s.particle.z, omega)
    coeffs = []
    for m, r in zip(modes, res):
        if m.mean is None:
            raise ValueError("mode mean is unknown for this shape; supply mean magnitudes")
        coeffs.append(s.eps0 * (u0 @ m.mean) / r)
    return np.array(coeffs)


def resonant_group(s: Scenario, omega: float, gamma: float, modes=None) -> list[int]:
    """Indices of the near-resonant modes (smallest |residual|, with degeneracy)."""
    modes = s.modes if modes is None else modes
    res = np.abs(_residuals(s, modes, omega, gamma))
    # ties go to the first index, and the modes are sorted by (λ, axis)
    best = int(np.argmin(res))
    return [i for i, m in enumerate(modes) if abs(m.lam - modes[best].lam) <= 1e-12]


def electric_energy(s: Scenario, omega, gamma):
    """Leading term of ``∫_D |u₁|²`` from the near-resonant mode group.

    ``a³ |ε₀(z)|² Σ_group |u₀(z)·mean_n|² / |f_n0(ω, γ)|²``; vectorised over
    ``omega`` and ``gamma`` (the plane wave has unit modulus, so only the
    residual depends on the frequency).
    """
    om, ga = np.broadcast_arrays(np.asarray(omega, dtype=float), np.asarray(gamma, dtype=float))
    modes = s.modes
    if any(m.mean is None for m in modes):
        raise ValueError("mode mean is unknown for this shape; supply mean magnitudes")
    lams = distinct_eigenvalues(modes)
    u0 = s.incident.amplitude * np.asarray(s.incident.polarization)
    weights = np.array(
        [sum(abs(u0 @ m.mean) ** 2 for m in modes if abs(m.lam - lam) <= 1e-12) for lam in lams]
    )
    res = np.abs(np.stack([dispersion_residual(lam, s.host, s.medium, om, ga) for lam in lams]))
    best = np.argmin(res, axis=0)
    r = np.take_along_axis(res, best[None], axis=0)[0]
    if np.any(r == 0):
        raise ZeroDivisionError("exact root hit: evaluate at a frequency detuned by a^h")
    out = s.particle.a**3 * abs(s.eps0) ** 2 * weights[best] / r**2
    return float(out) if out.ndim == 0 else out


def scattering_matrix_integral(s: Scenario, omega: float, gamma: float) -> np.ndarray:
    """``∫_D W dx ≈ a³ ε₀(z) / f_n0 · Σ mean ⊗ mean`` over the near-resonant group."""
    modes = s.modes
    group = [modes[i] for i in resonant_group(s, omega, gamma, modes)]
    out = np.zeros((3, 3), dtype=complex)
    for m in group:
        if m.mean is None:
            raise ValueError("mode mean is unknown for this shape; supply mean magnitudes")
        r = dispersion_residual(m.lam, s.host, s.medium, omega, gamma)
        out += s.particle.a**3 * s.eps0 / r * np.outer(m.mean, m.mean)
    return out


@dataclass(frozen=True)
class ScatteringSummary:
    energy: float
    w_integral: np.ndarray
    mode_coeffs: np.ndarray


def scattering_summary(s: Scenario, omega: float, gamma: float) -> ScatteringSummary:
    return ScatteringSummary(
        electric_energy(s, omega, gamma),
        scattering_matrix_integral(s, omega, gamma),
        mode_projection_solve(s, omega, gamma),
    )
