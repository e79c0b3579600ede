"""Lorentz/Drude permittivity and the plasmonic dispersion equation.

The dispersion function for a visible eigenvalue ``λ`` is

    f(ω, γ) = ε₀(z) - (ε₀(z) - ε_p(ω, γ)) λ

and its unique root in the sweep square is available in closed form.  Time
convention: the damping enters as ``+iγω`` in the Lorentz denominator, so
``Im ε_p <= 0`` for ``γ >= 0`` and the root has ``γ >= 0`` whenever
``Im ε₀(z) >= 0``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

GUARD = 0.02
GAMMA_FLOOR = 1e-3


class DispersionError(ValueError):
    pass


@dataclass(frozen=True)
class LorentzMedium:
    """Dispersive particle material; ``model`` selects Lorentz or Drude."""

    eps_inf: float = 1.0
    omega_p: float = 1.0
    omega_0: float = 1.0
    model: str = "lorentz"

    def __post_init__(self):
        if not (self.eps_inf > 0 and self.omega_p > 0 and self.omega_0 > 0):
            raise ValueError("eps_inf, omega_p and omega_0 must be positive")
        if self.model not in ("lorentz", "drude"):
            raise ValueError(f"unknown permittivity model {self.model!r}")

    @property
    def omega_max(self) -> float:
        if self.model == "drude":
            return self.omega_p / math.sqrt(self.eps_inf)
        return math.hypot(self.omega_0, self.omega_p)

    @property
    def omega_min(self) -> float:
        return 0.0 if self.model == "drude" else self.omega_0

    def permittivity(self, omega, gamma):
        if self.model == "drude":
            return drude_permittivity(self, omega, gamma)
        return lorentz_permittivity(self, omega, gamma)


@dataclass(frozen=True)
class HostPermittivity:
    """Value of the background permittivity ``ε₀`` at the particle location."""

    value: complex

    def __post_init__(self):
        object.__setattr__(self, "value", complex(self.value))
        if self.value.imag < 0:
            raise ValueError("host permittivity must have non-negative imaginary part")

    def check(self, m: LorentzMedium):
        if not self.value.real > m.eps_inf:
            raise DispersionError(
                f"host permittivity hypothesis violated: Re eps0 = {self.value.real} <= eps_inf = {m.eps_inf}"
            )


@dataclass(frozen=True)
class Resonance:
    lam: float
    omega: float
    gamma: float
    residual: complex
    condition: float

    def __iter__(self):
        return iter((self.omega, self.gamma))


@dataclass(frozen=True)
class SweepSquare:
    omega_min: float
    omega_max: float
    gamma_max: float

    def __iter__(self):
        return iter((self.omega_min, self.omega_max, self.gamma_max))

    def contains(self, omega, gamma) -> bool:
        return self.omega_min < omega < self.omega_max and 0.0 <= gamma < self.gamma_max


def _host(host) -> complex:
    return host.value if isinstance(host, HostPermittivity) else complex(host)


def lorentz_permittivity(m: LorentzMedium, omega, gamma):
    """``ε_∞ [1 + ω_p² / (ω₀² - ω² + iγω)]`` (vectorised)."""
    omega = np.asarray(omega, dtype=complex)
    gamma = np.asarray(gamma, dtype=float)
    den = m.omega_0**2 - omega**2 + 1j * gamma * omega
    if np.any(den == 0):
        raise DispersionError("undamped resonance singularity")
    out = m.eps_inf * (1.0 + m.omega_p**2 / den)
    return complex(out) if out.ndim == 0 else out


def drude_permittivity(m: LorentzMedium, omega, gamma):
    """``ε_∞ - ω_p² / (ω² - iγω)``, the free-electron limit with the same time convention."""
    omega = np.asarray(omega, dtype=complex)
    gamma = np.asarray(gamma, dtype=float)
    den = omega**2 - 1j * gamma * omega
    if np.any(den == 0):
        raise DispersionError("Drude pole at omega = 0")
    out = m.eps_inf - m.omega_p**2 / den
    return complex(out) if out.ndim == 0 else out


def dispersion_residual(lam, host, m: LorentzMedium, omega, gamma):
    """``f(ω, γ) = ε₀(z) - (ε₀(z) - ε_p(ω, γ)) λ``."""
    e0 = _host(host)
    return e0 - (e0 - m.permittivity(omega, gamma)) * lam


def _check_lambda(lam: float, guard: float):
    if not 0.0 < lam < 1.0:
        raise DispersionError(f"eigenvalue {lam} outside (0, 1)")
    if abs(lam - 0.5) < guard:
        raise DispersionError("eigenvalue too close to accumulation point 1/2")


def resonance(lam: float, host, m: LorentzMedium, guard: float = GUARD) -> Resonance:
    """Closed-form root ``(ω_n, γ_n)`` of the dispersion equation."""
    _check_lambda(lam, guard)
    e0 = _host(host)
    HostPermittivity(e0).check(m)
    if m.model == "drude":
        omega, gamma = _drude_root(lam, e0, m)
    else:
        c = e0 * (1.0 - lam) + lam * m.eps_inf
        re_c = e0.real * (1.0 - lam) + lam * m.eps_inf
        abs_c = abs(c)
        num = m.omega_p**2 * lam * m.eps_inf
        omega = math.sqrt(m.omega_0**2 + num * re_c / abs_c**2)
        Q = math.sqrt(m.omega_0**2 * abs_c**2 + num * re_c)
        gamma = e0.imag * (1.0 - lam) * num / (abs_c * Q)
    residual = dispersion_residual(lam, e0, m, omega, gamma)
    return Resonance(lam, omega, gamma, residual, _root_condition(lam, e0, m, omega, gamma))


def _drude_root(lam: float, e0: complex, m: LorentzMedium):
    # ε_p = -ε₀(1-λ)/λ  <=>  ω² - iγω = ω_p² / (ε_∞ + ε₀(1-λ)/λ)
    W = m.omega_p**2 / (m.eps_inf + e0 * (1.0 - lam) / lam)
    omega = math.sqrt(W.real)
    return omega, -W.imag / omega


def _root_condition(lam, e0, m, omega, gamma) -> float:
    # relative sensitivity of ω_n to relative perturbations of ε₀(z)
    h = 1e-7 * max(omega, 1.0)
    df = (dispersion_residual(lam, e0, m, omega + h, gamma) - dispersion_residual(lam, e0, m, omega - h, gamma)) / (2 * h)
    if df == 0:
        return math.inf
    return abs(e0) * abs(1.0 - lam) / (omega * abs(df))


def resonance_bisect(lam: float, host, m: LorentzMedium, guard: float = GUARD) -> tuple[float, float]:
    """Root by bisection on ``Re f`` along the curve where ``Im f = 0``.

    Diagnostic fallback for the closed form (Lorentz model only).
    """
    _check_lambda(lam, guard)
    e0 = _host(host)
    HostPermittivity(e0).check(m)
    R = e0.real * (1.0 - lam) + lam * m.eps_inf

    def gamma_of(omega):
        return e0.imag * (1.0 - lam) * (omega**2 - m.omega_0**2) / (R * omega)

    def g(omega):
        return dispersion_residual(lam, e0, m, omega, gamma_of(omega)).real

    lo = m.omega_0 * (1.0 + 1e-12)
    hi = m.omega_max * (1.0 - 1e-15)
    omega = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return omega, gamma_of(omega)


def bounds(host_field_bound: float, m: LorentzMedium) -> SweepSquare:
    """Sweep square ``(ω_min, ω_max) x (0, γ_max)`` with ``γ_max = ω_max sup(Im ε₀/Re ε₀)``.

    A lossless host gives a degenerate square, so ``γ_max`` is floored at
    ``1e-3 ω_max``.
    """
    if host_field_bound < 0:
        raise ValueError("the bound sup(Im eps0 / Re eps0) is non-negative")
    omega_max = m.omega_max
    if omega_max - m.omega_min < 1e-9 * max(m.omega_min, 1.0):
        raise DispersionError("no plasmonic band: sweep interval collapses")
    gamma_max = max(omega_max * host_field_bound, GAMMA_FLOOR * omega_max)
    return SweepSquare(m.omega_min, omega_max, gamma_max)


def lossless_resonance(lam: float, re_host: float, m: LorentzMedium, guard: float = 0.0) -> float:
    """Resonant frequency for a real host (damping taken small and fixed)."""
    _check_lambda(lam, guard)
    if not re_host > m.eps_inf:
        raise DispersionError("host permittivity hypothesis violated")
    return math.sqrt(m.omega_0**2 + lam * m.eps_inf * m.omega_p**2 / (lam * m.eps_inf + (1.0 - lam) * re_host))


def principal_sqrt(w: complex) -> complex:
    """Square root with argument in ``(-π/2, π/2]`` (branch ``-π < φ <= π``)."""
    w = complex(w)
    if w.imag == 0.0 and w.real < 0.0:
        return complex(0.0, math.sqrt(-w.real))
    return cmath.sqrt(w)


def complex_resonance(lam: float, host, m: LorentzMedium, gamma_fixed: float) -> tuple[complex, complex]:
    """Complex frequencies ``(iγ ± sqrt(Δ*)) / 2`` solving ``f(ω, γ) = 0`` at fixed ``γ``."""
    if not 0.0 < lam < 1.0:
        raise DispersionError(f"eigenvalue {lam} outside (0, 1)")
    e0 = _host(host)
    delta = -(gamma_fixed**2) + 4.0 * (
        m.omega_0**2 + lam * m.eps_inf * m.omega_p**2 / (e0 * (1.0 - lam) + m.eps_inf * lam)
    )
    root = principal_sqrt(delta)
    return (1j * gamma_fixed + root) / 2.0, (1j * gamma_fixed - root) / 2.0


@dataclass(frozen=True)
class DetunedResidual:
    value: float
    resonant: bool

    @property
    def classification(self) -> str:
        return "resonant" if self.resonant else "non-resonant"


def detuned_residual_scale(
    lambda_n: float,
    lambda_n0: float,
    resonance_n0: Resonance,
    m: LorentzMedium,
    host,
    a: float,
    h: float,
    signs: tuple[int, int] = (1, 1),
) -> DetunedResidual:
    """``|f_n(ω_n0 ± a^h, γ_n0 ± a^h)|`` and whether ``n`` is the resonant index."""
    if not (0.0 < h < 1.0 and 0.0 < a < 1.0):
        raise ValueError("need 0 < h < 1 and 0 < a < 1")
    d = a**h
    omega = resonance_n0.omega + signs[0] * d
    gamma = resonance_n0.gamma + signs[1] * d
    value = abs(dispersion_residual(lambda_n, host, m, omega, gamma))
    return DetunedResidual(float(value), abs(lambda_n - lambda_n0) <= 1e-12)
