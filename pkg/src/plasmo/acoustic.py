"""Acoustic forward model with unit sound speed and unit ``ωβ₀/c_p``.

The initial pressure is ``Im ε₀(y)|u₀(y)|²`` on the domain plus the heat
released by the particle.  At leading order the particle term only matters
through its total mass ``(-Im ε_p) ∫_D |u₁|²``; it is spread over a truncated
Gaussian of radius ``a max(r_j)`` around ``z``.  The particle pulse is an odd
wave whose ``∫ p dt`` cancels, and ``p★`` weights that cancellation by ``s²``,
so the kernel has to be smooth enough for the sampled trace to integrate
spectrally.  Polynomial bumps with a kink at the edge lose accuracy like
``(s dt / a²)²``.

Pressure at a detector follows the spherical-means representation

    p(x, t) = (1/4π) ∂_t [ J(x, t) / t ],   J(x, t) = ∫_{∂B(x,t)} f dσ,

and the observable is ``p★(x, s) = ∫_0^s r ∫_0^r p dt dr``, which equals
``(1/4π) ∫_{B(x,s)} f``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from scipy.special import erf

from .dispersion import resonance
from .emfield import Scenario, electric_energy
from .geometry import (
    DEFAULT_ORDER,
    BallDomain,
    Particle,
    _frame,
    gauss_interval,
    gauss_legendre,
    sphere_surface_quadrature,
)

GAUSS_WIDTHS = 6.0  # kernel radius in standard deviations
KERNEL_SAMPLES = 2.0 * GAUSS_WIDTHS  # time samples across the particle kernel radius


def worker_count() -> int:
    """Thread cap from ``PLASMO_THREADS`` (default: CPU count)."""
    raw = os.environ.get("PLASMO_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"PLASMO_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RadialDensity:
    """A density depending only on ``|y - center|``, supported in ``|y - center| <= radius``.

    ``kind`` is ``"uniform"`` (constant ``g0``), ``"bump"``
    (``g0 (1 - ρ²/R²)²``) or ``"gauss"`` (``g0 exp(-ρ²/σ²)`` with
    ``σ = R / GAUSS_WIDTHS``).
    """

    center: tuple[float, float, float]
    radius: float
    kind: str
    g0: float

    def __post_init__(self):
        if self.kind not in ("uniform", "bump", "gauss"):
            raise ValueError(f"unknown radial profile {self.kind!r}")
        if not self.radius > 0:
            raise ValueError("support radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center)

    @property
    def sigma(self) -> float:
        return self.radius / GAUSS_WIDTHS

    def profile(self, rho):
        rho = np.asarray(rho, dtype=float)
        inside = rho <= self.radius
        if self.kind == "uniform":
            return np.where(inside, self.g0, 0.0)
        if self.kind == "gauss":
            return np.where(inside, self.g0 * np.exp(-((rho / self.sigma) ** 2)), 0.0)
        return np.where(inside, self.g0 * (1.0 - (rho / self.radius) ** 2) ** 2, 0.0)

    def __call__(self, y):
        return self.profile(np.linalg.norm(np.asarray(y, dtype=float) - self.c, axis=-1))

    def antiderivative(self, rho):
        """``G`` with ``G'(ρ) = g(ρ) ρ``, constant beyond the support."""
        rho = np.minimum(np.asarray(rho, dtype=float), self.radius)
        if self.kind == "uniform":
            return 0.5 * self.g0 * rho**2
        if self.kind == "gauss":
            return -0.5 * self.g0 * self.sigma**2 * np.exp(-((rho / self.sigma) ** 2))
        return -self.g0 * self.radius**2 / 6.0 * (1.0 - (rho / self.radius) ** 2) ** 3

    @property
    def mass(self) -> float:
        if self.kind == "uniform":
            return 4.0 * math.pi / 3.0 * self.g0 * self.radius**3
        if self.kind == "gauss":
            return self.g0 * _gauss_ball_mass(self.sigma, self.radius)
        return 32.0 * math.pi / 105.0 * self.g0 * self.radius**3

    def shell_integral(self, x, t):
        """``J(x, t) = ∫_{∂B(x,t)} g dσ`` in closed form (vectorised in ``t``)."""
        t = np.asarray(t, dtype=float)
        d = float(np.linalg.norm(np.asarray(x, dtype=float) - self.c))
        if d < 1e-14:
            return 4.0 * math.pi * t**2 * self.profile(t)
        upper = self.antiderivative(t + d)
        lower = self.antiderivative(np.abs(t - d))
        return 2.0 * math.pi * t / d * (upper - lower)

    def pressure(self, x, t):
        """Exact pressure of this initial density, ``[(d-t) g(|d-t|) + (d+t) g(d+t)] / 2d``."""
        t = np.asarray(t, dtype=float)
        d = float(np.linalg.norm(np.asarray(x, dtype=float) - self.c))
        if d < 1e-14:
            raise ValueError("exact radial pressure needs a detector away from the centre")
        return ((d - t) * self.profile(np.abs(d - t)) + (d + t) * self.profile(d + t)) / (2.0 * d)


def particle_kernel(particle: Particle, mass: float, resolved: bool = False) -> RadialDensity:
    """Density of total ``mass`` around ``z``.

    The default is the truncated Gaussian of radius ``a max(r_j)``;
    ``resolved`` spreads the mass uniformly over a round particle instead.
    The uniform density jumps at the surface, which sampled traces cannot
    represent, so it is meant for :func:`pstar_volume` only.
    """
    r = particle.radius
    if resolved:
        if not particle.shape.is_round:
            raise NotImplementedError("resolved particle densities are available for round particles only")
        return RadialDensity(particle.center, r, "uniform", mass / particle.volume)
    return RadialDensity(particle.center, r, "gauss", mass / _gauss_ball_mass(r / GAUSS_WIDTHS, r))


def _gauss_ball_mass(sigma: float, radius: float) -> float:
    """``∫_{|y| < radius} exp(-|y|²/σ²) dy``."""
    q = radius / sigma
    return 4.0 * math.pi * sigma**3 * (math.sqrt(math.pi) / 4.0 * erf(q) - 0.5 * q * math.exp(-q * q))


@dataclass(frozen=True)
class InitialPressure:
    """``p(·, 0)``: the background density on the domain plus the particle heat mass."""

    domain: BallDomain
    background: RadialDensity | None
    particle: Particle | None = None
    particle_mass: float = 0.0
    resolved: bool = False

    def __post_init__(self):
        if self.particle_mass < 0:
            raise ValueError("particle mass must be non-negative")
        if self.background is not None and self.background.g0 < 0:
            raise ValueError("background density must be non-negative")

    @property
    def kernel(self) -> RadialDensity | None:
        if self.particle is None or self.particle_mass == 0.0:
            return None
        return particle_kernel(self.particle, self.particle_mass, self.resolved)

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1])
        if self.background is not None:
            out = out + self.background(y)
        k = self.kernel
        if k is not None:
            out = out + k(y)
        return out


def background_density(s: Scenario) -> RadialDensity:
    """``Im ε₀(y) |u₀(y)|²`` for the plane-wave background field."""
    amp2 = s.incident.amplitude**2
    dom = s.domain
    if s.profile == "uniform":
        return RadialDensity(dom.center, dom.radius, "uniform", s.eps0.imag * amp2)
    g0 = float(s.im_eps0(dom.c)) * amp2
    return RadialDensity(dom.center, dom.radius, "bump", g0)


def absorption(s: Scenario, omega: float, gamma: float) -> float:
    """Heating weight of the particle, ``-Im ε_p`` in the ``+iγω`` convention."""
    out = -np.imag(s.medium.permittivity(omega, gamma))
    return float(out) if np.ndim(out) == 0 else out


def particle_mass(s: Scenario, omega: float, gamma: float) -> float:
    return absorption(s, omega, gamma) * electric_energy(s, omega, gamma)


def initial_pressure(s: Scenario, omega: float, gamma: float, with_particle: bool = True, resolved: bool = False):
    mass = particle_mass(s, omega, gamma) if with_particle else 0.0
    return InitialPressure(s.domain, background_density(s), s.particle, mass, resolved)


def shell_integral(ip: InitialPressure, x, t, method: str = "shell", order: int = DEFAULT_ORDER):
    """Background ``J(x, t)`` restricted to the domain.

    ``method="shell"`` uses the closed form for radial densities,
    ``"quadrature"`` integrates over the cap of ``∂B(x, t)`` inside the domain.
    """
    if ip.background is None:
        return np.zeros_like(np.asarray(t, dtype=float))
    if method == "shell":
        return ip.background.shell_integral(x, t)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    out = []
    for tk in np.atleast_1d(np.asarray(t, dtype=float)):
        if tk <= 0.0:
            out.append(0.0)
            continue
        axis, cos_min = ip.domain.sphere_cap(x, tk)
        out.append(float(sphere_surface_quadrature(x, tk, ip.background, order, axis, cos_min)) if cos_min < 1.0 else 0.0)
    out = np.asarray(out)
    return out if np.ndim(t) else out[0]


def pressure_at(ip: InitialPressure, x, t, step: float = 1e-4, method: str = "shell", order: int = DEFAULT_ORDER):
    """``p(x, t)``; the background by a centred difference of ``J/t``, the particle exactly.

    ``t = 0`` returns the initial pressure ``f(x)``.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise ValueError("time must be non-negative")
    x = np.asarray(x, dtype=float)
    out = np.empty_like(t_arr)
    zero = t_arr == 0.0
    out[zero] = float(ip(x[None, :])[0])
    tp = t_arr[~zero]
    if tp.size:
        hstep = np.minimum(step, tp / 2.0)
        plus = shell_integral(ip, x, tp + hstep, method, order) / (tp + hstep)
        minus = shell_integral(ip, x, tp - hstep, method, order) / (tp - hstep)
        p = (plus - minus) / (2.0 * hstep) / (4.0 * math.pi)
        k = ip.kernel
        if k is not None:
            p = p + k.pressure(x, tp)
        out[~zero] = p
    return out if np.ndim(t) else float(out[0])


@dataclass(frozen=True)
class PressureTrace:
    detector: tuple[float, float, float]
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size < 2:
            raise ValueError("a trace needs matching 1-D times and values with at least two samples")
        if times[0] != 0.0:
            raise ValueError("trace times must start at 0")
        dt = np.diff(times)
        if np.any(dt <= 0) or np.ptp(dt) > 1e-9 * dt[0] * times.size:
            raise ValueError("trace times must be uniformly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("trace values must be finite")
        object.__setattr__(self, "detector", tuple(float(c) for c in self.detector))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def scaled(self, factor: float) -> "PressureTrace":
        return PressureTrace(self.detector, self.times, factor * self.values)

    def __add__(self, other: "PressureTrace") -> "PressureTrace":
        return PressureTrace(self.detector, self.times, self.values + other.values)


def pstar_from_trace(trace: PressureTrace, s: float) -> float:
    """``∫_0^s (s² - t²)/2 p(t) dt`` for the piecewise-linear interpolant of the samples.

    Simpson's rule is exact on every cell because the integrand is cubic there.
    """
    t, p = trace.times, trace.values
    if s < 0:
        raise ValueError("s must be non-negative")
    if s > t[-1] * (1.0 + 1e-12):
        raise ValueError(f"s = {s} beyond the end of the trace ({t[-1]})")
    s = min(s, t[-1])
    k = min(int(np.searchsorted(t, s, side="right")) - 1, len(t) - 1)
    a, b = t[:k], t[1 : k + 1]
    pa, pb = p[:k], p[1 : k + 1]
    tail = 0.0
    if k < len(t) - 1 and s > t[k]:
        ps = p[k] + (p[k + 1] - p[k]) * (s - t[k]) / (t[k + 1] - t[k])
        tail = _simpson_cells(np.array([t[k]]), np.array([s]), np.array([p[k]]), np.array([ps]), s)
    return float(_simpson_cells(a, b, pa, pb, s) + tail)


def _simpson_cells(a, b, pa, pb, s):
    m = 0.5 * (a + b)
    pm = 0.5 * (pa + pb)
    w = lambda tt: 0.5 * (s * s - tt * tt)  # noqa: E731
    return np.sum((b - a) / 6.0 * (pa * w(a) + 4.0 * pm * w(m) + pb * w(b)))


def pstar_curve(trace: PressureTrace) -> np.ndarray:
    """``p★(t_k)`` at every sample time, using ``p★(s) = s² A(s)/2 - B(s)/2``.

    ``A = ∫_0^s p`` and ``B = ∫_0^s t² p`` are exact for the piecewise-linear
    interpolant, so this agrees with :func:`pstar_from_trace` at the nodes.
    """
    t, p = trace.times, trace.values
    h = np.diff(t)
    A = np.concatenate([[0.0], np.cumsum(0.5 * h * (p[:-1] + p[1:]))])
    m = 0.5 * (t[:-1] + t[1:])
    cellB = h / 6.0 * (p[:-1] * t[:-1] ** 2 + 2.0 * (p[:-1] + p[1:]) * m**2 + p[1:] * t[1:] ** 2)
    B = np.concatenate([[0.0], np.cumsum(cellB)])
    return 0.5 * t**2 * A - 0.5 * B


def pstar_volume(ip: InitialPressure, x, s: float, order: int = DEFAULT_ORDER) -> float:
    """``(1/4π) ∫_{B(x,s) ∩ Ω} f dy`` by a polar rule centred at ``x``.

    Directions use the polar axis towards the domain centre; the polar angle is
    split where the sphere of radius ``s`` leaves the domain so each radial
    segment is smooth.  The particle part integrates its closed-form shell
    function over time.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    x = np.asarray(x, dtype=float)
    total = 0.0
    if ip.background is not None and ip.background.g0 != 0.0:
        total += _background_volume(ip, x, s, order)
    k = ip.kernel
    if k is not None:
        total += _kernel_volume(k, x, s)
    return total / (4.0 * math.pi)


def _background_volume(ip: InitialPressure, x, s, order):
    dom = ip.domain
    v = dom.c - x
    d = float(np.linalg.norm(v))
    R = dom.radius
    if d > R * (1.0 + 1e-12):
        raise ValueError("observation point must lie in the closed domain")
    d = min(d, R)
    axis = v / d if d > 1e-14 else np.array([0.0, 0.0, 1.0])
    cos_lo = 0.0 if d >= R * (1.0 - 1e-12) else -1.0
    if d > 1e-14:
        cos_split = (s * s + d * d - R * R) / (2.0 * s * d)
    else:
        cos_split = -1.0 if s <= R else 2.0
    pieces = []
    # inside the split cone the radius stops at s, outside it stops at the boundary
    if cos_split < 1.0:
        pieces.append((max(cos_split, cos_lo), 1.0, "s"))
    if cos_split > cos_lo:
        pieces.append((cos_lo, min(cos_split, 1.0), "exit"))
    frame = _frame(axis)
    u, wu = gauss_legendre(order)
    n_phi = 2 * order
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    total = 0.0
    for c_lo, c_hi, kind in pieces:
        if c_hi <= c_lo:
            continue
        c = c_lo + (c_hi - c_lo) * u
        wc = (c_hi - c_lo) * wu
        if kind == "s":
            rmax = np.full_like(c, s)
        else:
            rmax = d * c + np.sqrt(np.maximum(R * R - d * d * (1.0 - c * c), 0.0))
        r, wr = gauss_interval(np.zeros_like(rmax), rmax, order)  # (nc, nr)
        sn = np.sqrt(np.maximum(1.0 - c * c, 0.0))
        local = np.stack(
            [
                np.outer(sn, np.cos(phi)),
                np.outer(sn, np.sin(phi)),
                np.repeat(c[:, None], n_phi, axis=1),
            ],
            axis=-1,
        )  # (nc, nphi, 3)
        dirs = local @ frame.T
        pts = x + r[:, None, :, None] * dirs[:, :, None, :]  # (nc, nphi, nr, 3)
        vals = ip.background(pts)
        weights = wc[:, None, None] * (2.0 * math.pi / n_phi) * (wr * r**2)[:, None, :]
        total += float(np.sum(weights * vals))
    return total


def _kernel_volume(k: RadialDensity, x, s, n: int | None = None):
    """``∫_0^s J(t) dt`` for a radial kernel.

    ``J`` is a polynomial in ``t`` per piece for the polynomial profiles and
    smooth (Gaussian) otherwise, where a longer rule is used.
    """
    if n is None:
        n = 48 if k.kind == "gauss" else 8
    d = float(np.linalg.norm(x - k.c))
    lo = max(0.0, d - k.radius)
    hi = min(s, d + k.radius)
    if hi <= lo:
        return 0.0
    # split where |t - d| changes branch
    edges = sorted({lo, hi, min(max(d, lo), hi)})
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            t, w = gauss_interval(a, b, n)
            total += float(w @ k.shell_integral(x, t))
    return total


def pstar_difference_closed(s: Scenario, omega: float, gamma: float, x, s_time: float) -> float:
    """Leading-order ``p★ - p★₀ = (-Im ε_p) ∫_D |u₁|² / 4π`` once the particle is engulfed."""
    threshold = s.particle.diameter + s.particle.distance(x)
    if s_time < threshold:
        raise ValueError(f"detector radius below arrival threshold ({s_time} < {threshold})")
    return particle_mass(s, omega, gamma) / (4.0 * math.pi)


def reference_frequency(s: Scenario) -> tuple[float, float]:
    """Detuned resonance ``(ω_n + a^h, γ_n + a^h)`` of the smallest visible eigenvalue."""
    lam = min(m.lam for m in s.modes)
    r = resonance(lam, s.host, s.medium)
    d = s.particle.a**s.h
    return r.omega + d, r.gamma + d


def time_grid(t_max: float, dt: float) -> np.ndarray:
    if not (dt > 0 and t_max > 0):
        raise ValueError("t_max and dt must be positive")
    n = int(math.ceil(t_max / dt - 1e-9))
    return dt * np.arange(n + 1)


def resolved_step(particle: Particle, dt: float) -> float:
    """Time step fine enough to sample the particle pulse (at most ``σ / 2``)."""
    return min(dt, particle.radius / KERNEL_SAMPLES)


class TraceSynthesizer:
    """Synthetic detector traces for a scenario at any ``(ω, γ)``.

    The background traces do not depend on the frequency and the particle
    trace is linear in its mass, so both are computed once per detector and
    the per-frequency traces are ``background + mass(ω, γ) * unit``.
    """

    def __init__(self, s: Scenario, detectors, t_max: float, dt: float, method: str = "shell", resolve_particle: bool = False):
        self.scenario = s
        self.detectors = [tuple(float(c) for c in det) for det in np.atleast_2d(np.asarray(detectors, dtype=float))]
        for det in self.detectors:
            dist = abs(np.linalg.norm(np.asarray(det) - s.domain.c) - s.domain.radius)
            if dist > 1e-9 * s.domain.radius:
                raise ValueError(f"detector {det} is not on the domain boundary")
        self.resolve_particle = resolve_particle
        self.dt = resolved_step(s.particle, dt)
        self.times = time_grid(t_max, self.dt)
        bg = InitialPressure(s.domain, background_density(s))
        unit = InitialPressure(s.domain, None, s.particle, 1.0)
        step = self.dt / 10.0

        def one(det):
            return (
                pressure_at(bg, det, self.times, step=step, method=method),
                pressure_at(unit, det, self.times, step=step),
            )

        with ThreadPoolExecutor(max_workers=min(worker_count(), len(self.detectors))) as pool:
            results = list(pool.map(one, self.detectors))
        self.background = [PressureTrace(det, self.times, b) for det, (b, _) in zip(self.detectors, results)]
        self.unit = [PressureTrace(det, self.times, u) for det, (_, u) in zip(self.detectors, results)]

    def mass(self, omega: float, gamma: float) -> float:
        return particle_mass(self.scenario, omega, gamma)

    def traces(self, omega: float, gamma: float):
        """``(with_particle, without_particle)`` lists of traces, one per detector."""
        m = self.mass(omega, gamma)
        with_p = [b + u.scaled(m) for b, u in zip(self.background, self.unit)]
        return with_p, list(self.background)

    def pstar_difference(self, index: int, s_time: float, omegas, gammas) -> np.ndarray:
        """``|p★ - p★₀|`` at one detector over an ``(ω, γ)`` grid.

        Uses linearity in the particle mass: the difference trace is
        ``mass * unit``, so one p★ of the unit trace serves the whole grid.
        With ``resolve_particle`` the unit value is the volume integral of a
        uniform density over the particle instead of the trace.
        """
        if self.resolve_particle:
            ip = InitialPressure(self.scenario.domain, None, self.scenario.particle, 1.0, resolved=True)
            unit = pstar_volume(ip, np.asarray(self.detectors[index]), s_time)
        else:
            unit = pstar_from_trace(self.unit[index], s_time)
        om, ga = np.meshgrid(np.asarray(omegas, dtype=float), np.asarray(gammas, dtype=float), indexing="ij")
        masses = self.mass(om, ga)
        return np.abs(masses * unit)


def synthesize_traces(s: Scenario, detectors, omega: float, gamma: float, t_max: float, dt: float):
    """Background-only and with-particle traces at each detector."""
    syn = TraceSynthesizer(s, detectors, t_max, dt)
    return syn.traces(omega, gamma)
