"""Imaging procedure: localise the particle from arrival times, sweep the
frequency/damping square, pick the indicator peaks, match them to the visible
eigenvalues by monotone order and read off ``ε₀(z)``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import least_squares
from scipy.special import ndtri

from .acoustic import GAUSS_WIDTHS, PressureTrace, TraceSynthesizer, pstar_curve, worker_count
from .dispersion import LorentzMedium, SweepSquare
from .geometry import BallDomain, Shape
from .spectral import distinct_eigenvalues, visible_modes

PROMINENCE = 0.05
DEFAULT_GRID = (200, 50)
ARRIVAL_FLOOR = 1e-12


class PipelineError(RuntimeError):
    """A failure inside one stage of the pipeline."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.message = message


def indicator(pstar_with, pstar_without):
    """``I = |p★ - p★₀|``."""
    return np.abs(np.asarray(pstar_with) - np.asarray(pstar_without))


def estimate_distance(s_grid, curve, a_hint: float) -> float:
    """Arrival radius of the particle signature in an ``s ↦ |p★ - p★₀|`` curve.

    The threshold is the geometric mean of the pre-arrival floor and the
    plateau, and the crossing is linearly interpolated between samples.
    """
    return _arrival(s_grid, curve, a_hint)[0]


def _arrival(s_grid, curve, a_hint: float) -> tuple[float, float]:
    """Crossing radius and the threshold as a fraction of the plateau."""
    s_grid = np.asarray(s_grid, dtype=float)
    curve = np.abs(np.asarray(curve, dtype=float))
    if s_grid.shape != curve.shape or s_grid.size < 2:
        raise ValueError("s grid and curve must have the same length (>= 2)")
    if not np.all(np.isfinite(curve)):
        raise ValueError("curve contains non-finite values")
    if np.max(np.diff(s_grid)) > a_hint:
        raise ValueError("s grid must be finer than the particle size")
    plateau = float(np.max(curve))
    if not plateau > 0:
        raise ValueError("no particle signature")
    floor = max(float(np.min(curve)), ARRIVAL_FLOOR * plateau)
    if floor > 0.5 * plateau:
        raise ValueError("no particle signature")
    thr = math.sqrt(floor * plateau)
    k = int(np.argmax(curve > thr))
    if k == 0:
        return float(s_grid[0]), thr / plateau
    c0, c1 = curve[k - 1], curve[k]
    return float(s_grid[k - 1] + (thr - c0) / (c1 - c0) * (s_grid[k] - s_grid[k - 1])), thr / plateau


def kernel_depth(fraction: float, radius: float) -> float:
    """How far before the kernel centre the signature reaches ``fraction`` of its plateau.

    Far from the particle the ball ``B(x, s)`` cuts the kernel along an
    almost flat front, so the captured mass is the one-dimensional marginal
    of the Gaussian, ``N(0, σ²/2)``.
    """
    sigma = radius / GAUSS_WIDTHS
    return float(np.clip(-sigma / math.sqrt(2.0) * ndtri(fraction), 0.0, radius))


@dataclass(frozen=True)
class Trilateration:
    z: np.ndarray
    residual: float
    candidates: tuple


def trilaterate(points, dists, a_hint: float | None = None, domain: BallDomain | None = None) -> Trilateration:
    """Intersection of the spheres ``|z - x_k| = d_k``.

    Differences of the sphere equations give a linear system.  With three
    (or coplanar) detectors it has a one-dimensional null space and the two
    mirror candidates are resolved by requiring ``z`` in the domain, then by
    lying on the same side of the detector plane as the domain centre.
    """
    domain = domain or BallDomain()
    P = np.asarray(points, dtype=float)
    r = np.asarray(dists, dtype=float)
    if P.ndim != 2 or P.shape[1] != 3 or P.shape[0] < 3 or r.shape != (P.shape[0],):
        raise ValueError("need at least three detector positions and one distance each")
    scale = max(float(np.max(np.linalg.norm(P - P.mean(axis=0), axis=1))), 1e-300)
    A = 2.0 * (P[1:] - P[0])
    b = np.sum(P[1:] ** 2, axis=1) - np.sum(P[0] ** 2) - r[1:] ** 2 + r[0] ** 2
    U, sv, Vt = np.linalg.svd(A)
    rank = int(np.sum(sv > 1e-9 * 2.0 * scale))
    if rank < 2:
        raise ValueError("trilateration degenerate: detectors are collinear")
    z0 = Vt[:rank].T @ ((U[:, :rank].T @ b) / sv[:rank])
    if rank == 3:
        starts = [z0]
    else:
        n = Vt[2]
        w = z0 - P[0]
        disc = (w @ n) ** 2 - (w @ w - r[0] ** 2)
        root = math.sqrt(max(disc, 0.0))
        starts = [z0 + (-(w @ n) + root) * n, z0 + (-(w @ n) - root) * n]

    def fun(z):
        return np.linalg.norm(P - z, axis=1) - r

    cands = []
    for z in starts:
        sol = least_squares(fun, z, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        cands.append((sol.x, float(np.sqrt(np.mean(sol.fun**2)))))
    if len(cands) == 1:
        z, res = cands[0]
    else:
        inside = [c for c in cands if domain.contains(c[0], tol=1e-9 * domain.radius)]
        if len(inside) == 1:
            z, res = inside[0]
        elif not inside:
            raise ValueError("trilateration: no candidate inside the domain")
        else:
            n = Vt[2]
            side = np.sign((domain.c - P.mean(axis=0)) @ n)
            same = [c for c in inside if np.sign((c[0] - P.mean(axis=0)) @ n) == side]
            z, res = (same or inside)[0]
    if a_hint is not None and res > 10.0 * a_hint:
        raise ValueError(f"inconsistent spheres: residual {res:.3g} exceeds 10 a")
    return Trilateration(z, res, tuple(c[0] for c in cands))


@dataclass(frozen=True)
class IndicatorGrid:
    omegas: np.ndarray
    gammas: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=float)
        ga = np.asarray(self.gammas, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if om.ndim != 1 or ga.ndim != 1 or v.shape != (om.size, ga.size):
            raise ValueError("values must have shape (len(omegas), len(gammas))")
        if om.size == 0 or ga.size == 0:
            raise ValueError("empty indicator grid")
        if np.any(np.diff(om) <= 0) or np.any(np.diff(ga) <= 0):
            raise ValueError("grid axes must be strictly increasing")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("indicator values must be finite and non-negative")
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "gammas", ga)
        object.__setattr__(self, "values", v)


def sweep_axes(square: SweepSquare, n_omega: int, n_gamma: int, gamma_fixed: float | None = None):
    """Interior grid of the sweep square (endpoints excluded)."""
    if n_omega < 1 or n_gamma < 1:
        raise ValueError("grid sizes must be positive")
    om = square.omega_min + (square.omega_max - square.omega_min) * np.arange(1, n_omega + 1) / (n_omega + 1)
    if gamma_fixed is not None:
        if not gamma_fixed > 0:
            raise ValueError("fixed damping must be positive")
        return om, np.array([float(gamma_fixed)])
    ga = square.gamma_max * np.arange(1, n_gamma + 1) / (n_gamma + 1)
    return om, ga


def resolution_for(square: SweepSquare, a: float, h: float, fraction: float = 0.05) -> int:
    """Number of frequency samples so that the step is ``fraction * a^h``."""
    return int(math.ceil((square.omega_max - square.omega_min) / (fraction * a**h)))


def sweep_grid(synth: TraceSynthesizer, index: int, s_time: float, square: SweepSquare,
               n_omega: int = DEFAULT_GRID[0], n_gamma: int = DEFAULT_GRID[1], gamma_fixed=None) -> IndicatorGrid:
    """Indicator ``|p★ - p★₀|`` at one detector over the sweep square."""
    om, ga = sweep_axes(square, n_omega, n_gamma, gamma_fixed)
    chunks = np.array_split(np.arange(om.size), min(worker_count(), om.size))
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(lambda idx: synth.pstar_difference(index, s_time, om[idx], ga), chunks))
    return IndicatorGrid(om, ga, np.concatenate(parts, axis=0))


@dataclass(frozen=True)
class Peak:
    omega: float
    gamma: float
    prominence: float
    index: tuple[int, int]


def _prominences(v: np.ndarray) -> np.ndarray:
    """Topographic prominence of every cell (0 for non-peaks), 8-connectivity."""
    n, m = v.shape
    order = np.argsort(-v, axis=None, kind="stable")
    parent = -np.ones(v.size, dtype=int)
    top = {}
    prom = np.zeros(v.size)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    flat = v.ravel()
    for idx in order:
        parent[idx] = idx
        top[idx] = idx
        i, j = divmod(int(idx), m)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                ii, jj = i + di, j + dj
                if (di or dj) and 0 <= ii < n and 0 <= jj < m and parent[ii * m + jj] >= 0:
                    ra, rb = find(idx), find(ii * m + jj)
                    if ra == rb:
                        continue
                    ta, tb = top[ra], top[rb]
                    # the lower summit dies here
                    lo, hi = (ta, tb) if flat[ta] < flat[tb] or (flat[ta] == flat[tb] and ta > tb) else (tb, ta)
                    prom[lo] = flat[lo] - flat[idx]
                    parent[ra] = rb
                    top[rb] = hi
    root = find(int(order[0]))
    prom[top[root]] = flat[top[root]] - float(np.min(flat))
    return prom.reshape(v.shape)


def detect_peaks(grid: IndicatorGrid, rho: float = PROMINENCE) -> list[Peak]:
    """Strict 8-neighbourhood maxima with prominence ``>= rho * max``, ascending in ω.

    Each peak's ω is refined by one parabolic fit through its row neighbours.
    """
    v = grid.values
    if v.size == 0:
        raise ValueError("empty indicator grid")
    padded = np.pad(v, 1, constant_values=-np.inf)
    strict = np.ones(v.shape, dtype=bool)
    n, m = v.shape
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                strict &= v > padded[1 + di : 1 + di + n, 1 + dj : 1 + dj + m]
    vmax = float(np.max(v))
    if not vmax > 0:
        return []
    prom = _prominences(v)
    peaks = []
    for i, j in zip(*np.nonzero(strict)):
        if prom[i, j] < rho * vmax:
            continue
        omega = float(grid.omegas[i])
        if 0 < i < n - 1:
            ym, y0, yp = v[i - 1, j], v[i, j], v[i + 1, j]
            denom = ym - 2.0 * y0 + yp
            if denom < 0:
                delta = float(np.clip(0.5 * (ym - yp) / denom, -0.5, 0.5))
                step = grid.omegas[i + 1] - grid.omegas[i] if delta > 0 else grid.omegas[i] - grid.omegas[i - 1]
                omega += delta * float(step)
        peaks.append(Peak(omega, float(grid.gammas[j]), float(prom[i, j]), (int(i), int(j))))
    peaks.sort(key=lambda p: (p.omega, p.gamma))
    return peaks


def match_eigenvalues(peaks, lambdas, resonance_of=None):
    """Pair peaks with eigenvalues: larger ω goes with larger λ.

    With fewer peaks than eigenvalues an order-preserving injection is chosen
    to minimise ``Σ |ω_peak - ω_n(λ)|``; that needs ``resonance_of(λ) -> ω``.
    """
    peaks = sorted(peaks, key=lambda p: p.omega)
    lambdas = sorted(lambdas)
    if len(peaks) > len(lambdas):
        raise ValueError("more peaks than visible modes")
    if len(peaks) == len(lambdas):
        return list(zip(peaks, lambdas))
    if resonance_of is None:
        raise ValueError("fewer peaks than visible modes: a resonance prior is needed to match them")
    omegas = [resonance_of(lam) for lam in lambdas]
    best, best_cost = None, math.inf
    for combo in combinations(range(len(lambdas)), len(peaks)):
        cost = sum(abs(p.omega - omegas[k]) for p, k in zip(peaks, combo))
        if cost < best_cost:
            best, best_cost = combo, cost
    return [(p, lambdas[k]) for p, k in zip(peaks, best)]


def recover_permittivity(lam: float, eps_p: complex) -> complex:
    """``ε₀(z) = -ε_p λ / (1 - λ)``."""
    if not 0.0 < lam < 1.0:
        raise ValueError(f"eigenvalue {lam} outside (0, 1)")
    return -complex(eps_p) * lam / (1.0 - lam)


@dataclass
class PeakRecovery:
    omega_star: float
    gamma_star: float
    lambda_matched: float
    eps_p_at_peak: complex
    eps0_recovered: complex
    prominence: float


@dataclass
class RecoveryReport:
    z_hat: np.ndarray
    peaks: list[PeakRecovery]
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def cplx(c):
            return {"real": float(c.real), "imag": float(c.imag)}

        return {
            "z_hat": [float(c) for c in self.z_hat],
            "peaks": [
                {
                    "omega_star": p.omega_star,
                    "gamma_star": p.gamma_star,
                    "lambda_matched": p.lambda_matched,
                    "eps_p_at_peak": cplx(p.eps_p_at_peak),
                    "eps0_recovered": cplx(p.eps0_recovered),
                    "prominence": p.prominence,
                }
                for p in self.peaks
            ],
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RecoveryReport":
        peaks = [
            PeakRecovery(
                p["omega_star"],
                p["gamma_star"],
                p["lambda_matched"],
                complex(p["eps_p_at_peak"]["real"], p["eps_p_at_peak"]["imag"]),
                complex(p["eps0_recovered"]["real"], p["eps0_recovered"]["imag"]),
                p["prominence"],
            )
            for p in d["peaks"]
        ]
        return cls(np.asarray(d["z_hat"], dtype=float), peaks, d.get("diagnostics", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_float)


def _json_float(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")


def localize(detectors, with_traces, without_traces, a_hint: float, shape: Shape, domain: BallDomain | None = None):
    """Distances from arrival times at each detector, then trilateration.

    Returns ``(trilateration, surface distance estimates)``.
    """
    radius = a_hint * max(shape.semi_axes)
    dists, centres = [], []
    for w, wo in zip(with_traces, without_traces):
        if not np.array_equal(w.times, wo.times):
            raise ValueError("paired traces must share a time grid")
        curve = pstar_curve(w) - pstar_curve(wo)
        s_hit, fraction = _arrival(w.times, curve, radius)
        dists.append(s_hit)
        centres.append(s_hit + kernel_depth(fraction, radius))
    return trilaterate(detectors, np.asarray(centres), a_hint, domain), dists


def run_pipeline(
    detectors,
    with_traces: list[PressureTrace],
    without_traces: list[PressureTrace],
    shape: Shape,
    medium: LorentzMedium,
    a_hint: float,
    grid: IndicatorGrid | None = None,
    grid_builder=None,
    sweep_detector: int = 0,
    domain: BallDomain | None = None,
    resonance_of=None,
    rho: float = PROMINENCE,
) -> RecoveryReport:
    """Localisation, sweep, peak picking, eigenvalue matching and recovery.

    Either a measured ``grid`` or ``grid_builder(detector_index, s_time)``
    must be supplied.  Failures raise :class:`PipelineError` naming the stage.
    """
    if len(detectors) < 3:
        raise PipelineError("localization", "at least three detectors are needed")
    try:
        tri, dists = localize(detectors, with_traces, without_traces, a_hint, shape, domain)
    except ValueError as exc:
        stage = "trilateration" if "trilateration" in str(exc) or "spheres" in str(exc) else "localization"
        raise PipelineError(stage, str(exc)) from exc
    radius = a_hint * max(shape.semi_axes)
    s_time = 1.1 * (dists[sweep_detector] + 2.0 * radius)
    if grid is None:
        if grid_builder is None:
            raise PipelineError("sweep", "no indicator grid and no way to measure one")
        try:
            grid = grid_builder(sweep_detector, s_time)
        except ValueError as exc:
            raise PipelineError("sweep", str(exc)) from exc
    try:
        peaks = detect_peaks(grid, rho)
    except ValueError as exc:
        raise PipelineError("peaks", str(exc)) from exc
    if not peaks:
        raise PipelineError("peaks", "no resonance peak detected")
    lambdas = distinct_eigenvalues(visible_modes(shape))
    try:
        pairs = match_eigenvalues(peaks, lambdas, resonance_of)
    except ValueError as exc:
        raise PipelineError("matching", str(exc)) from exc
    out = []
    for p, lam in pairs:
        eps_p = complex(medium.permittivity(p.omega, p.gamma))
        out.append(PeakRecovery(p.omega, p.gamma, lam, eps_p, recover_permittivity(lam, eps_p), p.prominence))
    diagnostics = {
        "surface_distances": [float(d) for d in dists],
        "trilateration_residual": tri.residual,
        "s_time": s_time,
        "sweep_detector": sweep_detector,
        "grid_shape": list(grid.values.shape),
    }
    return RecoveryReport(tri.z, out, diagnostics)


def synthetic_grid_builder(synth: TraceSynthesizer, square: SweepSquare, n_omega=DEFAULT_GRID[0],
                           n_gamma=DEFAULT_GRID[1], gamma_fixed=None):
    def build(index, s_time):
        return sweep_grid(synth, index, s_time, square, n_omega, n_gamma, gamma_fixed)

    return build

