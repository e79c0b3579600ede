"""Command line interface.

Subcommands: ``spectrum``, ``dispersion``, ``simulate``, ``sweep``,
``localize`` and ``invert``.  Exit status is 0 on success, 2 for invalid
input and 3 when a pipeline stage fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .acoustic import PressureTrace, TraceSynthesizer, reference_frequency
from .dispersion import HostPermittivity, LorentzMedium, bounds, resonance
from .emfield import IncidentWave, Scenario
from .geometry import Ball, BallDomain, Ellipsoid, Particle, Shape
from .inversion import (
    DEFAULT_GRID,
    IndicatorGrid,
    PipelineError,
    localize,
    resolution_for,
    run_pipeline,
    sweep_grid,
)
from .spectral import distinct_eigenvalues, magnetization_tensor, visible_modes

EXIT_OK, EXIT_INVALID, EXIT_STAGE = 0, 2, 3

NUMERICS_DEFAULTS = {
    "h": 0.5,
    "n_omega": DEFAULT_GRID[0],
    "n_gamma": DEFAULT_GRID[1],
    "order": 32,
    "dt": 0.01,
    "t_max": None,
    "seed": 0,
}


class InvalidInput(ValueError):
    pass


def fmt(x: float) -> str:
    """17 significant digits: byte-stable and exactly round-tripping."""
    return format(float(x), ".17g")


@dataclass
class Config:
    """A parsed scenario file.  ``scenario`` is None when the host value is withheld."""

    domain: BallDomain
    medium: LorentzMedium
    particle: Particle
    incident: IncidentWave
    mu: float
    numerics: dict
    detectors: np.ndarray
    sweep_detector: int
    host: HostPermittivity | None
    profile: str
    mean_magnitudes: tuple | None

    @property
    def scenario(self) -> Scenario:
        if self.host is None:
            raise InvalidInput("scenario has no host section")
        return Scenario(
            self.domain, self.host, self.medium, self.particle, self.incident, self.mu,
            self.numerics["h"], self.profile, self.mean_magnitudes,
        )

    @property
    def t_max(self) -> float:
        t = self.numerics["t_max"]
        return float(t) if t is not None else 1.1 * self.domain.diameter

    def n_omega(self, square) -> int:
        n = self.numerics["n_omega"]
        if n == "auto":
            return resolution_for(square, self.particle.a, self.numerics["h"])
        return int(n)


def _vec(v, name) -> tuple:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise InvalidInput(f"{name} must be a 3-vector")
    return tuple(arr)


def parse_shape(d: dict) -> Shape:
    kind = d.get("shape", "ball")
    if kind == "ball":
        return Ball()
    if kind == "ellipsoid":
        return Ellipsoid(*d["semi_axes"])
    raise InvalidInput(f"unknown particle shape {kind!r}")


def load_config(path, drude: bool = False, require_host: bool = True) -> Config:
    """Read and validate a scenario file (all invariants re-checked)."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise InvalidInput(f"scenario file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"scenario is not valid JSON: {exc}") from exc
    try:
        dom = raw.get("domain", {})
        domain = BallDomain(_vec(dom.get("center", (0, 0, 0)), "domain.center"), float(dom.get("radius", 1.0)))
        med = dict(raw.get("medium", {}))
        if drude:
            med["model"] = "drude"
        medium = LorentzMedium(**med)
        part = raw["particle"]
        particle = Particle(parse_shape(part), _vec(part["center"], "particle.center"), float(part["a"]))
        means = part.get("mean_magnitudes")
        inc = raw.get("incident", {})
        incident = IncidentWave(
            _vec(inc.get("direction", (1, 0, 0)), "incident.direction"),
            _vec(inc.get("polarization", (0, 0, 1)), "incident.polarization"),
            float(inc.get("amplitude", 1.0)),
        )
        numerics = dict(NUMERICS_DEFAULTS)
        unknown = set(raw.get("numerics", {})) - set(numerics)
        if unknown:
            raise InvalidInput(f"unknown numerics keys: {sorted(unknown)}")
        numerics.update(raw.get("numerics", {}))
        acq = raw.get("acquisition", {})
        detectors = np.asarray(acq.get("detectors", []), dtype=float).reshape(-1, 3)
        host_raw = raw.get("host")
        host = None
        profile = "uniform"
        if host_raw is not None:
            profile = host_raw.get("profile", "uniform")
            if "eps0_real" in host_raw:
                host = HostPermittivity(complex(float(host_raw["eps0_real"]), float(host_raw.get("eps0_imag", 0.0))))
        if require_host and host is None:
            raise InvalidInput("scenario needs host.eps0_real")
        cfg = Config(
            domain, medium, particle, incident, float(raw.get("mu", 1.0)), numerics, detectors,
            int(acq.get("sweep_detector", 0)), host, profile, tuple(means) if means is not None else None,
        )
        if host is not None:
            cfg.scenario  # noqa: B018 - runs the scenario invariants
        elif not domain.contains_particle(particle):
            raise InvalidInput("particle must lie strictly inside the domain")
        if len(detectors) and not 0 <= cfg.sweep_detector < len(detectors):
            raise InvalidInput("sweep_detector index out of range")
        return cfg
    except (KeyError, TypeError) as exc:
        raise InvalidInput(f"malformed scenario: {exc}") from exc


def write_csv(rows, header, out: Path | None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    text = buf.getvalue()
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def write_trace(trace: PressureTrace, path: Path):
    write_csv(zip(trace.times.tolist(), trace.values.tolist()), ["t", "p"], path)


def read_trace(path: Path, detector) -> PressureTrace:
    if not path.exists():
        raise InvalidInput(f"missing trace file {path}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return PressureTrace(detector, data[:, 0], data[:, 1])


def write_grid(grid: IndicatorGrid, path: Path | None):
    rows = ((om, ga, grid.values[i, j]) for i, om in enumerate(grid.omegas.tolist())
            for j, ga in enumerate(grid.gammas.tolist()))
    write_csv(rows, ["omega", "gamma", "I"], path)


def read_grid(path: Path) -> IndicatorGrid:
    if not path.exists():
        raise InvalidInput(f"missing indicator grid {path}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    om = np.unique(data[:, 0])
    ga = np.unique(data[:, 1])
    if data.shape[0] != om.size * ga.size:
        raise InvalidInput("indicator grid is not a full tensor grid")
    return IndicatorGrid(om, ga, data[:, 2].reshape(om.size, ga.size))


def trace_name(k: int, state: str) -> str:
    return f"trace_{k:03d}_{state}.csv"


# --- commands ---------------------------------------------------------------


def cmd_spectrum(args) -> int:
    if args.ellipsoid is not None:
        shape = Ellipsoid(*args.ellipsoid)
    else:
        shape = Ball()
    tensor = magnetization_tensor(shape)
    rows = []
    for m in visible_modes(shape):
        axis = int(np.argmax(m.direction)) + 1
        mean = fmt(m.mean_magnitude) if m.mean_magnitude is not None else "UNKNOWN"
        rows.append((axis, float(m.lam), float(tensor.diag[axis - 1]), mean))
    write_csv(rows, ["axis", "lambda", "N_j", "mean_magnitude"], _out_file(args))
    return EXIT_OK


def cmd_dispersion(args) -> int:
    cfg = load_config(args.scenario, args.drude)
    s = cfg.scenario
    lams = args.lambdas if args.lambdas else distinct_eigenvalues(s.modes)
    rows = []
    for lam in lams:
        r = resonance(lam, s.host, s.medium)
        rows.append((float(lam), r.omega, r.gamma, r.residual.real, r.residual.imag, r.condition))
    write_csv(rows, ["lambda", "omega_n", "gamma_n", "residual_real", "residual_imag", "condition"], _out_file(args))
    return EXIT_OK


def _synth(cfg: Config, resolve_particle: bool = False) -> TraceSynthesizer:
    if len(cfg.detectors) == 0:
        raise InvalidInput("acquisition.detectors is empty")
    return TraceSynthesizer(cfg.scenario, cfg.detectors, cfg.t_max, float(cfg.numerics["dt"]),
                            resolve_particle=resolve_particle)


def cmd_simulate(args) -> int:
    cfg = load_config(args.scenario, args.drude)
    syn = _synth(cfg)
    omega, gamma = reference_frequency(cfg.scenario)
    with_p, without = syn.traces(omega, gamma)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, (w, wo) in enumerate(zip(with_p, without)):
        write_trace(w, out / trace_name(k, "particle"))
        write_trace(wo, out / trace_name(k, "background"))
    manifest = {
        "detectors": [[float(c) for c in d] for d in syn.detectors],
        "omega": omega,
        "gamma": gamma,
        "dt": syn.dt,
        "t_max": float(syn.times[-1]),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.scenario, args.drude)
    s = cfg.scenario
    syn = _synth(cfg, args.resolve_particle)
    square = bounds(s.host_field_bound(), s.medium)
    index = cfg.sweep_detector if args.detector is None else args.detector
    if not 0 <= index < len(syn.detectors):
        raise InvalidInput("detector index out of range")
    grid = sweep_grid(syn, index, float(syn.times[-1]), square, cfg.n_omega(square),
                      int(cfg.numerics["n_gamma"]), args.gamma_fixed)
    write_grid(grid, _out_file(args, "indicator.csv"))
    return EXIT_OK


def _load_traces(cfg: Config, traces: Path):
    if not traces.is_dir():
        raise InvalidInput(f"traces directory not found: {traces}")
    dets = cfg.detectors
    manifest = traces / "manifest.json"
    if manifest.exists():
        dets = np.asarray(json.loads(manifest.read_text())["detectors"], dtype=float)
    if len(dets) == 0:
        raise InvalidInput("no detectors in scenario or trace manifest")
    with_p = [read_trace(traces / trace_name(k, "particle"), d) for k, d in enumerate(dets)]
    without = [read_trace(traces / trace_name(k, "background"), d) for k, d in enumerate(dets)]
    return dets, with_p, without


def cmd_localize(args) -> int:
    cfg = load_config(args.scenario, args.drude, require_host=False)
    dets, with_p, without = _load_traces(cfg, Path(args.traces))
    try:
        tri, dists = localize(dets, with_p, without, cfg.particle.a, cfg.particle.shape, cfg.domain)
    except ValueError as exc:
        stage = "trilateration" if "trilateration" in str(exc) or "spheres" in str(exc) else "localization"
        raise PipelineError(stage, str(exc)) from exc
    doc = {"z_hat": [float(c) for c in tri.z], "surface_distances": [float(d) for d in dists],
           "residual": tri.residual}
    _emit_json(doc, _out_file(args))
    return EXIT_OK


def cmd_invert(args) -> int:
    cfg = load_config(args.scenario, args.drude, require_host=False)
    traces = Path(args.traces)
    dets, with_p, without = _load_traces(cfg, traces)
    grid = read_grid(Path(args.grid) if args.grid else traces / "indicator.csv")
    report = run_pipeline(dets, with_p, without, cfg.particle.shape, cfg.medium, cfg.particle.a,
                          grid=grid, sweep_detector=cfg.sweep_detector, domain=cfg.domain)
    _emit_json(report.to_dict(), _out_file(args, "report.json"))
    return EXIT_OK


def _emit_json(doc, out: Path | None):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def _out_file(args, default_name: str | None = None) -> Path | None:
    out = getattr(args, "out", None)
    if out is None:
        return None
    p = Path(out)
    if default_name is not None and (p.is_dir() or not p.suffix):
        return p / default_name
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plasmo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="visible eigenvalues and means of a shape")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--ball", action="store_true")
    g.add_argument("--ellipsoid", nargs=3, type=float, metavar=("R1", "R2", "R3"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectrum)

    def scenario_cmd(name, func, help_, out=True):
        q = sub.add_parser(name, help=help_)
        q.add_argument("--scenario", required=True)
        q.add_argument("--drude", action="store_true", help="use the Drude permittivity")
        if out:
            q.add_argument("--out")
        q.set_defaults(func=func)
        return q

    q = scenario_cmd("dispersion", cmd_dispersion, "resonances of the visible eigenvalues")
    q.add_argument("--lambdas", nargs="+", type=float)
    q = scenario_cmd("simulate", cmd_simulate, "synthesise detector traces", out=False)
    q.add_argument("--out", required=True)
    q = scenario_cmd("sweep", cmd_sweep, "indicator over the sweep square")
    q.add_argument("--gamma-fixed", type=float)
    q.add_argument("--detector", type=int)
    q.add_argument("--resolve-particle", action="store_true",
                   help="p★ of the particle by quadrature over a uniform D (round particles)")
    q = scenario_cmd("localize", cmd_localize, "particle position from traces")
    q.add_argument("--traces", required=True)
    q = scenario_cmd("invert", cmd_invert, "full recovery report")
    q.add_argument("--traces", required=True)
    q.add_argument("--grid")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error [{exc.stage}]: {exc.message}", file=sys.stderr)
        return EXIT_STAGE
    except (ValueError, NotImplementedError, ArithmeticError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
