import numpy as np
import pytest

from plasmo.dispersion import HostPermittivity, LorentzMedium
from plasmo.emfield import IncidentWave, Scenario
from plasmo.geometry import Ball, BallDomain, Particle


def make_scenario(eps0=2.0, a=1e-2, center=(0.1, -0.2, 0.15), profile="uniform", amplitude=1.0, h=0.5, **kw):
    return Scenario(
        BallDomain(),
        HostPermittivity(eps0),
        kw.pop("medium", LorentzMedium()),
        Particle(kw.pop("shape", Ball()), center, a),
        kw.pop("incident", IncidentWave((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), amplitude)),
        h=h,
        profile=profile,
        **kw,
    )


@pytest.fixture
def canonical():
    return make_scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TRIPLE = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


def run_recovery(a, eps0=2 + 0.2j, detectors=TRIPLE, gamma_fixed=None, n_gamma=50, **kw):
    """Synthesise traces for a ball particle and run the full pipeline."""
    from plasmo.acoustic import TraceSynthesizer, reference_frequency
    from plasmo.dispersion import bounds
    from plasmo.inversion import resolution_for, run_pipeline, synthetic_grid_builder

    s = make_scenario(eps0=eps0, a=a, **kw)
    syn = TraceSynthesizer(s, detectors, t_max=1.1 * s.domain.diameter, dt=1e-2)
    withp, without = syn.traces(*reference_frequency(s))
    square = bounds(s.host_field_bound(), s.medium)
    builder = synthetic_grid_builder(syn, square, resolution_for(square, a, s.h), n_gamma, gamma_fixed)
    report = run_pipeline(syn.detectors, withp, without, s.particle.shape, s.medium, a, grid_builder=builder)
    return s, report
