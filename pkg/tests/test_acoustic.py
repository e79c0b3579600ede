import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plasmo.acoustic import (
    InitialPressure,
    PressureTrace,
    RadialDensity,
    TraceSynthesizer,
    absorption,
    background_density,
    initial_pressure,
    particle_kernel,
    particle_mass,
    pressure_at,
    pstar_curve,
    pstar_difference_closed,
    pstar_from_trace,
    pstar_volume,
    reference_frequency,
    shell_integral,
    time_grid,
    worker_count,
)
from plasmo.dispersion import resonance
from plasmo.emfield import IncidentWave, electric_energy
from plasmo.geometry import Ball, BallDomain, Particle, gauss_interval

from conftest import make_scenario

DET = (1.0, 0.0, 0.0)


def _trace(values, dt=0.01):
    values = np.asarray(values, dtype=float)
    return PressureTrace(DET, dt * np.arange(values.size), values)


# ---- p★ from traces


def test_pstar_zero_trace():
    assert pstar_from_trace(_trace(np.zeros(50)), 0.4) == 0.0


@pytest.mark.parametrize("s", [0.1, 0.37, 0.49])
def test_pstar_constant_and_linear(s):
    t = 0.01 * np.arange(50)
    assert pstar_from_trace(_trace(np.full(50, 2.5)), s) == pytest.approx(2.5 * s**3 / 3, rel=1e-12)
    assert pstar_from_trace(_trace(t), s) == pytest.approx(s**4 / 8, rel=1e-12)


def test_pstar_beyond_trace_raises():
    with pytest.raises(ValueError, match="beyond"):
        pstar_from_trace(_trace(np.ones(10)), 0.5)


def test_pstar_curve_matches_pointwise():
    t = 0.01 * np.arange(80)
    tr = _trace(np.sin(7 * t) ** 2)
    curve = pstar_curve(tr)
    for k in (0, 13, 40, 79):
        assert curve[k] == pytest.approx(pstar_from_trace(tr, t[k]), rel=1e-12, abs=1e-18)


def test_trace_validation():
    with pytest.raises(ValueError):
        PressureTrace(DET, np.array([0.1, 0.2]), np.array([0.0, 0.0]))
    with pytest.raises(ValueError):
        PressureTrace(DET, np.array([0.0, 0.1, 0.3]), np.zeros(3))
    with pytest.raises(ValueError):
        PressureTrace(DET, np.array([0.0, 0.1]), np.array([0.0, np.nan]))


# ---- pressure


def test_zero_initial_pressure_gives_zero():
    ip = InitialPressure(BallDomain(), RadialDensity((0, 0, 0), 1.0, "uniform", 0.0))
    assert np.all(pressure_at(ip, DET, np.linspace(0.0, 2.5, 11)) == 0.0)


def test_shell_integral_vanishes_after_huygens_time():
    ip = InitialPressure(BallDomain(), RadialDensity((0, 0, 0), 1.0, "bump", 1.0))
    x = np.array([0.6, 0.0, 0.0])
    assert np.all(shell_integral(ip, x, np.array([1.61, 2.0, 3.0])) == 0.0)


@pytest.mark.parametrize("kind", ["uniform", "bump"])
def test_shell_closed_form_matches_quadrature(kind):
    ip = InitialPressure(BallDomain(), RadialDensity((0, 0, 0), 1.0, kind, 0.7))
    t = np.array([0.2, 0.9, 1.4, 1.95])
    a = shell_integral(ip, DET, t, "shell")
    b = shell_integral(ip, DET, t, "quadrature")
    assert np.allclose(a, b, rtol=1e-10, atol=1e-14)


def test_centred_difference_matches_exact_pressure():
    g = RadialDensity((0.1, 0.0, 0.0), 0.5, "bump", 1.0)
    ip = InitialPressure(BallDomain(), g)
    t = np.linspace(0.05, 1.5, 9)
    assert np.allclose(pressure_at(ip, DET, t), g.pressure(DET, t), rtol=1e-6, atol=1e-7)


def test_t_zero_returns_initial_pressure():
    g = RadialDensity((0, 0, 0), 1.0, "bump", 1.0)
    ip = InitialPressure(BallDomain(), g)
    x = np.array([0.3, 0.0, 0.0])
    assert pressure_at(ip, x, 0.0) == pytest.approx(float(g(x)))


def test_negative_time_raises():
    ip = InitialPressure(BallDomain(), RadialDensity((0, 0, 0), 1.0, "bump", 1.0))
    with pytest.raises(ValueError):
        pressure_at(ip, DET, -0.1)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["uniform", "bump", "gauss"]), st.floats(0.05, 0.5), st.floats(0.05, 0.4))
def test_kernel_mass_from_shell_integral(kind, r, m):
    k = RadialDensity((0, 0, 0), r, kind, m)
    x = np.array([0.8, 0.0, 0.0])
    # ∫ J dt over the support recovers the mass
    t, w = gauss_interval(0.8 - r, 0.8, 64)
    t2, w2 = gauss_interval(0.8, 0.8 + r, 64)
    total = w @ k.shell_integral(x, t) + w2 @ k.shell_integral(x, t2)
    assert total == pytest.approx(k.mass, rel=1e-9)


def test_gauss_kernel_mass():
    p = Particle(Ball(), (0.1, 0.0, 0.0), 0.05)
    k = particle_kernel(p, 2.5)
    assert k.kind == "gauss" and k.mass == pytest.approx(2.5, rel=1e-14)
    x = np.array([0.4, 0.0, 0.0])
    assert pstar_volume(InitialPressure(BallDomain(), None, p, 2.5), x, 1.0) == pytest.approx(2.5 / (4 * math.pi), rel=1e-12)


# ---- volume identity, saturation and arrival


@pytest.fixture(scope="module")
def bump_synth():
    s = make_scenario(eps0=2 + 0.2j, a=2e-2, profile="bump")
    dets = [DET, (0.0, 0.0, -1.0)]
    return s, TraceSynthesizer(s, dets, t_max=2.2, dt=2e-3)


def test_trace_and_volume_agree(bump_synth):
    s, syn = bump_synth
    om, ga = reference_frequency(s)
    withp, _ = syn.traces(om, ga)
    ip = initial_pressure(s, om, ga)
    for k, sv in [(0, 0.8), (0, 1.5), (1, 1.2), (1, 2.1)]:
        a = pstar_from_trace(withp[k], sv)
        b = pstar_volume(ip, np.asarray(syn.detectors[k]), sv)
        assert a == pytest.approx(b, rel=1e-4)


def test_huygens_saturation(bump_synth):
    s, syn = bump_synth
    curve = pstar_curve(syn.background[0])
    late = curve[syn.times > 2.0 + 1e-9]
    assert np.ptp(late) <= 1e-6 * abs(late[-1])
    total = pstar_volume(InitialPressure(s.domain, background_density(s)), np.asarray(DET), 2.1)
    assert late[-1] == pytest.approx(total, rel=1e-5)


def test_particle_plateau_and_arrival(bump_synth):
    s, syn = bump_synth
    unit = pstar_curve(syn.unit[0])
    det = np.asarray(DET)
    dist = np.linalg.norm(det - s.particle.z) - s.particle.radius
    assert np.all(np.abs(unit[syn.times < dist - 1e-9]) == 0.0)
    assert unit[-1] == pytest.approx(1 / (4 * math.pi), rel=1e-4)


def test_pstar_non_decreasing(bump_synth):
    s, syn = bump_synth
    withp, _ = syn.traces(*reference_frequency(s))
    c = pstar_curve(withp[1])
    assert np.all(np.diff(c) >= -1e-12 * c[-1])


def test_closed_form_difference_matches_traces(bump_synth):
    s, syn = bump_synth
    om, ga = reference_frequency(s)
    withp, without = syn.traces(om, ga)
    sv = 2.0
    diff = pstar_from_trace(withp[0], sv) - pstar_from_trace(without[0], sv)
    assert diff == pytest.approx(pstar_difference_closed(s, om, ga, DET, sv), rel=1e-3)
    assert pstar_difference_closed(s, om, ga, DET, sv) == pytest.approx(
        absorption(s, om, ga) * electric_energy(s, om, ga) / (4 * math.pi)
    )


def test_closed_form_arrival_threshold():
    s = make_scenario(eps0=2 + 0.2j)
    om, ga = reference_frequency(s)
    with pytest.raises(ValueError, match="arrival threshold"):
        pstar_difference_closed(s, om, ga, DET, 0.1)


def test_pstar_difference_grid_linearity(bump_synth):
    s, syn = bump_synth
    om = np.array([0.9, 1.0, 1.1])
    ga = np.array([0.05, 0.1])
    grid = syn.pstar_difference(0, 2.0, om, ga)
    w, wo = syn.traces(om[1], ga[0])
    ref = pstar_from_trace(w[0], 2.0) - pstar_from_trace(wo[0], 2.0)
    assert grid.shape == (3, 2)
    assert grid[1, 0] == pytest.approx(ref, rel=1e-9)


# ---- synthesis properties


def test_zero_amplitude_traces_identical():
    s = make_scenario(eps0=2 + 0.2j, amplitude=0.0)
    syn = TraceSynthesizer(s, [DET], t_max=2.0, dt=0.01)
    w, wo = syn.traces(*reference_frequency(s))
    assert np.array_equal(w[0].values, wo[0].values)
    assert particle_mass(s, 1.0, 0.1) == 0.0


def test_symmetric_detectors_identical_differences():
    s = make_scenario(eps0=2 + 0.2j, center=(0.0, 0.0, 0.0))
    dets = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, -1.0)]
    syn = TraceSynthesizer(s, dets, t_max=1.2, dt=0.01)
    w, wo = syn.traces(*reference_frequency(s))
    d = [a.values - b.values for a, b in zip(w, wo)]
    assert np.allclose(d[0], d[1], rtol=0, atol=1e-14 * np.abs(d[0]).max())
    assert np.allclose(d[0], d[2], rtol=0, atol=1e-14 * np.abs(d[0]).max())


def test_finite_speed_before_arrival():
    s = make_scenario(eps0=2 + 0.2j, a=1e-2)
    syn = TraceSynthesizer(s, [DET], t_max=2.2, dt=5e-3)
    om, ga = reference_frequency(s)
    w, wo = syn.traces(om, ga)
    diff = pstar_curve(w[0]) - pstar_curve(wo[0])
    dist = s.particle.distance(np.asarray(DET))
    assert np.all(np.abs(diff[syn.times < dist]) <= 1e-3 * diff[-1])


def test_detectors_must_be_on_boundary():
    s = make_scenario()
    with pytest.raises(ValueError, match="boundary"):
        TraceSynthesizer(s, [(0.5, 0.0, 0.0)], t_max=1.0, dt=0.01)


def test_thread_count_does_not_change_results(monkeypatch):
    s = make_scenario(eps0=2 + 0.2j)
    dets = [DET, (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]
    monkeypatch.setenv("PLASMO_THREADS", "1")
    assert worker_count() == 1
    a = TraceSynthesizer(s, dets, t_max=1.0, dt=0.01)
    monkeypatch.setenv("PLASMO_THREADS", "3")
    b = TraceSynthesizer(s, dets, t_max=1.0, dt=0.01)
    for x, y in zip(a.background + a.unit, b.background + b.unit):
        assert np.array_equal(x.values, y.values)
    monkeypatch.setenv("PLASMO_THREADS", "many")
    with pytest.raises(ValueError):
        worker_count()


def test_resolved_particle_volume_plateau():
    p = Particle(Ball(), (0.1, 0.0, 0.0), 0.05)
    ip = InitialPressure(BallDomain(), None, p, 1.0, resolved=True)
    assert ip.kernel.kind == "uniform"
    assert pstar_volume(ip, np.array(DET), 1.0) == pytest.approx(1 / (4 * math.pi), rel=1e-12)
    # lens of the sphere of radius S = 0.9 through the particle centre and the particle
    S, r, d = 0.9, 0.05, 0.9
    lens = math.pi * (S + r - d) ** 2 * (d * d + 2 * d * r - 3 * r * r + 2 * d * S + 6 * r * S - 3 * S * S) / (12 * d)
    frac = lens / (4 / 3 * math.pi * r**3)
    assert pstar_volume(ip, np.array(DET), S) * 4 * math.pi == pytest.approx(frac, rel=1e-6)


@pytest.mark.parametrize("a", [1e-2, 1e-3])
def test_unit_plateau_accurate_for_small_particles(a):
    s = make_scenario(eps0=2 + 0.2j, a=a)
    syn = TraceSynthesizer(s, [DET], t_max=2.2, dt=1e-2)
    assert pstar_curve(syn.unit[0])[-1] == pytest.approx(1 / (4 * math.pi), rel=1e-8)


def test_absorption_positive_and_mass_nonnegative():
    s = make_scenario(eps0=2 + 0.2j)
    om = np.linspace(0.5, 1.5, 11)
    assert np.all(absorption(s, om, 0.1) > 0)
    r = resonance(1 / 3, s.host, s.medium)
    assert particle_mass(s, r.omega + 0.1, r.gamma) > 0


def test_time_grid():
    t = time_grid(1.0, 0.3)
    assert t[0] == 0.0 and t[-1] >= 1.0 and np.allclose(np.diff(t), 0.3)
    with pytest.raises(ValueError):
        time_grid(1.0, 0.0)
