import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plasmo.acoustic import PressureTrace, TraceSynthesizer, pstar_curve, reference_frequency
from plasmo.dispersion import LorentzMedium, SweepSquare, bounds, resonance
from plasmo.geometry import Ball, BallDomain
from plasmo.inversion import (
    IndicatorGrid,
    Peak,
    PipelineError,
    RecoveryReport,
    detect_peaks,
    estimate_distance,
    indicator,
    kernel_depth,
    localize,
    match_eigenvalues,
    recover_permittivity,
    resolution_for,
    run_pipeline,
    sweep_axes,
    trilaterate,
)

from conftest import TRIPLE, make_scenario, run_recovery


def test_indicator_examples():
    assert indicator(3.0, 1.0) == 2.0
    assert indicator(1.0, 3.0) == 2.0
    assert np.all(indicator(np.ones(4), np.ones(4)) == 0.0)


# ---- arrival and trilateration


def test_estimate_distance_step_curve():
    s = np.linspace(0.0, 1.0, 1001)
    curve = np.where(s >= 0.4, 1.0, 0.0)
    assert estimate_distance(s, curve, 0.01) == pytest.approx(0.4, abs=1e-3)


def test_estimate_distance_errors():
    s = np.linspace(0.0, 1.0, 101)
    with pytest.raises(ValueError, match="no particle signature"):
        estimate_distance(s, np.zeros(101), 0.05)
    with pytest.raises(ValueError, match="no particle signature"):
        estimate_distance(s, np.ones(101), 0.05)
    with pytest.raises(ValueError, match="finer"):
        estimate_distance(s, np.where(s > 0.5, 1.0, 0.0), 1e-3)


def test_trilaterate_exact():
    z = np.array([0.1, -0.2, 0.15])
    P = np.array(TRIPLE)
    tri = trilaterate(P, np.linalg.norm(P - z, axis=1))
    assert np.linalg.norm(tri.z - z) < 1e-9
    assert len(tri.candidates) == 2


def test_trilaterate_four_detectors_unique():
    z = np.array([0.3, 0.1, -0.4])
    P = np.array(TRIPLE + ((-1.0, 0.0, 0.0),))
    tri = trilaterate(P, np.linalg.norm(P - z, axis=1))
    assert np.linalg.norm(tri.z - z) < 1e-9 and len(tri.candidates) == 1


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e-2, 1e-2), min_size=3, max_size=3))
def test_trilaterate_perturbed_within_a(delta):
    a = 1e-2
    z = np.array([0.1, -0.2, 0.15])
    P = np.array(TRIPLE)
    tri = trilaterate(P, np.linalg.norm(P - z, axis=1) + np.asarray(delta), a)
    assert np.linalg.norm(tri.z - z) <= 5 * a


def test_trilaterate_collinear():
    P = np.array([(1.0, 0.0, 0.0), (-1.0, 0.0, 0.0), (1.0, 0.0, 0.0)])
    with pytest.raises(ValueError, match="collinear"):
        trilaterate(P, np.array([1.0, 1.0, 1.0]))


def test_trilaterate_inconsistent():
    P = np.array(TRIPLE)
    with pytest.raises(ValueError):
        trilaterate(P, np.array([0.1, 0.1, 1.9]), 1e-3)


def test_localize_from_traces():
    a = 1e-2
    s = make_scenario(eps0=2 + 0.2j, a=a)
    syn = TraceSynthesizer(s, TRIPLE, t_max=2.2, dt=1e-2)
    w, wo = syn.traces(*reference_frequency(s))
    tri, dists = localize(syn.detectors, w, wo, a, Ball())
    assert np.linalg.norm(tri.z - s.particle.z) <= 0.3 * a
    for det, d in zip(TRIPLE, dists):
        assert d == pytest.approx(s.particle.distance(np.asarray(det)), abs=a)


def test_kernel_depth():
    assert kernel_depth(0.5, 0.01) == pytest.approx(0.0, abs=1e-15)
    assert kernel_depth(1e-300, 0.01) == 0.01
    assert 0.0 < kernel_depth(1e-6, 0.01) < 0.01


def test_kernel_depth_matches_unit_signature():
    # crossing of the noiseless unit signature sits kernel_depth before the centre
    a = 1e-2
    s = make_scenario(eps0=2 + 0.2j, a=a)
    syn = TraceSynthesizer(s, [TRIPLE[0]], t_max=2.2, dt=1e-2)
    curve = pstar_curve(syn.unit[0])
    d = np.linalg.norm(np.asarray(TRIPLE[0]) - s.particle.z)
    for q in (1e-4, 1e-2, 0.3):
        k = int(np.argmax(curve > q * curve[-1]))
        t0, t1, c0, c1 = syn.times[k - 1], syn.times[k], curve[k - 1], curve[k]
        hit = t0 + (q * curve[-1] - c0) / (c1 - c0) * (t1 - t0)
        assert hit + kernel_depth(q, a) == pytest.approx(d, abs=0.05 * a)


# ---- grid and peaks


def _grid(f, n=60, m=30):
    om = np.linspace(0.5, 1.5, n)
    ga = np.linspace(0.01, 0.3, m)
    return IndicatorGrid(om, ga, f(om[:, None], ga[None, :]))


def test_constant_grid_has_no_peaks():
    assert detect_peaks(_grid(lambda o, g: 0 * o + 0 * g + 1.0)) == []
    assert detect_peaks(_grid(lambda o, g: 0 * o + 0 * g)) == []


def test_two_bumps():
    def f(o, g):
        return 1 / ((o - 0.8) ** 2 + (g - 0.1) ** 2 + 1e-3) + 0.6 / ((o - 1.2) ** 2 + (g - 0.2) ** 2 + 1e-3)

    peaks = detect_peaks(_grid(f))
    assert len(peaks) == 2
    assert peaks[0].omega == pytest.approx(0.8, abs=0.02) and peaks[1].omega == pytest.approx(1.2, abs=0.02)
    assert peaks[0].prominence > peaks[1].prominence


def test_small_bump_below_prominence():
    def f(o, g):
        return 1 / ((o - 0.8) ** 2 + (g - 0.1) ** 2 + 1e-3) + 0.01 / ((o - 1.2) ** 2 + (g - 0.2) ** 2 + 1e-3)

    assert len(detect_peaks(_grid(f))) == 1


def test_peak_on_lowest_gamma_row():
    peaks = detect_peaks(_grid(lambda o, g: np.exp(-((o - 1.003) ** 2) / 0.01 - g)))
    assert len(peaks) == 1 and peaks[0].index[1] == 0


def test_grid_validation():
    with pytest.raises(ValueError):
        IndicatorGrid(np.array([1.0, 0.5]), np.array([0.1]), np.ones((2, 1)))
    with pytest.raises(ValueError):
        IndicatorGrid(np.array([0.5, 1.0]), np.array([0.1]), -np.ones((2, 1)))


def test_sweep_axes_interior():
    sq = SweepSquare(1.0, 2.0, 0.5)
    om, ga = sweep_axes(sq, 9, 4)
    assert om[0] > 1.0 and om[-1] < 2.0 and np.allclose(np.diff(om), 0.1)
    assert ga[0] > 0 and ga[-1] < 0.5
    om, ga = sweep_axes(sq, 9, 4, gamma_fixed=0.02)
    assert ga.tolist() == [0.02]
    assert resolution_for(sq, 1e-2, 0.5) == 200


def test_single_mode_peak_near_resonance():
    s = make_scenario(eps0=2 + 0.2j, a=1e-2)
    r = resonance(1 / 3, s.host, s.medium)
    sq = bounds(s.host_field_bound(), s.medium)
    om, ga = sweep_axes(sq, 200, 50)
    from plasmo.acoustic import particle_mass

    grid = IndicatorGrid(om, ga, particle_mass(s, om[:, None], ga[None, :]))
    peaks = detect_peaks(grid)
    assert len(peaks) == 1
    assert abs(peaks[0].omega - r.omega) <= om[1] - om[0]
    assert abs(peaks[0].gamma - r.gamma) <= 2 * (ga[1] - ga[0])


# ---- matching and recovery


def _peak(omega):
    return Peak(omega, 0.1, 1.0, (0, 0))


def test_match_monotone_order():
    pairs = match_eigenvalues([_peak(1.3), _peak(1.1), _peak(1.2)], [0.5, 0.2, 0.3])
    assert [(p.omega, lam) for p, lam in pairs] == [(1.1, 0.2), (1.2, 0.3), (1.3, 0.5)]


def test_match_errors():
    with pytest.raises(ValueError, match="more peaks"):
        match_eigenvalues([_peak(1.0), _peak(1.1)], [1 / 3])
    with pytest.raises(ValueError, match="prior"):
        match_eigenvalues([_peak(1.0)], [0.2, 0.3])


def test_match_with_prior():
    prior = {0.2: 1.0, 0.3: 1.1, 0.4: 1.2}.get
    pairs = match_eigenvalues([_peak(1.09)], [0.2, 0.3, 0.4], prior)
    assert pairs[0][1] == 0.3
    pairs = match_eigenvalues([_peak(1.01), _peak(1.19)], [0.2, 0.3, 0.4], prior)
    assert [lam for _, lam in pairs] == [0.2, 0.4]


def test_recover_permittivity_examples():
    assert recover_permittivity(1 / 3, -4.0) == pytest.approx(2.0, rel=1e-14)
    assert recover_permittivity(0.5, -3.0 + 0.2j) == pytest.approx(3.0 - 0.2j)
    for lam in (0.0, 1.0, 1.2):
        with pytest.raises(ValueError):
            recover_permittivity(lam, -1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 0.95).filter(lambda x: abs(x - 0.5) > 0.02), st.floats(1.2, 6.0), st.floats(0.0, 1.0))
def test_recovery_inverts_resonance(lam, re0, im0):
    m = LorentzMedium()
    e0 = complex(re0, im0)
    r = resonance(lam, e0, m)
    assert recover_permittivity(lam, m.permittivity(r.omega, r.gamma)) == pytest.approx(e0, rel=1e-9)


def test_report_json_round_trip():
    s, report = run_recovery(1e-2)
    text = report.to_json()
    back = RecoveryReport.from_dict(json.loads(text))
    assert np.array_equal(back.z_hat, report.z_hat)
    assert back.peaks == report.peaks
    assert back.to_json() == text


# ---- pipeline


def test_pipeline_canonical():
    s, report = run_recovery(1e-2)
    assert len(report.peaks) == 1
    assert abs(report.peaks[0].eps0_recovered - s.eps0) / abs(s.eps0) <= 0.1
    assert np.linalg.norm(report.z_hat - s.particle.z) <= 5e-2


def test_pipeline_lossless_gamma_fixed():
    s, report = run_recovery(1e-2, eps0=2.0, gamma_fixed=1e-3)
    assert len(report.peaks) == 1
    assert report.peaks[0].gamma_star == 1e-3
    assert report.peaks[0].eps0_recovered.real == pytest.approx(2.0, rel=0.05)


def test_pipeline_without_particle_fails_at_localization():
    s = make_scenario(eps0=2 + 0.2j, amplitude=0.0)
    syn = TraceSynthesizer(s, TRIPLE, t_max=2.2, dt=1e-2)
    w, wo = syn.traces(1.0, 0.1)
    with pytest.raises(PipelineError) as err:
        run_pipeline(syn.detectors, w, wo, Ball(), s.medium, 1e-2, grid_builder=lambda *_: None)
    assert err.value.stage == "localization" and "no particle signature" in err.value.message


def test_pipeline_needs_grid():
    s = make_scenario(eps0=2 + 0.2j)
    syn = TraceSynthesizer(s, TRIPLE, t_max=2.2, dt=1e-2)
    w, wo = syn.traces(*reference_frequency(s))
    with pytest.raises(PipelineError) as err:
        run_pipeline(syn.detectors, w, wo, Ball(), s.medium, 1e-2)
    assert err.value.stage == "sweep"


def test_pipeline_flat_grid_has_no_peak():
    s = make_scenario(eps0=2 + 0.2j)
    syn = TraceSynthesizer(s, TRIPLE, t_max=2.2, dt=1e-2)
    w, wo = syn.traces(*reference_frequency(s))
    flat = IndicatorGrid(np.linspace(1, 1.4, 5), np.linspace(0.01, 0.1, 3), np.ones((5, 3)))
    with pytest.raises(PipelineError) as err:
        run_pipeline(syn.detectors, w, wo, Ball(), s.medium, 1e-2, grid=flat)
    assert err.value.stage == "peaks"
