import math

import numpy as np
import pytest

from witnesskit.errors import ParameterError
from witnesskit.montecarlo import (
    analytical_bound,
    analytical_bound_numeric,
    ball_volumes,
    curve_csv,
    draw_sample,
    error_curve,
    false_separable_rate,
    plane_parameter,
    soundness_scan,
    worker_count,
)
from witnesskit.states import MAX_NOISE_RADIUS, is_ppt, noisy_state, bell, ball_offsets
from witnesskit.witness import W0_MATRIX, tau_threshold

VOL = math.pi ** 7 / math.factorial(7)


def test_plane_parameter_examples():
    assert plane_parameter(0.0) == pytest.approx(1 / 3)
    assert plane_parameter(0.25) == pytest.approx(0.0, abs=1e-15)
    assert plane_parameter(-0.5) == pytest.approx(1.0)


def test_ball_volumes_examples():
    assert ball_volumes(0.4, 0.4, 0.0)[0] == 0.0
    assert ball_volumes(1 / 3, 0.2, 0.1)[1] == pytest.approx(0.0, abs=1e-30)
    assert ball_volumes(0.0, 0.2, 0.1)[1] == pytest.approx(VOL * (1 / 12) ** 7, rel=1e-12)


def test_analytical_bound_frozen_values():
    assert analytical_bound(0.001, 0.1) == pytest.approx(0.9999985, abs=1e-7)
    assert analytical_bound(0.005, 0.1) == pytest.approx(0.90146984, abs=1e-7)


@pytest.mark.parametrize("d", [0.05, 0.15, 0.25])
def test_analytical_bound_matches_numeric_sup(d):
    tau = tau_threshold(d)
    for a in np.linspace(0.01 * tau, tau, 12):
        e = analytical_bound(a, d)
        assert 0.0 <= e <= 1.0
        assert e == pytest.approx(analytical_bound_numeric(a, d), abs=1e-6)


def test_analytical_bound_decreasing_at_point_one():
    grid = np.linspace(0, tau_threshold(0.1), 50)
    vals = analytical_bound(grid, 0.1)
    assert np.all(np.diff(vals) <= 1e-15)


def test_analytical_bound_at_tau_is_zero():
    for d in (0.05, 0.15, 0.25):
        assert analytical_bound(tau_threshold(d), d) == pytest.approx(0.0, abs=1e-9)


def test_analytical_bound_domain():
    with pytest.raises(ParameterError):
        analytical_bound(0.1, 0.0)
    with pytest.raises(ParameterError):
        analytical_bound(0.5, 0.1)
    with pytest.raises(ParameterError):
        analytical_bound(-0.01, 0.1)


def test_draw_sample_matches_direct_construction():
    s = draw_sample(50, 3)
    offs = ball_offsets(s.coords, 1.0)
    assert np.allclose(s.w0_unit, np.einsum("ab,nba->n", W0_MATRIX, offs).real)
    with pytest.raises(ParameterError):
        draw_sample(0, 1)


def test_cell_flags_agree_with_ppt_oracle():
    from witnesskit.montecarlo import _cell
    s = draw_sample(300, 4)
    offs = ball_offsets(s.coords, 1.0)
    for p, d in [(0.3, 0.2), (0.5, 0.1), (0.0, MAX_NOISE_RADIUS)]:
        values, npt = _cell(s, p, d, 1e-10)
        for k in range(0, 300, 7):
            rho = noisy_state(bell("psi+"), p, np.eye(4) / 4 + d * offs[k], (2, 2))
            assert npt[k] == (not is_ppt(rho))
            assert values[k] == pytest.approx(np.trace(W0_MATRIX @ rho.mat).real, abs=1e-12)


def test_error_curve_white_noise_is_exact():
    c = error_curve(0.0, 2000, alpha_edges=np.linspace(0.0, 0.25, 11), seed=1)
    ok = ~np.isnan(c.e_minus)
    assert ok.any()
    assert np.all(c.e_minus[ok] == 0.0)


def test_error_curve_reproducible_and_thread_independent():
    a = error_curve(0.15, 3000, p_grid=np.linspace(0, 1, 21), n_bins=10, seed=5, threads=1)
    b = error_curve(0.15, 3000, p_grid=np.linspace(0, 1, 21), n_bins=10, seed=5, threads=3)
    assert curve_csv(a) == curve_csv(b)


def test_error_curve_shape_and_bounds():
    c = error_curve(0.1, 5000, p_grid=np.linspace(0, 1, 51), n_bins=20, seed=2)
    ok = ~np.isnan(c.e_minus)
    assert np.all((c.e_minus[ok] >= 0) & (c.e_minus[ok] <= 1))
    assert c.bound_violations().size == 0
    assert c.alpha_hi[-1] == pytest.approx(tau_threshold(0.1))


def test_error_curve_domain():
    with pytest.raises(ParameterError):
        error_curve(0.5, 10)
    with pytest.raises(ParameterError):
        error_curve(0.0, 10)


def test_curve_csv_columns():
    c = error_curve(0.2, 500, p_grid=np.linspace(0, 1, 11), n_bins=5, seed=0)
    lines = curve_csv(c).splitlines()
    assert lines[0] == "d,alpha,alpha_hi,e_minus,E_minus,n_in_bin,sigma,p_at_max"
    assert len(lines) == 6


def test_false_rate_zero_without_noise():
    assert false_separable_rate(0.0, 2000, seed=0).rate == 0.0


def test_false_rate_positive_at_max_radius():
    r = false_separable_rate(MAX_NOISE_RADIUS, 5000, seed=0)
    assert r.rate > 0
    assert r.n_called_separable >= 100


def test_false_rate_monotone_in_d():
    sample = draw_sample(5000, 9)
    ds = [0.05, 0.10, 0.15, 0.20, 0.25, MAX_NOISE_RADIUS]
    rates = [false_separable_rate(d, sample=sample, p_grid=np.linspace(0, 1, 51)) for d in ds]
    for lo, hi in zip(rates, rates[1:]):
        assert hi.rate >= lo.rate - 3 * math.hypot(lo.sigma, hi.sigma)


def test_soundness_small_scan():
    rep = soundness_scan([0.05, 0.2, MAX_NOISE_RADIUS], 2000, p_grid=np.linspace(0, 1, 26), seed=3)
    assert rep.n_states == 3 * 2000 * 26
    assert (rep.tau_violations, rep.theta_violations, rep.witness_violations) == (0, 0, 0)
    assert rep.certified_tau > 0 and rep.certified_theta > 0


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("WITNESSKIT_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("WITNESSKIT_THREADS", "x")
    with pytest.raises(ParameterError):
        worker_count()
