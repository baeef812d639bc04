from math import exp, pi, sqrt

import numpy as np
import pytest

from app.duffing import DuffingParams
from app.dynamics import (
    ExactMap,
    TaylorMap,
    apply,
    cycle_orbit,
    detect_period,
    iterate,
    jacobian,
    newton_fixed_point,
)


@pytest.fixture(scope="module")
def unforced():
    return ExactMap(DuffingParams(beta=0.1, epsilon=0.0, omega_d=1.285))


def test_exact_map_rejects_bad_settings(study_params):
    with pytest.raises(ValueError):
        ExactMap(study_params, steps=0)
    with pytest.raises(ValueError):
        ExactMap(study_params, time_base="stretched")
    with pytest.raises(ValueError):
        ExactMap(study_params).orbit(0.0, 0.0, -1.0, 0, 1)


def test_exact_map_duration_per_time_base(study_params):
    assert ExactMap(study_params).duration(1.3) == pytest.approx(2 * pi / 1.3)
    assert ExactMap(study_params, time_base="fixed").duration(1.3) == pytest.approx(study_params.period)


def test_unforced_origin_is_a_stable_fixed_point(unforced):
    assert apply(unforced, 0.0, 0.0, 1.285) == (0.0, 0.0)
    result = newton_fixed_point(unforced, 1, (0.3, -0.2), 1.285)
    assert result.converged
    assert result.location == pytest.approx((0.0, 0.0), abs=1e-8)
    assert result.stable
    assert all(abs(m) < 1.0 for m in result.multipliers)


@pytest.mark.parametrize("time_base", ["normalized", "fixed"])
def test_exact_jacobian_determinant_is_phase_volume_contraction(mild_params, rng, time_base):
    handle = ExactMap(mild_params, time_base=time_base)
    for _ in range(10):
        q, p = rng.uniform(-1.5, 1.5, size=2)
        omega = rng.uniform(1.0, 2.0)
        duration = handle.duration(omega)
        det = np.linalg.det(jacobian(handle, q, p, omega))
        assert det == pytest.approx(exp(-2 * mild_params.beta * duration), rel=1e-6)


def test_taylor_map_reproduces_exact_map_at_expansion_point(study_map8):
    handle = TaylorMap(study_map8)
    exact = ExactMap(study_map8.params, steps=study_map8.steps, time_base=study_map8.time_base)
    q, p, omega = study_map8.expansion_point
    assert handle.apply(q, p, omega) == pytest.approx(exact.apply(q, p, omega), abs=1e-9)
    assert handle.apply(q, p, omega) == pytest.approx(study_map8.final_point[:2], abs=1e-12)


def test_taylor_jacobian_matches_linear_part(study_map8):
    handle = TaylorMap(study_map8)
    q, p, omega = study_map8.expansion_point
    assert np.allclose(handle.jacobian(q, p, omega), study_map8.linear_part()[:2, :2], atol=1e-12)


def test_taylor_map_folds_frequency_shift(mild_map3):
    handle = TaylorMap(mild_map3)
    q, p, omega = 0.52, -0.01, mild_map3.expansion_point[2] + 0.02
    zeta = (q - mild_map3.expansion_point[0], p - mild_map3.expansion_point[1], 0.02)
    expected = np.array(mild_map3.final_point[:2]) + mild_map3.evaluate(zeta)[:2]
    assert handle.apply(q, p, omega) == pytest.approx(tuple(expected), rel=1e-12)


def test_iterate_keeps_requested_points(unforced):
    sample = iterate(unforced, 0.5, 0.0, 1.285, 3, 5)
    assert len(sample) == 5
    assert not sample.escaped
    with pytest.raises(ValueError):
        iterate(unforced, 0.5, 0.0, 1.285, -1, 5)


def test_iterate_flags_escape(study_params):
    sample = iterate(ExactMap(study_params), 1.26082, 2.05452, 1.285, 10, 10, escape_radius=0.5)
    assert sample.escaped
    assert sample.escape_step == 1
    assert len(sample) == 0


def test_apply_on_escape_returns_nan(mild_map3):
    handle = TaylorMap(mild_map3)
    q, p = handle.apply(1e200, 1e200, mild_map3.expansion_point[2])
    assert np.isnan(q) and np.isnan(p)


def test_detect_period():
    period_two = np.tile([[1.0, 2.0], [3.0, 4.0]], (32, 1))
    assert detect_period(period_two, max_period=8) == 2
    assert detect_period(np.ones((20, 2)), max_period=8) == 1
    rng = np.random.default_rng(0)
    assert detect_period(rng.normal(size=(64, 2)), max_period=16) is None
    with pytest.raises(ValueError):
        detect_period(period_two[:10], max_period=8)


def test_detect_period_needs_four_repeats():
    rng = np.random.default_rng(7)
    block = rng.normal(size=(40, 2))
    assert detect_period(np.vstack([block, block]), tol=1e-6, max_period=40) is None
    short = block[:16]
    assert detect_period(np.tile(short, (5, 1)), tol=1e-6, max_period=16) == 16
    assert detect_period(np.tile(short, (4, 1)), tol=1e-6, max_period=16) is None


def test_detect_period_tolerance():
    base = np.tile([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]], (20, 1))
    noisy = base + 1e-8 * np.arange(len(base))[:, None]
    assert detect_period(noisy, tol=1e-6, max_period=8) == 3
    assert detect_period(noisy, tol=1e-9, max_period=8) is None


def test_newton_reports_singular_system(study_params):
    class Identity(ExactMap):
        def apply(self, q, p, omega):
            return q, p

        def jacobian(self, q, p, omega):
            return np.eye(2)

    result = newton_fixed_point(Identity(study_params), 1, (0.1, 0.1), 1.285, tol=-1.0)
    assert not result.converged
    assert "singular" in result.diagnostic


def test_newton_rejects_bad_period(unforced):
    with pytest.raises(ValueError):
        newton_fixed_point(unforced, 0, (0.0, 0.0), 1.285)


def test_cycle_orbit_closes(unforced):
    points = cycle_orbit(unforced, (0.0, 0.0), 3, 1.285)
    assert points == [(0.0, 0.0)] * 3


def test_newton_stops_when_no_halving_helps(study_params):
    class Shift(ExactMap):
        def apply(self, q, p, omega):
            return q + 1.0, p

        def jacobian(self, q, p, omega):
            return 2.0 * np.eye(2)

    result = newton_fixed_point(Shift(study_params), 1, (0.25, -0.5), 1.285)
    assert not result.converged
    assert "no residual decrease" in result.diagnostic
    assert result.location == (0.25, -0.5)
    assert result.residual == pytest.approx(1.0)
    assert result.iterations == 0


def test_unforced_multipliers_are_damped_rotation(unforced):
    beta, omega = 0.1, 1.285
    period = 2 * pi / omega
    result = newton_fixed_point(unforced, 1, (0.2, 0.1), omega)
    assert result.converged
    found = sorted(result.multipliers, key=lambda m: m.imag)
    rotation = sqrt(1.0 - beta * beta)
    expected = sorted((np.exp(complex(-beta, s * rotation) * period) for s in (-1.0, 1.0)), key=lambda m: m.imag)
    for got, want in zip(found, expected):
        assert abs(got - want) < 1e-8


def test_three_coexisting_fixed_points(mild_params):
    handle = ExactMap(mild_params)
    found = []
    for q in np.linspace(-3.0, 3.0, 7):
        for p in np.linspace(-3.0, 3.0, 7):
            result = newton_fixed_point(handle, 1, (q, p), 2.0)
            if not result.converged:
                continue
            if all(np.hypot(result.location[0] - f.location[0], result.location[1] - f.location[1]) > 1e-6
                   for f in found):
                found.append(result)
    assert len(found) == 3
    assert sorted(f.stable for f in found) == [False, True, True]


def test_weak_drive_settles_on_period_one():
    handle = ExactMap(DuffingParams(beta=0.1, epsilon=0.15, omega_d=1.0))
    sample = iterate(handle, 0.0, 0.0, 1.0, 2000, 16)
    assert not sample.escaped
    assert np.ptp(sample.points, axis=0).max() <= 1e-6
    assert detect_period(sample.points, max_period=3) == 1
