"""
End-to-end checks against the period-doubling study. Run with: pytest -m slow
"""
from math import exp, pi

import numpy as np
import pytest

from app.comparison import compare_maps, fit_slopes
from app.duffing import DuffingParams, duffing_system
from app.dynamics import ExactMap, TaylorMap, cycle_orbit, detect_period, iterate, newton_fixed_point
from app.feigenbaum import (
    AttractorConfig,
    SweepConfig,
    attractor_cloud,
    bounding_box,
    branch_jumps,
    cloud_distance,
    first_transition,
    sweep,
    trail_both_ways,
)
from app.variational import order_refine_check
from conftest import STUDY_POINT, build_map

pytestmark = pytest.mark.slow

CASCADE = dict(omega_min=1.24, omega_max=1.30, samples=600, transient=2000, keep=256, seed=STUDY_POINT)


@pytest.fixture(scope="module")
def study_maps(study_params):
    return {n: build_map(study_params, n, 2048) for n in (2, 3, 5, 8)}


@pytest.fixture(scope="module")
def exact_cascade(study_params):
    return sweep(SweepConfig(**CASCADE), ExactMap(study_params))


def doublings(records):
    """Periods 1, 2, 4, ... reached in omega order, each at its first occurrence."""
    seen = [1]
    for before, after in zip(records, records[1:]):
        if before.period == seen[-1] and after.period == 2 * seen[-1]:
            seen.append(after.period)
    return seen


def test_liouville_determinant(study_params, study_maps):
    rng = np.random.default_rng(2024)
    exact = ExactMap(study_params)
    for _ in range(50):
        q, p = rng.uniform(-2.0, 2.0, size=2)
        omega = rng.uniform(1.0, 2.0)
        det = np.linalg.det(exact.jacobian(q, p, omega))
        assert det == pytest.approx(exp(-2 * study_params.beta * 2 * pi / omega), rel=1e-6)

    taylor = TaylorMap(study_maps[8])
    q_bd, p_bd, omega_bd = study_maps[8].expansion_point
    for _ in range(50):
        dq, dp, dw = rng.uniform(-0.05, 0.05, size=3)
        omega = omega_bd + dw
        det = np.linalg.det(taylor.jacobian(q_bd + dq, p_bd + dp, omega))
        assert det == pytest.approx(exp(-2 * study_params.beta * 2 * pi / omega), rel=1e-6)


def test_order_of_accuracy(study_maps):
    rows = compare_maps([study_maps[n] for n in (3, 5, 8)], [1e-3, 3e-3, 1e-2, 3e-2], 16)
    slopes = fit_slopes(rows)
    for order in (3, 5, 8):
        assert slopes[order] == pytest.approx(order + 1, abs=0.4)


def test_exact_cascade_location(exact_cascade):
    assert first_transition(exact_cascade, 1, 2) == pytest.approx(1.268, abs=0.004)
    last_periodic = max(r.omega for r in exact_cascade if r.period is not None)
    assert last_periodic == pytest.approx(1.292, abs=0.004)


def test_order_eight_reproduces_cascade(exact_cascade, study_maps):
    records = sweep(SweepConfig(**CASCADE), TaylorMap(study_maps[8]))
    exact_first = first_transition(exact_cascade, 1, 2)
    assert first_transition(records, 1, 2) == pytest.approx(exact_first, abs=0.002)
    assert doublings(records)[:4] == [1, 2, 4, 8]


def test_cascade_needs_order_three(study_maps):
    window = dict(CASCADE, samples=300)
    for n in (3, 5, 8):
        assert len(doublings(sweep(SweepConfig(**window), TaylorMap(study_maps[n])))) >= 3
    assert first_transition(sweep(SweepConfig(**window), TaylorMap(study_maps[2])), 2, 4) is None


def test_strange_attractor_concordance(study_params, study_maps):
    cfg = AttractorConfig(omega=1.2902, transient=10000, keep=200000, seed=STUDY_POINT)
    exact = attractor_cloud(cfg, ExactMap(study_params), workers=4)
    taylor = attractor_cloud(cfg, TaylorMap(study_maps[8]))
    assert not exact.escaped and not taylor.escaped
    assert detect_period(exact.points, max_period=64) is None
    assert detect_period(taylor.points, max_period=64) is None
    assert len(exact) == len(taylor) == 200000
    assert cloud_distance(exact.points, taylor.points) < 0.1
    exact_box, taylor_box = bounding_box(exact.points), bounding_box(taylor.points)
    widths = (exact_box[1] - exact_box[0], exact_box[3] - exact_box[2])
    for edge in range(4):
        assert abs(taylor_box[edge] - exact_box[edge]) <= 0.02 * widths[edge // 2]


def test_hysteresis_branches_and_unstable_trail():
    params = DuffingParams(beta=0.1, epsilon=1.5, omega_d=1.5)
    handle = ExactMap(params)
    grid = dict(omega_min=1.4, omega_max=3.0, samples=161, transient=500, keep=64, period_max=32)
    up = sweep(SweepConfig(**grid, seed=(0.0, 0.0)), handle)
    down = sweep(SweepConfig(**grid, direction="down", seed=(0.0, 0.0)), handle)

    up_jumps, down_jumps = branch_jumps(up, 0.3), branch_jumps(down, 0.3)
    assert up_jumps and down_jumps
    assert up_jumps[0] == pytest.approx(2.6, abs=0.1)
    assert down_jumps[0] == pytest.approx(1.8, abs=0.1)

    # The unstable point sits between the two coexisting stable ones.
    omega = 2.2
    upper = next(r for r in up if abs(r.omega - omega) < 1e-9).kept_points[-1]
    lower = next(r for r in down if abs(r.omega - omega) < 1e-9).kept_points[-1]
    guess = 0.5 * (upper + lower)
    omegas = np.linspace(1.6, 2.8, 121)
    start = int(np.argmin(np.abs(omegas - omega)))
    trail = trail_both_ways(omegas, start, 1, guess, handle)
    unstable = [r for r in trail if not r.stable]
    assert min(r.omega for r in unstable) <= down_jumps[0] + 0.1
    assert max(r.omega for r in unstable) >= up_jumps[0] - 0.1


def test_expansion_point_is_unstable_fixed_point(study_params):
    result = newton_fixed_point(ExactMap(study_params), 1, STUDY_POINT, 1.285)
    assert result.converged
    assert result.location == pytest.approx(STUDY_POINT, abs=5e-4)
    assert result.residual <= 1e-10
    assert not result.stable


def test_study_map_coefficients_converge_in_step_count(study_params):
    system = duffing_system(study_params, 8)
    assert order_refine_check(system, STUDY_POINT, 0.0, system.period, 8, 2048, relative=True) <= 2e-6


def test_period_two_cycle(study_params):
    handle = ExactMap(study_params)
    omega = 1.275
    settled = iterate(handle, *STUDY_POINT, omega, 3000, 10)
    assert not settled.escaped
    result = newton_fixed_point(handle, 2, settled.last, omega)
    assert result.converged
    assert result.residual <= 1e-10
    assert result.stable

    first, second = cycle_orbit(handle, result.location, 2, omega)
    assert np.hypot(first[0] - second[0], first[1] - second[1]) > 1e-3
    assert handle.apply(*second, omega) == pytest.approx(first, abs=1e-8)

    partner = newton_fixed_point(handle, 2, second, omega)
    assert partner.converged
    assert partner.location == pytest.approx(second, abs=1e-8)

    orbit = iterate(handle, *result.location, omega, 0, 10)
    assert detect_period(orbit.points, max_period=2) == 2


def test_exact_and_taylor_sweeps_agree_on_periods(study_params, study_maps):
    cfg = SweepConfig(omega_min=1.25, omega_max=1.295, samples=91, transient=2000, keep=256, seed=STUDY_POINT)
    exact = sweep(cfg, ExactMap(study_params))
    taylor = sweep(cfg, TaylorMap(study_maps[8]))
    same = sum(a.period == b.period for a, b in zip(exact, taylor))
    assert same >= 0.9 * len(exact)


def test_continuation_and_fixed_seed_agree_on_shared_branches(study_params):
    handle = ExactMap(study_params)
    grid = dict(omega_min=1.25, omega_max=1.29, samples=20, transient=2000, keep=64, seed=STUDY_POINT)
    chained = sweep(SweepConfig(**grid), handle)
    seeded = sweep(SweepConfig(**grid, seed_mode="fixed_seed"), handle)
    shared = 0
    for a, b in zip(chained, seeded):
        if a.escaped or b.escaped:
            continue
        if np.min(np.hypot(*(b.kept_points - a.kept_points[-1]).T)) > 1e-4:
            continue
        shared += 1
        assert a.period == b.period
    assert shared >= 5


def test_weak_drive_resonance_curve():
    handle = ExactMap(DuffingParams(beta=0.1, epsilon=0.15, omega_d=1.0))
    cfg = SweepConfig(omega_min=0.2, omega_max=2.0, samples=200, transient=1000, keep=64,
                      seed=(0.0, 0.0), period_max=8)
    records = sweep(cfg, handle)
    assert all(r.period == 1 for r in records)
    peak = max(records, key=lambda r: abs(r.mean_q))
    assert 0.8 <= peak.omega <= 1.3
