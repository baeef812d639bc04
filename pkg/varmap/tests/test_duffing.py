from math import pi

import numpy as np
import pytest
from pydantic import ValidationError

from app.duffing import (
    DuffingParams,
    ExpansionPoint,
    duffing_forcing,
    duffing_forcing_normalized,
    duffing_rhs,
    duffing_system,
    drive_table,
    rk4_flow,
)
from app.poly import get_basis
from conftest import build_map


def test_defaults_are_the_study_settings():
    params = DuffingParams()
    assert (params.beta, params.epsilon, params.omega_d) == (0.1, 25.0, 1.285)
    assert params.period == pytest.approx(2 * pi / 1.285)
    assert params.psi == pytest.approx(pi / 2)
    point = ExpansionPoint()
    assert tuple(point.as_array()) == (1.26082, 2.05452, 1.285)


@pytest.mark.parametrize("kwargs", [{"beta": -0.1}, {"omega_d": 0.0}, {"epsilon": float("nan")}])
def test_params_validation(kwargs):
    with pytest.raises(ValidationError):
        DuffingParams(**kwargs)


def test_params_are_frozen():
    params = DuffingParams()
    with pytest.raises(ValidationError):
        params.beta = 0.2


def test_drive_vanishes_at_strobe_times(study_params):
    for k in range(3):
        rhs = duffing_rhs((1.0, 0.0), k * study_params.period, study_params)
        assert rhs == pytest.approx([0.0, -2.0], abs=1e-12)


@pytest.mark.parametrize("forcing", [duffing_forcing, duffing_forcing_normalized])
def test_forcing_has_no_constant_terms(study_params, forcing):
    terms = forcing((1.2, -0.4), 0.9, study_params, 5)
    assert len(terms) == 3
    for g in terms:
        assert g.coeffs[0] == 0.0
    assert np.all(terms[2].coeffs == 0.0)


def test_fixed_forcing_coefficients(study_params):
    basis = get_basis(3, 4)
    g1, g2, _ = duffing_forcing((1.0, 0.5), 0.0, study_params, 4)
    assert g1.terms() == {(0, 1, 0): 1.0}
    assert g2.coeffs[basis.index_of((1, 0, 0))] == pytest.approx(-4.0)
    assert g2.coeffs[basis.index_of((0, 1, 0))] == pytest.approx(-0.2)
    assert g2.coeffs[basis.index_of((2, 0, 0))] == pytest.approx(-3.0)
    assert g2.coeffs[basis.index_of((3, 0, 0))] == pytest.approx(-1.0)
    # tau = 0 kills every drive derivative
    drive = g2.coeffs[[basis.index_of((0, 0, k)) for k in range(1, 5)]]
    assert np.allclose(drive, 0.0, atol=1e-12)


def test_drive_series_last_term_is_negligible_at_window_edge(study_params):
    n = 8
    period = study_params.period
    edge = 0.1 / period
    basis = get_basis(3, n)
    last = basis.index_of((0, 0, n))
    largest = 0.0
    for tau in np.linspace(0.0, period, 65):
        _, g2, _ = duffing_forcing((1.26082, 2.05452), tau, study_params, n)
        largest = max(largest, abs(g2.coeffs[last]) * edge ** n)
    assert 0.0 < largest < 1e-10


def test_system_rejects_unknown_time_base(study_params):
    with pytest.raises(ValueError):
        duffing_system(study_params, 3, "stretched")
    with pytest.raises(ValueError):
        duffing_system(study_params, 0)


def test_system_spans_one_period(study_params):
    assert duffing_system(study_params, 2, "normalized").period == pytest.approx(2 * pi)
    assert duffing_system(study_params, 2, "fixed").period == pytest.approx(study_params.period)


def test_time_bases_agree_without_frequency_shift(mild_params):
    normalized = build_map(mild_params, 3, 256, z0=(0.5, 0.0), time_base="normalized")
    fixed = build_map(mild_params, 3, 256, z0=(0.5, 0.0), time_base="fixed")
    plane = normalized.basis.exponents[:, 2] == 0
    assert np.allclose(normalized.coefficient_matrix()[:2, plane], fixed.coefficient_matrix()[:2, plane],
                       rtol=1e-9, atol=1e-10)
    assert normalized.final_point[:2] == pytest.approx(fixed.final_point[:2], abs=1e-10)
    # only the frequency derivatives differ
    assert not np.allclose(normalized.coefficient_matrix()[:2, ~plane], fixed.coefficient_matrix()[:2, ~plane])


def test_drive_table_nodes():
    table = drive_table(25.0, 1.285, 2 * pi / 1.285, 10)
    assert table.shape == (21,)
    assert table[0] == 0.0
    assert table[-1] == pytest.approx(0.0, abs=1e-12)
    assert table[5] == pytest.approx(25.0 * np.sin(pi / 2), rel=1e-12)


def _python_rk4(params, q, p, duration, steps):
    h = duration / steps
    z = np.array([q, p])
    for i in range(steps):
        t = i * h
        k1 = duffing_rhs(z, t, params)
        k2 = duffing_rhs(z + 0.5 * h * k1, t + 0.5 * h, params)
        k3 = duffing_rhs(z + 0.5 * h * k2, t + 0.5 * h, params)
        k4 = duffing_rhs(z + h * k3, t + h, params)
        z = z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return z


def test_rk4_flow_matches_reference_stepper(study_params):
    steps = 50
    duration = study_params.period
    table = drive_table(study_params.epsilon, study_params.omega_d, duration, steps)
    q, p = rk4_flow(1.26082, 2.05452, study_params.beta, table, duration, steps)
    assert (q, p) == pytest.approx(tuple(_python_rk4(study_params, 1.26082, 2.05452, duration, steps)), rel=1e-10)
