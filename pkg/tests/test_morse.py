import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from marchenko import morse
from marchenko.errors import BranchAmbiguity, DomainError, NonConvergence

from .conftest import delta_oracle, s_oracle

S0_SQ = 6 * np.exp(10 / 3)
A0_REF = -4312.06224


def test_model_defaults_and_derived_quantities(model):
    assert model.a == pytest.approx(1.5, abs=1e-15)
    assert model.y0 == pytest.approx(3 * np.exp(5 / 3), rel=1e-15)
    assert model.n_bound == 1


@pytest.mark.parametrize("bad", [dict(D=0.0), dict(alpha=-1.0), dict(Re=float("nan")), dict(C=-2.0)])
def test_model_validation(bad):
    with pytest.raises(DomainError):
        morse.MorseModel(**bad)


def test_potential_minimum_and_shape(model):
    assert morse.morse_eval(model, model.Re) == pytest.approx(-1.0, abs=1e-15)
    r = np.linspace(0.5, 10, 200)
    assert np.all(morse.morse_eval(model, r) >= -1.0 - 1e-15)


def test_levels_follow_quantisation(model):
    (lv,) = model.levels
    assert lv.energy == pytest.approx(-4 / 9, abs=1e-15)
    assert lv.gamma == pytest.approx(2 / 3, abs=1e-15)
    deep = morse.MorseModel(alpha=0.1)
    for lv in deep.levels:
        assert lv.energy == -(1 - (lv.n + 0.5) / deep.a) ** 2
    assert len(deep.levels) == 10


def test_ne2_parameters_give_published_ground_level():
    ne2 = morse.ne2_model()
    assert ne2.levels[0].energy == pytest.approx(-0.5716, abs=5e-5)
    # with a = 1/0.4879 the quantisation formula admits a second, shallow level
    assert ne2.n_bound == 2


def test_norming_constant_closed_forms(model):
    leading, full = morse.norming_constant(model)
    assert leading == pytest.approx(S0_SQ, rel=1e-14)
    assert full == pytest.approx(morse.norming_constant_closed_form(model), rel=1e-12)


def test_norming_constant_against_jost_normalisation(model):
    # Jost solution tends to exp(-gamma r); s^2 = 1 / int_0^inf f^2 dr
    s = model.a - 0.5
    f = lambda r: morse.bound_wavefunction(model, r) / model.y0 ** s
    integral = quad(lambda r: f(r) ** 2, 0, 80, limit=200, epsabs=1e-14, epsrel=1e-13)[0]
    assert morse.norming_constant(model)[1] == pytest.approx(1 / integral, rel=1e-10)
    r = 40.0
    assert f(r) == pytest.approx(np.exp(-model.levels[0].gamma * r), rel=1e-8)


def test_s_series_trivial_and_oracle(model):
    assert morse.s_series(model, 0.7, 0.0).value == 1.0
    for k in (1.0, 0.01, 3.0, 40.0):
        got = morse.s_series(model, k, model.y0).value
        ref = s_oracle(model, k, model.y0)
        assert abs(got - ref) < 1e-13


def test_s_series_tends_to_one_as_y_vanishes(model):
    vals = [abs(morse.s_series(model, 0.8, y).value - 1) for y in (1e-2, 1e-4, 1e-6)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-5


def test_low_energy_form_matches_full_series(model):
    k = 1e-8 * model.alpha
    lo = morse.s_series_low_energy(model, k, model.y0)
    full = morse.s_series(model, k, model.y0)
    ref = s_oracle(model, k, model.y0)
    assert abs(lo.value - ref) < 1e-14
    assert abs(lo.magnitude - full.magnitude) < 1e-12
    assert abs(lo.argument - full.argument) < 1e-12
    assert morse.s_series_low_energy(model, k, 0.0).value == 1.0
    with pytest.raises(DomainError):
        morse.s_series_low_energy(model, 1e-3, model.y0)


def test_low_energy_closed_form_for_a_three_halves(model):
    # a = 3/2: exp(-y/2){1 - y + i beta y [3 - sum m!/((m+2)!)^2 y^(m+1)]}
    beta, y = 1e-8, 7.3
    from math import factorial
    tail = sum(factorial(m) / factorial(m + 2) ** 2 * y ** (m + 1) for m in range(80))
    ref = np.exp(-y / 2) * (1 - y + 1j * beta * y * (3 - tail))
    got = morse.s_series_low_energy(model, beta * model.alpha, y).value
    assert abs(got - ref) < 1e-15


def test_low_energy_argument_scales_linearly(model):
    # S(beta=0) is real and negative, so measure the phase relative to pi
    args = [np.pi - abs(morse.s_series_low_energy(model, b * model.alpha, model.y0).argument)
            for b in (1e-8, 1e-9, 1e-10)]
    assert args[0] / args[1] == pytest.approx(10, rel=1e-6)
    assert args[1] / args[2] == pytest.approx(10, rel=1e-6)


@pytest.mark.parametrize("k", [1e-9, 1e-6, 1e-4, 2.3e-4, 1e-3, 0.05, 0.5, 2.0, 10.0, 99.0])
def test_phase_shift_against_oracle(model, k):
    assert abs(morse.wrap_pi(morse.phase_shift_series(model, k) - delta_oracle(model, k))) < 1e-12


def test_phase_shift_limits(model):
    a1 = morse.high_k_coefficients(model)[0]
    assert morse.phase_shift_series(model, 100.0) == pytest.approx(a1 / 100, rel=1e-3)
    for k in (1e-9, 1e-8, 1e-7):
        d = morse.phase_shift_series(model, k)
        assert abs(morse.wrap_pi(d - (np.pi - np.arctan(k * A0_REF)))) < 1e-8 * max(1, k * 1e6)


def test_asymptotic_route_near_its_optimum(model):
    for k in (0.2, 0.3, 0.5):
        d, err = morse.asymptotic_phase(model, k)
        diff = abs(morse.wrap_pi(d - morse.phase_shift_series(model, k)))
        assert diff < 1e-6 and diff <= 2 * err


def test_asymptotic_route_limits(model):
    with pytest.raises(NonConvergence):
        morse.phase_shift_asymptotic(model, 5.0)
    with pytest.raises(NonConvergence):
        morse.phase_shift_asymptotic(model, 0.3, tol=1e-9)
    with pytest.raises(DomainError):
        morse.asymptotic_phase(morse.MorseModel(alpha=0.5), 1.0)


def test_asymptotic_route_other_integer_parameter():
    m = morse.MorseModel(D=2.5 ** 2 * 0.36, alpha=0.6, Re=3.0)  # a = 5/2, N = 2
    d, err = morse.asymptotic_phase(m, 0.4)
    assert abs(morse.wrap_pi(d - delta_oracle(m, 0.4))) < max(5 * err, 1e-9)


def test_phase_table_levinson_and_limits(model):
    table = morse.phase_table(model)
    assert len(table) == 705
    assert table.delta[0] == pytest.approx(np.pi, abs=1e-5)
    assert table.delta[-1] == pytest.approx(morse.phase_shift_series(model, 100.0), abs=1e-14)
    assert table.method[0] == "low_energy" and table.method[-1] == "series"
    # delta(k_min) - delta(k_max) - pi equals -k_min a0 - delta(100) up to higher orders
    expected = -1e-9 * A0_REF - table.delta[-1]
    assert table.levinson_residual == pytest.approx(expected, rel=1e-4)
    entries = table.entries
    assert entries[0][2] == "low_energy" and len(entries) == len(table)


def test_phase_table_is_order_independent(model):
    grid = morse.log_grid(1e-9, 100.0, 16)
    a = morse.phase_table(model, grid)
    b = morse.phase_table(model, grid[::-1])
    assert np.array_equal(a.delta, b.delta) and np.array_equal(a.k, b.k)


def test_phase_table_rejects_coarse_grid(model):
    with pytest.raises(BranchAmbiguity):
        morse.phase_table(model, [0.1, 1.0])
    with pytest.raises(DomainError):
        morse.phase_table(model, [0.0, 1.0])


def test_wavefunction_regular_and_asymptotic(model):
    for k in (1e-3, 0.5, 7.0):
        assert abs(morse.scattering_wavefunction(model, k, 0.0)) < 1e-10
        r = np.array([300.0, 310.5])
        psi = morse.scattering_wavefunction(model, k, r)
        d = morse.phase_shift_series(model, k)
        assert np.max(np.abs(psi - np.sin(k * r + d))) < 1e-8


def test_wavefunction_linear_at_tiny_k(model):
    k = 1e-9
    r = np.linspace(60.0, 600.0, 30)
    psi = morse.scattering_wavefunction(model, k, r)
    line = -k * (r - A0_REF)
    assert np.max(np.abs(psi / line - 1)) < 1e-6


def test_scattering_length_routes_agree(model):
    fit = morse.scattering_length(model)
    low = morse.scattering_length_low_energy(model)
    wave = morse.scattering_length_from_wavefunction(model)
    assert fit == pytest.approx(A0_REF, rel=1e-5)
    assert low == pytest.approx(fit, rel=1e-5)
    assert wave == pytest.approx(fit, rel=1e-5)


def test_scattering_length_without_near_threshold_state():
    m = morse.MorseModel(alpha=1.2)
    assert m.n_bound == 1
    assert 0.5 < abs(morse.scattering_length(m)) < 50


def test_high_k_coefficients(model):
    a1, a3, a5 = morse.high_k_coefficients(model)
    assert a1 == pytest.approx(-0.5 * (0.75 * np.exp(10 / 3) - 3 * np.exp(5 / 3)), rel=1e-14)
    numeric = quad(lambda r: morse.morse_eval(model, r), 0, 200, limit=200)[0]
    assert a1 == pytest.approx(-numeric / 2, rel=1e-10)
    assert a1 < 0
    k = np.linspace(50, 100, 11)
    d = morse.phase_shifts(model, k)
    assert np.max(np.abs(a1 / k + a3 / k ** 3 + a5 / k ** 5 - d) / np.abs(d)) < 1e-8


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 80.0), st.floats(0.0, 15.0))
def test_s_series_modulus_matches_oracle_property(k, y):
    m = morse.MorseModel()
    got = morse.s_series(m, k, y).value
    assert abs(got - s_oracle(m, k, y)) < 1e-12 * max(1.0, abs(got))
