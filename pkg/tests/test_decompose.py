import numpy as np
import pytest

from blowlab.decompose import (MajorantTracker, beta_closed_form,
                               compute_gammas, evaluate_nonlinearity,
                               kappa_exponent, nonlinearity_bound_margin,
                               solve_g)
from blowlab.grid import Field, Grid
from blowlab.spectral import ProfileParams, gauge_profile

P = 3.0


def test_splitting_recovers_exact_profiles_at_nondefault_gauge():
    g = Grid(20.0, 1001)
    a0, b0, l = 0.52, 0.07, 3.0
    v = gauge_profile(g, ProfileParams(P, a0, b0, gauge_l=l))
    out = solve_g(v, P, initial=(0.5, 0.05), gauge_l=l)
    assert out.params.a == pytest.approx(a0, abs=1e-12)
    assert out.params.b == pytest.approx(b0, abs=1e-12)
    assert out.g_norm < 1e-12
    assert np.abs(out.fluctuation.values).max() < 1e-10
    assert max(abs(r) for r in out.ortho_residuals) < 1e-10


def test_splitting_is_locally_quadratic():
    # perturbing the data by eps moves the fitted parameters by O(eps),
    # and the fit terminates in a handful of Newton steps
    g = Grid(20.0, 1001)
    v = gauge_profile(g, ProfileParams(P, 0.5, 0.05))
    bump = 1e-4 * g.nodes**2 * np.exp(-g.nodes**2 / 9.0)
    out = solve_g(v.with_values(v.values + bump), P)
    assert out.iterations <= 8
    assert abs(out.params.a - 0.5) < 5e-3
    assert abs(out.params.b - 0.05) < 5e-3


def test_kappa_exponent_branches():
    assert kappa_exponent(3.0) == pytest.approx(0.5)
    assert kappa_exponent(2.0) == pytest.approx(0.5)
    assert kappa_exponent(1.5) == pytest.approx(0.25)


def test_beta_closed_form_solves_its_ode():
    b0 = 0.05
    tau = np.linspace(0.0, 40.0, 4001)
    beta = beta_closed_form(tau, b0, P)
    assert beta[0] == pytest.approx(b0, rel=1e-15)
    # d(beta)/dtau = -(4p/(p-1)^2) beta^2
    deriv = np.gradient(beta, tau[1] - tau[0], edge_order=2)
    target = -4.0 * P / (P - 1.0) ** 2 * beta**2
    assert np.abs(deriv - target).max() < 1e-6
    # monotone decay toward zero
    assert np.all(np.diff(beta) < 0.0)


def test_majorant_tracker_oracle_values():
    p, b0, c_d = 3.0, 0.04, 1.0
    g = Grid(10.0, 201)
    y = g.nodes

    tracker = MajorantTracker(p, b0, c_d=c_d)
    beta = float(beta_closed_form(0.0, b0, p))
    radius = c_d / np.sqrt(beta)  # 5.0 at tau = 0
    kappa = kappa_exponent(p)

    # difference built to hit m1 = 0.7 with nothing outside the cutoff
    diff = 0.7 * beta**2 * (1.0 + y * y) ** 1.5 * (np.abs(y) < radius)
    params = ProfileParams(p,
                           0.5 - 2.0 * (beta + 0.25 * beta ** (1.0 + kappa)) / (p - 1.0)
                           + 1.5 * beta**2,
                           beta + 0.25 * beta ** (1.0 + kappa))
    tracker.observe(0.0, params, Field(g, diff))
    s = tracker.series()
    assert s.m1[-1] == pytest.approx(0.7, rel=1e-12)
    assert s.m2[-1] == 0.0
    assert s.a_dev[-1] == pytest.approx(1.5, rel=1e-12)
    assert s.b_dev[-1] == pytest.approx(0.25, rel=1e-12)
    assert s.cutoff_radius[-1] == pytest.approx(radius, rel=1e-12)

    # exterior mass is picked up by m2; the same tail also feeds the
    # weighted seminorm, peaking at the innermost support node y = 5
    tail = 0.3 * (np.abs(y) >= radius)
    tracker.observe(1.0, params, Field(g, tail))
    s = tracker.series()
    beta1 = float(beta_closed_form(1.0, b0, p))
    assert s.m2[-1] == pytest.approx(0.3, rel=1e-12)
    expected_m1 = max(0.7, 0.3 * 26.0**-1.5 / beta1**2)
    assert s.m1[-1] == pytest.approx(expected_m1, rel=1e-12)
    assert s.tau.shape == (2,)

    with pytest.raises(ValueError):
        MajorantTracker(p, b0, c_d=0.0)
    with pytest.raises(ValueError):
        MajorantTracker(p, b0).series()


def test_effective_rhs_on_polynomial_histories():
    # degree <= 2 histories pass through the smoothing derivative exactly,
    # so every output column has a closed form
    l = 2.0
    tau = np.linspace(0.0, 2.0, 41)
    b = 0.05 - 1e-3 * tau
    c = 0.48 + 5e-4 * tau
    a = l * c + (1.0 - l) / 2.0
    out = compute_gammas(tau, a, b, c, P, gauge_l=l)

    q = P - 1.0
    b_t, c_t = -1e-3, 5e-4
    np.testing.assert_allclose(out.b_tau, b_t, rtol=1e-9)
    np.testing.assert_allclose(out.c_tau, c_t, rtol=1e-9)
    np.testing.assert_allclose(out.a_tau, l * c_t, rtol=1e-9)
    np.testing.assert_allclose(
        out.gamma0, -c_t / c + 2.0 * (c - a) - 2.0 * b / q, atol=1e-12)
    np.testing.assert_allclose(
        out.gamma1,
        (b_t - 2.0 * b * (c - a) + 2.0 * (3.0 * P - 1.0) * b**2 / q**2) / (a * q),
        atol=1e-12)
    np.testing.assert_allclose(
        out.r_b, b_t + 2.0 * (3.0 * P - 1.0) * b**2 / q**2 - 2.0 * b * (c - a),
        atol=1e-12)
    np.testing.assert_allclose(
        out.r_c, c_t / c - 2.0 * (c - a) + 2.0 * b / q, atol=1e-12)


def test_effective_rhs_input_validation():
    tau = np.array([0.0, 0.1, 0.25, 0.3, 0.4, 0.5])  # nonuniform
    ones = np.ones_like(tau)
    with pytest.raises(ValueError):
        compute_gammas(tau, ones, ones, ones, P)
    tau = np.linspace(0.0, 1.0, 6)
    with pytest.raises(ZeroDivisionError):
        compute_gammas(tau, 0.0 * ones, ones, ones, P)


def test_nonlinearity_is_quadratic_at_small_amplitude():
    g = Grid(10.0, 401)
    params = ProfileParams(P, 0.5, 0.05)
    shape = np.exp(-g.nodes**2 / 2.0)

    def peak(eps):
        xi = Field(g, eps * shape, parity="even")
        return np.abs(evaluate_nonlinearity(xi, params).values).max()

    ratio = peak(1e-3) / peak(5e-4)
    assert ratio == pytest.approx(4.0, rel=0.02)


def test_nonlinearity_envelope_margin_is_of_order_one():
    g = Grid(10.0, 401)
    params = ProfileParams(P, 0.5, 0.05)
    xi = Field(g, 0.05 * np.exp(-g.nodes**2 / 2.0), parity="even")
    margin = nonlinearity_bound_margin(xi, params)
    assert 0.0 < margin < P + 3.0
