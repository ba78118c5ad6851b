import numpy as np
import pytest

from blowlab.grid import Field, Grid, l2_inner
from blowlab.spectral import (ProfileParams, algebraic_profile,
                              check_eigen_bounds, flat_profile, gauge_profile,
                              hermite_mode, profile_db_derivatives,
                              project_low_modes, project_orthogonal,
                              refined_eigenvalues)

P = 3.0


def test_profile_params_gauge_relation():
    pp = ProfileParams(P, 0.5, 0.05, gauge_l=2.0)
    # a = l c + (1 - l)/2 inverted for c
    assert pp.a == pytest.approx(2.0 * pp.c - 0.5, abs=1e-15)
    assert pp.gauge_residual() == pytest.approx(0.0, abs=1e-15)
    assert pp.in_window
    assert not ProfileParams(P, 5.0, 0.05).in_window


def test_algebraic_profile_closed_form():
    g = Grid(10.0, 401)
    pp = ProfileParams(P, 0.5, 0.05)
    v = gauge_profile(g, pp)
    expect = (2.0 * pp.c / (P - 1.0 + pp.b * g.nodes**2)) ** (1.0 / (P - 1.0))
    np.testing.assert_allclose(v.values, expect, rtol=1e-14)
    assert v.parity == "even"
    # peak value at the origin
    assert v.values[g.center_index] == pytest.approx(np.sqrt(pp.c), rel=1e-14)
    free = algebraic_profile(g, P, pp.c, pp.b)
    np.testing.assert_allclose(free.values, v.values, rtol=1e-14)
    with pytest.raises(ValueError):
        algebraic_profile(g, P, 0.5, -0.01)


def test_algebraic_profile_solves_its_pointwise_equation():
    # a y f' + 2a f/(p-1) = f^p for every member of the family
    g = Grid(10.0, 2001)
    a, b = 0.45, 0.08
    f = algebraic_profile(g, P, a, b).values
    fp = np.gradient(f, g.spacing, edge_order=2)
    lhs = a * g.nodes * fp + 2.0 * a * f / (P - 1.0)
    assert np.abs(lhs - f**P).max() < 1e-5
    # flat member closes the family at b = 0
    flat = algebraic_profile(g, P, a, 0.0).values
    np.testing.assert_allclose(flat, flat_profile(P, a), rtol=1e-14)


def test_hermite_modes_are_l2_orthonormal():
    g = Grid(14.0, 2801)
    a = 0.5
    modes = [hermite_mode(g, n, a) for n in range(4)]
    for m in range(4):
        for n in range(4):
            want = 1.0 if m == n else 0.0
            assert l2_inner(modes[m], modes[n]) == pytest.approx(want, abs=1e-9)
    with pytest.raises(ValueError):
        hermite_mode(g, 4, a)
    with pytest.raises(ValueError):
        hermite_mode(g, 0, -1.0)


def test_oscillator_spectra_match_closed_forms():
    g = Grid(14.0, 1401)
    a = 0.5
    eig = refined_eigenvalues(g, "oscillator", 4, a=a)
    np.testing.assert_allclose(eig, a * np.arange(4), atol=1e-7)
    alpha = 0.5
    eig = refined_eigenvalues(g, "oscillator_shifted", 5, alpha=alpha)
    np.testing.assert_allclose(eig, alpha * (np.arange(5) - 2.0), atol=1e-7)


def test_eigen_bounds_hold_with_positive_margins():
    g = Grid(14.0, 1401)
    out = check_eigen_bounds(g, P, a=0.5, c=0.5, b=0.05, count=6)
    assert out["passed"]
    assert out["lower_margin"].min() > 0.0 and out["upper_margin"].min() > 0.0
    lam = out["eigenvalues"]
    n = np.arange(6)
    a, c = 0.5, 0.5
    low = n * a + 2.0 * (a - P * c) / (P - 1.0)
    high = n * a + 2.0 * a / (P - 1.0)
    assert np.all(lam >= low - 1e-5) and np.all(lam <= high + 1e-5)


def test_profile_derivatives_match_finite_differences():
    g = Grid(10.0, 401)
    pp = ProfileParams(P, 0.5, 0.05)
    d_da, d_db = profile_db_derivatives(g, pp)
    eps = 1e-6

    def vals(a, b):
        return gauge_profile(g, ProfileParams(P, a, b, pp.gauge_l)).values

    fd_a = (vals(pp.a + eps, pp.b) - vals(pp.a - eps, pp.b)) / (2.0 * eps)
    fd_b = (vals(pp.a, pp.b + eps) - vals(pp.a, pp.b - eps)) / (2.0 * eps)
    np.testing.assert_allclose(d_da, fd_a, atol=1e-8)
    np.testing.assert_allclose(d_db, fd_b, atol=1e-8)


def test_projection_splits_and_annihilates():
    g = Grid(14.0, 1401)
    a = 0.5
    f = Field(g, np.exp(-g.nodes**2 / 3.0) * (1.0 + 0.3 * g.nodes**2))
    low = project_low_modes(g, a, f)
    orth = project_orthogonal(g, a, f)
    np.testing.assert_allclose(low.values + orth.values, f.values, atol=1e-12)
    # the orthogonal part has no residual low-mode content
    again = project_low_modes(g, a, orth)
    assert np.abs(again.values).max() < 1e-10 * np.abs(f.values).max()
