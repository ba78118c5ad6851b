import numpy as np
import pytest
from scipy.integrate import quad

from blowlab.grid import (Field, Grid, WeightOverflowError, WeightSpec,
                          cutoff_indicator, l2_inner, trapezoid_weights,
                          weighted_sup_norm)


def test_grid_nodes_symmetric_with_exact_origin():
    g = Grid(12.0, 241)
    assert g.nodes[g.center_index] == 0.0
    np.testing.assert_allclose(g.nodes, -g.nodes[::-1], atol=1e-14)
    assert g.spacing == pytest.approx(0.1)
    assert g.nodes[0] == -12.0 and g.nodes[-1] == 12.0


def test_grid_rejects_bad_shapes():
    with pytest.raises(ValueError):
        Grid(12.0, 240)  # even point count
    with pytest.raises(ValueError):
        Grid(5.0, 241)  # below the minimum half width


def test_index_of_roundtrip_and_range_check():
    g = Grid(10.0, 101)
    for i in (0, 17, 50, 100):
        assert g.index_of(g.nodes[i]) == i
    with pytest.raises(ValueError):
        g.index_of(10.4)


def test_refined_grid_contains_parent_nodes():
    g = Grid(10.0, 101)
    r = g.refined()
    assert r.spacing == pytest.approx(g.spacing / 2.0)
    np.testing.assert_allclose(r.nodes[::2], g.nodes, atol=1e-14)


def test_field_validation():
    g = Grid(10.0, 101)
    with pytest.raises(ValueError):
        Field(g, np.zeros(100))
    with pytest.raises(ValueError):
        Field(g, np.full(101, np.nan))
    with pytest.raises(ValueError):
        Field(g, np.zeros(101), parity="sideways")


def test_parity_defect_and_symmetrization():
    g = Grid(10.0, 101)
    even = Field(g, np.exp(-g.nodes**2), parity="even")
    assert even.parity_defect() < 1e-13

    skew = Field(g, np.exp(-g.nodes**2) + 1e-3 * g.nodes, parity="even")
    assert skew.parity_defect() > 0.0
    fixed = skew.symmetrized()
    assert fixed.parity == "even"
    assert fixed.parity_defect() == 0.0
    np.testing.assert_allclose(fixed.values, np.exp(-g.nodes**2), atol=1e-14)

    odd = Field(g, g.nodes + 0.5, parity="odd").symmetrized()
    np.testing.assert_allclose(odd.values, g.nodes, atol=1e-14)


def test_weight_spec_closed_form():
    g = Grid(10.0, 101)
    w = WeightSpec(poly_power=3, gauss_coeff=0.1).values_on(g)
    y = g.nodes
    np.testing.assert_allclose(
        w, (1.0 + y * y) ** -1.5 * np.exp(0.025 * y * y), rtol=1e-14)
    with pytest.raises(ValueError):
        WeightSpec(poly_power=5)


def test_weight_overflow_is_a_hard_error():
    g = Grid(60.0, 121)
    spec = WeightSpec(poly_power=0, gauss_coeff=1.0)  # exp(900) at the edge
    with pytest.raises(WeightOverflowError):
        spec.values_on(g)
    with pytest.raises(WeightOverflowError):
        weighted_sup_norm(Field(g, np.ones(121)), spec)


def test_weighted_sup_norm_attains_known_maximum():
    g = Grid(10.0, 401)
    f = Field(g, 1.0 + g.nodes**2)
    # weight (1+y^2)^{-2} times (1+y^2) peaks at the origin with value 1
    assert weighted_sup_norm(f, WeightSpec(poly_power=4)) == pytest.approx(1.0)


def test_l2_inner_matches_quadrature():
    g = Grid(10.0, 801)
    f = Field(g, np.exp(-g.nodes**2 / 2.0))
    h = Field(g, np.exp(-g.nodes**2 / 3.0))
    exact = quad(lambda y: np.exp(-5.0 * y * y / 6.0), -10.0, 10.0)[0]
    assert l2_inner(f, h) == pytest.approx(exact, rel=1e-12)
    with pytest.raises(ValueError):
        l2_inner(f, Field(Grid(10.0, 101), np.zeros(101)))


def test_trapezoid_weights_integrate_constants():
    g = Grid(10.0, 101)
    assert trapezoid_weights(g).sum() == pytest.approx(2.0 * g.half_width)


def test_cutoff_indicator_ties_count_as_outside():
    g = Grid(10.0, 101)  # nodes at multiples of 0.2
    ind = cutoff_indicator(g, 5.0)
    assert ind[g.index_of(5.0)] == 1.0
    assert ind[g.index_of(4.8)] == 0.0
    assert ind[g.index_of(-5.2)] == 1.0
    with pytest.raises(ValueError):
        cutoff_indicator(g, -1.0)
