import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from novipeak.errors import InvalidGrid
from novipeak.field import (GridField, PeakonConfig, e_density, energy_E, energy_pair_grid,
                            eval_field, eval_field_deriv, f_density, field_maximum,
                            functional_F, h1_distance, h1_inner_exact, hypothesis_norm,
                            momentum_total_variation, peakon, piecewise_quad, quad_nodes,
                            reconstruct_from_momentum, slope_l4_distance, train)

from conftest import configs


def _quad_functional(cfg, density):
    # adaptive quadrature between the kinks, independent of the package rules
    pts = np.sort(cfg.q)
    edges = np.r_[pts[0] - 60.0, pts, pts[-1] + 60.0]
    g = lambda x: density(eval_field(cfg, x), eval_field_deriv(cfg, x))
    return sum(quad(g, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
               for a, b in zip(edges[:-1], edges[1:]) if b > a)


def test_config_validation_and_algebra():
    a = PeakonConfig([0.0, 1.0], [1.0, 2.0])
    b = peakon(4.0, 3.0)
    assert (a + b).n == 3
    assert (a - a).p.tolist() == [1.0, 2.0, -1.0, -2.0]
    assert a.shifted(1.0).q.tolist() == [1.0, 2.0]
    assert a.scaled(2.0).p.tolist() == [2.0, 4.0]
    assert a == PeakonConfig([0, 1], [1, 2]) and hash(a) == hash(PeakonConfig([0, 1], [1, 2]))
    assert a.is_ordered_positive() and not PeakonConfig([1, 0], [1, 1]).is_ordered_positive()
    for bad in (([], []), ([0, 1], [1]), ([np.nan], [1])):
        with pytest.raises(ValueError):
            PeakonConfig(*bad)
    with pytest.raises(ValueError):
        peakon(-1.0)
    with pytest.raises(ValueError):
        a.q[0] = 5.0


def test_peakon_shape():
    cfg = peakon(4.0, 1.0)
    assert eval_field(cfg, 1.0) == 2.0
    assert eval_field_deriv(cfg, 1.0) == 0.0  # sgn(0) = 0
    assert eval_field_deriv(cfg, 2.0) == pytest.approx(-2.0 * np.exp(-1.0))
    assert eval_field(cfg, 0.0) == pytest.approx(2.0 * np.exp(-1.0))


@pytest.mark.parametrize("c", [0.25, 1.0, 4.0])
def test_peakon_functionals_closed_form(c):
    cfg = peakon(c, -0.7)
    assert energy_E(cfg) == pytest.approx(2 * c, rel=1e-14)
    assert functional_F(cfg) == pytest.approx(4 / 3 * c * c, rel=1e-13)


@given(configs())
def test_energy_matches_adaptive_quadrature(cfg):
    ref = _quad_functional(cfg, e_density)
    assert energy_E(cfg) == pytest.approx(ref, rel=1e-9, abs=1e-11)


@given(configs(max_n=3))
def test_functional_f_matches_adaptive_quadrature(cfg):
    ref = _quad_functional(cfg, f_density)
    assert functional_F(cfg) == pytest.approx(ref, rel=1e-9, abs=1e-10)


@given(configs(), configs())
def test_h1_inner_product_is_bilinear_and_symmetric(a, b):
    assert h1_inner_exact(a, b) == pytest.approx(h1_inner_exact(b, a), rel=1e-13, abs=1e-13)
    lhs = energy_E(a + b)
    rhs = energy_E(a) + energy_E(b) + 2 * h1_inner_exact(a, b)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


@given(configs(), configs(), configs())
def test_h1_distance_triangle_inequality(a, b, c):
    assert h1_distance(a, c) <= h1_distance(a, b) + h1_distance(b, c) + 1e-9


@given(configs(), st.floats(-3, 3))
def test_functionals_are_translation_invariant(cfg, s):
    assert energy_E(cfg.shifted(s)) == pytest.approx(energy_E(cfg), rel=1e-12, abs=1e-12)
    assert functional_F(cfg.shifted(s)) == pytest.approx(functional_F(cfg), rel=1e-9, abs=1e-10)


@given(configs(max_n=3), st.floats(-10, 10), st.floats(0.0, 15.0))
def test_piecewise_quad_is_additive(cfg, a, length):
    b = a + length
    whole = piecewise_quad(cfg, e_density, degree=2)
    parts = (piecewise_quad(cfg, e_density, degree=2, b=a)
             + piecewise_quad(cfg, e_density, degree=2, a=a, b=b)
             + piecewise_quad(cfg, e_density, degree=2, a=b))
    assert parts == pytest.approx(whole, rel=1e-11, abs=1e-12)


def test_piecewise_quad_weight_matches_scipy():
    cfg = PeakonConfig([-1.0, 2.0], [1.0, 0.5])
    w = lambda x: 1.0 / (1.0 + x * x)
    ours = piecewise_quad(cfg, e_density, weight=w)
    ref = _quad_functional(cfg, lambda u, ux: e_density(u, ux))  # sanity on the unweighted part
    assert ref > ours > 0
    g = lambda x: e_density(eval_field(cfg, x), eval_field_deriv(cfg, x)) * w(x)
    exact = sum(quad(g, lo, hi, epsabs=1e-14, limit=200)[0]
                for lo, hi in ((-45, -1), (-1, 2), (2, 45)))
    assert ours == pytest.approx(exact, rel=1e-11)


def test_quad_nodes_cover_interval():
    cfg = PeakonConfig([0.0, 30.0], [1.0, 1.0])
    x, w = quad_nodes(cfg, a=-5.0, b=40.0, panel=0.5)
    assert w.sum() == pytest.approx(45.0, rel=1e-13)
    assert x.min() > -5.0 and x.max() < 40.0
    assert quad_nodes(cfg, a=3.0, b=2.0)[0].size == 0


@given(configs(max_n=3), configs(max_n=3))
def test_slope_distance_against_quadrature(a, b):
    d = a - b
    ref = max(_quad_functional(d, lambda u, ux: ux ** 4), 0.0) ** 0.25
    assert slope_l4_distance(a, b) == pytest.approx(ref, rel=1e-8, abs=1e-9)
    assert hypothesis_norm(a, b) == pytest.approx(h1_distance(a, b) + slope_l4_distance(a, b))


@given(configs(max_n=4))
def test_field_maximum_beats_dense_sampling(cfg):
    x = np.linspace(cfg.q.min() - 10, cfg.q.max() + 10, 20001)
    xi, M = field_maximum(cfg)
    dense = eval_field(cfg, x).max()
    assert M >= dense - 1e-12
    if np.isfinite(xi):
        assert eval_field(cfg, xi) == pytest.approx(M, abs=1e-14)
        # |u_x| <= sum |p|, so sampling misses the top by at most that times the spacing
        assert M <= dense + np.abs(cfg.p).sum() * (x[1] - x[0])
    else:
        assert M == 0.0 and dense < 0


def test_field_maximum_on_subinterval():
    cfg = PeakonConfig([0.0, 10.0], [1.0, 2.0])
    xi, M = field_maximum(cfg, -np.inf, 5.0)
    assert xi == 0.0 and M == pytest.approx(1 + 2 * np.exp(-10))
    xi, M = field_maximum(cfg, 2.0, 4.0)
    assert xi == 2.0  # decreasing from the first peak until the valley


def test_field_maximum_interior_critical_point():
    # two negative peaks: the maximum is the valley between them
    cfg = PeakonConfig([0.0, 2.0], [-1.0, -1.0])
    xi, M = field_maximum(cfg, 0.0, 2.0)
    assert xi == pytest.approx(1.0)
    assert M == pytest.approx(-2 * np.exp(-1.0))


def test_train_and_momentum_reconstruction():
    R = train([1.0, 4.0], [0.0, 10.0])
    assert R.p.tolist() == [1.0, 2.0]
    cfg = reconstruct_from_momentum([(0.0, 2.0), (3.0, 1.0)])
    assert cfg.p.tolist() == [1.0, 0.5]
    assert momentum_total_variation(cfg) == pytest.approx(3.0)
    merged = PeakonConfig([1.0, 1.0], [1.0, -0.25])
    assert momentum_total_variation(merged) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        reconstruct_from_momentum([])


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 3)), min_size=1, max_size=6))
def test_nonnegative_momentum_bounds_slope(masses):
    cfg = reconstruct_from_momentum(masses)
    x = np.linspace(-15, 15, 3001)
    assert np.min(eval_field(cfg, x) - np.abs(eval_field_deriv(cfg, x))) >= -1e-12


def test_grid_field_validation_and_sampling():
    cfg = peakon(1.0)
    g = GridField.sample(cfg, -20.0, 0.01, 4000)
    assert g.N == 4000 and g.x[1] == pytest.approx(-19.99)
    pair = energy_pair_grid(g)
    # the kink node carries u_x = 0, an O(dx) error of the trapezoid sum
    assert pair.E == pytest.approx(2.0, abs=1.5 * g.dx)
    assert pair.F == pytest.approx(4 / 3, abs=2.0 * g.dx)
    assert GridField(0.0, 1.0, np.arange(10.0)).slope()[3] == pytest.approx(1.0)
    for args in ((0.0, 1.0, np.zeros(4)), (0.0, 0.0, np.zeros(10)),
                 (0.0, 1.0, np.zeros(10), np.zeros(9))):
        with pytest.raises(InvalidGrid):
            GridField(*args)
    with pytest.raises(InvalidGrid):
        energy_pair_grid(cfg)
