import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sl2lab import algebra
from sl2lab import gauge as Ga
from sl2lab.gauge import GaugeMap, GaugePair
from sl2lab.grid import DiscreteForm, Grid, coder, components, extder, pair, random_smooth


def one_form(g, fill=None):
    w = DiscreteForm.zeros(g, 1, "su2")
    if fill:
        for (i, val) in fill.items():
            w.data[i] = val
    return w


def sine_dy(g, amp=1.0):
    x = g.coords()[0]
    return one_form(g, {1: (amp * np.sin(2 * np.pi * x / g.L))[..., None] * algebra.TAU[0]})


def random_pair(g, seed, amp=0.5, kmax=1):
    rng = np.random.default_rng(seed)
    return GaugePair(random_smooth(g, 1, "su2", rng, kmax=kmax, amplitude=amp),
                     random_smooth(g, 1, "su2", rng, kmax=kmax, amplitude=amp))


def test_pair_validation():
    g = Grid(3, 4)
    with pytest.raises(ValueError):
        GaugePair(one_form(g), one_form(g), 0.5)
    with pytest.raises(ValueError):
        GaugePair(DiscreteForm.zeros(g, 1, "real"), one_form(g))


def test_curvature_zero():  # [TRIVIAL]
    g = Grid(3, 6)
    assert not np.any(Ga.curvature(one_form(g)).data)


def test_curvature_abelian_sine():  # [DERIVED] analytic oracle, O(h)
    errs = []
    for n in (16, 32):
        g = Grid(3, n, 2.0)
        F = Ga.curvature(sine_dy(g))
        x = g.coords()[0]
        exact = (2 * np.pi / g.L) * np.cos(2 * np.pi * x / g.L)
        c = components(3, 2).index((0, 1))
        errs.append(np.max(np.abs(F.data[c][..., 0] - exact)))
        assert np.max(np.abs(F.data[c][..., 1:])) == 0
    assert 1.7 < errs[0] / errs[1] < 2.3


def test_curvature_constant_bracket():  # [DERIVED] exact bracket
    g = Grid(3, 4)
    a = one_form(g, {0: algebra.TAU[0], 1: algebra.TAU[1]})
    F = Ga.curvature(a)
    c = components(3, 2).index((0, 1))
    np.testing.assert_allclose(F.data[c], np.broadcast_to(algebra.TAU[2], F.data[c].shape), atol=1e-15)
    others = [i for i in range(3) if i != c]
    assert not np.any(F.data[others])


@given(st.integers(0, 2**32 - 1))
def test_covariant_ops_reduce_when_flat(seed):  # [TRIVIAL]
    g = Grid(3, 6)
    rng = np.random.default_rng(seed)
    w = random_smooth(g, 1, "su2", rng)
    zero = one_form(g)
    np.testing.assert_array_equal(Ga.cov_d(zero, w).data, extder(w).data)
    np.testing.assert_array_equal(Ga.cov_dstar(zero, w).data, coder(w).data)


@given(st.integers(0, 2**32 - 1))
def test_covariant_adjointness(seed):  # [DERIVED] summation by parts with connection
    g = Grid(3, 6)
    rng = np.random.default_rng(seed)
    a = random_smooth(g, 1, "su2", rng)
    u = random_smooth(g, 1, "su2", rng)
    v = random_smooth(g, 2, "su2", rng)
    lhs = pair(Ga.cov_d(a, u), v)
    rhs = pair(u, Ga.cov_dstar(a, v))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_bianchi_defect_is_first_order():  # [DERIVED] refinement ratio
    out = []
    for n in (16, 32):
        g = Grid(3, n)
        a = random_pair(g, 3).a
        F = Ga.curvature(a)
        dF = Ga.cov_d(a, F)
        out.append(np.sqrt(pair(dF, dF) / pair(F, F)))
    assert 1.6 <= out[0] / out[1] <= 2.4


def test_big_f_trivial_cases():
    g = Grid(3, 6)
    assert Ga.big_f(GaugePair.zeros(g)) == 0.0  # [TRIVIAL]
    al = one_form(g, {0: 0.7 * algebra.TAU[0]})
    assert Ga.big_f(GaugePair(one_form(g), al)) == pytest.approx(0.0, abs=1e-25)  # [TRIVIAL]


def test_big_f_sine():  # [DERIVED] int |d alpha|^2 = (2pi/L)^2 L^3 / 2 times |tau_1|^2
    vals = []
    for n in (16, 32):
        g = Grid(3, n, 1.5)
        val = Ga.big_f(GaugePair(one_form(g), sine_dy(g)))
        exact = (2 * np.pi / g.L) ** 2 * g.L ** 3 / 2 * 0.5
        vals.append(abs(val - exact) / exact)
    assert vals[0] < 0.05 and vals[1] < vals[0]


def test_outer_tensor():
    g = Grid(3, 4)
    T = Ga.outer_tensor(one_form(g, {0: algebra.TAU[0]}))
    np.testing.assert_allclose(T[..., 0, 0, 0], np.diag([0.5, 0, 0]))  # [DERIVED]
    assert not np.any(Ga.outer_tensor(one_form(g)))  # [TRIVIAL]
    w = random_smooth(g, 1, "su2", np.random.default_rng(0))
    np.testing.assert_allclose(np.trace(Ga.outer_tensor(w)), 0.5 * np.sum(w.data ** 2, axis=(0, -1)))


def test_q_a_examples():
    g = Grid(3, 8)
    const = one_form(g, {2: algebra.TAU[1]})
    assert not np.any(Ga.q_a(one_form(g), const).data)  # [TRIVIAL]
    errs = []
    for n in (16, 32):
        g = Grid(3, n, 1.0)
        w = sine_dy(g)
        q = Ga.q_a(one_form(g), w)
        lam = (2 * np.pi / g.L) ** 2
        errs.append(np.sqrt(pair(q - w * lam, q - w * lam) / pair(w * lam, w * lam)))
    assert errs[0] < 0.05 and errs[1] < errs[0]  # [DERIVED] flat Hodge Laplacian


def test_q_a_matches_hodge_laplacian_first_order():  # [DERIVED] cross-check oracle
    errs = []
    for n in (16, 32):
        g = Grid(3, n)
        P = random_pair(g, 1)
        diff = Ga.q_a(P.a, P.alpha) - Ga.hodge_laplacian_a(P.a, P.alpha)
        errs.append(np.sqrt(pair(diff, diff) / pair(P.alpha, P.alpha)))
    assert 1.6 <= errs[0] / errs[1] <= 2.4


def test_bochner_zero_pair():  # [TRIVIAL]
    assert Ga.bochner_residual(GaugePair.zeros(Grid(3, 6))) == 0.0


@pytest.mark.parametrize("seed", [0, 1])
def test_bochner_refinement(seed):  # [DERIVED] refinement oracle
    res = []
    for n in (16, 32):
        g = Grid(3, n)
        P = random_pair(g, seed, amp=1.0)
        res.append(Ga.bochner_residual(P, relative=True))
    assert 1.6 <= res[0] / res[1] <= 2.4


def test_bochner_weighted_refinement():
    res = []
    for n in (16, 32):
        g = Grid(3, n)
        P = random_pair(g, 4, amp=1.0)
        x = g.coords()[0]
        res.append(Ga.bochner_residual(P, 1 + 0.5 * np.sin(2 * np.pi * x), relative=True))
    assert res[1] < res[0]


def test_gauge_identity_unchanged():  # [TRIVIAL]
    g = Grid(3, 6)
    P = random_pair(g, 0)
    Q = Ga.gauge_apply(GaugeMap.identity(g), P)
    np.testing.assert_array_equal(Q.a.data, P.a.data)
    np.testing.assert_array_equal(Q.alpha.data, P.alpha.data)


def test_gauge_map_group_laws(rng):
    g = Grid(3, 4)
    m = GaugeMap.exp(rng.normal(size=g.shape + (3,)))
    np.testing.assert_allclose(m.compose(m.inverse()).q, GaugeMap.identity(g).q, atol=1e-14)


def test_constant_gauge_is_exact_rotation(rng):
    g = Grid(3, 6)
    P = random_pair(g, 2)
    q = algebra.quat_exp(np.array([0.3, -0.2, 0.9]))
    Q = Ga.gauge_apply(GaugeMap.constant(g, q), P)
    assert Ga.big_f(Q) == pytest.approx(Ga.big_f(P), rel=1e-12)


def test_gauge_drift_first_order():  # [DERIVED] gauge-invariance refinement
    drift = []
    for n in (16, 32):
        g = Grid(3, n)
        rng = np.random.default_rng(5)
        P = GaugePair(random_smooth(g, 1, "su2", rng, kmax=1, amplitude=0.5),
                      random_smooth(g, 1, "su2", rng, kmax=1, amplitude=0.5))
        xi = random_smooth(g, 0, "su2", rng, kmax=1, amplitude=0.3).data[0]
        Q = Ga.gauge_apply(GaugeMap.exp(xi), P)
        drift.append(np.sum(np.abs(Ga.big_f_density(Q) - Ga.big_f_density(P))) * g.h ** 3 / Ga.big_f(P))
    assert 1.6 <= drift[0] / drift[1] <= 2.4


def test_coulomb_fixed_point():  # [TRIVIAL]
    g = Grid(3, 8)
    P = GaugePair(sine_dy(g), one_form(g))
    res = Ga.coulomb_fix(P, 1e-8)
    assert res.iterations == 0
    np.testing.assert_array_equal(res.pair.a.data, P.a.data)


def test_coulomb_pure_gauge():  # [DERIVED] pure gauge is equivalent to zero
    g = Grid(3, 12)
    xi = random_smooth(g, 0, "su2", np.random.default_rng(7), kmax=1, amplitude=0.4).data[0]
    P = Ga.pure_gauge(g, GaugeMap.exp(xi))
    res = Ga.coulomb_fix(P, 1e-8)
    assert np.sqrt(pair(res.pair.a, res.pair.a)) <= 1e-3 * np.sqrt(pair(P.a, P.a))


def test_coulomb_random_is_coclosed():
    g = Grid(3, 12)
    rng = np.random.default_rng(8)
    base = GaugePair(random_smooth(g, 1, "su2", rng, kmax=1, amplitude=0.2), one_form(g))
    xi = random_smooth(g, 0, "su2", rng, kmax=1, amplitude=0.5).data[0]
    res = Ga.coulomb_fix(Ga.gauge_apply(GaugeMap.exp(xi), base), 1e-8)
    assert res.coclosure_ratio <= 1e-8
    assert np.isfinite(res.kappa_ratio) and res.kappa_ratio > 0


def test_coulomb_stall_raises():
    g = Grid(3, 8)
    P = random_pair(g, 9, amp=1.0)
    with pytest.raises(Ga.ConvergenceError):
        Ga.coulomb_fix(P, 1e-12, maxiter=1)


def test_r_diamond():
    g = Grid(3, 16)
    assert Ga.r_diamond(one_form(g), (0.5, 0.5, 0.5)) == pytest.approx(0.25)  # [TRIVIAL] flat
    a = random_pair(g, 0, amp=3.0).a
    r = Ga.r_diamond(a, (0.5, 0.5, 0.5), kappa_u=10.0)
    assert 4 * g.h <= r <= 0.25
    with pytest.raises(ValueError):
        Ga.r_diamond(a, (0.5, 0.5, 0.5), kappa_u=0.0)


def test_r_diamond_needs_resolution():
    g = Grid(3, 8)
    with pytest.raises(ValueError):
        Ga.r_diamond(random_pair(g, 0).a, (0.5, 0.5, 0.5))
