import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sl2lab import algebra
from sl2lab import flows as F
from sl2lab.gauge import GaugeMap, GaugePair, gauge_apply
from sl2lab.grid import DiscreteForm, Grid, random_smooth


def zero_form(g):
    return DiscreteForm.zeros(g, 1, "su2")


def eigen_pair(g, amp=1.0):
    al = zero_form(g)
    x = g.coords()[0]
    al.data[1] = (amp * np.sin(2 * np.pi * x / g.L))[..., None] * algebra.TAU[0]
    return GaugePair(zero_form(g), al)


def random_pair(g, seed, amp_a=0.5, amp_al=1.0, kmax=1):
    rng = np.random.default_rng(seed)
    return GaugePair(random_smooth(g, 1, "su2", rng, kmax=kmax, amplitude=amp_a),
                     random_smooth(g, 1, "su2", rng, kmax=kmax, amplitude=amp_al))


# ------------------------------------------------------------------ heat flow

def test_heat_zero_stays_zero():  # [TRIVIAL]
    g = Grid(3, 8)
    run = F.run_heat(GaugePair.zeros(g), 0.01)
    assert not np.any(run.state.pair.alpha.data)
    assert not np.any(np.array(run.state.history)[:, 1:])


def test_heat_eigenmode_decay():  # [DERIVED] heat-kernel eigenmode
    g = Grid(3, 24, 2.0)
    P = eigen_pair(g)
    run = F.run_heat(P, 0.1)
    lam = (2 * np.pi / g.L) ** 2
    ratio = math.sqrt(run.norm_sq[-1] / run.norm_sq[0])
    assert ratio == pytest.approx(math.exp(-lam * 0.1), rel=0.01)


def test_heat_monotone_on_random_input():  # [PAPER] norm and energy non-increasing
    g = Grid(3, 12)
    run = F.run_heat(random_pair(g, 0), 0.005)
    assert np.all(np.diff(run.norm_sq) <= 0)
    assert np.all(np.diff(run.energy) <= 1e-10 * run.energy[:-1])


def test_heat_energy_identity_first_order_in_dt():  # [PAPER] E(t) + t n(t) = E(0)
    g = Grid(3, 12)
    P = random_pair(g, 1)
    mism = []
    for fac in (1, 2):
        run = F.run_heat(P, 0.005, dt=g.h ** 2 / 8 / fac)
        t = run.times[-1]
        drop = run.energy[0] - run.energy[-1]
        mism.append(abs(drop - t * run.n_of_t[-1]) / drop)
    assert mism[0] < 0.05
    assert mism[0] / mism[1] >= 1.8


def test_heat_n_bound():  # [PAPER] n(t) <= E(0)/t
    g = Grid(3, 10)
    run = F.run_heat(random_pair(g, 2), 0.004)
    t = run.times[1:]
    assert np.all(run.n_of_t[1:] <= run.energy[0] / t * (1 + 1e-12))


def test_history_times_strictly_increase():
    S = F.FlowState(GaugePair.zeros(Grid(3, 4)))
    S.record((0.0,) * 7)
    with pytest.raises(ValueError):
        S.record((0.0,) * 7)


def test_stopping_time_first_sample_when_already_small():  # [TRIVIAL]
    g = Grid(3, 8)
    P = eigen_pair(g, 1e-3)
    st_ = F.stopping_time(P, 0.01)  # 2 lambda_h T < 1
    assert st_.index == 1
    assert st_.q_norm_sq <= st_.bound


def test_stopping_time_eigenmode():  # [DERIVED] closed-form exponential decay
    g = Grid(3, 16, 2.0)
    P = eigen_pair(g)
    lam_h = (2 / g.h * math.sin(math.pi * g.h / g.L)) ** 2
    T = 0.2
    st_ = F.stopping_time(P, T)
    t_star = math.log(2 * T * lam_h) / (2 * lam_h)
    dt = st_.s / st_.index
    assert abs(st_.s - t_star) <= 2 * dt


def test_stopping_time_bounds_random():  # [PAPER] displacement bound
    g = Grid(3, 10)
    st_ = F.stopping_time(random_pair(g, 3), 0.004)
    assert st_.q_norm_sq <= st_.bound or math.isclose(st_.s, 0.004)
    assert st_.displacement_sq <= st_.displacement_bound * (1 + 0.05)
    with pytest.raises(ValueError):
        F.stopping_time(random_pair(g, 3), 0.0)


def test_dirichlet_fixed_point_and_frozen_boundary():
    g = Grid(3, 16)
    al = zero_form(g)
    al.data[0] = algebra.TAU[1]
    P = GaugePair(zero_form(g), al)
    S, dom, _ = F.run_dirichlet_heat(P, (0.5, 0.5, 0.5), 0.2, 0.002)
    np.testing.assert_array_equal(S.pair.alpha.data, al.data)  # [TRIVIAL] fixed point
    Q = random_pair(g, 4)
    S, dom, fitted = F.run_dirichlet_heat(Q, (0.5, 0.5, 0.5), 0.2, 0.002)
    outside = ~dom.interior
    np.testing.assert_array_equal(S.pair.alpha.data[:, outside], Q.alpha.data[:, outside])  # [PAPER]
    E = np.array(S.history)[:, 2]
    assert np.all(np.diff(E) <= 1e-10 * E[:-1])  # [PAPER]
    assert fitted > 0


def test_dirichlet_rejects_unstable_dt():
    g = Grid(3, 8)
    with pytest.raises(F.StabilityError):
        F.run_dirichlet_heat(random_pair(g, 0), (0.5,) * 3, 0.2, 0.1, dt=g.h ** 2)


# ------------------------------------------------------------ Chern-Simons

def test_cs_zero():  # [TRIVIAL]
    c = F.cs(GaugePair.zeros(Grid(3, 6)))
    assert c.re == 0 and c.im == 0


def test_cs_abelian_quadrature():  # [DERIVED] term-by-term quadrature
    g = Grid(3, 16, 1.0)
    y = g.coords()[1]
    a = zero_form(g)
    a.data[0] = 0.7 * algebra.TAU[0]
    a.data[2] = (1.3 * np.sin(2 * np.pi * y / g.L))[..., None] * algebra.TAU[0]
    c = F.cs(GaugePair(a, zero_form(g)))
    # direct quadrature: 1/2 tr(B ^ dB) summed over the lattice
    B = a.data
    dz_dy = (np.roll(B[2], -1, axis=1) - B[2]) / g.h
    direct = 0.5 * np.sum(algebra.complex_trace_pair(B[0], dz_dy)) * g.h ** 3
    assert c.re == pytest.approx(direct, abs=1e-12)
    assert abs(c.re) < 1e-12 and c.im == 0


def test_cs_constant_gauge_invariance():  # [TRIVIAL]
    g = Grid(3, 8)
    P = random_pair(g, 5)
    Q = gauge_apply(GaugeMap.constant(g, algebra.quat_exp(np.array([0.4, 1.1, -0.3]))), P)
    assert F.cs(Q).re == pytest.approx(F.cs(P).re, rel=1e-12)
    assert F.cs(Q).im == pytest.approx(F.cs(P).im, rel=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_cs_gradient_matches_finite_differences(seed):  # [DERIVED] directional derivative
    g = Grid(3, 6, 2 * np.pi)
    P = random_pair(g, seed, 0.3, 0.3)
    rng = np.random.default_rng(seed + 1)
    V = random_smooth(g, 1, "su2c", rng, kmax=1, amplitude=0.3).data
    G = F.cs_gradient(P)
    pred = complex(np.sum(algebra.complex_trace_pair(G, V))) * g.h ** 3

    def cs_at(eps):
        B = P.a.data + 1j * P.alpha.data + eps * V
        Q = GaugePair(DiscreteForm(g, 1, B.real, "su2"), DiscreteForm(g, 1, B.imag, "su2"))
        c = F.cs(Q)
        return complex(c.re, c.im)

    eps = 1e-5
    # CS is holomorphic, so real and imaginary steps give the same derivative
    fd = (cs_at(eps) - cs_at(-eps)) / (2 * eps)
    assert abs(fd - pred) <= 1e-6 * max(1.0, abs(pred))


def test_cs_zero_pair_stationary():  # [TRIVIAL]
    g = Grid(3, 8, 2 * np.pi)
    for kind in ("gradient", "hamiltonian"):
        S = F.run_cs(GaugePair.zeros(g), kind, 0.5)
        assert not np.any(S.pair.a.data) and not np.any(S.pair.alpha.data)


@pytest.fixture(scope="module")
def cs_runs():
    g = Grid(3, 12, 2 * np.pi)
    P = random_pair(g, 0, 0.1, 0.1)
    return P, {kind: F.run_cs(P, kind, 1.0) for kind in ("gradient", "hamiltonian")}


def test_gradient_flow_decreases_re_cs(cs_runs):  # [PAPER]
    P, runs = cs_runs
    hist = np.array(runs["gradient"].history)
    scale = F.cs_scale(P)
    assert np.all(np.diff(hist[:, 4]) <= 1e-12 * scale)
    assert abs(hist[-1, 5] - hist[0, 5]) <= 0.05 * scale  # [PAPER] Im CS nearly constant


def test_hamiltonian_flow_keeps_re_cs(cs_runs):  # [PAPER]
    P, runs = cs_runs
    hist = np.array(runs["hamiltonian"].history)
    assert abs(hist[-1, 4] - hist[0, 4]) <= 0.05 * F.cs_scale(P)


def test_gradient_flow_step_matches_gradient_norm():  # descent rate oracle
    g = Grid(3, 8, 2 * np.pi)
    P = random_pair(g, 6, 0.1, 0.1)
    dt = 1e-4
    S = F.run_cs(P, "gradient", dt, dt=dt, project=False)
    hist = np.array(S.history)
    G = F.cs_gradient(P)
    rate = 0.5 * np.sum(np.abs(G) ** 2) * g.h ** 3
    assert (hist[1, 4] - hist[0, 4]) / dt == pytest.approx(-rate, rel=1e-3)


def test_cs_integrators():
    g = Grid(3, 6, 2 * np.pi)
    P = random_pair(g, 7, 0.1, 0.1)
    S = F.run_cs(P, "gradient", 0.2, method="rk4")
    assert len(S.history) > 1
    with pytest.raises(ValueError):
        F.run_cs(P, "gradient", 0.2, method="leapfrog")


def test_cs_needs_three_dimensions():
    with pytest.raises(ValueError):
        F.cs(GaugePair.zeros(Grid(2, 6)))
