"""Heat flow and Chern-Simons flows with their monitors.

Heat flow
---------
The connection ``pair.a`` is held fixed and ``pair.alpha`` plays the role
of the evolving 1-form ``a``.  The flow is the explicit-Euler gradient
descent of E(a) = 1/2 (||d_A a||^2 + ||d_A^* a||^2), whose gradient is the
lattice Hodge Laplacian q(a) = d_A^* d_A a + d_A d_A^* a.  In the continuum
q equals the rough Laplacian plus curvature term of :func:`gauge.q_a`.  On
the lattice the two differ at O(h), and only q makes every monitor identity
hold step by step.

Chern-Simons flows
------------------
With the complex connection B = a + i alpha, the lattice functional is

    CS = h^3 sum [ 1/2 tr(B, *dB) + tr(B_1 [B_2, B_3]) ]

and its holomorphic gradient is G = 1/2 (*dB + d^*(*B)) + *(B ^ B), which
tends to *F_B.  The gradient flow descends Re CS: a' = Re G, alpha' = -Im G.
The Hamiltonian flow is a' = -Im G, alpha' = -Re G.  Velocities are
projected orthogonally to the complexified gauge orbit before each update.
In the continuum the projection is the identity, by the Bianchi identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import algebra
from .gauge import (
    GaugePair,
    cov_d_array,
    cov_dstar_array,
    hodge_laplacian_a_array,
)
from .grid import (
    DiscreteForm,
    Grid,
    coder_array,
    dminus,
    dplus,
    extder_array,
    hodge_array,
    laplacian_symbol,
    pointwise_inner,
)

HISTORY_COLUMNS = ("t", "norm_a_sq", "energy", "q_norm_sq", "re_cs", "im_cs", "coclosure_energy")


class StabilityError(RuntimeError):
    pass


@dataclass
class CsValue:
    re: float
    im: float


@dataclass
class FlowState:
    pair: GaugePair
    t: float = 0.0
    dt: float = 0.0
    history: list = field(default_factory=list)

    def record(self, row):
        if self.history and not row[0] > self.history[-1][0]:
            raise ValueError("history times must increase strictly")
        self.history.append(tuple(float(v) for v in row))


def _vol(grid: Grid) -> float:
    return grid.h ** grid.dim


def _nsq(data, grid) -> float:
    return float(np.sum(pointwise_inner(data, data, "su2"))) * _vol(grid)


# ---------------------------------------------------------------------------
# heat flow
# ---------------------------------------------------------------------------

def heat_operator(pair: GaugePair, w=None):
    """q(a) = d_A^* d_A a + d_A d_A^* a on raw data (defaults to pair.alpha)."""
    g = pair.grid
    w = pair.alpha.data if w is None else w
    return hodge_laplacian_a_array(pair.a.data, w, g.dim, g.h)


def heat_energy(pair: GaugePair, w=None) -> float:
    g = pair.grid
    w = pair.alpha.data if w is None else w
    da = cov_d_array(pair.a.data, w, g.dim, 1, g.h)
    dsa = cov_dstar_array(pair.a.data, w, g.dim, 1, g.h)
    return 0.5 * (_nsq(da, g) + _nsq(dsa, g))


def cs(pair: GaugePair) -> CsValue:
    """Lattice Chern-Simons value of B = a + i alpha (trivialization relative)."""
    g = pair.grid
    if g.dim != 3:
        raise ValueError("Chern-Simons needs dim = 3")
    B = pair.a.data + 1j * pair.alpha.data
    star_dB = hodge_array(extder_array(B, 3, 1, g.h), 3, 2)
    quad = 0.5 * np.sum(algebra.complex_trace_pair(B, star_dB))
    cubic = np.sum(algebra.complex_trace_pair(B[0], algebra.bracket(B[1], B[2])))
    val = complex(quad + cubic) * _vol(g)
    return CsValue(val.real, val.imag)


def coclosure_energy(pair: GaugePair) -> float:
    g = pair.grid
    dsa = cov_dstar_array(pair.a.data, pair.alpha.data, g.dim, 1, g.h)
    return _nsq(dsa, g)


def monitor_row(pair: GaugePair, t: float, qdata=None):
    g = pair.grid
    q = heat_operator(pair) if qdata is None else qdata
    if g.dim == 3:
        c = cs(pair)
        re_cs, im_cs = c.re, c.im
    else:
        re_cs = im_cs = math.nan
    return (t, _nsq(pair.alpha.data, g), heat_energy(pair), _nsq(q, g), re_cs, im_cs,
            coclosure_energy(pair))


def default_heat_dt(grid: Grid) -> float:
    return grid.h ** 2 / 8


def heat_step(S: FlowState) -> FlowState:
    """One explicit-Euler step a <- a - dt q(a); rejected if ||a|| grows."""
    g = S.pair.grid
    if S.dt > g.h ** 2 / (2 * g.dim) * (1 + 1e-12):
        raise StabilityError(f"dt = {S.dt} exceeds h^2/(2 dim) = {g.h ** 2 / (2 * g.dim)}")
    q = heat_operator(S.pair)
    new = S.pair.alpha.data - S.dt * q
    n_old = _nsq(S.pair.alpha.data, g)
    n_new = _nsq(new, g)
    if n_new > n_old * (1 + 1e-12) + 1e-300:
        raise StabilityError("heat step increased ||a||; step rejected")
    pair = GaugePair(S.pair.a, DiscreteForm(g, 1, new, "su2"), S.pair.r)
    out = FlowState(pair, S.t + S.dt, S.dt, list(S.history))
    out.record(monitor_row(pair, out.t))
    return out


@dataclass
class HeatRun:
    state: FlowState
    times: np.ndarray
    energy: np.ndarray
    norm_sq: np.ndarray
    q_norm_sq: np.ndarray
    n_of_t: np.ndarray
    snapshots: dict


def run_heat(pair: GaugePair, T: float, dt: float | None = None, keep=()) -> HeatRun:
    """Integrate the heat flow to time T (dt adjusted so T is hit exactly).

    n(t) = t^{-1} int_0^t ||q||^2 is the left Riemann sum over the steps
    taken, which makes E(t) + t n(t) - E(0) exactly the accumulated
    second-order Euler defect.
    """
    g = pair.grid
    dt = default_heat_dt(g) if dt is None else dt
    nsteps = max(1, int(math.ceil(T / dt - 1e-9)))
    dt = T / nsteps
    S = FlowState(pair, 0.0, dt)
    S.record(monitor_row(pair, 0.0))
    snaps = {0: pair.alpha.data.copy()} if 0 in keep else {}
    for k in range(1, nsteps + 1):
        S = heat_step(S)
        if k in keep:
            snaps[k] = S.pair.alpha.data.copy()
    hist = np.array(S.history)
    times, energy, q = hist[:, 0], hist[:, 2], hist[:, 3]
    cum = np.concatenate([[0.0], np.cumsum(q[:-1]) * dt])
    with np.errstate(invalid="ignore", divide="ignore"):
        n_of_t = np.where(times > 0, cum / np.where(times > 0, times, 1.0), q[0])
    return HeatRun(S, times, energy, hist[:, 1], q, n_of_t, snaps)


@dataclass
class StoppingResult:
    s: float
    index: int
    a_s: DiscreteForm
    q_norm_sq: float
    bound: float
    n_s: float
    displacement_sq: float
    displacement_bound: float


def stopping_time(pair: GaugePair, t_target: float, dt: float | None = None) -> StoppingResult:
    """First sampled s in (0, t_target] with ||q(a_s)||^2 <= E(0) / t_target."""
    if not t_target > 0:
        raise ValueError("t_target must be positive")
    g = pair.grid
    dt = default_heat_dt(g) if dt is None else dt
    nsteps = max(1, int(math.ceil(t_target / dt - 1e-9)))
    dt = t_target / nsteps
    e0 = heat_energy(pair)
    bound = e0 / t_target
    S = FlowState(pair, 0.0, dt)
    S.record(monitor_row(pair, 0.0))
    a0 = pair.alpha.data.copy()
    acc = 0.0
    for k in range(1, nsteps + 1):
        acc += S.history[-1][3] * dt
        S = heat_step(S)
        qk = S.history[-1][3]
        if qk <= bound or k == nsteps:
            disp = _nsq(S.pair.alpha.data - a0, g)
            return StoppingResult(S.t, k, S.pair.alpha, qk, bound, acc / S.t, disp, S.t * acc)
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# Dirichlet heat flow on a ball
# ---------------------------------------------------------------------------

@dataclass
class BallDomain:
    interior: np.ndarray
    collar: np.ndarray

    @classmethod
    def build(cls, grid: Grid, center, radius: float):
        interior = grid.distance(center) < radius
        grown = interior.copy()
        for offs in np.ndindex(*(3,) * grid.dim):
            shift = tuple(o - 1 for o in offs)
            grown |= np.roll(interior, shift, axis=tuple(range(grid.dim)))
        return cls(interior, grown & ~interior)


def ball_energy(pair: GaugePair, dom: BallDomain) -> float:
    """E restricted to interior and collar sites.

    Every energy density term outside this set depends on frozen values
    only, so this differs from the torus energy by a constant.
    """
    g = pair.grid
    da = cov_d_array(pair.a.data, pair.alpha.data, g.dim, 1, g.h)
    dsa = cov_dstar_array(pair.a.data, pair.alpha.data, g.dim, 1, g.h)
    dens = pointwise_inner(da, da, "su2") + pointwise_inner(dsa, dsa, "su2")
    mask = dom.interior | dom.collar
    return 0.5 * float(np.sum(dens[mask])) * _vol(g)


def dirichlet_heat_step(S: FlowState, dom: BallDomain) -> FlowState:
    """Euler step on interior sites; collar and exterior values stay frozen."""
    g = S.pair.grid
    if S.dt > g.h ** 2 / (2 * g.dim) * (1 + 1e-12):
        raise StabilityError("dt exceeds h^2/(2 dim)")
    q = heat_operator(S.pair)
    q_int = np.where(dom.interior[None, ..., None], q, 0.0)
    new = S.pair.alpha.data - S.dt * q_int
    pair = GaugePair(S.pair.a, DiscreteForm(g, 1, new, "su2"), S.pair.r)
    out = FlowState(pair, S.t + S.dt, S.dt, list(S.history))
    out.record((out.t, _nsq(np.where(dom.interior[None, ..., None], new, 0.0), g),
                ball_energy(pair, dom), _nsq(heat_operator(pair) * dom.interior[None, ..., None], g),
                math.nan, math.nan, coclosure_energy(pair)))
    return out


def run_dirichlet_heat(pair: GaugePair, center, radius: float, T: float, dt: float | None = None):
    """Dirichlet heat flow on a ball; returns the state and the fitted constant c
    in E(0) - E(T) = c * int ||q|_interior||^2."""
    g = pair.grid
    dom = BallDomain.build(g, center, radius)
    dt = default_heat_dt(g) if dt is None else dt
    nsteps = max(1, int(math.ceil(T / dt - 1e-9)))
    dt = T / nsteps
    S = FlowState(pair, 0.0, dt)
    q0 = heat_operator(pair) * dom.interior[None, ..., None]
    S.record((0.0, 0.0, ball_energy(pair, dom), _nsq(q0, g), math.nan, math.nan, coclosure_energy(pair)))
    for _ in range(nsteps):
        S = dirichlet_heat_step(S, dom)
    hist = np.array(S.history)
    integral = float(np.sum(hist[:-1, 3]) * dt)
    drop = hist[0, 2] - hist[-1, 2]
    fitted = drop / integral if integral > 0 else math.nan
    return S, dom, fitted


# ---------------------------------------------------------------------------
# Chern-Simons flows
# ---------------------------------------------------------------------------

def cs_gradient(pair: GaugePair) -> np.ndarray:
    """Holomorphic gradient G (complex su(2) 1-form data) of lattice CS.

    dCS = h^3 sum tr(G, dB) for every complex variation dB.
    """
    g = pair.grid
    if g.dim != 3:
        raise ValueError("Chern-Simons needs dim = 3")
    h = g.h
    B = pair.a.data + 1j * pair.alpha.data
    star_dB = hodge_array(extder_array(B, 3, 1, h), 3, 2)
    dstar_starB = coder_array(hodge_array(B, 3, 1), 3, 2, h)
    BB = np.stack([algebra.bracket(B[1], B[2]), algebra.bracket(B[2], B[0]), algebra.bracket(B[0], B[1])])
    return 0.5 * (star_dB + dstar_starB) + BB


def _orbit_map(B, xi, h):
    """(d + ad B) xi for a complex su(2) 0-form xi (*sites, 3)."""
    return np.stack([dplus(xi, i, h) + np.cross(B[i], xi) for i in range(3)])


def _orbit_adjoint(B, w, h):
    """Adjoint of :func:`_orbit_map` for the real part of the Hermitian pairing."""
    Bc = np.conj(B)
    out = np.zeros_like(w[0])
    for i in range(3):
        out -= dminus(w[i], i, h) + np.cross(Bc[i], w[i])
    return out


class _Projector:
    def __init__(self, grid: Grid):
        self.grid = grid
        self.x0 = None
        self.symbol = laplacian_symbol(grid)

    def __call__(self, pair: GaugePair, vel):
        """Remove from vel its orthogonal projection onto {(d + ad B) xi}."""
        g = self.grid
        h = g.h
        B = pair.a.data + 1j * pair.alpha.data
        shape = g.shape + (3,)
        rhs = _orbit_adjoint(B, vel, h)
        shift = float(np.mean(np.abs(B) ** 2)) + 1e-12
        sym = (self.symbol + shift)[..., None]

        def to_c(x):
            return x[: x.size // 2].reshape(shape) + 1j * x[x.size // 2:].reshape(shape)

        def to_r(z):
            return np.concatenate([z.real.ravel(), z.imag.ravel()])

        def matvec(x):
            xi = to_c(x)
            return to_r(_orbit_adjoint(B, _orbit_map(B, xi, h), h))

        def precond(x):
            z = to_c(x)
            return to_r(np.fft.ifftn(np.fft.fftn(z, axes=(0, 1, 2)) / sym, axes=(0, 1, 2)))

        size = 2 * int(np.prod(shape))
        op = LinearOperator((size, size), matvec=matvec, dtype=float)
        pre = LinearOperator((size, size), matvec=precond, dtype=float)
        b = to_r(rhs)
        if not np.any(b):
            return vel
        sol, info = cg(op, b, x0=self.x0, rtol=1e-12, atol=0.0, maxiter=2000, M=pre)
        if info != 0:
            raise StabilityError(f"gauge-orbit projection did not converge (info={info})")
        self.x0 = sol
        return vel - _orbit_map(B, to_c(sol), h)


def cs_velocity(pair: GaugePair, kind: str, projector: _Projector | None = None):
    """(a', alpha') for the 'gradient' or 'hamiltonian' CS flow."""
    G = cs_gradient(pair)
    if kind == "gradient":
        vel = G.real - 1j * G.imag
    elif kind == "hamiltonian":
        vel = -G.imag - 1j * G.real
    else:
        raise ValueError(f"unknown CS flow {kind!r}")
    if projector is not None:
        vel = projector(pair, vel)
    return vel.real, vel.imag


def default_cs_dt(grid: Grid) -> float:
    return grid.h / 8


def _cs_step(S: FlowState, kind: str, projector, method: str = "euler") -> FlowState:
    g = S.pair.grid
    r = S.pair.r

    def shifted(p, va, vb, c):
        return GaugePair(DiscreteForm(g, 1, p.a.data + c * va, "su2"),
                         DiscreteForm(g, 1, p.alpha.data + c * vb, "su2"), r)

    if method == "euler":
        va, vb = cs_velocity(S.pair, kind, projector)
        new = shifted(S.pair, va, vb, S.dt)
    elif method == "rk4":
        k1 = cs_velocity(S.pair, kind, projector)
        k2 = cs_velocity(shifted(S.pair, *k1, S.dt / 2), kind, projector)
        k3 = cs_velocity(shifted(S.pair, *k2, S.dt / 2), kind, projector)
        k4 = cs_velocity(shifted(S.pair, *k3, S.dt), kind, projector)
        va = (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6
        vb = (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6
        new = shifted(S.pair, va, vb, S.dt)
    else:
        raise ValueError(f"unknown integrator {method!r}")
    n_old = _nsq(S.pair.a.data, g) + _nsq(S.pair.alpha.data, g)
    n_new = _nsq(new.a.data, g) + _nsq(new.alpha.data, g)
    if n_old > 0 and n_new > 100.0 * n_old:
        raise StabilityError("CS step grew the field norm more than 10x; step rejected")
    out = FlowState(new, S.t + S.dt, S.dt, list(S.history))
    out.record(monitor_row(new, out.t))
    return out


def cs_gradient_step(S: FlowState, projector=None, method: str = "euler") -> FlowState:
    return _cs_step(S, "gradient", projector, method)


def cs_hamiltonian_step(S: FlowState, projector=None, method: str = "euler") -> FlowState:
    return _cs_step(S, "hamiltonian", projector, method)


def run_cs(pair: GaugePair, kind: str, T: float, dt: float | None = None, project: bool = True,
           method: str = "euler") -> FlowState:
    g = pair.grid
    dt = default_cs_dt(g) if dt is None else dt
    nsteps = max(1, int(math.ceil(T / dt - 1e-9)))
    dt = T / nsteps
    projector = _Projector(g) if project else None
    S = FlowState(pair, 0.0, dt)
    S.record(monitor_row(pair, 0.0))
    for _ in range(nsteps):
        S = _cs_step(S, kind, projector, method)
    return S


def cs_scale(pair: GaugePair) -> float:
    """Absolute size of the CS integrand, h^3 sum (|B||*dB|/2 + |B|^3) with |.| = sqrt(<.,.>)."""
    g = pair.grid
    B = pair.a.data + 1j * pair.alpha.data
    star_dB = hodge_array(extder_array(B, 3, 1, g.h), 3, 2)
    nb = np.sqrt(pointwise_inner(B, B, "su2c"))
    nd = np.sqrt(pointwise_inner(star_dB, star_dB, "su2c"))
    return float(np.sum(0.5 * nb * nd + nb ** 3)) * _vol(g)


def first_order_energy(pair: GaugePair) -> float:
    """||d_A alpha||^2 + ||d_A^* alpha||^2, the scale for coclosure drift."""
    g = pair.grid
    da = cov_d_array(pair.a.data, pair.alpha.data, g.dim, 1, g.h)
    return _nsq(da, g) + coclosure_energy(pair)
