"""Connections, curvature and covariant calculus for su(2) gauge pairs.

The bundle is globally trivialized, so a connection is the su(2)-valued
1-form offset ``a`` (the connection is d + a acting through the adjoint
representation).  Covariant differences are forward differences plus the
pointwise bracket with ``a``; their adjoints use backward differences, which
keeps every integration-by-parts identity exact at the lattice level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import algebra
from .grid import (
    DiscreteForm,
    Grid,
    ball_integral,
    coder_array,
    components,
    dminus,
    dplus,
    extder_array,
    laplacian_symbol,
    pair,
    pointwise_inner,
)

KAPPA_U_DEFAULT = 10.0


@dataclass
class GaugePair:
    """Connection offset ``a``, su(2)-valued 1-form ``alpha`` and scale r >= 1."""

    a: DiscreteForm
    alpha: DiscreteForm
    r: float = 1.0

    def __post_init__(self):
        for name, w in (("a", self.a), ("alpha", self.alpha)):
            if w.degree != 1 or w.kind != "su2":
                raise ValueError(f"{name} must be an su(2)-valued 1-form")
        if self.a.grid != self.alpha.grid:
            raise ValueError("a and alpha live on different grids")
        if self.r < 1:
            raise ValueError(f"scale r must be >= 1, got {self.r}")

    @property
    def grid(self) -> Grid:
        return self.a.grid

    @classmethod
    def zeros(cls, grid: Grid, r: float = 1.0):
        return cls(DiscreteForm.zeros(grid, 1, "su2"), DiscreteForm.zeros(grid, 1, "su2"), r)

    def copy(self):
        return GaugePair(self.a.copy(), self.alpha.copy(), self.r)


# ---------------------------------------------------------------------------
# covariant exterior calculus
# ---------------------------------------------------------------------------

def _ad(a_i, w):
    """[a_i, w] at each site; ``w`` may have extra leading component axes."""
    return np.cross(a_i, w)


def cov_d_array(a, data, dim, p, h):
    """d_A on raw p-form data: sum_j (-1)^j (D+_{i_j} + ad a_{i_j}) w_{I - i_j}."""
    out = extder_array(data, dim, p, h)
    out_comps = components(dim, p + 1)
    in_comps = components(dim, p)
    for c, J in enumerate(out_comps):
        for j, i in enumerate(J):
            b = in_comps.index(J[:j] + J[j + 1:])
            term = _ad(a[i], data[b])
            out[c] += term if j % 2 == 0 else -term
    return out


def cov_dstar_array(a, data, dim, p, h):
    """Exact adjoint of :func:`cov_d_array` (degree p -> p - 1)."""
    out = coder_array(data, dim, p, h)
    out_comps = components(dim, p - 1)
    in_comps = components(dim, p)
    for b, J in enumerate(in_comps):
        for j, i in enumerate(J):
            c = out_comps.index(J[:j] + J[j + 1:])
            term = _ad(a[i], data[b])
            out[c] += -term if j % 2 == 0 else term
    return out


def cov_grad_array(a, data, dim, h):
    """nabla_A w with shape (dim, ncomp, *sites, 3): D+_i w + [a_i, w]."""
    return np.stack([dplus(data, i + 1, h) + _ad(a[i], data) for i in range(dim)])


def cov_grad_adjoint_array(a, t, dim, h):
    """Adjoint of :func:`cov_grad_array`: sum_i (-D-_i - ad a_i) t_i."""
    out = np.zeros_like(t[0])
    for i in range(dim):
        out -= dminus(t[i], i + 1, h) + _ad(a[i], t[i])
    return out


def cov_d(a: DiscreteForm, w: DiscreteForm) -> DiscreteForm:
    g = w.grid
    if w.degree >= g.dim:
        raise ValueError("cov_d: degree overflow")
    return DiscreteForm(g, w.degree + 1, cov_d_array(a.data, w.data, g.dim, w.degree, g.h), w.kind)


def cov_dstar(a: DiscreteForm, w: DiscreteForm) -> DiscreteForm:
    g = w.grid
    if w.degree < 1:
        raise ValueError("cov_dstar: degree underflow")
    return DiscreteForm(g, w.degree - 1, cov_dstar_array(a.data, w.data, g.dim, w.degree, g.h), w.kind)


def cov_grad(a: DiscreteForm, w: DiscreteForm) -> np.ndarray:
    return cov_grad_array(a.data, w.data, w.grid.dim, w.grid.h)


def wedge_array(u, v, dim):
    """Lie-valued wedge of two su(2) 1-forms, symmetric in (u, v).

    (u ^ v)_ij = ([u_i, v_j] - [u_j, v_i]) / 2, so (u ^ u)_ij = [u_i, u_j],
    the matrix product alpha ^ alpha.
    """
    comps = components(dim, 2)
    out = np.empty((len(comps),) + u.shape[1:], dtype=np.result_type(u, v))
    for c, (i, j) in enumerate(comps):
        out[c] = 0.5 * (np.cross(u[i], v[j]) - np.cross(u[j], v[i]))
    return out


def wedge(u: DiscreteForm, v: DiscreteForm) -> DiscreteForm:
    return DiscreteForm(u.grid, 2, wedge_array(u.data, v.data, u.grid.dim), u.kind)


def curvature_array(a, dim, h):
    return extder_array(a, dim, 1, h) + wedge_array(a, a, dim)


def curvature(a: DiscreteForm) -> DiscreteForm:
    """F = d a + a ^ a, i.e. F_ij = D+_i a_j - D+_j a_i + [a_i, a_j]."""
    g = a.grid
    return DiscreteForm(g, 2, curvature_array(a.data, g.dim, g.h), "su2")


def two_form_entry(f, dim, i, j):
    """F_ij for any ordered pair of axes from component-packed 2-form data."""
    if i == j:
        return np.zeros_like(f[0])
    comps = components(dim, 2)
    if i < j:
        return f[comps.index((i, j))]
    return -f[comps.index((j, i))]


def outer_tensor(w: DiscreteForm) -> np.ndarray:
    """<w_i, w_j> per site, shape (dim, dim, *sites); its trace is |w|^2."""
    d = w.grid.dim
    return np.stack([np.stack([algebra.inner(w.data[i], w.data[j]) for j in range(d)]) for i in range(d)])


def _ricci_apply(ric, data):
    if ric is None:
        return np.zeros_like(data)
    return np.einsum("ij...,j...k->i...k", ric, data)


def _ricci_pair(ric, data):
    if ric is None:
        return 0.0
    t = np.einsum("i...k,j...k->ij...", data, data) * 0.5
    return np.einsum("ij...,ij...->...", ric, t)


# ---------------------------------------------------------------------------
# functionals and second-order operators
# ---------------------------------------------------------------------------

def big_f_density(P: GaugePair) -> np.ndarray:
    """Site values of |F_A - alpha^alpha|^2 + |d_A alpha|^2 + |d_A^* alpha|^2."""
    g = P.grid
    dim, h = g.dim, g.h
    a, al = P.a.data, P.alpha.data
    flat_defect = curvature_array(a, dim, h) - wedge_array(al, al, dim)
    da = cov_d_array(a, al, dim, 1, h)
    dsa = cov_dstar_array(a, al, dim, 1, h)
    return (pointwise_inner(flat_defect, flat_defect, "su2") + pointwise_inner(da, da, "su2")
            + pointwise_inner(dsa, dsa, "su2"))


def big_f(P: GaugePair) -> float:
    """The functional: integral of :func:`big_f_density`."""
    return float(np.sum(big_f_density(P))) * P.grid.h ** P.grid.dim


def weitzenbock_term_array(f, w, dim):
    """(R w)_i = sum_j [F_ji, w_j], the curvature term of the 1-form Weitzenbock formula."""
    out = np.zeros_like(w)
    for i in range(dim):
        for j in range(dim):
            if i != j:
                out[i] += np.cross(two_form_entry(f, dim, j, i), w[j])
    return out


def q_a(a: DiscreteForm, w: DiscreteForm, ric=None) -> DiscreteForm:
    """nabla_A^dagger nabla_A w + curvature term + Ric(w) for an su(2) 1-form w."""
    g = w.grid
    dim, h = g.dim, g.h
    rough = cov_grad_adjoint_array(a.data, cov_grad_array(a.data, w.data, dim, h), dim, h)
    f = curvature_array(a.data, dim, h)
    out = rough + weitzenbock_term_array(f, w.data, dim) + _ricci_apply(ric, w.data)
    return DiscreteForm(g, 1, out, "su2")


def hodge_laplacian_a_array(a, w, dim, h):
    """d_A^dagger d_A w + d_A d_A^dagger w on a 1-form."""
    return (cov_dstar_array(a, cov_d_array(a, w, dim, 1, h), dim, 2, h)
            + cov_d_array(a, cov_dstar_array(a, w, dim, 1, h), dim, 0, h))


def hodge_laplacian_a(a: DiscreteForm, w: DiscreteForm) -> DiscreteForm:
    g = w.grid
    return DiscreteForm(g, 1, hodge_laplacian_a_array(a.data, w.data, g.dim, g.h), "su2")


def bochner_sides(P: GaugePair, f=None, ric=None):
    """Both sides of the weighted Bochner-Weitzenbock identity for (A, alpha).

    LHS = int f (|d_A al|^2 + |d_A^* al|^2 + |F/r - r al^al|^2)
    RHS = 1/2 int (d^dagger d f)|al|^2
          + int f (|nabla_A al|^2 + r^2 |al^al|^2 + r^-2 |F|^2 + Ric<al (x) al>)
          + int sum_i (D_i f) <al_i, d_A^* al> - int <df ^ al, d_A al>
    """
    g = P.grid
    dim, h, r = g.dim, g.h, P.r
    a, al = P.a.data, P.alpha.data
    f = np.ones(g.shape) if f is None else np.asarray(f, dtype=float)
    F = curvature_array(a, dim, h)
    aa = wedge_array(al, al, dim)
    da = cov_d_array(a, al, dim, 1, h)
    dsa = cov_dstar_array(a, al, dim, 1, h)[0]
    grad = cov_grad_array(a, al, dim, h)
    defect = F / r - r * aa
    lhs = f * (pointwise_inner(da, da, "su2") + algebra.inner(dsa, dsa) + pointwise_inner(defect, defect, "su2"))

    fd = f[None]
    lap_f = coder_array(extder_array(fd, dim, 0, h), dim, 1, h)[0]
    alsq = pointwise_inner(al, al, "su2")
    gradsq = 0.5 * np.sum(grad * grad, axis=(0, 1, -1))
    rhs = (0.5 * lap_f * alsq
           + f * (gradsq + r * r * pointwise_inner(aa, aa, "su2") + pointwise_inner(F, F, "su2") / (r * r)
                  + _ricci_pair(ric, al)))
    df = extder_array(fd, dim, 0, h)
    for i in range(dim):
        rhs = rhs + df[i] * algebra.inner(al[i], dsa)
    dfal = np.empty_like(da)
    for c, (i, j) in enumerate(components(dim, 2)):
        dfal[c] = df[i][..., None] * al[j] - df[j][..., None] * al[i]
    rhs = rhs - pointwise_inner(dfal, da, "su2")
    vol = h ** dim
    return float(np.sum(lhs)) * vol, float(np.sum(rhs)) * vol


def bochner_residual(P: GaugePair, f=None, ric=None, relative: bool = False) -> float:
    """|LHS - RHS| of the weighted identity; divided by |LHS| when ``relative``."""
    lhs, rhs = bochner_sides(P, f, ric)
    res = abs(lhs - rhs)
    if relative:
        return res / abs(lhs) if lhs != 0 else 0.0
    return res


# ---------------------------------------------------------------------------
# gauge transformations
# ---------------------------------------------------------------------------

@dataclass
class GaugeMap:
    """Unit quaternion per site, shape (*sites, 4)."""

    q: np.ndarray

    def __post_init__(self):
        self.q = algebra.quat_normalize(self.q)

    @classmethod
    def identity(cls, grid: Grid):
        return cls(algebra.quat_identity(grid.shape))

    @classmethod
    def exp(cls, xi):
        """Site-wise exponential of an su(2) 0-form given as (*sites, 3)."""
        return cls(algebra.quat_exp(xi))

    @classmethod
    def constant(cls, grid: Grid, q):
        return cls(np.broadcast_to(np.asarray(q, dtype=float), grid.shape + (4,)).copy())

    def compose(self, other: "GaugeMap") -> "GaugeMap":
        """Pointwise product self * other."""
        return GaugeMap(algebra.quat_mul(self.q, other.q))

    def inverse(self) -> "GaugeMap":
        return GaugeMap(algebra.quat_conj(self.q))


def gauge_apply(g: GaugeMap, P: GaugePair) -> GaugePair:
    """a -> Ad_g a + log(g(x) g(x + h e_i)^{-1}) / h, alpha -> Ad_g alpha.

    The inhomogeneous term is the lattice version of g d(g^{-1}); for
    g = exp(xi) its linearization is exactly -d_A xi.
    """
    grid = P.grid
    dim, h = grid.dim, grid.h
    rot = algebra.quat_to_rotation(g.q)
    a_new = np.einsum("...ij,c...j->c...i", rot, P.a.data)
    al_new = np.einsum("...ij,c...j->c...i", rot, P.alpha.data)
    ginv = algebra.quat_conj(g.q)
    for i in range(dim):
        link = algebra.quat_mul(g.q, np.roll(ginv, -1, axis=i))
        a_new[i] += algebra.quat_log(link) / h
    return GaugePair(DiscreteForm(grid, 1, a_new, "su2"), DiscreteForm(grid, 1, al_new, "su2"), P.r)


def pure_gauge(grid: Grid, g: GaugeMap) -> GaugePair:
    """The pair obtained by applying g to (0, 0)."""
    return gauge_apply(g, GaugePair.zeros(grid))


def _inverse_laplacian(grid: Grid, data):
    """Apply (d^dagger d)^{-1} to an su(2) 0-form (*sites, 3), zero mode dropped."""
    sym = laplacian_symbol(grid)
    sym = np.where(sym > 0, sym, np.inf)[..., None]
    axes = tuple(range(grid.dim))
    return np.fft.ifftn(np.fft.fftn(data, axes=axes) / sym, axes=axes).real


@dataclass
class CoulombResult:
    gauge: GaugeMap
    pair: GaugePair
    iterations: int
    coclosure_ratio: float
    kappa_ratio: float
    history: list


class ConvergenceError(RuntimeError):
    pass


def l21_norm(a: DiscreteForm) -> float:
    g = a.grid
    grad = np.stack([dplus(a.data, i + 1, g.h) for i in range(g.dim)])
    return float(np.sqrt(pair(a, a) + 0.5 * np.sum(grad * grad) * g.h ** g.dim))


def _coclosure(grid: Grid, a: DiscreteForm):
    dstar = coder_array(a.data, grid.dim, 1, grid.h)[0]
    return dstar, float(np.sqrt(0.5 * np.sum(dstar * dstar) * grid.h ** grid.dim))


def coulomb_fix(P: GaugePair, tol: float = 1e-8, maxiter: int = 500) -> CoulombResult:
    """Descend 1/2 ||a||^2 over gauge maps until ||d^* a|| <= tol ||a||.

    The search direction is xi = (d^dagger d)^{-1} d^* a, the gradient
    preconditioned by the scalar lattice Laplacian, with step halving until
    the norm decreases.

    Phase one moves a single accumulated map g and re-applies it to the
    input, so it minimizes over the true orbit {g . P}.  A pure-gauge input
    therefore reaches a = 0.  On the lattice the orbit minimum is coclosed
    only up to O(h).  Phase two applies the remaining small corrections one
    after another to the current pair.  Their linearization is exactly
    -d_A xi, so stationarity there is exactly d^* a = 0.  The returned pair
    is the phase-two iterate.  It agrees with gauge_apply(g, P) up to the
    lattice composition defect of those small corrections.

    Iteration stops early once ||a|| falls below tol times its initial value.
    """
    grid = P.grid
    total = GaugeMap.identity(grid)
    cur = P.copy()
    n0 = np.sqrt(pair(cur.a, cur.a))
    history = []
    it = 0
    sequential = False
    ratio = 0.0
    na = n0
    while True:
        na = np.sqrt(pair(cur.a, cur.a))
        dstar, ncs = _coclosure(grid, cur.a)
        ratio = ncs / na if na > 0 else 0.0
        history.append((it, float(na), float(ratio)))
        if na == 0 or ratio <= tol or na <= tol * n0:
            break
        if it >= maxiter:
            raise ConvergenceError(
                f"Coulomb fixing stalled at ratio {ratio:.3e} after {it} iterations; "
                "curvature may be outside the small-curvature regime")
        xi = _inverse_laplacian(grid, dstar)
        s = 1.0
        accepted = False
        while s >= 1e-4:
            step = GaugeMap.exp(s * xi)
            if sequential:
                trial_map = total
                trial = gauge_apply(step, cur)
            else:
                trial_map = step.compose(total)
                trial = gauge_apply(trial_map, P)
            nt = pair(trial.a, trial.a)
            if nt < na * na * (1 - 1e-14):
                accepted = True
                break
            s *= 0.5
        if not accepted:
            if sequential:
                # no further decrease possible; accept the tiny step anyway
                trial_map = total
                trial = gauge_apply(GaugeMap.exp(xi), cur)
                step = GaugeMap.exp(xi)
            else:
                sequential = True
                it += 1
                continue
        if sequential:
            total = step.compose(total)
        else:
            total = trial_map
        cur = trial
        it += 1
    F = curvature(cur.a)
    nf = np.sqrt(pair(F, F))
    if nf > 0:
        kappa = l21_norm(cur.a) / nf
    else:
        kappa = 0.0 if na == 0 else float("inf")
    return CoulombResult(total, cur, it, float(ratio), float(kappa), history)


def r_diamond(a: DiscreteForm, p, kappa_u: float = KAPPA_U_DEFAULT, tol: float | None = None) -> float:
    """Largest r in [4h, L/4] with int_{B_r}|F_A|^2 <= kappa_u^-2 / (100 r).

    Found by bisection; the criterion is monotone in r.  Returns L/4 when
    it holds on the whole range and 4h when it already fails at 4h.
    """
    if not kappa_u > 0:
        raise ValueError("kappa_u must be positive")
    grid = a.grid
    F = curvature(a)
    dens = pointwise_inner(F.data, F.data, "su2")
    budget = 0.01 / kappa_u ** 2

    def excess(r):
        return ball_integral(grid, dens, p, r) - budget / r

    lo, hi = 4 * grid.h, grid.L / 4
    if lo > hi:
        raise ValueError(f"grid too coarse: 4h = {lo:g} exceeds L/4 = {hi:g}")
    if excess(hi) <= 0:
        return hi
    if excess(lo) > 0:
        return lo
    tol = 1e-3 * grid.h if tol is None else tol
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if excess(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo
