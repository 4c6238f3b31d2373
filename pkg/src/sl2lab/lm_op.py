"""The constant-coefficient first-order operator L_m on V + V over a 3-torus.

A field is a pair of blocks, each an su(2)-valued 1-form a and 0-form a0,
with every value orthogonal to the fixed unit element tau (the subspace V).
Writing J = [tau, .] and, for a constant unit 1-form e,

    D (a, a0)  = (curl a - d a0, -d^dagger a)
    K (b, b0)  = m (-e x J b + e J b0, -<e, J b>)

the operator is L_m (k1, k2) = (D k1 + K k2, D k2 + K k1), which is the
component-wise formula with *(e ^ v) = e x v and *d* = -d^dagger on 1-forms.

Lattice choices: d is the forward difference, d^dagger its exact adjoint and
curl = (*d + d^dagger *)/2, so D is symmetric and L_m is symmetric to
roundoff.

On V one has J^2 = -1 and (Clifford multiplication by e)^2 = -1, so
K^2 = m^2.  But D anticommutes with Clifford multiplication by e only up to
a derivative: D K + K D = 2 m J d_e.  Hence

    ||L_m k||^2 = ||grad k||^2 + m^2 ||k||^2 + 4 m <k1, J d_e k2>

and the cross term vanishes only when a block is zero or d_e k = 0.
:func:`square_identity_defect` measures the identity without the cross term;
:func:`corrected_identity_defect` includes it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import (
    Grid,
    coder_array,
    extder_array,
    hodge_array,
    random_smooth,
)


def _unit(v):
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("zero vector cannot be normalized")
    return v / nv


@dataclass
class VPair:
    """((a, a0), (b, b0)): 1-form data (3, *sites, 3) and 0-form data (*sites, 3)."""

    grid: Grid
    a: np.ndarray
    a0: np.ndarray
    b: np.ndarray
    b0: np.ndarray

    @classmethod
    def zeros(cls, grid: Grid):
        z1 = np.zeros((3,) + grid.shape + (3,))
        z0 = np.zeros(grid.shape + (3,))
        return cls(grid, z1, z0, z1.copy(), z0.copy())

    def arrays(self):
        return self.a, self.a0, self.b, self.b0

    def project(self, tau) -> "VPair":
        t = _unit(tau)
        out = [x - np.einsum("...k,k->...", x, t)[..., None] * t for x in self.arrays()]
        return VPair(self.grid, *out)

    def __add__(self, other):
        return VPair(self.grid, *(x + y for x, y in zip(self.arrays(), other.arrays())))

    def __mul__(self, s):
        return VPair(self.grid, *(s * x for x in self.arrays()))

    __rmul__ = __mul__

    def block(self, i: int):
        return (self.a, self.a0) if i == 0 else (self.b, self.b0)


def pairing(j: VPair, k: VPair) -> float:
    """L^2 pairing h^3 sum <., .> over all components (trace inner product)."""
    s = sum(0.5 * float(np.sum(x * y)) for x, y in zip(j.arrays(), k.arrays()))
    return s * j.grid.h ** 3


def norm_sq(k: VPair) -> float:
    return pairing(k, k)


def grad_norm_sq(k: VPair) -> float:
    """||grad k||^2 with forward differences on every component."""
    g = k.grid
    total = 0.0
    for x in k.arrays():
        site0 = 1 if x.ndim == 5 else 0
        for i in range(3):
            dx = (np.roll(x, -1, axis=site0 + i) - x) / g.h
            total += 0.5 * float(np.sum(dx * dx))
    return total * g.h ** 3


def _curl(a, h):
    fwd = hodge_array(extder_array(a, 3, 1, h), 3, 2)
    bwd = coder_array(hodge_array(a, 3, 1), 3, 2, h)
    return 0.5 * (fwd + bwd)


def _dirac(a, a0, h):
    one = _curl(a, h) - extder_array(a0[None], 3, 0, h)
    zero = -coder_array(a, 3, 1, h)[0]
    return one, zero


def _mass(b, b0, m, e, tau):
    jb = np.cross(tau, b)                 # J acts on values, last axis
    jb0 = np.cross(tau, b0)
    # e x (J b) over form indices (first axis)
    exjb = np.stack([e[1] * jb[2] - e[2] * jb[1],
                     e[2] * jb[0] - e[0] * jb[2],
                     e[0] * jb[1] - e[1] * jb[0]])
    one = m * (-exjb + e[:, None, None, None, None] * jb0[None])
    zero = -m * np.einsum("i,i...->...", e, jb)
    return one, zero


def apply_lm(k: VPair, m: float, e=(0.0, 0.0, 1.0), tau=(1.0, 0.0, 0.0), project: bool = True) -> VPair:
    """L_m k, re-projected onto V."""
    if k.grid.dim != 3:
        raise ValueError("L_m is defined in dimension 3")
    if not m > 0:
        raise ValueError("m must be positive")
    e = _unit(e)
    tau = _unit(tau)
    if project:
        k = k.project(tau)
    h = k.grid.h
    da, da0 = _dirac(k.a, k.a0, h)
    db, db0 = _dirac(k.b, k.b0, h)
    ka, ka0 = _mass(k.b, k.b0, m, e, tau)
    kb, kb0 = _mass(k.a, k.a0, m, e, tau)
    out = VPair(k.grid, da + ka, da0 + ka0, db + kb, db0 + kb0)
    return out.project(tau) if project else out


def cross_term(k: VPair, m: float, e=(0.0, 0.0, 1.0), tau=(1.0, 0.0, 0.0)) -> float:
    """4 m <k1, J d_e k2> with centered differences along e."""
    g = k.grid
    e = _unit(e)
    tau = _unit(tau)

    def de(x):
        site0 = 1 if x.ndim == 5 else 0
        out = np.zeros_like(x)
        for i in range(3):
            if e[i]:
                out += e[i] * (np.roll(x, -1, axis=site0 + i) - np.roll(x, 1, axis=site0 + i)) / (2 * g.h)
        return out

    s = 0.5 * float(np.sum(k.a * np.cross(tau, de(k.b)))) + 0.5 * float(np.sum(k.a0 * np.cross(tau, de(k.b0))))
    return 4 * m * s * g.h ** 3


def random_vpair(grid: Grid, rng: np.random.Generator, tau=(1.0, 0.0, 0.0), kmax: int = 2,
                 blocks: str = "both") -> VPair:
    """Band-limited random field projected onto V; ``blocks`` in {'both', 'first', 'second'}."""
    parts = []
    for deg in (1, 0, 1, 0):
        w = random_smooth(grid, deg, "su2", rng, kmax=kmax)
        parts.append(w.data if deg == 1 else w.data[0])
    k = VPair(grid, *parts)
    if blocks == "first":
        k = VPair(grid, k.a, k.a0, np.zeros_like(k.b), np.zeros_like(k.b0))
    elif blocks == "second":
        k = VPair(grid, np.zeros_like(k.a), np.zeros_like(k.a0), k.b, k.b0)
    elif blocks != "both":
        raise ValueError("blocks must be 'both', 'first' or 'second'")
    return k.project(tau)


def _identity_terms(k, m, e, tau):
    lk = apply_lm(k, m, e, tau)
    return norm_sq(lk), grad_norm_sq(k), m * m * norm_sq(k)


def square_identity_defect(m: float, trials: int = 3, n: int = 16, L: float = 2 * np.pi, seed: int = 0,
                           e=(0.0, 0.0, 1.0), tau=(1.0, 0.0, 0.0), blocks: str = "both", kmax: int = 2,
                           fields=None) -> float:
    """Worst |  ||L k||^2 - ||grad k||^2 - m^2 ||k||^2 | / ||L k||^2 over random fields."""
    if not m > 0:
        raise ValueError("m must be positive")
    grid = Grid(3, n, L)
    rng = np.random.default_rng(seed)
    worst = 0.0
    ks = fields if fields is not None else [random_vpair(grid, rng, tau, kmax, blocks) for _ in range(trials)]
    for k in ks:
        lk2, g2, m2 = _identity_terms(k, m, e, tau)
        if lk2 == 0:
            continue
        worst = max(worst, abs(lk2 - g2 - m2) / lk2)
    return worst


def corrected_identity_defect(m: float, trials: int = 3, n: int = 16, L: float = 2 * np.pi, seed: int = 0,
                              e=(0.0, 0.0, 1.0), tau=(1.0, 0.0, 0.0), kmax: int = 2) -> float:
    """As :func:`square_identity_defect` with the cross term 4 m <k1, J d_e k2> included."""
    grid = Grid(3, n, L)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        k = random_vpair(grid, rng, tau, kmax)
        lk2, g2, m2 = _identity_terms(k, m, e, tau)
        if lk2 == 0:
            continue
        worst = max(worst, abs(lk2 - g2 - m2 - cross_term(k, m, e, tau)) / lk2)
    return worst


def symmetry_defect(m: float, n: int = 16, L: float = 2 * np.pi, seed: int = 0,
                    e=(0.0, 0.0, 1.0), tau=(1.0, 0.0, 0.0)) -> float:
    """|<L j, k> - <j, L k>| / (||L j|| ||k||) for two random fields."""
    grid = Grid(3, n, L)
    rng = np.random.default_rng(seed)
    j = random_vpair(grid, rng, tau)
    k = random_vpair(grid, rng, tau)
    lj = apply_lm(j, m, e, tau)
    lk = apply_lm(k, m, e, tau)
    scale = math.sqrt(norm_sq(lj) * norm_sq(k))
    return abs(pairing(lj, k) - pairing(j, lk)) / scale


# ---------------------------------------------------------------------------
# massive Green's function
# ---------------------------------------------------------------------------

def greens_massive(y, m: float, x):
    """G_y(x) = exp(-m |x - y|) / (4 pi |x - y|)."""
    r = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)
    if np.any(r == 0):
        raise ValueError("Green's function evaluated at its pole")
    return np.exp(-m * r) / (4 * np.pi * r)


def greens_radial_bounds(m: float, r):
    """(|G|, |dG|, |Hess G|) as functions of the distance r."""
    r = np.asarray(r, dtype=float)
    G = np.exp(-m * r) / (4 * np.pi * r)
    g1 = G * (m + 1 / r)
    g2 = G * ((m + 1 / r) ** 2 + 1 / r ** 2)
    hess = np.sqrt(g2 ** 2 + 2 * (g1 / r) ** 2)
    return G, g1, hess


@dataclass
class DecayReport:
    passed: bool
    constant: float
    worst_ratio: float


def decay_check(m: float, deltas=None, r_max: float | None = None, samples: int = 400) -> DecayReport:
    """sup_{r >= delta} (|G| + |dG| + |Hess G|) <= C exp(-m delta / 2) for each delta,
    with C fitted at the smallest delta."""
    if not m > 0:
        raise ValueError("m must be positive")
    deltas = np.linspace(0.25, 8.0, 32) / m if deltas is None else np.asarray(deltas, dtype=float)
    r_max = 4 * deltas.max() if r_max is None else r_max
    rs = np.geomspace(deltas.min(), r_max, samples)
    total = sum(greens_radial_bounds(m, rs))
    d0 = deltas.min()
    C = float(sum(greens_radial_bounds(m, d0))) * math.exp(m * d0 / 2)
    worst = 0.0
    for d in deltas:
        sup = float(np.max(total[rs >= d - 1e-15]))
        worst = max(worst, sup / (C * math.exp(-m * d / 2)))
    return DecayReport(worst <= 1 + 1e-12, C, worst)


@dataclass
class GreensResidual:
    l2: float         # ||(-Lap_h + m^2) G|| / ||m^2 G|| over the shell
    pointwise: float  # max |(-Lap_h + m^2) G| / (|Lap_h G| + m^2 |G|) over the shell


def greens_residual(m: float = 1.0, n: int = 128, L: float = 16.0) -> GreensResidual:
    """Discrete (-Lap_h + m^2) applied to the sampled closed form on the shell
    8h <= |x - y| <= L/8, with the pole y at a cell center."""
    grid = Grid(3, n, L)
    y = np.full(3, L / 2 + grid.h / 2)
    pts = np.stack(grid.coords(), axis=-1)
    G = greens_massive(y, m, pts)
    lap = sum(np.roll(G, 1, axis=i) - 2 * G + np.roll(G, -1, axis=i) for i in range(3)) / grid.h ** 2
    r = np.linalg.norm(pts - y, axis=-1)
    shell = (r >= 8 * grid.h) & (r <= L / 8)
    if not np.any(shell):
        raise ValueError("empty shell: need L/8 >= 8h")
    res = np.abs(-lap + m * m * G)[shell]
    l2 = float(np.sqrt(np.sum(res ** 2) / np.sum((m * m * G[shell]) ** 2)))
    pw = float(np.max(res / (np.abs(lap[shell]) + m * m * G[shell])))
    return GreensResidual(l2, pw)
