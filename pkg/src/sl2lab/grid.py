"""Flat periodic lattices and discrete exterior calculus.

A p-form on a ``dim``-dimensional lattice is stored as an array of shape
``(C(dim, p), n, ..., n, *value_shape)``.  Component ``I`` (a sorted tuple of
axes) is the coefficient of ``dx^I``.  Values are real scalars, su(2)
coefficient vectors (trailing axis 3) or complex su(2) vectors.

The exterior derivative uses forward differences and the codifferential is
its exact adjoint for the pairing ``h^dim * sum <a, b>``, which is built from
backward differences.  Site ``j`` sits at coordinate ``j * h``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from scipy import ndimage
from scipy.sparse.linalg import LinearOperator, cg

from . import _backend

KINDS = ("real", "su2", "su2c")


@dataclass(frozen=True)
class Grid:
    dim: int
    n: int
    L: float = 1.0

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 4:
            raise ValueError(f"n must be at least 4, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def volume(self) -> float:
        return self.L ** self.dim

    def coords(self):
        """Site coordinates as a list of ``dim`` broadcastable arrays."""
        x = np.arange(self.n) * self.h
        return np.meshgrid(*([x] * self.dim), indexing="ij")

    def displacement(self, center):
        """Minimum-image displacement x - center for every site, shape (dim, *shape)."""
        center = np.asarray(center, dtype=float)
        out = []
        for ax, xa in enumerate(self.coords()):
            d = xa - center[ax]
            d -= self.L * np.round(d / self.L)
            out.append(d)
        return np.stack(out)

    def distance(self, center):
        return np.sqrt(np.sum(self.displacement(center) ** 2, axis=0))


@lru_cache(maxsize=None)
def components(dim: int, p: int) -> tuple:
    return tuple(itertools.combinations(range(dim), p))


def value_shape(kind: str) -> tuple:
    if kind == "real":
        return ()
    if kind in ("su2", "su2c"):
        return (3,)
    raise ValueError(f"unknown value kind {kind!r}")


@dataclass
class DiscreteForm:
    grid: Grid
    degree: int
    data: np.ndarray
    kind: str = "real"

    def __post_init__(self):
        if not 0 <= self.degree <= self.grid.dim:
            raise ValueError(f"degree {self.degree} out of range for dim {self.grid.dim}")
        expected = (comb(self.grid.dim, self.degree),) + self.grid.shape + value_shape(self.kind)
        if self.data.shape != expected:
            raise ValueError(f"data shape {self.data.shape} != {expected}")

    @classmethod
    def zeros(cls, grid: Grid, degree: int, kind: str = "real"):
        shape = (comb(grid.dim, degree),) + grid.shape + value_shape(kind)
        dtype = complex if kind == "su2c" else float
        return cls(grid, degree, np.zeros(shape, dtype=dtype), kind)

    def copy(self):
        return DiscreteForm(self.grid, self.degree, self.data.copy(), self.kind)

    def _like(self, data):
        return DiscreteForm(self.grid, self.degree, data, self.kind)

    def __add__(self, other):
        return self._like(self.data + other.data)

    def __sub__(self, other):
        return self._like(self.data - other.data)

    def __mul__(self, s):
        return self._like(self.data * s)

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.data)

    def component(self, idx):
        """Coefficient array of ``dx^idx`` (idx a sorted tuple)."""
        return self.data[components(self.grid.dim, self.degree).index(tuple(idx))]


# ---------------------------------------------------------------------------
# difference operators on raw arrays (site axes start at axis 1 of form data)
# ---------------------------------------------------------------------------

def dplus(f, axis, h):
    return (np.roll(f, -1, axis=axis) - f) / h


def dminus(f, axis, h):
    return (f - np.roll(f, 1, axis=axis)) / h


def extder_array(data, dim, p, h, site_axis0=1):
    """Forward-difference d on raw component data of a p-form."""
    out_comps = components(dim, p + 1)
    in_comps = components(dim, p)
    out = np.zeros((len(out_comps),) + data.shape[1:], dtype=data.dtype)
    for a, J in enumerate(out_comps):
        for j, i in enumerate(J):
            rest = J[:j] + J[j + 1:]
            b = in_comps.index(rest)
            term = dplus(data[b], i + site_axis0 - 1, h)
            out[a] += term if j % 2 == 0 else -term
    return out


def coder_array(data, dim, p, h, site_axis0=1):
    """Exact adjoint of :func:`extder_array` (degree p -> p-1)."""
    out_comps = components(dim, p - 1)
    in_comps = components(dim, p)
    out = np.zeros((len(out_comps),) + data.shape[1:], dtype=data.dtype)
    for b, J in enumerate(in_comps):
        for j, i in enumerate(J):
            rest = J[:j] + J[j + 1:]
            a = out_comps.index(rest)
            term = dminus(data[b], i + site_axis0 - 1, h)
            # adjoint of (+/-) D+ is (-/+) D-
            out[a] += -term if j % 2 == 0 else term
    return out


def extder(w: DiscreteForm) -> DiscreteForm:
    """Forward-difference exterior derivative."""
    if w.degree >= w.grid.dim:
        raise ValueError("extder: degree overflow")
    data = extder_array(w.data, w.grid.dim, w.degree, w.grid.h)
    return DiscreteForm(w.grid, w.degree + 1, data, w.kind)


def coder(w: DiscreteForm) -> DiscreteForm:
    """Backward-difference codifferential, the exact adjoint of :func:`extder`."""
    if w.degree < 1:
        raise ValueError("coder: degree underflow")
    data = coder_array(w.data, w.grid.dim, w.degree, w.grid.h)
    return DiscreteForm(w.grid, w.degree - 1, data, w.kind)


@lru_cache(maxsize=None)
def hodge_table(dim: int, p: int):
    """(target index, sign) for each source component of a p-form."""
    src = components(dim, p)
    dst = components(dim, dim - p)
    table = []
    for I in src:
        Ic = tuple(i for i in range(dim) if i not in I)
        perm = I + Ic
        inversions = sum(1 for a in range(dim) for b in range(a + 1, dim) if perm[a] > perm[b])
        table.append((dst.index(Ic), -1.0 if inversions % 2 else 1.0))
    return tuple(table)


def hodge_array(data, dim, p):
    out = np.empty_like(data)
    for a, (b, s) in enumerate(hodge_table(dim, p)):
        out[b] = s * data[a]
    return out


def hodge(w: DiscreteForm) -> DiscreteForm:
    """Flat-metric Hodge star; a signed permutation of components."""
    data = hodge_array(w.data, w.grid.dim, w.degree)
    return DiscreteForm(w.grid, w.grid.dim - w.degree, data, w.kind)


# ---------------------------------------------------------------------------
# pairings and integration
# ---------------------------------------------------------------------------

def pointwise_inner(a, b, kind):
    """Sum over form components of the value inner product, per site."""
    if kind == "real":
        return np.sum(a * b, axis=0)
    if kind == "su2":
        return 0.5 * np.sum(a * b, axis=(0, -1))
    # Hermitian real part, so |A + i alpha|^2 = |A|^2 + |alpha|^2
    return 0.5 * np.sum((np.conj(a) * b).real, axis=(0, -1))


def pointwise_norm_sq(w: DiscreteForm):
    return pointwise_inner(w.data, w.data, w.kind)


def pair(a: DiscreteForm, b: DiscreteForm) -> float:
    """Integrated inner product h^dim * sum_sites <a, b>."""
    if a.degree != b.degree:
        raise ValueError("pair: degree mismatch")
    return float(np.sum(pointwise_inner(a.data, b.data, a.kind))) * a.grid.h ** a.grid.dim


def norm_sq(w: DiscreteForm) -> float:
    return pair(w, w)


def integrate(w):
    """h^dim times the site sum of a 0-form or top form (real or su(2) valued)."""
    if isinstance(w, DiscreteForm):
        if w.degree not in (0, w.grid.dim):
            raise ValueError("integrate expects a 0-form or a top-degree form")
        return np.sum(w.data[0], axis=tuple(range(w.grid.dim))) * w.grid.h ** w.grid.dim
    raise TypeError("integrate expects a DiscreteForm")


def integrate_scalar(grid: Grid, f) -> float:
    """h^dim * sum of a plain site array."""
    return float(np.sum(f)) * grid.h ** grid.dim


# ---------------------------------------------------------------------------
# balls, shells and spheres
# ---------------------------------------------------------------------------

def _check_ball(grid: Grid, r: float):
    if r > grid.L / 4 + 1e-12:
        raise ValueError(f"radius {r} exceeds L/4 = {grid.L / 4}")


def ball_integral(grid: Grid, f, center, r: float, edge: str = "sharp") -> float:
    """Integral of the site array ``f`` over the ball B_r(center).

    ``edge="sharp"`` counts sites with |x - c| <= r.  ``edge="smooth"`` gives
    each site the weight clip((r - |x - c|)/h + 1/2, 0, 1), which removes most
    of the lattice-count noise.
    """
    _check_ball(grid, r)
    rho = grid.distance(center)
    width = 0.0 if edge == "sharp" else grid.h
    sums = _backend.ball_sums(np.ravel(np.asarray(f, dtype=float)), np.ravel(rho),
                              np.array([r], dtype=float), width)
    return float(sums[0]) * grid.h ** grid.dim


def ball_integrals(grid: Grid, f, center, radii, edge: str = "smooth") -> np.ndarray:
    """:func:`ball_integral` for many radii in one pass over the sites.

    ``edge="corrected"`` starts from the ramp weights, which equal the sharp
    ball averaged over radii uniform in [r - h/2, r + h/2] and so carry the
    bias (h^2/24) I''(r); the bias is removed with a second difference over
    r - h, r, r + h.
    """
    radii = np.asarray(radii, dtype=float)
    for r in radii:
        _check_ball(grid, r)
    rho = np.ravel(grid.distance(center))
    vals = np.ravel(np.asarray(f, dtype=float))
    if edge == "corrected":
        h = grid.h
        aux = np.concatenate([radii - h, radii, radii + h])
        s = _backend.ball_sums(vals, rho, aux, h) * h ** grid.dim
        lo, mid, hi = np.split(s, 3)
        return mid - (hi - 2 * mid + lo) / 24
    width = 0.0 if edge == "sharp" else grid.h
    sums = _backend.ball_sums(vals, rho, radii, width)
    return sums * grid.h ** grid.dim


def shell_integral(grid: Grid, f, center, r: float, thickness: float | None = None) -> float:
    """Integral over the sphere of radius r, as (shell volume sum) / thickness."""
    _check_ball(grid, r)
    t = 2.0 * grid.h if thickness is None else thickness
    rho = grid.distance(center)
    mask = (rho > r - t / 2) & (rho <= r + t / 2)
    if not np.any(mask):
        raise ValueError(f"empty shell at r = {r}")
    return float(np.sum(np.asarray(f)[mask])) * grid.h ** grid.dim / t


def sphere_nodes(dim: int, n_theta: int = 48, n_phi: int = 96, n_circle: int = 256):
    """Unit-sphere quadrature nodes and weights (weights sum to the sphere area).

    3-D: Gauss-Legendre in cos(theta) times uniform phi.  2-D: uniform circle.
    """
    if dim == 2:
        m = n_circle
        phi = 2 * np.pi * np.arange(m) / m
        pts = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return pts, np.full(m, 2 * np.pi / m)
    x, w = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    ct, ph = np.meshgrid(x, phi, indexing="ij")
    st = np.sqrt(1 - ct ** 2)
    pts = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)
    wts = np.repeat(w, n_phi) * (2 * np.pi / n_phi)
    return pts, wts


class PeriodicInterpolant:
    """Cubic-spline interpolation of a periodic site array."""

    def __init__(self, grid: Grid, f):
        self.grid = grid
        self.coef = ndimage.spline_filter(np.asarray(f, dtype=float), order=3, mode="grid-wrap")

    def __call__(self, points):
        pts = np.atleast_2d(points)
        idx = (pts / self.grid.h).T
        return ndimage.map_coordinates(self.coef, idx, order=3, mode="grid-wrap", prefilter=False)


def sphere_integral(grid: Grid, f, center, r: float, interp: PeriodicInterpolant | None = None) -> float:
    """Integral of a smooth single-valued site array over the sphere |x - c| = r."""
    _check_ball(grid, r)
    interp = interp if interp is not None else PeriodicInterpolant(grid, f)
    pts, wts = sphere_nodes(grid.dim)
    vals = interp(np.asarray(center, dtype=float) + r * pts)
    return float(np.dot(wts, vals)) * r ** (grid.dim - 1)


# ---------------------------------------------------------------------------
# Helmholtz solves
# ---------------------------------------------------------------------------

class SolverError(RuntimeError):
    pass


def laplacian_symbol(grid: Grid):
    """Eigenvalues of d^dagger d on scalar Fourier modes, shape grid.shape."""
    k = np.fft.fftfreq(grid.n) * grid.n
    lam1 = (2.0 / grid.h * np.sin(np.pi * k / grid.n)) ** 2
    grids = np.meshgrid(*([lam1] * grid.dim), indexing="ij")
    return sum(grids)


def hodge_laplacian_array(data, dim, p, h):
    out = np.zeros_like(data)
    if p < dim:
        out += coder_array(extder_array(data, dim, p, h), dim, p + 1, h)
    if p > 0:
        out += extder_array(coder_array(data, dim, p, h), dim, p - 1, h)
    return out


def solve_helmholtz(f: DiscreteForm, m: float, rtol: float = 1e-10, maxiter: int | None = None) -> DiscreteForm:
    """Solve (d^dagger d + d d^dagger + m^2) u = f by conjugate gradients.

    On the flat lattice the Hodge Laplacian acts componentwise as the scalar
    lattice Laplacian, so its FFT inverse is used as the preconditioner.
    """
    if f.kind == "su2c":
        raise ValueError("solve_helmholtz expects a real or su(2) valued form")
    if not m > 0:
        raise ValueError("m must be positive on the torus (constant forms are harmonic)")
    grid = f.grid
    dim, p, h = grid.dim, f.degree, grid.h
    shape = f.data.shape
    if not np.any(f.data):
        return f._like(np.zeros_like(f.data))
    site_axes = tuple(range(1, 1 + dim))
    symbol = laplacian_symbol(grid) + m * m
    symbol = symbol.reshape((1,) + grid.shape + (1,) * (len(shape) - 1 - dim))

    def matvec(x):
        u = x.reshape(shape)
        return (hodge_laplacian_array(u, dim, p, h) + m * m * u).ravel()

    def precond(x):
        u = x.reshape(shape)
        return np.fft.ifftn(np.fft.fftn(u, axes=site_axes) / symbol, axes=site_axes).real.ravel()

    size = f.data.size
    op = LinearOperator((size, size), matvec=matvec, dtype=float)
    pre = LinearOperator((size, size), matvec=precond, dtype=float)
    maxiter = 10 * grid.n ** dim if maxiter is None else maxiter
    sol, info = cg(op, f.data.ravel(), rtol=rtol, atol=0.0, maxiter=maxiter, M=pre)
    if info != 0:
        raise SolverError(f"conjugate gradient did not converge (info={info})")
    return f._like(sol.reshape(shape))


def delta_ball(grid: Grid, p, eps: float) -> np.ndarray:
    """v^{-1} on the lattice ball of radius eps about p, normalized to integral 1."""
    mask = grid.distance(p) <= eps
    count = int(np.count_nonzero(mask))
    return mask / (count * grid.h ** grid.dim)


def greens_regularized(grid: Grid, p, eps: float) -> np.ndarray:
    """Solution of (d^dagger d + 1) f = delta_{p,eps} on a 3-D torus."""
    if grid.dim != 3:
        raise ValueError("greens_regularized needs dim = 3")
    if not grid.h < eps < grid.L / 8:
        raise ValueError(f"eps must lie in (h, L/8) = ({grid.h}, {grid.L / 8}), got {eps}")
    rhs = DiscreteForm(grid, 0, delta_ball(grid, p, eps)[None], "real")
    return solve_helmholtz(rhs, 1.0).data[0]


def g_eps(x, eps: float):
    """Leading profile of the regularized Green's function without its constant."""
    x = np.asarray(x, dtype=float)
    inner_part = 3.0 / (8 * np.pi * eps) * (1 - x ** 2 / (3 * eps ** 2))
    with np.errstate(divide="ignore"):
        outer = 1.0 / (4 * np.pi * x)
    return np.where(x > eps, outer, inner_part)


def random_smooth(grid: Grid, degree: int, kind: str, rng: np.random.Generator,
                  kmax: int = 2, amplitude: float = 1.0) -> DiscreteForm:
    """Band-limited random form: a sum of Fourier modes with |k_i| <= kmax.

    Each component and value coefficient receives independent Gaussian
    amplitudes for cos and sin parts, scaled so the RMS value per component
    is about ``amplitude``.
    """
    if kind == "su2c":
        re_part = random_smooth(grid, degree, "su2", rng, kmax, amplitude)
        im_part = random_smooth(grid, degree, "su2", rng, kmax, amplitude)
        return DiscreteForm(grid, degree, re_part.data + 1j * im_part.data, "su2c")
    out = DiscreteForm.zeros(grid, degree, kind)
    xs = grid.coords()
    ks = [k for k in itertools.product(range(-kmax, kmax + 1), repeat=grid.dim) if any(k)]
    scale = amplitude / np.sqrt(len(ks))
    vshape = value_shape(kind)
    for k in ks:
        phase = sum(2 * np.pi * ki * xi / grid.L for ki, xi in zip(k, xs))
        c = rng.normal(size=(out.data.shape[0],) + vshape) * scale
        s = rng.normal(size=(out.data.shape[0],) + vshape) * scale
        cph, sph = np.cos(phase), np.sin(phase)
        for a in range(out.data.shape[0]):
            if vshape:
                out.data[a] += cph[..., None] * c[a] + sph[..., None] * s[a]
            else:
                out.data[a] += cph * c[a] + sph * s[a]
    return out
