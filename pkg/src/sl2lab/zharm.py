"""Z/2-harmonic 1-forms in branch-cut representation.

A section of T*M (x) I is stored as an ordinary 1-form together with a cut
descriptor.  The value jumps by the factor (-1)^k across the cut, which is
the ray {arg = pi} from the zero in 2-D or the half-plane bounded by the
zero axis in 3-D.  |nu| and nu (x) nu are single valued.  Difference
stencils multiply the far value by the crossing sign of the link, and loop
holonomy is the product of those signs.

Model forms
-----------
In the plane through the zero spanned by a frame (e1, e2), with
z = <x - p, e1> + i <x - p, e2>,

    nu = Re(f dz) = Re(f) e1* - Im(f) e2*,  f = c z^{k/2} (principal branch)

so |nu| = c rho^{k/2} and |grad nu|^2 = 2 |f'|^2.  In 3-D the form does not
depend on the axis coordinate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _backend
from .grid import Grid, PeriodicInterpolant


# ---------------------------------------------------------------------------
# cuts and holonomy
# ---------------------------------------------------------------------------

@dataclass
class Cut:
    """Zero point (2-D) or zero axis (3-D) with the plane frame used for angles."""

    point: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    k: int
    c: float | None = None  # leading amplitude, |nu| ~ c rho^{k/2}, when known

    @property
    def sign(self) -> int:
        return -1 if self.k % 2 else 1

    def plane_coords(self, x):
        x = np.asarray(x, dtype=float)
        d = x - self.point
        return d @ self.e1, d @ self.e2

    def angle(self, x):
        u, v = self.plane_coords(x)
        return np.arctan2(v, u)

    def distance(self, x):
        u, v = self.plane_coords(x)
        return np.hypot(u, v)

    def crosses(self, x, y):
        """True where the straight segment x -> y crosses the cut.

        The principal angle jumps by more than pi exactly when the segment
        passes the arg = pi ray, for segments that stay clear of the zero.
        """
        return np.abs(self.angle(y) - self.angle(x)) > np.pi


def make_cut(dim: int, point, k: int, axis=None, c: float | None = None) -> Cut:
    point = np.asarray(point, dtype=float)
    if dim == 2:
        return Cut(point, np.array([1.0, 0.0]), np.array([0.0, 1.0]), k, c)
    axis = np.array([0.0, 0.0, 1.0]) if axis is None else np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    trial = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = trial - axis * (trial @ axis)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return Cut(point, e1, e2, k, c)


# ---------------------------------------------------------------------------
# model forms
# ---------------------------------------------------------------------------

@dataclass
class ModelZForm:
    k: int
    c: float = 1.0
    dim: int = 2
    center: tuple | None = None
    axis: tuple | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if not self.c > 0:
            raise ValueError("amplitude c must be positive")
        if self.center is None:
            self.center = (0.0,) * self.dim
        self.cut = make_cut(self.dim, self.center, self.k, self.axis, self.c)

    @property
    def n0(self) -> float:
        return self.k / 2

    def _z(self, x):
        u, v = self.cut.plane_coords(x)
        return u + 1j * v

    def f(self, x):
        z = self._z(x)
        return self.c * z ** (self.k / 2)

    def norm(self, x):
        """|nu| = c rho^{k/2}, exact and defined on the zero set."""
        return self.c * self.cut.distance(x) ** (self.k / 2)

    def value(self, x):
        """Components of nu at points x (..., dim) in the cut representation."""
        x = np.asarray(x, dtype=float)
        fv = self.f(x)
        if np.any(self.cut.distance(x) == 0):
            raise ValueError("form value undefined on the zero set")
        return (fv.real[..., None] * self.cut.e1 - fv.imag[..., None] * self.cut.e2)

    def jacobian(self, x):
        """d nu as (..., dim, dim) with entry [a, b] = d_b nu_a."""
        x = np.asarray(x, dtype=float)
        z = self._z(x)
        fp = self.c * (self.k / 2) * z ** (self.k / 2 - 1)
        e1, e2 = self.cut.e1, self.cut.e2
        # in plane coordinates: [[Re f', -Im f'], [-Im f', -Re f']]
        m11, m12, m22 = fp.real, -fp.imag, -fp.real
        outer = lambda a, b: a[:, None] * b[None, :]  # noqa: E731
        return (m11[..., None, None] * outer(e1, e1) + m12[..., None, None] * (outer(e1, e2) + outer(e2, e1))
                + m22[..., None, None] * outer(e2, e2))

    def potential(self, x):
        """Phi with d Phi = nu locally: Re(c z^{k/2+1} / (k/2 + 1))."""
        z = self._z(x)
        return (self.c * z ** (self.k / 2 + 1) / (self.k / 2 + 1)).real

    def sample(self, grid: Grid, center=None) -> "CutBundleField":
        """Sample on a lattice; the zero sits at ``center`` (default: box center
        shifted by half a cell in the plane so no site lies on the zero set)."""
        if grid.dim != self.dim:
            raise ValueError("grid dimension does not match the model")
        if center is None:
            center = default_center(grid)
        m = ModelZForm(self.k, self.c, self.dim, tuple(center), self.axis)
        pts = _site_points(grid)
        vals = np.moveaxis(m.value(pts), -1, 0)
        jac = np.moveaxis(np.moveaxis(m.jacobian(pts), -1, 0), -1, 0)  # [a, b, ...]
        return CutBundleField(grid, vals, [m.cut], evaluator=m, exact_jacobian=jac)

    def holonomy_around_axis(self, radius: float = 1.0, steps: int = 64) -> int:
        """Sign picked up by analytic continuation once around the zero."""
        th = np.linspace(0, 2 * np.pi, steps + 1)
        # continue z^{k/2} continuously: the branch factor is exp(i pi k)
        cont = radius ** (self.k / 2) * np.exp(1j * self.k / 2 * th)
        return int(np.sign((cont[-1] / cont[0]).real))


def default_center(grid: Grid):
    """Box center offset by half a cell along the first two axes."""
    c = [grid.L / 2] * grid.dim
    c[0] += grid.h / 2
    c[1] += grid.h / 2
    return tuple(c)


def _site_points(grid: Grid):
    return np.stack(grid.coords(), axis=-1)


@dataclass
class Superposition:
    """Sum of models sharing one zero (and cut), for example nu_1 + 0.1 nu_3."""

    models: list

    @property
    def dim(self):
        return self.models[0].dim

    def value(self, x):
        return sum(m.value(x) for m in self.models)

    def jacobian(self, x):
        return sum(m.jacobian(x) for m in self.models)

    def norm(self, x):
        return np.linalg.norm(self.value(x), axis=-1)

    def sample(self, grid: Grid, center=None) -> "CutBundleField":
        if center is None:
            center = default_center(grid)
        ms = [ModelZForm(m.k, m.c, m.dim, tuple(center), m.axis) for m in self.models]
        pts = _site_points(grid)
        s = Superposition(ms)
        vals = np.moveaxis(s.value(pts), -1, 0)
        jac = np.moveaxis(np.moveaxis(s.jacobian(pts), -1, 0), -1, 0)
        # parity of the product cut is that of the lowest order term
        k = min(m.k for m in ms)
        if any((m.k - k) % 2 for m in ms):
            raise ValueError("superposed models must share the parity of k")
        lead = sum(m.c for m in ms if m.k == k)
        cut = make_cut(grid.dim, center, k, ms[0].axis, lead)
        return CutBundleField(grid, vals, [cut], evaluator=s, exact_jacobian=jac)


# ---------------------------------------------------------------------------
# sampled fields
# ---------------------------------------------------------------------------

@dataclass
class CutBundleField:
    """Lattice 1-form (dim, *sites) plus cuts; optional closed-form extras.

    ``domain_radius`` restricts a non-periodic disk model to the sites within
    that distance of the box center.
    """

    grid: Grid
    data: np.ndarray
    cuts: list = field(default_factory=list)
    evaluator: object = None
    exact_jacobian: np.ndarray | None = None
    domain_radius: float | None = None

    def norm_sq(self):
        return np.sum(self.data ** 2, axis=0)

    def zero_points(self):
        return [c.point for c in self.cuts]

    def distance_to_zeros(self, pts=None):
        pts = _site_points(self.grid) if pts is None else pts
        if not self.cuts:
            return np.full(pts.shape[:-1], np.inf)
        return np.min(np.stack([c.distance(pts) for c in self.cuts]), axis=0)

    def link_sign(self, axis: int, direction: int = 1):
        """(-1)^{crossings} for the link from each site to its neighbor."""
        g = self.grid
        pts = _site_points(g)
        nb = pts.copy()
        nb[..., axis] += direction * g.h
        sign = np.ones(g.shape)
        for c in self.cuts:
            if c.sign < 0:
                sign = np.where(c.crosses(pts, nb), -sign, sign)
        return sign

    def neighbor(self, arr, axis: int, direction: int = 1):
        """Values of ``arr`` (leading form axes allowed) at x + direction h e_axis,
        continued across the cut."""
        s = self.link_sign(axis, direction)
        rolled = np.roll(arr, -direction, axis=arr.ndim - self.grid.dim + axis)
        return rolled * s

    def interior_mask(self, exclusion: float, margin: int = 2):
        """Sites farther than ``exclusion`` from every zero and, for disk
        domains, at least ``margin`` cells inside the domain."""
        g = self.grid
        mask = self.distance_to_zeros() > exclusion
        if self.domain_radius is not None:
            r = g.distance([g.L / 2] * g.dim)
            mask &= r < self.domain_radius - margin * g.h
        else:
            # stay off the periodic seam, where a non-periodic model jumps
            if self.cuts:
                lo = margin * g.h
                hi = g.L - (margin + 1) * g.h
                for xa in g.coords():
                    mask &= (xa > lo) & (xa < hi)
        return mask

    def values_at(self, pts):
        """nu at arbitrary points (M, dim): closed form when available, else
        multilinear interpolation with each corner value continued to the
        target point (sign flipped when the corner-to-point segment crosses a cut)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.evaluator is not None:
            return self.evaluator.value(pts)
        g = self.grid
        f = pts / g.h
        i0 = np.floor(f).astype(int)
        t = f - i0
        out = np.zeros(pts.shape)
        for off in np.ndindex(*(2,) * g.dim):
            o = np.array(off)
            idx = i0 + o
            w = np.prod(np.where(o == 1, t, 1 - t), axis=1)
            vals = self.data[(slice(None),) + tuple((idx % g.n).T)].T
            corner = idx * g.h
            for c in self.cuts:
                if c.sign < 0:
                    vals = np.where(c.crosses(corner, pts)[:, None], -vals, vals)
            out += w[:, None] * vals
        return out

    def gradient(self, centered: bool = True):
        """d_b nu_a as (dim, dim, *sites): exact when available, else cut-aware
        centered differences."""
        if self.exact_jacobian is not None:
            return self.exact_jacobian
        g = self.grid
        out = np.empty((g.dim, g.dim) + g.shape)
        for b in range(g.dim):
            fwd = self.neighbor(self.data, b, 1)
            if centered:
                bwd = self.neighbor(self.data, b, -1)
                out[:, b] = (fwd - bwd) / (2 * g.h)
            else:
                out[:, b] = (fwd - self.data) / g.h
        return out


def constant_field(grid: Grid, vector) -> CutBundleField:
    vec = np.asarray(vector, dtype=float)
    data = np.broadcast_to(vec.reshape((grid.dim,) + (1,) * grid.dim), (grid.dim,) + grid.shape).copy()
    jac = np.zeros((grid.dim, grid.dim) + grid.shape)
    return CutBundleField(grid, data, [], evaluator=None, exact_jacobian=jac)


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------

@dataclass
class HarmonicityReport:
    d_norm: float
    dstar_norm: float
    bochner: float
    grad_norm: float

    @property
    def d_rel(self):
        return self.d_norm / self.grad_norm if self.grad_norm else 0.0

    @property
    def dstar_rel(self):
        return self.dstar_norm / self.grad_norm if self.grad_norm else 0.0


def harmonicity_residual(v: CutBundleField, exclusion: float) -> HarmonicityReport:
    """(||d nu||, ||d^* nu||) off the zero set with cut-corrected forward/backward
    stencils, plus the relative residual of 1/2 d^dagger d |nu|^2 + |grad nu|^2 = 0."""
    g = v.grid
    if exclusion < 4 * g.h - 1e-12:
        raise ValueError("exclusion radius must be at least 4h")
    h, dim = g.h, g.dim
    mask = v.interior_mask(exclusion)
    vol = h ** dim
    dnu_sq = np.zeros(g.shape)
    for i in range(dim):
        for j in range(i + 1, dim):
            dij = ((v.neighbor(v.data[j], i) - v.data[j]) - (v.neighbor(v.data[i], j) - v.data[i])) / h
            dnu_sq += dij ** 2
    div = np.zeros(g.shape)
    for i in range(dim):
        div += (v.data[i] - v.neighbor(v.data[i], i, -1)) / h
    # centered gradient of nu and five-point Laplacian of |nu|^2
    fd = CutBundleField(g, v.data, v.cuts, domain_radius=v.domain_radius)
    grad = fd.gradient(centered=True)
    grad_sq = np.sum(grad ** 2, axis=(0, 1))
    nsq = v.norm_sq()
    lap = np.zeros(g.shape)
    for i in range(dim):
        lap += (np.roll(nsq, -1, axis=i) - 2 * nsq + np.roll(nsq, 1, axis=i)) / h ** 2
    boch = -0.5 * lap + grad_sq
    gn = float(np.sqrt(np.sum(grad_sq[mask]) * vol))
    bochner_rel = float(np.sum(np.abs(boch[mask])) / np.sum(grad_sq[mask])) if np.any(grad_sq[mask]) else 0.0
    return HarmonicityReport(float(np.sqrt(np.sum(dnu_sq[mask]) * vol)), float(np.sqrt(np.sum(div[mask] ** 2) * vol)),
                             bochner_rel, gn)


class LoopError(ValueError):
    pass


def holonomy(v: CutBundleField, loop, min_clearance: float | None = None) -> int:
    """Product of cut-crossing signs along a closed polygonal loop."""
    pts = np.asarray(loop, dtype=float)
    if not np.allclose(pts[0], pts[-1]):
        pts = np.vstack([pts, pts[:1]])
    clearance = 2 * v.grid.h if min_clearance is None else min_clearance
    sign = 1
    for c in v.cuts:
        if np.any(c.distance(pts) < clearance):
            raise LoopError("loop passes within the exclusion zone of a zero")
        # refine segments so each sub-step is short compared with the clearance
        for a, b in zip(pts[:-1], pts[1:]):
            nsub = max(1, int(math.ceil(np.linalg.norm(b - a) / (0.5 * clearance))))
            ts = np.linspace(0, 1, nsub + 1)[:, None]
            seg = a + ts * (b - a)
            crossings = int(np.count_nonzero(c.crosses(seg[:-1], seg[1:])))
            if crossings % 2 and c.sign < 0:
                sign = -sign
    return sign


def square_loop(center, half_width: float, dim: int = 2, h: float | None = None):
    """Closed lattice-style square loop in the plane of the first two axes."""
    c = np.asarray(center, dtype=float)
    corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1], [-1, -1]], dtype=float) * half_width
    pts = np.zeros((5, dim))
    pts[:, :2] = corners
    return pts + c


# ---------------------------------------------------------------------------
# quadratic differentials
# ---------------------------------------------------------------------------

@dataclass
class QuadDiff:
    """mu = c dz^2 on the square torus C/(Z + iZ) or mu = z^k dz^2 on the disk."""

    surface: str
    c: complex = 1.0
    k: int = 1

    def __post_init__(self):
        if self.surface not in ("torus", "disk"):
            raise ValueError("surface must be 'torus' or 'disk'")
        if self.surface == "torus" and self.c == 0:
            raise ValueError("mu must be non-trivial")

    @property
    def genus(self):
        return 1 if self.surface == "torus" else None


@dataclass
class PipelineResult:
    grid: Grid
    e: np.ndarray          # complex coefficient of dz at sites (cut representation)
    mu: np.ndarray         # complex coefficient of dz^2 at sites
    nu: CutBundleField
    zeros: list
    square_residual: float
    cr_residual: float

    @property
    def zero_count(self) -> int:
        return int(sum(m for _, m in self.zeros))


def _box_winding(ang, idx, wrap, pad: int = 3) -> int:
    """Winding of arg(mu) around a padded box enclosing a plaquette cluster.

    Single plaquettes are ambiguous when an edge increment is exactly +-pi
    (a double zero at a plaquette center), so the count is redone on a wider
    loop where every step is well below pi.
    """
    n0, n1 = ang.shape
    lo = idx.min(axis=0) - pad + 1
    hi = idx.max(axis=0) + pad
    i = np.arange(lo[0], hi[0] + 1)
    j = np.arange(lo[1], hi[1] + 1)
    loop_i = np.concatenate([i, np.full(len(j) - 1, hi[0]), i[::-1][1:], np.full(len(j) - 2, lo[0])])
    loop_j = np.concatenate([np.full(len(i), lo[1]), j[1:], np.full(len(i) - 1, hi[1]), j[::-1][1:-1]])
    a = ang[loop_i % n0, loop_j % n1]
    total = np.sum(wrap(np.roll(a, -1) - a))
    return int(np.rint(total / (2 * np.pi)))


def _winding_zeros(grid: Grid, mu, mask=None):
    """Zeros of mu located by the winding number of arg(mu) around each plaquette."""
    ang = np.angle(mu)

    def wrap(d):
        return (d + np.pi) % (2 * np.pi) - np.pi

    a00 = ang
    a10 = np.roll(ang, -1, axis=0)
    a11 = np.roll(a10, -1, axis=1)
    a01 = np.roll(ang, -1, axis=1)
    w = wrap(a10 - a00) + wrap(a11 - a10) + wrap(a01 - a11) + wrap(a00 - a01)
    wind = np.rint(w / (2 * np.pi)).astype(int)
    if mask is not None:
        wind = np.where(mask, wind, 0)
    # neighboring plaquettes around a higher-order zero can split its winding
    # into +-1 pieces; interior edges cancel, so cluster sums are exact
    labels, count = ndimage.label(ndimage.binary_dilation(wind != 0, iterations=1))
    zeros = []
    for lab in range(1, count + 1):
        sel = (labels == lab) & (wind != 0)
        idx = np.argwhere(sel)
        mult = _box_winding(ang, idx, wrap)
        if mult == 0:
            continue
        pt = (idx.mean(axis=0) + 0.5) * grid.h
        zeros.append((tuple(float(p) for p in pt), mult))
    return zeros


def qd_pipeline(q: QuadDiff, n: int = 64) -> PipelineResult:
    """e = mu^{1/2}, nu = e + conj(e) as a real cut field, zeros with multiplicity."""
    if q.surface == "torus":
        grid = Grid(2, n, 1.0)
        x, y = grid.coords()
        mu = np.full(grid.shape, complex(q.c))
        e = np.full(grid.shape, np.sqrt(complex(q.c)))
        data = np.stack([2 * e.real, -2 * e.imag])
        nu = CutBundleField(grid, data, [], exact_jacobian=np.zeros((2, 2) + grid.shape))
        zeros = _winding_zeros(grid, mu)
        mask = np.ones(grid.shape, bool)
    else:
        grid = Grid(2, n, 2.0)
        center = default_center(grid)
        model = ModelZForm(q.k, 1.0, 2, center)
        pts = _site_points(grid)
        z = model._z(pts)
        mu = z ** q.k
        e = model.f(pts)
        field_ = model.sample(grid, center)
        cuts = [make_cut(2, center, q.k, c=2.0)]
        nu = CutBundleField(grid, 2 * field_.data, cuts, evaluator=_Scaled(model, 2.0),
                            exact_jacobian=2 * field_.exact_jacobian, domain_radius=0.9 * grid.L / 2)
        disk = np.abs(z) < 0.9 * grid.L / 2 - grid.h
        zeros = _winding_zeros(grid, mu, disk)
        mask = nu.interior_mask(4 * grid.h)
    sq = float(np.max(np.abs(e ** 2 - mu)[mask]) / max(1.0, float(np.max(np.abs(mu[mask])))))
    # Cauchy-Riemann: d e / d zbar = (d_x + i d_y) e / 2 with cut-aware centered stencils
    h = grid.h
    helper = nu if q.surface == "disk" else CutBundleField(grid, nu.data, [])
    ex = (helper.neighbor(e, 0, 1) - helper.neighbor(e, 0, -1)) / (2 * h)
    ey = (helper.neighbor(e, 1, 1) - helper.neighbor(e, 1, -1)) / (2 * h)
    dbar = 0.5 * (ex + 1j * ey)
    dz = 0.5 * (ex - 1j * ey)
    scale = float(np.sqrt(np.sum(np.abs(dz[mask]) ** 2)))
    cr = float(np.sqrt(np.sum(np.abs(dbar[mask]) ** 2)) / scale) if scale > 0 else float(
        np.sqrt(np.sum(np.abs(dbar[mask]) ** 2)))
    return PipelineResult(grid, e, mu, nu, zeros, sq, cr)


@dataclass
class _Scaled:
    base: object
    factor: float

    def value(self, x):
        return self.factor * self.base.value(x)

    def jacobian(self, x):
        return self.factor * self.base.jacobian(x)

    def norm(self, x):
        return self.factor * self.base.norm(x)


# ---------------------------------------------------------------------------
# foliation
# ---------------------------------------------------------------------------

@dataclass
class FoliationOutput:
    leaves: list
    measures: dict
    zeros: list
    bounds: tuple
    kinds: list | None = None   # optional label per leaf, e.g. "leaf" or "separatrix"

    def to_dict(self) -> dict:
        doc = {
            "leaves": [np.round(l, 10).tolist() for l in self.leaves],
            "measures": {k: float(v) for k, v in sorted(self.measures.items())},
            "zeros": [list(map(float, z)) for z in self.zeros],
            "bounds": list(map(float, self.bounds)),
        }
        if self.kinds is not None:
            doc["kinds"] = list(self.kinds)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def to_svg(self, size: int = 512, header: str | None = None) -> str:
        x0, y0, x1, y1 = self.bounds
        sx = size / (x1 - x0)
        sy = size / (y1 - y0)

        def tr(p):
            return f"{(p[0] - x0) * sx:.3f},{(y1 - p[1]) * sy:.3f}"

        lines = ['<?xml version="1.0" encoding="UTF-8"?>']
        if header:
            lines.append(f"<!-- {header} -->")
        lines.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
                     f'viewBox="0 0 {size} {size}">')
        lines.append(f'<rect width="{size}" height="{size}" fill="white"/>')
        kinds = self.kinds if self.kinds is not None else ["leaf"] * len(self.leaves)
        for leaf, kind in zip(self.leaves, kinds):
            pts = " ".join(tr(p) for p in leaf)
            color = "blue" if kind == "separatrix" else "black"
            lines.append(f'<polyline class="{kind}" points="{pts}" fill="none" stroke="{color}" '
                         f'stroke-width="1"/>')
        for z in self.zeros:
            cx, cy = tr(z).split(",")
            lines.append(f'<circle cx="{cx}" cy="{cy}" r="4" fill="red"/>')
        lines.append("</svg>")
        return "\n".join(lines) + "\n"


def _tensor_grid(v: CutBundleField):
    d = v.data
    return np.stack([d[0] * d[0], d[0] * d[1], d[1] * d[1]], axis=-1)


def _kernel_direction_exact(evaluator, x):
    val = evaluator.value(np.asarray(x))
    return np.array([-val[1], val[0]]), float(np.hypot(val[0], val[1]))


def _trace_exact(evaluator, seed, direction, step, nsteps, zeros, stop_radius, bounds):
    x = np.array(seed, dtype=float)
    prev = np.array(direction, dtype=float)
    pts = [x.copy()]
    x0, y0, x1, y1 = bounds
    for _ in range(nsteps):
        d1, n1 = _kernel_direction_exact(evaluator, x)
        if n1 == 0:
            break
        d1 /= n1
        if d1 @ prev < 0:
            d1 = -d1
        xm = x + 0.5 * step * d1
        if any(np.hypot(*(xm - z)) <= 1e-12 for z in zeros):
            break
        d2, n2 = _kernel_direction_exact(evaluator, xm)
        if n2 == 0:
            break
        d2 /= n2
        if d2 @ d1 < 0:
            d2 = -d2
        x = x + step * d2
        prev = d2
        if not (x0 <= x[0] <= x1 and y0 <= x[1] <= y1):
            break
        pts.append(x.copy())
        if any(np.hypot(*(x - z)) <= stop_radius for z in zeros):
            break
    return np.array(pts)


def _leaf_tangent_exact(v, seed):
    """Unit kernel direction at the seed, from the evaluator or the tensor."""
    if v.evaluator is not None:
        d, nrm = _kernel_direction_exact(v.evaluator, seed)
        if nrm == 0:
            raise ValueError("seed lies on the zero set")
        return d / nrm
    tg = _tensor_grid(v)
    g = v.grid
    i, j = int(round(seed[0] / g.h)) % g.n, int(round(seed[1] / g.h)) % g.n
    a, b, c = tg[i, j]
    lam = 0.5 * (a + c) - math.sqrt(0.25 * (a - c) ** 2 + b * b)
    vec = np.array([b, lam - a]) if abs(b) + abs(lam - a) > abs(lam - c) + abs(b) else np.array([lam - c, b])
    nv = np.linalg.norm(vec)
    if nv == 0:
        raise ValueError("seed lies on the zero set")
    return vec / nv


def foliation_trace(v: CutBundleField, seeds, step: float | None = None, max_len: float = 1.0,
                    transversals: dict | None = None, use_exact: bool = True) -> FoliationOutput:
    """Trace leaves of ker(nu) through each seed in both directions.

    Uses the closed-form evaluator when present (and ``use_exact``); otherwise
    the compiled/fallback kernel on the sampled tensor nu (x) nu, which is
    single valued across cuts.
    """
    g = v.grid
    if g.dim != 2:
        raise ValueError("foliation tracing is two-dimensional")
    step = g.h / 2 if step is None else step
    nsteps = int(math.ceil(max_len / step))
    zeros = [np.asarray(z, dtype=float) for z in v.zero_points()]
    stop = 2 * g.h
    periodic = not v.cuts and v.domain_radius is None
    if v.domain_radius is not None:
        c = g.L / 2
        r = v.domain_radius
        bounds = (c - r, c - r, c + r, c + r)
    else:
        bounds = (0.0, 0.0, g.L, g.L)
    leaves = []
    for seed in seeds:
        seed = np.asarray(seed, dtype=float)
        if any(np.hypot(*(seed - z)) <= 1e-12 for z in zeros):
            raise ValueError("seed lies on the zero set")
        t0 = _leaf_tangent_exact(v, seed)
        halves = []
        for sgn in (1.0, -1.0):
            if v.evaluator is not None and use_exact:
                pts = _trace_exact(v.evaluator, seed, sgn * t0, step, nsteps, zeros, stop, bounds)
            else:
                zero_arr = np.array(zeros).reshape(-1, 2) if zeros else np.zeros((0, 2))
                pts = _backend.trace_line_field(_tensor_grid(v), g.h, (0.0, 0.0), seed, sgn * t0, step,
                                                nsteps, zero_arr, stop, periodic, 0.0)
                if not periodic:
                    x0, y0, x1, y1 = bounds
                    inside = (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)
                    cut_at = np.argmin(inside) if not np.all(inside) else len(pts)
                    pts = pts[:cut_at]
            halves.append(pts)
        leaf = np.vstack([halves[1][::-1], halves[0][1:]])
        leaves.append(leaf)
    measures = {}
    for name, path in (transversals or {}).items():
        measures[name] = transverse_measure(v, path)
    return FoliationOutput(leaves, measures, [tuple(z) for z in zeros], bounds)


def transverse_measure(v: CutBundleField, path, samples_per_segment: int = 16) -> float:
    """sum |nu(unit tangent)| ds along a polyline (midpoint rule on sub-segments).

    |nu(t)| = sqrt(t . (nu (x) nu) t) is single valued, so cuts play no role.
    """
    pts = np.asarray(path, dtype=float)
    total = 0.0
    interp = None
    if v.evaluator is None:
        tg = _tensor_grid(v)
        interp = [PeriodicInterpolant(v.grid, tg[..., m]) for m in range(3)]
    for a, b in zip(pts[:-1], pts[1:]):
        seg = b - a
        length = float(np.linalg.norm(seg))
        if length == 0:
            continue
        t = seg / length
        s = (np.arange(samples_per_segment) + 0.5) / samples_per_segment
        mids = a + s[:, None] * seg
        if v.evaluator is not None:
            vals = v.evaluator.value(mids)
            proj = np.abs(vals @ t)
        else:
            txx, txy, tyy = (f(mids) for f in interp)
            proj = np.sqrt(np.maximum(t[0] ** 2 * txx + 2 * t[0] * t[1] * txy + t[1] ** 2 * tyy, 0.0))
        total += float(np.sum(proj)) * length / samples_per_segment
    return total


# ---------------------------------------------------------------------------
# sphere equation
# ---------------------------------------------------------------------------

@dataclass
class SphereReport:
    residual: float          # with the homogeneity-implied coefficient N0 + 1
    residual_n0: float       # with the coefficient N0
    mesh: float


def sphere_equation_residual(M, n_theta: int = 32, cut_aware: bool = True) -> SphereReport:
    """Residual of d v_r = (N0 + 1) v_perp on the unit sphere about a point of the axis.

    v_r = <nu, x> and v_perp is the tangential part of nu.  Both are sampled
    on a latitude-longitude mesh with n_theta cell-centered latitudes and
    2 n_theta longitudes.  d v_r uses centered differences, and longitudinal
    neighbors are sign-corrected across the cut when ``cut_aware``.  The
    relative L^2 residual is reported for the coefficient N0 + 1 (what
    homogeneity of degree N0 implies) and for N0.
    """
    if getattr(M, "dim", 3) != 3:
        raise ValueError("sphere equation needs a 3-D model")
    if isinstance(M, ModelZForm):
        model = ModelZForm(M.k, M.c, 3, (0.0, 0.0, 0.0), M.axis)
        n0 = model.n0
        cut = model.cut
    else:
        model = M
        n0 = 0.0
        cut = None
    n_phi = 2 * n_theta
    dth = np.pi / n_theta
    dph = 2 * np.pi / n_phi
    th = (np.arange(n_theta) + 0.5) * dth
    ph = np.arange(n_phi) * dph + 1e-3 * dph
    T, PH = np.meshgrid(th, ph, indexing="ij")
    if cut is not None:
        e1, e2, e3 = cut.e1, cut.e2, np.cross(cut.e1, cut.e2)
    else:
        e1, e2, e3 = np.eye(3)

    def point(t, p):
        return (np.sin(t)[..., None] * (np.cos(p)[..., None] * e1 + np.sin(p)[..., None] * e2)
                + np.cos(t)[..., None] * e3)

    def vr(t, p):
        x = point(t, p)
        return np.sum(model.value(x) * x, axis=-1)

    x = point(T, PH)
    nu = model.value(x)
    e_th = (np.cos(T)[..., None] * (np.cos(PH)[..., None] * e1 + np.sin(PH)[..., None] * e2)
            - np.sin(T)[..., None] * e3)
    e_ph = -np.sin(PH)[..., None] * e1 + np.cos(PH)[..., None] * e2
    nu_th = np.sum(nu * e_th, axis=-1)            # coefficient of d theta
    nu_ph = np.sum(nu * e_ph, axis=-1) * np.sin(T)  # coefficient of d phi
    # theta derivative: neighbors stay on the same meridian, no cut crossing
    dth_v = (vr(T + dth, PH) - vr(T - dth, PH)) / (2 * dth)
    fwd = vr(T, PH + dph)
    bwd = vr(T, PH - dph)
    if cut_aware and cut is not None and cut.sign < 0:
        xf = point(T, PH + dph)
        xb = point(T, PH - dph)
        fwd = np.where(cut.crosses(x, xf), -fwd, fwd)
        bwd = np.where(cut.crosses(x, xb), -bwd, bwd)
    dph_v = (fwd - bwd) / (2 * dph)
    area = np.sin(T) * dth * dph
    perp_sq = nu_th ** 2 + (nu_ph / np.sin(T)) ** 2
    denom = float(np.sqrt(np.sum(perp_sq * area)))
    if denom == 0:
        return SphereReport(0.0, 0.0, dth)

    def resid(coef):
        r2 = (dth_v - coef * nu_th) ** 2 + ((dph_v - coef * nu_ph) / np.sin(T)) ** 2
        return float(np.sqrt(np.sum(r2 * area))) / denom

    return SphereReport(resid(n0 + 1), resid(n0), dth)


class ZeroForm:
    """The zero 1-form in 3-D, for degenerate checks."""

    dim = 3

    def value(self, x):
        return np.zeros(np.shape(x))
