"""Frequency-function diagnostics about a center point.

    h(r) = int_{|x-p|=r} |v|^2,   H(r) = int_{|x-p|<=r} |grad v|^2 (+ 2 r_P^2 |v ^ v|^2),
    N(r) = r H(r) / h(r)

h uses spherical quadrature of a cubic-spline interpolant of the single
valued |v|^2; H uses ball sums with a one-cell linear edge ramp whose
second-order smoothing bias is removed (grid.ball_integrals, "corrected").  For a
closed-form sample of a field with an order-1 zero (|grad v|^2 ~ c^2/(2 rho)
near the zero set) the lattice sum of the singular term misses the integral
by a constant times h; that constant is the regularized Epstein sum
Z(a) = sum_m |m + a|^{-1} for the in-plane offset a of the zero, and H is
corrected by it.  The correction is applied only to closed-form gradient
samples, whose singular behavior is known exactly.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from . import algebra
from .grid import Grid, PeriodicInterpolant, ball_integrals, sphere_integral
from .gauge import GaugePair
from .zharm import CutBundleField, ModelZForm, _site_points


class ProfileError(ValueError):
    pass


@dataclass
class FrequencyProfile:
    center: np.ndarray
    radii: np.ndarray
    h: np.ndarray
    H: np.ndarray
    N: np.ndarray          # nan where undefined (h = 0 or radius rejected)
    mode: str
    dim: int

    @property
    def defined(self):
        return np.isfinite(self.N)

    def rows(self):
        return [(float(r), float(a), float(b), float(c)) for r, a, b, c in zip(self.radii, self.h, self.H, self.N)]


# ---------------------------------------------------------------------------
# lattice-sum correction for order-1 zeros
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=64)
def epstein_offset(a0: float, a1: float) -> float:
    """Regularized sum_m |m + a|^{-1} over Z^2 for an offset a not in Z^2.

    Gaussian-damped sums minus the continuum integral pi R converge like R^-2;
    two damping radii and one Richardson step give about six digits.
    """
    if abs(a0 - round(a0)) < 1e-9 and abs(a1 - round(a1)) < 1e-9:
        raise ValueError("offset on a lattice site: the sum is singular")

    def damped(R):
        m = np.arange(-8 * R, 8 * R + 1)
        x, y = np.meshgrid(m + a0, m + a1, indexing="ij")
        r = np.hypot(x, y)
        return float(np.sum(np.exp(-np.pi * r ** 2 / R ** 2) / r)) - np.pi * R

    r1, r2 = 20, 40
    z1, z2 = damped(r1), damped(r2)
    return (r2 ** 2 * z2 - r1 ** 2 * z1) / (r2 ** 2 - r1 ** 2)


def _singular_correction(v: CutBundleField, center, radii):
    """Amount by which the ball lattice sums of |grad v|^2 exceed the integrals."""
    g = v.grid
    corr = np.zeros(len(radii))
    lattice = np.eye(g.dim)
    for c in v.cuts:
        if c.k != 1 or c.c is None:
            continue
        # the correction needs a zero set aligned with lattice axes
        if not (any(np.allclose(c.e1, e) for e in lattice) and any(np.allclose(c.e2, e) for e in lattice)):
            continue
        frac = [(c.point @ c.e1) / g.h % 1.0, (c.point @ c.e2) / g.h % 1.0]
        z = epstein_offset(round(frac[0], 12), round(frac[1], 12))
        amp = c.c ** 2 / 2
        d = float(c.distance(np.asarray(center, dtype=float)))
        for i, r in enumerate(radii):
            if d >= r:
                continue
            length = 1.0 if g.dim == 2 else 2 * math.sqrt(r * r - d * d)
            corr[i] += amp * z * g.h * length
    return corr


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

def _check_radii(grid: Grid, radii):
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or len(radii) == 0:
        raise ProfileError("radii must be a non-empty list")
    if np.any(np.diff(radii) <= 0):
        raise ProfileError("radii must be strictly increasing")
    if radii[0] < 4 * grid.h - 1e-12 or radii[-1] > grid.L / 4 + 1e-12:
        raise ProfileError(f"radii must lie in [4h, L/4] = [{4 * grid.h:g}, {grid.L / 4:g}]")
    return radii


def _centered_cov_grad(pair: GaugePair, helper: CutBundleField | None):
    """Centered covariant differences of alpha, (dim, dim, *sites, 3)."""
    g = pair.grid
    a, al = pair.a.data, pair.alpha.data
    out = np.empty((g.dim, g.dim) + g.shape + (3,))
    for b in range(g.dim):
        if helper is not None:
            fwd = helper.neighbor(np.moveaxis(al, -1, 1), b, 1)
            bwd = helper.neighbor(np.moveaxis(al, -1, 1), b, -1)
            fwd, bwd = np.moveaxis(fwd, 1, -1), np.moveaxis(bwd, 1, -1)
        else:
            fwd = np.roll(al, -1, axis=1 + b)
            bwd = np.roll(al, 1, axis=1 + b)
        ab = 0.5 * (a[b] + np.roll(a[b], 1, axis=b))
        out[:, b] = (fwd - bwd) / (2 * g.h) + np.cross(ab, al)
    return out


def profile(field, p, radii, cuts=None, singular_correction: bool = True,
            min_cells_near_zero: float = 8.0) -> FrequencyProfile:
    """(h, H, N) at each radius about p.

    ``field`` is a CutBundleField (one-form mode) or a GaugePair (gauge-pair
    mode, which adds 2 r_P^2 |alpha ^ alpha|^2 to the energy density and
    uses centered covariant differences).  ``cuts`` lets a gauge pair carry
    the branch cuts of an embedded Z/2 form.  Radii below
    ``min_cells_near_zero`` cells are rejected (N undefined) when a zero lies
    inside the ball.
    """
    if isinstance(field, GaugePair):
        grid = field.grid
        radii = _check_radii(grid, radii)
        helper = CutBundleField(grid, np.zeros((grid.dim,) + grid.shape), list(cuts or [])) if cuts else None
        al = field.alpha.data
        nsq = np.sum(al ** 2, axis=(0, -1)) / 2
        grad = _centered_cov_grad(field, helper)
        dens = np.sum(grad ** 2, axis=(0, 1, -1)) / 2
        for i in range(grid.dim):
            for j in range(i + 1, grid.dim):
                dens += 2 * field.r ** 2 * np.sum(np.cross(al[i], al[j]) ** 2, axis=-1) / 2
        mode = "gauge-pair"
        zero_cuts = list(cuts or [])
        corr = np.zeros(len(radii))
    elif isinstance(field, CutBundleField):
        grid = field.grid
        radii = _check_radii(grid, radii)
        nsq = field.norm_sq()
        dens = np.sum(field.gradient() ** 2, axis=(0, 1))
        mode = "one-form"
        zero_cuts = field.cuts
        if singular_correction and field.exact_jacobian is not None:
            corr = _singular_correction(field, p, radii)
        else:
            corr = np.zeros(len(radii))
    else:
        raise TypeError("profile expects a CutBundleField or a GaugePair")
    p = np.asarray(p, dtype=float)
    interp = PeriodicInterpolant(grid, nsq)
    hv = np.array([sphere_integral(grid, nsq, p, r, interp) for r in radii])
    Hv = ball_integrals(grid, dens, p, radii, edge="corrected") - corr
    Hv = np.maximum(Hv, 0.0)
    dmin = min((float(c.distance(p)) for c in zero_cuts), default=np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        N = np.where(hv > 0, radii * Hv / hv, np.nan)
    reject = (radii < min_cells_near_zero * grid.h - 1e-12) & (dmin < radii)
    N = np.where(reject, np.nan, N)
    if not np.any(nsq):
        hv = np.zeros_like(hv)
        Hv = np.zeros_like(Hv)
        N = np.full_like(N, np.nan)
    return FrequencyProfile(p, radii, hv, Hv, N, mode, grid.dim)


def embed_gauge_pair(v: CutBundleField, sigma=None, r: float = 1.0) -> GaugePair:
    """alpha = nu sigma with a constant unit sigma (|sigma| = 1 in the trace
    norm, so |alpha| = |nu|) and a flat connection."""
    from .grid import DiscreteForm

    g = v.grid
    sigma = np.sqrt(2.0) * algebra.TAU[0] if sigma is None else np.asarray(sigma, dtype=float)
    if not math.isclose(algebra.inner(sigma, sigma), 1.0, rel_tol=1e-12):
        raise ValueError("sigma must be a unit element")
    alpha = DiscreteForm(g, 1, v.data[..., None] * sigma, "su2")
    return GaugePair(DiscreteForm.zeros(g, 1, "su2"), alpha, r)


def default_radii(grid: Grid, count: int = 16, lo: float | None = None, hi: float | None = None):
    """Radii in [max(8h, 0.1 L), 0.2 L] by default."""
    lo = max(8 * grid.h, 0.1 * grid.L) if lo is None else lo
    hi = 0.2 * grid.L if hi is None else hi
    return np.linspace(lo, hi, count)


# ---------------------------------------------------------------------------
# checks on profiles
# ---------------------------------------------------------------------------

def dh_check(P: FrequencyProfile) -> float:
    """max over interior radii of |h' - r^-1 (dim - 1 + 2N) h| / (h / r)."""
    if len(P.radii) < 3:
        raise ProfileError("dh_check needs at least 3 radii")
    ok = P.defined & (P.h > 0)
    if not np.any(ok[1:-1]):
        return 0.0
    dh = np.gradient(P.h, P.radii)
    pred = (P.dim - 1 + 2 * P.N) * P.h / P.radii
    defect = np.abs(dh - pred) / (P.h / P.radii)
    sel = np.zeros_like(ok)
    sel[1:-1] = ok[1:-1]
    return float(np.max(defect[sel]))


def monotonicity_check(P: FrequencyProfile, kappa: float = 0.0) -> float:
    """max over s > r of max(0, exp(-kappa(s^2 - r^2)) N(r) - kappa(s^2 - r^2) - N(s))."""
    idx = np.nonzero(P.defined)[0]
    worst = 0.0
    for a, i in enumerate(idx):
        for j in idx[a + 1:]:
            ds = P.radii[j] ** 2 - P.radii[i] ** 2
            worst = max(worst, math.exp(-kappa * ds) * P.N[i] - kappa * ds - P.N[j])
    return float(worst)


def scaling_identity_check(P: FrequencyProfile) -> float:
    """Worst relative defect of h(s)/h(r0) = (s/r0)^{dim-1} exp(2 int_{r0}^s N/t dt)."""
    ok = P.defined & (P.h > 0)
    r, h, N = P.radii[ok], P.h[ok], P.N[ok]
    if len(r) < 2:
        return 0.0
    integrand = N / r
    expo = np.concatenate([[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(r))])
    pred = (r / r[0]) ** (P.dim - 1) * np.exp(2 * expo)
    meas = h / h[0]
    return float(np.max(np.abs(meas[1:] - pred[1:]) / pred[1:]))


@dataclass
class NZeroEstimate:
    estimate: float
    snapped: float
    residual: float
    snappable: bool


def n_at_zero(P: FrequencyProfile, min_points: int = 4) -> NZeroEstimate:
    """Linear extrapolation of N(r) to r = 0 over the smallest decade of defined radii."""
    ok = P.defined
    r, N = P.radii[ok], P.N[ok]
    if len(r) == 0:
        raise ProfileError("no radii with defined N")
    sel = r <= 10 * r[0]
    r, N = r[sel], N[sel]
    if len(r) < min_points:
        raise ProfileError(f"need at least {min_points} radii with defined N")
    slope, icpt = np.polyfit(r, N, 1)
    est = float(icpt)
    snapped = max(0.0, round(2 * est) / 2)
    res = abs(est - snapped)
    return NZeroEstimate(est, snapped, res, res <= 0.25)


# ---------------------------------------------------------------------------
# rescaling
# ---------------------------------------------------------------------------

@dataclass
class _Rescaled:
    base: object
    p: np.ndarray
    lam: float
    factor: float
    dim: int = 3

    def value(self, y):
        x = self.p + self.lam * (np.asarray(y, dtype=float) - self.p)
        return self.factor * self.lam * self.base.value(x)

    def jacobian(self, y):
        x = self.p + self.lam * (np.asarray(y, dtype=float) - self.p)
        return self.factor * self.lam ** 2 * self.base.jacobian(x)

    def norm(self, y):
        return np.linalg.norm(self.value(y), axis=-1)


def _sphere_h(v: CutBundleField, p, r):
    nsq = v.norm_sq()
    return sphere_integral(v.grid, nsq, p, r)


def rescale(v: CutBundleField, p, lam: float) -> CutBundleField:
    """nu_lam(y) = h(lam)^{-1/2} lam nu(p + lam (y - p)) sampled on the same lattice.

    In dimension d the prefactor carries lam^{(d-1)/2} instead of lam so that
    the sphere integral of |nu_lam|^2 at radius 1 is 1 for every d.

    h(lam) is the sphere integral of |nu|^2 at radius lam about p, measured
    on the input samples.  Closed-form fields are resampled exactly; others
    by cut-aware multilinear interpolation.
    """
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    g = v.grid
    p = np.asarray(p, dtype=float)
    if lam < 4 * g.h:
        raise ValueError("lambda below the 4h sphere resolution")
    hl = _sphere_h(v, p, lam)
    if not hl > 0:
        raise ValueError("h(lambda) = 0: cannot normalize")
    # the extra lam^{(dim-3)/2} keeps the unit-sphere normalization in any
    # dimension; it is 1 in three dimensions
    factor = hl ** -0.5 * lam ** ((g.dim - 3) / 2)
    pts = _site_points(g)
    src = p + lam * (pts - p)
    flat = src.reshape(-1, g.dim)
    cuts = []
    for c in v.cuts:
        newpoint = p + (c.point - p) / lam
        cuts.append(type(c)(newpoint, c.e1, c.e2, c.k, None if c.c is None else
                            c.c * factor * lam ** (1 + c.k / 2)))
    if v.evaluator is not None:
        ev = _Rescaled(v.evaluator, p, lam, factor, g.dim)
        data = np.moveaxis(ev.value(pts), -1, 0)
        jac = np.moveaxis(np.moveaxis(ev.jacobian(pts), -1, 0), -1, 0)
        return CutBundleField(g, data, cuts, evaluator=ev, exact_jacobian=jac, domain_radius=v.domain_radius)
    vals = v.values_at(flat).reshape(pts.shape)
    data = np.moveaxis(factor * lam * vals, -1, 0)
    return CutBundleField(g, data, cuts, domain_radius=v.domain_radius)


def psi_scaling_check(M: ModelZForm, R: float, samples: int = 400, seed: int = 0) -> float:
    """max |R nu(p + R x) - R^{1+N0} nu(p + x)| / (R^{1+N0} |nu(p + x)|) off the zero set."""
    if not R > 0:
        raise ValueError("R must be positive")
    rng = np.random.default_rng(seed)
    p = np.asarray(M.center, dtype=float)
    x = rng.uniform(-1, 1, size=(samples, M.dim))
    x = x[M.cut.distance(p + x) > 1e-3]
    n0 = M.n0
    lhs = R * M.value(p + R * x)
    rhs = R ** (1 + n0) * M.value(p + x)
    return float(np.max(np.linalg.norm(lhs - rhs, axis=-1) / np.linalg.norm(rhs, axis=-1)))


# ---------------------------------------------------------------------------
# limit values for normalized 3-D models
# ---------------------------------------------------------------------------

def _normalized_amplitude(k: int) -> float:
    """c with int_{|x|=1} c^2 rho^k = 1, i.e. c^2 * 2 pi int_0^pi sin^{k+1} = 1."""
    from scipy.special import beta

    integral = beta(0.5, (k + 2) / 2)  # int_0^pi sin^{k+1}
    return (2 * np.pi * integral) ** -0.5


@dataclass
class LimitReport:
    k: int
    R: float
    measured: dict
    expected: dict

    @property
    def deviations(self):
        return {key: abs(self.measured[key] - self.expected[key]) / abs(self.expected[key])
                for key in self.expected if self.expected[key] != 0}

    @property
    def worst(self):
        return max(self.deviations.values())


LIMIT_KEYS = ("sphere_norm", "sphere_radial", "ball_norm", "ball_grad", "sphere_grad", "sphere_radial_grad")


def limit_values_check(M: ModelZForm, R_values=(0.5, 1.0), n: int = 96, L: float = 4.5) -> list:
    """Six limit integrals plus the Pohozaev identity and the ball bound for a
    3-D model normalized to h(1) = 1, measured on an n^3 lattice.

    Closed forms with N = N0:
      sphere_norm        R^{2+2N}
      sphere_radial      (1+N)/(3+2N) R^{2+2N}
      ball_norm          1/(3+2N) R^{3+2N}
      ball_grad          N R^{1+2N}
      sphere_grad        N(1+2N) R^{2N}
      sphere_radial_grad N^2 R^{2N}
    ``pohozaev`` is R int_S (|v_r|^2 - |v|^2/2) + int_B |v|^2 / 2 relative to
    R h(R) (closed form 0) and ``ball_ratio`` is int_B |v|^2 / (R h(R)),
    which must not exceed 1.
    """
    if M.dim != 3:
        raise ValueError("limit values need a 3-D model")
    grid = Grid(3, n, L)
    from .zharm import default_center

    center = np.array(default_center(grid))
    c = _normalized_amplitude(M.k)
    model = ModelZForm(M.k, c, 3, tuple(center), M.axis)
    v = model.sample(grid, center)
    n0 = model.n0
    pts = _site_points(grid)
    d = pts - center
    rad = np.linalg.norm(d, axis=-1)
    rhat = d / np.where(rad > 0, rad, 1.0)[..., None]
    nu = np.moveaxis(v.data, 0, -1)
    nsq = np.sum(nu ** 2, axis=-1)
    vr_sq = np.sum(nu * rhat, axis=-1) ** 2
    jac = v.exact_jacobian                      # [a, b, ...]
    gsq = np.sum(jac ** 2, axis=(0, 1))
    radial_grad = np.einsum("ab...,...b->...a", jac, rhat)
    rg_sq = np.sum(radial_grad ** 2, axis=-1)
    interp = {name: PeriodicInterpolant(grid, f) for name, f in
              (("nsq", nsq), ("vr", vr_sq), ("rg", rg_sq))}
    reports = []
    for R in R_values:
        delta = grid.h
        ball = ball_integrals(grid, nsq, center, [R], edge="corrected")[0]
        hb = ball_integrals(grid, gsq, center, [R - delta, R, R + delta], edge="corrected")
        hb = hb - _singular_correction(v, center, [R - delta, R, R + delta])
        measured = {
            "sphere_norm": sphere_integral(grid, nsq, center, R, interp["nsq"]),
            "sphere_radial": sphere_integral(grid, vr_sq, center, R, interp["vr"]),
            "ball_norm": float(ball),
            "ball_grad": float(hb[1]),
            # |grad v|^2 is singular on the zero axis for k = 1, so its sphere
            # integral is taken as the radial derivative of the ball integral
            "sphere_grad": float((hb[2] - hb[0]) / (2 * delta)),
            "sphere_radial_grad": sphere_integral(grid, rg_sq, center, R, interp["rg"]),
        }
        hR = measured["sphere_norm"]
        measured["pohozaev"] = (R * (measured["sphere_radial"] - 0.5 * hR) + 0.5 * measured["ball_norm"]) / (R * hR)
        measured["ball_ratio"] = measured["ball_norm"] / (R * hR)
        expected = {
            "sphere_norm": R ** (2 + 2 * n0),
            "sphere_radial": (1 + n0) / (3 + 2 * n0) * R ** (2 + 2 * n0),
            "ball_norm": R ** (3 + 2 * n0) / (3 + 2 * n0),
            "ball_grad": n0 * R ** (1 + 2 * n0),
            "sphere_grad": n0 * (1 + 2 * n0) * R ** (2 * n0),
            "sphere_radial_grad": n0 ** 2 * R ** (2 * n0),
        }
        reports.append(LimitReport(M.k, R, measured, expected))
    return reports
