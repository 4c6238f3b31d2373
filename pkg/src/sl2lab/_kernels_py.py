"""Pure numpy/Python versions of the compiled kernels in ``_kernels.pyx``.

The signatures and results match the compiled module; these run when the
extension has not been built.
"""

from __future__ import annotations

import math

import numpy as np


def ball_sums(values, rho, radii, width):
    """sum_i values_i * w(r, rho_i) for every r in ``radii``.

    w is the indicator rho <= r when ``width == 0`` and the ramp
    clip((r - rho)/width + 1/2, 0, 1) otherwise.
    """
    values = np.asarray(values, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    out = np.empty(len(radii))
    for j, r in enumerate(radii):
        if width > 0:
            w = np.clip((r - rho) / width + 0.5, 0.0, 1.0)
        else:
            w = rho <= r
        out[j] = np.dot(values, w)
    return out


def _interp(t, n, h, x, y, periodic):
    fx = x / h
    fy = y / h
    i0 = math.floor(fx)
    j0 = math.floor(fy)
    tx = fx - i0
    ty = fy - j0
    if periodic:
        i0 %= n
        j0 %= n
        i1 = (i0 + 1) % n
        j1 = (j0 + 1) % n
    else:
        if i0 < 0 or j0 < 0 or i0 + 1 >= n or j0 + 1 >= n:
            return None
        i1 = i0 + 1
        j1 = j0 + 1
    return ((1 - tx) * (1 - ty) * t[i0, j0] + tx * (1 - ty) * t[i1, j0]
            + (1 - tx) * ty * t[i0, j1] + tx * ty * t[i1, j1])


def _kernel_dir(a, b, c):
    """Unit eigenvector of [[a, b], [b, c]] for its smaller eigenvalue."""
    lam = 0.5 * (a + c) - math.sqrt(0.25 * (a - c) ** 2 + b * b)
    v1x, v1y = b, lam - a
    v2x, v2y = lam - c, b
    n1 = v1x * v1x + v1y * v1y
    n2 = v2x * v2x + v2y * v2y
    if n1 >= n2:
        nn = math.sqrt(n1)
        if nn == 0.0:
            return None
        return v1x / nn, v1y / nn
    nn = math.sqrt(n2)
    if nn == 0.0:
        return None
    return v2x / nn, v2y / nn


def _direction(tensor, n, h, x, y, periodic, floor_val):
    t = _interp(tensor, n, h, x, y, periodic)
    if t is None:
        return None
    a, b, c = t
    if a + c <= floor_val:
        return None
    return _kernel_dir(a, b, c)


def trace_line_field(tensor, h, origin, seed, direction, step, nsteps, zeros, stop_radius,
                     periodic, floor_val):
    """Midpoint-rule trace of the kernel line field of a sampled tensor nu (x) nu.

    ``tensor`` has shape (n, n, 3) holding (xx, xy, yy) at sites
    origin + (i h, j h).  Tracing stops after ``nsteps`` steps, when the
    sampled tensor trace drops below ``floor_val``, on leaving a non-periodic
    domain, or within ``stop_radius`` of any entry of ``zeros``.
    """
    tensor = np.asarray(tensor, dtype=np.float64)
    zeros = np.asarray(zeros, dtype=np.float64).reshape(-1, 2)
    n = tensor.shape[0]
    ox, oy = origin
    x, y = seed[0] - ox, seed[1] - oy
    px, py = direction
    pts = [(seed[0], seed[1])]
    for _ in range(nsteps):
        d1 = _direction(tensor, n, h, x, y, periodic, floor_val)
        if d1 is None:
            break
        d1x, d1y = d1
        if d1x * px + d1y * py < 0:
            d1x, d1y = -d1x, -d1y
        d2 = _direction(tensor, n, h, x + 0.5 * step * d1x, y + 0.5 * step * d1y, periodic, floor_val)
        if d2 is None:
            break
        d2x, d2y = d2
        if d2x * d1x + d2y * d1y < 0:
            d2x, d2y = -d2x, -d2y
        x += step * d2x
        y += step * d2y
        px, py = d2x, d2y
        pts.append((x + ox, y + oy))
        hit = False
        for zx, zy in zeros:
            if (x + ox - zx) ** 2 + (y + oy - zy) ** 2 <= stop_radius * stop_radius:
                hit = True
                break
        if hit:
            break
    return np.array(pts)
