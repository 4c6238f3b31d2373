# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: multi-radius ball sums and line-field tracing.

``_kernels_py`` holds the reference implementations with identical
signatures; ``_backend`` picks whichever is importable.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()


def ball_sums(values, rho, radii, double width):
    cdef const double[:] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[:] d = np.ascontiguousarray(rho, dtype=np.float64)
    cdef const double[:] rr = np.ascontiguousarray(radii, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t m = rr.shape[0]
    out = np.zeros(m, dtype=np.float64)
    cdef double[:] o = out
    cdef Py_ssize_t i, j
    cdef double w, x, rmax = 0.0
    for j in range(m):
        if rr[j] > rmax:
            rmax = rr[j]
    for i in range(n):
        if d[i] > rmax + width:
            continue
        for j in range(m):
            if width > 0:
                w = (rr[j] - d[i]) / width + 0.5
                if w <= 0.0:
                    continue
                if w > 1.0:
                    w = 1.0
            else:
                if d[i] > rr[j]:
                    continue
                w = 1.0
            o[j] += v[i] * w
    return out


cdef inline bint _interp(const double[:, :, :] t, Py_ssize_t n, double h, double x, double y,
                         bint periodic, double* a, double* b, double* c):
    cdef double fx = x / h, fy = y / h
    cdef Py_ssize_t i0 = <Py_ssize_t> floor(fx), j0 = <Py_ssize_t> floor(fy), i1, j1
    cdef double tx = fx - i0, ty = fy - j0
    cdef double w00, w10, w01, w11
    if periodic:
        i0 = i0 % n
        j0 = j0 % n
        if i0 < 0:
            i0 += n
        if j0 < 0:
            j0 += n
        i1 = (i0 + 1) % n
        j1 = (j0 + 1) % n
    else:
        if i0 < 0 or j0 < 0 or i0 + 1 >= n or j0 + 1 >= n:
            return False
        i1 = i0 + 1
        j1 = j0 + 1
    w00 = (1 - tx) * (1 - ty)
    w10 = tx * (1 - ty)
    w01 = (1 - tx) * ty
    w11 = tx * ty
    a[0] = w00 * t[i0, j0, 0] + w10 * t[i1, j0, 0] + w01 * t[i0, j1, 0] + w11 * t[i1, j1, 0]
    b[0] = w00 * t[i0, j0, 1] + w10 * t[i1, j0, 1] + w01 * t[i0, j1, 1] + w11 * t[i1, j1, 1]
    c[0] = w00 * t[i0, j0, 2] + w10 * t[i1, j0, 2] + w01 * t[i0, j1, 2] + w11 * t[i1, j1, 2]
    return True


cdef inline bint _direction(const double[:, :, :] t, Py_ssize_t n, double h, double x, double y,
                            bint periodic, double fl, double* dx, double* dy):
    cdef double a, b, c, lam, v1x, v1y, v2x, v2y, n1, n2, nn
    if not _interp(t, n, h, x, y, periodic, &a, &b, &c):
        return False
    if a + c <= fl:
        return False
    lam = 0.5 * (a + c) - sqrt(0.25 * (a - c) * (a - c) + b * b)
    v1x = b
    v1y = lam - a
    v2x = lam - c
    v2y = b
    n1 = v1x * v1x + v1y * v1y
    n2 = v2x * v2x + v2y * v2y
    if n1 >= n2:
        nn = sqrt(n1)
        if nn == 0.0:
            return False
        dx[0] = v1x / nn
        dy[0] = v1y / nn
    else:
        nn = sqrt(n2)
        if nn == 0.0:
            return False
        dx[0] = v2x / nn
        dy[0] = v2y / nn
    return True


def trace_line_field(tensor, double h, origin, seed, direction, double step, Py_ssize_t nsteps,
                     zeros, double stop_radius, bint periodic, double floor_val):
    cdef const double[:, :, :] t = np.ascontiguousarray(tensor, dtype=np.float64)
    cdef const double[:, :] z = np.ascontiguousarray(np.asarray(zeros, dtype=np.float64).reshape(-1, 2))
    cdef Py_ssize_t n = t.shape[0], nz = z.shape[0], k, s, count = 1
    cdef double ox = origin[0], oy = origin[1]
    cdef double x = seed[0] - ox, y = seed[1] - oy
    cdef double px = direction[0], py = direction[1]
    cdef double d1x = 0, d1y = 0, d2x = 0, d2y = 0, r2 = stop_radius * stop_radius
    pts = np.empty((nsteps + 1, 2), dtype=np.float64)
    cdef double[:, :] p = pts
    p[0, 0] = seed[0]
    p[0, 1] = seed[1]
    for s in range(nsteps):
        if not _direction(t, n, h, x, y, periodic, floor_val, &d1x, &d1y):
            break
        if d1x * px + d1y * py < 0:
            d1x = -d1x
            d1y = -d1y
        if not _direction(t, n, h, x + 0.5 * step * d1x, y + 0.5 * step * d1y, periodic, floor_val,
                          &d2x, &d2y):
            break
        if d2x * d1x + d2y * d1y < 0:
            d2x = -d2x
            d2y = -d2y
        x += step * d2x
        y += step * d2y
        px = d2x
        py = d2y
        p[count, 0] = x + ox
        p[count, 1] = y + oy
        count += 1
        for k in range(nz):
            if (x + ox - z[k, 0]) ** 2 + (y + oy - z[k, 1]) ** 2 <= r2:
                return pts[:count].copy()
    return pts[:count].copy()
