"""su(2) arithmetic in the coefficient basis tau_i = -(i/2) sigma_i.

Elements of su(2) are stored as real arrays whose last axis has length 3.
Elements of sl(2;C) = su(2) + i su(2) are the same arrays with complex dtype.
All functions broadcast over leading axes, so a whole lattice field can be
passed in one call.

Conventions
-----------
bracket(u, v)            cross product of coefficient vectors, [tau_i, tau_j] = eps_ijk tau_k
inner(u, v)              -tr(uv) = 0.5 * (u . v)
complex_trace_pair(u, v) tr(uv) = -0.5 * sum_k u_k v_k, complex bilinear

SU(2) elements are unit quaternions (w, x, y, z) with imaginary units
e_k = 2 tau_k.  They act on su(2) by conjugation, which is a rotation of the
coefficient vector.
"""

from __future__ import annotations

import numpy as np

TAU = np.eye(3)

_PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


def bracket(u, v):
    """Lie bracket [u, v]; works for real and complex coefficient arrays."""
    u = np.asarray(u)
    v = np.asarray(v)
    return np.cross(u, v)


def inner(u, v):
    """Trace inner product <u, v> = -tr(uv), equal to half the dot product."""
    return 0.5 * np.sum(np.asarray(u) * np.asarray(v), axis=-1)


def norm_sq(u):
    return inner(u, u)


def complex_trace_pair(u, v):
    """Complex-bilinear tr(uv) on sl(2;C); restricts to -inner on su(2)."""
    return -0.5 * np.sum(np.asarray(u) * np.asarray(v), axis=-1)


def to_matrix(u):
    """2x2 matrix sum_k u_k tau_k.  Only used for cross-checks."""
    u = np.asarray(u)
    return np.einsum("...k,kab->...ab", u, -0.5j * _PAULI)


def from_matrix(m):
    """Inverse of :func:`to_matrix` for traceless matrices."""
    m = np.asarray(m)
    # tr(tau_k tau_l) = -delta_kl / 2
    return -2.0 * np.einsum("...ab,kba->...k", m, -0.5j * _PAULI)


# ---------------------------------------------------------------------------
# SU(2) as unit quaternions
# ---------------------------------------------------------------------------

def quat_identity(shape=()):
    q = np.zeros(tuple(shape) + (4,))
    q[..., 0] = 1.0
    return q


def quat_mul(p, q):
    p = np.asarray(p)
    q = np.asarray(q)
    pw, pv = p[..., 0], p[..., 1:]
    qw, qv = q[..., 0], q[..., 1:]
    w = pw * qw - np.sum(pv * qv, axis=-1)
    v = pw[..., None] * qv + qw[..., None] * pv + np.cross(pv, qv)
    return np.concatenate([w[..., None], v], axis=-1)


def quat_conj(q):
    q = np.array(q, dtype=float, copy=True)
    q[..., 1:] *= -1.0
    return q


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_exp(xi):
    """exp of the su(2) element sum_k xi_k tau_k as a unit quaternion.

    With e_k = 2 tau_k the element equals (|xi|/2) n.e, so the result is
    cos(|xi|/2) + sin(|xi|/2) n.
    """
    xi = np.asarray(xi, dtype=float)
    half = 0.5 * np.linalg.norm(xi, axis=-1)
    # sin(half)/|xi| written through sinc to stay finite at xi = 0
    s = 0.5 * np.sinc(half / np.pi)
    return np.concatenate([np.cos(half)[..., None], s[..., None] * xi], axis=-1)


def quat_log(q):
    """su(2) coefficients xi with quat_exp(xi) = q, principal branch."""
    q = np.asarray(q, dtype=float)
    w = np.clip(q[..., 0], -1.0, 1.0)
    v = q[..., 1:]
    sv = np.linalg.norm(v, axis=-1)
    theta = np.arctan2(sv, w)
    # xi = 2 theta v / |v|; theta/|v| -> 1 as v -> 0
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(sv > 1e-300, theta / np.where(sv > 0, sv, 1.0), 1.0)
    return 2.0 * factor[..., None] * v


def quat_to_rotation(q):
    """3x3 rotation matrices R with Ad_q(u) = R u on coefficient vectors."""
    q = quat_normalize(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    r = np.empty(q.shape[:-1] + (3, 3))
    r[..., 0, 0] = 1 - 2 * (y * y + z * z)
    r[..., 0, 1] = 2 * (x * y - z * w)
    r[..., 0, 2] = 2 * (x * z + y * w)
    r[..., 1, 0] = 2 * (x * y + z * w)
    r[..., 1, 1] = 1 - 2 * (x * x + z * z)
    r[..., 1, 2] = 2 * (y * z - x * w)
    r[..., 2, 0] = 2 * (x * z - y * w)
    r[..., 2, 1] = 2 * (y * z + x * w)
    r[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def adjoint(q, u):
    """Ad_q(u) = q u q^{-1}, a rotation of the coefficient vector u.

    ``u`` may carry extra axes between the site axes of ``q`` and the
    coefficient axis only if the caller broadcasts ``q`` accordingly.
    Complex ``u`` is rotated componentwise (the action is C-linear).
    """
    rot = quat_to_rotation(q)
    return np.einsum("...ij,...j->...i", rot, u)
