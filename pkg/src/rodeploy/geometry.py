"""Small 3D geometry helpers: rotations, parallel transport, frames.

Vector arguments are numpy arrays; functions ending in ``_many`` are
vectorized over a leading axis.
"""
from __future__ import annotations

import numpy as np

from .errors import DegenerateGeometryError, InvalidFrameError

# cos(angle) below which two tangents count as anti-parallel: transport by a
# rotation of ~pi is ambiguous and treated as a hard geometric error.
_ANTIPARALLEL_EPS = 1e-9


def unit(v):
    n = np.linalg.norm(v)
    if n == 0.0:
        raise DegenerateGeometryError("zero-length vector")
    return v / n


def cross_matrix(t):
    """Matrix form of the cross product, [t]x v = t x v."""
    return np.array(
        [
            [0.0, -t[2], t[1]],
            [t[2], 0.0, -t[0]],
            [-t[1], t[0], 0.0],
        ]
    )


def rotation_from_axis_angle(e):
    """Rodrigues map: rotation vector (axis * angle) -> 3x3 matrix."""
    e = np.asarray(e, dtype=float)
    angle = np.linalg.norm(e)
    if angle < 1e-14:
        return np.eye(3)
    axis = e / angle
    K = cross_matrix(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def axis_angle_from_rotation(R):
    """Inverse Rodrigues map; returned vector has norm in [0, pi]."""
    R = np.asarray(R, dtype=float)
    tr = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(tr)
    if angle < 1e-10:
        # first order: skew part equals [e]x
        return 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if np.pi - angle < 1e-7:
        # axis from the symmetric part; sign convention: largest component positive
        A = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(A), 0.0, None))
        k = int(np.argmax(axis))
        if axis[k] > 0:
            axis = A[:, k] / axis[k]
        return angle * unit(axis)
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return angle * axis / (2.0 * np.sin(angle))


def check_rotation(R, tol=1e-9):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or np.abs(R @ R.T - np.eye(3)).max() > tol or np.linalg.det(R) < 0:
        raise InvalidFrameError("matrix is not a proper rotation")
    return R


def parallel_transport(v, t_from, t_to):
    """Transport v from an edge with unit tangent t_from to one with t_to."""
    b = np.cross(t_from, t_to)
    c = float(np.dot(t_from, t_to))
    if 1.0 + c < _ANTIPARALLEL_EPS:
        raise DegenerateGeometryError("parallel transport between anti-parallel tangents")
    return c * v + np.cross(b, v) + np.dot(b, v) / (1.0 + c) * b


def cross_rows(a, b):
    """Row-wise cross product without np.cross dispatch overhead."""
    out = np.empty_like(a)
    out[:, 0] = a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1]
    out[:, 1] = a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2]
    out[:, 2] = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return out


def parallel_transport_many(v, t_from, t_to):
    """Rows of v transported from tangents t_from to t_to (all (n,3))."""
    b = cross_rows(t_from, t_to)
    c = np.einsum("ij,ij->i", t_from, t_to)
    if np.any(1.0 + c < _ANTIPARALLEL_EPS):
        raise DegenerateGeometryError("parallel transport between anti-parallel tangents")
    coef = np.einsum("ij,ij->i", b, v) / (1.0 + c)
    return c[:, None] * v + cross_rows(b, v) + coef[:, None] * b


def signed_angle(u, v, axis):
    """Angle from u to v about axis (u, v perpendicular to axis), in (-pi, pi]."""
    return float(np.arctan2(np.dot(np.cross(u, v), axis), np.dot(u, v)))


def signed_angle_many(u, v, axis):
    s = np.einsum("ij,ij->i", cross_rows(u, v), axis)
    c = np.einsum("ij,ij->i", u, v)
    return np.arctan2(s, c)


def perpendicular_unit(t):
    """A deterministic unit vector perpendicular to t (least-aligned axis trick)."""
    a = np.zeros(3)
    a[int(np.argmin(np.abs(t)))] = 1.0
    return unit(np.cross(t, a))


def mirror_pose_xz(position, rotation_vec):
    """Mirror a pose about the x-z plane.

    Positions flip their y component; rotation vectors map as
    e -> (-ex, ey, -ez) (conjugation by the reflection diag(1,-1,1)).
    """
    p = np.asarray(position, dtype=float).copy()
    e = np.asarray(rotation_vec, dtype=float).copy()
    p[1] = -p[1]
    return p, np.array([-e[0], e[1], -e[2]])
