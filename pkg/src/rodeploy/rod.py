"""Rod description and discretized state.

The DOF vector interleaves node positions and edge twist angles,
``[x0, th0, x1, th1, ..., th^{N-1}, xN]`` for N edges, size 4N+3.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateGeometryError
from .geometry import (
    cross_rows,
    parallel_transport_many,
    perpendicular_unit,
    signed_angle_many,
    unit,
)

_FOLD_EPS = 1e-9  # 1 + t_prev.t_next below this means a folded-back edge pair


@dataclass(frozen=True)
class RodParams:
    """Material and geometric description of one DLO (SI units)."""

    total_length: float
    radius: float
    density: float
    youngs_modulus: float
    poisson_ratio: float = 0.5
    gravity: float = 9.81

    def __post_init__(self):
        if not (self.total_length > 0 and self.radius > 0 and self.density > 0):
            raise ValueError("length, radius and density must be positive")
        if not self.youngs_modulus > 0:
            raise ValueError("Young's modulus must be positive")
        if not 0.0 <= self.poisson_ratio <= 0.5:
            raise ValueError("Poisson ratio must lie in [0, 0.5]")
        if not self.gravity > 0:
            raise ValueError("gravity must be positive")

    @property
    def area(self):
        return np.pi * self.radius**2

    @property
    def stretch_stiffness(self):
        return self.youngs_modulus * np.pi * self.radius**2

    @property
    def bend_stiffness(self):
        return self.youngs_modulus * np.pi * self.radius**4 / 4.0

    @property
    def twist_stiffness(self):
        return self.bend_stiffness / (1.0 + self.poisson_ratio)

    @property
    def lineal_weight(self):
        """Weight per unit length, rho*A*g."""
        return self.density * self.area * self.gravity


@dataclass
class RodState:
    """Discretized configuration with per-edge reference frames.

    Treated as an immutable value; updates go through :func:`advance` which
    parallel-transports the reference frames in time.
    """

    nodes: np.ndarray        # (N+1, 3)
    thetas: np.ndarray       # (N,)
    d1: np.ndarray           # (N, 3) reference directors
    d2: np.ndarray           # (N, 3)
    tangents: np.ndarray     # (N, 3)
    rest_lengths: np.ndarray  # (N,)
    ref_twist: np.ndarray    # (N-1,) reference-frame twist at interior nodes
    velocities: np.ndarray = field(default=None)  # (4N+3,)

    def __post_init__(self):
        if self.velocities is None:
            self.velocities = np.zeros(self.dof_count)

    @property
    def n_edges(self):
        return len(self.rest_lengths)

    @property
    def n_nodes(self):
        return self.n_edges + 1

    @property
    def dof_count(self):
        return 4 * self.n_edges + 3

    def copy(self):
        return RodState(
            nodes=self.nodes.copy(),
            thetas=self.thetas.copy(),
            d1=self.d1.copy(),
            d2=self.d2.copy(),
            tangents=self.tangents.copy(),
            rest_lengths=self.rest_lengths.copy(),
            ref_twist=self.ref_twist.copy(),
            velocities=self.velocities.copy(),
        )

    def dof_vector(self):
        # interleaved layout: positions at 4i..4i+2, twist angle at 4i+3
        q = np.empty(self.dof_count)
        idx = np.arange(self.n_nodes) * 4
        q[idx] = self.nodes[:, 0]
        q[idx + 1] = self.nodes[:, 1]
        q[idx + 2] = self.nodes[:, 2]
        q[np.arange(self.n_edges) * 4 + 3] = self.thetas
        return q

    def material_frame(self, edge):
        """Material directors (m1, m2) on one edge."""
        c, s = np.cos(self.thetas[edge]), np.sin(self.thetas[edge])
        m1 = c * self.d1[edge] + s * self.d2[edge]
        m2 = -s * self.d1[edge] + c * self.d2[edge]
        return m1, m2

    def material_matrix(self, edge):
        """3x3 matrix with columns (m1, m2, t) on one edge."""
        m1, m2 = self.material_frame(edge)
        return np.column_stack([m1, m2, self.tangents[edge]])


def split_dof(q, n_edges):
    """Inverse of RodState.dof_vector: (nodes, thetas)."""
    n_nodes = n_edges + 1
    idx = np.arange(n_nodes) * 4
    nodes = np.column_stack([q[idx], q[idx + 1], q[idx + 2]])
    thetas = q[np.arange(n_edges) * 4 + 3].copy()
    return nodes, thetas


def node_dof_indices(i):
    return np.arange(4 * i, 4 * i + 3)


def theta_dof_index(i):
    return 4 * i + 3


def _edge_tangents(nodes):
    e = np.diff(nodes, axis=0)
    lengths = np.linalg.norm(e, axis=1)
    if np.any(lengths <= 0.0):
        raise DegenerateGeometryError("zero-length edge")
    return e / lengths[:, None], lengths


def _space_ref_twist(d1, tangents):
    """Twist of the reference frame relative to space-parallel transport."""
    moved = parallel_transport_many(d1[:-1], tangents[:-1], tangents[1:])
    return signed_angle_many(moved, d1[1:], tangents[1:])


def make_state(nodes, rest_lengths=None, thetas=None, first_d1=None):
    """Build a state from a centerline.

    Reference frames are space-parallel transported from the first edge, so
    the initial reference twist vanishes identically.
    """
    nodes = np.asarray(nodes, dtype=float)
    tangents, lengths = _edge_tangents(nodes)
    n = len(tangents)
    if rest_lengths is None:
        rest_lengths = lengths.copy()
    else:
        rest_lengths = np.asarray(rest_lengths, dtype=float).copy()
    if thetas is None:
        thetas = np.zeros(n)
    else:
        thetas = np.asarray(thetas, dtype=float).copy()

    d1 = np.empty((n, 3))
    if first_d1 is None:
        d1[0] = perpendicular_unit(tangents[0])
    else:
        v = np.asarray(first_d1, dtype=float)
        d1[0] = unit(v - np.dot(v, tangents[0]) * tangents[0])
    for i in range(1, n):
        v = parallel_transport_many(
            d1[i - 1][None, :], tangents[i - 1][None, :], tangents[i][None, :]
        )[0]
        v -= np.dot(v, tangents[i]) * tangents[i]
        d1[i] = unit(v)
    d2 = cross_rows(tangents, d1)
    ref_twist = _space_ref_twist(d1, tangents)
    return RodState(
        nodes=nodes.copy(),
        thetas=thetas,
        d1=d1,
        d2=d2,
        tangents=tangents,
        rest_lengths=rest_lengths,
        ref_twist=ref_twist,
    )


def straight_state(length, n_edges, direction=(1.0, 0.0, 0.0), origin=(0.0, 0.0, 0.0)):
    direction = unit(np.asarray(direction, dtype=float))
    s = np.linspace(0.0, length, n_edges + 1)
    nodes = np.asarray(origin, dtype=float)[None, :] + s[:, None] * direction[None, :]
    return make_state(nodes)


def advance(state, new_nodes, new_thetas=None, velocities=None):
    """New state at updated positions; frames follow by time-parallel transport.

    Raises DegenerateGeometryError for zero edges, anti-parallel transport or
    folded-back neighbouring edges (turning angle of pi).
    """
    new_nodes = np.asarray(new_nodes, dtype=float)
    tangents, _ = _edge_tangents(new_nodes)
    d1 = parallel_transport_many(state.d1, state.tangents, tangents)
    # remove numerical drift so frames stay orthonormal over long runs
    d1 -= np.einsum("ij,ij->i", d1, tangents)[:, None] * tangents
    d1 /= np.sqrt(np.einsum('ij,ij->i', d1, d1))[:, None]
    d2 = cross_rows(tangents, d1)

    dots = np.einsum("ij,ij->i", tangents[:-1], tangents[1:])
    if np.any(1.0 + dots < _FOLD_EPS):
        raise DegenerateGeometryError("folded-back edge pair (turning angle pi)")
    ref_twist = _space_ref_twist(d1, tangents)

    return RodState(
        nodes=new_nodes.copy(),
        thetas=state.thetas.copy() if new_thetas is None else np.asarray(new_thetas, dtype=float).copy(),
        d1=d1,
        d2=d2,
        tangents=tangents,
        rest_lengths=state.rest_lengths.copy(),
        ref_twist=ref_twist,
        velocities=state.velocities.copy() if velocities is None else velocities,
    )


def advance_dof(state, q, velocities=None):
    nodes, thetas = split_dof(q, state.n_edges)
    return advance(state, nodes, thetas, velocities)


def node_masses(state, params):
    """Lumped node masses from half the adjacent undeformed edge lengths."""
    rho_a = params.density * params.area
    m = np.zeros(state.n_nodes)
    m[:-1] += 0.5 * rho_a * state.rest_lengths
    m[1:] += 0.5 * rho_a * state.rest_lengths
    return m


def mass_vector(state, params):
    """Diagonal lumped mass over the DOF vector (rotational inertia on twists)."""
    m = np.zeros(state.dof_count)
    masses = node_masses(state, params)
    idx = np.arange(state.n_nodes) * 4
    for k in range(3):
        m[idx + k] = masses
    edge_mass = params.density * params.area * state.rest_lengths
    m[np.arange(state.n_edges) * 4 + 3] = 0.5 * edge_mass * params.radius**2
    return m


def rigidly_transformed(state, rotation=None, translation=None):
    """Rotate/translate the whole rod, frames included (for invariance tests)."""
    R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
    tvec = np.zeros(3) if translation is None else np.asarray(translation, dtype=float)
    return RodState(
        nodes=state.nodes @ R.T + tvec,
        thetas=state.thetas.copy(),
        d1=state.d1 @ R.T,
        d2=state.d2 @ R.T,
        tangents=state.tangents @ R.T,
        rest_lengths=state.rest_lengths.copy(),
        ref_twist=state.ref_twist.copy(),
        velocities=state.velocities.copy(),
    )


def replace_velocities(state, velocities):
    return replace(state, velocities=np.asarray(velocities, dtype=float))
