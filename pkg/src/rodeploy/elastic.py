"""Discrete rod elastic energies, internal forces and the banded Hessian.

Energies follow the standard discrete-elastic-rods form for an isotropic rod
with a straight, twist-free rest shape:

* stretching  (k_s/2) sum (|e|/|e~| - 1)^2 |e~|
* bending     k_b  sum |kb|^2 / (|e~_prev| + |e~_next|)
* twisting    k_t  sum tau^2  / (|e~_prev| + |e~_next|)

with curvature binormal kb = 2 (t_prev x t_next) / (1 + t_prev . t_next)
(so |kb| = 2 tan(phi/2) for turning angle phi) and discrete twist
tau_i = theta^i - theta^{i-1} + dtau_ref_i.

The Hessian couples at most nodes i-1..i+1 plus the two adjacent twist
angles, i.e. 11 consecutive DOFs, giving a banded matrix of half-bandwidth 10.
"""
from __future__ import annotations

import numpy as np

from .errors import DegenerateGeometryError
from .geometry import cross_rows

BANDWIDTH = 10

# local DOF layout of an interior-node block: [x_{i-1}, th^{i-1}, x_i, th^i, x_{i+1}]
_POS9 = np.array([0, 1, 2, 4, 5, 6, 8, 9, 10])
_TH_PREV, _TH_NEXT = 3, 7
_FOLD_EPS = 1e-9


class _IndexPlan:
    """Precomputed scatter indices for one mesh size."""

    def __init__(self, n_edges):
        n_int = n_edges - 1
        self.n_edges = n_edges
        self.ndof = 4 * n_edges + 3
        base = 4 * np.arange(n_int)              # block start for node i=1..N-1
        loc = np.arange(11)
        a, b = np.meshgrid(loc, loc, indexing="ij")
        self.block_rows = (BANDWIDTH + a - b).ravel()             # (121,)
        self.block_cols = base[:, None] + np.tile(b.ravel(), 1)[None, :]  # (n_int,121)

        off = np.array([0, 1, 2, 4, 5, 6])
        a6, b6 = np.meshgrid(off, off, indexing="ij")
        ebase = 4 * np.arange(n_edges)
        self.edge_rows = (BANDWIDTH + a6 - b6).ravel()            # (36,)
        self.edge_cols = ebase[:, None] + np.tile(b6.ravel(), 1)[None, :]  # (n,36)


_PLANS = {}


def _plan(n_edges):
    plan = _PLANS.get(n_edges)
    if plan is None:
        plan = _IndexPlan(n_edges)
        _PLANS[n_edges] = plan
    return plan


def _edge_quantities(state):
    e = np.diff(state.nodes, axis=0)
    r = np.linalg.norm(e, axis=1)
    if np.any(r <= 0.0):
        raise DegenerateGeometryError("zero-length edge")
    t = e / r[:, None]
    return e, r, t


def _curvature_quantities(state, t):
    tp, tn = t[:-1], t[1:]
    c = np.einsum("ij,ij->i", tp, tn)
    chi = 1.0 + c
    if np.any(chi < _FOLD_EPS):
        raise DegenerateGeometryError("folded-back edge pair (turning angle pi)")
    kb = 2.0 * cross_rows(tp, tn) / chi[:, None]
    lsum = state.rest_lengths[:-1] + state.rest_lengths[1:]
    return c, chi, kb, lsum


def stretching_energy(state, params):
    """Axial strain energy of the whole rod [J]."""
    _, r, _ = _edge_quantities(state)
    strain = r / state.rest_lengths - 1.0
    return 0.5 * params.stretch_stiffness * float(np.sum(strain**2 * state.rest_lengths))


def bending_energy(state, params):
    """Bending energy summed over interior nodes [J]."""
    _, _, t = _edge_quantities(state)
    c, chi, _, lsum = _curvature_quantities(state, t)
    kb2 = 4.0 * (1.0 - c) / chi
    return params.bend_stiffness * float(np.sum(kb2 / lsum))


def discrete_twists(state):
    return state.thetas[1:] - state.thetas[:-1] + state.ref_twist


def twisting_energy(state, params):
    """Twisting energy summed over interior nodes [J]."""
    tau = discrete_twists(state)
    lsum = state.rest_lengths[:-1] + state.rest_lengths[1:]
    return params.twist_stiffness * float(np.sum(tau**2 / lsum))


def elastic_energy(state, params):
    return (
        stretching_energy(state, params)
        + bending_energy(state, params)
        + twisting_energy(state, params)
    )


def gravity_potential(state, params, masses=None):
    if masses is None:
        from .rod import node_masses

        masses = node_masses(state, params)
    return params.gravity * float(np.dot(masses, state.nodes[:, 2]))


def gravity_force_vector(state, params, masses=None):
    """External gravity load as a DOF-vector (z components only)."""
    if masses is None:
        from .rod import node_masses

        masses = node_masses(state, params)
    f = np.zeros(state.dof_count)
    f[np.arange(state.n_nodes) * 4 + 2] = -params.gravity * masses
    return f


def _gradient_pieces(state, params):
    """Shared geometry plus per-term gradient ingredients."""
    _, r, t = _edge_quantities(state)
    c, chi, kb, lsum = _curvature_quantities(state, t)
    rp, rn = r[:-1], r[1:]
    tp, tn = t[:-1], t[1:]
    g1 = (tn - c[:, None] * tp) / rp[:, None]      # dc/de_prev
    g2 = (tp - c[:, None] * tn) / rn[:, None]      # dc/de_next
    tau = discrete_twists(state)
    return r, t, c, chi, kb, lsum, rp, rn, tp, tn, g1, g2, tau


def internal_forces(state, params):
    """Negative gradient of the total elastic energy, size 4N+3."""
    return _forces_from_pieces(state, params, _gradient_pieces(state, params))


def _forces_from_pieces(state, params, pieces):
    r, t, c, chi, kb, lsum, rp, rn, tp, tn, g1, g2, tau = pieces
    n_nodes = state.n_nodes

    gnodes = np.zeros((n_nodes, 3))
    gth = np.zeros(state.n_edges)

    # stretching
    strain = r / state.rest_lengths - 1.0
    fs = params.stretch_stiffness * strain[:, None] * t
    gnodes[:-1] -= fs
    gnodes[1:] += fs

    # bending: E = K * 4(1-c)/(1+c), dE/dc = -8K/(1+c)^2
    gp = -8.0 * params.bend_stiffness / (lsum * chi**2)
    gnodes[:-2] += -gp[:, None] * g1
    gnodes[1:-1] += gp[:, None] * (g1 - g2)
    gnodes[2:] += gp[:, None] * g2

    # twisting
    w = 2.0 * params.twist_stiffness * tau / lsum
    gth[:-1] -= w
    gth[1:] += w
    dtau_de1 = kb / (2.0 * rp[:, None])
    dtau_de2 = kb / (2.0 * rn[:, None])
    gnodes[:-2] += -w[:, None] * dtau_de1
    gnodes[1:-1] += w[:, None] * (dtau_de1 - dtau_de2)
    gnodes[2:] += w[:, None] * dtau_de2

    grad = np.zeros(state.dof_count)
    idx = np.arange(n_nodes) * 4
    grad[idx] = gnodes[:, 0]
    grad[idx + 1] = gnodes[:, 1]
    grad[idx + 2] = gnodes[:, 2]
    grad[np.arange(state.n_edges) * 4 + 3] = gth
    return -grad


def elastic_hessian_banded(state, params):
    """Hessian of the elastic energy in LAPACK banded storage (21, 4N+3)."""
    return _hessian_from_pieces(state, params, _gradient_pieces(state, params))


def force_and_hessian(state, params):
    """Internal forces and banded elastic Hessian, sharing geometry work."""
    pieces = _gradient_pieces(state, params)
    return (
        _forces_from_pieces(state, params, pieces),
        _hessian_from_pieces(state, params, pieces),
    )


def newton_ingredients(state, params):
    """Forces now, Hessian lazily, both over one geometry evaluation."""
    pieces = _gradient_pieces(state, params)
    forces = _forces_from_pieces(state, params, pieces)

    def hessian():
        return _hessian_from_pieces(state, params, pieces)

    return forces, hessian


def _hessian_from_pieces(state, params, pieces):
    r, t, c, chi, kb, lsum, rp, rn, tp, tn, g1, g2, tau = pieces
    plan = _plan(state.n_edges)
    n_int = state.n_edges - 1
    I3 = np.eye(3)

    # --- interior-node 11x11 blocks: bending + twisting ---
    blocks = np.zeros((n_int, 11, 11))

    kbnd = params.bend_stiffness
    gp = -8.0 * kbnd / (lsum * chi**2)
    gpp = 16.0 * kbnd / (lsum * chi**3)

    def outer(u, v):
        return np.einsum("ni,nj->nij", u, v)

    tpop = outer(tp, tp)
    tnon = outer(tn, tn)
    H11 = -(outer(tp, g1) + outer(g1, tp)) / rp[:, None, None] - (
        c[:, None, None] * (I3 - tpop) / (rp**2)[:, None, None]
    )
    H22 = -(outer(tn, g2) + outer(g2, tn)) / rn[:, None, None] - (
        c[:, None, None] * (I3 - tnon) / (rn**2)[:, None, None]
    )
    H12 = ((I3 - tnon) / rn[:, None, None] - outer(tp, g2)) / rp[:, None, None]
    H21 = np.swapaxes(H12, 1, 2)

    Hc = np.zeros((n_int, 9, 9))
    Hc[:, 0:3, 0:3] = H11
    Hc[:, 0:3, 3:6] = -H11 + H12
    Hc[:, 0:3, 6:9] = -H12
    Hc[:, 3:6, 3:6] = H11 - H12 - H21 + H22
    Hc[:, 3:6, 6:9] = H12 - H22
    Hc[:, 6:9, 6:9] = H22
    Hc[:, 3:6, 0:3] = np.swapaxes(Hc[:, 0:3, 3:6], 1, 2)
    Hc[:, 6:9, 0:3] = np.swapaxes(Hc[:, 0:3, 6:9], 1, 2)
    Hc[:, 6:9, 3:6] = np.swapaxes(Hc[:, 3:6, 6:9], 1, 2)

    gc = np.concatenate([-g1, g1 - g2, g2], axis=1)  # (n,9)
    bend9 = gpp[:, None, None] * outer(gc, gc) + gp[:, None, None] * Hc

    # twisting
    w = 2.0 * params.twist_stiffness / lsum          # d2E/dtau2
    wt = w * tau                                     # dE/dtau
    dtau_de1 = kb / (2.0 * rp[:, None])
    dtau_de2 = kb / (2.0 * rn[:, None])
    gtau = np.concatenate([-dtau_de1, dtau_de1 - dtau_de2, dtau_de2], axis=1)

    tt = (tp + tn) / chi[:, None]
    D2De2 = -0.25 / (rp**2)[:, None, None] * (
        outer(kb, tp + tt) + outer(tp + tt, kb)
    )
    D2Df2 = -0.25 / (rn**2)[:, None, None] * (
        outer(kb, tn + tt) + outer(tn + tt, kb)
    )
    cross_tp = np.zeros((n_int, 3, 3))
    cross_tp[:, 0, 1] = -tp[:, 2]
    cross_tp[:, 0, 2] = tp[:, 1]
    cross_tp[:, 1, 0] = tp[:, 2]
    cross_tp[:, 1, 2] = -tp[:, 0]
    cross_tp[:, 2, 0] = -tp[:, 1]
    cross_tp[:, 2, 1] = tp[:, 0]
    D2DeDf = (0.5 / (rp * rn))[:, None, None] * (
        (2.0 / chi)[:, None, None] * cross_tp - outer(kb, tt)
    )
    D2DfDe = np.swapaxes(D2DeDf, 1, 2)

    Htau = np.zeros((n_int, 9, 9))
    Htau[:, 0:3, 0:3] = D2De2
    Htau[:, 0:3, 3:6] = -D2De2 + D2DeDf
    Htau[:, 0:3, 6:9] = -D2DeDf
    Htau[:, 3:6, 3:6] = D2De2 - D2DeDf - D2DfDe + D2Df2
    Htau[:, 3:6, 6:9] = D2DeDf - D2Df2
    Htau[:, 6:9, 6:9] = D2Df2
    Htau[:, 3:6, 0:3] = np.swapaxes(Htau[:, 0:3, 3:6], 1, 2)
    Htau[:, 6:9, 0:3] = np.swapaxes(Htau[:, 0:3, 6:9], 1, 2)
    Htau[:, 6:9, 3:6] = np.swapaxes(Htau[:, 3:6, 6:9], 1, 2)

    twist9 = w[:, None, None] * outer(gtau, gtau) + wt[:, None, None] * Htau

    pos = _POS9
    blocks[:, pos[:, None], pos[None, :]] = bend9 + twist9
    # theta-theta coupling
    blocks[:, _TH_PREV, _TH_PREV] += w
    blocks[:, _TH_NEXT, _TH_NEXT] += w
    blocks[:, _TH_PREV, _TH_NEXT] -= w
    blocks[:, _TH_NEXT, _TH_PREV] -= w
    # theta-position coupling
    wg = w[:, None] * gtau
    blocks[:, _TH_NEXT, pos] += wg
    blocks[:, pos[:, None], np.full((9, 1), _TH_NEXT)] += wg[:, :, None]
    blocks[:, _TH_PREV, pos] -= wg
    blocks[:, pos[:, None], np.full((9, 1), _TH_PREV)] -= wg[:, :, None]

    ab = np.zeros((2 * BANDWIDTH + 1, plan.ndof))
    np.add.at(ab, (plan.block_rows[None, :], plan.block_cols), blocks.reshape(n_int, 121))

    # --- per-edge 6x6 stretching blocks ---
    strain = r / state.rest_lengths - 1.0
    He = params.stretch_stiffness * (
        outer(t, t) / state.rest_lengths[:, None, None]
        + (strain / r)[:, None, None] * (I3 - outer(t, t))
    )
    e6 = np.zeros((state.n_edges, 6, 6))
    e6[:, 0:3, 0:3] = He
    e6[:, 3:6, 3:6] = He
    e6[:, 0:3, 3:6] = -He
    e6[:, 3:6, 0:3] = -He
    np.add.at(ab, (plan.edge_rows[None, :], plan.edge_cols), e6.reshape(state.n_edges, 36))
    return ab


def banded_to_dense(ab, ndof):
    """Expand LAPACK banded storage to a dense matrix (tests only)."""
    H = np.zeros((ndof, ndof))
    for j in range(ndof):
        for di in range(-BANDWIDTH, BANDWIDTH + 1):
            i = j + di
            if 0 <= i < ndof:
                H[i, j] = ab[BANDWIDTH + di, j]
    return H
