"""Suspended-segment boundary value problem.

The segment runs from the connective node q_C (where the deployed pattern
ends) to the manipulated node q_M held by the gripper. The pattern side
prescribes position, tangent and curvature at s=0; these are realized by
clamping the first three nodes onto a circular arc in the local x-y plane
(straight triple for zero curvature) plus the first twist angle. The
manipulated end is either position-clamped with free orientation (hinged,
the optimization default) or fully clamped (two nodes plus end twist).

The report carries the reaction force and twisting moment the pattern side
exerts on the suspended part, read off the constrained-DOF residuals.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import elastic, solver
from .errors import DegenerateGeometryError, InsufficientDataError, SolverFailureError
from .geometry import axis_angle_from_rotation
from .rod import RodParams, RodState, make_state
from .scaling import normalized_params, scales_for

LOCAL_M0 = np.column_stack([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
# material frame at s=0: m1 = y, m2 = z, tangent = x


def default_edge_count(ls_over_lgb):
    """Mesh size for a suspended segment, graded with normalized length."""
    return int(np.clip(np.ceil(2.5 * ls_over_lgb), 50, 140))


@dataclass
class SuspendedBVP:
    """One suspended-segment problem (units follow ``params``)."""

    suspended_length: float
    connective_curvature: float
    params: RodParams
    manipulated_position: np.ndarray            # q_M - q_C
    manipulated_rotation: np.ndarray = None     # 3x3, None = moment-free end
    n_edges: int = None

    def __post_init__(self):
        if not 0 < self.suspended_length <= self.params.total_length:
            raise ValueError("suspended length must lie in (0, L]")
        if not np.isfinite(self.connective_curvature):
            raise ValueError("curvature must be finite")
        self.manipulated_position = np.asarray(self.manipulated_position, dtype=float)
        if self.n_edges is None:
            lgb = scales_for(self.params).length
            self.n_edges = default_edge_count(self.suspended_length / lgb)


@dataclass
class ReactionReport:
    """Reaction at the connective node plus the solved equilibrium."""

    force: np.ndarray           # F_ext on the suspended part [force units]
    twist_moment: float         # M0 [force * length units]
    gripper_force: np.ndarray
    state: RodState
    end_rotation: np.ndarray    # m(l_s) m(0)^T, local frame
    min_height: float           # lowest z among non-clamped nodes

    @property
    def end_rotation_vector(self):
        return axis_angle_from_rotation(self.end_rotation)


def _arc_nodes(kappa, spacing, count):
    """Points along the connective arc (local x-y plane, curvature kappa*y)."""
    s = spacing * np.arange(count)
    if abs(kappa) < 1e-12:
        return np.column_stack([s, np.zeros_like(s), np.zeros_like(s)])
    return np.column_stack(
        [np.sin(kappa * s) / kappa, (1.0 - np.cos(kappa * s)) / kappa, np.zeros_like(s)]
    )


def _initial_curve(bvp):
    """Cold-start polyline: clamped arc start blending into a curve to q_M."""
    n = bvp.n_edges
    ls = bvp.suspended_length
    spacing = ls / n
    target = bvp.manipulated_position
    # quadratic Bezier from the arc end toward the target keeps the start tangent
    p0 = np.zeros(3)
    t0 = np.array([1.0, 0.0, 0.0])
    dist = np.linalg.norm(target)
    lead = min(ls / 3.0, max(0.3 * dist, 2.0 * spacing))
    b1 = p0 + t0 * lead
    t = np.linspace(0.0, 1.0, 4 * n + 1)[:, None]
    curve = (1 - t) ** 2 * p0 + 2 * (1 - t) * t * b1 + t**2 * target[None, :]
    seg = np.linalg.norm(np.diff(curve, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    # resample to equal spacing along the curve
    si = np.linspace(0.0, arc[-1], n + 1)
    nodes = np.column_stack(
        [np.interp(si, arc, curve[:, k]) for k in range(3)]
    )
    nodes[0] = p0
    nodes[-1] = target
    return make_state(nodes, rest_lengths=np.full(n, spacing), first_d1=[0.0, 1.0, 0.0])


def _merge_end_bc(bvp, state):
    """Boundary condition for the current manipulated pose."""
    n = bvp.n_edges
    spacing = bvp.suspended_length / n
    arc = _arc_nodes(bvp.connective_curvature, spacing, 3)
    clamps = {0: arc[0], 1: arc[1], 2: arc[2], n: bvp.manipulated_position}
    thetas = {0: 0.0}
    if bvp.manipulated_rotation is not None:
        R = np.asarray(bvp.manipulated_rotation, dtype=float)
        t_end = R @ LOCAL_M0[:, 2]
        clamps[n - 1] = bvp.manipulated_position - spacing * t_end
        m1_target = R @ LOCAL_M0[:, 0]
        d1 = state.d1[n - 1]
        d2 = state.d2[n - 1]
        thetas[n - 1] = float(
            np.arctan2(np.dot(m1_target, d2), np.dot(m1_target, d1))
        )
    return solver.clamp_nodes(clamps, thetas)


def _reactions(state, params, bc, hinged):
    grad = solver.reaction_vector(state, params, bc)
    n = state.n_edges
    force = np.zeros(3)
    for node in (0, 1, 2):
        force += grad[4 * node : 4 * node + 3]
    moment = float(grad[3])  # clamped first twist angle
    grip = np.zeros(3)
    for node in ((n,) if hinged else (n - 1, n)):
        grip += grad[4 * node : 4 * node + 3]
    min_h = float(state.nodes[3:, 2].min())
    return force, moment, grip, min_h


def solve_suspended(bvp, seed_state=None, tol=None):
    """Solve the BVP and report connective-node reactions.

    seed_state warm-starts the solve (same mesh required).
    """
    state = seed_state if seed_state is not None else _initial_curve(bvp)
    if state.n_edges != bvp.n_edges:
        raise ValueError("seed state mesh does not match the BVP mesh")
    bc = _merge_end_bc(bvp, state)
    eq = solver.static_solve(state, bvp.params, bc, tol=tol)
    if bvp.manipulated_rotation is not None:
        # the end-twist clamp references the transported frame: refresh once
        bc2 = _merge_end_bc(bvp, eq)
        if np.max(np.abs(bc2.values - bc.values)) > 1e-12:
            eq = solver.static_solve(eq, bvp.params, bc2, tol=tol)
            bc = bc2
    force, moment, grip, min_h = _reactions(
        eq, bvp.params, bc, hinged=bvp.manipulated_rotation is None
    )
    m_end = eq.material_matrix(bvp.n_edges - 1)
    return ReactionReport(
        force=force,
        twist_moment=moment,
        gripper_force=grip,
        state=eq,
        end_rotation=m_end @ LOCAL_M0.T,
        min_height=min_h,
    )


class NormalizedReactionSolver:
    """Reaction evaluator for the pi-reduced suspended problem.

    Works on the internally normalized rod (L_gb = 1, k_b = 1, weight per
    length 1/2); reported forces are in paper units (k_b/h^2) so the residual
    tolerances of the optimization layers are material-independent. Keeps the
    last equilibrium as a warm start and substeps large clamp motions.
    """

    def __init__(self, ls, kappa, ks, poisson_ratio=0.5, n_edges=None):
        if kappa < 0:
            raise ValueError("normalized solver expects kappa >= 0 (mirror first)")
        self.ls = float(ls)
        self.kappa = float(kappa)
        self.ks = float(ks)
        self.params = normalized_params(ks, ls=self.ls, poisson_ratio=poisson_ratio)
        self.n_edges = default_edge_count(self.ls) if n_edges is None else int(n_edges)
        self.force_scale = scales_for(self.params).force   # = ks/4
        self.moment_scale = scales_for(self.params).moment
        self._state = None
        self._last_pose = None
        self.solve_count = 0

    def _bvp(self, position, rotation=None):
        return SuspendedBVP(
            suspended_length=self.ls,
            connective_curvature=self.kappa,
            params=self.params,
            manipulated_position=np.asarray(position, dtype=float),
            manipulated_rotation=rotation,
            n_edges=self.n_edges,
        )

    def reset(self):
        self._state = None
        self._last_pose = None

    def set_curvature(self, kappa):
        """Change the connective curvature in place (mesh unchanged).

        The warm-start state is kept: the clamp arc moves only slightly for
        small curvature steps, which is exactly the continuation use case.
        """
        if kappa < 0:
            raise ValueError("normalized solver expects kappa >= 0 (mirror first)")
        self.kappa = float(kappa)

    def _attempt(self, position, rotation, seed):
        bvp = self._bvp(position, rotation)
        report = solve_suspended(bvp, seed_state=seed)
        self.solve_count += 1
        return report

    def evaluate(self, position, rotation=None, fresh=False):
        """ReactionReport at a manipulated pose, forces in paper units."""
        position = np.asarray(position, dtype=float)
        seed = None if fresh else self._state
        try:
            report = self._attempt(position, rotation, seed)
        except (SolverFailureError, DegenerateGeometryError):
            report = None
            if seed is not None and self._last_pose is not None:
                report = self._substep(position, rotation)
            if report is None:
                # cold restart from scratch geometry
                report = self._attempt(position, rotation, None)
        self._state = report.state
        self._last_pose = position.copy()
        return self._normalized(report)

    def _substep(self, position, rotation, depth=5):
        start = self._last_pose
        for k in range(1, depth + 1):
            steps = 2**k
            seed = self._state
            try:
                for j in range(1, steps + 1):
                    inter = start + (position - start) * (j / steps)
                    report = self._attempt(inter, rotation, seed)
                    seed = report.state
                return report
            except (SolverFailureError, DegenerateGeometryError):
                continue
        return None

    def _normalized(self, report):
        report.force = report.force / self.force_scale
        report.twist_moment = report.twist_moment / self.moment_scale
        report.gripper_force = report.gripper_force / self.force_scale
        return report


def feasible_report(report, z_tol=1e-9):
    """Eq.-(12)-style feasibility: no substrate penetration, non-negative
    vertical reaction."""
    return bool(report.min_height >= -z_tol and report.force[2] >= -1e-12)


def check_deployed_friction(s, kappa, params, mu_s):
    """Per-sample flags: True where the deployed pattern can stay put.

    The deployed segment holds its shape only where k_b * kappa'' does not
    exceed the friction capacity mu_s * rho * A * g.
    """
    s = np.asarray(s, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    if len(s) < 3 or len(kappa) != len(s):
        raise InsufficientDataError("need at least 3 curvature samples")
    dk = np.gradient(kappa, s)
    d2k = np.gradient(dk, s)
    capacity = mu_s * params.density * params.area * params.gravity
    return params.bend_stiffness * d2k <= capacity + 1e-15
