"""Boundary conditions, implicit time stepping and static equilibrium.

The static solver runs Newton iterations with an Armijo line search on the
total potential; when Newton cannot make progress it falls back to damped
implicit stepping (proximal gradient flow: implicit Euler with velocities
reset each step), then retries Newton.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from . import elastic
from .elastic import BANDWIDTH
from .errors import DegenerateGeometryError, SolverFailureError
from .rod import advance_dof, mass_vector, node_masses, replace_velocities


@dataclass(frozen=True)
class BoundaryCondition:
    """Constrained DOF indices with prescribed absolute values."""

    fixed: np.ndarray   # (m,) int, sorted unique
    values: np.ndarray  # (m,) float

    def __post_init__(self):
        fixed = np.asarray(self.fixed, dtype=int)
        values = np.asarray(self.values, dtype=float)
        if fixed.ndim != 1 or fixed.shape != values.shape:
            raise ValueError("fixed and values must be matching 1-d arrays")
        if len(np.unique(fixed)) != len(fixed):
            raise ValueError("constrained DOF indices must be unique")
        order = np.argsort(fixed)
        object.__setattr__(self, "fixed", fixed[order])
        object.__setattr__(self, "values", values[order])

    def validated(self, ndof):
        if len(self.fixed) and (self.fixed[0] < 0 or self.fixed[-1] >= ndof):
            raise ValueError("constrained DOF index out of range")
        return self

    def with_values(self, values):
        return BoundaryCondition(self.fixed, np.asarray(values, dtype=float))

    def free_mask(self, ndof):
        mask = np.ones(ndof, dtype=bool)
        mask[self.fixed] = False
        return mask


def clamp_nodes(node_positions, thetas=None):
    """Boundary condition fixing whole nodes (and optionally twist angles).

    node_positions: mapping node index -> 3-vector.
    thetas: mapping edge index -> angle.
    """
    idx, vals = [], []
    for i, pos in node_positions.items():
        pos = np.asarray(pos, dtype=float)
        idx.extend([4 * i, 4 * i + 1, 4 * i + 2])
        vals.extend(pos.tolist())
    if thetas:
        for i, th in thetas.items():
            idx.append(4 * i + 3)
            vals.append(float(th))
    return BoundaryCondition(np.array(idx, dtype=int), np.array(vals, dtype=float))


def merge_bc(*bcs):
    fixed = np.concatenate([bc.fixed for bc in bcs])
    values = np.concatenate([bc.values for bc in bcs])
    return BoundaryCondition(fixed, values)


class FloorModel:
    """One-sided quadratic penalty pushing nodes above a horizontal plane."""

    def __init__(self, height=0.0, stiffness=1.0):
        self.height = height
        self.stiffness = stiffness

    def potential(self, state):
        pen = np.clip(self.height - state.nodes[:, 2], 0.0, None)
        return self.stiffness * float(np.sum(pen**3)) / 3.0

    def force_vector(self, state):
        pen = np.clip(self.height - state.nodes[:, 2], 0.0, None)
        f = np.zeros(state.dof_count)
        f[np.arange(state.n_nodes) * 4 + 2] = self.stiffness * pen**2
        return f

    def hessian_diagonal(self, state):
        pen = np.clip(self.height - state.nodes[:, 2], 0.0, None)
        d = np.zeros(state.dof_count)
        d[np.arange(state.n_nodes) * 4 + 2] = 2.0 * self.stiffness * pen
        return d


def total_potential(state, params, f_ext=None, force_model=None, masses=None):
    """Elastic + gravitational potential minus work of constant loads."""
    phi = elastic.elastic_energy(state, params) + elastic.gravity_potential(
        state, params, masses
    )
    if f_ext is not None:
        phi -= float(np.dot(f_ext, state.dof_vector()))
    if force_model is not None:
        phi += force_model.potential(state)
    return phi


def potential_gradient(state, params, f_ext=None, force_model=None, masses=None):
    g = -elastic.internal_forces(state, params) - elastic.gravity_force_vector(
        state, params, masses
    )
    if f_ext is not None:
        g -= f_ext
    if force_model is not None:
        g -= force_model.force_vector(state)
    return g


def reaction_vector(state, params, bc, f_ext=None, force_model=None):
    """Generalized constraint forces: gradient of the potential at equilibrium.

    Entry j (for a constrained DOF) is the force the constraint applies to the
    rod along DOF j; on free DOFs it equals the (near-zero) static residual.
    """
    return potential_gradient(state, params, f_ext, force_model)


def default_static_tolerance(params):
    """Gravity-scale-relative force tolerance."""
    return 1e-8 * params.lineal_weight * params.total_length


def _noise_floor(params, ndof):
    # round-off scale of assembled force residuals (axial terms dominate)
    return np.finfo(float).eps * params.stretch_stiffness * np.sqrt(ndof)


def _constrain_banded(ab, rhs, fixed, ndof):
    for j in fixed:
        ab[:, j] = 0.0
        cols = np.arange(max(0, j - BANDWIDTH), min(ndof, j + BANDWIDTH + 1))
        ab[BANDWIDTH + j - cols, cols] = 0.0
        ab[BANDWIDTH, j] = 1.0
        rhs[j] = 0.0


def _imposed(state, bc):
    q = state.dof_vector()
    if np.max(np.abs(q[bc.fixed] - bc.values), initial=0.0) == 0.0:
        return state
    q[bc.fixed] = bc.values
    return advance_dof(state, q)


def _safe_potential(state, params, q, f_ext, force_model, masses):
    try:
        trial = advance_dof(state, q)
    except DegenerateGeometryError:
        return np.inf, None
    phi = total_potential(trial, params, f_ext, force_model, masses)
    if not np.isfinite(phi):
        return np.inf, None
    return phi, trial


def _newton_static(state, params, bc, f_ext, force_model, tol, max_iter, masses):
    ndof = state.dof_count
    free = bc.free_mask(ndof)
    q = state.dof_vector()
    phi = total_potential(state, params, f_ext, force_model, masses)
    const_load = elastic.gravity_force_vector(state, params, masses)
    if f_ext is not None:
        const_load = const_load + f_ext

    for _ in range(max_iter):
        forces, hessian = elastic.newton_ingredients(state, params)
        g = -forces - const_load
        if force_model is not None:
            g -= force_model.force_vector(state)
        res = np.linalg.norm(g[free])
        if res < tol:
            return state, True
        ab = hessian()
        if force_model is not None:
            ab[BANDWIDTH] += force_model.hessian_diagonal(state)
        rhs = -g.copy()
        _constrain_banded(ab, rhs, bc.fixed, ndof)

        scale = max(np.abs(ab[BANDWIDTH]).max(), 1e-30)
        lam = 0.0
        step = None
        for _ in range(9):
            abl = ab.copy()
            if lam:
                abl[BANDWIDTH] += lam * scale
            try:
                d = solve_banded((BANDWIDTH, BANDWIDTH), abl, rhs)
            except np.linalg.LinAlgError:
                d = None
            if d is not None and np.isfinite(d).all() and np.dot(d, -rhs) < 0.0:
                step = d
                break
            lam = 1e-6 if lam == 0.0 else lam * 30.0
        if step is None:
            return state, False

        gd = float(np.dot(g, step))  # negative: descent direction
        alpha, accepted = 1.0, None
        for _ in range(40):
            phi_trial, trial = _safe_potential(
                state, params, q + alpha * step, f_ext, force_model, masses
            )
            if phi_trial <= phi + 1e-4 * alpha * gd:
                accepted = (phi_trial, trial)
                break
            alpha *= 0.5
        if accepted is None:
            return state, False
        if alpha * np.abs(step).max() < 1e-14 * max(1.0, np.abs(q).max()):
            # progress below position resolution: numerically stalled
            return state, False
        phi, state = accepted
        q = state.dof_vector()
    g = potential_gradient(state, params, f_ext, force_model, masses)
    return state, bool(np.linalg.norm(g[free]) < tol)


def _relax_dynamic(state, params, bc, f_ext, force_model, tol, masses, max_steps=400):
    """Proximal implicit stepping with velocity reset (monotone potential)."""
    mvec = mass_vector(state, params)
    # gravity timescale of the constrained rod sets the initial step
    t_g = np.sqrt(params.total_length / params.gravity)
    dt = 0.05 * t_g
    free = bc.free_mask(state.dof_count)
    state = replace_velocities(state, np.zeros(state.dof_count))
    fails = 0
    for _ in range(max_steps):
        try:
            state = _implicit_step(
                state, params, bc, dt, f_ext, force_model, mvec, masses,
                reset_velocity=True,
            )
            dt = min(dt * 1.4, 5.0 * t_g)
            fails = 0
        except (SolverFailureError, DegenerateGeometryError):
            dt *= 0.3
            fails += 1
            if fails > 12:
                break  # hand whatever we reached back to Newton
            continue
        g = potential_gradient(state, params, f_ext, force_model, masses)
        if np.linalg.norm(g[free]) < 50.0 * tol:
            break
    return state


def static_solve(
    state,
    params,
    bc,
    f_ext=None,
    force_model=None,
    tol=None,
    max_iter=60,
    max_rounds=3,
):
    """Equilibrium configuration under the given constraints and loads.

    Falls back to damped dynamic stepping when Newton stalls; raises
    SolverFailureError if the residual cannot be brought under tolerance.
    """
    bc.validated(state.dof_count)
    if tol is None:
        tol = default_static_tolerance(params)
    tol = max(tol, 50.0 * _noise_floor(params, state.dof_count))
    masses = node_masses(state, params)
    state = _imposed(state, bc)
    last_exc = None
    for _ in range(max_rounds):
        state, ok = _newton_static(
            state, params, bc, f_ext, force_model, tol, max_iter, masses
        )
        if ok:
            return replace_velocities(state, np.zeros(state.dof_count))
        try:
            state = _relax_dynamic(state, params, bc, f_ext, force_model, tol, masses)
        except (SolverFailureError, DegenerateGeometryError) as exc:
            last_exc = exc
            break
    g = potential_gradient(state, params, f_ext, force_model, masses)
    res = float(np.linalg.norm(g[bc.free_mask(state.dof_count)]))
    raise SolverFailureError(
        f"static solve did not converge (residual {res:.3e}, tol {tol:.3e})",
        residual=res,
    ) from last_exc


def _implicit_step(
    state, params, bc, dt, f_ext, force_model, mvec, masses, reset_velocity=False,
    max_iter=30,
):
    ndof = state.dof_count
    free = bc.free_mask(ndof)
    q0 = state.dof_vector()
    v0 = np.zeros(ndof) if reset_velocity else state.velocities

    q = q0.copy()
    q[bc.fixed] = bc.values
    cur = advance_dof(state, q) if np.any(q != q0) else state

    floor = 20.0 * _noise_floor(params, ndof)
    for _ in range(max_iter):
        g = potential_gradient(cur, params, f_ext, force_model, masses)
        resid = mvec / dt * ((q - q0) / dt - v0) + g
        rn = np.linalg.norm(resid[free])
        # inertia-aware absolute scale for the dynamic residual
        scale = max(np.linalg.norm(g[free]), params.lineal_weight * params.total_length)
        if rn < max(1e-9 * scale, floor):
            new_v = (q - q0) / dt
            return advance_dof(state, q, velocities=new_v)
        ab = elastic.elastic_hessian_banded(cur, params)
        if force_model is not None:
            ab[BANDWIDTH] += force_model.hessian_diagonal(cur)
        ab[BANDWIDTH] += mvec / dt**2
        rhs = -resid
        _constrain_banded(ab, rhs, bc.fixed, ndof)
        try:
            d = solve_banded((BANDWIDTH, BANDWIDTH), ab, rhs)
        except np.linalg.LinAlgError as exc:
            raise SolverFailureError("implicit step: singular system", residual=rn) from exc
        # backtrack on the dynamic residual norm
        alpha, ok = 1.0, False
        for _ in range(25):
            q_trial = q + alpha * d
            try:
                trial = advance_dof(state, q_trial)
            except DegenerateGeometryError:
                alpha *= 0.5
                continue
            g_t = potential_gradient(trial, params, f_ext, force_model, masses)
            r_t = mvec / dt * ((q_trial - q0) / dt - v0) + g_t
            if np.linalg.norm(r_t[free]) < rn:
                q, cur, ok = q_trial, trial, True
                break
            alpha *= 0.5
        if not ok:
            raise SolverFailureError("implicit step: line search failed", residual=rn)
    raise SolverFailureError("implicit step: Newton iteration cap", residual=rn)


def step_implicit(state, params, bc, dt, f_ext=None, force_model=None):
    """One implicit Euler step of the equations of motion."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    bc.validated(state.dof_count)
    mvec = mass_vector(state, params)
    masses = node_masses(state, params)
    return _implicit_step(state, params, bc, dt, f_ext, force_model, mvec, masses)
