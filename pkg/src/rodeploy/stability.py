"""Planar feasible-grasp manifold, its local force minima, and their
elastic stability under out-of-plane perturbation.

Everything here runs on the pi-reduced problem (normalized units) with zero
connective curvature, matching straight-line deployment in the x-z plane.
The boundary of the feasible region is traced ray-by-ray with bisection;
minima of the reaction-force norm inside the region seed the 3D optimizer
after a y-perturbation sweep rules out snap-through optima.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverFailureError
from .suspended import NormalizedReactionSolver, feasible_report

log = logging.getLogger(__name__)

STABLE = "stable"
SNAP_THROUGH = "snap-through"


@dataclass
class BoundarySample:
    theta: float
    branch: str          # "outer" (region I side) or "inner" (region III side)
    x: float
    z: float
    alpha: float         # end-tangent angle in the x-z plane
    force: np.ndarray    # normalized (Fx, Fy, Fz)


@dataclass
class ManifoldBoundary:
    ls: float
    ks: float
    delta: float
    samples: list = field(default_factory=list)

    def branch(self, name):
        return [s for s in self.samples if s.branch == name]

    def radii_by_theta(self):
        """theta -> (inner radius, outer radius) for rays with both brackets."""
        inner = {s.theta: np.hypot(s.x, s.z) for s in self.branch("inner")}
        outer = {s.theta: np.hypot(s.x, s.z) for s in self.branch("outer")}
        return {
            th: (inner[th], outer[th]) for th in sorted(set(inner) & set(outer))
        }

    def as_rows(self):
        return [
            (s.theta, s.x, s.z, s.alpha, s.force[0], s.force[2], s.branch)
            for s in self.samples
        ]


@dataclass
class LocalMinimum:
    x: float
    z: float
    alpha: float
    force_norm: float
    stability: str = None           # STABLE / SNAP_THROUGH once probed
    snap_metric: float = None       # max |q.y| reached during the probe
    probe_dy: np.ndarray = None
    probe_fy: np.ndarray = None
    probe_qy_max: np.ndarray = None

    @property
    def position(self):
        return np.array([self.x, 0.0, self.z])


def _end_alpha(report):
    t_end = report.state.tangents[-1]
    return float(np.arctan2(t_end[2], t_end[0]))


def _pose(x, z):
    return np.array([x, 0.0, z])


def _eval(solver, r, u):
    report = solver.evaluate(r * u)
    return report, feasible_report(report)


def _bisect_border(solver, u, below, a, b, delta):
    """Shrink [a, b] (below(a) true, below(b) false) to width < delta."""
    while b - a >= delta:
        mid = 0.5 * (a + b)
        rep, _ = _eval(solver, mid, u)
        if below(rep):
            a = mid
        else:
            b = mid
    return a, b


def _penetrates(rep):
    return rep.min_height < 0.0


def _pulls_down(rep):
    return rep.force[2] < 0.0 and rep.min_height >= 0.0


def _expand_bracket(solver, u, predicate, r0, step, r_max):
    """Grow a sign bracket around r0 for ``predicate`` flipping true -> false.

    Returns (a, b) with predicate(a) true, predicate(b) false.
    """
    rep, _ = _eval(solver, r0, u)
    if predicate(rep):
        a = r0
        b = r0
        for _ in range(60):
            b = min(b + step, r_max)
            rep, _ = _eval(solver, b, u)
            if not predicate(rep):
                return a, b
            a = b
            if b >= r_max:
                break
        return None
    b = r0
    a = r0
    r_min = 1e-3 * r_max
    for _ in range(60):
        a = max(a - step, r_min)
        rep, _ = _eval(solver, a, u)
        if predicate(rep):
            return a, b
        b = a
        if a <= r_min:
            break
    return None


def _trace_ray(solver, ls, theta, delta, beta, guess=None):
    """Bracket the region borders along one ray; None when region II is absent.

    Feasibility splits into two scalar sign conditions along the ray: the
    lowest suspended point clears the substrate beyond some radius (inner,
    contact border) and the vertical reaction stays non-negative below some
    radius (outer, taut border). Each border is bisected to within delta.
    A previous ray's radii, when given, seed small sign brackets so the
    search stays local (warm-start friendly).
    """
    u = np.array([np.cos(theta), 0.0, np.sin(theta)])
    r_cap = 3.0 * ls

    if guess is not None:
        step = max(50.0 * delta, 0.03 * ls)
        br_in = _expand_bracket(solver, u, _penetrates, guess[0], step, r_cap)
        if br_in is not None:
            a, b = _bisect_border(solver, u, _penetrates, br_in[0], br_in[1], delta)
            r_inner = b
            rep_inner, ok_inner = _eval(solver, r_inner, u)
            br_out = _expand_bracket(
                solver, u, lambda rep: not _pulls_down(rep), max(guess[1], r_inner),
                step, r_cap,
            )
            if ok_inner and br_out is not None:
                a, b = _bisect_border(
                    solver, u, lambda rep: not _pulls_down(rep), br_out[0], br_out[1], delta
                )
                r_outer = a
                rep_outer, ok_outer = _eval(solver, r_outer, u)
                if ok_outer and r_outer >= r_inner - delta:
                    return (r_inner, rep_inner), (r_outer, rep_outer), u
        # local search failed; fall through to the full sweep

    # grow until safely on the taut side (above substrate, reaction down)
    r_hi = ls
    rep, _ = _eval(solver, r_hi, u)
    for _ in range(40):
        if rep.min_height >= 0.0 and rep.force[2] < 0.0:
            break
        r_hi *= 1.0 + beta
        rep, _ = _eval(solver, r_hi, u)
    else:
        return None

    # shrink until the suspended part touches the substrate
    r_lo = r_hi
    for _ in range(40):
        r_lo *= 0.6
        rep, _ = _eval(solver, r_lo, u)
        if rep.min_height < 0.0:
            break
    else:
        return None

    a, b = _bisect_border(solver, u, _penetrates, r_lo, r_hi, delta)
    r_inner = b
    rep_inner, ok_inner = _eval(solver, r_inner, u)
    if not ok_inner:
        return None  # reaction already negative where contact clears: no band

    a, b = _bisect_border(
        solver, u, lambda rep: not _pulls_down(rep), r_inner, r_hi, delta
    )
    r_outer = a
    rep_outer, ok_outer = _eval(solver, r_outer, u)
    if not ok_outer:
        return None
    return (r_inner, rep_inner), (r_outer, rep_outer), u


def trace_boundary(
    ls,
    ks,
    delta=1e-3,
    dtheta=np.pi / 180.0,
    beta=0.05,
    solver=None,
):
    """Bracket both feasibility borders along rays from the connective node.

    For each ray angle the outer border (reaction turning downward, taut rod)
    and the inner border (suspended part touching the substrate) are located
    by bisection to within ``delta``; the feasible-side pose of each bracket
    is appended. Rays without a feasible interval are skipped with a warning.
    """
    if solver is None:
        solver = NormalizedReactionSolver(ls, 0.0, ks)
    boundary = ManifoldBoundary(ls=ls, ks=ks, delta=delta)

    thetas = np.arange(dtheta, np.pi + 1e-12, dtheta)
    guess = None
    for theta in thetas:
        try:
            traced = _trace_ray(solver, ls, theta, delta, beta, guess=guess)
        except SolverFailureError as exc:
            log.warning("theta=%.4f: ray skipped (solver failure: %s)", theta, exc)
            solver.reset()
            guess = None
            continue
        if traced is None:
            log.warning("theta=%.4f: ray skipped (no feasible interval)", theta)
            guess = None
            continue
        guess = (traced[0][0], traced[1][0])
        (r_inner, rep_inner), (r_outer, rep_outer), u = traced
        for branch, r, rep in (("inner", r_inner, rep_inner), ("outer", r_outer, rep_outer)):
            boundary.samples.append(
                BoundarySample(
                    theta=float(theta),
                    branch=branch,
                    x=r * u[0],
                    z=r * u[2],
                    alpha=_end_alpha(rep),
                    force=rep.force.copy(),
                )
            )
    return boundary


def _refine_root_planar(solver, pose, tol=1e-6, fd_delta=1e-5, max_iter=15):
    """2D Newton on (Fx, Fz) = 0 inside the plane; returns pose, report."""
    pose = np.asarray(pose, dtype=float).copy()
    report = solver.evaluate(pose)
    for _ in range(max_iter):
        f = report.force[[0, 2]]
        if np.linalg.norm(f) < tol:
            break
        J = np.empty((2, 2))
        for k, axis in enumerate((0, 2)):
            dp = pose.copy()
            dp[axis] += fd_delta
            J[:, k] = (solver.evaluate(dp).force[[0, 2]] - f) / fd_delta
        try:
            step = np.linalg.solve(J, f)
        except np.linalg.LinAlgError:
            break
        alpha = 1.0
        base = np.linalg.norm(f)
        moved = False
        for _ in range(12):
            trial = pose.copy()
            trial[0] -= alpha * step[0]
            trial[2] -= alpha * step[1]
            rep_t = solver.evaluate(trial)
            if np.linalg.norm(rep_t.force[[0, 2]]) < base:
                pose, report, moved = trial, rep_t, True
                break
            alpha *= 0.5
        if not moved:
            break
    return pose, report


def find_local_minima(
    ls,
    ks,
    boundary=None,
    radial_samples=12,
    solver=None,
    refine_tol=1e-6,
    dedupe_tol=1e-3,
):
    """Local minima of |F| over the feasible region interior.

    Samples the region on a polar grid (the traced rays, subdivided radially
    between the two borders), takes grid-local minima against their
    neighbours, then sharpens each candidate by a planar Newton root-find and
    merges candidates that converge to the same pose.
    """
    if solver is None:
        solver = NormalizedReactionSolver(ls, 0.0, ks)
    if boundary is None:
        boundary = trace_boundary(ls, ks, solver=solver)
    radii = boundary.radii_by_theta()
    if not radii:
        return []
    th_arr = np.array(sorted(radii))
    r_in = np.array([radii[t][0] for t in th_arr])
    r_out = np.array([radii[t][1] for t in th_arr])

    n_th = len(th_arr)
    value = np.full((n_th, radial_samples), np.inf)
    # sweep radially within each ray; alternate direction for warm locality
    fractions = np.linspace(0.02, 0.98, radial_samples)
    for i, th in enumerate(th_arr):
        u = np.array([np.cos(th), 0.0, np.sin(th)])
        rs = r_in[i] + fractions * (r_out[i] - r_in[i])
        order = range(radial_samples) if i % 2 == 0 else range(radial_samples - 1, -1, -1)
        for j in order:
            try:
                report = solver.evaluate(rs[j] * u)
            except SolverFailureError:
                solver.reset()
                continue
            if feasible_report(report):
                value[i, j] = np.linalg.norm(report.force)

    candidates = []
    for i in range(n_th):
        for j in range(radial_samples):
            v = value[i, j]
            if not np.isfinite(v):
                continue
            neigh = value[max(0, i - 1) : i + 2, max(0, j - 1) : j + 2]
            if v <= neigh.min():
                r = r_in[i] + fractions[j] * (r_out[i] - r_in[i])
                candidates.append((v, r * np.cos(th_arr[i]), r * np.sin(th_arr[i])))
    candidates.sort()

    out = []
    for v, x, z in candidates:
        pose, report = _refine_root_planar(solver, _pose(x, z), tol=refine_tol)
        fnorm = float(np.linalg.norm(report.force))
        if any(np.hypot(pose[0] - m.x, pose[2] - m.z) < dedupe_tol * max(1.0, ls)
               for m in out):
            continue
        out.append(
            LocalMinimum(
                x=float(pose[0]),
                z=float(pose[2]),
                alpha=_end_alpha(report),
                force_norm=fnorm,
            )
        )
    out.sort(key=lambda m: m.force_norm)
    return out


def probe_stability(ls, ks, minimum, dy=0.12, n_steps=30, jump_ratio=10.0, solver=None):
    """Sweep the manipulated end along +y and classify the response.

    A discontinuous jump in the maximum out-of-plane deflection (or a solver
    breakdown mid-sweep) labels the minimum snap-through; an everywhere-
    gradual response labels it stable. Returns the minimum with the response
    curves attached.
    """
    if dy < 0:
        raise ValueError("probe displacement must be non-negative")
    if solver is None:
        solver = NormalizedReactionSolver(ls, 0.0, ks)
    base = minimum.position if isinstance(minimum, LocalMinimum) else np.asarray(minimum, dtype=float)
    result = (
        minimum
        if isinstance(minimum, LocalMinimum)
        else LocalMinimum(x=base[0], z=base[2], alpha=np.nan, force_norm=np.nan)
    )

    dys = np.linspace(0.0, dy, n_steps + 1)
    fy = np.zeros_like(dys)
    qy = np.zeros_like(dys)
    failed_at = None
    solver.evaluate(base)  # anchor the planar branch
    for k, d in enumerate(dys):
        pose = base + np.array([0.0, d, 0.0])
        try:
            rep = solver.evaluate(pose)
        except SolverFailureError:
            failed_at = k
            break
        fy[k] = rep.force[1]
        qy[k] = float(np.abs(rep.state.nodes[:, 1]).max())

    if failed_at is not None:
        fy, qy, dys = fy[:failed_at], qy[:failed_at], dys[:failed_at]
        label = SNAP_THROUGH
    else:
        steps = np.abs(np.diff(qy))
        if len(steps) >= 3 and steps.max() > 0:
            med = np.median(steps)
            floor = 0.02 * max(qy.max(), dy)
            jumped = steps.max() > jump_ratio * max(med, 1e-15) and steps.max() > floor
        else:
            jumped = False
        label = SNAP_THROUGH if jumped else STABLE

    result.stability = label
    result.snap_metric = float(qy.max()) if len(qy) else np.inf
    result.probe_dy = dys
    result.probe_fy = fy
    result.probe_qy_max = qy
    return result


_SEED_CACHE = {}


def stable_optimum(ls, ks, dy=0.12, use_cache=True):
    """The stable planar force minimum for straight-line deployment.

    Seeds the 3D grasp optimizer. Falls back to the smallest-force minimum if
    every candidate shows a jump response.
    """
    key = (round(float(ls), 9), round(float(ks), 9))
    if use_cache and key in _SEED_CACHE:
        return _SEED_CACHE[key]
    minima = find_local_minima(ls, ks)
    if not minima:
        raise SolverFailureError(f"no feasible force minima for ls={ls}, ks={ks}")
    probed = [probe_stability(ls, ks, m, dy=dy) for m in minima]
    stable = [m for m in probed if m.stability == STABLE]
    choice = stable[0] if stable else probed[0]
    if use_cache:
        _SEED_CACHE[key] = choice
    return choice
