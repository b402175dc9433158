"""3D optimal grasp: Newton root-finding on the connective reaction force.

The manipulated-end position is the only search variable; the end orientation
follows from the moment-free end condition and is read off the converged
state. The Jacobian of the reaction force is assembled from forward
differences of three perturbed boundary-value solves; a backtracking line
search enforces strict descent of the force norm.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    JacobianError,
    LineSearchError,
    SolverFailureError,
    StalledError,
)
from .geometry import mirror_pose_xz
from .stability import stable_optimum
from .suspended import NormalizedReactionSolver

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6      # |F| in k_b/h^2 units
FD_STEP = 1e-5           # normalized length
MAX_ITER = 100
MIN_ALPHA = 1e-6


@dataclass(frozen=True)
class GraspPose:
    """Normalized manipulated-end pose: position + axis-angle rotation."""

    position: np.ndarray
    rotation_vec: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(
            self, "rotation_vec", np.asarray(self.rotation_vec, dtype=float)
        )

    def mirrored(self):
        p, e = mirror_pose_xz(self.position, self.rotation_vec)
        return GraspPose(p, e)

    def as_row(self):
        return np.concatenate([self.position, self.rotation_vec])


@dataclass
class SolveTrace:
    seed: np.ndarray
    residuals: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    converged: bool = False
    message: str = ""

    @property
    def iterations(self):
        return len(self.alphas)

    @property
    def final_residual(self):
        return self.residuals[-1] if self.residuals else np.inf


def fd_jacobian(evaluator, position, f0, delta=FD_STEP):
    """Forward-difference 3x3 Jacobian of the reaction force.

    One failed perturbed solve triggers a single retry with a smaller step,
    then gives up (JacobianError).
    """
    for step in (delta, 0.2 * delta):
        J = np.empty((3, 3))
        try:
            for k in range(3):
                p = np.asarray(position, dtype=float).copy()
                p[k] += step
                J[:, k] = (evaluator(p) - f0) / step
            return J
        except SolverFailureError as exc:
            last = exc
            continue
    raise JacobianError("finite-difference Jacobian failed") from last


def line_search(evaluator, position, step_dir, f0, alpha0=1.0, m=0.5, max_backtracks=20):
    """Largest alpha in {alpha0 * m^k} strictly decreasing |F|.

    Returns (alpha, new_position, new_force). Solver failures along the way
    count as non-decrease.
    """
    alpha = alpha0
    for _ in range(max_backtracks):
        trial = position - alpha * step_dir
        try:
            f = evaluator(trial)
        except SolverFailureError:
            alpha *= m
            continue
        if np.linalg.norm(f) < np.linalg.norm(f0):
            return alpha, trial, f
        alpha *= m
    raise LineSearchError("no decreasing step found")


def default_seed(ls, ks):
    """Stable planar optimum for straight-line deployment (cached)."""
    opt = stable_optimum(ls, ks)
    return opt.position


def optimal_grasp(
    ls,
    kappa,
    ks,
    seed=None,
    solver=None,
    tol=RESIDUAL_TOL,
    fd_step=FD_STEP,
    max_iter=MAX_ITER,
    poisson_ratio=0.5,
):
    """Manipulated-end pose zeroing the connective reaction force.

    Negative curvature is handled by mirror symmetry about the x-z plane.
    Returns (GraspPose, SolveTrace).
    """
    if kappa < 0:
        mseed = None if seed is None else np.asarray(seed, dtype=float) * [1, -1, 1]
        pose, trace = optimal_grasp(
            ls, -kappa, ks, seed=mseed, solver=solver, tol=tol,
            fd_step=fd_step, max_iter=max_iter, poisson_ratio=poisson_ratio,
        )
        return pose.mirrored(), trace

    if solver is None:
        solver = NormalizedReactionSolver(ls, kappa, ks, poisson_ratio=poisson_ratio)
    elif solver.kappa != kappa:
        solver.set_curvature(kappa)

    position = np.asarray(default_seed(ls, ks) if seed is None else seed, dtype=float).copy()

    last_report = None

    def evaluate(p):
        nonlocal last_report
        rep = solver.evaluate(p)
        last_report = rep
        return rep.force

    trace = SolveTrace(seed=position.copy())
    f = evaluate(position)
    trace.residuals.append(float(np.linalg.norm(f)))

    for _ in range(max_iter):
        if np.linalg.norm(f) < tol:
            trace.converged = True
            break
        J = fd_jacobian(evaluate, position, f, delta=fd_step)
        try:
            step_dir = np.linalg.solve(J, f)
        except np.linalg.LinAlgError as exc:
            raise JacobianError("singular reaction-force Jacobian") from exc
        try:
            alpha, position, f = line_search(evaluate, position, step_dir, f)
        except LineSearchError as exc:
            trace.message = "line search exhausted"
            raise StalledError(
                f"optimal grasp stalled at |F|={np.linalg.norm(f):.3e}"
            ) from exc
        if alpha < MIN_ALPHA:
            trace.message = "step size underflow"
            raise StalledError(
                f"optimal grasp stalled (alpha={alpha:.2e})"
            )
        trace.alphas.append(alpha)
        trace.residuals.append(float(np.linalg.norm(f)))
    else:
        raise SolverFailureError(
            f"optimal grasp: iteration cap {max_iter} exceeded "
            f"(|F|={np.linalg.norm(f):.3e})",
            residual=float(np.linalg.norm(f)),
        )

    # re-anchor the solver on the solution so the stored report matches
    f = evaluate(position)
    pose = GraspPose(position=position, rotation_vec=last_report.end_rotation_vector)
    return pose, trace


@dataclass
class DatasetRow:
    ls: float
    kappa: float
    ks: float
    pose: GraspPose
    residual: float


@dataclass
class GraspDataset:
    rows: list
    metadata: dict

    def as_array(self):
        out = np.empty((len(self.rows), 10))
        for i, r in enumerate(self.rows):
            out[i, 0:3] = (r.ls, r.kappa, r.ks)
            out[i, 3:9] = r.pose.as_row()
            out[i, 9] = r.residual
        return out

    @property
    def inputs(self):
        return self.as_array()[:, 0:3]

    @property
    def outputs(self):
        return self.as_array()[:, 3:9]


DATASET_HEADER = "ls,kappa,ks,qx,qy,qz,e1,e2,e3,residual"


def save_dataset(dataset, path):
    arr = dataset.as_array()
    meta = dict(dataset.metadata)
    lines = [f"# {k}={meta[k]}" for k in sorted(meta)]
    header = "\n".join(lines + [DATASET_HEADER])
    np.savetxt(path, arr, delimiter=",", header=header, comments="", fmt="%.17g")


def load_dataset(path):
    meta = {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v
            else:
                break
    arr = np.loadtxt(path, delimiter=",", skiprows=len(meta) + 1)
    arr = np.atleast_2d(arr)
    rows = [
        DatasetRow(
            ls=r[0], kappa=r[1], ks=r[2],
            pose=GraspPose(r[3:6], r[6:9]), residual=r[9],
        )
        for r in arr
    ]
    return GraspDataset(rows=rows, metadata=meta)


def generate_dataset(
    ls_values,
    kappa_values,
    ks_values,
    tol=RESIDUAL_TOL,
    max_contiguous_failures=5,
    progress=None,
):
    """Optimal grasps over a (ls, kappa, ks) grid with continuation seeding.

    Within each stiffness slice, suspended lengths ascend and curvatures
    ascend within each length; every solve is seeded by its predecessor.
    Failed solves are excluded; more than ``max_contiguous_failures`` in a
    row marks the region unsolvable in the metadata.
    """
    ls_values = sorted(float(v) for v in ls_values)
    kappa_values = sorted(float(v) for v in kappa_values)
    ks_values = sorted(float(v) for v in ks_values)
    rows = []
    failures = []
    unsolvable = []

    for ks in ks_values:
        seed_for_ls = None
        for ls in ls_values:
            solver = NormalizedReactionSolver(ls, kappa_values[0], ks)
            seed = seed_for_ls
            contiguous = 0
            row_seed_saved = None
            for kappa in kappa_values:
                solver.set_curvature(kappa)
                try:
                    pose, trace = optimal_grasp(
                        ls, kappa, ks, seed=seed, solver=solver, tol=tol
                    )
                except (SolverFailureError, StalledError, JacobianError) as exc:
                    failures.append((ls, kappa, ks, str(exc)))
                    contiguous += 1
                    if contiguous > max_contiguous_failures:
                        unsolvable.append((ls, kappa, ks))
                        break
                    continue
                contiguous = 0
                rows.append(
                    DatasetRow(ls=ls, kappa=kappa, ks=ks, pose=pose,
                               residual=trace.final_residual)
                )
                seed = pose.position.copy()
                if row_seed_saved is None:
                    row_seed_saved = pose.position.copy()
                if progress is not None:
                    progress(ls, kappa, ks)
            seed_for_ls = row_seed_saved
    meta = {
        "rows": len(rows),
        "failures": len(failures),
        "unsolvable_from": repr(unsolvable) if unsolvable else "",
        "ls_grid": f"{ls_values[0]}:{ls_values[-1]}:{len(ls_values)}",
        "kappa_grid": f"{kappa_values[0]}:{kappa_values[-1]}:{len(kappa_values)}",
        "ks_grid": ",".join(f"{v:g}" for v in ks_values),
    }
    return GraspDataset(rows=rows, metadata=meta)
