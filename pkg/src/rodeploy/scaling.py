"""Non-dimensionalization of the deployment problem.

Three dimensionless groups fully determine the optimal grasp: the normalized
suspended length, the normalized pattern curvature and the normalized
stretching stiffness. All lengths scale with the gravito-bending length

    L_gb = (k_b / (2 pi h^2 rho g))^(1/3),

forces with k_b/h^2 and moments with k_b/h.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidFrameError
from .geometry import check_rotation
from .rod import RodParams

LOOP_HEIGHT_RATIO = 0.9066  # loop apex height / L_gb

DEFAULT_DENSITY = 1200.0  # kg/m^3, VPS-like; only the E/rho ratio is observable


@dataclass(frozen=True)
class NondimInput:
    ls: float      # suspended length / L_gb
    kappa: float   # curvature * L_gb
    ks: float      # k_s L_gb^2 / k_b

    def __post_init__(self):
        if not self.ls > 0:
            raise ValueError("normalized suspended length must be positive")
        if not self.ks > 0:
            raise ValueError("normalized stretching stiffness must be positive")

    def as_array(self):
        return np.array([self.ls, self.kappa, self.ks])


@dataclass(frozen=True)
class NondimScales:
    length: float   # L_gb [m]
    force: float    # k_b / h^2 [N]
    moment: float   # k_b / h [N m]


def gravito_bending_length(params):
    return (
        params.bend_stiffness
        / (2.0 * np.pi * params.radius**2 * params.density * params.gravity)
    ) ** (1.0 / 3.0)


def scales_for(params):
    L_gb = gravito_bending_length(params)
    kb = params.bend_stiffness
    return NondimScales(length=L_gb, force=kb / params.radius**2, moment=kb / params.radius)


def nondimensionalize(params, l_s, kappa):
    """Dimensional suspended-segment description -> (NondimInput, NondimScales)."""
    scales = scales_for(params)
    L_gb = scales.length
    ks_bar = params.stretch_stiffness * L_gb**2 / params.bend_stiffness
    return NondimInput(ls=l_s / L_gb, kappa=kappa * L_gb, ks=ks_bar), scales


def denormalize_pose(position, rotation, scales, q_C, R_t):
    """Normalized grasp (position, rotation matrix) -> world pose.

    R_t is the pattern-local frame (tangent, z x tangent, z) at the contact.
    """
    R_t = np.asarray(R_t, dtype=float)
    check_rotation(R_t)
    q_C = np.asarray(q_C, dtype=float)
    q_world = q_C + R_t @ (np.asarray(position, dtype=float) * scales.length)
    return q_world, R_t @ np.asarray(rotation, dtype=float)


def estimate_Lgb_from_loop(h_f):
    """Gravito-bending length from a measured 2D loop apex height."""
    if not h_f > 0:
        raise ValueError("loop height must be positive")
    return h_f / LOOP_HEIGHT_RATIO


def params_from_measurables(total_length, radius, L_gb, poisson_ratio=0.5,
                            density=DEFAULT_DENSITY, gravity=9.81):
    """Rod parameters from observable geometry.

    Only E/rho is fixed by L_gb (via L_gb^3 = E h^2 / (8 rho g)); the absolute
    split is immaterial for the non-dimensional pipeline, so a default density
    is assumed and E backed out.
    """
    if not (total_length > 0 and radius > 0 and L_gb > 0):
        raise ValueError("lengths must be positive")
    E = 8.0 * density * gravity * L_gb**3 / radius**2
    return RodParams(
        total_length=total_length,
        radius=radius,
        density=density,
        youngs_modulus=E,
        poisson_ratio=poisson_ratio,
        gravity=gravity,
    )


def normalized_params(ks_bar, ls=1.0, poisson_ratio=0.5):
    """A rod whose own units make L_gb = 1 and k_b = 1.

    Solving the suspended-segment problem on this rod *is* the pi-reduced
    problem: results depend only on (ls, kappa, ks_bar). Weight per unit
    length comes out as exactly 1/2.
    """
    if not ks_bar > 0:
        raise ValueError("normalized stretching stiffness must be positive")
    h = 2.0 / np.sqrt(ks_bar)          # since ks_bar = 4 L_gb^2 / h^2
    E = ks_bar / (np.pi * h**2)        # makes k_b = E pi h^4 / 4 = 1
    rho = ks_bar / (8.0 * np.pi)       # makes rho * A * g = 1/2 with g = 1
    return RodParams(
        total_length=ls,
        radius=h,
        density=rho,
        youngs_modulus=E,
        poisson_ratio=poisson_ratio,
        gravity=1.0,
    )
