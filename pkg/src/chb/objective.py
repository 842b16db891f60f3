"""Tracking cost and the weighted inner product on control trajectories.

The cost samples the state at the left end of every step, matching the
explicit use of ``phi^n`` and ``u^n`` in the forward scheme::

    J = dt sum_n [b_phi |phi^n - phi_d^n|^2 + b_u |u^n - u_d^n|^2 + b_U |U^n|^2]
        + b_T |phi^N - phi_Omega|^2

Spatial norms are midpoint sums weighted by the cell area, also on faces.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .domain import CostWeights, GridSpec, TrackingData, VelocityField
from .errors import GridMismatch


class CostTerms(NamedTuple):
    phi: float
    u: float
    terminal: float
    control: float
    total: float


def control_inner(a: VelocityField, b: VelocityField, grid: GridSpec, dt: float) -> float:
    """``sum_n dt sum_faces hx hy a.b`` over a control trajectory."""
    return dt * grid.cell_area * a.dot(b)


def control_norm(a: VelocityField, grid: GridSpec, dt: float) -> float:
    return float(np.sqrt(control_inner(a, a, grid, dt)))


def cost_terms(traj, U: VelocityField, data: TrackingData, weights: CostWeights) -> CostTerms:
    grid_shape = traj.phi.shape[1:]
    N, dt = traj.n_steps, traj.dt
    if data.phi_d.shape[0] != N or data.u_d.x.shape[0] != N or len(U) != N:
        raise GridMismatch(f"targets/control do not carry {N} samples")
    if data.phi_d.shape[1:] != grid_shape or data.phi_Omega.shape != grid_shape:
        raise GridMismatch("targets do not match the trajectory grid")
    if U.x.shape != traj.u.x.shape or U.y.shape != traj.u.y.shape:
        raise GridMismatch("control does not match the trajectory faces")
    if traj.grid is None:
        raise ValueError("trajectory carries no grid information")
    w = traj.grid.cell_area
    dphi = traj.phi[:N] - data.phi_d
    du = traj.u - data.u_d
    t_phi = weights.beta_phi * dt * w * float(np.vdot(dphi, dphi))
    t_u = weights.beta_u * dt * w * du.dot(du)
    d_T = traj.phi[N] - data.phi_Omega
    t_T = weights.beta_T * w * float(np.vdot(d_T, d_T))
    t_U = weights.beta_U * dt * w * U.dot(U)
    return CostTerms(t_phi, t_u, t_T, t_U, t_phi + t_u + t_T + t_U)


def cost(traj, U: VelocityField, data: TrackingData, weights: CostWeights) -> float:
    """Weighted tracking cost of a forward run driven by ``U``."""
    return cost_terms(traj, U, data, weights).total

