"""Tangent and adjoint sweeps for the control-to-state map.

The tangent integrates the exact Jacobian of :func:`chb.forward.step`
with ``psi^0 = 0``.  The discrete adjoint applies the transposes of the
same per-step Jacobians backwards in time (Euclidean transposes, then
rescaled so that ``eta`` and ``v`` are densities comparable with the
continuous adjoint).  The continuous adjoint is an independent
discretization of the backward PDE system and only agrees with the
discrete one in the limit ``dt, h -> 0``.

Reduced gradients are represented in the weighted inner product
``<a, b> = sum_n dt hx hy (a^n . b^n)`` of :func:`chb.objective.control_inner`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import mac
from .domain import TrackingData, VelocityField, potential_eval
from .errors import TrajectoryMismatch
from .forward import Model, Trajectory, simulate
from .nonlocal_ops import convolve, grad_kernel_convolve
from .objective import control_inner, cost

DISCRETE = "discrete_adjoint"
CONTINUOUS = "continuous_adjoint"


def _check_traj(model: Model, traj: Trajectory):
    if traj.n_steps != model.n_steps:
        raise TrajectoryMismatch(
            f"trajectory has {traj.n_steps} steps, model expects {model.n_steps}")
    if traj.phi.shape[1:] != model.grid.shape:
        raise TrajectoryMismatch(f"trajectory grid {traj.phi.shape[1:]} != {model.grid.shape}")


def _check_control(model: Model, U: VelocityField, name="control"):
    U.check(model.grid, name)
    if len(U) != model.n_steps:
        raise TrajectoryMismatch(f"{name} has {len(U)} samples, expected {model.n_steps}")
    return U


# ---------------------------------------------------------------------------
# tangent


class TangentStep(NamedTuple):
    mu: np.ndarray
    w: VelocityField
    pi: np.ndarray
    psi_next: np.ndarray


def _mu_jacobian(model: Model, phi, dphi):
    """``(a - J* + F''(phi)) dphi``; symmetric in the Euclidean product."""
    return model.a * dphi - convolve(model.plan, dphi) + potential_eval(model.pot, 2, phi) * dphi


def step_tangent(model: Model, traj: Trajectory, n: int, psi, dh: VelocityField) -> TangentStep:
    """Jacobian of forward step ``n`` applied to ``(psi, dh)``."""
    grid, dt = model.grid, model.dt
    phi, mu, u = traj.phi[n], traj.mu[n], traj.u[n]
    mu_t = _mu_jacobian(model, phi, psi)
    f = (mac.face_average(mu_t, grid) * mac.grad(phi, grid)
         + mac.face_average(mu, grid) * mac.grad(psi, grid) + dh)
    sol = model.brinkman_linear(f)
    flux = sol.u * mac.face_average(phi, grid) + u * mac.face_average(psi, grid)
    rhs = psi - dt * mac.div(flux, grid) + dt * mac.laplacian_neumann(mu_t - model.K * psi, grid)
    return TangentStep(mu_t, sol.u, sol.pi, model.helmholtz(rhs))


@dataclass
class TangentTrajectory:
    """``psi^0..psi^N``, ``mu_tilde^0..mu_tilde^N`` and ``w^0..w^{N-1}``."""

    psi: np.ndarray
    mu: np.ndarray
    w: VelocityField
    pi: np.ndarray


def solve_tangent(model: Model, traj: Trajectory, D: VelocityField) -> TangentTrajectory:
    """Directional derivative of the control-to-state map along ``D`` (``psi^0 = 0``)."""
    _check_traj(model, traj)
    _check_control(model, D, "direction")
    grid, N = model.grid, model.n_steps
    psi = np.zeros((N + 1,) + grid.shape)
    mu = np.zeros_like(psi)
    w = VelocityField.zeros(grid, N)
    pi = np.zeros((N,) + grid.shape)
    for n in range(N):
        st = step_tangent(model, traj, n, psi[n], D[n])
        mu[n], w[n], pi[n], psi[n + 1] = st.mu, st.w, st.pi, st.psi_next
    mu[N] = _mu_jacobian(model, traj.phi[N], psi[N])
    return TangentTrajectory(psi, mu, w, pi)


def cost_derivative(model: Model, traj: Trajectory, tan: TangentTrajectory, U: VelocityField,
                    D: VelocityField, data: TrackingData, weights) -> float:
    """``dJ(U)[D]`` assembled from the tangent trajectory."""
    grid, dt, N = model.grid, model.dt, model.n_steps
    w = grid.cell_area
    dphi = traj.phi[:N] - data.phi_d
    du = traj.u - data.u_d
    val = 2 * weights.beta_phi * dt * w * float(np.vdot(dphi, tan.psi[:N]))
    val += 2 * weights.beta_u * dt * w * du.dot(tan.w)
    val += 2 * weights.beta_T * w * float(np.vdot(traj.phi[N] - data.phi_Omega, tan.psi[N]))
    val += 2 * weights.beta_U * control_inner(U, D, grid, dt)
    return val


# ---------------------------------------------------------------------------
# discrete adjoint


class AdjointStep(NamedTuple):
    lam_phi: np.ndarray     # Euclidean adjoint of phi^n (without the cost source)
    lam_f: VelocityField    # Euclidean adjoint of the Brinkman right side (= of h^n)
    q: np.ndarray


def step_adjoint(model: Model, traj: Trajectory, n: int, lam_next,
                 lam_u: VelocityField | None = None) -> AdjointStep:
    """Transpose of :func:`step_tangent`.

    Given the adjoint ``lam_next`` of ``phi^{n+1}`` and an optional adjoint
    seed ``lam_u`` of ``u^n``, return the adjoints of ``phi^n`` and ``h^n``,
    so that ``<lam_next, psi'> + <lam_u, w> = <lam_phi, psi> + <lam_f, dh>``.
    """
    grid, dt = model.grid, model.dt
    phi, mu, u = traj.phi[n], traj.mu[n], traj.u[n]
    r = model.helmholtz(lam_next)
    Gr = mac.grad(r, grid)
    lam_phi = r - dt * model.K * mac.laplacian_neumann(r, grid)
    lam_phi += dt * mac.face_average_T(u * Gr, grid)
    lam_mu = dt * mac.laplacian_neumann(r, grid)
    a_u = dt * mac.face_average(phi, grid) * Gr
    if lam_u is not None:
        a_u = a_u + lam_u
    sol = model.brinkman_linear(a_u)
    lam_f = sol.u
    lam_mu += mac.face_average_T(lam_f * mac.grad(phi, grid), grid)
    lam_phi -= mac.div(lam_f * mac.face_average(mu, grid), grid)
    lam_phi += _mu_jacobian(model, phi, lam_mu)
    return AdjointStep(lam_phi, lam_f, sol.pi)


@dataclass
class AdjointTrajectory:
    """Adjoint densities: ``eta^0..eta^N`` on cells, ``v^0..v^{N-1}`` and ``q`` per step."""

    eta: np.ndarray
    v: VelocityField
    q: np.ndarray
    provenance: str


@dataclass
class ReducedGradient:
    g: VelocityField
    provenance: str

    def norm(self, grid, dt) -> float:
        return float(np.sqrt(control_inner(self.g, self.g, grid, dt)))


def _sources(model, traj, data, weights):
    N = model.n_steps
    dphi = 2 * weights.beta_phi * (traj.phi[:N] - data.phi_d)
    du = 2 * weights.beta_u * (traj.u - data.u_d)
    dT = 2 * weights.beta_T * (traj.phi[N] - data.phi_Omega)
    return dphi, du, dT


def solve_adjoint_discrete(model: Model, traj: Trajectory, U: VelocityField,
                           data: TrackingData, weights):
    """Backward sweep through the transposed forward steps.

    Returns ``(AdjointTrajectory, ReducedGradient)`` with
    ``g^n = v^n + 2 beta_U U^n`` and ``v^n`` the adjoint of the control
    divided by ``dt hx hy``.
    """
    _check_traj(model, traj)
    _check_control(model, U)
    data.check(model.grid, model.n_steps)
    grid, dt, N = model.grid, model.dt, model.n_steps
    w = grid.cell_area
    s_phi, s_u, s_T = _sources(model, traj, data, weights)

    eta = np.zeros((N + 1,) + grid.shape)
    v = VelocityField.zeros(grid, N)
    q = np.zeros((N,) + grid.shape)
    lam = w * s_T
    eta[N] = s_T
    for n in range(N - 1, -1, -1):
        st = step_adjoint(model, traj, n, lam, (dt * w) * s_u[n])
        lam = st.lam_phi + (dt * w) * s_phi[n]
        eta[n] = lam / w
        v[n] = st.lam_f / (dt * w)
        q[n] = st.q / (dt * w)
    g = v + (2 * weights.beta_U) * U
    return AdjointTrajectory(eta, v, q, DISCRETE), ReducedGradient(g, DISCRETE)


# ---------------------------------------------------------------------------
# continuous adjoint


def _centered_grad(q, grid):
    """Cell-centered ``grad q`` with reflected (Neumann) ghost cells."""
    p = np.pad(q, 1, mode="edge")
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) / (2 * grid.hx)
    gy = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2 * grid.hy)
    return gx, gy


def solve_adjoint_continuous(model: Model, traj: Trajectory, U: VelocityField,
                             data: TrackingData, weights):
    """Backward integration of the continuous adjoint system.

    ``-eta_t + (v.grad a) phi + J*(v.grad phi) - (grad J*phi).v - u.grad eta
    - (a + F''(phi)) lap eta + (grad J)*(grad eta) = 2 b_phi (phi - phi_d)``

    ``-nu lap v + v + eta grad phi + grad q = 2 b_u (u - u_d)``, ``div v = 0``

    with ``eta(T) = 2 b_T (phi(T) - phi_Omega)``.  Time stepping mirrors the
    forward scheme: one stabilized implicit Helmholtz solve per step with
    everything else explicit in ``eta^{n+1}``.
    """
    _check_traj(model, traj)
    _check_control(model, U)
    data.check(model.grid, model.n_steps)
    grid, dt, N, plan = model.grid, model.dt, model.n_steps, model.plan
    s_phi, s_u, s_T = _sources(model, traj, data, weights)
    ax, ay = grad_kernel_convolve(plan, np.ones(grid.shape))

    eta = np.zeros((N + 1,) + grid.shape)
    v = VelocityField.zeros(grid, N)
    q = np.zeros((N,) + grid.shape)
    eta[N] = s_T
    for n in range(N - 1, -1, -1):
        phi, e = traj.phi[n], eta[n + 1]
        force = s_u[n] - mac.face_average(e, grid) * mac.grad(phi, grid)
        sol = model.brinkman_linear(force)
        v[n], q[n] = sol.u, sol.pi

        vx, vy = mac.cell_average(sol.u)
        ux, uy = mac.cell_average(traj.u[n])
        px, py = _centered_grad(phi, grid)
        ex, ey = _centered_grad(e, grid)
        Jx_phi, Jy_phi = grad_kernel_convolve(plan, phi)
        Jx_ex = grad_kernel_convolve(plan, ex)[0]
        Jy_ey = grad_kernel_convolve(plan, ey)[1]
        lap_e = mac.laplacian_neumann(e, grid)
        R = (-(vx * ax + vy * ay) * phi
             - convolve(plan, vx * px + vy * py)
             + (Jx_phi * vx + Jy_phi * vy)
             + (ux * ex + uy * ey)
             + (model.a + potential_eval(model.pot, 2, phi)) * lap_e
             - (Jx_ex + Jy_ey))
        rhs = e + dt * (R - model.K * lap_e + s_phi[n])
        eta[n] = model.helmholtz(rhs)
    g = v + (2 * weights.beta_U) * U
    return AdjointTrajectory(eta, v, q, CONTINUOUS), ReducedGradient(g, CONTINUOUS)


# ---------------------------------------------------------------------------
# reduced cost and finite-difference check


def reduced_cost(model: Model, phi0, U: VelocityField, data: TrackingData, weights):
    traj, _ = simulate(model, phi0, U)
    return cost(traj, U, data, weights), traj


def reduced_gradient(model: Model, phi0, U, data, weights, traj=None):
    if traj is None:
        traj, _ = simulate(model, phi0, U)
    _, grad = solve_adjoint_discrete(model, traj, U, data, weights)
    return grad


@dataclass
class GradCheckRow:
    eps: float
    fd_value: float
    adjoint_value: float
    rel_error: float


GRADCHECK_COLUMNS = ("eps", "fd_value", "adjoint_value", "rel_error")


def fd_gradient_check(model: Model, phi0, U: VelocityField, D: VelocityField,
                      data: TrackingData, weights, eps=(1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6),
                      grad: ReducedGradient | None = None):
    """Central differences of the reduced cost against ``<g, D>``.

    Returns one :class:`GradCheckRow` per ``eps``.
    """
    _check_control(model, D, "direction")
    if not np.any(D.x) and not np.any(D.y):
        raise ValueError("direction must be nonzero")
    if grad is None:
        grad = reduced_gradient(model, phi0, U, data, weights)
    ref = control_inner(grad.g, D, model.grid, model.dt)
    rows = []
    for e in eps:
        jp, _ = reduced_cost(model, phi0, U + e * D, data, weights)
        jm, _ = reduced_cost(model, phi0, U - e * D, data, weights)
        fd = (jp - jm) / (2 * e)
        scale = max(abs(ref), abs(fd))
        rel = abs(fd - ref) / scale if scale > 0 else 0.0
        rows.append(GradCheckRow(float(e), fd, ref, rel))
    return rows


def write_gradcheck_csv(rows, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(GRADCHECK_COLUMNS)
        for r in rows:
            wr.writerow([repr(r.eps), repr(r.fd_value), repr(r.adjoint_value), repr(r.rel_error)])
