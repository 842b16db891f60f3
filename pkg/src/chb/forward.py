"""Time integration of the nonlocal Cahn-Hilliard-Brinkman system.

One step from ``phi^n`` with control sample ``h^n``:

1. ``mu^n = a phi^n - J*phi^n + F'(phi^n)``
2. ``u^n`` solves Brinkman with force ``mu^n grad phi^n + h^n``
3. ``(I - dt K lap) phi^{n+1} = phi^n - dt div(u^n phi_face^n) + dt lap(mu^n - K phi^n)``

with ``K = mean(a) + S`` and ``S = max|F''| / 2`` on ``[-M_phi, M_phi]``.
The implicit part is a constant-coefficient Neumann Helmholtz problem,
solved exactly by a cosine transform, so mass is conserved to round-off.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np

from . import mac
from .brinkman import BrinkmanSolution, assemble_capillary_force, solve_brinkman
from .domain import GridSpec, ModelConfig, VelocityField, potential_eval, validate_assumptions
from .errors import BlowUp, GridMismatch
from .nonlocal_ops import build_plan, convolve, nonlocal_energy, precompute_a


LINEAR_TOL = 1e-14


def chemical_potential(phi, plan, pot):
    """``mu = a phi - J*phi + F'(phi)``."""
    phi = plan.grid.check_scalar(phi, "phi")
    a = precompute_a(plan)
    return a * phi - convolve(plan, phi) + potential_eval(pot, 1, phi)


class Model:
    """A validated configuration plus everything that is precomputed once per grid."""

    def __init__(self, config: ModelConfig, mode: str = "fft_padded", validate: bool = True):
        self.config = config
        self.grid = config.grid
        self.pot = config.potential
        self.plan = build_plan(config.kernel, self.grid, mode)
        self.a = precompute_a(self.plan)
        self.report = validate_assumptions(config, self.a) if validate else None
        self.a_mean = float(np.mean(self.a))
        self.S = 0.5 * self.pot.F2_max_abs()
        self.K = self.a_mean + self.S
        self.dt = config.dt
        self.n_steps = config.n_steps
        self.nu = config.nu

    def mu(self, phi):
        return chemical_potential(phi, self.plan, self.pot)

    def brinkman(self, f: VelocityField, p0=None) -> BrinkmanSolution:
        c = self.config
        return solve_brinkman(f, c.nu, self.grid, tol=c.cg_tol, div_tol=c.div_tol,
                              max_iters=c.max_iters, p0=p0)

    def brinkman_linear(self, f: VelocityField) -> BrinkmanSolution:
        """Brinkman solve for linearized problems.

        Uses only the relative stopping test (at ``LINEAR_TOL`` or tighter),
        so the solution map is homogeneous and symmetric to round-off.
        """
        c = self.config
        return solve_brinkman(f, c.nu, self.grid, tol=min(c.cg_tol, LINEAR_TOL),
                              div_tol=np.inf, max_iters=c.max_iters)

    def energy(self, phi) -> float:
        return nonlocal_energy(self.plan, phi, self.pot)

    def helmholtz(self, rhs):
        return mac.solve_neumann_helmholtz(rhs, self.dt * self.K, self.grid)

    def zero_control(self) -> VelocityField:
        return VelocityField.zeros(self.grid, self.n_steps)


@dataclass
class State:
    t: float
    phi: np.ndarray
    mu: np.ndarray
    u: VelocityField | None = None
    pi: np.ndarray | None = None


class StepResult(NamedTuple):
    mu: np.ndarray
    u: VelocityField
    pi: np.ndarray
    phi_next: np.ndarray
    iterations: int


def step(model: Model, phi, h: VelocityField) -> StepResult:
    grid, dt = model.grid, model.dt
    phi = grid.check_scalar(phi, "phi")
    h.check(grid, "control")
    mu = model.mu(phi)
    sol = model.brinkman(assemble_capillary_force(mu, phi, grid) + h)
    flux = sol.u * mac.face_average(phi, grid)
    rhs = phi - dt * mac.div(flux, grid) + dt * mac.laplacian_neumann(mu - model.K * phi, grid)
    phi_next = model.helmholtz(rhs)
    bound = 10.0 * model.pot.clamp
    peak = float(np.max(np.abs(phi_next)))
    if not np.isfinite(peak) or peak > bound:
        raise BlowUp(f"max|phi| = {peak:.3e} exceeds 10 M_phi = {bound:g}; reduce dt")
    return StepResult(mu, sol.u, sol.pi, phi_next, sol.iterations)


@dataclass
class Trajectory:
    """Forward states ``phi^0..phi^N`` and ``mu^0..mu^N``; velocities/pressures for steps ``0..N-1``."""

    dt: float
    phi: np.ndarray
    mu: np.ndarray
    u: VelocityField
    pi: np.ndarray
    control: VelocityField
    iterations: list = field(default_factory=list)
    grid: GridSpec | None = None

    @property
    def n_steps(self) -> int:
        return self.phi.shape[0] - 1

    def state(self, n) -> State:
        if n < self.n_steps:
            return State(n * self.dt, self.phi[n], self.mu[n], self.u[n], self.pi[n])
        return State(n * self.dt, self.phi[n], self.mu[n])


@dataclass
class DiagnosticsRow:
    t: float
    mass: float
    energy: float
    grad_mu_sq: float
    nu_grad_u_sq: float
    u_sq: float
    work: float
    residual: float


DIAGNOSTIC_COLUMNS = [f.name for f in fields(DiagnosticsRow)]


def simulate(model: Model, phi0, control: VelocityField | None = None):
    """Run ``N = T/dt`` steps; return ``(Trajectory, [DiagnosticsRow])``.

    ``residual`` is the discrete energy-law defect
    ``(E^{n+1}-E^n)/dt + ||grad mu^n||^2 + nu ||grad u^n||^2 + ||u^n||^2 - <h^n, u^n>``.
    """
    grid, N, dt = model.grid, model.n_steps, model.dt
    phi0 = grid.check_scalar(phi0, "phi0")
    if not np.all(np.isfinite(phi0)):
        raise ValueError("phi0 must be finite")
    control = model.zero_control() if control is None else control.check(grid, "control")
    if len(control) != N:
        raise GridMismatch(f"control has {len(control)} samples, expected {N}")

    phi = np.empty((N + 1,) + grid.shape)
    mu = np.empty_like(phi)
    pi = np.empty((N,) + grid.shape)
    u = VelocityField.zeros(grid, N)
    phi[0] = phi0
    iters = []
    for n in range(N):
        res = step(model, phi[n], control[n])
        mu[n], u[n], pi[n], phi[n + 1] = res.mu, res.u, res.pi, res.phi_next
        iters.append(res.iterations)
    mu[N] = model.mu(phi[N])
    traj = Trajectory(dt, phi, mu, u, pi, control, iters, grid)
    return traj, diagnostics(model, traj)


def diagnostics(model: Model, traj: Trajectory):
    grid, dt, w = model.grid, traj.dt, model.grid.cell_area
    E = [model.energy(p) for p in traj.phi]
    rows = []
    for n in range(traj.n_steps):
        un = traj.u[n]
        gmu = mac.grad_sq_neumann(traj.mu[n], grid)
        gu = model.nu * mac.velocity_grad_sq(un, grid)
        usq = un.dot(un) * w
        work = traj.control[n].dot(un) * w
        R = (E[n + 1] - E[n]) / dt + gmu + gu + usq - work
        rows.append(DiagnosticsRow(n * dt, grid.integrate(traj.phi[n]), E[n], gmu, gu, usq, work, R))
    return rows


def energy_residual(traj: Trajectory, rows) -> float:
    if len(rows) != traj.n_steps:
        raise ValueError("diagnostics do not cover the trajectory")
    return max((abs(r.residual) for r in rows), default=0.0)


def write_diagnostics_csv(rows, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(DIAGNOSTIC_COLUMNS)
        for r in rows:
            wr.writerow([repr(getattr(r, c)) for c in DIAGNOSTIC_COLUMNS])


# ---------------------------------------------------------------------------
# continuous dependence on the control


@dataclass
class LipschitzTable:
    eps: np.ndarray
    sup_phi_diff: np.ndarray   # sup_n ||phi_1^n - phi_2^n||
    int_u_V_sq: np.ndarray     # sum_n dt ||grad(u_1^n - u_2^n)||^2
    slope_phi: float
    slope_u: float             # slope of sqrt(int_u_V_sq)


def _loglog_slope(x, y):
    x, y = np.asarray(x), np.asarray(y)
    if x.size < 2 or np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def lipschitz_probe(model: Model, phi0, h: VelocityField, dh: VelocityField,
                    eps=(1.0, 0.5, 0.25, 0.125), base=None) -> LipschitzTable:
    grid = model.grid
    ref = base if base is not None else simulate(model, phi0, h)[0]
    sup_phi, int_u = [], []
    for e in eps:
        tr, _ = simulate(model, phi0, h + e * dh)
        dphi = tr.phi - ref.phi
        sup_phi.append(max(np.sqrt(grid.inner(d, d)) for d in dphi))
        int_u.append(sum(model.dt * mac.velocity_grad_sq(tr.u[n] - ref.u[n], grid)
                         for n in range(model.n_steps)))
    sup_phi, int_u = np.array(sup_phi), np.array(int_u)
    return LipschitzTable(np.array(eps), sup_phi, int_u,
                          _loglog_slope(eps, sup_phi), _loglog_slope(eps, np.sqrt(int_u)))
