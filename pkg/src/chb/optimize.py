"""Box-constrained projected-gradient descent on the reduced tracking cost.

Controls are :class:`VelocityField` trajectories with one face field per
forward step.  Norms and inner products use the weighted product of
:func:`chb.objective.control_inner`, in which the discrete adjoint
returns the gradient.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .adjoint import reduced_cost, solve_adjoint_discrete
from .domain import TrackingData, VelocityField
from .errors import BoundsInverted, LineSearchStalled
from .forward import Model
from .objective import control_inner, control_norm, cost  # noqa: F401  (re-exported)

ARMIJO_SIGMA = 1e-4
MAX_HALVINGS = 40
BB_RANGE = (1e-6, 1e2)


class Box:
    """Componentwise bounds ``lo <= U <= hi``; scalars or arrays broadcastable to the faces."""

    def __init__(self, lo=-np.inf, hi=np.inf):
        if isinstance(lo, VelocityField) or isinstance(hi, VelocityField):
            lo = lo if isinstance(lo, VelocityField) else VelocityField(lo, lo)
            hi = hi if isinstance(hi, VelocityField) else VelocityField(hi, hi)
            bad = np.any(lo.x > hi.x) or np.any(lo.y > hi.y)
        else:
            lo = np.asarray(lo, dtype=float)
            hi = np.asarray(hi, dtype=float)
            bad = np.any(lo > hi)
        if bad:
            raise BoundsInverted("lower bound exceeds upper bound somewhere")
        self.lo, self.hi = lo, hi

    def _parts(self, bound, comp):
        return getattr(bound, comp) if isinstance(bound, VelocityField) else bound

    def project(self, U: VelocityField) -> VelocityField:
        return VelocityField(
            np.clip(U.x, self._parts(self.lo, "x"), self._parts(self.hi, "x")),
            np.clip(U.y, self._parts(self.lo, "y"), self._parts(self.hi, "y")))

    def contains(self, U: VelocityField) -> bool:
        ok = True
        for c in ("x", "y"):
            arr = getattr(U, c)
            ok &= bool(np.all(arr >= self._parts(self.lo, c)) and np.all(arr <= self._parts(self.hi, c)))
        return ok


def project_box(U: VelocityField, bounds: Box) -> VelocityField:
    """Pointwise clamp onto the admissible box."""
    return bounds.project(U)


def kkt_residual(U: VelocityField, g: VelocityField, bounds: Box, grid, dt, alpha_ref=1.0) -> float:
    """``||U - P(U - alpha g)|| / alpha`` in the weighted control norm."""
    if not alpha_ref > 0:
        raise ValueError("alpha_ref must be positive")
    return control_norm(U - bounds.project(U - alpha_ref * g), grid, dt) / alpha_ref


@dataclass
class OptimizeOptions:
    max_iters: int = 50
    alpha0: float = 1.0
    tol_kkt: float = 1e-6
    alpha_ref: float = 1.0
    callback: object = None


@dataclass
class OptimizeReport:
    control: VelocityField
    costs: list = field(default_factory=list)
    kkt: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    backtracks: list = field(default_factory=list)
    accepted: int = 0
    rejected: int = 0
    converged: bool = False
    gradient: VelocityField | None = None

    def rows(self):
        """``(iter, cost, kkt, alpha, backtracks)`` per recorded iterate."""
        out = []
        for k, (c, r) in enumerate(zip(self.costs, self.kkt)):
            a = self.alphas[k - 1] if k > 0 else float("nan")
            b = self.backtracks[k - 1] if k > 0 else 0
            out.append((k, c, r, a, b))
        return out


def write_log_csv(report: OptimizeReport, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iter", "cost", "kkt", "alpha", "backtracks"])
        for k, c, r, a, b in report.rows():
            wr.writerow([k, repr(c), repr(r), repr(a), b])


def projected_gradient(model: Model, phi0, U0: VelocityField, data: TrackingData, weights,
                       bounds: Box, opts: OptimizeOptions | None = None) -> OptimizeReport:
    """Projected gradient with Armijo backtracking and Barzilai-Borwein steps.

    Stops when the KKT residual falls below ``tol_kkt * (||U0|| + 1)`` or
    after ``max_iters`` accepted steps.  Raises :class:`LineSearchStalled`
    if 40 halvings do not produce sufficient decrease.
    """
    opts = opts or OptimizeOptions()
    grid, dt = model.grid, model.dt
    U = bounds.project(U0)
    tol = opts.tol_kkt * (control_norm(U0, grid, dt) + 1.0)

    J, traj = reduced_cost(model, phi0, U, data, weights)
    g = solve_adjoint_discrete(model, traj, U, data, weights)[1].g
    rep = OptimizeReport(U)
    rep.costs.append(J)
    rep.kkt.append(kkt_residual(U, g, bounds, grid, dt, opts.alpha_ref))
    alpha = opts.alpha0
    for _ in range(opts.max_iters):
        if rep.kkt[-1] <= tol:
            rep.converged = True
            break
        halvings = 0
        while True:
            trial = bounds.project(U - alpha * g)
            step = trial - U
            J_new, traj_new = reduced_cost(model, phi0, trial, data, weights)
            decrease = control_inner(g, step, grid, dt)
            if J_new <= J + ARMIJO_SIGMA * decrease and J_new < J:
                break
            rep.rejected += 1
            halvings += 1
            if halvings > MAX_HALVINGS:
                raise LineSearchStalled(
                    f"no sufficient decrease after {MAX_HALVINGS} halvings "
                    f"(alpha = {alpha:.3e}); check the gradient with fd_gradient_check")
            alpha *= 0.5
        g_new = solve_adjoint_discrete(model, traj_new, trial, data, weights)[1].g
        rep.accepted += 1
        rep.alphas.append(alpha)
        rep.backtracks.append(halvings)
        s, y = step, g_new - g
        sy = control_inner(s, y, grid, dt)
        alpha = control_inner(s, s, grid, dt) / sy if sy > 0 else BB_RANGE[1]
        alpha = float(np.clip(alpha, *BB_RANGE))
        U, g, J, traj = trial, g_new, J_new, traj_new
        rep.costs.append(J)
        rep.kkt.append(kkt_residual(U, g, bounds, grid, dt, opts.alpha_ref))
        if opts.callback is not None:
            opts.callback(len(rep.costs) - 1, U, J, rep.kkt[-1])
    else:
        rep.converged = rep.kkt[-1] <= tol
    rep.control = U
    rep.gradient = g
    return rep
