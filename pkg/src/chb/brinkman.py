"""Steady Brinkman solve ``-nu lap u + u + grad pi = f``, ``div u = 0``, ``u = 0`` on the walls.

The velocity is eliminated exactly with the transform solver for
``A = -nu lap_h + I``; the pressure solves the Schur complement system
``S p = -D A^{-1} f`` with ``S = -D A^{-1} G`` by preconditioned conjugate
gradients.  The preconditioner ``nu I + (-D G)^{+}`` is the usual
Cahouet-Chabard choice and keeps the iteration count nearly grid
independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import GridSpec, VelocityField
from .errors import GridMismatch, SolverDiverged
from .mac import (div, face_average, grad, solve_neumann_poisson,
                  solve_velocity_helmholtz, velocity_operator, zero_boundary)


@dataclass
class BrinkmanSolution:
    u: VelocityField
    pi: np.ndarray
    iterations: int
    residual: float  # max-norm of the discrete divergence


def _mean_free(q):
    return q - q.mean()


def solve_brinkman(f: VelocityField, nu: float, grid: GridSpec, tol: float = 1e-12,
                   div_tol: float = 1e-10, max_iters: int = 500, p0=None) -> BrinkmanSolution:
    """Solve the Brinkman problem for the face-centered body force ``f``.

    Stops when the Schur residual (equal to ``-div u``) satisfies both
    ``||r||_2 <= tol ||b||_2`` and ``max|r| <= div_tol``.  ``p0`` is an
    optional initial pressure iterate.
    """
    if not nu > 0:
        raise ValueError("nu must be positive")
    f.check(grid, "force")
    f = zero_boundary(f)
    Af = solve_velocity_helmholtz(f, nu, grid)
    b = _mean_free(-div(Af, grid))
    bnorm = float(np.linalg.norm(b))

    def schur(d):
        return -div(solve_velocity_helmholtz(grad(d, grid), nu, grid), grid)

    def precond(r):
        return _mean_free(nu * r + solve_neumann_poisson(r, grid))

    if p0 is None:
        p = np.zeros(grid.shape)
        r = b.copy()
    else:
        p = _mean_free(np.asarray(p0, dtype=float))
        r = _mean_free(b - schur(p))

    def converged(r):
        return (np.linalg.norm(r) <= tol * bnorm or bnorm == 0.0) and np.max(np.abs(r)) <= div_tol

    it = 0
    if not converged(r):
        z = precond(r)
        d = z.copy()
        rz = float(np.vdot(r, z))
        while True:
            if it >= max_iters:
                raise SolverDiverged(
                    f"Brinkman Schur CG did not reach tol={tol:g} in {max_iters} iterations "
                    f"(relative residual {np.linalg.norm(r) / bnorm:.3e})")
            Sd = schur(d)
            alpha = rz / float(np.vdot(d, Sd))
            p += alpha * d
            r -= alpha * Sd
            it += 1
            if converged(r):
                break
            z = precond(r)
            rz_new = float(np.vdot(r, z))
            d = z + (rz_new / rz) * d
            rz = rz_new

    u = solve_velocity_helmholtz(f - grad(p, grid), nu, grid)
    residual = float(np.max(np.abs(div(u, grid))))
    return BrinkmanSolution(u, _mean_free(p), it, residual)


def momentum_residual(sol: BrinkmanSolution, f: VelocityField, nu: float, grid: GridSpec) -> float:
    r = velocity_operator(sol.u, nu, grid) + grad(sol.pi, grid) - zero_boundary(f)
    return r.max_abs()


def assemble_capillary_force(mu, phi, grid: GridSpec) -> VelocityField:
    """Face-centered ``mu grad phi``: face-averaged ``mu`` times the normal difference of ``phi``."""
    mu = np.asarray(mu, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if mu.shape != grid.shape or phi.shape != grid.shape:
        raise GridMismatch(f"mu {mu.shape} / phi {phi.shape} do not match grid {grid.shape}")
    return face_average(mu, grid) * grad(phi, grid)
