"""Discrete operators on the staggered (MAC) grid.

Scalars sit at cell centers; the ``x`` velocity component on vertical
faces and the ``y`` component on horizontal faces.  Boundary-normal face
values are identically zero (no penetration); the tangential no-slip
condition enters the vector Laplacian through a reflected ghost value
``u_ghost = -u_inside``.  Face averages and gradients vanish on boundary
faces, which makes ``grad = -div^T`` hold exactly.

The constant-coefficient solves are diagonalized by orthonormal
trigonometric transforms: DCT-II for the cell-centered Neumann problem,
DST-I (normal direction, node-centered Dirichlet) combined with DST-II
(tangential direction, midpoint Dirichlet) for each velocity component.
"""

from __future__ import annotations

import functools

import numpy as np
import scipy.fft as sfft

from .domain import GridSpec, VelocityField
from .nonlocal_ops import fft_workers


def _require_walls(grid: GridSpec):
    if grid.periodic:
        raise ValueError("periodic_test grids are only supported by the convolution operators")


# ---------------------------------------------------------------------------
# cell <-> face maps


def grad(p, grid: GridSpec) -> VelocityField:
    """Face-normal differences of a cell field; zero on boundary faces."""
    _require_walls(grid)
    u = VelocityField.zeros(grid)
    u.x[:, 1:-1] = (p[:, 1:] - p[:, :-1]) / grid.hx
    u.y[1:-1, :] = (p[1:, :] - p[:-1, :]) / grid.hy
    return u


def div(u: VelocityField, grid: GridSpec):
    return (u.x[:, 1:] - u.x[:, :-1]) / grid.hx + (u.y[1:, :] - u.y[:-1, :]) / grid.hy


def face_average(q, grid: GridSpec) -> VelocityField:
    u = VelocityField.zeros(grid)
    u.x[:, 1:-1] = 0.5 * (q[:, 1:] + q[:, :-1])
    u.y[1:-1, :] = 0.5 * (q[1:, :] + q[:-1, :])
    return u


def face_average_T(v: VelocityField, grid: GridSpec):
    """Transpose of :func:`face_average` (Euclidean)."""
    out = np.zeros(grid.shape)
    hx_part = 0.5 * v.x[:, 1:-1]
    out[:, 1:] += hx_part
    out[:, :-1] += hx_part
    hy_part = 0.5 * v.y[1:-1, :]
    out[1:, :] += hy_part
    out[:-1, :] += hy_part
    return out


def zero_boundary(u: VelocityField) -> VelocityField:
    """Copy of ``u`` with boundary-normal faces set to zero."""
    u = u.copy()
    u.x[..., :, 0] = 0.0
    u.x[..., :, -1] = 0.0
    u.y[..., 0, :] = 0.0
    u.y[..., -1, :] = 0.0
    return u


def cell_average(u: VelocityField):
    """Velocity components interpolated to cell centers."""
    return 0.5 * (u.x[:, 1:] + u.x[:, :-1]), 0.5 * (u.y[1:, :] + u.y[:-1, :])


# ---------------------------------------------------------------------------
# Laplacians and norms


def laplacian_neumann(q, grid: GridSpec):
    """5-point cell-centered Laplacian with homogeneous Neumann data."""
    return div(grad(q, grid), grid)


def grad_sq_neumann(q, grid: GridSpec) -> float:
    """``||grad_h q||^2`` consistent with ``-<lap q, q> = ||grad q||^2``."""
    g = grad(q, grid)
    return g.dot(g) * grid.cell_area


def vector_laplacian(u: VelocityField, grid: GridSpec) -> VelocityField:
    _require_walls(grid)
    hx2, hy2 = grid.hx**2, grid.hy**2
    out = VelocityField.zeros(grid)

    ux = u.x
    inner = ux[:, 1:-1]
    xx = (ux[:, 2:] - 2 * inner + ux[:, :-2]) / hx2
    padded = np.concatenate([-inner[:1], inner, -inner[-1:]], axis=0)
    yy = (padded[2:] - 2 * inner + padded[:-2]) / hy2
    out.x[:, 1:-1] = xx + yy

    uy = u.y
    inner = uy[1:-1, :]
    yy = (uy[2:, :] - 2 * inner + uy[:-2, :]) / hy2
    padded = np.concatenate([-inner[:, :1], inner, -inner[:, -1:]], axis=1)
    xx = (padded[:, 2:] - 2 * inner + padded[:, :-2]) / hx2
    out.y[1:-1, :] = xx + yy
    return out


def velocity_grad_sq(u: VelocityField, grid: GridSpec) -> float:
    """``||grad_h u||^2`` matching ``-<vector_laplacian(u), u>`` exactly."""
    hx2, hy2 = grid.hx**2, grid.hy**2
    ux = u.x[:, 1:-1]
    s = np.sum(np.diff(u.x, axis=1) ** 2) / hx2
    s += np.sum(np.diff(ux, axis=0) ** 2) / hy2 + 2 * (np.sum(ux[0] ** 2) + np.sum(ux[-1] ** 2)) / hy2
    uy = u.y[1:-1, :]
    s += np.sum(np.diff(u.y, axis=0) ** 2) / hy2
    s += np.sum(np.diff(uy, axis=1) ** 2) / hx2 + 2 * (np.sum(uy[:, 0] ** 2) + np.sum(uy[:, -1] ** 2)) / hx2
    return float(s * grid.cell_area)


def velocity_operator(u: VelocityField, nu: float, grid: GridSpec) -> VelocityField:
    """``(-nu lap_h + I) u`` on interior faces; zero on boundary faces."""
    lap = vector_laplacian(u, grid)
    return zero_boundary(u) - nu * lap


# ---------------------------------------------------------------------------
# transform solvers


@functools.lru_cache(maxsize=32)
def _neumann_symbol(nx, ny, hx, hy):
    kx = 4.0 / hx**2 * np.sin(np.pi * np.arange(nx) / (2 * nx)) ** 2
    ky = 4.0 / hy**2 * np.sin(np.pi * np.arange(ny) / (2 * ny)) ** 2
    lam = ky[:, None] + kx[None, :]
    lam.setflags(write=False)
    return lam


def neumann_symbol(grid: GridSpec):
    """Eigenvalues of ``-lap_h`` in the DCT-II basis, shape ``(ny, nx)``."""
    return _neumann_symbol(grid.nx, grid.ny, grid.hx, grid.hy)


def dct2(q):
    return sfft.dctn(q, type=2, norm="ortho", workers=fft_workers())


def idct2(q):
    return sfft.idctn(q, type=2, norm="ortho", workers=fft_workers())


def solve_neumann_helmholtz(rhs, c: float, grid: GridSpec):
    """Solve ``(I - c lap_h) q = rhs`` with homogeneous Neumann data."""
    return idct2(dct2(rhs) / (1.0 + c * neumann_symbol(grid)))


def solve_neumann_poisson(rhs, grid: GridSpec):
    """Mean-zero solution of ``-lap_h q = rhs - mean(rhs)``."""
    lam = neumann_symbol(grid)
    hat = dct2(rhs)
    hat[0, 0] = 0.0
    lam = lam.copy()
    lam[0, 0] = 1.0
    return idct2(hat / lam)


@functools.lru_cache(maxsize=32)
def _velocity_symbols(nx, ny, hx, hy, nu):
    # x component: DST-I along x (nodes 1..nx-1), DST-II along y (cells)
    lx = 4.0 / hx**2 * np.sin(np.pi * np.arange(1, nx) / (2 * nx)) ** 2
    ly = 4.0 / hy**2 * np.sin(np.pi * np.arange(1, ny + 1) / (2 * ny)) ** 2
    sx = 1.0 + nu * (ly[:, None] + lx[None, :])
    # y component: DST-II along x (cells), DST-I along y (nodes 1..ny-1)
    lx2 = 4.0 / hx**2 * np.sin(np.pi * np.arange(1, nx + 1) / (2 * nx)) ** 2
    ly2 = 4.0 / hy**2 * np.sin(np.pi * np.arange(1, ny) / (2 * ny)) ** 2
    sy = 1.0 + nu * (ly2[:, None] + lx2[None, :])
    sx.setflags(write=False)
    sy.setflags(write=False)
    return sx, sy


def solve_velocity_helmholtz(f: VelocityField, nu: float, grid: GridSpec) -> VelocityField:
    """Solve ``(-nu lap_h + I) u = f`` for no-slip ``u``; boundary entries of ``f`` are ignored."""
    _require_walls(grid)
    sx, sy = _velocity_symbols(grid.nx, grid.ny, grid.hx, grid.hy, float(nu))
    w = fft_workers()
    out = VelocityField.zeros(grid)

    fx = f.x[:, 1:-1]
    hat = sfft.dst(sfft.dst(fx, type=1, axis=1, norm="ortho", workers=w),
                   type=2, axis=0, norm="ortho", workers=w)
    hat /= sx
    out.x[:, 1:-1] = sfft.dst(sfft.idst(hat, type=2, axis=0, norm="ortho", workers=w),
                              type=1, axis=1, norm="ortho", workers=w)

    fy = f.y[1:-1, :]
    hat = sfft.dst(sfft.dst(fy, type=1, axis=0, norm="ortho", workers=w),
                   type=2, axis=1, norm="ortho", workers=w)
    hat /= sy
    out.y[1:-1, :] = sfft.dst(sfft.idst(hat, type=2, axis=1, norm="ortho", workers=w),
                              type=1, axis=0, norm="ortho", workers=w)
    return out
