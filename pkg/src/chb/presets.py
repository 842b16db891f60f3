"""Shipped initial data, targets and forcing fields."""

from __future__ import annotations

import numpy as np

from .domain import GridSpec, VelocityField

INITIAL_PRESETS = ("constant", "stripe", "spinodal")


def constant(grid: GridSpec, value=0.3):
    return np.full(grid.shape, float(value))


def stripe(grid: GridSpec, half_width=0.25, eps=None, shift=0.0):
    """Horizontal band of phase +1 (``|y - Ly/2 - shift| < half_width Ly``) in phase -1.

    ``eps`` is the tanh interface width, by default ``0.05 Ly``.
    """
    _, Y = grid.cell_centers()
    eps = 0.05 * grid.Ly if eps is None else eps
    dist = half_width * grid.Ly - np.abs(Y - 0.5 * grid.Ly - shift)
    return np.tanh(dist / (np.sqrt(2.0) * eps))


def spinodal(grid: GridSpec, mean=0.0, amplitude=0.05, seed=0):
    rng = np.random.default_rng(seed)
    return mean + amplitude * rng.uniform(-1.0, 1.0, grid.shape)


def initial(name: str, grid: GridSpec, seed=0):
    if name == "constant":
        return constant(grid)
    if name == "stripe":
        return stripe(grid)
    if name == "spinodal":
        return spinodal(grid, seed=seed)
    raise KeyError(f"unknown initial preset {name!r}; choose from {INITIAL_PRESETS}")


def stream_velocity(grid: GridSpec, psi_nodes):
    """Discretely divergence-free face field from node values of a stream function.

    ``psi_nodes`` has shape ``(ny+1, nx+1)``; zero boundary values give an
    exactly no-penetration field.
    """
    ux = (psi_nodes[1:, :] - psi_nodes[:-1, :]) / grid.hy
    uy = -(psi_nodes[:, 1:] - psi_nodes[:, :-1]) / grid.hx
    return VelocityField(ux, uy)


def vortex(grid: GridSpec, amplitude=1.0):
    """Single cell ``curl(A sin^2(pi x/Lx) sin^2(pi y/Ly))`` with peak ``|u_x|`` of ``amplitude``."""
    x = np.arange(grid.nx + 1) * grid.hx
    y = np.arange(grid.ny + 1) * grid.hy
    X, Y = np.meshgrid(x, y)
    psi = np.sin(np.pi * X / grid.Lx) ** 2 * np.sin(np.pi * Y / grid.Ly) ** 2
    scale = amplitude * grid.Ly / np.pi
    return stream_velocity(grid, scale * psi)


def shear(grid: GridSpec, amplitude=1.0):
    """Tangential forcing ``(A sin(2 pi y/Ly), 0)``; not divergence-free."""
    _, Y = grid.xface_centers()
    ux = amplitude * np.sin(2 * np.pi * Y / grid.Ly)
    return VelocityField(ux, np.zeros(grid.yface_shape))


def forcing(name: str, grid: GridSpec, n_steps: int, amplitude=1.0) -> VelocityField:
    if name == "zero":
        base = VelocityField.zeros(grid)
    elif name == "vortex":
        base = vortex(grid, amplitude)
    elif name == "shear":
        base = shear(grid, amplitude)
    else:
        raise KeyError(f"unknown forcing preset {name!r}")
    return VelocityField(np.repeat(base.x[None], n_steps, axis=0),
                         np.repeat(base.y[None], n_steps, axis=0))


def scalar_target(name: str, grid: GridSpec, phi0):
    if name == "zero":
        return np.zeros(grid.shape)
    if name == "initial":
        return np.array(phi0, dtype=float)
    if name == "stripe":
        return stripe(grid)
    if name == "shifted_stripe":
        return stripe(grid, shift=0.05 * grid.Ly)
    if name.startswith("constant:"):
        return np.full(grid.shape, float(name.split(":", 1)[1]))
    raise KeyError(f"unknown scalar target {name!r}")


def velocity_target(name: str, grid: GridSpec) -> VelocityField:
    if name == "zero":
        return VelocityField.zeros(grid)
    if name.startswith("vortex"):
        amp = float(name.split(":", 1)[1]) if ":" in name else 0.05
        return vortex(grid, amp)
    raise KeyError(f"unknown velocity target {name!r}")
