"""Omega-restricted convolutions with the interaction kernel.

All integrals use the midpoint rule on cell centers::

    (J*phi)(x_i) = sum_j J(x_i - y_j) phi(y_j) hx hy

Two execution modes compute the same sum.  ``direct`` accumulates shifted
slices of the field, one per stencil offset; ``fft_padded`` performs a
zero-padded linear convolution, so nothing wraps around the boundary.
On ``periodic_test`` grids both modes wrap instead.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.fft as sfft

from .domain import GridSpec, Kernel, Potential, kernel_stencil, potential_eval

MODES = ("direct", "fft_padded")


def fft_workers() -> int:
    """Thread cap for the transforms, from ``CHB_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("CHB_THREADS", "1")))
    except ValueError:
        return 1


class ConvolutionPlan:
    """Precomputed kernel stencils (and their transforms) for one grid."""

    def __init__(self, kernel: Kernel, grid: GridSpec, mode: str = "fft_padded"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.kernel = kernel
        self.grid = grid
        self.mode = mode
        self.stencil = kernel_stencil(kernel, grid)
        w = grid.cell_area
        self._tables = {
            "J": self.stencil.J * w,
            "Jx": self.stencil.Jx * w,
            "Jy": self.stencil.Jy * w,
        }
        if mode == "fft_padded":
            self._build_transforms()
        self._a = None

    def _build_transforms(self):
        ny, nx = self.grid.shape
        st = self.stencil
        if self.grid.periodic:
            self._fshape = (ny, nx)
        else:
            # n + r already avoids wrap-around; 2n - 1 is the full linear size
            self._fshape = (sfft.next_fast_len(max(2 * ny - 1, ny + st.rj), real=True),
                            sfft.next_fast_len(max(2 * nx - 1, nx + st.ri), real=True))
        self._hat = {}
        for name, tab in self._tables.items():
            buf = np.zeros(self._fshape)
            # place offset (dj, di) at index (dj mod P, di mod Q)
            for dj in range(-st.rj, st.rj + 1):
                rows = tab[dj + st.rj]
                cols = np.arange(-st.ri, st.ri + 1) % self._fshape[1]
                np.add.at(buf[dj % self._fshape[0]], cols, rows)
            self._hat[name] = sfft.rfft2(buf, workers=fft_workers())

    def _check(self, phi):
        return self.grid.check_scalar(phi, "phi")

    def apply(self, phi, which="J"):
        phi = self._check(phi)
        if self.mode == "direct":
            return self._direct(phi, self._tables[which])
        return self._fft(phi, which)

    def _direct(self, phi, tab):
        st = self.stencil
        ny, nx = self.grid.shape
        out = np.zeros_like(phi)
        for dj in range(-st.rj, st.rj + 1):
            for di in range(-st.ri, st.ri + 1):
                c = tab[dj + st.rj, di + st.ri]
                if c == 0.0:
                    continue
                if self.grid.periodic:
                    out += c * np.roll(phi, (dj, di), axis=(0, 1))
                    continue
                # out[j, i] += c * phi[j - dj, i - di] for indices inside Omega
                j0, j1 = max(dj, 0), ny + min(dj, 0)
                i0, i1 = max(di, 0), nx + min(di, 0)
                out[j0:j1, i0:i1] += c * phi[j0 - dj:j1 - dj, i0 - di:i1 - di]
        return out

    def _fft(self, phi, which):
        ny, nx = self.grid.shape
        w = fft_workers()
        spec = sfft.rfft2(phi, s=self._fshape, workers=w)
        full = sfft.irfft2(spec * self._hat[which], s=self._fshape, workers=w)
        return np.ascontiguousarray(full[:ny, :nx])


def build_plan(kernel: Kernel, grid: GridSpec, mode: str = "fft_padded") -> ConvolutionPlan:
    return ConvolutionPlan(kernel, grid, mode)


def precompute_a(plan: ConvolutionPlan):
    """``a(x) = int_Omega J(x - y) dy`` on every cell."""
    if plan._a is None:
        a = plan.apply(np.ones(plan.grid.shape))
        if plan.grid.periodic:
            a = np.full(plan.grid.shape, float(np.sum(plan._tables["J"])))
        a.setflags(write=False)
        plan._a = a
    return plan._a


def convolve(plan: ConvolutionPlan, phi):
    return plan.apply(phi, "J")


def grad_kernel_convolve(plan: ConvolutionPlan, phi):
    """Both components of ``(grad J) * phi`` from the analytic gradient stencils."""
    return plan.apply(phi, "Jx"), plan.apply(phi, "Jy")


def pairwise_energy(plan: ConvolutionPlan, phi) -> float:
    """``1/4 int int J(x-y) (phi(x)-phi(y))^2`` via ``1/2 int a phi^2 - 1/2 int phi J*phi``."""
    a = precompute_a(plan)
    Jphi = convolve(plan, phi)
    return 0.5 * plan.grid.cell_area * float(np.sum(phi * (a * phi - Jphi)))


def nonlocal_energy(plan: ConvolutionPlan, phi, pot: Potential) -> float:
    phi = plan.grid.check_scalar(phi)
    bulk = plan.grid.integrate(potential_eval(pot, 0, phi))
    return pairwise_energy(plan, phi) + bulk


def export_stencil_csv(plan: ConvolutionPlan, path):
    """Write the stencil as ``di,dj,J,dJdx,dJdy`` rows for debugging."""
    st = plan.stencil
    with open(path, "w") as fh:
        fh.write("di,dj,J,dJdx,dJdy\n")
        for dj in range(-st.rj, st.rj + 1):
            for di in range(-st.ri, st.ri + 1):
                k = (dj + st.rj, di + st.ri)
                fh.write(f"{di},{dj},{st.J[k]!r},{st.Jx[k]!r},{st.Jy[k]!r}\n")
