"""Grids, fields, model parameters and hypothesis checks.

Scalar fields are plain ``float64`` arrays of shape ``(ny, nx)`` indexed
``[j, i]`` (row ``j`` is the ``y`` index, so the row-major flattening runs
fastest in ``x``).  Velocity-like quantities live on the faces of the MAC
grid and are carried by :class:`VelocityField`.
"""

from __future__ import annotations

import dataclasses
import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .errors import AssumptionViolation, ConfigError, GridMismatch

NEUMANN_NOSLIP = "neumann_noslip"
PERIODIC_TEST = "periodic_test"
BOUNDARY_MODES = (NEUMANN_NOSLIP, PERIODIC_TEST)


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    Lx: float = 32.0
    Ly: float = 32.0
    boundary_mode: str = NEUMANN_NOSLIP

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ConfigError("grid.nx/ny", "must be integers")
        if self.nx < 4 or self.ny < 4:
            raise ConfigError("grid.nx/ny", f"must be >= 4, got {self.nx}x{self.ny}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ConfigError("grid.Lx/Ly", "must be positive")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ConfigError("grid.boundary_mode", f"must be one of {BOUNDARY_MODES}")

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def xface_shape(self):
        return (self.ny, self.nx + 1)

    @property
    def yface_shape(self):
        return (self.ny + 1, self.nx)

    @property
    def periodic(self) -> bool:
        return self.boundary_mode == PERIODIC_TEST

    def cell_centers(self):
        """Return ``(X, Y)`` coordinate arrays of shape ``(ny, nx)``."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y)

    def xface_centers(self):
        x = np.arange(self.nx + 1) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y)

    def yface_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = np.arange(self.ny + 1) * self.hy
        return np.meshgrid(x, y)

    def check_scalar(self, values, name="field"):
        values = np.asarray(values, dtype=float)
        if values.shape[-2:] != self.shape:
            raise GridMismatch(
                f"{name} has shape {values.shape[-2:]}, grid expects {self.shape}")
        return values

    def integrate(self, values) -> float:
        """Midpoint-rule integral of a cell-centered field."""
        return float(np.sum(values) * self.cell_area)

    def inner(self, a, b) -> float:
        return float(np.vdot(a, b) * self.cell_area)


class VelocityField:
    """Face-centered vector field on the MAC grid.

    ``x`` lives on vertical faces, shape ``(..., ny, nx+1)``; ``y`` on
    horizontal faces, shape ``(..., ny+1, nx)``.  An optional leading axis
    indexes time steps, which is how control and target trajectories are
    stored.
    """

    __slots__ = ("x", "y")
    __array_ufunc__ = None  # numpy scalars defer to the reflected operators

    def __init__(self, x, y):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)

    @classmethod
    def zeros(cls, grid: GridSpec, steps: int | None = None):
        lead = () if steps is None else (steps,)
        return cls(np.zeros(lead + grid.xface_shape), np.zeros(lead + grid.yface_shape))

    def __repr__(self):
        return f"VelocityField(x{self.x.shape}, y{self.y.shape})"

    def __getitem__(self, n):
        return VelocityField(self.x[n], self.y[n])

    def __setitem__(self, n, value):
        self.x[n] = value.x
        self.y[n] = value.y

    def __len__(self):
        if self.x.ndim < 3:
            raise TypeError("single VelocityField has no length")
        return self.x.shape[0]

    def __add__(self, other):
        return VelocityField(self.x + other.x, self.y + other.y)

    def __sub__(self, other):
        return VelocityField(self.x - other.x, self.y - other.y)

    def __neg__(self):
        return VelocityField(-self.x, -self.y)

    def __mul__(self, c):
        if isinstance(c, VelocityField):
            return VelocityField(self.x * c.x, self.y * c.y)
        return VelocityField(self.x * c, self.y * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return VelocityField(self.x / c, self.y / c)

    def copy(self):
        return VelocityField(self.x.copy(), self.y.copy())

    def dot(self, other) -> float:
        """Euclidean inner product over all faces (and steps)."""
        return float(np.vdot(self.x, other.x) + np.vdot(self.y, other.y))

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.x)), np.max(np.abs(self.y))))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y)))

    def flat(self):
        return np.concatenate([self.x.ravel(), self.y.ravel()])

    def check(self, grid: GridSpec, name="velocity"):
        if self.x.shape[-2:] != grid.xface_shape or self.y.shape[-2:] != grid.yface_shape:
            raise GridMismatch(
                f"{name} face arrays {self.x.shape[-2:]}/{self.y.shape[-2:]} do not match "
                f"grid {grid.xface_shape}/{grid.yface_shape}")
        return self

    def map(self, fn):
        return VelocityField(fn(self.x), fn(self.y))


# ---------------------------------------------------------------------------
# Double-well potential


@dataclass(frozen=True)
class Potential:
    """Polynomial double-well potential ``F``.

    ``kind="quartic"`` is ``F(s) = (s^2 - 1)^2``.  ``kind="custom_polynomial"``
    takes ascending-power ``coefficients``.  ``clamp`` is the bound M_phi on
    which c0 and the stabilization constant are estimated.
    """

    kind: str = "quartic"
    coefficients: tuple = ()
    clamp: float = 2.0

    def __post_init__(self):
        if self.kind not in ("quartic", "custom_polynomial"):
            raise ConfigError("potential.kind", f"unknown potential {self.kind!r}")
        if self.kind == "custom_polynomial" and len(self.coefficients) == 0:
            raise ConfigError("potential.coefficients", "required for custom_polynomial")
        if not self.clamp > 0:
            raise ConfigError("potential.clamp", "must be positive")

    @functools.cached_property
    def _derivs(self):
        if self.kind == "quartic":
            c = (1.0, 0.0, -2.0, 0.0, 1.0)
        else:
            c = tuple(float(v) for v in self.coefficients)
        p = np.polynomial.Polynomial(c)
        return [p.deriv(k) if k else p for k in range(5)]

    def polynomial(self, order=0):
        return self._derivs[order]

    @property
    def degree(self) -> int:
        return self._derivs[0].degree()

    def __call__(self, s, order=0):
        return potential_eval(self, order, s)

    def with_clamp(self, clamp):
        return dataclasses.replace(self, clamp=float(clamp))

    def F2_max_abs(self, step=1e-3) -> float:
        """max |F''(s)| on [-M_phi, M_phi]."""
        s = sample_interval(self.clamp, step)
        return float(np.max(np.abs(self(s, 2))))


def potential_eval(p: Potential, order: int, s):
    """Evaluate ``F``, ``F'``, ``F''``, ``F'''`` or ``F''''`` at ``s``."""
    if order not in (0, 1, 2, 3, 4):
        raise ValueError(f"order must be in 0..4, got {order}")
    if p.kind == "quartic":
        s = np.asarray(s, dtype=float)
        if order == 0:
            out = (s * s - 1.0) ** 2
        elif order == 1:
            out = 4.0 * s**3 - 4.0 * s
        elif order == 2:
            out = 12.0 * s * s - 4.0
        elif order == 3:
            out = 24.0 * s
        else:
            out = np.full_like(s, 24.0)
        return out if out.ndim else float(out)
    out = p.polynomial(order)(np.asarray(s, dtype=float))
    return out if np.ndim(out) else float(out)


def sample_interval(bound, step=1e-3):
    n = int(round(2 * bound / step))
    return np.linspace(-bound, bound, n + 1)


def default_clamp(phi0) -> float:
    return max(1.5 * float(np.max(np.abs(phi0))), 2.0)


# ---------------------------------------------------------------------------
# Interaction kernel


class Stencil(NamedTuple):
    ri: int
    rj: int
    J: np.ndarray   # (2rj+1, 2ri+1), J[dj+rj, di+ri] = J(di*hx, dj*hy)
    Jx: np.ndarray  # dJ/dx1 on the same offsets
    Jy: np.ndarray  # dJ/dx2


@functools.lru_cache(maxsize=None)
def _bump_normalization():
    val, _ = integrate.quad(lambda r: math.exp(-1.0 / (1.0 - r * r)) * r, 0.0, 1.0,
                            epsabs=1e-15, epsrel=1e-13)
    return 2.0 * math.pi * val


@dataclass(frozen=True)
class Kernel:
    """Even, non-negative interaction kernel with total mass ``amplitude``.

    gaussian: ``J(x) = k exp(-|x|^2 / (2 delta^2)) / (2 pi delta^2)``.
    bump: ``J(x) = k exp(-1 / (1 - |x|^2/delta^2)) / (Z delta^2)`` on ``|x| < delta``.
    Offsets farther than ``truncation`` (default 4 delta, or delta for bump)
    are dropped.
    """

    kind: str = "gaussian"
    delta: float = 2.0
    amplitude: float = 24.0
    truncation: float | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "bump"):
            raise ConfigError("kernel.kind", f"unknown kernel {self.kind!r}")
        if not self.delta > 0:
            raise ConfigError("kernel.delta", "must be positive")
        if self.amplitude < 0:
            raise ConfigError("kernel.amplitude", "must be non-negative")
        if self.truncation is not None and not self.truncation > 0:
            raise ConfigError("kernel.truncation", "must be positive")

    @property
    def radius(self) -> float:
        if self.kind == "gaussian":
            return 4.0 * self.delta if self.truncation is None else self.truncation
        r = self.delta if self.truncation is None else self.truncation
        return min(r, self.delta)

    def value(self, dx, dy):
        r2 = dx * dx + dy * dy
        d2 = self.delta * self.delta
        if self.kind == "gaussian":
            return self.amplitude * np.exp(-r2 / (2.0 * d2)) / (2.0 * math.pi * d2)
        rho2 = np.minimum(r2 / d2, 1.0)
        inside = rho2 < 1.0
        with np.errstate(divide="ignore", over="ignore"):
            b = np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - rho2, 1.0)), 0.0)
        return self.amplitude * b / (_bump_normalization() * d2)

    def gradient(self, dx, dy):
        """Analytic ``(dJ/dx1, dJ/dx2)`` at offsets ``(dx, dy)``."""
        J = self.value(dx, dy)
        d2 = self.delta * self.delta
        if self.kind == "gaussian":
            return -dx / d2 * J, -dy / d2 * J
        rho2 = np.minimum((dx * dx + dy * dy) / d2, 1.0)
        inside = rho2 < 1.0
        denom = np.where(inside, (1.0 - rho2) ** 2, 1.0)
        f = np.where(inside, -2.0 / (d2 * denom), 0.0)
        return f * dx * J, f * dy * J


def kernel_stencil(kernel: Kernel, grid: GridSpec) -> Stencil:
    return _stencil(kernel, grid.hx, grid.hy, grid.nx, grid.ny)


@functools.lru_cache(maxsize=32)
def _stencil(kernel, hx, hy, nx, ny):
    rc = kernel.radius
    # offsets beyond the domain never pair two cells of Omega
    ri = min(int(math.floor(rc / hx + 1e-12)), nx - 1)
    rj = min(int(math.floor(rc / hy + 1e-12)), ny - 1)
    di = np.arange(-ri, ri + 1)
    dj = np.arange(-rj, rj + 1)
    DX = di[None, :] * hx
    DY = dj[:, None] * hy
    mask = DX * DX + DY * DY <= rc * rc * (1 + 1e-12)
    J = np.where(mask, kernel.value(DX, DY), 0.0)
    gx, gy = kernel.gradient(DX, DY)
    Jx = np.where(mask, gx, 0.0)
    Jy = np.where(mask, gy, 0.0)
    for arr in (J, Jx, Jy):
        arr.setflags(write=False)
    return Stencil(ri, rj, J, Jx, Jy)


# ---------------------------------------------------------------------------
# Model configuration


@dataclass(frozen=True)
class CostWeights:
    beta_phi: float = 1.0
    beta_u: float = 1.0
    beta_T: float = 1.0
    beta_U: float = 0.1

    def __post_init__(self):
        for name in ("beta_phi", "beta_u", "beta_T", "beta_U"):
            if getattr(self, name) < 0:
                raise ConfigError(f"cost.{name}", "must be non-negative")


@dataclass
class ModelConfig:
    grid: GridSpec
    kernel: Kernel = field(default_factory=Kernel)
    potential: Potential = field(default_factory=Potential)
    nu: float = 1.0
    T: float = 0.05
    dt: float = 1e-3
    weights: CostWeights = field(default_factory=CostWeights)
    div_tol: float = 1e-10
    cg_tol: float = 1e-12
    max_iters: int = 500
    c0_estimate: float | None = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigError("model.nu", "must be positive")
        if not self.T > 0:
            raise ConfigError("model.T", "must be positive")
        if not self.dt > 0:
            raise ConfigError("model.dt", "must be positive")
        if not self.dt < self.T:
            raise ConfigError("model.dt", "must be smaller than model.T")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ConfigError("model.T", f"must be an integer multiple of dt (T/dt = {ratio})")
        if not (self.div_tol > 0 and self.cg_tol > 0):
            raise ConfigError("solver.div_tol/cg_tol", "must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class TrackingData:
    """Targets of the tracking cost.

    ``phi_d`` has shape ``(N, ny, nx)`` and ``u_d`` a leading axis of length
    ``N`` (one snapshot per forward step, left-endpoint sampling);
    ``phi_Omega`` is the terminal target.
    """

    phi_d: np.ndarray
    u_d: VelocityField
    phi_Omega: np.ndarray

    @classmethod
    def constant(cls, grid, n_steps, phi_d=None, u_d=None, phi_Omega=None):
        phi_d = np.zeros(grid.shape) if phi_d is None else grid.check_scalar(phi_d)
        phi_Omega = np.zeros(grid.shape) if phi_Omega is None else grid.check_scalar(phi_Omega)
        u_d = VelocityField.zeros(grid) if u_d is None else u_d.check(grid)
        return cls(
            np.broadcast_to(phi_d, (n_steps,) + grid.shape),
            VelocityField(np.broadcast_to(u_d.x, (n_steps,) + grid.xface_shape),
                          np.broadcast_to(u_d.y, (n_steps,) + grid.yface_shape)),
            phi_Omega,
        )

    def check(self, grid, n_steps):
        grid.check_scalar(self.phi_d, "phi_d")
        grid.check_scalar(self.phi_Omega, "phi_Omega")
        self.u_d.check(grid, "u_d")
        if self.phi_d.shape[0] != n_steps or self.u_d.x.shape[0] != n_steps:
            raise GridMismatch(
                f"targets carry {self.phi_d.shape[0]}/{self.u_d.x.shape[0]} snapshots, "
                f"expected {n_steps}")
        return self


# ---------------------------------------------------------------------------
# Hypothesis checks


@dataclass(frozen=True)
class AssumptionReport:
    F2_min: float
    a_min: float
    a_max: float
    c0_estimate: float
    h2_pass: bool
    h3_pass: bool
    h4_c1: float
    h4_c2: float
    h4_pass: bool
    h5_p: float
    h5_c3: float
    h5_pass: bool
    notes: tuple = ()

    def as_dict(self):
        return dataclasses.asdict(self)


def validate_assumptions(config: ModelConfig, a_field) -> AssumptionReport:
    """Check H2-H5 numerically and store ``c0_estimate`` on ``config``.

    c0 is the minimum of ``F''(s) + a(x)`` with ``s`` sampled every 1e-3 on
    ``[-M_phi, M_phi]`` (plus the exact critical points of ``F''``).
    Raises :class:`AssumptionViolation` with label ``"H3"`` when c0 <= 0.
    """
    pot = config.potential
    a_field = config.grid.check_scalar(a_field, "a")
    M = pot.clamp
    s = sample_interval(M)
    crit = pot.polynomial(3).roots() if pot.degree >= 3 else np.array([])
    crit = np.real(crit[np.abs(np.imag(crit)) < 1e-12])
    s = np.concatenate([s, crit[np.abs(crit) <= M]])
    F2_min = float(np.min(pot(s, 2)))
    a_min = float(np.min(a_field))
    a_max = float(np.max(a_field))
    c0 = F2_min + a_min
    notes = []

    st = kernel_stencil(config.kernel, config.grid)
    symmetric = bool(np.array_equal(st.J, st.J[::-1, ::-1]))
    h2 = symmetric and bool(np.all(st.J >= 0)) and a_min >= 0

    # growth checks on a wider interval so the asymptotics are visible
    wide = np.linspace(-10 * M, 10 * M, 20001)
    tail = wide[np.abs(wide) >= 5 * M]
    F2 = pot(wide, 2) + a_min
    c1 = 0.5 * float(np.min((pot(tail, 2) + a_min) / tail**2))
    c2 = max(float(np.max(c1 * wide**2 - F2)), 0.0) + 1e-12
    h4 = c1 > 0

    if pot.kind == "quartic":
        p = 4.0 / 3.0
    else:
        d = pot.degree
        p = 2.0 if d <= 1 else min(2.0, d / (d - 1.0))
        notes.append("H4/H5 for a custom polynomial are sampled, not proven")
        warnings.warn(notes[-1], stacklevel=2)
    ratio = np.abs(pot(wide, 1)) ** p / (np.abs(pot(wide, 0)) + 1.0)
    c3 = float(np.max(ratio))
    far = np.abs(pot(np.array([10 * M]), 1)) ** p / (np.abs(pot(np.array([10 * M]), 0)) + 1)
    mid = np.abs(pot(np.array([5 * M]), 1)) ** p / (np.abs(pot(np.array([5 * M]), 0)) + 1)
    h5 = bool(np.isfinite(c3) and far[0] <= 1.05 * mid[0] + 1e-12)

    report = AssumptionReport(F2_min, a_min, a_max, c0, h2, c0 > 0, c1, c2, h4, p, c3, h5,
                              tuple(notes))
    config.c0_estimate = c0
    if not h2:
        raise AssumptionViolation("H2", "kernel must be even and non-negative with a(x) >= 0")
    if not c0 > 0:
        raise AssumptionViolation(
            "H3", f"min F'' + min a = {F2_min:.6g} + {a_min:.6g} = {c0:.6g} <= 0; "
                  "kernel amplitude too small for the chosen potential")
    return report
