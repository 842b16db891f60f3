import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erf

from chb.domain import GridSpec, Kernel, Potential, kernel_stencil
from chb.errors import GridMismatch
from chb.nonlocal_ops import (build_plan, convolve, export_stencil_csv, grad_kernel_convolve,
                              nonlocal_energy, pairwise_energy, precompute_a)


def brute_convolve(kernel, grid, phi, comp="J"):
    """O(N^2) midpoint sum over all cell pairs, truncated at the kernel radius."""
    X, Y = grid.cell_centers()
    x, y, f = X.ravel(), Y.ravel(), phi.ravel()
    dx = x[:, None] - x[None, :]
    dy = y[:, None] - y[None, :]
    inside = dx**2 + dy**2 <= kernel.radius**2 * (1 + 1e-12)
    if comp == "J":
        K = kernel.value(dx, dy)
    else:
        K = kernel.gradient(dx, dy)[0 if comp == "Jx" else 1]
    K = np.where(inside, K, 0.0)
    return (K @ f * grid.cell_area).reshape(grid.shape)


def brute_energy(kernel, grid, phi, pot):
    X, Y = grid.cell_centers()
    x, y, f = X.ravel(), Y.ravel(), phi.ravel()
    dx = x[:, None] - x[None, :]
    dy = y[:, None] - y[None, :]
    K = np.where(dx**2 + dy**2 <= kernel.radius**2 * (1 + 1e-12), kernel.value(dx, dy), 0.0)
    w = grid.cell_area
    pair = 0.25 * w * w * np.sum(K * (f[:, None] - f[None, :]) ** 2)
    return pair + w * np.sum(pot(f))


KERNEL = Kernel(delta=2.0)
GRID16 = GridSpec(16, 16)


@pytest.mark.parametrize("mode", ["direct", "fft_padded"])
def test_convolve_matches_brute_force(mode):
    phi = np.random.default_rng(0).standard_normal(GRID16.shape)
    plan = build_plan(KERNEL, GRID16, mode)
    ref = brute_convolve(KERNEL, GRID16, phi)
    np.testing.assert_allclose(convolve(plan, phi), ref, rtol=0, atol=1e-12)
    for comp, val in zip(("Jx", "Jy"), grad_kernel_convolve(plan, phi)):
        np.testing.assert_allclose(val, brute_convolve(KERNEL, GRID16, phi, comp), atol=1e-12)


@pytest.mark.parametrize("n,kernel", [(16, KERNEL), (33, Kernel("bump", 3.0)),
                                      (64, Kernel(delta=1.0)), (64, Kernel(delta=8.0))])
def test_modes_agree(n, kernel):
    g = GridSpec(n, n + 3)
    phi = np.random.default_rng(n).standard_normal(g.shape)
    d = build_plan(kernel, g, "direct")
    f = build_plan(kernel, g, "fft_padded")
    for which in ("J", "Jx", "Jy"):
        assert np.max(np.abs(d.apply(phi, which) - f.apply(phi, which))) <= 1e-12


def test_constant_field_gives_c_times_a():
    plan = build_plan(KERNEL, GridSpec(32, 32))
    a = precompute_a(plan)
    np.testing.assert_allclose(convolve(plan, np.full((32, 32), 0.7)), 0.7 * a, atol=1e-12)
    assert np.all(a >= 0)
    assert not a.flags.writeable


def test_single_cell_indicator_reproduces_stencil():
    g = GridSpec(32, 32)
    plan = build_plan(KERNEL, g, "fft_padded")
    st_ = kernel_stencil(KERNEL, g)
    m = (13, 17)
    phi = np.zeros(g.shape)
    phi[m] = 1.0 / g.cell_area
    out = convolve(plan, phi)
    ref = np.zeros(g.shape)
    for dj in range(-st_.rj, st_.rj + 1):
        for di in range(-st_.ri, st_.ri + 1):
            j, i = m[0] + dj, m[1] + di
            if 0 <= j < 32 and 0 <= i < 32:
                ref[j, i] = st_.J[dj + st_.rj, di + st_.ri]
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_interior_and_corner_a():
    g = GridSpec(64, 64)
    plan = build_plan(KERNEL, g)
    a = precompute_a(plan)
    st_ = kernel_stencil(KERNEL, g)
    full = st_.J.sum() * g.cell_area
    # interior cell farther than r_c = 8 from every wall
    assert a[32, 32] == pytest.approx(full, abs=1e-12)
    # corner: quarter-plane overlap; oracle is the same midpoint sum restricted to it
    X, Y = g.cell_centers()
    dx, dy = X - X[0, 0], Y - Y[0, 0]
    mask = dx**2 + dy**2 <= KERNEL.radius**2 * (1 + 1e-12)
    quarter = np.sum(np.where(mask, KERNEL.value(dx, dy), 0.0)) * g.cell_area
    assert a[0, 0] == pytest.approx(quarter, rel=1e-12)
    # and close to a quarter of the interior value; the corner cell center is
    # h/2 from both walls, so compare with the continuum Gaussian overlap
    s = KERNEL.delta * np.sqrt(2.0)
    cont = 24.0 * (0.5 * (1 + erf((g.hx / 2) / s))) ** 2
    assert a[0, 0] == pytest.approx(cont, rel=2e-2)
    assert abs(a[0, 0] / a[32, 32] - 0.25) < 0.1


def test_periodic_mode():
    g = GridSpec(16, 16, boundary_mode="periodic_test")
    for mode in ("direct", "fft_padded"):
        plan = build_plan(KERNEL, g, mode)
        a = precompute_a(plan)
        assert np.ptp(a) <= 1e-12
        np.testing.assert_allclose(convolve(plan, np.ones(g.shape)), a, atol=1e-12)
        gx, gy = grad_kernel_convolve(plan, np.ones(g.shape))
        assert np.max(np.abs(gx)) <= 1e-12 and np.max(np.abs(gy)) <= 1e-12


def test_grad_kernel_zero_input():
    plan = build_plan(KERNEL, GRID16)
    gx, gy = grad_kernel_convolve(plan, np.zeros(GRID16.shape))
    assert not gx.any() and not gy.any()


def test_grad_kernel_matches_difference_of_convolution():
    """Interior (grad J)*phi against centered differences of J*phi; error O(h^2)."""
    errs = []
    for n in (64, 128):
        g = GridSpec(n, n, boundary_mode="periodic_test")
        X, Y = g.cell_centers()
        phi = np.sin(2 * np.pi * X / 32) * np.cos(4 * np.pi * Y / 32)
        plan = build_plan(Kernel(delta=2.0, truncation=12.0), g)
        c = convolve(plan, phi)
        gx, _ = grad_kernel_convolve(plan, phi)
        fd = (np.roll(c, -1, axis=1) - np.roll(c, 1, axis=1)) / (2 * g.hx)
        errs.append(np.max(np.abs(gx - fd)))
    assert errs[1] < errs[0] / 3.5


def test_grid_mismatch():
    plan = build_plan(KERNEL, GRID16)
    with pytest.raises(GridMismatch):
        convolve(plan, np.zeros((8, 8)))


def test_energy_examples():
    g = GridSpec(16, 16)
    plan = build_plan(KERNEL, g)
    pot = Potential()
    assert nonlocal_energy(plan, np.ones(g.shape), pot) == pytest.approx(0.0, abs=1e-10)
    assert nonlocal_energy(plan, np.zeros(g.shape), pot) == pytest.approx(g.Lx * g.Ly, rel=1e-14)


@pytest.mark.parametrize("n", [8, 16])
def test_energy_identity_matches_double_sum(n):
    g = GridSpec(n, n, 16.0, 16.0)
    phi = np.random.default_rng(n).uniform(-1.2, 1.2, g.shape)
    plan = build_plan(KERNEL, g)
    ref = brute_energy(KERNEL, g, phi, Potential())
    assert nonlocal_energy(plan, phi, Potential()) == pytest.approx(ref, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 3.0))
def test_energy_positive_and_self_adjoint(seed, scale):
    rng = np.random.default_rng(seed)
    plan = build_plan(KERNEL, GRID16)
    phi = scale * rng.standard_normal(GRID16.shape)
    chi = rng.standard_normal(GRID16.shape)
    assert pairwise_energy(plan, phi) >= -1e-12
    assert nonlocal_energy(plan, phi, Potential()) >= 0
    lhs = np.vdot(convolve(plan, phi), chi)
    rhs = np.vdot(phi, convolve(plan, chi))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0) * 10


def test_export_stencil_csv(tmp_path):
    plan = build_plan(KERNEL, GRID16)
    path = tmp_path / "stencil.csv"
    export_stencil_csv(plan, path)
    rows = path.read_text().splitlines()
    st_ = plan.stencil
    assert rows[0] == "di,dj,J,dJdx,dJdy"
    assert len(rows) == 1 + (2 * st_.ri + 1) * (2 * st_.rj + 1)
