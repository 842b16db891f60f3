import numpy as np
import pytest

from chb import mac
from chb.brinkman import assemble_capillary_force, momentum_residual, solve_brinkman
from chb.domain import GridSpec, VelocityField
from chb.errors import GridMismatch, SolverDiverged


def rand_vel(g, rng, no_slip=True):
    u = VelocityField(rng.standard_normal(g.xface_shape), rng.standard_normal(g.yface_shape))
    return mac.zero_boundary(u) if no_slip else u


def operator_matrix(fn, n_in, n_out, pack, unpack):
    cols = []
    for k in range(n_in):
        e = np.zeros(n_in)
        e[k] = 1.0
        cols.append(pack(fn(unpack(e))))
    return np.array(cols).T


G = GridSpec(6, 5, 3.0, 2.5)


def test_grad_is_minus_div_transpose():
    rng = np.random.default_rng(0)
    p = rng.standard_normal(G.shape)
    u = rand_vel(G, rng, no_slip=False)
    lhs = mac.grad(p, G).dot(u)
    rhs = -float(np.vdot(p, mac.div(mac.zero_boundary(u), G)))
    assert lhs == pytest.approx(rhs, rel=1e-13)


def test_face_average_transpose():
    rng = np.random.default_rng(1)
    q = rng.standard_normal(G.shape)
    v = rand_vel(G, rng, no_slip=False)
    assert mac.face_average(q, G).dot(v) == pytest.approx(
        float(np.vdot(q, mac.face_average_T(v, G))), rel=1e-13)


def test_laplacian_loop_oracle():
    rng = np.random.default_rng(2)
    q = rng.standard_normal(G.shape)
    ny, nx = G.shape
    ref = np.zeros_like(q)
    for j in range(ny):
        for i in range(nx):
            s = 0.0
            for dj, di, h in ((0, 1, G.hx), (0, -1, G.hx), (1, 0, G.hy), (-1, 0, G.hy)):
                jj, ii = j + dj, i + di
                if 0 <= jj < ny and 0 <= ii < nx:
                    s += (q[jj, ii] - q[j, i]) / h**2
            ref[j, i] = s
    np.testing.assert_allclose(mac.laplacian_neumann(q, G), ref, atol=1e-12)
    assert mac.grad_sq_neumann(q, G) == pytest.approx(
        -G.cell_area * float(np.vdot(q, mac.laplacian_neumann(q, G))), rel=1e-12)


def test_neumann_solvers_invert_operator():
    rng = np.random.default_rng(3)
    rhs = rng.standard_normal(G.shape)
    q = mac.solve_neumann_helmholtz(rhs, 0.3, G)
    np.testing.assert_allclose(q - 0.3 * mac.laplacian_neumann(q, G), rhs, atol=1e-12)
    p = mac.solve_neumann_poisson(rhs, G)
    np.testing.assert_allclose(-mac.laplacian_neumann(p, G), rhs - rhs.mean(), atol=1e-11)
    assert abs(p.mean()) < 1e-13


def test_velocity_operator_energy_and_symmetry():
    rng = np.random.default_rng(4)
    nu = 0.7
    for _ in range(3):
        u, w = rand_vel(G, rng), rand_vel(G, rng)
        Au = mac.velocity_operator(u, nu, G)
        energy = G.cell_area * Au.dot(u)
        ident = nu * mac.velocity_grad_sq(u, G) + G.cell_area * u.dot(u)
        assert energy == pytest.approx(ident, rel=1e-12)
        assert Au.dot(w) == pytest.approx(mac.velocity_operator(w, nu, G).dot(u), rel=1e-12)


def test_velocity_helmholtz_is_exact_inverse():
    rng = np.random.default_rng(5)
    f = rand_vel(G, rng)
    u = mac.solve_velocity_helmholtz(f, 0.4, G)
    r = mac.velocity_operator(u, 0.4, G) - f
    assert r.max_abs() <= 1e-12
    assert not u.x[:, 0].any() and not u.y[-1].any()


def test_vector_laplacian_dense_oracle():
    """Dense matrix of the ghost-reflection stencil built by loops."""
    g = GridSpec(4, 4, 1.0, 2.0)
    ny, nx = g.shape
    nxf = ny * (nx - 1)

    def unpack(e):
        u = VelocityField.zeros(g)
        u.x[:, 1:-1] = e[:nxf].reshape(ny, nx - 1)
        u.y[1:-1, :] = e[nxf:].reshape(ny - 1, nx)
        return u

    def pack(u):
        return np.concatenate([u.x[:, 1:-1].ravel(), u.y[1:-1, :].ravel()])

    L = operator_matrix(lambda u: mac.vector_laplacian(u, g), pack(VelocityField.zeros(g)).size,
                        None, pack, unpack)
    ref = np.zeros_like(L)
    hx2, hy2 = g.hx**2, g.hy**2
    for j in range(ny):  # x faces: interior columns 1..nx-1
        for i in range(1, nx):
            r = j * (nx - 1) + (i - 1)
            ref[r, r] = -2 / hx2 - 2 / hy2
            for ii in (i - 1, i + 1):
                if 1 <= ii <= nx - 1:
                    ref[r, j * (nx - 1) + ii - 1] += 1 / hx2
            for jj in (j - 1, j + 1):
                if 0 <= jj < ny:
                    ref[r, jj * (nx - 1) + i - 1] += 1 / hy2
                else:
                    ref[r, r] -= 1 / hy2  # reflected ghost
    for j in range(1, ny):  # y faces: interior rows 1..ny-1
        for i in range(nx):
            r = nxf + (j - 1) * nx + i
            ref[r, r] = -2 / hx2 - 2 / hy2
            for jj in (j - 1, j + 1):
                if 1 <= jj <= ny - 1:
                    ref[r, nxf + (jj - 1) * nx + i] += 1 / hy2
            for ii in (i - 1, i + 1):
                if 0 <= ii < nx:
                    ref[r, nxf + (j - 1) * nx + ii] += 1 / hx2
                else:
                    ref[r, r] -= 1 / hx2
    np.testing.assert_allclose(L, ref, atol=1e-12)


def test_zero_force():
    g = GridSpec(16, 16)
    sol = solve_brinkman(VelocityField.zeros(g), 1.0, g)
    assert not sol.u.x.any() and not sol.u.y.any() and not sol.pi.any()


def test_gradient_force_is_absorbed_by_pressure():
    g = GridSpec(32, 32, 1.0, 1.0)
    X, Y = g.cell_centers()
    q = np.cos(np.pi * X) * np.sin(2 * Y) + X**2
    cg_tol = 1e-12
    sol = solve_brinkman(mac.grad(q, g), 1.0, g, tol=cg_tol)
    assert np.sqrt(sol.u.dot(sol.u) * g.cell_area) <= 10 * cg_tol
    np.testing.assert_allclose(sol.pi, q - q.mean(), atol=1e-9)


def mms_force(g, nu):
    ax, ay = np.pi / g.Lx, np.pi / g.Ly

    def ux(x, y):
        return ay * np.sin(ax * x) ** 2 * np.sin(2 * ay * y)

    def uy(x, y):
        return -ax * np.sin(2 * ax * x) * np.sin(ay * y) ** 2

    def lap_ux(x, y):
        return ay * np.sin(2 * ay * y) * (2 * ax**2 * np.cos(2 * ax * x) - 4 * ay**2 * np.sin(ax * x) ** 2)

    def lap_uy(x, y):
        return -ax * np.sin(2 * ax * x) * (2 * ay**2 * np.cos(2 * ay * y) - 4 * ax**2 * np.sin(ay * y) ** 2)

    # pressure pi = cos(ax x) cos(ay y)
    X, Y = g.xface_centers()
    X2, Y2 = g.yface_centers()
    f = VelocityField(-nu * lap_ux(X, Y) + ux(X, Y) - ax * np.sin(ax * X) * np.cos(ay * Y),
                      -nu * lap_uy(X2, Y2) + uy(X2, Y2) - ay * np.cos(ax * X2) * np.sin(ay * Y2))
    return f, VelocityField(ux(X, Y), uy(X2, Y2))


def brinkman_mms_orders(sizes=(16, 32, 64), nu=1.0):
    errs = []
    for n in sizes:
        g = GridSpec(n, n, 1.0, 1.0)
        f, ue = mms_force(g, nu)
        sol = solve_brinkman(f, nu, g)
        e = mac.zero_boundary(sol.u - ue)
        errs.append(np.sqrt(e.dot(e) * g.cell_area))
    errs = np.array(errs)
    return errs, np.log2(errs[:-1] / errs[1:])


def test_mms_second_order():
    errs, orders = brinkman_mms_orders()
    assert np.all(orders >= 1.9)


def test_solution_invariants():
    g = GridSpec(32, 24, 2.0, 1.5)
    rng = np.random.default_rng(6)
    f = rand_vel(g, rng, no_slip=False)
    sol = solve_brinkman(f, 0.5, g, tol=1e-12, div_tol=1e-10)
    assert sol.residual <= 1e-10
    assert np.max(np.abs(mac.div(sol.u, g))) <= 1e-10
    assert abs(sol.pi.mean()) <= 1e-14
    assert momentum_residual(sol, f, 0.5, g) <= 1e-12 * (1 + f.max_abs()) * 10
    assert not sol.u.x[:, 0].any() and not sol.u.x[:, -1].any()
    # uniqueness from a different initial pressure iterate
    sol2 = solve_brinkman(f, 0.5, g, p0=rng.standard_normal(g.shape))
    u_scale = sol.u.max_abs()
    assert (sol.u - sol2.u).max_abs() <= 10 * 1e-12 * max(u_scale, 1.0) * 100
    # deterministic
    sol3 = solve_brinkman(f, 0.5, g)
    assert np.array_equal(sol.u.x, sol3.u.x) and np.array_equal(sol.pi, sol3.pi)


def test_iteration_cap_raises():
    g = GridSpec(16, 16)
    f = rand_vel(g, np.random.default_rng(7))
    with pytest.raises(SolverDiverged):
        solve_brinkman(f, 1.0, g, max_iters=1)


def test_capillary_force_loop_oracle():
    g = GridSpec(8, 8)
    rng = np.random.default_rng(8)
    mu, phi = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    f = assemble_capillary_force(mu, phi, g)
    ref = VelocityField.zeros(g)
    for j in range(8):
        for i in range(1, 8):
            ref.x[j, i] = 0.5 * (mu[j, i] + mu[j, i - 1]) * (phi[j, i] - phi[j, i - 1]) / g.hx
    for j in range(1, 8):
        for i in range(8):
            ref.y[j, i] = 0.5 * (mu[j, i] + mu[j - 1, i]) * (phi[j, i] - phi[j - 1, i]) / g.hy
    np.testing.assert_allclose(f.x, ref.x, atol=1e-13)
    np.testing.assert_allclose(f.y, ref.y, atol=1e-13)


def test_capillary_force_special_cases():
    g = GridSpec(8, 8)
    rng = np.random.default_rng(9)
    mu, phi = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    f = assemble_capillary_force(mu, np.full(g.shape, 0.4), g)
    assert not f.x.any() and not f.y.any()
    # constant mu: m grad phi is orthogonal to discretely divergence-free fields
    psi = np.zeros((9, 9))
    psi[1:-1, 1:-1] = rng.standard_normal((7, 7))
    from chb.presets import stream_velocity
    w = stream_velocity(g, psi)
    assert np.max(np.abs(mac.div(w, g))) < 1e-12
    f = assemble_capillary_force(np.full(g.shape, 2.5), phi, g)
    assert abs(f.dot(w)) <= 1e-12 * np.sqrt(f.dot(f) * w.dot(w))
    with pytest.raises(GridMismatch):
        assemble_capillary_force(mu[:4], phi, g)


def test_periodic_grid_rejected():
    g = GridSpec(8, 8, boundary_mode="periodic_test")
    with pytest.raises(ValueError):
        solve_brinkman(VelocityField.zeros(g), 1.0, g)
