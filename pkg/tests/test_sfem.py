import math

import numpy as np
import pytest
import scipy.sparse as sp

from evolab import sfem
from evolab.errors import AccuracyError, DomainError, GeometryError
from evolab.mesh import TriangulatedSurface, build_icosphere

from conftest import eig_at, fem_at


def z(y):
    return y[..., 2]


def p2(y):
    return 1.5 * y[..., 2] ** 2 - 0.5


def one(y):
    return np.ones(y.shape[:-1])


def test_single_equilateral_triangle():
    v = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, math.sqrt(3) / 2, 0.0]])
    surf = TriangulatedSurface(v, np.array([[0, 1, 2]]), 0)
    fem = sfem.assemble(surf)
    area = math.sqrt(3) / 4
    mass = fem.mass.toarray()
    np.testing.assert_allclose(np.diag(mass), area / 6, rtol=1e-14)
    assert mass[0, 1] == pytest.approx(area / 12, rel=1e-14)
    # cotangent weights: every angle is 60 degrees
    k = fem.stiffness.toarray()
    assert k[0, 1] == pytest.approx(-0.5 / math.tan(math.pi / 3), rel=1e-14)


def test_degenerate_triangle_named():
    v = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [0.0, 1, 0]])
    surf = TriangulatedSurface(v, np.array([[0, 1, 3], [0, 1, 2]]), 0)
    with pytest.raises(GeometryError, match="triangle 1"):
        sfem.assemble(surf)


@pytest.mark.parametrize("level", range(4))
def test_matrix_invariants(level):
    fem = fem_at(level)
    area = sum(build_icosphere(level).face_geometry()[0])
    assert fem.mass.sum() == pytest.approx(area, abs=1e-12)
    assert np.max(np.abs(fem.stiffness @ np.ones(fem.n_dofs))) <= 1e-12
    assert abs(fem.mass - fem.mass.T).max() == 0
    assert abs(fem.stiffness - fem.stiffness.T).max() == 0


def test_level_zero_mass_sum():
    assert fem_at(0).mass.sum() == pytest.approx(9.5746, abs=1e-4)


def test_pencil_definiteness():
    fem = fem_at(2)
    assert np.linalg.eigvalsh(fem.mass.toarray()).min() > 0
    k = np.linalg.eigvalsh(fem.stiffness.toarray())
    assert k.min() > -1e-12
    assert np.sum(k < 1e-10) == 1


def test_solver_config_validation():
    with pytest.raises(DomainError):
        sfem.SparseSolverConfig(rel_tol=1e-3)
    with pytest.raises(DomainError):
        sfem.SparseSolverConfig(method="gauss")


@pytest.mark.parametrize("method", ["cg", "direct"])
def test_solver_paths_agree(method):
    fem = fem_at(4)
    b = sfem.load_vector(fem, z)
    cfg = sfem.SparseSolverConfig(method=method, dense_below=0)
    x = sfem.solve_spd(fem.energy_matrix, b, cfg)
    ref = sfem.solve_spd(fem.energy_matrix, b, sfem.SparseSolverConfig(method="direct"))
    np.testing.assert_allclose(x, ref, atol=1e-8)
    assert np.linalg.norm(fem.energy_matrix @ x - b) <= 1e-9 * np.linalg.norm(b)


def test_project_constants():
    fem = fem_at(3)
    np.testing.assert_allclose(sfem.l2_project(fem, one).coefficients, 1.0, atol=1e-10)


def test_project_residual():
    fem = fem_at(3)
    c = sfem.l2_project(fem, z).coefficients
    b = sfem.load_vector(fem, z)
    assert np.linalg.norm(b - fem.mass @ c) <= 1e-10 * np.linalg.norm(b)
    assert np.max(np.abs(c - z(fem.mesh.vertices))) > 1e-6


def test_projection_idempotent(rng):
    fem = fem_at(2)
    g = sfem.GridFunction(rng.standard_normal(fem.n_dofs), fem)
    c = sfem.l2_project(fem, g.lift).coefficients
    np.testing.assert_allclose(c, g.coefficients, atol=1e-10)


def test_lift_reproduces_vertex_values():
    fem = fem_at(2)
    g = sfem.interpolate(fem, z)
    np.testing.assert_allclose(g.lift(fem.mesh.vertices), z(fem.mesh.vertices), atol=1e-12)


def test_grid_function_length_checked():
    with pytest.raises(DomainError):
        sfem.GridFunction(np.zeros(3), fem_at(0))


def test_elliptic_constant_exact():
    fem = fem_at(3)
    np.testing.assert_allclose(sfem.elliptic_solve(fem, one).coefficients, 1.0, atol=1e-10)


@pytest.mark.parametrize("f, u, scale", [(z, z, 3.0), (p2, p2, 7.0)])
def test_elliptic_eigenfunctions_converge(f, u, scale):
    errs = []
    for level in range(1, 5):
        fem = fem_at(level)
        c = sfem.elliptic_solve(fem, lambda y: scale * f(y))
        errs.append(sfem.lifted_error_l2(fem, c, u))
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(1.7 < r < 2.3 for r in rates)


def test_galerkin_orthogonality():
    fem = fem_at(3)
    c = sfem.elliptic_solve(fem, lambda y: 3 * z(y))
    b = sfem.load_vector(fem, lambda y: 3 * z(y))
    assert np.linalg.norm(fem.energy_matrix @ c.coefficients - b) <= 1e-9 * np.linalg.norm(b)


def test_parabolic_step_constants_and_domain():
    fem = fem_at(2)
    c = np.full(fem.n_dofs, 2.5)
    np.testing.assert_allclose(sfem.parabolic_step(fem, 0.1, c).coefficients, 2.5, atol=1e-12)
    with pytest.raises(DomainError):
        sfem.parabolic_step(fem, 0.0, c)


def test_parabolic_step_contracts(rng):
    fem = fem_at(2)
    c = rng.standard_normal(fem.n_dofs)
    for dt in (1e-3, 0.1, 10.0):
        n = sfem.parabolic_step(fem, dt, c).coefficients
        assert fem.m_norm(n) <= fem.m_norm(c)
        assert fem.energy_norm(n) <= fem.energy_norm(c)


def test_parabolic_step_on_eigenvector():
    fem, eig = fem_at(2), eig_at(2)
    v, mu = eig.vectors[:, 5], eig.values[5]
    out = sfem.parabolic_step(fem, 0.05, v).coefficients
    np.testing.assert_allclose(out, v / (1 + 0.05 * mu), atol=1e-10)


@pytest.mark.parametrize("level", range(4))
def test_eigen_structure(level):
    fem, eig = fem_at(level), eig_at(level)
    assert abs(eig.values[0]) <= 1e-10
    assert np.all(np.diff(eig.values) >= -1e-12)
    v = eig.vectors
    np.testing.assert_allclose(v.T @ (fem.mass @ v), np.eye(fem.n_dofs), atol=1e-9)


def test_level_three_clusters():
    vals = eig_at(3).values
    np.testing.assert_allclose(vals[1:4], 2.0, rtol=0.01)
    np.testing.assert_allclose(vals[4:9], 6.0, rtol=0.02)
    assert vals[9] > 10


def test_clusters_converge():
    devs = []
    for level in range(1, 5):
        vals = sfem.generalized_eigenpairs(fem_at(level), count=9).values
        devs.append((abs(vals[1:4] - 2).max(), abs(vals[4:9] - 6).max()))
    for a, b in zip(devs, devs[1:]):
        assert 3 < a[0] / b[0] < 5 and 3 < a[1] / b[1] < 5


def test_iterative_eigen_path_matches_dense():
    fem = fem_at(3)
    dense = eig_at(3).values[:9]
    it = sfem.generalized_eigenpairs(fem, count=9, dense_limit=10).values
    np.testing.assert_allclose(it, dense, atol=1e-9)


def test_fractional_norm_identities(rng):
    fem, eig = fem_at(2), eig_at(2)
    c = rng.standard_normal(fem.n_dofs)
    assert sfem.discrete_fractional_norm(fem, eig, 0.0, c) == pytest.approx(fem.m_norm(c), rel=1e-10)
    v = eig.vectors[:, 7]
    assert sfem.discrete_fractional_norm(fem, eig, 0.5, v) == pytest.approx((1 + eig.values[7]) ** 0.5, rel=1e-10)
    direct = sp.linalg.spsolve(fem.mass.tocsc(), fem.energy_matrix @ c)
    assert sfem.discrete_fractional_norm(fem, eig, 1.0, c) == pytest.approx(fem.m_norm(direct), rel=1e-8)
    with pytest.raises(DomainError):
        sfem.discrete_fractional_norm(fem, eig, 1.5, c)


def test_fractional_norm_truncated_basis(rng):
    fem = fem_at(2)
    part = sfem.generalized_eigenpairs(fem, count=10)
    with pytest.raises(AccuracyError):
        sfem.discrete_fractional_norm(fem, part, 0.5, rng.standard_normal(fem.n_dofs))


def test_lifted_error_constants():
    fem = fem_at(3)
    assert sfem.lifted_error_l2(fem, sfem.interpolate(fem, one), one) <= 1e-12


def test_lifted_interpolation_rate_and_weighting():
    errs, rel = [], []
    for level in range(1, 5):
        fem = fem_at(level)
        c = sfem.interpolate(fem, z)
        w = sfem.lifted_error_l2(fem, c, z)
        u = sfem.lifted_error_l2(fem, c, z, weighted=False)
        errs.append(w)
        rel.append(abs(w - u) / w)
    assert all(1.8 < math.log2(a / b) < 2.2 for a, b in zip(errs, errs[1:]))
    assert max(rel) < 0.2
    assert all(b < a for a, b in zip(rel, rel[1:]))


def test_lifted_energy_interpolation_rate():
    grad = lambda y: np.broadcast_to([0.0, 0.0, 1.0], y.shape)
    errs = [sfem.lifted_error_energy(fem_at(lv), sfem.interpolate(fem_at(lv), z), z, grad) for lv in range(1, 5)]
    assert all(0.85 < math.log2(a / b) < 1.15 for a, b in zip(errs, errs[1:]))


def test_inverse_estimate_constant():
    vals = [sfem.inverse_estimate_constant(fem_at(lv)) for lv in range(1, 5)]
    assert max(vals) / min(vals) < 2
    fem0 = fem_at(0)
    exact = sfem.inverse_estimate_constant(fem0, eig_at(0))
    assert exact == pytest.approx(sfem.inverse_estimate_constant(fem0), rel=1e-10)
    from evolab.mesh import mesh_metrics

    assert exact >= mesh_metrics(fem0.mesh).h ** 2
