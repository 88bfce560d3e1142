import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evolab import operators as ops
from evolab import timestep as ts
from evolab.errors import DomainError


def test_scalar_step():
    y = ts.backward_euler_step(ops.SpectralOperator.diagonal([1.0]), 0.1, np.array([1.0]))
    assert y[0] == pytest.approx(1 / 1.1, rel=1e-15)


def test_zero_operator_step_is_identity(rng):
    x = rng.standard_normal(4)
    np.testing.assert_array_equal(ts.backward_euler_step(ops.SpectralOperator.diagonal(np.zeros(4)), 0.3, x), x)


def test_step_rejects_nonpositive_dt():
    with pytest.raises(DomainError):
        ts.backward_euler_step(ops.SpectralOperator.diagonal([1.0]), 0.0, np.ones(1))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(1e-4, 10))
def test_step_is_contraction(seed, dt):
    op = ops.random_spd(8, seed)
    x = np.random.default_rng(seed).standard_normal(8)
    assert np.linalg.norm(ts.backward_euler_step(op, dt, x)) <= np.linalg.norm(x)


def test_step_matches_dense_solve(rng):
    op = ops.random_spd(6, 8)
    x = rng.standard_normal(6)
    np.testing.assert_allclose(
        ts.backward_euler_step(op, 0.2, x), np.linalg.solve(np.eye(6) + 0.2 * op.matrix(), x), atol=1e-12
    )


def test_time_grid():
    g = ts.TimeGrid(1.0, 8)
    assert g.dt == 0.125 and g.dt * g.N == g.T
    assert g.steps_to(0.0) == 0
    assert g.steps_to(g.dt / 2) == 1
    assert g.steps_to(g.dt) == 1
    assert g.steps_to(3 * g.dt) == 3
    assert g.steps_to(1.0) == 8
    with pytest.raises(DomainError):
        g.steps_to(1.5)
    with pytest.raises(DomainError):
        ts.TimeGrid(1.0, 0)


def test_steps_to_robust_to_rounding():
    g = ts.TimeGrid(0.7, 10)
    for n in range(1, 11):
        assert g.steps_to(g.time(n)) == n


def test_evolve_branches(rng):
    op = ops.random_spd(5, 1)
    grid = ts.TimeGrid(1.0, 10)
    x = rng.standard_normal(5)
    np.testing.assert_array_equal(ts.evolve_fully_discrete(op, grid, x, 0.0), x)
    mid = ts.evolve_fully_discrete(op, grid, x, grid.dt / 2)
    np.testing.assert_array_equal(mid, ts.evolve_fully_discrete(op, grid, x, grid.dt))
    y = x
    for _ in range(10):
        y = ts.backward_euler_step(op, grid.dt, y)
    np.testing.assert_array_equal(ts.evolve_fully_discrete(op, grid, x, 1.0), y)
    with pytest.raises(DomainError):
        ts.evolve_fully_discrete(op, grid, x, 1.01)


def test_evolve_is_contraction(rng):
    op = ops.random_spd(6, 4)
    grid = ts.TimeGrid(2.0, 16)
    x = rng.standard_normal(6)
    for t in np.linspace(0, 2, 33):
        assert np.linalg.norm(ts.evolve_fully_discrete(op, grid, x, t)) <= np.linalg.norm(x) + 1e-15


def test_defect_closed_forms():
    assert ts.defect_sup_scalar(1, 1.0, "one", [1.0]) == pytest.approx(0.13212055882855767, rel=1e-14)
    assert ts.defect_sup_scalar(2, 0.5, "one", [1.0]) == pytest.approx(0.07656500327300209, rel=1e-13)


def test_defect_weights_are_rescalings():
    lam = np.array([3.0])
    dt, n = 0.1, 4
    f = abs(ts.defect(n, lam * dt)[0])
    assert ts.defect_sup_scalar(n, dt, "shift", lam) == pytest.approx(f / (dt * 3.0))
    assert ts.defect_sup_scalar(n, dt, "inv_time", lam) == pytest.approx(f * n)
    assert ts.defect_sup_scalar(n, dt, "half", lam) == pytest.approx(f * math.sqrt(3.0 * n * dt))


def test_defect_rejects_empty_grid_and_unknown_weight():
    with pytest.raises(DomainError):
        ts.defect_sup_scalar(1, 0.1, "one", [])
    with pytest.raises(DomainError):
        ts.defect_sup_scalar(1, 0.1, "bogus", [1.0])


def test_defect_bounded_by_one():
    table = ts.defect_sup_table(1024, 1.0, "one", ts.lambda_grid())
    assert np.all(table <= 1.0)


def test_lambda_grid_density():
    g = ts.lambda_grid()
    assert g.size == 6 * 512 + 1
    assert g[0] == pytest.approx(1e-3) and g[-1] == pytest.approx(1e3)


def test_inv_time_brute_force():
    # independent brute force of n |F_n(s)| on a smaller grid
    s = np.logspace(-2, 2, 401)
    n = np.arange(1, 65)
    brute = np.max(n[:, None] * np.abs((1 + s[None, :]) ** (-n[:, None].astype(float)) - np.exp(-np.outer(n, s))))
    assert np.max(ts.defect_sup_table(64, 1.0, "inv_time", s)) == pytest.approx(brute, rel=1e-12)


def test_shift_weight_bounded_for_all_n():
    table = ts.defect_sup_table(1024, 1.0 / 1024, "shift", ts.lambda_grid(1e-3, 1e6))
    assert np.all(np.isfinite(table)) and table.max() < 1.0


def test_theta_rho_weight_endpoints():
    assert ts.theta_rho_weight(2.0, 0.0) == (1.0, 0.0)
    assert ts.theta_rho_weight(2.0, 2.0) == (0.0, -1.0)
