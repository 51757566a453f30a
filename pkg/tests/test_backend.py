"""Compiled kernel vs NumPy fallback vs composed reference ops."""

import numpy as np
import pytest

from mcot import backend
from mcot._kernel_np import run_block as np_run_block
from mcot.chains import CostMatrix
from mcot.coupling import ConditionalKernel, OccupancyCoupling, alpha_cap, v_cap
from mcot.solver import (
    SolverState,
    estimate_dual_gradients,
    estimate_primal_gradients,
    update_dual,
    update_primal,
)

compiled = pytest.importorskip("mcot._kernel", reason="compiled kernel not built")


def random_problem(rng, nx, ny, b):
    gamma = float(rng.uniform(0.3, 0.95))
    state = dict(
        mu=rng.dirichlet(np.ones(nx * ny * nx * ny)).reshape(nx, ny, nx, ny),
        lam_x=rng.dirichlet(np.ones(ny), size=nx),
        lam_y=rng.dirichlet(np.ones(nx), size=ny),
        ax=rng.uniform(-1, 1, (nx, nx, ny)) * alpha_cap(gamma),
        ay=rng.uniform(-1, 1, (nx, ny, ny)) * alpha_cap(gamma),
        v=rng.uniform(-1, 1, (nx, ny)) * v_cap(gamma),
    )
    samples = dict(
        xs=rng.integers(0, nx, (1, b)), xps=rng.integers(0, nx, (1, b)),
        ys=rng.integers(0, ny, (1, b)), yps=rng.integers(0, ny, (1, b)),
    )
    rates = dict(eta=float(rng.uniform(0.01, 3)), eta_x=float(rng.uniform(0.01, 3)),
                 eta_y=float(rng.uniform(0.01, 3)), bx=float(rng.uniform(0.01, 1)),
                 by=float(rng.uniform(0.01, 1)), bv=float(rng.uniform(0.01, 1)))
    cost = rng.random((nx, ny))
    return gamma, state, samples, rates, cost


def call(impl, gamma, state, samples, rates, cost, x0=0, y0=0, blocks=1):
    arrs = {k: np.ascontiguousarray(v.copy()) for k, v in state.items()}
    sums = dict(mu_sum=np.zeros_like(arrs["mu"]), lx_sum=np.zeros_like(arrs["lam_x"]),
                ly_sum=np.zeros_like(arrs["lam_y"]))
    L = samples["xs"].shape[0]
    flag = impl(arrs["mu"], arrs["lam_x"], arrs["lam_y"], arrs["ax"], arrs["ay"], arrs["v"],
                sums["mu_sum"], sums["lx_sum"], sums["ly_sum"],
                np.ascontiguousarray(cost), x0, y0, gamma,
                np.full(L, rates["eta"]), np.full(L, rates["eta_x"]), np.full(L, rates["eta_y"]),
                rates["bx"], rates["by"], rates["bv"], alpha_cap(gamma), v_cap(gamma),
                samples["xs"], samples["xps"], samples["ys"], samples["yps"])
    assert flag == -1
    return arrs, sums


class TestBackendEquivalence:
    def test_single_step_matches_numpy(self):
        rng = np.random.default_rng(0)
        for _ in range(40):
            nx, ny, b = int(rng.integers(2, 5)), int(rng.integers(2, 5)), int(rng.integers(1, 4))
            problem = random_problem(rng, nx, ny, b)
            a1, s1 = call(np_run_block, *problem)
            a2, s2 = call(compiled.run_block, *problem)
            for key in a1:
                np.testing.assert_allclose(np.asarray(a2[key]), a1[key], atol=1e-12, err_msg=key)
            for key in s1:
                np.testing.assert_allclose(np.asarray(s2[key]), s1[key], atol=1e-12, err_msg=key)

    def test_single_step_matches_composed_ops(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            nx, ny, b = int(rng.integers(2, 4)), int(rng.integers(2, 4)), int(rng.integers(1, 3))
            gamma, st, samples, rates, cost = random_problem(rng, nx, ny, b)
            state = SolverState.initial(nx, ny)
            state.mu = OccupancyCoupling(st["mu"].copy())
            state.lambda_x = ConditionalKernel(st["lam_x"].copy())
            state.lambda_y = ConditionalKernel(st["lam_y"].copy())
            state.duals.alpha_x = st["ax"].copy()
            state.duals.alpha_y = st["ay"].copy()
            state.duals.v = st["v"].copy()
            cm = CostMatrix(cost)
            nu0 = np.zeros((nx, ny)); nu0[0, 0] = 1.0
            sx = (samples["xs"][0], samples["xps"][0])
            sy = (samples["ys"][0], samples["yps"][0])
            g_mu, g_lx, g_ly = estimate_primal_gradients(state, cm, sx, sy, gamma)
            g_ax, g_ay, g_v = estimate_dual_gradients(state, sx, sy, nu0, gamma)
            update_primal(state, g_mu, g_lx, g_ly, rates["eta"], rates["eta_x"], rates["eta_y"])
            update_dual(state, g_ax, g_ay, g_v, rates["bx"], rates["by"], rates["bv"], gamma)
            arrs, _ = call(compiled.run_block, gamma, st, samples, rates, cost)
            np.testing.assert_allclose(np.asarray(arrs["mu"]), state.mu.values, atol=1e-12)
            np.testing.assert_allclose(np.asarray(arrs["lam_x"]), state.lambda_x.values, atol=1e-12)
            np.testing.assert_allclose(np.asarray(arrs["lam_y"]), state.lambda_y.values, atol=1e-12)
            np.testing.assert_allclose(np.asarray(arrs["ax"]), state.duals.alpha_x, atol=1e-12)
            np.testing.assert_allclose(np.asarray(arrs["ay"]), state.duals.alpha_y, atol=1e-12)
            np.testing.assert_allclose(np.asarray(arrs["v"]), state.duals.v, atol=1e-12)

    def test_multi_step_trajectory_agreement(self):
        rng = np.random.default_rng(2)
        nx, ny, b, L = 3, 4, 2, 300
        gamma = 0.85
        state = dict(
            mu=rng.dirichlet(np.ones(nx * ny * nx * ny)).reshape(nx, ny, nx, ny),
            lam_x=rng.dirichlet(np.ones(ny), size=nx),
            lam_y=rng.dirichlet(np.ones(nx), size=ny),
            ax=np.zeros((nx, nx, ny)), ay=np.zeros((nx, ny, ny)), v=np.zeros((nx, ny)),
        )
        samples = dict(
            xs=rng.integers(0, nx, (L, b)), xps=rng.integers(0, nx, (L, b)),
            ys=rng.integers(0, ny, (L, b)), yps=rng.integers(0, ny, (L, b)),
        )
        rates = dict(eta=0.5, eta_x=0.5, eta_y=0.5, bx=0.3, by=0.3, bv=0.3)
        cost = rng.random((nx, ny))
        a1, s1 = call(np_run_block, gamma, state, samples, rates, cost)
        a2, s2 = call(compiled.run_block, gamma, state, samples, rates, cost)
        np.testing.assert_allclose(np.asarray(a2["mu"]), a1["mu"], atol=1e-9)
        np.testing.assert_allclose(np.asarray(s2["mu_sum"]) / L, s1["mu_sum"] / L, atol=1e-9)

    def test_extreme_rates_stay_finite(self):
        # huge steps push weights through the slow exponent path
        rng = np.random.default_rng(3)
        gamma = 0.99
        state = dict(
            mu=rng.dirichlet(np.ones(16)).reshape(2, 2, 2, 2),
            lam_x=rng.dirichlet(np.ones(2), size=2),
            lam_y=rng.dirichlet(np.ones(2), size=2),
            ax=rng.uniform(-1, 1, (2, 2, 2)) * alpha_cap(gamma),
            ay=rng.uniform(-1, 1, (2, 2, 2)) * alpha_cap(gamma),
            v=rng.uniform(-1, 1, (2, 2)) * v_cap(gamma),
        )
        samples = dict(xs=np.zeros((200, 1), dtype=np.int64), xps=np.ones((200, 1), dtype=np.int64),
                       ys=np.zeros((200, 1), dtype=np.int64), yps=np.ones((200, 1), dtype=np.int64))
        rates = dict(eta=40.0, eta_x=40.0, eta_y=40.0, bx=0.5, by=0.5, bv=0.5)
        cost = rng.random((2, 2))
        for impl in (np_run_block, compiled.run_block):
            arrs, _ = call(impl, gamma, state, samples, rates, cost)
            assert np.isfinite(np.asarray(arrs["mu"])).all()
            assert abs(np.asarray(arrs["mu"]).sum() - 1.0) <= 1e-9
