"""Stochastic primal-dual solver for the occupancy-coupling LP.

Each iteration draws one transition pair per chain (per batch element),
forms gradient estimates of the Lagrangian, moves the coupling and the
sampled conditional rows by normalized exponentiated steps, and moves the
multipliers by gradient-ascent steps clipped to their sup-norm balls.
The reported solution is the average of the post-update primal iterates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import backend
from .chains import CostMatrix, MarkovChain, OccupancyTable, TransitionSampler, exact_occupancy
from .coupling import (
    ConditionalKernel,
    ConstraintResiduals,
    DualVariables,
    OccupancyCoupling,
    alpha_cap,
    dual_certificate,
    residuals,
    v_cap,
)

# Calibrated defaults for the practical learning-rate preset.
DEFAULT_ETA0 = 0.7
DEFAULT_DECAY_A = 0.001
DEFAULT_BETA0 = 0.3


class Rates(NamedTuple):
    eta: float
    eta_x: float
    eta_y: float
    beta_x: float
    beta_y: float
    beta: float


def theory_rates(nx: int, ny: int, gamma: float, K: int) -> Rates:
    """Constant learning rates with the 1/sqrt(K) guarantee.

    eta    = sqrt(log(nx^2 ny^2) (1-gamma)^2 / K)
    eta_x  = sqrt(nx log(ny) (1-gamma)^2 / K)      (eta_y symmetric)
    beta_x = sqrt(nx^2 ny / ((1-gamma)^2 K))       (beta_y symmetric)
    beta   = sqrt(nx ny / ((1-gamma)^2 K))
    """
    if K < 1:
        raise ValueError("iteration count must be positive")
    one = 1.0 - gamma
    return Rates(
        eta=math.sqrt(math.log(nx * nx * ny * ny) * one * one / K),
        eta_x=math.sqrt(nx * math.log(ny) * one * one / K),
        eta_y=math.sqrt(ny * math.log(nx) * one * one / K),
        beta_x=math.sqrt(nx * nx * ny / (one * one * K)),
        beta_y=math.sqrt(nx * ny * ny / (one * one * K)),
        beta=math.sqrt(nx * ny / (one * one * K)),
    )


@dataclass
class SolverConfig:
    """Run parameters.

    ``rate_preset`` selects the schedule: "theory" uses the six constant
    rates above; "practical" shares one decaying rate eta_k =
    eta0 / sqrt(1 + decay_a * k) across the primal variables and one
    constant rate beta0 across the duals.
    """

    gamma: float
    iterations: int
    batch_size: int = 1
    seed: int = 0
    rate_preset: str = "practical"
    eta0: float = DEFAULT_ETA0
    decay_a: float = DEFAULT_DECAY_A
    beta0: float = DEFAULT_BETA0
    snapshot_every: int = 1000
    average_last_half: bool = False

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be positive")
        if self.rate_preset not in ("theory", "practical"):
            raise ValueError(f"unknown rate preset {self.rate_preset!r}")
        if min(self.eta0, self.beta0) <= 0.0 or self.decay_a < 0.0:
            raise ValueError("learning-rate parameters must be positive")


@dataclass
class SolverState:
    """Mutable iterate: primal variables, multipliers, and running sums."""

    mu: OccupancyCoupling
    lambda_x: ConditionalKernel
    lambda_y: ConditionalKernel
    duals: DualVariables
    mu_sum: np.ndarray
    lambda_x_sum: np.ndarray
    lambda_y_sum: np.ndarray
    k: int = 0

    @classmethod
    def initial(cls, nx: int, ny: int) -> "SolverState":
        return cls(
            mu=OccupancyCoupling.uniform(nx, ny),
            lambda_x=ConditionalKernel.uniform(nx, ny),
            lambda_y=ConditionalKernel.uniform(ny, nx),
            duals=DualVariables.zeros(nx, ny),
            mu_sum=np.zeros((nx, ny, nx, ny)),
            lambda_x_sum=np.zeros((nx, ny)),
            lambda_y_sum=np.zeros((ny, nx)),
        )


@dataclass(frozen=True)
class IterateDiagnostics:
    """Snapshot of the running-average solution quality at iteration k.

    Residuals and the certificate require exact occupancies, so they are
    None when the kernels are unknown (buffer-ingestion mode).
    """

    k: int
    distance_estimate: float
    residuals: ConstraintResiduals | None
    certificate: float | None


@dataclass
class SolverRun:
    """Output of a solver run: averaged primal variables and the trace."""

    mu_bar: OccupancyCoupling
    lambda_x_bar: ConditionalKernel
    lambda_y_bar: ConditionalKernel
    trace: list[IterateDiagnostics]
    distance: float
    config: SolverConfig


def estimate_primal_gradients(state: SolverState, cost: CostMatrix,
                              sample_x, sample_y, gamma: float
                              ) -> tuple[np.ndarray, dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Gradient estimates driving the primal updates.

    The coupling gradient is deterministic:
    c(x,y) - alpha_x(x,x',y) - alpha_y(x,y,y') + gamma V(x',y') - V(x,y).
    The conditional-row gradients are stochastic and vanish off the
    sampled rows; they are returned as {row: gradient vector} maps,
    averaged over the batch.  Uses the cost as passed (the run loop passes
    the rescaled cost).
    """
    ax, ay, v = state.duals.alpha_x, state.duals.alpha_y, state.duals.v
    g_mu = (cost.values[:, :, None, None]
            - ax.transpose(0, 2, 1)[:, :, :, None]
            - ay[:, :, None, :]
            + gamma * v[None, None, :, :]
            - v[:, :, None, None])
    xs, xps = _as_sample_arrays(sample_x)
    ys, yps = _as_sample_arrays(sample_y)
    inv_b = 1.0 / len(xs)
    g_lx: dict[int, np.ndarray] = {}
    for x, xp in zip(xs, xps):
        g_lx.setdefault(int(x), np.zeros(ay.shape[1]))
        g_lx[int(x)] += inv_b * ax[x, xp, :]
    g_ly: dict[int, np.ndarray] = {}
    for y, yp in zip(ys, yps):
        g_ly.setdefault(int(y), np.zeros(ax.shape[0]))
        g_ly[int(y)] += inv_b * ay[:, y, yp]
    return g_mu, g_lx, g_ly


def estimate_dual_gradients(state: SolverState, sample_x, sample_y,
                            nu0: np.ndarray, gamma: float
                            ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradient estimates driving the multiplier updates.

    g_ax(x,x',y) = sum_{y'} mu - 1{(X,X')=(x,x')} lambda_x(y|x) and its
    mirror image; g_v is the deterministic flow-constraint residual map.
    Batch elements are averaged.
    """
    mu = state.mu
    xs, xps = _as_sample_arrays(sample_x)
    ys, yps = _as_sample_arrays(sample_y)
    inv_b = 1.0 / len(xs)
    g_ax = np.ascontiguousarray(mu.x_pair_marginal().transpose(0, 2, 1))
    np.subtract.at(g_ax, (xs, xps), state.lambda_x.values[xs] * inv_b)
    g_ay_t = np.ascontiguousarray(mu.y_pair_marginal().transpose(1, 2, 0))
    np.subtract.at(g_ay_t, (ys, yps), state.lambda_y.values[ys] * inv_b)
    g_v = mu.state_marginal() - (1.0 - gamma) * nu0 - gamma * mu.shift()
    return g_ax, g_ay_t.transpose(2, 0, 1), g_v


def update_primal(state: SolverState, g_mu: np.ndarray,
                  g_lx: dict[int, np.ndarray], g_ly: dict[int, np.ndarray],
                  eta: float, eta_x: float, eta_y: float) -> None:
    """Normalized exponentiated steps; accumulates the post-update iterates.

    Steps run in log space with the max of log(weight) subtracted before
    exponentiation (normalization cancels it), so no step can overflow or
    collapse a distribution to all-zero.
    """
    mu = state.mu.values
    with np.errstate(divide="ignore"):
        w = np.log(mu) - eta * g_mu
    w -= w.max()
    np.exp(w, out=w)
    np.divide(w, w.sum(), out=mu)
    for row, g in g_lx.items():
        _row_step(state.lambda_x.values[row], g, eta_x)
    for row, g in g_ly.items():
        _row_step(state.lambda_y.values[row], g, eta_y)
    state.mu_sum += mu
    state.lambda_x_sum += state.lambda_x.values
    state.lambda_y_sum += state.lambda_y.values


def _row_step(row: np.ndarray, grad: np.ndarray, step: float) -> None:
    with np.errstate(divide="ignore"):
        w = np.log(row) - step * grad
    w -= w.max()
    np.exp(w, out=w)
    row[:] = w / w.sum()


def update_dual(state: SolverState, g_ax: np.ndarray, g_ay: np.ndarray, g_v: np.ndarray,
                beta_x: float, beta_y: float, beta_v: float, gamma: float) -> None:
    """Gradient-ascent steps, clipped coordinate-wise to the sup-norm balls."""
    ca, cv = alpha_cap(gamma), v_cap(gamma)
    d = state.duals
    np.clip(d.alpha_x - beta_x * g_ax, -ca, ca, out=d.alpha_x)
    np.clip(d.alpha_y - beta_y * g_ay, -ca, ca, out=d.alpha_y)
    np.clip(d.v - beta_v * g_v, -cv, cv, out=d.v)


def _as_sample_arrays(sample) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(sample, tuple) and len(sample) == 2 and np.isscalar(sample[0]):
        return np.asarray([sample[0]], dtype=np.int64), np.asarray([sample[1]], dtype=np.int64)
    frm, to = sample
    return np.atleast_1d(np.asarray(frm, dtype=np.int64)), np.atleast_1d(np.asarray(to, dtype=np.int64))


def default_samplers(chain_x: MarkovChain, chain_y: MarkovChain,
                     seed: int) -> tuple[TransitionSampler, TransitionSampler]:
    """One independent exact-geometric sampler per chain, derived from one seed."""
    child_x, child_y = np.random.SeedSequence(seed).spawn(2)
    return (TransitionSampler.exact_geometric(chain_x, np.random.Generator(np.random.PCG64(child_x))),
            TransitionSampler.exact_geometric(chain_y, np.random.Generator(np.random.PCG64(child_y))))


def run(chain_x: MarkovChain | None, chain_y: MarkovChain | None, cost: CostMatrix,
        config: SolverConfig,
        samplers: tuple[TransitionSampler, TransitionSampler] | None = None,
        initial_states: tuple[int, int] | None = None) -> SolverRun:
    """Full solver run; deterministic given the config (and samplers' seeds).

    Chains may be None when the samplers are buffer-backed; then
    ``initial_states`` must identify the joint start pair, and the trace
    omits residual diagnostics (they require exact occupancies).
    """
    nx, ny = cost.shape
    scale = cost.scale
    scaled_cost = np.ascontiguousarray(cost.scaled_values)
    gamma = config.gamma

    if samplers is None:
        if chain_x is None or chain_y is None:
            raise ValueError("buffer-mode runs must pass explicit samplers")
        samplers = default_samplers(chain_x, chain_y, config.seed)
    sampler_x, sampler_y = samplers

    if initial_states is not None:
        x0, y0 = initial_states
    elif chain_x is not None and chain_y is not None:
        x0, y0 = chain_x.initial_state, chain_y.initial_state
    else:
        raise ValueError("initial states are required when chains are unknown")
    if not (0 <= x0 < nx and 0 <= y0 < ny):
        raise ValueError("initial states out of range for the cost matrix")

    kernels_known = chain_x is not None and chain_y is not None
    if kernels_known:
        if chain_x.num_states != nx or chain_y.num_states != ny:
            raise ValueError("cost shape must match the chain state counts")
        nu_x = exact_occupancy(chain_x, gamma)
        nu_y = exact_occupancy(chain_y, gamma)
    nu0 = np.zeros((nx, ny))
    nu0[x0, y0] = 1.0

    state = SolverState.initial(nx, ny)
    K, b = config.iterations, config.batch_size
    if config.rate_preset == "theory":
        rates = theory_rates(nx, ny, gamma, K)
    cap_a, cap_v = alpha_cap(gamma), v_cap(gamma)

    trace: list[IterateDiagnostics] = []
    avg_anchor = 0  # iterations already flushed out of the running sums
    restart_at = K // 2 if (config.average_last_half and K > 1) else None

    def snapshot(k: int) -> None:
        count = k - avg_anchor
        mu_bar = OccupancyCoupling(state.mu_sum / count)
        dist = float((mu_bar.state_marginal() * scaled_cost).sum()) * scale
        if kernels_known:
            lx_bar = _averaged_kernel(state.lambda_x_sum)
            ly_bar = _averaged_kernel(state.lambda_y_sum)
            res = residuals(mu_bar, lx_bar, ly_bar, nu_x, nu_y, nu0, gamma)
            cert = dist + scale * (6.0 * res.causal_x + 6.0 * res.causal_y + 2.0 * res.flow) / (1.0 - gamma)
            trace.append(IterateDiagnostics(k, dist, res, cert))
        else:
            trace.append(IterateDiagnostics(k, dist, None, None))

    k = 0
    while k < K:
        block = min(config.snapshot_every - (k % config.snapshot_every), K - k)
        if restart_at is not None and k < restart_at:
            block = min(block, restart_at - k)
        ks = np.arange(k + 1, k + block + 1, dtype=np.float64)
        if config.rate_preset == "practical":
            etas = config.eta0 / np.sqrt(1.0 + config.decay_a * ks)
            etas_x = etas
            etas_y = etas.copy()
            beta_x = beta_y = beta_v = config.beta0
        else:
            etas = np.full(block, rates.eta)
            etas_x = np.full(block, rates.eta_x)
            etas_y = np.full(block, rates.eta_y)
            beta_x, beta_y, beta_v = rates.beta_x, rates.beta_y, rates.beta
        xs, xps = sampler_x.draw(block * b, gamma)
        ys, yps = sampler_y.draw(block * b, gamma)
        fail = backend.run_block(
            state.mu.values, state.lambda_x.values, state.lambda_y.values,
            state.duals.alpha_x, state.duals.alpha_y, state.duals.v,
            state.mu_sum, state.lambda_x_sum, state.lambda_y_sum,
            scaled_cost, x0, y0, gamma,
            np.ascontiguousarray(etas), np.ascontiguousarray(etas_x), np.ascontiguousarray(etas_y),
            beta_x, beta_y, beta_v, cap_a, cap_v,
            xs.reshape(block, b), xps.reshape(block, b),
            ys.reshape(block, b), yps.reshape(block, b))
        if fail >= 0:
            raise FloatingPointError(f"non-finite solver state at iteration {k + fail + 1}")
        k += block
        state.k = k
        if restart_at is not None and k == restart_at:
            state.mu_sum[:] = 0.0
            state.lambda_x_sum[:] = 0.0
            state.lambda_y_sum[:] = 0.0
            avg_anchor = restart_at
        elif k % config.snapshot_every == 0 or k == K:
            snapshot(k)

    count = K - avg_anchor
    mu_bar = OccupancyCoupling(state.mu_sum / count)
    lx_bar = _averaged_kernel(state.lambda_x_sum)
    ly_bar = _averaged_kernel(state.lambda_y_sum)
    distance = float((mu_bar.state_marginal() * scaled_cost).sum()) * scale
    return SolverRun(mu_bar=mu_bar, lambda_x_bar=lx_bar, lambda_y_bar=ly_bar,
                     trace=trace, distance=distance, config=config)


def _averaged_kernel(row_sums: np.ndarray) -> ConditionalKernel:
    # Sums of simplex rows drift by ~K*eps; renormalizing recovers exact rows.
    return ConditionalKernel(row_sums / row_sums.sum(axis=1, keepdims=True))
