"""Primal/dual objects of the occupancy-coupling linear program.

The primal variable is a joint distribution mu over (x, y, x', y'); the
auxiliary conditionals lambda_x(y|x), lambda_y(x|y) tie mu's cross-chain
conditionals to the per-chain occupancy measures.  This module evaluates
the constraint residuals, the saddle-point Lagrangian, the transport cost,
and a residual-weighted upper diagnostic, and cross-checks the two
equivalent feasibility systems (the occupancy-measure form and the
transition-kernel form).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chains import CostMatrix, MarkovChain, OccupancyTable, exact_occupancy

# Below this occupancy mass a conditional row cannot be recovered from mu.
RECONSTRUCTION_THRESHOLD = 1e-8


def alpha_cap(gamma: float) -> float:
    """Radius of the sup-norm ball confining the causality multipliers."""
    return 6.0 / (1.0 - gamma)


def v_cap(gamma: float) -> float:
    """Radius of the sup-norm ball confining the flow multipliers."""
    return 2.0 / (1.0 - gamma)


@dataclass
class OccupancyCoupling:
    """Joint occupancy distribution over (x, y, x', y'), a simplex point."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if v.ndim != 4 or v.shape[0] != v.shape[2] or v.shape[1] != v.shape[3]:
            raise ValueError(f"occupancy coupling must have shape (nx, ny, nx, ny), got {v.shape}")
        self.values = v

    @classmethod
    def uniform(cls, nx: int, ny: int) -> "OccupancyCoupling":
        return cls(np.full((nx, ny, nx, ny), 1.0 / (nx * ny * nx * ny)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[0], self.values.shape[1]

    def state_marginal(self) -> np.ndarray:
        """nu_mu(x, y) = sum over next states."""
        return self.values.sum(axis=(2, 3))

    def shift(self) -> np.ndarray:
        """(E mu)(x, y) = sum over previous states."""
        return self.values.sum(axis=(0, 1))

    def x_pair_marginal(self) -> np.ndarray:
        """sum_{y'} mu as a (x, y, x') tensor."""
        return self.values.sum(axis=3)

    def y_pair_marginal(self) -> np.ndarray:
        """sum_{x'} mu as a (x, y, y') tensor."""
        return self.values.sum(axis=2)

    def total(self) -> float:
        return float(self.values.sum())

    def validate(self, tol: float = 1e-9) -> None:
        if np.any(self.values < 0.0):
            raise ValueError("occupancy coupling entries must be nonnegative")
        if abs(self.total() - 1.0) > tol:
            raise ValueError(f"occupancy coupling must sum to 1, got {self.total()!r}")


@dataclass
class ConditionalKernel:
    """Row-stochastic conditional distributions, one row per conditioning state."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if v.ndim != 2:
            raise ValueError("conditional kernel must be a matrix")
        if np.any(v < 0.0):
            raise ValueError("conditional probabilities must be nonnegative")
        err = np.max(np.abs(v.sum(axis=1) - 1.0))
        if err > 1e-12:
            raise ValueError(f"conditional rows must sum to 1 (max deviation {err:.3e})")
        self.values = v

    @classmethod
    def uniform(cls, rows: int, cols: int) -> "ConditionalKernel":
        return cls(np.full((rows, cols), 1.0 / cols))


@dataclass
class DualVariables:
    """Lagrange multipliers, each confined to a sup-norm ball.

    alpha_x is indexed (x, x', y), alpha_y is (x, y, y'), v is (x, y).
    """

    alpha_x: np.ndarray
    alpha_y: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, nx: int, ny: int) -> "DualVariables":
        return cls(np.zeros((nx, nx, ny)), np.zeros((nx, ny, ny)), np.zeros((nx, ny)))

    def validate(self, gamma: float) -> None:
        ca, cv = alpha_cap(gamma), v_cap(gamma)
        if np.max(np.abs(self.alpha_x), initial=0.0) > ca or np.max(np.abs(self.alpha_y), initial=0.0) > ca:
            raise ValueError(f"alpha multipliers exceed the sup-norm cap {ca}")
        if np.max(np.abs(self.v), initial=0.0) > cv:
            raise ValueError(f"flow multipliers exceed the sup-norm cap {cv}")

    def clamp(self, gamma: float) -> "DualVariables":
        ca, cv = alpha_cap(gamma), v_cap(gamma)
        return DualVariables(
            np.clip(self.alpha_x, -ca, ca),
            np.clip(self.alpha_y, -ca, ca),
            np.clip(self.v, -cv, cv),
        )


@dataclass(frozen=True)
class ConstraintResiduals:
    """Total absolute violations of the flow and causality constraints."""

    flow: float
    causal_x: float
    causal_y: float

    def max(self) -> float:
        return max(self.flow, self.causal_x, self.causal_y)


def joint_initial(chain_x: MarkovChain, chain_y: MarkovChain) -> np.ndarray:
    """Dirac distribution of the joint initial state pair."""
    nu0 = np.zeros((chain_x.num_states, chain_y.num_states))
    nu0[chain_x.initial_state, chain_y.initial_state] = 1.0
    return nu0


def residuals(mu: OccupancyCoupling, lx: ConditionalKernel, ly: ConditionalKernel,
              nu_x: OccupancyTable, nu_y: OccupancyTable, nu0: np.ndarray,
              gamma: float) -> ConstraintResiduals:
    """L1 residuals of the flow and the two causality constraint systems.

    flow:     sum_{x'y'} mu(x,y,x',y') - gamma sum mu(.,.,x,y) - (1-gamma) nu0(x,y)
    causal_x: sum_{y'} mu(x,y,x',y') - nu_x(x,x') lambda_x(y|x)
    causal_y: sum_{x'} mu(x,y,x',y') - nu_y(y,y') lambda_y(x|y)
    """
    nx, ny = mu.shape
    if nu0.shape != (nx, ny) or lx.values.shape != (nx, ny) or ly.values.shape != (ny, nx):
        raise ValueError("shape mismatch between coupling, conditionals, and initial distribution")
    m_x = mu.x_pair_marginal()
    m_y = mu.y_pair_marginal()
    flow = float(np.abs(m_x.sum(axis=2) - gamma * mu.shift() - (1.0 - gamma) * nu0).sum())
    cx = float(np.abs(m_x.transpose(0, 2, 1) - nu_x.values[:, :, None] * lx.values[:, None, :]).sum())
    cy = float(np.abs(m_y.transpose(1, 2, 0) - nu_y.values[:, :, None] * ly.values[:, None, :]).sum())
    return ConstraintResiduals(flow=flow, causal_x=cx, causal_y=cy)


def distance_of(mu: OccupancyCoupling, cost: CostMatrix) -> float:
    """Transport cost of the coupling in the cost's original units."""
    return float((mu.state_marginal() * cost.values).sum())


def lagrangian(mu: OccupancyCoupling, lx: ConditionalKernel, ly: ConditionalKernel,
               duals: DualVariables, cost: CostMatrix,
               nu_x: OccupancyTable, nu_y: OccupancyTable, nu0: np.ndarray,
               gamma: float) -> float:
    """Saddle-point Lagrangian of the occupancy-coupling LP.

    The mu term carries coefficient c - alpha_x - alpha_y + gamma V' - V,
    the lambda terms enter with positive sign, plus (1-gamma) <nu0, V>;
    this makes the update rules exact gradient descent/ascent and makes
    feasible points evaluate to <mu, c> for any in-domain duals.
    """
    ax, ay, v = duals.alpha_x, duals.alpha_y, duals.v
    coeff = (cost.values[:, :, None, None]
             - ax.transpose(0, 2, 1)[:, :, :, None]
             - ay[:, :, None, :]
             + gamma * v[None, None, :, :]
             - v[:, :, None, None])
    value = float((mu.values * coeff).sum())
    value += float((nu_x.values[:, :, None] * lx.values[:, None, :] * ax).sum())
    value += float((nu_y.values[:, :, None] * ly.values[:, None, :] * ay.transpose(1, 2, 0)).sum())
    value += (1.0 - gamma) * float((nu0 * v).sum())
    return value


def dual_certificate(mu: OccupancyCoupling, cost: CostMatrix,
                     resid: ConstraintResiduals, gamma: float) -> float:
    """Residual-weighted upper diagnostic on the best-response Lagrangian.

    Returns <mu, c> + (6 causal_x + 6 causal_y + 2 flow) / (1 - gamma); the
    weights are the dual-domain radii, so this never falls below the
    transport cost and collapses to it at feasibility.
    """
    penalty = 6.0 * resid.causal_x + 6.0 * resid.causal_y + 2.0 * resid.flow
    return distance_of(mu, cost) + penalty / (1.0 - gamma)


def induced_conditionals(mu: OccupancyCoupling,
                         threshold: float = RECONSTRUCTION_THRESHOLD
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Conditionals lambda_x(y|x), lambda_y(x|y) carried by a feasible coupling.

    lambda_x(y|x) = sum_{x',y'} mu(x,y,x',y') / nu_x(x).  Rows whose
    conditioning mass falls below ``threshold`` are undetermined; they are
    returned uniform and flagged.  Returns (lam_x, lam_y, det_x, det_y)
    where det_* mark the determined rows.
    """
    nu_mu = mu.state_marginal()
    mass_x = nu_mu.sum(axis=1)
    mass_y = nu_mu.sum(axis=0)
    nx, ny = mu.shape
    det_x = mass_x > threshold
    det_y = mass_y > threshold
    lam_x = np.full((nx, ny), 1.0 / ny)
    lam_y = np.full((ny, nx), 1.0 / nx)
    lam_x[det_x] = nu_mu[det_x] / mass_x[det_x, None]
    lam_y[det_y] = nu_mu.T[det_y] / mass_y[det_y, None]
    return lam_x, lam_y, det_x, det_y


@dataclass(frozen=True)
class EquivalenceReport:
    """Residuals of the two equivalent feasibility systems for one coupling."""

    occupancy_system: ConstraintResiduals
    occupancy_system_max: float
    kernel_system: ConstraintResiduals
    kernel_system_max: float
    lambda_x_reconstruction_error: float
    lambda_y_reconstruction_error: float
    undetermined_x_rows: int
    undetermined_y_rows: int

    def feasible(self, tol: float = 1e-8) -> tuple[bool, bool]:
        return self.occupancy_system_max <= tol, self.kernel_system_max <= tol


def check_prop1_equivalence(mu: OccupancyCoupling, lx: ConditionalKernel, ly: ConditionalKernel,
                            chain_x: MarkovChain, chain_y: MarkovChain,
                            gamma: float) -> EquivalenceReport:
    """Evaluate both feasibility systems on one (mu, lambda) triple.

    The occupancy system states the constraints through nu_x, nu_y and the
    lambda conditionals; the kernel system states them directly through
    P_X and P_Y.  A diagnostic/test path: requires exact kernels.
    """
    nu_x = exact_occupancy(chain_x, gamma)
    nu_y = exact_occupancy(chain_y, gamma)
    nu0 = joint_initial(chain_x, chain_y)
    occ = residuals(mu, lx, ly, nu_x, nu_y, nu0, gamma)

    m_x = mu.x_pair_marginal()
    m_y = mu.y_pair_marginal()
    nu_mu = m_x.sum(axis=2)
    flow_res = nu_mu - gamma * mu.shift() - (1.0 - gamma) * nu0
    kx_res = m_x - nu_mu[:, :, None] * chain_x.transition[:, None, :]
    ky_res = m_y - nu_mu[:, :, None] * chain_y.transition[None, :, :]
    kernel = ConstraintResiduals(
        flow=float(np.abs(flow_res).sum()),
        causal_x=float(np.abs(kx_res).sum()),
        causal_y=float(np.abs(ky_res).sum()),
    )

    occ_max = _occupancy_system_max(mu, lx, ly, nu_x, nu_y, nu0, gamma)
    kernel_max = max(np.abs(flow_res).max(), np.abs(kx_res).max(), np.abs(ky_res).max())

    recon_x, recon_y, det_x, det_y = induced_conditionals(mu)
    err_x = float(np.abs(recon_x[det_x] - lx.values[det_x]).max()) if det_x.any() else 0.0
    err_y = float(np.abs(recon_y[det_y] - ly.values[det_y]).max()) if det_y.any() else 0.0

    return EquivalenceReport(
        occupancy_system=occ,
        occupancy_system_max=float(occ_max),
        kernel_system=kernel,
        kernel_system_max=float(kernel_max),
        lambda_x_reconstruction_error=err_x,
        lambda_y_reconstruction_error=err_y,
        undetermined_x_rows=int((~det_x).sum()),
        undetermined_y_rows=int((~det_y).sum()),
    )


def _occupancy_system_max(mu, lx, ly, nu_x, nu_y, nu0, gamma) -> float:
    m_x = mu.x_pair_marginal()
    m_y = mu.y_pair_marginal()
    flow = m_x.sum(axis=2) - gamma * mu.shift() - (1.0 - gamma) * nu0
    cx = m_x.transpose(0, 2, 1) - nu_x.values[:, :, None] * lx.values[:, None, :]
    cy = m_y.transpose(1, 2, 0) - nu_y.values[:, :, None] * ly.values[:, None, :]
    return max(np.abs(flow).max(), np.abs(cx).max(), np.abs(cy).max())
