"""Projection of approximate occupancy couplings onto the feasible set.

The pipeline extracts the conditional transition coupling carried by mu,
rounds each conditional matrix to an exact coupling of the true kernels
(scale rows, scale columns, then spread the leftover mass), symmetrizes,
and reconstructs the induced occupancy by a joint-space linear solve.
Requires known kernels; used for validation and analysis, never inside the
optimization loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chains import MarkovChain
from .coupling import OccupancyCoupling

# Below this state-occupancy mass the conditional falls back to the
# independent product kernel.
ZERO_MASS_THRESHOLD = 1e-12


@dataclass
class TransitionCoupling:
    """Per state pair (x, y), a probability matrix over next pairs (x', y').

    A *valid* transition coupling additionally has row marginals
    P_X(.|x) and column marginals P_Y(.|y) at every state pair.
    """

    values: np.ndarray  # (nx, ny, nx, ny)

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if v.ndim != 4 or v.shape[0] != v.shape[2] or v.shape[1] != v.shape[3]:
            raise ValueError(f"transition coupling must have shape (nx, ny, nx, ny), got {v.shape}")
        self.values = v

    def conditional(self, x: int, y: int) -> np.ndarray:
        return self.values[x, y]

    def validate_stochastic(self, tol: float = 1e-10) -> None:
        sums = self.values.sum(axis=(2, 3))
        if np.any(self.values < 0.0) or np.max(np.abs(sums - 1.0)) > tol:
            raise ValueError("each conditional must be a probability matrix")

    def marginal_errors(self, chain_x: MarkovChain, chain_y: MarkovChain) -> tuple[float, float]:
        """Sup-norm deviations of the row/column marginals from the true kernels."""
        row = self.values.sum(axis=3) - chain_x.transition[:, None, :]
        col = self.values.sum(axis=2) - chain_y.transition[None, :, :]
        return float(np.abs(row).max()), float(np.abs(col).max())


def transition_coupling_of(mu: OccupancyCoupling, chain_x: MarkovChain, chain_y: MarkovChain,
                           zero_tol: float = ZERO_MASS_THRESHOLD) -> TransitionCoupling:
    """Conditional next-pair kernel carried by mu.

    pi(x',y'|x,y) = mu(x,y,x',y') / nu_mu(x,y) where the state mass exceeds
    ``zero_tol``; elsewhere the independent product P_X(x'|x) P_Y(y'|y).
    """
    nu_mu = mu.state_marginal()
    product = chain_x.transition[:, None, :, None] * chain_y.transition[None, :, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = mu.values / nu_mu[:, :, None, None]
    pi = np.where(nu_mu[:, :, None, None] > zero_tol, ratio, product)
    return TransitionCoupling(pi)


def round_to_coupling(F: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Round a nonnegative matrix to an exact coupling of (p, q).

    Scales rows down to at most p, then columns down to at most q, then
    distributes the missing mass proportionally to the row and column
    deficits.  The output has row sums exactly p and column sums exactly q
    (machine precision), and moves at most twice the initial marginal
    violation in L1.
    """
    F = np.asarray(F, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    rs = F.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        row_scale = np.where(rs > 0.0, np.minimum(p / rs, 1.0), 1.0)
    F1 = F * row_scale[:, None]
    cs = F1.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        col_scale = np.where(cs > 0.0, np.minimum(q / cs, 1.0), 1.0)
    F2 = F1 * col_scale[None, :]
    err_p = p - F2.sum(axis=1)
    err_q = q - F2.sum(axis=0)
    total = float(err_p.sum())
    if total <= 0.0:
        return F2
    return F2 + np.outer(err_p, err_q) / total


def round_symmetric(F: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Symmetrized rounding: average the row-first and column-first passes."""
    return 0.5 * (round_to_coupling(F, p, q) + round_to_coupling(np.asarray(F).T, q, p).T)


def induced_occupancy(pi: TransitionCoupling, nu0: np.ndarray, gamma: float) -> OccupancyCoupling:
    """Occupancy coupling generated by running a transition coupling.

    Solves the joint-space flow fixed point xi = gamma Pi^T xi + (1-gamma) nu0
    and sets mu(x,y,x',y') = xi(x,y) pi(x',y'|x,y).
    """
    nx, ny = pi.values.shape[0], pi.values.shape[1]
    nxy = nx * ny
    Pi = pi.values.reshape(nxy, nxy)
    A = np.eye(nxy) - gamma * Pi.T
    xi = np.linalg.solve(A, (1.0 - gamma) * np.asarray(nu0, dtype=np.float64).reshape(nxy))
    mu = (xi[:, None] * Pi).reshape(nx, ny, nx, ny)
    return OccupancyCoupling(mu)


def round_occupancy(mu: OccupancyCoupling, chain_x: MarkovChain, chain_y: MarkovChain,
                    nu0: np.ndarray, gamma: float) -> tuple[OccupancyCoupling, float]:
    """Project mu onto the feasible set; returns (rounded coupling, L1 gap).

    Rounds each conditional of mu's transition coupling to an exact
    coupling of the true kernels (symmetrized), then reconstructs the
    induced occupancy.  The gap is bounded by the weighted constraint
    violations of mu: at most (3 C_X + 3 C_Y + F) / (1 - gamma).
    """
    pi = transition_coupling_of(mu, chain_x, chain_y)
    rounded = np.empty_like(pi.values)
    nx, ny = pi.values.shape[0], pi.values.shape[1]
    for x in range(nx):
        for y in range(ny):
            rounded[x, y] = round_symmetric(pi.values[x, y], chain_x.transition[x], chain_y.transition[y])
    r_mu = induced_occupancy(TransitionCoupling(rounded), nu0, gamma)
    gap = float(np.abs(r_mu.values - mu.values).sum())
    return r_mu, gap
