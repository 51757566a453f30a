"""Pure-NumPy iteration kernel; the fallback when the compiled core is absent.

``run_block`` advances the primal-dual state through a block of iterations
in place.  Semantics match the compiled kernel: per iteration, gradients
are evaluated at the current iterate, the coupling and the sampled
conditional rows take exponentiated steps, the multipliers take clipped
gradient steps, and the running sums accumulate the post-update primal
iterates.  Returns -1, or the first in-block iteration index at which the
coupling's normalizer stopped being finite and positive.
"""

from __future__ import annotations

import numpy as np


def _exp_row_step(row: np.ndarray, grad: np.ndarray, step: float) -> None:
    """In-place normalized exponentiated update of one probability row."""
    with np.errstate(divide="ignore"):
        w = np.log(row) - step * grad
    w -= w.max()
    np.exp(w, out=w)
    row[:] = w / w.sum()


def run_block(mu, lam_x, lam_y, alpha_x, alpha_y, v,
              mu_sum, lam_x_sum, lam_y_sum,
              cost, x0, y0, gamma,
              etas, etas_x, etas_y,
              beta_x, beta_y, beta_v,
              cap_alpha, cap_v,
              xs, xps, ys, yps) -> int:
    L, b = xs.shape
    inv_b = 1.0 / b
    one_minus = 1.0 - gamma
    for ell in range(L):
        sx, sxp = xs[ell], xps[ell]
        sy, syp = ys[ell], yps[ell]
        eta, eta_x, eta_y = etas[ell], etas_x[ell], etas_y[ell]

        # Marginals of the current coupling.
        m_x = mu.sum(axis=3)
        m_y = mu.sum(axis=2)
        nu_mu = m_x.sum(axis=2)
        e_mu = mu.sum(axis=(0, 1))

        # Dual gradients, evaluated before any primal update.
        g_ax = np.ascontiguousarray(m_x.transpose(0, 2, 1))
        np.subtract.at(g_ax, (sx, sxp), lam_x[sx] * inv_b)
        g_ay_t = np.ascontiguousarray(m_y.transpose(1, 2, 0))
        np.subtract.at(g_ay_t, (sy, syp), lam_y[sy] * inv_b)
        g_v = nu_mu - gamma * e_mu
        g_v[x0, y0] -= one_minus

        # Exponentiated coupling step, carried out in log space: the step
        # weight w = -eta * g_mu decomposes over (x,y), (x,x',y), (x,y,y')
        # and (x',y'), and the max of log(mu) + w is subtracted before
        # exponentiation (normalization cancels it), so the largest updated
        # entry is always exactly 1 and the step can neither overflow nor
        # underflow the whole tensor.
        fa = -eta * (cost - v)
        fb = eta * alpha_x
        fc = eta * alpha_y
        fd = (-eta * gamma) * v
        w4 = (fa[:, :, None, None]
              + fb.transpose(0, 2, 1)[:, :, :, None]
              + fc[:, :, None, :]
              + fd[None, None, :, :])
        with np.errstate(divide="ignore"):
            w4 += np.log(mu)
        w4 -= w4.max()
        np.exp(w4, out=w4)
        total = float(w4.sum())
        if not np.isfinite(total):
            return ell
        np.divide(w4, total, out=mu)
        # Flush far-underflowed entries to exact zero: subnormal values
        # would drag every later pass onto the slow denormal path.
        mu *= mu >= 1e-300
        mu_sum += mu

        # Exponentiated step on the sampled conditional rows only, also in
        # log space so a heavily concentrated row cannot zero out entirely.
        g_rows_x = np.zeros_like(lam_x)
        np.add.at(g_rows_x, sx, alpha_x[sx, sxp, :] * inv_b)
        for row in np.unique(sx):
            _exp_row_step(lam_x[row], g_rows_x[row], eta_x)
        g_rows_y = np.zeros_like(lam_y)
        np.add.at(g_rows_y, sy, alpha_y[:, sy, syp].T * inv_b)
        for row in np.unique(sy):
            _exp_row_step(lam_y[row], g_rows_y[row], eta_y)
        lam_x_sum += lam_x
        lam_y_sum += lam_y

        # Clipped gradient-ascent steps for the multipliers.
        np.clip(alpha_x - beta_x * g_ax, -cap_alpha, cap_alpha, out=alpha_x)
        np.clip(alpha_y - beta_y * g_ay_t.transpose(2, 0, 1), -cap_alpha, cap_alpha, out=alpha_y)
        np.clip(v - beta_v * g_v, -cap_v, cap_v, out=v)
    return -1
