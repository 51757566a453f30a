# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled iteration kernel for the primal-dual solver.

Same contract as the pure-NumPy fallback: advances the state through a
block of iterations in place and returns -1, or the in-block index where
the coupling's normalizer stopped being finite and positive.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, isfinite, log

cnp.import_array()


def run_block(double[:, :, :, ::1] mu, double[:, ::1] lam_x, double[:, ::1] lam_y,
              double[:, :, ::1] alpha_x, double[:, :, ::1] alpha_y, double[:, ::1] v,
              double[:, :, :, ::1] mu_sum, double[:, ::1] lam_x_sum, double[:, ::1] lam_y_sum,
              const double[:, ::1] cost, Py_ssize_t x0, Py_ssize_t y0, double gamma,
              const double[::1] etas, const double[::1] etas_x, const double[::1] etas_y,
              double beta_x, double beta_y, double beta_v,
              double cap_alpha, double cap_v,
              const long long[:, ::1] xs, const long long[:, ::1] xps,
              const long long[:, ::1] ys, const long long[:, ::1] yps):
    cdef Py_ssize_t L = xs.shape[0]
    cdef Py_ssize_t b = xs.shape[1]
    cdef Py_ssize_t nx = mu.shape[0]
    cdef Py_ssize_t ny = mu.shape[1]
    cdef double inv_b = 1.0 / b
    cdef double one_minus = 1.0 - gamma

    cdef double[:, :, ::1] m_x = np.empty((nx, ny, nx))
    cdef double[:, :, ::1] m_y = np.empty((nx, ny, ny))
    cdef double[:, ::1] nu_mu = np.empty((nx, ny))
    cdef double[:, ::1] e_mu = np.empty((nx, ny))
    cdef double[:, :, ::1] g_ax = np.empty((nx, nx, ny))
    cdef double[:, :, ::1] g_ay = np.empty((nx, ny, ny))
    cdef double[:, ::1] fa = np.empty((nx, ny))
    cdef double[:, :, ::1] fb = np.empty((nx, nx, ny))
    cdef double[:, :, ::1] fc = np.empty((nx, ny, ny))
    cdef double[:, ::1] fd = np.empty((nx, ny))
    cdef double[:, ::1] ea = np.empty((nx, ny))
    cdef double[:, :, ::1] eb = np.empty((nx, nx, ny))
    cdef double[:, :, ::1] ec = np.empty((nx, ny, ny))
    cdef double[:, ::1] ed = np.empty((nx, ny))
    cdef double[:, :, :, ::1] w_buf = np.empty((nx, ny, nx, ny))
    cdef double[:, ::1] g_rows_x = np.zeros((nx, ny))
    cdef double[:, ::1] g_rows_y = np.zeros((ny, nx))
    cdef char[::1] marked_x = np.zeros(nx, dtype=np.int8)
    cdef char[::1] marked_y = np.zeros(ny, dtype=np.int8)
    cdef long long[::1] touched_x = np.empty(b, dtype=np.int64)
    cdef long long[::1] touched_y = np.empty(b, dtype=np.int64)

    cdef Py_ssize_t ell, x, y, xp, yp, j, row, n_tx, n_ty
    cdef double eta, eta_x, eta_y, val, tot, inv, mx, w, t1, t2
    cdef double max_a, max_b, max_c, max_d, max_w

    for ell in range(L):
        eta = etas[ell]
        eta_x = etas_x[ell]
        eta_y = etas_y[ell]

        # Marginals of the current coupling.
        for x in range(nx):
            for y in range(ny):
                e_mu[x, y] = 0.0
        for x in range(nx):
            for y in range(ny):
                for yp in range(ny):
                    m_y[x, y, yp] = 0.0
                tot = 0.0
                for xp in range(nx):
                    val = 0.0
                    for yp in range(ny):
                        t1 = mu[x, y, xp, yp]
                        val += t1
                        m_y[x, y, yp] += t1
                        e_mu[xp, yp] += t1
                    m_x[x, y, xp] = val
                    tot += val
                nu_mu[x, y] = tot

        # Dual gradients at the current iterate (before primal updates).
        for x in range(nx):
            for xp in range(nx):
                for y in range(ny):
                    g_ax[x, xp, y] = m_x[x, y, xp]
        for j in range(b):
            row = xs[ell, j]
            for y in range(ny):
                g_ax[row, xps[ell, j], y] -= lam_x[row, y] * inv_b
        for x in range(nx):
            for y in range(ny):
                for yp in range(ny):
                    g_ay[x, y, yp] = m_y[x, y, yp]
        for j in range(b):
            row = ys[ell, j]
            for x in range(nx):
                g_ay[x, row, yps[ell, j]] -= lam_y[row, x] * inv_b

        # Exponentiated coupling step.  The step weight w = -eta * g_mu
        # decomposes into four factors over (x,y), (x,x',y), (x,y,y') and
        # (x',y').  The exact max of w is found with an adds-only pass;
        # when the per-factor maxima jointly overshoot it by little, the
        # cheap factorized-exp path is numerically safe and its normalizer
        # is measured with a read-only pass first.  Otherwise (or if that
        # normalizer degenerates) the update runs in log space against the
        # exact max of log(mu) + w, which pins the largest updated entry
        # at 1.  Normalization cancels every offset.
        max_a = -1e300
        for x in range(nx):
            for y in range(ny):
                val = -eta * (cost[x, y] - v[x, y])
                fa[x, y] = val
                if val > max_a:
                    max_a = val
        max_b = -1e300
        for x in range(nx):
            for xp in range(nx):
                for y in range(ny):
                    val = eta * alpha_x[x, xp, y]
                    fb[x, xp, y] = val
                    if val > max_b:
                        max_b = val
        max_c = -1e300
        for x in range(nx):
            for y in range(ny):
                for yp in range(ny):
                    val = eta * alpha_y[x, y, yp]
                    fc[x, y, yp] = val
                    if val > max_c:
                        max_c = val
        max_d = -1e300
        for xp in range(nx):
            for yp in range(ny):
                val = -eta * gamma * v[xp, yp]
                fd[xp, yp] = val
                if val > max_d:
                    max_d = val
        max_w = -1e300
        for x in range(nx):
            for y in range(ny):
                t1 = fa[x, y]
                for xp in range(nx):
                    t2 = t1 + fb[x, xp, y]
                    for yp in range(ny):
                        val = t2 + fc[x, y, yp] + fd[xp, yp]
                        if val > max_w:
                            max_w = val

        tot = 0.0
        if max_a + max_b + max_c + max_d - max_w <= 400.0:
            for x in range(nx):
                for y in range(ny):
                    ea[x, y] = exp(fa[x, y] - max_a)
            for x in range(nx):
                for xp in range(nx):
                    for y in range(ny):
                        eb[x, xp, y] = exp(fb[x, xp, y] - max_b)
            for x in range(nx):
                for y in range(ny):
                    for yp in range(ny):
                        ec[x, y, yp] = exp(fc[x, y, yp] - max_c)
            for xp in range(nx):
                for yp in range(ny):
                    ed[xp, yp] = exp(fd[xp, yp] - max_d)
            for x in range(nx):
                for y in range(ny):
                    t1 = ea[x, y]
                    for xp in range(nx):
                        t2 = t1 * eb[x, xp, y]
                        for yp in range(ny):
                            tot += mu[x, y, xp, yp] * t2 * ec[x, y, yp] * ed[xp, yp]
        if isfinite(tot) and tot > 1e-250:
            inv = 1.0 / tot
            for x in range(nx):
                for y in range(ny):
                    t1 = ea[x, y]
                    for xp in range(nx):
                        t2 = t1 * eb[x, xp, y]
                        for yp in range(ny):
                            val = mu[x, y, xp, yp] * t2 * ec[x, y, yp] * ed[xp, yp] * inv
                            if val < 1e-300:
                                val = 0.0
                            mu[x, y, xp, yp] = val
                            mu_sum[x, y, xp, yp] += val
        else:
            # Log-space path: t = log(mu) + w for live entries.
            max_w = -1e300
            for x in range(nx):
                for y in range(ny):
                    t1 = fa[x, y]
                    for xp in range(nx):
                        t2 = t1 + fb[x, xp, y]
                        for yp in range(ny):
                            if mu[x, y, xp, yp] > 0.0:
                                val = log(mu[x, y, xp, yp]) + t2 + fc[x, y, yp] + fd[xp, yp]
                                w_buf[x, y, xp, yp] = val
                                if val > max_w:
                                    max_w = val
                            else:
                                w_buf[x, y, xp, yp] = -1e300
            if not isfinite(max_w):
                return ell
            tot = 0.0
            for x in range(nx):
                for y in range(ny):
                    for xp in range(nx):
                        for yp in range(ny):
                            val = exp(w_buf[x, y, xp, yp] - max_w)
                            mu[x, y, xp, yp] = val
                            tot += val
            if not isfinite(tot) or tot <= 0.0:
                return ell
            inv = 1.0 / tot
            for x in range(nx):
                for y in range(ny):
                    for xp in range(nx):
                        for yp in range(ny):
                            val = mu[x, y, xp, yp] * inv
                            if val < 1e-300:
                                val = 0.0
                            mu[x, y, xp, yp] = val
                            mu_sum[x, y, xp, yp] += val

        # Exponentiated step on the sampled conditional rows only.
        n_tx = 0
        for j in range(b):
            row = xs[ell, j]
            if not marked_x[row]:
                marked_x[row] = 1
                touched_x[n_tx] = row
                n_tx += 1
                for y in range(ny):
                    g_rows_x[row, y] = 0.0
            for y in range(ny):
                g_rows_x[row, y] += alpha_x[row, xps[ell, j], y] * inv_b
        for j in range(n_tx):
            row = touched_x[j]
            marked_x[row] = 0
            mx = -1e300
            for y in range(ny):
                if lam_x[row, y] > 0.0:
                    w = log(lam_x[row, y]) - eta_x * g_rows_x[row, y]
                else:
                    w = -1e300
                g_rows_x[row, y] = w
                if w > mx:
                    mx = w
            tot = 0.0
            for y in range(ny):
                val = exp(g_rows_x[row, y] - mx)
                lam_x[row, y] = val
                tot += val
            inv = 1.0 / tot
            for y in range(ny):
                lam_x[row, y] *= inv
        n_ty = 0
        for j in range(b):
            row = ys[ell, j]
            if not marked_y[row]:
                marked_y[row] = 1
                touched_y[n_ty] = row
                n_ty += 1
                for x in range(nx):
                    g_rows_y[row, x] = 0.0
            for x in range(nx):
                g_rows_y[row, x] += alpha_y[x, row, yps[ell, j]] * inv_b
        for j in range(n_ty):
            row = touched_y[j]
            marked_y[row] = 0
            mx = -1e300
            for x in range(nx):
                if lam_y[row, x] > 0.0:
                    w = log(lam_y[row, x]) - eta_y * g_rows_y[row, x]
                else:
                    w = -1e300
                g_rows_y[row, x] = w
                if w > mx:
                    mx = w
            tot = 0.0
            for x in range(nx):
                val = exp(g_rows_y[row, x] - mx)
                lam_y[row, x] = val
                tot += val
            inv = 1.0 / tot
            for x in range(nx):
                lam_y[row, x] *= inv
        for x in range(nx):
            for y in range(ny):
                lam_x_sum[x, y] += lam_x[x, y]
        for y in range(ny):
            for x in range(nx):
                lam_y_sum[y, x] += lam_y[y, x]

        # Clipped gradient-ascent steps for the multipliers.
        for x in range(nx):
            for xp in range(nx):
                for y in range(ny):
                    val = alpha_x[x, xp, y] - beta_x * g_ax[x, xp, y]
                    if val > cap_alpha:
                        val = cap_alpha
                    elif val < -cap_alpha:
                        val = -cap_alpha
                    alpha_x[x, xp, y] = val
        for x in range(nx):
            for y in range(ny):
                for yp in range(ny):
                    val = alpha_y[x, y, yp] - beta_y * g_ay[x, y, yp]
                    if val > cap_alpha:
                        val = cap_alpha
                    elif val < -cap_alpha:
                        val = -cap_alpha
                    alpha_y[x, y, yp] = val
        for x in range(nx):
            for y in range(ny):
                val = nu_mu[x, y] - gamma * e_mu[x, y]
                if x == x0 and y == y0:
                    val -= one_minus
                val = v[x, y] - beta_v * val
                if val > cap_v:
                    val = cap_v
                elif val < -cap_v:
                    val = -cap_v
                v[x, y] = val
    return -1
