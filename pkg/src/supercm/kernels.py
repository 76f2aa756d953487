"""Hot numeric kernels: row softmax and the clustering-module loss with its
gradient.

Each kernel exists twice: a loop version compiled by numba and a vectorised
numpy version. ``cm_terms_grads`` dispatches to whichever backend
:mod:`supercm._accel` selected at import time; ``softmax_rows`` is always the
numpy one (see the note at the bottom). Both versions are
exported under explicit names for testing and benchmarking.
"""
import numpy as np

from ._accel import NUMBA_ENABLED, maybe_njit

LOG_EPS = 1e-12


def _softmax_rows_loops(z):
    n, k = z.shape
    out = np.empty_like(z)
    for i in range(n):
        m = z[i, 0]
        for j in range(1, k):
            if z[i, j] > m:
                m = z[i, j]
        s = 0.0
        for j in range(k):
            e = np.exp(z[i, j] - m)
            out[i, j] = e
            s += e
        for j in range(k):
            out[i, j] = out[i, j] / s
    return out


def softmax_rows_numpy(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _cm_terms_grads_loops(x, gamma, mu, alpha):
    # Returns (recon, var, cross, dirichlet, d/dX, d/dGamma), all already
    # scaled by 1/N. mu is a constant: no gradient is produced for it.
    n, d = x.shape
    k = gamma.shape[1]
    inv_n = 1.0 / n

    gram = np.empty((k, k), dtype=x.dtype)
    for a in range(k):
        for b in range(k):
            acc = 0.0
            for j in range(d):
                acc += mu[a, j] * mu[b, j]
            gram[a, b] = acc

    gx = np.empty_like(x)
    gg = np.empty_like(gamma)
    resid = np.empty(d, dtype=x.dtype)
    col_mean = np.zeros(k, dtype=x.dtype)
    recon = 0.0
    var = 0.0
    cross = 0.0
    for i in range(n):
        for j in range(d):
            xb = 0.0
            for a in range(k):
                xb += gamma[i, a] * mu[a, j]
            r = x[i, j] - xb
            resid[j] = r
            recon += r * r
            gx[i, j] = 2.0 * r * inv_n
        for a in range(k):
            g_a = gamma[i, a]
            col_mean[a] += g_a
            var += g_a * (1.0 - g_a) * gram[a, a]
            # d recon / d gamma_ia = -2 <resid, mu_a>
            dot = 0.0
            for j in range(d):
                dot += resid[j] * mu[a, j]
            # cross = -sum_{a != b} g_a g_b G_ab
            off = 0.0
            for b in range(k):
                if b != a:
                    off += gram[a, b] * gamma[i, b]
                    cross -= g_a * gamma[i, b] * gram[a, b]
            gg[i, a] = (-2.0 * dot + (1.0 - 2.0 * g_a) * gram[a, a] - 2.0 * off) * inv_n

    dirichlet = 0.0
    for a in range(k):
        m = col_mean[a] * inv_n
        w = 1.0 - alpha[a]
        if m > LOG_EPS:
            dirichlet += w * np.log(m)
            coef = w / m * inv_n * inv_n
            if coef != 0.0:
                for i in range(n):
                    gg[i, a] += coef
        else:
            dirichlet += w * np.log(LOG_EPS)

    return recon * inv_n, var * inv_n, cross * inv_n, dirichlet * inv_n, gx, gg


def cm_terms_grads_numpy(x, gamma, mu, alpha):
    n = x.shape[0]
    gram = mu @ mu.T
    diag = np.diag(gram)
    resid = x - gamma @ mu
    recon = float(np.sum(resid * resid))
    var = float(np.sum(gamma * (1.0 - gamma) * diag))
    quad = np.einsum("ia,ab,ib->i", gamma, gram, gamma)
    cross = -float(np.sum(quad - (gamma * gamma) @ diag))

    gmean = gamma.mean(axis=0)
    ok = gmean > LOG_EPS
    w = 1.0 - alpha
    dirichlet = float(np.sum(w * np.log(np.where(ok, gmean, LOG_EPS))))

    gg = -2.0 * resid @ mu.T + (1.0 - 2.0 * gamma) * diag
    gg -= 2.0 * (gamma @ gram - gamma * diag)
    gg += np.where(ok, w / np.where(ok, gmean, 1.0), 0.0) / n
    gg /= n
    gx = 2.0 * resid / n
    return recon / n, var / n, cross / n, dirichlet / n, gx, gg


softmax_rows_numba = maybe_njit(_softmax_rows_loops)
cm_terms_grads_numba = maybe_njit(_cm_terms_grads_loops)

# Softmax always runs through numpy: the compiled exp differs from numpy's in
# the last ulp, which would break bit-exact agreement with plain numpy
# training code. Its share of a training step is small either way.
softmax_rows = softmax_rows_numpy
cm_terms_grads = cm_terms_grads_numba if NUMBA_ENABLED else cm_terms_grads_numpy
