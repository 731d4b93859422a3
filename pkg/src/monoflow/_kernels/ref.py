"""Reference (pure numpy) implementation of the hot mixture kernels.

Both backends share one contract.  Inputs describe a gaussian mixture at a
fixed evaluation time, reduced to per-term constants::

    log term_k(x) = consts[k] - inv4tau[k] * <A (x - c_k), (x - c_k)>

where ``inv4tau[k] = 1 / (4 * (t + t0_k))`` and ``consts[k]`` absorbs the
log-weight and normalisation.  Outputs are log-space jets of the mixture:
log-value, d/dt of the log, gradient of the log and hessian of the log.
"""

from __future__ import annotations

import numpy as np


def _terms(A, consts, inv4tau, centers, X):
    # D: (N, m, n); Q: (N, m) quadratic forms; LT: (N, m) per-term logs
    D = X[:, None, :] - centers[None, :, :]
    AD = D @ A
    Q = np.einsum("nmi,nmi->nm", AD, D)
    LT = consts[None, :] - Q * inv4tau[None, :]
    return D, AD, Q, LT


def _logsumexp(LT):
    M = LT.max(axis=1)
    S = np.exp(LT - M[:, None])
    Z = S.sum(axis=1)
    return M + np.log(Z), S / Z[:, None]


def mixture_log_values(A, consts, inv4tau, centers, X):
    """Log of the mixture value at each row of X.  Returns shape (N,)."""
    _, _, _, LT = _terms(A, consts, inv4tau, centers, X)
    lv, _ = _logsumexp(LT)
    return lv


def mixture_log_jets(A, consts, inv4tau, centers, X):
    """Log-space jets of the mixture at each row of X.

    Returns ``(lv, lt, lg, lh)`` with shapes (N,), (N,), (N,n), (N,n,n):
    log-value, time derivative of the log, spatial gradient of the log and
    spatial hessian of the log.
    """
    N, n = X.shape
    _, AD, Q, LT = _terms(A, consts, inv4tau, centers, X)
    lv, P = _logsumexp(LT)

    # per-term log-gradient g_k = -A d_k / (2 tau_k) = -2 inv4tau_k * A d_k
    G = -2.0 * inv4tau[None, :, None] * AD
    lg = np.einsum("nm,nmi->ni", P, G)

    # mixture identity: D^2 log u = sum_k P_k (D^2 log w_k + g_k g_k^T) - lg lg^T
    w_scale = P @ inv4tau  # (N,)
    lh = (
        -2.0 * w_scale[:, None, None] * A[None, :, :]
        + np.einsum("nm,nmi,nmj->nij", P, G, G)
        - lg[:, :, None] * lg[:, None, :]
    )

    # per-term dt log w_k = -n/(2 tau_k) + Q_k/(4 tau_k^2)
    LTT = -2.0 * n * inv4tau[None, :] + 4.0 * (inv4tau[None, :] ** 2) * Q
    lt = np.einsum("nm,nm->n", P, LTT)
    return lv, lt, lg, lh
