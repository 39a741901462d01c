"""Pure numpy implementations of the hot kernels.

Used whenever the compiled extension is unavailable, and as the parity
reference for it in the test suite.
"""
import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp


def mixture_velocity(X, means_t, prec, amap, shift, logc, want_resp=False):
    """Responsibility-weighted sum of per-component affine velocities.

    For component k with time-t marginal N(means_t[k], S_k), prec[k] = S_k^-1,
    the component velocity is ``amap[k] @ (x - means_t[k]) - shift[k]`` and the
    unnormalised log responsibility is ``logc[k] - 0.5 * r' prec[k] r``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    R = X[None, :, :] - means_t[:, None, :]                 # (K, n, d)
    PR = np.einsum("kij,knj->kni", prec, R)
    logp = logc[:, None] - 0.5 * np.einsum("kni,kni->kn", R, PR)
    logp -= logsumexp(logp, axis=0, keepdims=True)
    resp = np.exp(logp)                                     # (K, n)
    Vk = np.einsum("kij,knj->kni", amap, R) - shift[:, None, :]
    V = np.einsum("kn,kni->ni", resp, Vk)
    if want_resp:
        return V, resp.T.copy()
    return V


def mean_pairwise_distance(A, B):
    """Mean Euclidean distance over all (a, b) pairs."""
    return float(cdist(A, B).mean())
