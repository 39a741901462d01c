"""Sample-quality metrics and empirical constants for the divergence bounds."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .errors import InvalidParameterError
from .mixture import component_tables, conditional_velocity, ratio_of, unconditional_velocity


def energy_distance(a, b):
    """V-statistic energy distance ``2 E|A-B| - E|A-A'| - E|B-B'|``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise InvalidParameterError("samples must share a dimension")
    mpd = _kernels.mean_pairwise_distance
    ab = mpd(a, b)
    # symmetrised so that ed(a, b) == ed(b, a) bit for bit
    ba = mpd(b, a)
    return (ab + ba) - mpd(a, a) - mpd(b, b)


@dataclass(frozen=True)
class QualityScore:
    energy_distance: float
    mean_error: float


class EnergyScorer:
    """Energy distance to a fixed reference sample, caching its self-term."""

    def __init__(self, reference):
        self.reference = np.ascontiguousarray(reference, dtype=float)
        self._ref_term = _kernels.mean_pairwise_distance(self.reference, self.reference)

    def __call__(self, samples):
        a = np.ascontiguousarray(samples, dtype=float)
        mpd = _kernels.mean_pairwise_distance
        return 2.0 * mpd(a, self.reference) - mpd(a, a) - self._ref_term


def quality(samples, reference, target_mean):
    samples = np.asarray(samples, dtype=float)
    return QualityScore(
        energy_distance=float(energy_distance(samples, reference)),
        mean_error=float(np.linalg.norm(samples.mean(axis=0) - target_mean)),
    )


# -- Jacobians -------------------------------------------------------------------


def fd_jacobian(f, x, eps=1e-5, central=True):
    """Finite-difference Jacobian of ``f: R^d -> R^d`` at ``x``."""
    x = np.asarray(x, dtype=float)
    d = x.size
    J = np.empty((d, d))
    f0 = None if central else f(x)
    for j in range(d):
        e = np.zeros(d)
        e[j] = eps
        if central:
            J[:, j] = (f(x + e) - f(x - e)) / (2 * eps)
        else:
            J[:, j] = (f(x + e) - f0) / eps
    return J


def analytic_velocity_jacobian(spec, label, x, t):
    """Exact Jacobian of the mixture velocity at ``x``.

    With responsibilities ``r_k``, component velocities ``v_k = A_k (x - m_k) - mu_k``
    and log-density gradients ``g_k = -P_k (x - m_k)``,
    ``J = sum_k r_k A_k + sum_k r_k v_k (g_k - sum_j r_j g_j)^T``.
    """
    means_t, prec, amap, shift, logc = component_tables(spec, label, t)
    x = np.asarray(x, dtype=float)
    R = x[None, :] - means_t
    g = -np.einsum("kij,kj->ki", prec, R)
    logp = logc + 0.5 * np.einsum("ki,ki->k", R, g)
    r = np.exp(logp - logsumexp(logp))
    v = np.einsum("kij,kj->ki", amap, R) - shift
    gbar = r @ g
    return np.einsum("k,kij->ij", r, amap) + np.einsum("k,ki,kj->ij", r, v, g - gbar)


# -- bound constants -------------------------------------------------------------


@dataclass(frozen=True)
class BoundConstants:
    """Empirical (probe-set) constants; local estimates, not global suprema."""

    L_u: float
    L_delta: float
    sigma_min: float
    lambda_max: float
    rho_max: float
    V_max: float
    fd_unstable: bool = False


def _fd_jacobians(f, X, eps):
    """Central and forward Jacobians of a batched field ``f: (n, d) -> (n, d)``."""
    n, d = X.shape
    E = eps * np.eye(d)
    plus = (X[:, None, :] + E[None]).reshape(-1, d)
    minus = (X[:, None, :] - E[None]).reshape(-1, d)
    F = f(np.concatenate([plus, minus, X]))
    fp = F[: n * d].reshape(n, d, d)
    fm = F[n * d: 2 * n * d].reshape(n, d, d)
    f0 = F[2 * n * d:]
    # fp[i, j, :] is f at x_i + eps e_j, so transpose to rows = outputs
    central = np.swapaxes((fp - fm) / (2 * eps), 1, 2)
    forward = np.swapaxes((fp - f0[:, None, :]) / eps, 1, 2)
    return central, forward, f0


def estimate_bound_constants(spec, label, t_grid, probe_points, fd_eps=1e-5, w=1.0,
                             reference_path=None):
    """Finite-difference Lipschitz and spectral constants over a probe set.

    ``probe_points`` is ``(m, d)`` and ``t_grid`` gives each probe's time
    (a scalar applies to all). ``reference_path`` is an optional
    ``(states, times)`` pair along which ``V_max = max ||v_u||`` is taken;
    it defaults to the probes. ``lambda_max`` is the largest real part of an
    eigenvalue of the guided Jacobian ``J_u + w J_delta``, floored at 0.
    """
    if fd_eps <= 0:
        raise InvalidParameterError("fd_eps must be positive")
    X = np.atleast_2d(np.asarray(probe_points, dtype=float))
    T = np.broadcast_to(np.asarray(t_grid, dtype=float), (X.shape[0],))
    if X.shape[0] < 10:
        raise InvalidParameterError("need at least 10 probe points")
    Ju, Jd, Ju_fwd, vu, vd = [], [], [], [], []
    for t in np.unique(T):
        sel = T == t
        cu, fu, u0 = _fd_jacobians(lambda Z: unconditional_velocity(spec, Z, t), X[sel], fd_eps)
        cc, _, c0 = _fd_jacobians(lambda Z: conditional_velocity(spec, label, Z, t), X[sel], fd_eps)
        Ju.append(cu)
        Ju_fwd.append(fu)
        Jd.append(cc - cu)
        vu.append(u0)
        vd.append(c0 - u0)
    Ju, Jd, Ju_fwd = np.concatenate(Ju), np.concatenate(Jd), np.concatenate(Ju_fwd)
    vu, vd = np.concatenate(vu), np.concatenate(vd)

    sv = np.linalg.svd(Ju, compute_uv=False)
    spread = np.linalg.norm(Ju - Ju_fwd, ord=2, axis=(1, 2))
    unstable = bool(np.any(spread > 0.1 * np.maximum(sv[:, 0], 1e-12)))
    if unstable:
        warnings.warn("central and forward differences disagree by more than 10%",
                      RuntimeWarning, stacklevel=2)
    lam = np.linalg.eigvals(Ju + w * Jd).real.max()
    rho = ratio_of(vd, vu)
    rho_max = float(np.nanmax(rho)) if np.any(np.isfinite(rho)) else 0.0
    if reference_path is None:
        V_max = float(np.linalg.norm(vu, axis=1).max())
    else:
        states, times = reference_path
        V_max = max(float(np.linalg.norm(unconditional_velocity(spec, x, t)))
                    for x, t in zip(states, times))
    return BoundConstants(
        L_u=float(sv[:, 0].max()),
        L_delta=float(np.linalg.norm(Jd, ord=2, axis=(1, 2)).max()),
        sigma_min=float(sv[:, -1].min()),
        lambda_max=float(max(lam, 0.0)),
        rho_max=rho_max,
        V_max=V_max,
        fd_unstable=unstable,
    )


def guided_jacobian(spec, label, x, t, w):
    """Analytic Jacobian of ``v_u + w * delta``."""
    Ju = analytic_velocity_jacobian(spec, None, x, t)
    Jc = analytic_velocity_jacobian(spec, label, x, t)
    return Ju + w * (Jc - Ju)
