"""Reverse-time integration of the guided flow from noise (t=1) to data (t=0).

The velocity ``v = E[x1 - x0 | x_t]`` points from data toward noise, so each
step moves against it: ``x_{k+1} = x_k - dt * v_cfg(x_k, t_k)`` on the uniform
grid ``t_k = 1 - k / n_steps``. Integration is vectorised over seeds; each
seed has its own ratio and therefore its own scale under ratio-aware
schedules. Every step costs two oracle evaluations (conditional and
unconditional), four for Heun.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .errors import InvalidParameterError, NonFiniteStateError
from .guidance import cfg_combine
from .mixture import velocity_fields


class Integrator(str, enum.Enum):
    EULER = "euler"
    HEUN = "heun"


@dataclass
class Trajectory:
    times: np.ndarray    # (N+1,)
    states: np.ndarray   # (N+1, d)
    ratios: np.ndarray   # (N,) measured before each step
    scales: np.ndarray   # (N,) applied at each step
    seed: int | None = None
    failed_step: int | None = None

    @property
    def failed(self):
        return self.failed_step is not None

    @property
    def terminal(self):
        return self.states[-1]


@dataclass
class BatchResult:
    """Arrays for a batch of trajectories sharing one time grid."""

    times: np.ndarray    # (N+1,)
    states: np.ndarray   # (n, N+1, d)
    ratios: np.ndarray   # (n, N)
    scales: np.ndarray   # (n, N)
    failed_step: np.ndarray  # (n,) int, -1 when the run finished

    @property
    def ok(self):
        return self.failed_step < 0

    @property
    def terminal(self):
        return self.states[:, -1]

    def trajectory(self, i, seed=None):
        fs = int(self.failed_step[i])
        return Trajectory(self.times, self.states[i], self.ratios[i], self.scales[i],
                          seed, None if fs < 0 else fs)


def time_grid(n_steps):
    if n_steps < 1:
        raise InvalidParameterError("n_steps must be at least 1")
    t = 1.0 - np.arange(n_steps + 1) / n_steps
    t[-1] = 0.0
    return t


def _guided(spec, label, schedule, k, X, t):
    v_u, v_c, rho = velocity_fields(spec, label, X, t)
    w = schedule.scale_at(k, rho)
    return cfg_combine(v_u, v_c, np.broadcast_to(w, rho.shape)), rho, w


def integrate(spec, label, schedule, n_steps, integrator, X1):
    """Integrate a batch of starting points ``X1`` of shape ``(n, d)``."""
    integrator = Integrator(integrator)
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    n, d = X1.shape
    times = time_grid(n_steps)
    dt = 1.0 / n_steps
    states = np.full((n, n_steps + 1, d), np.nan)
    ratios = np.full((n, n_steps), np.nan)
    scales = np.full((n, n_steps), np.nan)
    failed = np.full(n, -1, dtype=int)
    states[:, 0] = X1
    live = np.arange(n)
    x = X1.copy()
    for k in range(n_steps):
        if live.size == 0:
            break
        with np.errstate(all="ignore"):
            v1, rho, w = _guided(spec, label, schedule, k, x, times[k])
            if integrator is Integrator.EULER:
                x_next = x - dt * v1
            else:
                x_pred = x - dt * v1
                ok_pred = np.all(np.isfinite(x_pred), axis=1)
                v2 = np.full_like(v1, np.nan)
                if ok_pred.any():
                    v2[ok_pred] = _guided(spec, label, schedule, k, x_pred[ok_pred], times[k + 1])[0]
                x_next = x - 0.5 * dt * (v1 + v2)
        ratios[live, k] = rho
        scales[live, k] = w
        good = np.all(np.isfinite(x_next), axis=1)
        failed[live[~good]] = k
        states[live[good], k + 1] = x_next[good]
        live, x = live[good], x_next[good]
    return BatchResult(times, states, ratios, scales, failed)


def sample(spec, label, schedule, n_steps, integrator, x1):
    """One guided trajectory from ``x1``; raises on a non-finite state."""
    res = integrate(spec, label, schedule, n_steps, integrator, np.asarray(x1, dtype=float)[None])
    if res.failed_step[0] >= 0:
        raise NonFiniteStateError(int(res.failed_step[0]))
    return res.trajectory(0)


def sample_batch(spec, label, schedule, n_steps, integrator, n_seeds, rng_seed):
    """``n_seeds`` trajectories from independent noise draws.

    Seed ``i`` starts from ``rng.noise_batch(rng_seed, ...)[i]``, so the batch
    is reproducible and each member is independent of ``n_seeds``. Failed
    members are returned with ``failed_step`` set rather than aborting.
    """
    if n_seeds == 0:
        return []
    X1 = _rng.noise_batch(rng_seed, n_seeds, spec.dim)
    res = integrate(spec, label, schedule, n_steps, integrator, X1)
    return [res.trajectory(i, seed=i) for i in range(n_seeds)]


def trajectory_rows(traj, seed, spec_mean=None):
    """CSV rows ``(seed, step, t, scale, ratio, state_norm, divergence_flag)``."""
    rows = []
    for k in range(len(traj.ratios)):
        norm = float(np.linalg.norm(traj.states[k + 1]))
        rows.append({
            "seed": seed,
            "step": k,
            "t": float(traj.times[k]),
            "scale": float(traj.scales[k]),
            "ratio": float(traj.ratios[k]),
            "state_norm": norm,
            "divergence_flag": int(traj.failed_step == k or not math.isfinite(norm)),
        })
    return rows
