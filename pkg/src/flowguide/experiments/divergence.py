"""Separation of paired guided trajectories against the analytic growth bounds.

Two trajectories start at ``x1`` and ``x1 + eps * u`` (``u`` a random unit
vector) and are integrated with the same constant scale. With elapsed time
``s = 1 - t`` and ``D(s) = ||x(s) - y(s)||`` the run reports:

* the fitted early growth rate, the slope of ``log D`` against ``s`` over the
  first ``horizon_frac`` of the steps;
* the lower-bound rate ``A = lambda sigma |1 - w rho0| / (w (L_u + L_delta))``
  and offset ``B = lambda ||v_w(x1)|| / (L_u + w L_delta)``;
* the upper bound ``(2 w rho_max V_max s + D(0)) exp(L_u (1 + w rho_max) s)``
  checked at every recorded step.

Constants are finite-difference estimates over the states visited inside the
window, so the bounds are checked on that probed region only. The lower
bound is approximate by construction and is only reported.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .. import rng as _rng
from ..errors import InvalidParameterError
from ..guidance import GuidanceSchedule, cfg_combine
from ..metrics import estimate_bound_constants
from ..mixture import velocity_fields
from ..sampler import integrate
from .common import ExperimentResult, parallel_map

COLUMNS = [
    "seed", "w", "rho0", "delta0", "growth_rate_fit", "lower_bound_A", "lower_bound_B",
    "step", "t", "elapsed", "delta_at_t", "lower_bound_at_t", "upper_bound_rhs_at_t",
    "upper_bound_ok", "overflow",
]


@dataclass(frozen=True)
class FixedScale(GuidanceSchedule):
    """Constant scale without the ``w >= 1`` floor, for sensitivity sweeps."""

    w: float
    kind = "fixed"

    def __post_init__(self):
        if not (math.isfinite(self.w) and self.w >= 0):
            raise InvalidParameterError("scale must be finite and non-negative")

    def _scale(self, step_index, rho):
        return np.full_like(rho, self.w) if np.ndim(rho) else self.w

    def params(self):
        return {"w": float(self.w)}


def window_steps(n_steps, horizon_frac):
    return min(n_steps, max(2, math.ceil(horizon_frac * n_steps)))


def growth_rate(elapsed, delta):
    d = np.asarray(delta, float)
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        return math.nan
    return float(np.polyfit(np.asarray(elapsed, float), np.log(d), 1)[0])


def _pair(spec, label, x1, u, eps, w, n_steps, K, integrator, fd_eps, check_bounds):
    res = integrate(spec, label, FixedScale(w), n_steps, integrator, np.stack([x1, x1 + eps * u]))
    times = res.times[: K + 1]
    elapsed = 1.0 - times
    overflow = bool(np.any(res.failed_step >= 0) and np.min(res.failed_step[res.failed_step >= 0]) <= K)
    X, Y = res.states[0, : K + 1], res.states[1, : K + 1]
    delta = np.linalg.norm(X - Y, axis=1)
    rho0 = float(res.ratios[0, 0])
    run = {"w": float(w), "rho0": rho0, "delta0": float(delta[0]), "overflow": overflow,
           "elapsed": elapsed, "times": times, "delta": delta,
           "growth_rate_fit": math.nan if overflow else growth_rate(elapsed, delta)}
    if not check_bounds or overflow:
        run.update(A=math.nan, B=math.nan, upper=np.full(K + 1, math.nan),
                   lower=np.full(K + 1, math.nan), upper_ok=None, constants=None)
        return run
    probes = np.concatenate([X, Y])
    probe_t = np.concatenate([times, times])
    c = estimate_bound_constants(spec, label, probe_t, probes, fd_eps, w=w,
                                 reference_path=(Y, times))
    v_u, v_c, _ = velocity_fields(spec, label, X[:1], 1.0)
    vw0 = float(np.linalg.norm(cfg_combine(v_u, v_c, w)))
    L_w = c.L_u + w * c.L_delta
    A = (c.lambda_max * c.sigma_min * abs(1.0 - w * rho0) / (w * (c.L_u + c.L_delta))
         if w > 0 and c.L_u + c.L_delta > 0 else math.nan)
    B = c.lambda_max * vw0 / L_w if L_w > 0 else math.nan
    upper = (2 * w * c.rho_max * c.V_max * elapsed + delta[0]) * np.exp(c.L_u * (1 + w * c.rho_max) * elapsed)
    lower = (delta[0] - B * elapsed) * np.exp(A * elapsed)
    ok = delta <= upper * (1 + 1e-12)
    run.update(A=A, B=B, upper=upper, lower=lower, upper_ok=bool(ok.all()), constants=c)
    return run


def run_divergence(spec, label, w_values, perturbation_eps=1e-4, n_steps=40, horizon_frac=0.25,
                   n_seeds=50, seed=0, integrator="euler", fd_eps=1e-5, check_bounds=True,
                   threads=1):
    if perturbation_eps <= 0:
        raise InvalidParameterError("perturbation_eps must be positive")
    w_values = [float(w) for w in w_values]
    if not w_values:
        raise InvalidParameterError("need at least one guidance scale")
    spec.class_spec(label)
    K = window_steps(n_steps, horizon_frac)

    def one(i):
        g = _rng.stream(seed, "divergence", i)
        x1 = g.standard_normal(spec.dim)
        u = g.standard_normal(spec.dim)
        u /= np.linalg.norm(u)
        return [_pair(spec, label, x1, u, perturbation_eps, w, n_steps, K, integrator, fd_eps,
                      check_bounds) for w in w_values]

    per_seed = parallel_map(one, range(n_seeds), threads)

    rows, violations = [], []
    for i, runs in enumerate(per_seed):
        for r in runs:
            for k in range(K + 1):
                rows.append({
                    "seed": i, "w": r["w"], "rho0": r["rho0"], "delta0": r["delta0"],
                    "growth_rate_fit": r["growth_rate_fit"], "lower_bound_A": r["A"],
                    "lower_bound_B": r["B"], "step": k, "t": float(r["times"][k]),
                    "elapsed": float(r["elapsed"][k]), "delta_at_t": float(r["delta"][k]),
                    "lower_bound_at_t": float(r["lower"][k]),
                    "upper_bound_rhs_at_t": float(r["upper"][k]),
                    "upper_bound_ok": None if r["upper_ok"] is None else bool(r["delta"][k] <= r["upper"][k] * (1 + 1e-12)),
                    "overflow": r["overflow"],
                })
            if r["upper_ok"] is False:
                c = r["constants"]
                violations.append({"seed": i, "w": r["w"], "constants": c.__dict__})

    summary = {"window_steps": K, "n_runs": n_seeds * len(w_values)}
    checked = [r["upper_ok"] for runs in per_seed for r in runs if r["upper_ok"] is not None]
    if checked:
        summary["upper_bound_pass_fraction"] = float(np.mean(checked))
        summary["upper_bound_violations"] = violations
    summary["overflow_runs"] = int(sum(r["overflow"] for runs in per_seed for r in runs))
    if len(w_values) > 1:
        summary.update(_sensitivity(per_seed, w_values))
    return ExperimentResult("divergence", COLUMNS, rows, summary)


def _sensitivity(per_seed, w_values):
    """Where the fitted growth rate is smallest, relative to ``1 / rho0``."""
    grid = np.asarray(w_values)
    cell = float(np.min(np.diff(np.sort(grid)))) if grid.size > 1 else 0.0
    hits, spearman, detail = [], [], []
    for i, runs in enumerate(per_seed):
        rates = np.array([r["growth_rate_fit"] for r in runs])
        rho0 = runs[0]["rho0"]
        if not np.any(np.isfinite(rates)) or not rho0 > 0:
            continue
        w_best = float(grid[np.nanargmin(rates)])
        target = 1.0 / rho0
        hits.append(abs(w_best - target) <= cell)
        fin = np.isfinite(rates)
        sp = stats.spearmanr(np.abs(1 - grid[fin] * rho0), rates[fin]).statistic if fin.sum() > 2 else math.nan
        spearman.append(sp)
        detail.append({"seed": i, "rho0": rho0, "inverse_rho0": target, "argmin_w": w_best,
                       "spearman_abs_one_minus_w_rho": float(sp)})
    sp = np.asarray(spearman, dtype=float)
    sp = sp[np.isfinite(sp)]
    return {
        "grid_cell": cell,
        "sensitivity_hit_fraction": float(np.mean(hits)) if hits else math.nan,
        "spearman_median": float(np.median(sp)) if sp.size else math.nan,
        "spearman_fraction_ge_0_9": float(np.mean(sp >= 0.9)) if sp.size else math.nan,
        "per_seed": detail,
    }
