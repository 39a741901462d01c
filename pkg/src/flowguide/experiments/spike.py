"""Ratio trajectory across reverse steps, aggregated over seeds."""
import numpy as np

from .. import rng as _rng
from ..errors import InsufficientSeedsError
from ..sampler import integrate
from .common import ExperimentResult

COLUMNS = ["t", "mean_ratio", "p10", "p90"]


def run_ratio_spike(spec, label, schedule, n_steps, n_seeds, seed, integrator="euler",
                    keep_trajectories=False):
    """Per-step ratio statistics over ``n_seeds`` guided trajectories.

    Failed seeds are excluded from the statistics and counted. Undefined
    ratios are skipped when averaging.
    """
    if n_seeds < 50:
        raise InsufficientSeedsError("ratio-spike needs at least 50 seeds")
    X1 = _rng.noise_batch(seed, n_seeds, spec.dim)
    res = integrate(spec, label, schedule, n_steps, integrator, X1)
    ratios = res.ratios[res.ok]
    mean = np.nanmean(ratios, axis=0)
    p10 = np.nanquantile(ratios, 0.1, axis=0)
    p90 = np.nanquantile(ratios, 0.9, axis=0)
    rows = [
        {"t": float(res.times[k]), "mean_ratio": float(mean[k]), "p10": float(p10[k]),
         "p90": float(p90[k])}
        for k in range(n_steps)
    ]
    drops = mean[:-1] - mean[1:]
    half = n_steps // 2
    summary = {
        "excluded_seeds": int((~res.ok).sum()),
        "mean_ratio_first": float(mean[0]),
        "mean_ratio_second_half": float(np.mean(mean[half:])),
        "spike": bool(mean[0] > np.mean(mean[half:])),
        "largest_drop_step": int(np.argmax(drops)) if drops.size else None,
        "largest_drop": float(drops.max()) if drops.size else None,
        "drop_first_two_steps": float(mean[0] - mean[min(2, n_steps - 1)]),
    }
    out = ExperimentResult("ratio-spike", COLUMNS, rows, summary)
    if keep_trajectories:
        out.trajectories = [res.trajectory(i, seed=i) for i in range(n_seeds)]
    return out
