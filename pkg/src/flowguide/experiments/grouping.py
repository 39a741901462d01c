"""Seeds grouped by first-step ratio: does a low initial ratio give better samples?"""
import numpy as np
from scipy import stats

from .. import rng as _rng
from ..errors import InsufficientSeedsError
from ..guidance import Constant
from ..metrics import EnergyScorer
from ..mixture import sample_data
from ..sampler import integrate
from .common import ExperimentResult, parallel_map

COLUMNS = ["condition", "label", "low_score", "high_score", "low_mean_ratio", "high_mean_ratio"]


def permutation_pvalue(low, high, n_resamples, seed):
    """One-sided two-sample permutation test of ``mean(high) > mean(low)``."""
    res = stats.permutation_test(
        (np.asarray(high, float), np.asarray(low, float)),
        lambda a, b, axis: np.mean(a, axis=axis) - np.mean(b, axis=axis),
        permutation_type="independent",
        vectorized=True,
        n_resamples=n_resamples,
        alternative="greater",
        random_state=_rng.stream(seed, "permutation"),
    )
    return float(res.pvalue)


def run_ratio_grouping(spec, labels, w_const, n_steps, n_prompts_analog, n_seeds_per, top_k, seed,
                       n_reference=1000, n_resamples=10_000, integrator="euler", threads=1):
    """Split each condition's seeds into bottom-k / top-k by ``ratios[0]`` and score both.

    Condition ``j`` uses label ``labels[j % len(labels)]`` with its own noise
    stream. Scores are energy distances (lower is better) of each group's
    terminal samples to reference draws from ``p(x0 | label)``.
    """
    if n_seeds_per < 2 * top_k or top_k < 1:
        raise InsufficientSeedsError("need n_seeds_per >= 2 * top_k and top_k >= 1")
    labels = list(labels) if labels else spec.labels
    schedule = Constant(w_const)

    def one(j):
        label = labels[j % len(labels)]
        X1 = _rng.noise_batch(_rng.child_seed(seed, "condition", j), n_seeds_per, spec.dim)
        res = integrate(spec, label, schedule, n_steps, integrator, X1)
        ok = np.flatnonzero(res.ok)
        order = ok[np.argsort(res.ratios[ok, 0], kind="stable")]
        low, high = order[:top_k], order[-top_k:]
        ref = sample_data(spec, label, n_reference, _rng.child_seed(seed, "reference", j))
        score = EnergyScorer(ref)
        return {
            "condition": j,
            "label": label,
            "low_score": float(score(res.terminal[low])),
            "high_score": float(score(res.terminal[high])),
            "low_mean_ratio": float(res.ratios[low, 0].mean()),
            "high_mean_ratio": float(res.ratios[high, 0].mean()),
            "excluded": int(n_seeds_per - ok.size),
        }

    rows = parallel_map(one, range(n_prompts_analog), threads)
    low = [r["low_score"] for r in rows]
    high = [r["high_score"] for r in rows]
    p = permutation_pvalue(low, high, n_resamples, seed) if len(rows) > 1 else float("nan")
    summary = {
        "low_group_score": float(np.mean(low)),
        "high_group_score": float(np.mean(high)),
        "low_group_sd": float(np.std(low, ddof=1)) if len(low) > 1 else None,
        "high_group_sd": float(np.std(high, ddof=1)) if len(high) > 1 else None,
        "p_value": p,
        "test": "one-sided two-sample permutation test on per-condition scores, "
                f"{n_resamples} resamples, alternative mean(high) > mean(low)",
        "excluded_seeds": int(sum(r["excluded"] for r in rows)),
    }
    return ExperimentResult("ratio-group", COLUMNS, rows, summary)
