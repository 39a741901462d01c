"""Greedy per-step guidance search followed by an exponential fit of w*(rho).

Quality is an energy distance to reference conditional samples, so the
search minimises (the image-reward version maximises). Every candidate for
step k is evaluated on the same noise draws and the same reference set, and
the candidate grid contains the incumbent value, so the best score can never
get worse from one step to the next.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import rng as _rng
from ..errors import FlowGuideError, InvalidParameterError
from ..guidance import Table, fit_exponential
from ..metrics import EnergyScorer
from ..mixture import sample_data
from ..sampler import integrate
from .common import ExperimentResult, parallel_map

log = logging.getLogger(__name__)

COLUMNS = ["label", "step", "rho", "w_star", "best_score", "default_score"]


@dataclass(frozen=True)
class GreedyConfig:
    n_search_steps: int = 3
    total_steps: int = 10
    default_w: float = 7.0
    grid: tuple = field(default_factory=lambda: tuple(np.arange(1.0, 9.01, 0.5).round(10)))

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        if self.n_search_steps < 1 or self.total_steps < self.n_search_steps:
            raise InvalidParameterError("need 1 <= n_search_steps <= total_steps")
        if list(self.grid) != sorted(self.grid) or min(self.grid) < 1:
            raise InvalidParameterError("grid must be sorted ascending with values >= 1")
        if self.default_w not in self.grid:
            raise InvalidParameterError("grid must contain default_w so the incumbent is a candidate")

    @property
    def n_candidates(self):
        return len(self.grid) * self.n_search_steps


def greedy_search_label(spec, label, cfg, n_eval_seeds, seed, n_reference=1000,
                        integrator="euler", threads=1):
    """Greedy search for one label.

    Returns ``(rows, scores)`` where ``scores[k]`` is the best score after
    step ``k`` and ``scores[-1]`` (index 0 of the list) the all-default score.
    """
    X1 = _rng.noise_batch(_rng.child_seed(seed, "greedy-noise", label), n_eval_seeds, spec.dim)
    scorer = EnergyScorer(sample_data(spec, label, n_reference,
                                      _rng.child_seed(seed, "greedy-reference", label)))

    def evaluate(entries):
        res = integrate(spec, label, Table(tuple(entries)), cfg.total_steps, integrator, X1)
        if not res.ok.any():
            return np.inf, res
        return float(scorer(res.terminal[res.ok])), res

    chosen = [cfg.default_w] * cfg.total_steps
    default_score, res0 = evaluate(chosen)
    best_scores = [default_score]
    rows = []
    for k in range(cfg.n_search_steps):
        candidates = []
        for w in cfg.grid:
            entries = list(chosen)
            entries[k] = w
            candidates.append(entries)
        results = parallel_map(evaluate, candidates, threads)
        scores = [r[0] for r in results]
        # strict < over an ascending grid: ties resolve to the smallest w
        best = 0
        for i, s in enumerate(scores):
            if s < scores[best]:
                best = i
        chosen[k] = cfg.grid[best]
        rho_k = float(np.nanmean(results[best][1].ratios[:, k]))
        best_scores.append(scores[best])
        rows.append({
            "label": label,
            "step": k,
            "rho": rho_k,
            "w_star": chosen[k],
            "best_score": scores[best],
            "default_score": default_score,
        })
    return rows, best_scores


def run_greedy_search(spec, labels, cfg, n_eval_seeds, seed, quality="energy_distance",
                      n_reference=1000, integrator="euler", threads=1):
    if quality != "energy_distance":
        raise InvalidParameterError(f"unsupported quality metric {quality!r}")
    labels = list(labels) if labels else spec.labels
    rows, sequences, skipped = [], {}, []
    for label in labels:
        lrows, scores = greedy_search_label(spec, label, cfg, n_eval_seeds, seed, n_reference,
                                            integrator, threads)
        if any(np.isnan(r["rho"]) for r in lrows):
            log.warning("label %s produced undefined ratios; skipped from the fit", label)
            skipped.append(label)
            continue
        rows.extend(lrows)
        sequences[label] = scores
    monotone = all(
        all(b <= a for a, b in zip(seq, seq[1:])) for seq in sequences.values()
    )
    pairs = [(r["rho"], r["w_star"]) for r in rows]
    summary = {
        "quality": "energy distance to reference p(x0|c) samples; lower is better (argmin)",
        "n_candidates_per_label": cfg.n_candidates,
        "best_score_sequences": sequences,
        "monotone_non_increasing": bool(monotone),
        "skipped_labels": skipped,
    }
    try:
        fit = fit_exponential(pairs)
        summary["fit"] = {
            "w_max_hat": fit.w_max_hat,
            "alpha_hat": fit.alpha_hat,
            "rmse_log": fit.rmse_log,
            "n_points_used": fit.n_points_used,
            "n_points_excluded": fit.n_points_excluded,
        }
    except FlowGuideError as exc:
        fit = None
        summary["fit"] = None
        summary["fit_error"] = f"{exc.kind}: {exc}"
    result = ExperimentResult("greedy", COLUMNS, rows, summary)
    result.fit = fit
    return result
