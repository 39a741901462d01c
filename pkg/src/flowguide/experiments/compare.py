"""Schedule comparison over step counts, and the (w_max, alpha) sensitivity sweep."""
import itertools

import numpy as np

from .. import rng as _rng
from ..errors import InvalidParameterError
from ..guidance import Constant, Raag
from ..metrics import EnergyScorer
from ..mixture import sample_data
from ..sampler import integrate
from .common import ExperimentResult, parallel_map

COLUMNS = ["schedule", "n_steps", "energy_distance", "mean_error"]
SWEEP_COLUMNS = ["w_max", "alpha", "n_steps", "energy_distance", "mean_error"]


class _Bench:
    """Fixed noise and reference sets per label, shared by every cell."""

    def __init__(self, spec, labels, n_seeds, seed, n_reference):
        self.spec = spec
        self.labels = list(labels) if labels else spec.labels
        self.noise = {
            lab: _rng.noise_batch(_rng.child_seed(seed, "compare-noise", lab), n_seeds, spec.dim)
            for lab in self.labels
        }
        self.scorers = {
            lab: EnergyScorer(sample_data(spec, lab, n_reference,
                                          _rng.child_seed(seed, "compare-reference", lab)))
            for lab in self.labels
        }

    def score(self, schedule, n_steps, integrator="euler"):
        """Label-averaged energy distance and mean error; failed seeds excluded."""
        eds, errs, failed = [], [], 0
        for lab in self.labels:
            res = integrate(self.spec, lab, schedule, n_steps, integrator, self.noise[lab])
            term = res.terminal[res.ok]
            failed += int((~res.ok).sum())
            if term.shape[0] < 2:
                eds.append(np.inf)
                errs.append(np.inf)
                continue
            eds.append(self.scorers[lab](term))
            errs.append(np.linalg.norm(term.mean(axis=0) - self.spec.class_mean(lab)))
        return float(np.mean(eds)), float(np.mean(errs)), failed


def run_schedule_comparison(spec, labels, schedules, step_counts, n_seeds, seed,
                            n_reference=1000, integrator="euler", threads=1):
    """Full factorial over ``schedules x step_counts``; one row per cell."""
    kinds = {s.kind for s in schedules}
    if not {"constant", "raag"} <= kinds:
        raise InvalidParameterError("comparison needs at least one constant and one raag schedule")
    bench = _Bench(spec, labels, n_seeds, seed, n_reference)
    cells = list(itertools.product(schedules, step_counts))

    def one(cell):
        sched, n = cell
        ed, err, failed = bench.score(sched, n, integrator)
        return {"schedule": sched.label(), "n_steps": int(n), "energy_distance": ed,
                "mean_error": err, "failed_seeds": failed}

    rows = parallel_map(one, cells, threads)
    best = min(rows, key=lambda r: r["energy_distance"])
    summary = {
        "best_cell": {"schedule": best["schedule"], "n_steps": best["n_steps"]},
        "failed_seeds": int(sum(r["failed_seeds"] for r in rows)),
        "quality": "energy distance to reference p(x0|c) samples; lower is better",
    }
    return ExperimentResult("compare", COLUMNS, rows, summary)


def run_sweep(spec, labels, w_max_values, alpha_values, n_steps, n_seeds, seed,
              n_reference=1000, integrator="euler", threads=1):
    """RAAG over a ``w_max x alpha`` grid; reports the spread between best and worst cells."""
    bench = _Bench(spec, labels, n_seeds, seed, n_reference)
    cells = list(itertools.product(w_max_values, alpha_values))

    def one(cell):
        w_max, alpha = cell
        ed, err, _ = bench.score(Raag(w_max, alpha), n_steps, integrator)
        return {"w_max": float(w_max), "alpha": float(alpha), "n_steps": int(n_steps),
                "energy_distance": ed, "mean_error": err}

    rows = parallel_map(one, cells, threads)
    eds = np.array([r["energy_distance"] for r in rows])
    best, worst = rows[int(np.argmin(eds))], rows[int(np.argmax(eds))]
    const_ed = bench.score(Constant(7.0), n_steps, integrator)[0]
    summary = {
        "best": {"w_max": best["w_max"], "alpha": best["alpha"], "energy_distance": best["energy_distance"]},
        "worst": {"w_max": worst["w_max"], "alpha": worst["alpha"], "energy_distance": worst["energy_distance"]},
        "best_to_worst_ratio": float(eds.min() / eds.max()),
        "constant_7_energy_distance": const_ed,
        "cells_beating_constant_7": int((eds <= const_ed).sum()),
    }
    return ExperimentResult("sweep", SWEEP_COLUMNS, rows, summary)
