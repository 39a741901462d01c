"""Command-line entry point.

    flowguide run <config.json> [--force] [--threads N] [--dump-states]
    flowguide gen-spec <preset> <out.json>

Exit codes: 0 success, 1 runtime failure, 2 configuration error. Failures
print one JSON object ``{"error": kind, "message": ..., "violations": [...]}``
on stderr.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ConfigError, FlowGuideError
from .experiments import (
    GreedyConfig,
    run_divergence,
    run_greedy_search,
    run_ratio_grouping,
    run_ratio_spike,
    run_schedule_comparison,
    run_sweep,
)
from .experiments.common import config_hash, default_threads, write_csv, write_json
from .guidance import alternative_schedules, schedule_from_dict, Raag
from .mixture import MixtureSpec
from .presets import PRESETS, preset
from .sampler import Integrator, trajectory_rows

EXPERIMENTS = ("ratio-spike", "ratio-group", "divergence", "greedy", "compare", "sweep")

_num = (int, float)
_int = (int,)


def _opt_labels(v):
    return v is None or (isinstance(v, list) and all(isinstance(x, (str, int)) for x in v))


def _num_list(v):
    return isinstance(v, list) and len(v) > 0 and all(
        isinstance(x, _num) and not isinstance(x, bool) for x in v)


def _int_list(v):
    return isinstance(v, list) and len(v) > 0 and all(
        isinstance(x, int) and not isinstance(x, bool) and x >= 1 for x in v)


def _is_int(v, lo=None):
    return isinstance(v, int) and not isinstance(v, bool) and (lo is None or v >= lo)


def _is_num(v, lo=None, strict=False):
    if not isinstance(v, _num) or isinstance(v, bool) or not math.isfinite(v):
        return False
    if lo is None:
        return True
    return v > lo if strict else v >= lo


def _is_integrator(v):
    return v in {i.value for i in Integrator}


def _is_schedule(v):
    return isinstance(v, dict) and "kind" in v


def _is_schedule_list(v):
    return isinstance(v, list) and len(v) > 0 and all(_is_schedule(s) for s in v)


# name -> (default, check, description); a default of ... means required
_PARAMS = {
    "ratio-spike": {
        "label": (None, lambda v: v is None or isinstance(v, (str, int)), "class label"),
        "schedule": ({"kind": "constant", "params": {"w": 7.0}}, _is_schedule, "schedule object"),
        "n_steps": (10, lambda v: _is_int(v, 1), "integer >= 1"),
        "n_seeds": (100, lambda v: _is_int(v, 50), "integer >= 50"),
        "integrator": ("euler", _is_integrator, "'euler' or 'heun'"),
    },
    "ratio-group": {
        "labels": (None, _opt_labels, "list of labels or null"),
        "w_const": (7.0, lambda v: _is_num(v, 1), "number >= 1"),
        "n_steps": (10, lambda v: _is_int(v, 1), "integer >= 1"),
        "n_prompts_analog": (None, lambda v: v is None or _is_int(v, 1), "integer >= 1 or null"),
        "n_seeds_per": (20, lambda v: _is_int(v, 2), "integer >= 2"),
        "top_k": (10, lambda v: _is_int(v, 1), "integer >= 1"),
        "n_reference": (1000, lambda v: _is_int(v, 2), "integer >= 2"),
        "n_resamples": (10_000, lambda v: _is_int(v, 1), "integer >= 1"),
        "integrator": ("euler", _is_integrator, "'euler' or 'heun'"),
    },
    "divergence": {
        "label": (None, lambda v: v is None or isinstance(v, (str, int)), "class label"),
        "w_values": ([1.0, 3.0, 5.0, 7.0], _num_list, "non-empty list of numbers"),
        "perturbation_eps": (1e-4, lambda v: _is_num(v, 0, strict=True), "number > 0"),
        "n_steps": (40, lambda v: _is_int(v, 2), "integer >= 2"),
        "horizon_frac": (0.25, lambda v: _is_num(v, 0, strict=True) and v <= 1, "number in (0, 1]"),
        "n_seeds": (50, lambda v: _is_int(v, 1), "integer >= 1"),
        "fd_eps": (1e-5, lambda v: _is_num(v, 0, strict=True), "number > 0"),
        "check_bounds": (True, lambda v: isinstance(v, bool), "boolean"),
        "integrator": ("euler", _is_integrator, "'euler' or 'heun'"),
    },
    "greedy": {
        "labels": (None, _opt_labels, "list of labels or null"),
        "n_search_steps": (3, lambda v: _is_int(v, 1), "integer >= 1"),
        "total_steps": (10, lambda v: _is_int(v, 1), "integer >= 1"),
        "default_w": (7.0, lambda v: _is_num(v, 1), "number >= 1"),
        "grid": ([1.0 + 0.5 * i for i in range(17)], _num_list, "non-empty list of numbers"),
        "n_eval_seeds": (64, lambda v: _is_int(v, 2), "integer >= 2"),
        "n_reference": (1000, lambda v: _is_int(v, 2), "integer >= 2"),
        "quality": ("energy_distance", lambda v: v == "energy_distance", "'energy_distance'"),
        "integrator": ("euler", _is_integrator, "'euler' or 'heun'"),
    },
    "compare": {
        "labels": (None, _opt_labels, "list of labels or null"),
        "schedules": (..., _is_schedule_list, "non-empty list of schedule objects"),
        "step_counts": ([10, 30], _int_list, "non-empty list of integers >= 1"),
        "n_seeds": (256, lambda v: _is_int(v, 2), "integer >= 2"),
        "n_reference": (1000, lambda v: _is_int(v, 2), "integer >= 2"),
        "integrator": ("euler", _is_integrator, "'euler' or 'heun'"),
    },
    "sweep": {
        "labels": (None, _opt_labels, "list of labels or null"),
        "w_max_values": ([4.0, 8.0, 12.0, 16.0, 20.0], _num_list, "non-empty list of numbers"),
        "alpha_values": ([1.0, 2.0, 4.0, 8.0, 16.0], _num_list, "non-empty list of numbers"),
        "n_steps": (10, lambda v: _is_int(v, 1), "integer >= 1"),
        "n_seeds": (256, lambda v: _is_int(v, 2), "integer >= 2"),
        "n_reference": (1000, lambda v: _is_int(v, 2), "integer >= 2"),
        "integrator": ("euler", _is_integrator, "'euler' or 'heun'"),
    },
}

_TOP = ("experiment", "spec_path", "out_dir", "seed", "params")


@dataclass
class RunConfig:
    experiment: str
    spec_path: str
    out_dir: str
    seed: int
    params: dict
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    @classmethod
    def from_dict(cls, doc, base_dir=None):
        """Validate and fill defaults; raises :class:`ConfigError` listing every problem."""
        errs = []
        if not isinstance(doc, dict):
            raise ConfigError(["config must be a JSON object"])
        for k in doc:
            if k not in _TOP:
                errs.append(f"unknown top-level key {k!r}")
        exp = doc.get("experiment")
        if exp not in EXPERIMENTS:
            errs.append(f"experiment must be one of {list(EXPERIMENTS)}, got {exp!r}")
        for k in ("spec_path", "out_dir"):
            if not isinstance(doc.get(k), str) or not doc.get(k):
                errs.append(f"{k} must be a non-empty string")
        seed = doc.get("seed")
        if not (_is_int(seed, 0) and seed < 2**64):
            errs.append("seed must be an integer in [0, 2**64)")
        raw = doc.get("params", {})
        if not isinstance(raw, dict):
            errs.append("params must be an object")
            raw = {}
        params = {}
        if exp in _PARAMS:
            table = _PARAMS[exp]
            for k in raw:
                if k not in table:
                    errs.append(f"params: unknown key {k!r} for {exp}")
            for k, (default, check, desc) in table.items():
                if k not in raw:
                    if default is ...:
                        errs.append(f"params.{k} is required ({desc})")
                        continue
                    params[k] = default
                elif not check(raw[k]):
                    errs.append(f"params.{k} must be {desc}, got {raw[k]!r}")
                else:
                    params[k] = raw[k]
            errs.extend(_cross_checks(exp, params))
        if errs:
            raise ConfigError(errs)
        return cls(exp, doc["spec_path"], doc["out_dir"], int(seed), params,
                   Path(base_dir) if base_dir is not None else Path("."))

    def to_dict(self):
        return {"experiment": self.experiment, "spec_path": self.spec_path,
                "out_dir": self.out_dir, "seed": self.seed, "params": self.params}

    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def _cross_checks(exp, p):
    errs = []
    if exp == "ratio-group" and all(k in p for k in ("n_seeds_per", "top_k")):
        if p["n_seeds_per"] < 2 * p["top_k"]:
            errs.append("params.n_seeds_per must be at least 2 * params.top_k")
    if exp == "greedy" and "grid" in p:
        g = p["grid"]
        if isinstance(g, list) and g != sorted(g):
            errs.append("params.grid must be sorted ascending")
        if isinstance(g, list) and p.get("default_w") not in g:
            errs.append("params.grid must contain params.default_w")
        if p.get("total_steps", 0) < p.get("n_search_steps", 0):
            errs.append("params.total_steps must be >= params.n_search_steps")
    for key in ("schedule",):
        if key in p and _is_schedule(p[key]):
            errs.extend(_schedule_errors(p[key], f"params.{key}"))
    if exp == "compare" and _is_schedule_list(p.get("schedules")):
        kinds = set()
        for i, s in enumerate(p["schedules"]):
            errs.extend(_schedule_errors(s, f"params.schedules[{i}]"))
            kinds.add(s["kind"])
        if not {"constant", "raag"} <= kinds and "ablation" not in kinds:
            errs.append("params.schedules must include a constant and a raag schedule")
    return errs


def _schedule_errors(doc, where):
    if doc.get("kind") == "ablation":
        try:
            _ablation(doc)
        except (FlowGuideError, KeyError, TypeError, ValueError) as exc:
            return [f"{where}: {exc}"]
        return []
    try:
        schedule_from_dict(doc)
    except (FlowGuideError, ValueError, TypeError) as exc:
        return [f"{where}: {exc}"]
    return []


def _ablation(doc):
    """``{"kind": "ablation", "params": {"w_max", "alpha"}}`` expands to RAAG plus its variants."""
    p = doc["params"]
    raag = Raag(float(p["w_max"]), float(p["alpha"]))
    return [raag, *alternative_schedules(raag.w_max, raag.alpha).values()]


def _schedules(docs):
    out = []
    for d in docs:
        out.extend(_ablation(d) if d["kind"] == "ablation" else [schedule_from_dict(d)])
    return out


def _label(spec, v):
    return spec.labels[0] if v is None else str(v)


def _labels(v):
    return None if v is None else [str(x) for x in v]


def execute(cfg, spec, threads=1, dump_states=False):
    """Run the configured experiment; returns ``(result, extra_files)``."""
    p = cfg.params
    seed = cfg.seed
    extra = {}
    if cfg.experiment == "ratio-spike":
        res = run_ratio_spike(spec, _label(spec, p["label"]), schedule_from_dict(p["schedule"]),
                              p["n_steps"], p["n_seeds"], seed, p["integrator"],
                              keep_trajectories=True)
        traj_rows = [row for tr in res.trajectories for row in trajectory_rows(tr, tr.seed)]
        extra["trajectories.csv"] = (
            ["seed", "step", "t", "scale", "ratio", "state_norm", "divergence_flag"], traj_rows)
        if dump_states:
            extra["states.json"] = [
                {"seed": tr.seed, "states": tr.states.tolist()} for tr in res.trajectories]
    elif cfg.experiment == "ratio-group":
        labels = _labels(p["labels"]) or spec.labels
        n_cond = p["n_prompts_analog"] or len(labels)
        res = run_ratio_grouping(spec, labels, p["w_const"], p["n_steps"], n_cond, p["n_seeds_per"],
                                 p["top_k"], seed, p["n_reference"], p["n_resamples"],
                                 p["integrator"], threads)
    elif cfg.experiment == "divergence":
        res = run_divergence(spec, _label(spec, p["label"]), p["w_values"], p["perturbation_eps"],
                             p["n_steps"], p["horizon_frac"], p["n_seeds"], seed, p["integrator"],
                             p["fd_eps"], p["check_bounds"], threads)
    elif cfg.experiment == "greedy":
        gc = GreedyConfig(p["n_search_steps"], p["total_steps"], float(p["default_w"]),
                          tuple(p["grid"]))
        res = run_greedy_search(spec, _labels(p["labels"]), gc, p["n_eval_seeds"], seed,
                                p["quality"], p["n_reference"], p["integrator"], threads)
    elif cfg.experiment == "compare":
        res = run_schedule_comparison(spec, _labels(p["labels"]), _schedules(p["schedules"]),
                                      p["step_counts"], p["n_seeds"], seed, p["n_reference"],
                                      p["integrator"], threads)
    else:
        res = run_sweep(spec, _labels(p["labels"]), p["w_max_values"], p["alpha_values"],
                        p["n_steps"], p["n_seeds"], seed, p["n_reference"], p["integrator"], threads)
    return res, extra


def _fail(kind, message, violations=(), code=1):
    sys.stderr.write(json.dumps({"error": kind, "message": message,
                                 "violations": list(violations)}) + "\n")
    return code


def cmd_run(args):
    path = Path(args.config)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        return _fail("config-not-found", f"no such config file: {path}", code=2)
    except json.JSONDecodeError as exc:
        return _fail("config-parse", str(exc), code=2)
    try:
        cfg = RunConfig.from_dict(doc, base_dir=path.parent)
    except ConfigError as exc:
        return _fail(exc.kind, "invalid configuration", exc.violations, code=2)

    spec_file = cfg.resolve(cfg.spec_path)
    if not spec_file.is_file():
        return _fail("spec-not-found", f"no such spec file: {spec_file}", code=2)
    try:
        spec = MixtureSpec.from_json(spec_file)
    except (FlowGuideError, json.JSONDecodeError) as exc:
        return _fail("invalid-spec", str(exc), code=2)
    for key in ("label", "labels"):
        v = cfg.params.get(key)
        bad = [x for x in ([v] if key == "label" else v or []) if x is not None and str(x) not in spec.labels]
        if bad:
            return _fail("config-error", "invalid configuration",
                         [f"params.{key}: unknown label(s) {bad}"], code=2)

    out = cfg.resolve(cfg.out_dir)
    summary_path = out / "summary.json"
    if summary_path.exists() and not args.force:
        return _fail("output-exists", f"{summary_path} exists; pass --force to overwrite", code=2)

    threads = args.threads or default_threads()
    try:
        result, extra = execute(cfg, spec, threads=threads, dump_states=args.dump_states)
    except FlowGuideError as exc:
        return _fail(exc.kind, str(exc))
    except Exception as exc:  # noqa: BLE001 -- reported as a runtime failure
        return _fail("runtime-error", f"{type(exc).__name__}: {exc}")

    h = config_hash({"config": cfg.to_dict(), "spec": spec.to_dict()})
    out.mkdir(parents=True, exist_ok=True)
    columns = result.columns + ["config_hash"]
    write_csv(out / "results.csv", columns, [{**r, "config_hash": h} for r in result.rows])
    for name, payload in extra.items():
        if name.endswith(".csv"):
            write_csv(out / name, *payload)
        else:
            write_json(out / name, payload)
    write_json(summary_path, {
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "config_hash": h,
        "summary": result.summary,
        "outputs": ["results.csv", *sorted(extra)],
    })
    print(f"{cfg.experiment}: {len(result.rows)} rows -> {out / 'results.csv'} "
          f"[config {h[:12]}, kernels={_kernels.BACKEND}]")
    return 0


def cmd_gen_spec(args):
    if args.preset not in PRESETS:
        return _fail("config-error", f"unknown preset {args.preset!r}",
                     [f"preset must be one of {sorted(PRESETS)}"], code=2)
    spec = preset(args.preset)
    try:
        spec.to_json(args.out)
    except OSError as exc:
        return _fail("path-unwritable", str(exc))
    print(f"wrote {args.preset} -> {args.out}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="flowguide", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("--force", action="store_true", help="overwrite an existing summary")
    r.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $FLOWGUIDE_THREADS or CPU count)")
    r.add_argument("--dump-states", action="store_true", help="write full states as JSON")
    r.set_defaults(func=cmd_run)
    g = sub.add_parser("gen-spec", help="write a preset mixture spec")
    g.add_argument("preset", choices=sorted(PRESETS))
    g.add_argument("out")
    g.set_defaults(func=cmd_gen_spec)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    np.seterr(all="ignore")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
