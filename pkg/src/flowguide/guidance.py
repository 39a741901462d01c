"""Guidance-scale policies for classifier-free guidance.

A schedule maps ``(step_index, ratio)`` to the scale ``w`` used in
``v_u + w * (v_c - v_u)``. Ratio-aware schedules read the ratio measured at
the current state; an undefined ratio (``||v_u|| = 0``) counts as ``0``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateFitError,
    InsufficientPointsError,
    InvalidParameterError,
)

log = logging.getLogger(__name__)

#: Pairs with ``w_star`` at or below this are dropped by :func:`fit_exponential`.
FIT_EXCLUDE_TOL = 1e-9


def cfg_combine(v_u, v_c, w):
    """Guided velocity ``v_u + w * (v_c - v_u)``."""
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise InvalidParameterError("guidance scale must be non-negative")
    v_u = np.asarray(v_u, dtype=float)
    v_c = np.asarray(v_c, dtype=float)
    if w.ndim == 1 and v_u.ndim == 2:
        w = w[:, None]
    return v_u + w * (v_c - v_u)


def _clean_ratio(rho):
    rho = np.asarray(rho, dtype=float)
    bad = np.isnan(rho)
    if bad.any():
        log.info("undefined ratio encountered at %d state(s); treating as 0", int(bad.sum()))
        rho = np.where(bad, 0.0, rho)
    return rho


@dataclass(frozen=True)
class GuidanceSchedule:
    """Base class; subclasses implement :meth:`_scale` on a cleaned ratio."""

    kind = "base"

    def scale_at(self, step_index, rho):
        """Scale for one step. ``rho`` may be a scalar or an array over seeds."""
        out = self._scale(step_index, _clean_ratio(rho))
        return float(out) if np.ndim(out) == 0 else out

    def _scale(self, step_index, rho):
        raise NotImplementedError

    def params(self):
        raise NotImplementedError

    def to_dict(self):
        return {"kind": self.kind, "params": self.params()}

    def label(self):
        inner = ",".join(f"{k}={_fmt(v)}" for k, v in self.params().items())
        return f"{self.kind}({inner})"


def _fmt(v):
    if isinstance(v, list):
        return "[" + ";".join(_fmt(x) for x in v) + "]"
    return repr(float(v))


@dataclass(frozen=True)
class Constant(GuidanceSchedule):
    w: float
    kind = "constant"

    def __post_init__(self):
        if not (math.isfinite(self.w) and self.w >= 1):
            raise InvalidParameterError("constant scale must be finite and >= 1")

    def _scale(self, step_index, rho):
        return np.full_like(rho, self.w) if np.ndim(rho) else self.w

    def params(self):
        return {"w": float(self.w)}


@dataclass(frozen=True)
class Raag(GuidanceSchedule):
    """Ratio-aware schedule ``w(rho) = 1 + (w_max - 1) * exp(-alpha * rho)``."""

    w_max: float
    alpha: float
    kind = "raag"

    def __post_init__(self):
        if not self.w_max > 1:
            raise InvalidParameterError("w_max must exceed 1")
        if not self.alpha > 0:
            raise InvalidParameterError("alpha must be positive")

    def _scale(self, step_index, rho):
        return 1.0 + (self.w_max - 1.0) * np.exp(-self.alpha * rho)

    def params(self):
        return {"w_max": float(self.w_max), "alpha": float(self.alpha)}


@dataclass(frozen=True)
class Table(GuidanceSchedule):
    """Per-step scales; the ratio is ignored."""

    entries: tuple = field(default=())
    kind = "table"

    def __post_init__(self):
        entries = tuple(float(e) for e in self.entries)
        if not all(math.isfinite(e) and e >= 1 for e in entries):
            raise InvalidParameterError("table entries must be finite and >= 1")
        object.__setattr__(self, "entries", entries)

    def _scale(self, step_index, rho):
        if not 0 <= step_index < len(self.entries):
            raise IndexError(f"step {step_index} outside table of length {len(self.entries)}")
        w = self.entries[step_index]
        return np.full_like(rho, w) if np.ndim(rho) else w

    def params(self):
        return {"entries": list(self.entries)}


@dataclass(frozen=True)
class Linear(GuidanceSchedule):
    w_max: float
    slope: float
    kind = "linear"

    def __post_init__(self):
        _check_ceiling(self.w_max)
        if not self.slope > 0:
            raise InvalidParameterError("slope must be positive")

    def _scale(self, step_index, rho):
        return np.maximum(1.0, self.w_max - self.slope * rho)

    def params(self):
        return {"w_max": float(self.w_max), "slope": float(self.slope)}


@dataclass(frozen=True)
class Piecewise(GuidanceSchedule):
    w_max: float
    rho_cut: float
    kind = "piecewise"

    def __post_init__(self):
        _check_ceiling(self.w_max)
        if not self.rho_cut > 0:
            raise InvalidParameterError("rho_cut must be positive")

    def _scale(self, step_index, rho):
        return np.where(rho < self.rho_cut, self.w_max, 1.0)

    def params(self):
        return {"w_max": float(self.w_max), "rho_cut": float(self.rho_cut)}


@dataclass(frozen=True)
class Sigmoid(GuidanceSchedule):
    w_max: float
    k: float
    rho_mid: float
    kind = "sigmoid"

    def __post_init__(self):
        _check_ceiling(self.w_max)
        if not self.k > 0:
            raise InvalidParameterError("sigmoid rate k must be positive")

    def _scale(self, step_index, rho):
        z = np.clip(self.k * (rho - self.rho_mid), -700, 700)
        return 1.0 + (self.w_max - 1.0) / (1.0 + np.exp(z))

    def params(self):
        return {"w_max": float(self.w_max), "k": float(self.k), "rho_mid": float(self.rho_mid)}


def _check_ceiling(w_max):
    if not w_max >= 1:
        raise InvalidParameterError("w_max must be >= 1")


def alternative_schedules(w_max, alpha, rho_ref=1.0):
    """Linear, piecewise and sigmoid schedules matched to ``Raag(w_max, alpha)``.

    All variants start at ``w_max`` for ``rho = 0`` and agree with the
    exponential schedule at ``rho_ref``.
    """
    raag = Raag(w_max, alpha)
    w_ref = raag.scale_at(0, rho_ref)
    frac = (w_ref - 1.0) / (w_max - 1.0)
    linear = Linear(w_max, (w_max - w_ref) / rho_ref)
    # piecewise cut placed where the exponential crosses the midpoint
    piecewise = Piecewise(w_max, math.log(2.0) / alpha)
    # sigmoid with k * rho_mid = 10 passing through (rho_ref, w_ref)
    k = (10.0 + math.log(1.0 / frac - 1.0)) / rho_ref if frac < 1 else 10.0 / rho_ref
    sigmoid = Sigmoid(w_max, k, 10.0 / k)
    return {"linear": linear, "piecewise": piecewise, "sigmoid": sigmoid}


_KINDS = {
    "constant": Constant,
    "raag": Raag,
    "table": Table,
    "linear": Linear,
    "piecewise": Piecewise,
    "sigmoid": Sigmoid,
}


def schedule_from_dict(doc):
    try:
        cls = _KINDS[doc["kind"]]
    except KeyError:
        raise InvalidParameterError(f"unknown schedule kind in {doc!r}") from None
    params = dict(doc.get("params", {}))
    if cls is Table:
        return Table(tuple(params.get("entries", ())))
    try:
        return cls(**{k: float(v) for k, v in params.items()})
    except TypeError as exc:
        raise InvalidParameterError(f"bad parameters for {doc['kind']}: {exc}") from None


# -- fitting --------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    w_max_hat: float
    alpha_hat: float
    rmse_log: float
    n_points_used: int
    n_points_excluded: int = 0

    def schedule(self):
        return Raag(self.w_max_hat, self.alpha_hat)


def fit_exponential(pairs, w_grid_floor=1.0):
    """Least-squares fit of ``log(w* - floor)`` against ``rho``.

    Pairs with ``w* <= floor + 1e-9`` carry no information in log space and
    are dropped. The slope gives ``-alpha`` and the intercept
    ``log(w_max - floor)``; a non-negative slope is a failed fit.
    """
    arr = np.asarray(list(pairs), dtype=float).reshape(-1, 2)
    keep = arr[:, 1] > w_grid_floor + FIT_EXCLUDE_TOL
    rho, w = arr[keep, 0], arr[keep, 1]
    if rho.size < 3:
        raise InsufficientPointsError(
            f"need at least 3 pairs with w* > {w_grid_floor}, got {rho.size}"
        )
    if np.ptp(rho) == 0:
        raise DegenerateFitError("all ratios are identical")
    y = np.log(w - w_grid_floor)
    slope, intercept = np.polyfit(rho, y, 1)
    if not slope < 0:
        raise DegenerateFitError(f"fitted decay rate {-slope:.6g} is not positive")
    resid = y - (slope * rho + intercept)
    return FitResult(
        w_max_hat=float(w_grid_floor + math.exp(intercept)),
        alpha_hat=float(-slope),
        rmse_log=float(np.sqrt(np.mean(resid**2))),
        n_points_used=int(rho.size),
        n_points_excluded=int((~keep).sum()),
    )
