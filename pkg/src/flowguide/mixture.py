"""Class-conditional Gaussian mixtures and their exact rectified-flow velocities.

Data ``x0`` follows the mixture, noise ``x1 ~ N(0, I)`` and the interpolant is
``x_t = t * x1 + (1 - t) * x0``. For one Gaussian component ``N(mu, Sigma)``
the pair ``(x0, x_t)`` is jointly Gaussian, so

    x_t ~ N((1 - t) mu, S),   S = (1 - t)^2 Sigma + t^2 I
    E[x1 - x0 | x_t = x] = (t I - (1 - t) Sigma) S^-1 (x - (1 - t) mu) - mu

and the mixture velocity is the posterior-responsibility weighted sum of the
component velocities.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .errors import (
    DegenerateMarginalError,
    InvalidParameterError,
    InvalidSpecError,
    UnknownLabelError,
    ZeroDenominatorError,
)

#: Sentinel for a ratio whose denominator ``||v_u||`` is exactly zero.
UNDEFINED_RATIO = math.nan

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class ClassSpec:
    label: str
    weights: np.ndarray      # (K,)
    means: np.ndarray        # (K, d)
    covariances: np.ndarray  # (K, d, d)

    @classmethod
    def from_components(cls, label, components):
        """Build from an iterable of ``(weight, mean, covariance)`` triples."""
        comps = list(components)
        if not comps:
            raise InvalidSpecError(f"class {label!r} has no components")
        w = np.array([float(c[0]) for c in comps])
        mu = np.array([np.asarray(c[1], dtype=float) for c in comps])
        cov = np.array([np.asarray(c[2], dtype=float) for c in comps])
        return cls(str(label), w, mu, cov)

    @property
    def mean(self):
        return self.weights @ self.means


@dataclass(frozen=True)
class MixtureSpec:
    dim: int
    classes: tuple
    class_priors: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "class_priors", np.asarray(self.class_priors, dtype=float))
        self._validate()
        object.__setattr__(self, "_index", {c.label: i for i, c in enumerate(self.classes)})

    def _validate(self):
        d = self.dim
        if int(d) != d or d < 1:
            raise InvalidSpecError("dim must be a positive integer")
        if len(self.classes) < 2:
            raise InvalidSpecError("a mixture spec needs at least 2 classes")
        p = self.class_priors
        if p.shape != (len(self.classes),):
            raise InvalidSpecError("class_priors length must match the number of classes")
        if np.any(p < 0) or abs(p.sum() - 1.0) > _SUM_TOL:
            raise InvalidSpecError("class_priors must be non-negative and sum to 1")
        labels = [c.label for c in self.classes]
        if len(set(labels)) != len(labels):
            raise InvalidSpecError("class labels must be unique")
        for c in self.classes:
            if np.any(c.weights < 0) or abs(c.weights.sum() - 1.0) > _SUM_TOL:
                raise InvalidSpecError(f"component weights of class {c.label!r} must sum to 1")
            if c.means.shape[1:] != (d,) or c.covariances.shape[1:] != (d, d):
                raise InvalidSpecError(f"class {c.label!r} has components of the wrong dimension")
            for cov in c.covariances:
                if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
                    raise InvalidSpecError(f"class {c.label!r} has a non-symmetric covariance")
                try:
                    np.linalg.cholesky(cov)
                except np.linalg.LinAlgError:
                    raise InvalidSpecError(
                        f"class {c.label!r} has a covariance that is not positive definite"
                    ) from None

    # -- structure -----------------------------------------------------------

    @property
    def labels(self):
        return [c.label for c in self.classes]

    def class_spec(self, label):
        try:
            return self.classes[self._index[str(label)]]
        except KeyError:
            raise UnknownLabelError(f"unknown class label {label!r}") from None

    @property
    def mean_unconditional(self):
        return sum(p * c.mean for p, c in zip(self.class_priors, self.classes))

    def class_mean(self, label):
        return self.class_spec(label).mean

    def components(self, label=None):
        """``(weights, means, covariances)`` of p(x0) or p(x0 | label)."""
        if label is not None:
            c = self.class_spec(label)
            return c.weights, c.means, c.covariances
        w = np.concatenate([p * c.weights for p, c in zip(self.class_priors, self.classes)])
        mu = np.concatenate([c.means for c in self.classes])
        cov = np.concatenate([c.covariances for c in self.classes])
        keep = w > 0
        return w[keep], mu[keep], cov[keep]

    def scaled(self, factor):
        """The same mixture with ambient coordinates multiplied by ``factor``."""
        classes = [
            ClassSpec(c.label, c.weights, c.means * factor, c.covariances * factor**2)
            for c in self.classes
        ]
        return MixtureSpec(self.dim, classes, self.class_priors)

    # -- serialisation -------------------------------------------------------

    def to_dict(self):
        return {
            "dim": int(self.dim),
            "class_priors": [float(p) for p in self.class_priors],
            "classes": [
                {
                    "label": c.label,
                    "components": [
                        {
                            "weight": float(w),
                            "mean": [float(v) for v in mu],
                            "covariance": [float(v) for v in cov.ravel()],
                        }
                        for w, mu, cov in zip(c.weights, c.means, c.covariances)
                    ],
                }
                for c in self.classes
            ],
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            d = int(doc["dim"])
            classes = []
            for c in doc["classes"]:
                comps = [
                    (
                        comp["weight"],
                        comp["mean"],
                        np.asarray(comp["covariance"], dtype=float).reshape(d, d),
                    )
                    for comp in c["components"]
                ]
                classes.append(ClassSpec.from_components(c["label"], comps))
            return cls(d, classes, doc["class_priors"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidSpecError):
                raise
            raise InvalidSpecError(f"malformed mixture spec document: {exc}") from exc

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class VelocityPair:
    v_u: np.ndarray
    v_c: np.ndarray
    delta: np.ndarray
    ratio: float

    @property
    def ratio_defined(self):
        return not math.isnan(self.ratio)


# -- exact velocities --------------------------------------------------------


def component_tables(spec, label, t):
    """Per-component arrays describing the time-``t`` marginal and velocity.

    Returns ``(means_t, prec, amap, shift, logc)`` as consumed by the kernels.
    """
    w, mu, cov = spec.components(label)
    d = spec.dim
    eye = np.eye(d)
    s = 1.0 - t
    S = s * s * cov + t * t * eye
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise DegenerateMarginalError(f"singular marginal covariance at t={t}") from None
    Linv = np.linalg.inv(L)
    prec = np.einsum("kji,kjl->kil", Linv, Linv)
    logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
    amap = np.einsum("kij,kjl->kil", t * eye - s * cov, prec)
    with np.errstate(divide="ignore"):
        logc = np.log(w) - 0.5 * logdet
    return s * mu, prec, amap, mu, logc


def _check_t(t):
    if not 0.0 <= t <= 1.0:
        raise InvalidParameterError(f"t must lie in [0, 1], got {t}")


def _velocity(spec, label, x, t, want_resp=False):
    _check_t(t)
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    out = _kernels.mixture_velocity(X, *component_tables(spec, label, t), want_resp=want_resp)
    if want_resp:
        V, resp = out
        return (V[0], resp[0]) if x.ndim == 1 else (V, resp)
    return out[0] if x.ndim == 1 else out


def unconditional_velocity(spec, x, t):
    """Exact ``E[x1 - x0 | x_t = x]`` under the full mixture.

    ``x`` may be a single point ``(d,)`` or a batch ``(n, d)``.
    """
    return _velocity(spec, None, x, t)


def conditional_velocity(spec, label, x, t):
    """Exact ``E[x1 - x0 | x_t = x, c = label]``."""
    spec.class_spec(label)
    return _velocity(spec, label, x, t)


def responsibilities(spec, label, x, t):
    """Posterior component probabilities given ``x_t = x``."""
    return _velocity(spec, label, x, t, want_resp=True)[1]


def ratio_of(delta, v_u):
    """``||delta|| / ||v_u||`` row-wise, ``UNDEFINED_RATIO`` where ``v_u`` vanishes."""
    num = np.linalg.norm(delta, axis=-1)
    den = np.linalg.norm(v_u, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / den
    return np.where(den > 0, r, UNDEFINED_RATIO)


def velocity_fields(spec, label, X, t):
    """Batched ``(v_u, v_c, ratio)`` for states ``X`` of shape ``(n, d)``."""
    v_u = unconditional_velocity(spec, X, t)
    v_c = conditional_velocity(spec, label, X, t)
    return v_u, v_c, ratio_of(v_c - v_u, v_u)


def velocity_pair(spec, label, x, t):
    v_u = unconditional_velocity(spec, x, t)
    v_c = conditional_velocity(spec, label, x, t)
    delta = v_c - v_u
    return VelocityPair(v_u, v_c, delta, float(ratio_of(delta, v_u)))


def initial_ratio_closed_form(spec, label, x1):
    """``||mu_c - mu_u|| / ||x1 - mu_u||``, the ratio at ``t = 1``."""
    mu_u = spec.mean_unconditional
    den = np.linalg.norm(np.asarray(x1, dtype=float) - mu_u)
    if den == 0:
        raise ZeroDenominatorError("x1 coincides with the unconditional mean")
    return float(np.linalg.norm(spec.class_mean(label) - mu_u) / den)


# -- sampling and Monte-Carlo oracle ------------------------------------------


def _draw(spec, label, n, rng):
    w, mu, cov = spec.components(label)
    idx = rng.choice(len(w), size=n, p=w / w.sum())
    chol = np.linalg.cholesky(cov)
    z = rng.standard_normal((n, spec.dim))
    return mu[idx] + np.einsum("nij,nj->ni", chol[idx], z)


def sample_data(spec, label, n, rng_seed):
    """``n`` i.i.d. draws from p(x0) (``label=None``) or p(x0 | label)."""
    if n < 1:
        raise InvalidParameterError("n must be at least 1")
    if label is not None:
        spec.class_spec(label)
    return _draw(spec, label, n, np.random.default_rng(rng_seed))


@dataclass(frozen=True)
class MCEstimate:
    estimate: np.ndarray
    std_error: np.ndarray
    ess: float
    low_ess: bool


def mc_velocity(spec, label, x, t, n_samples=1_000_000, bandwidth=None, rng_seed=0,
                method="kernel"):
    """Monte-Carlo estimate of ``E[x1 - x0 | x_t = x (, c)]`` with standard errors.

    ``method="kernel"`` is a Nadaraya-Watson regression on simulated
    ``(x0, x1, x_t)`` triples with a Gaussian kernel of width ``bandwidth``
    (default ``0.1 * sqrt(t)``). ``method="posterior"`` conditions exactly:
    it draws ``x0`` from the data law, solves ``x1 = (x - (1 - t) x0) / t``
    and self-normalises with the noise density of that ``x1``; it needs
    ``t > 0`` and carries no smoothing bias.
    """
    if n_samples < 10_000:
        raise InvalidParameterError("n_samples must be at least 1e4")
    _check_t(t)
    if label is not None:
        spec.class_spec(label)
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(rng_seed)
    x0 = _draw(spec, label, n_samples, rng)
    if method == "kernel":
        h = 0.1 * math.sqrt(t) if bandwidth is None else float(bandwidth)
        if h <= 0:
            raise InvalidParameterError("bandwidth must be positive")
        x1 = rng.standard_normal(x0.shape)
        xt = t * x1 + (1.0 - t) * x0
        logw = -0.5 * np.sum((xt - x) ** 2, axis=1) / (h * h)
    elif method == "posterior":
        if t <= 0:
            raise InvalidParameterError("posterior weighting needs t > 0")
        x1 = (x - (1.0 - t) * x0) / t
        logw = -0.5 * np.sum(x1 * x1, axis=1)
    else:
        raise InvalidParameterError(f"unknown method {method!r}")
    w = np.exp(logw - logsumexp(logw))
    y = x1 - x0
    est = w @ y
    se = np.sqrt((w * w) @ (y - est) ** 2)
    ess = 1.0 / float(w @ w)
    low = ess < 100
    if low:
        warnings.warn(f"effective sample size {ess:.1f} is below 100", RuntimeWarning, stacklevel=2)
    return MCEstimate(est, se, ess, low)
