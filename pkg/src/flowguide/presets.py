"""Canonical benchmark mixtures. Every number is literal so files are reproducible."""
import numpy as np

from .errors import ConfigError
from .mixture import ClassSpec, MixtureSpec


def two_class_2d():
    """Classes at (2, 0) and (-2, 0), identity covariance, equal priors.

    One Gaussian per class, so each conditional velocity is affine.
    """
    eye = np.eye(2)
    return MixtureSpec(
        2,
        [
            ClassSpec.from_components("pos", [(1.0, [2.0, 0.0], eye)]),
            ClassSpec.from_components("neg", [(1.0, [-2.0, 0.0], eye)]),
        ],
        [0.5, 0.5],
    )


def eight_class_8d():
    """Eight classes in R^8, class c centred at 3 e_c.

    Each class is an equal mix of two components offset by +-0.5 along the
    next axis, covariance 0.2 I. ``||mu_c - mu_u|| = 3 sqrt(7/8) ~ 2.81``.
    """
    d = 8
    cov = 0.2 * np.eye(d)
    classes = []
    for c in range(d):
        mu = np.zeros(d)
        mu[c] = 3.0
        off = np.zeros(d)
        off[(c + 1) % d] = 0.5
        classes.append(ClassSpec.from_components(f"c{c}", [(0.5, mu + off, cov), (0.5, mu - off, cov)]))
    return MixtureSpec(d, classes, np.full(d, 1.0 / d))


def shared_mean_null():
    """Two classes with a common mean at the origin and different shapes."""
    return MixtureSpec(
        2,
        [
            ClassSpec.from_components("wide", [(1.0, [0.0, 0.0], np.diag([1.0, 0.25]))]),
            ClassSpec.from_components("tall", [(1.0, [0.0, 0.0], np.diag([0.25, 1.0]))]),
        ],
        [0.5, 0.5],
    )


PRESETS = {
    "two-class-2d": two_class_2d,
    "eight-class-8d": eight_class_8d,
    "shared-mean-null": shared_mean_null,
}


def preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
