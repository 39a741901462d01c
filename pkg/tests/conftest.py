import numpy as np
import pytest

from flowguide.mixture import ClassSpec, MixtureSpec
from flowguide.presets import eight_class_8d, shared_mean_null, two_class_2d


@pytest.fixture
def two_class():
    return two_class_2d()


@pytest.fixture
def eight_class():
    return eight_class_8d()


@pytest.fixture
def null_spec():
    return shared_mean_null()


@pytest.fixture
def two_comp_2d():
    """Two classes in R^2; class "a" is a two-component mixture with anisotropic covariances."""
    return MixtureSpec(
        2,
        [
            ClassSpec.from_components("a", [
                (0.3, [1.0, 1.0], [[0.5, 0.1], [0.1, 0.3]]),
                (0.7, [2.0, -1.0], [[0.4, -0.05], [-0.05, 0.6]]),
            ]),
            ClassSpec.from_components("b", [(1.0, [-1.5, 0.5], [[0.8, 0.0], [0.0, 0.8]])]),
        ],
        [0.4, 0.6],
    )


def isotropic_pair(mu_a, mu_b, var=1.0, priors=(0.5, 0.5)):
    d = len(mu_a)
    cov = var * np.eye(d)
    return MixtureSpec(d, [
        ClassSpec.from_components("a", [(1.0, mu_a, cov)]),
        ClassSpec.from_components("b", [(1.0, mu_b, cov)]),
    ], list(priors))
