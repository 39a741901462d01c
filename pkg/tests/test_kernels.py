import os
import subprocess
import sys

import numpy as np
import pytest

from flowguide import _kernels
from flowguide._kernels import _py
from flowguide.mixture import component_tables
from flowguide.presets import eight_class_8d

try:
    from flowguide._kernels import _cy
except ImportError:  # extension not built
    _cy = None

BACKENDS = [pytest.param(_py, id="python"),
            pytest.param(_cy, id="cython",
                         marks=pytest.mark.skipif(_cy is None, reason="extension not built"))]


@pytest.mark.parametrize("impl", BACKENDS)
@pytest.mark.parametrize("t", [0.0, 0.05, 0.5, 0.97, 1.0])
def test_mixture_velocity_matches_reference(impl, t):
    spec = eight_class_8d()
    X = np.random.default_rng(0).normal(size=(40, 8)) * 2
    tables = component_tables(spec, None, t)
    V, R = impl.mixture_velocity(X, *tables, want_resp=True)
    V0, R0 = _py.mixture_velocity(X, *tables, want_resp=True)
    np.testing.assert_allclose(V, V0, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(R, R0, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(R.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS)
def test_far_points_do_not_underflow(impl):
    spec = eight_class_8d()
    X = np.full((3, 8), 60.0)
    V = impl.mixture_velocity(X, *component_tables(spec, "c2", 0.02))
    assert np.all(np.isfinite(V))


@pytest.mark.parametrize("impl", BACKENDS)
def test_mean_pairwise_distance(impl):
    rng = np.random.default_rng(1)
    A, B = rng.normal(size=(31, 5)), rng.normal(size=(17, 5)) + 1
    brute = np.mean(np.linalg.norm(A[:, None] - B[None], axis=-1))
    assert impl.mean_pairwise_distance(A, B) == pytest.approx(brute, rel=1e-12)
    assert impl.mean_pairwise_distance(A, A) == pytest.approx(
        np.mean(np.linalg.norm(A[:, None] - A[None], axis=-1)), rel=1e-12)


def test_backend_selection_env():
    env = dict(os.environ, FLOWGUIDE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import flowguide._kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert _kernels.BACKEND in ("python", "cython")
