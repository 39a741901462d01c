import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from flowguide.errors import (
    InvalidParameterError,
    InvalidSpecError,
    UnknownLabelError,
    ZeroDenominatorError,
)
from flowguide.mixture import (
    ClassSpec,
    MixtureSpec,
    conditional_velocity,
    initial_ratio_closed_form,
    mc_velocity,
    responsibilities,
    sample_data,
    unconditional_velocity,
    velocity_pair,
)
from flowguide.presets import PRESETS

from conftest import isotropic_pair

coords = st.floats(-6, 6, allow_nan=False)


def point(d):
    return arrays(np.float64, d, elements=coords)


# -- exact velocities ---------------------------------------------------------


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_t1_velocities_are_offsets_from_means(name):
    spec = PRESETS[name]()
    rng = np.random.default_rng(1)
    X = rng.normal(size=(25, spec.dim)) * 2
    np.testing.assert_allclose(unconditional_velocity(spec, X, 1.0), X - spec.mean_unconditional,
                               atol=1e-12)
    for lab in spec.labels:
        np.testing.assert_allclose(conditional_velocity(spec, lab, X, 1.0), X - spec.class_mean(lab),
                                   atol=1e-12)


def test_t0_velocity_is_minus_x(two_comp_2d):
    x = np.array([0.3, -2.0])
    np.testing.assert_allclose(unconditional_velocity(two_comp_2d, x, 0.0), -x, atol=1e-12)


def test_symmetric_gaussian_mode_has_zero_velocity():
    spec = isotropic_pair([0.0, 0.0], [0.0, 0.0])
    np.testing.assert_allclose(unconditional_velocity(spec, np.zeros(2), 0.5), 0.0, atol=1e-15)


def test_single_component_class_at_its_mean():
    spec = isotropic_pair([1.0, -2.0], [0.0, 3.0])
    np.testing.assert_allclose(conditional_velocity(spec, "a", [1.0, -2.0], 1.0), 0.0, atol=1e-15)


def test_single_gaussian_closed_form():
    # for N(mu, s2 I) the velocity is ((t - (1-t) s2) (x - (1-t) mu) / ((1-t)^2 s2 + t^2)) - mu
    mu, s2, t = np.array([1.0, -0.5]), 0.7, 0.35
    spec = isotropic_pair(mu, mu, var=s2)
    x = np.array([0.2, 0.9])
    s = 1 - t
    expected = (t - s * s2) * (x - s * mu) / (s * s * s2 + t * t) - mu
    np.testing.assert_allclose(conditional_velocity(spec, "a", x, t), expected, rtol=1e-12)
    np.testing.assert_allclose(unconditional_velocity(spec, x, t), expected, rtol=1e-12)


def test_batch_matches_pointwise(two_comp_2d):
    X = np.random.default_rng(2).normal(size=(7, 2))
    V = conditional_velocity(two_comp_2d, "a", X, 0.4)
    for x, v in zip(X, V):
        np.testing.assert_allclose(conditional_velocity(two_comp_2d, "a", x, 0.4), v, rtol=1e-13)


@settings(max_examples=60, deadline=None)
@given(x=point(2), t=st.floats(0, 1))
def test_responsibilities_are_probability_vectors(x, t):
    spec = MixtureSpec(2, [
        ClassSpec.from_components("a", [(0.3, [1, 1], np.eye(2) * 0.5), (0.7, [2, -1], np.eye(2))]),
        ClassSpec.from_components("b", [(1.0, [-1.5, 0.5], np.eye(2) * 0.8)]),
    ], [0.4, 0.6])
    for lab in (None, "a"):
        r = responsibilities(spec, lab, x, t)
        assert np.all(r >= 0)
        assert abs(r.sum() - 1) <= 1e-9


def test_unknown_label_and_bad_time(two_class):
    with pytest.raises(UnknownLabelError):
        conditional_velocity(two_class, "nope", [0, 0], 0.5)
    with pytest.raises(InvalidParameterError):
        unconditional_velocity(two_class, [0, 0], 1.5)


# -- ratio ---------------------------------------------------------------------


def test_ratio_direct_substitution():
    # mu_u = 0 and mu_c = (1, 0)
    spec = isotropic_pair([1.0, 0.0], [-1.0, 0.0])
    vp = velocity_pair(spec, "a", [0.0, 2.0], 1.0)
    assert vp.ratio == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_array_equal(vp.delta, vp.v_c - vp.v_u)


def test_ratio_zero_when_class_mean_is_global_mean(null_spec):
    for lab in null_spec.labels:
        assert velocity_pair(null_spec, lab, [0.4, -1.2], 1.0).ratio == 0.0


def test_undefined_ratio_sentinel(two_class):
    vp = velocity_pair(two_class, "pos", [0.0, 0.0], 1.0)
    assert not vp.ratio_defined
    assert math.isnan(vp.ratio)


def test_two_class_preset_examples(two_class):
    assert initial_ratio_closed_form(two_class, "pos", [0.0, 2.0]) == 1.0
    with pytest.raises(ZeroDivisionError):
        initial_ratio_closed_form(two_class, "pos", [0.0, 0.0])
    with pytest.raises(ZeroDenominatorError) as ei:
        initial_ratio_closed_form(two_class, "pos", [0.0, 0.0])
    assert ei.value.kind == "division-by-zero"


def test_closed_form_edge_values(null_spec):
    assert initial_ratio_closed_form(null_spec, "wide", [3.0, 1.0]) == 0.0
    spec = isotropic_pair([3.0, 4.0], [-3.0, -4.0])
    assert initial_ratio_closed_form(spec, "a", [0.0, 5.0]) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("name", sorted(PRESETS))
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_closed_form_equals_measured_ratio_at_t1(name, seed):
    spec = PRESETS[name]()
    x1 = np.random.default_rng(seed).normal(size=spec.dim) * 3
    for lab in spec.labels:
        assert abs(velocity_pair(spec, lab, x1, 1.0).ratio
                   - initial_ratio_closed_form(spec, lab, x1)) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(lam=st.floats(0.05, 20), x=point(2), t=st.sampled_from([1.0]))
def test_ratio_invariant_under_coordinate_scaling(lam, x, t):
    spec = MixtureSpec(2, [
        ClassSpec.from_components("a", [(1.0, [1.0, 2.0], [[1.0, 0.2], [0.2, 0.5]])]),
        ClassSpec.from_components("b", [(1.0, [-1.0, 0.0], np.eye(2))]),
    ], [0.3, 0.7])
    if np.linalg.norm(x - spec.mean_unconditional) < 1e-3:
        return
    r0 = velocity_pair(spec, "a", x, t).ratio
    r1 = velocity_pair(spec.scaled(lam), "a", lam * x, t).ratio
    assert r1 == pytest.approx(r0, rel=1e-10)


# -- spec validation and serialisation -------------------------------------------


def _cls(label, w=1.0, mu=(0.0, 0.0), cov=None):
    return ClassSpec.from_components(label, [(w, mu, np.eye(2) if cov is None else cov)])


@pytest.mark.parametrize("build", [
    lambda: MixtureSpec(2, [_cls("a")], [1.0]),
    lambda: MixtureSpec(2, [_cls("a"), _cls("b")], [0.5, 0.6]),
    lambda: MixtureSpec(2, [_cls("a"), _cls("b")], [1.2, -0.2]),
    lambda: MixtureSpec(2, [_cls("a"), _cls("a")], [0.5, 0.5]),
    lambda: MixtureSpec(2, [_cls("a", w=0.9), _cls("b")], [0.5, 0.5]),
    lambda: MixtureSpec(2, [_cls("a", cov=[[1, 2], [2, 1]]), _cls("b")], [0.5, 0.5]),
    lambda: MixtureSpec(2, [_cls("a", cov=[[1, 0.1], [0, 1]]), _cls("b")], [0.5, 0.5]),
    lambda: MixtureSpec(3, [_cls("a"), _cls("b")], [0.5, 0.5]),
])
def test_invalid_specs_rejected(build):
    with pytest.raises(InvalidSpecError):
        build()


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_json_round_trip(name, tmp_path):
    spec = PRESETS[name]()
    path = tmp_path / "s.json"
    spec.to_json(path)
    doc = json.loads(path.read_text())
    assert set(doc) == {"dim", "class_priors", "classes"}
    comp = doc["classes"][0]["components"][0]
    assert set(comp) == {"weight", "mean", "covariance"}
    assert len(comp["covariance"]) == spec.dim ** 2
    back = MixtureSpec.from_json(path)
    assert back.to_dict() == spec.to_dict()


def test_malformed_document():
    with pytest.raises(InvalidSpecError):
        MixtureSpec.from_dict({"dim": 2, "classes": [{"label": "a"}]})


# -- sampling ------------------------------------------------------------------------


def test_sample_data_deterministic(eight_class):
    a = sample_data(eight_class, "c3", 500, 11)
    b = sample_data(eight_class, "c3", 500, 11)
    assert a.tobytes() == b.tobytes()
    assert sample_data(eight_class, None, 10, 12).shape == (10, 8)


def test_sample_mean_law_of_large_numbers(two_comp_2d):
    n = 100_000
    X = sample_data(two_comp_2d, None, n, 3)
    # per-coordinate standard deviation of the mixture
    sd = X.std(axis=0)
    assert np.all(np.abs(X.mean(axis=0) - two_comp_2d.mean_unconditional) <= 4 * sd / math.sqrt(n))


def test_single_component_sample_covariance(two_comp_2d):
    X = sample_data(two_comp_2d, "b", 200_000, 4)
    np.testing.assert_allclose(np.cov(X.T), 0.8 * np.eye(2), atol=0.01)


def test_sample_data_rejects_empty(two_class):
    with pytest.raises(InvalidParameterError):
        sample_data(two_class, "pos", 0, 0)


# -- Monte-Carlo oracle -------------------------------------------------------------


def _within(est, exact, k=3.0):
    return np.all(np.abs(est.estimate - exact) <= k * est.std_error)


def test_mc_unconditional_two_class(two_class):
    x, t = np.array([1.0, 1.0]), 0.7
    est = mc_velocity(two_class, None, x, t, n_samples=1_000_000, rng_seed=0)
    assert not est.low_ess
    assert _within(est, unconditional_velocity(two_class, x, t))


def test_mc_conditional_two_component(two_comp_2d):
    x, t = np.array([1.3, 0.2]), 0.3
    est = mc_velocity(two_comp_2d, "a", x, t, n_samples=1_000_000, rng_seed=1)
    assert _within(est, conditional_velocity(two_comp_2d, "a", x, t))


def test_mc_symmetric_mode():
    spec = isotropic_pair([0.0, 0.0], [0.0, 0.0])
    est = mc_velocity(spec, None, np.zeros(2), 0.5, n_samples=400_000, rng_seed=2)
    assert _within(est, np.zeros(2))


def test_mc_t1_limit(two_class):
    x = np.array([0.5, -0.3])
    est = mc_velocity(two_class, None, x, 1.0, n_samples=1_000_000, bandwidth=0.05, rng_seed=3)
    assert _within(est, x - two_class.mean_unconditional)


def test_mc_posterior_weighting(two_comp_2d):
    x, t = np.array([0.5, 0.5]), 0.6
    est = mc_velocity(two_comp_2d, None, x, t, n_samples=200_000, rng_seed=4, method="posterior")
    assert _within(est, unconditional_velocity(two_comp_2d, x, t))


def test_mc_low_ess_warning(two_class):
    with pytest.warns(RuntimeWarning, match="effective sample size"):
        est = mc_velocity(two_class, None, [9.0, 9.0], 0.5, n_samples=10_000, rng_seed=0)
    assert est.low_ess


def test_mc_argument_checks(two_class):
    with pytest.raises(InvalidParameterError):
        mc_velocity(two_class, None, [0, 0], 0.5, n_samples=100)
    with pytest.raises(InvalidParameterError):
        mc_velocity(two_class, None, [0, 0], 0.5, n_samples=10_000, bandwidth=0.0)
