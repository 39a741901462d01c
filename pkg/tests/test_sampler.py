import math

import numpy as np
import pytest

from flowguide import rng
from flowguide.errors import NonFiniteStateError
from flowguide.guidance import Constant, Raag, alternative_schedules
from flowguide.mixture import initial_ratio_closed_form
from flowguide.presets import eight_class_8d, two_class_2d
from flowguide.sampler import integrate, sample, sample_batch, time_grid, trajectory_rows

from conftest import isotropic_pair

SCHEDULES = [Constant(1), Constant(4), Constant(7), Raag(18, 12), Raag(7, 1),
             *alternative_schedules(18, 12).values()]


def test_time_grid():
    t = time_grid(7)
    assert t[0] == 1.0 and t[-1] == 0.0
    assert np.all(np.diff(t) < 0)
    with pytest.raises(Exception):
        time_grid(0)


def test_trajectory_shapes(eight_class):
    tr = sample(eight_class, "c1", Raag(18, 12), 12, "heun", np.ones(8))
    assert tr.times.shape == (13,)
    assert tr.states.shape == (13, 8)
    assert tr.ratios.shape == tr.scales.shape == (12,)
    assert not tr.failed
    np.testing.assert_array_equal(tr.terminal, tr.states[-1])


def test_first_ratio_matches_closed_form(eight_class):
    X1 = rng.noise_batch(5, 50, 8)
    res = integrate(eight_class, "c4", Constant(7), 10, "euler", X1)
    exact = [initial_ratio_closed_form(eight_class, "c4", x) for x in X1]
    np.testing.assert_allclose(res.ratios[:, 0], exact, rtol=0, atol=1e-10)


def test_scales_follow_schedule(two_class):
    s = Raag(9, 2)
    tr = sample(two_class, "pos", s, 8, "euler", [0.3, -1.0])
    np.testing.assert_allclose(tr.scales, [s.scale_at(k, r) for k, r in enumerate(tr.ratios)])


def test_shared_gaussian_terminal_mean():
    mu = np.array([1.5, -0.5])
    spec = isotropic_pair(mu, mu)
    trajs = sample_batch(spec, "a", Constant(1), 400, "euler", 1000, 0)
    term = np.array([t.terminal for t in trajs])
    assert np.all(np.abs(term.mean(axis=0) - mu) <= 0.05)


def test_raag_with_huge_alpha_is_constant_one(two_class):
    # needs ratios bounded away from 0 along the whole path so that exp(-alpha rho) vanishes
    X1 = rng.noise_batch(2, 20, 2)
    a = integrate(two_class, "pos", Constant(1), 10, "euler", X1)
    alpha = 1e12
    b = integrate(two_class, "pos", Raag(7, alpha), 10, "euler", X1)
    assert alpha * np.nanmin(b.ratios) > 50
    np.testing.assert_allclose(a.states, b.states, rtol=0, atol=1e-9)


def test_batch_determinism_and_empty(two_class):
    a = sample_batch(two_class, "neg", Raag(18, 12), 10, "heun", 20, 123)
    b = sample_batch(two_class, "neg", Raag(18, 12), 10, "heun", 20, 123)
    for x, y in zip(a, b):
        assert x.states.tobytes() == y.states.tobytes()
        assert x.ratios.tobytes() == y.ratios.tobytes()
    assert sample_batch(two_class, "neg", Constant(1), 10, "euler", 0, 1) == []


def test_batch_members_independent_of_batch_size(two_class):
    small = sample_batch(two_class, "pos", Constant(3), 5, "euler", 3, 9)
    big = sample_batch(two_class, "pos", Constant(3), 5, "euler", 10, 9)
    for x, y in zip(small, big):
        assert x.states.tobytes() == y.states.tobytes()


def test_mean_first_ratio_matches_monte_carlo(eight_class):
    trajs = sample_batch(eight_class, "c2", Constant(7), 2, "euler", 1000, 0)
    r0 = np.array([t.ratios[0] for t in trajs])
    # direct expectation of the closed form over x1 ~ N(0, I)
    x1 = np.random.default_rng(99).standard_normal((1_000_000, 8))
    mu_u = eight_class.mean_unconditional
    num = np.linalg.norm(eight_class.class_mean("c2") - mu_u)
    expected = np.mean(num / np.linalg.norm(x1 - mu_u, axis=1))
    se = r0.std(ddof=1) / math.sqrt(r0.size)
    assert abs(r0.mean() - expected) <= 3 * se


@pytest.mark.parametrize("spec_fn,label", [(eight_class_8d, "c0"), (two_class_2d, "pos")])
@pytest.mark.parametrize("sched", SCHEDULES, ids=lambda s: s.label())
def test_ratio_spike_property(spec_fn, label, sched):
    spec = spec_fn()
    assert np.linalg.norm(spec.class_mean(label) - spec.mean_unconditional) >= 1
    n = 10
    res = integrate(spec, label, sched, n, "euler", rng.noise_batch(0, 100, spec.dim))
    mean = np.nanmean(res.ratios, axis=0)
    assert mean[0] > mean[n // 2:].mean()


@pytest.mark.parametrize("m", [5, 10, 20])
def test_step_halving(eight_class, m):
    X1 = rng.noise_batch(3, 30, 8)
    run = lambda n: integrate(eight_class, "c5", Constant(1), n, "euler", X1).terminal
    a, b, c = run(m), run(2 * m), run(4 * m)
    assert np.all(np.linalg.norm(b - c, axis=1) < np.linalg.norm(a - c, axis=1))


@pytest.mark.parametrize("sched,m", [
    (Constant(1), 5), (Constant(1), 10), (Raag(18, 12), 5), (Raag(18, 12), 10), (Constant(7), 10),
], ids=str)
def test_heun_beats_euler(eight_class, sched, m):
    # Constant(7) with 5 steps is excluded: h * L is near 1 there (stiff), where the
    # second-order advantage is not expected; it is covered at 10 steps
    X1 = rng.noise_batch(4, 100, 8)
    ref = integrate(eight_class, "c6", sched, 8 * m, "euler", X1).terminal
    e = np.linalg.norm(integrate(eight_class, "c6", sched, m, "euler", X1).terminal - ref, axis=1)
    h = np.linalg.norm(integrate(eight_class, "c6", sched, m, "heun", X1).terminal - ref, axis=1)
    assert np.mean(h <= e) >= 0.9


def test_non_finite_state_is_reported(two_class):
    with pytest.raises(NonFiniteStateError) as ei:
        sample(two_class, "pos", Constant(1e300), 10, "euler", [3.0, 1.0])
    assert ei.value.kind and ei.value.step >= 0
    res = integrate(two_class, "pos", Constant(1e300), 10, "euler", np.array([[3.0, 1.0], [0.0, 0.0]]))
    assert res.failed_step[0] >= 0
    assert not res.ok[0]


def test_trajectory_rows(two_class):
    tr = sample(two_class, "pos", Constant(7), 4, "euler", [0.5, 0.5])
    rows = trajectory_rows(tr, 3)
    assert [r["step"] for r in rows] == [0, 1, 2, 3]
    assert set(rows[0]) == {"seed", "step", "t", "scale", "ratio", "state_norm", "divergence_flag"}
    assert all(r["seed"] == 3 and r["divergence_flag"] == 0 for r in rows)
    assert rows[0]["ratio"] == tr.ratios[0]
