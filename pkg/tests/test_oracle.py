import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lolipop.cmdp import ModelError, Policy, RewardFunction, TabularCMDP
from lolipop.env import RngStream, Trajectory, TrajectoryBatch, rollout
from lolipop.instances import GenSpec, generate_class
from lolipop.oracle import (MLEOracle, ModelClass, batch_log_likelihoods, hellinger_sq,
                            layer_hellinger, log_likelihood, mle, oracle_error_budget,
                            trajectory_distribution)

from conftest import chain_model, make_model, small_models


def arm(mean):
    R = RewardFunction.bernoulli(np.full((1, 1, 1, 1), mean))
    return TabularCMDP(np.ones((1, 1, 1, 1, 1)), R.values, R.probs)


def test_deterministic_likelihood_is_zero():
    m = chain_model(3, 2, 1, [[[1], [0]]] * 3, np.zeros((3, 2, 1)))
    t = rollout(m, 0, Policy.uniform(3, 2, 1), RngStream(0))
    assert log_likelihood(m, t) == 0.0


def test_single_bernoulli_factor():
    t = Trajectory(0, None, (0,), (0,), (1.0,))
    assert log_likelihood(arm(0.75), t) == pytest.approx(math.log(0.75))


def test_impossible_transition():
    m = chain_model(2, 2, 1, [[[1], [1]], [[0], [0]]], np.zeros((2, 2, 1)))
    assert log_likelihood(m, Trajectory(0, None, (0, 0), (0, 0), (0.0, 0.0))) == -math.inf


def test_singleton_class_always_index_zero():
    m = make_model(0)
    trajs = [rollout(m, 0, Policy.uniform(2, 2, 2), RngStream(i)) for i in range(10)]
    assert mle(ModelClass((m,)), trajs).model_index == 0


def test_mle_two_arms():
    trajs = [Trajectory(0, None, (0,), (0,), (1.0,))] * 10
    est = mle(ModelClass((arm(0.1), arm(0.9))), trajs)
    assert est.model_index == 1
    assert est.log_likelihood == pytest.approx(10 * math.log(0.9))


def test_mle_ties_and_impossible_data_go_to_index_zero():
    same = ModelClass((arm(0.5), arm(0.5)))
    assert mle(same, [Trajectory(0, None, (0,), (0,), (1.0,))]).model_index == 0
    never = ModelClass((arm(0.0), arm(0.0)))
    est = mle(never, [Trajectory(0, None, (0,), (0,), (1.0,))])
    assert est.model_index == 0 and est.log_likelihood == -math.inf


def test_mle_empty_data():
    est = mle(ModelClass((make_model(0), make_model(1))), [])
    assert (est.model_index, est.log_likelihood) == (0, 0.0)


def test_oracle_counts_calls():
    o = MLEOracle(ModelClass((make_model(0),)))
    o([]), o([])
    assert o.calls == 2


@given(st.integers(0, 10**6))
def test_batch_matches_scalar_likelihood(seed):
    models = tuple(make_model(seed + i, C=2, H=3, S=3, A=2) for i in range(3))
    mc = ModelClass(models)
    rng = RngStream(seed, 1)
    trajs = [rollout(models[0], i % 2, Policy.uniform(3, 3, 2), rng) for i in range(6)]
    ll = batch_log_likelihoods(mc, TrajectoryBatch.from_trajectories(trajs))
    ref = np.array([[log_likelihood(m, t) for t in trajs] for m in models])
    assert np.allclose(ll, ref, atol=1e-12)


def test_class_shape_mismatch():
    with pytest.raises(ModelError):
        ModelClass((make_model(0, S=2), make_model(0, S=3)))


def test_class_json_round_trip(tmp_path):
    mc = ModelClass((make_model(0), make_model(1)), truth_index=1)
    mc.save(tmp_path / "c.json")
    back = ModelClass.load(tmp_path / "c.json")
    assert back.truth_index == 1 and len(back) == 2
    bare = ModelClass.from_json("[" + mc[0].to_json() + "]")
    assert bare.truth_index is None and len(bare) == 1


def trajectory_hellinger(m1, m2, c, pol):
    return hellinger_sq(trajectory_distribution(m1, c, pol.probs), trajectory_distribution(m2, c, pol.probs))


@pytest.fixture(scope="module")
def separated_class():
    mc, _ = generate_class(GenSpec(S=2, A=2, H=2, class_size=8, separation=0.3, seed=3))
    pol = Policy.uniform(2, 2, 2)
    for i in range(8):
        for j in range(i + 1, 8):
            assert trajectory_hellinger(mc[i], mc[j], 0, pol) >= 0.05
    return mc


def test_mle_consistency(separated_class):
    mc = separated_class
    pol = Policy.uniform(2, 2, 2)
    hits = 0
    for seed in range(100):
        rng = RngStream(seed, 1)
        trajs = [rollout(mc.truth, 0, pol, rng) for _ in range(2000)]
        hits += mle(mc, trajs).model_index == mc.truth_index
    assert hits >= 95


# --- Hellinger utilities

def test_hellinger_examples():
    assert hellinger_sq([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert hellinger_sq([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert hellinger_sq([0.5, 0.5], [0.0, 1.0]) == pytest.approx(1 - math.sqrt(0.5))
    assert hellinger_sq({"a": 1.0}, {"b": 1.0}) == 1.0


def test_hellinger_rejects_non_distributions():
    with pytest.raises(ValueError):
        hellinger_sq([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(ValueError):
        hellinger_sq([1.0], [0.5, 0.5])


probability_vectors = st.integers(1, 6).flatmap(
    lambda k: st.tuples(*[st.lists(st.floats(0, 1), min_size=k, max_size=k).filter(lambda v: sum(v) > 1e-3)] * 2))


@given(probability_vectors)
def test_hellinger_properties(pair):
    p = np.array(pair[0]) / sum(pair[0])
    q = np.array(pair[1]) / sum(pair[1])
    h = hellinger_sq(p, q)
    assert 0.0 <= h <= 1.0
    assert h == pytest.approx(hellinger_sq(q, p), abs=1e-15)
    assert hellinger_sq(p, p) <= 1e-12


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_trajectory_hellinger_dominates_step_marginals(s1, s2):
    # S=2, A=2, H=2 with two-point rewards: at most 64 trajectories
    m1, m2 = make_model(s1), make_model(s2)
    pol = Policy(np.random.default_rng(s1 + s2).dirichlet(np.ones(2), size=(2, 2)))
    d1 = trajectory_distribution(m1, 0, pol.probs)
    d2 = trajectory_distribution(m2, 0, pol.probs)
    assert len(d1) <= 64
    full = hellinger_sq(d1, d2)
    for h in range(2):
        marg1, marg2 = {}, {}
        for dist, marg in ((d1, marg1), (d2, marg2)):
            for traj, p in dist.items():
                key = traj[h] + ((traj[h + 1][0],) if h + 1 < 2 else ())
                marg[key] = marg.get(key, 0.0) + p
        assert hellinger_sq(marg1, marg2) <= full + 1e-12


def test_layer_hellinger_ignores_last_transition():
    m = make_model(0)
    P = np.array(m.transitions)
    P[:, -1] = P[:, -1, :, :, ::-1]
    other = TabularCMDP(P, m.reward_values, m.reward_probs)
    assert np.all(layer_hellinger(m, other) == 0.0)


# --- error budget

def test_budget_examples():
    assert oracle_error_budget(8, 0.05, 0) == 1.0
    assert oracle_error_budget(8, 0.05, 1024) == pytest.approx(math.log(160) / 1024)
    assert oracle_error_budget(8, 0.05, 1024) == pytest.approx(0.004956, abs=1e-6)


@given(st.integers(1, 1000), st.floats(1e-6, 0.49), st.integers(0, 10**5), st.integers(1, 10**5))
def test_budget_monotone_and_clamped(size, delta, n, extra):
    a = oracle_error_budget(size, delta, n)
    b = oracle_error_budget(size, delta, n + extra)
    assert 0.0 <= b <= a <= 1.0


@pytest.mark.parametrize("args", [(8, 0.0, 10), (8, 0.5, 10), (0, 0.1, 10), (8, 0.1, -1)])
def test_budget_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        oracle_error_budget(*args)
