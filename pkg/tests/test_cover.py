import numpy as np
import pytest
from hypothesis import given, strategies as st

from lolipop.cmdp import Policy, RewardFunction, TabularCMDP, occupancy_of
from lolipop.cover import (CoverError, EpochCovers, EpochParams, PolicyCover, clipped_occupancy,
                           igw_distribution, observable_occupancy, trusted_occupancy)

from conftest import brute_force_member, chain_model, make_model


def params(eta=1.0, zeta=10.0, m=2):
    return EpochParams(m, 0.1, 1.0, eta, zeta)


def random_policy(rng, H, S, A):
    return Policy(rng.dirichlet(np.ones(A), size=(H, S)))


# --- clipped occupancies

def test_all_trusted_equals_plain_occupancy():
    m = make_model(0, H=3, S=3, A=2)
    pol = Policy.uniform(3, 3, 2)
    full = np.ones((2, 3, 2, 3), bool)
    assert np.allclose(trusted_occupancy(m, full, pol, 0).values, occupancy_of(m, 0, pol).values)
    assert np.allclose(observable_occupancy(m, full, pol, 0).values, occupancy_of(m, 0, pol).values)


def test_empty_first_layer_kills_later_mass():
    m = make_model(1, H=3, S=3, A=2)
    none = np.zeros((2, 3, 2, 3), bool)
    d = trusted_occupancy(m, none, Policy.uniform(3, 3, 2), 0).values
    assert d[0].sum() == pytest.approx(1.0)
    assert np.all(d[1:] == 0.0)


def test_one_clipped_transition_by_hand():
    P = np.zeros((1, 2, 2, 2, 2))
    P[0, 0, 0, 0] = [0.3, 0.7]
    P[0, 0, 0, 1] = [0.6, 0.4]
    P[0, 0, 1] = [0.5, 0.5]
    P[0, 1] = [0.5, 0.5]
    R = RewardFunction.zeros(1, 2, 2, 2)
    m = TabularCMDP(P, R.values, R.probs)
    trusted = np.ones((1, 2, 2, 2), bool)
    trusted[0, 0, 0, 1] = False  # drop (s=0, a=0) -> s'=1
    pol = Policy(np.full((2, 2, 2), 0.5))
    d = trusted_occupancy(m, trusted, pol, 0).values
    # layer-2 state marginal: s'=0 gets 0.5*0.3 + 0.5*0.6, s'=1 loses 0.5*0.7
    assert d[1].sum(axis=1) == pytest.approx([0.45, 0.2])
    assert d[1].sum() == pytest.approx(1.0 - 0.35)


@given(st.integers(0, 2**31 - 1))
def test_clipping_is_monotone_and_below_truth(seed):
    rng = np.random.default_rng(seed)
    m = make_model(seed, H=3, S=3, A=2)
    small = rng.random((2, 3, 2, 3)) < 0.5
    big = small | (rng.random((2, 3, 2, 3)) < 0.5)
    pol = random_policy(rng, 3, 3, 2)
    d_small = observable_occupancy(m, small, pol, 0).values
    d_big = observable_occupancy(m, big, pol, 0).values
    assert np.all(d_small <= d_big + 1e-15)
    assert np.all(d_big <= occupancy_of(m, 0, pol).values + 1e-15)


# --- inverse gap weighting

@pytest.mark.parametrize("K", [1, 2, 5])
def test_all_zero_regret_is_uniform(K):
    pols = tuple(Policy.uniform(1, 1, 1) for _ in range(K))
    igw = igw_distribution(PolicyCover(pols, np.zeros(K)), eta=3.0)
    assert igw.lam == pytest.approx(K, rel=1e-12)
    assert np.allclose(igw.weights, 1.0 / K)


@pytest.mark.parametrize("eta,r", [(1.0, 0.5), (10.0, 0.3), (0.01, 1.0), (100.0, 0.9)])
def test_two_member_quadratic(eta, r):
    pols = (Policy.uniform(1, 1, 1),) * 2
    igw = igw_distribution(PolicyCover(pols, np.array([0.0, r])), eta)
    lam = (2 - eta * r + np.sqrt(eta ** 2 * r ** 2 + 4)) / 2
    assert igw.lam == pytest.approx(lam, rel=1e-10)


def test_gap_blind_limit():
    pols = (Policy.uniform(1, 1, 1),) * 3
    igw = igw_distribution(PolicyCover(pols, np.array([0.0, 0.5, 0.9])), eta=0.0)
    assert np.allclose(igw.weights, 1 / 3)


def test_requires_zero_regret_member():
    with pytest.raises(CoverError):
        igw_distribution(PolicyCover((Policy.uniform(1, 1, 1),), np.array([0.2])), 1.0)


@given(st.lists(st.floats(0, 1), min_size=0, max_size=12), st.floats(0, 1e6),
       st.sampled_from(["bisection", "falcon"]))
def test_igw_contract(regs, eta, mode):
    reg = np.array([0.0] + regs)
    K = len(reg)
    igw = igw_distribution(PolicyCover((Policy.uniform(1, 1, 1),) * K, reg), eta, mode)
    assert abs(igw.weights.sum() - 1.0) <= 1e-12
    assert np.all(igw.weights >= 0)
    if mode == "bisection":
        assert 0.0 < igw.lam <= K
        if eta > 0:
            assert igw.weights @ reg <= K / eta


# --- cover members

def test_first_epoch_chain_member_reaches_target():
    # deterministic estimated chain: action a moves to state a; zero previous rewards
    H, S, A = 2, 2, 2
    prev = chain_model(H, S, A, [[[0, 1], [0, 1]]] * H, np.zeros((H, S, A)))
    cv = EpochCovers(params(m=1), prev)
    cv.set_layer_estimate(0, prev)
    for s in range(S):
        for a in range(A):
            mem = cv.member(0, 1, s, a)
            assert mem.objective == pytest.approx(1.0 / (S * A))
            d = occupancy_of(prev, 0, mem.policy).values
            assert d[1, s, a] == pytest.approx(1.0)


def test_unreachable_pair_returns_greedy_policy():
    H, S, A = 2, 3, 2
    prev = chain_model(H, S, A, [[[0, 1]] * 3] * H, np.zeros((H, S, A)))
    cv = EpochCovers(params(m=1), prev)
    cv.set_layer_estimate(0, prev)
    mem = cv.member(0, 1, 2, 0)  # state 2 is never entered
    assert mem.objective == 0.0
    assert mem.policy == cv.plan(0).pi_hat


def test_trusted_set_hand_threshold():
    # objective 1/SA and P_hat = 1: trusted iff 1/SA >= 1/zeta
    H, S, A = 2, 1, 2
    prev = chain_model(H, S, A, [[[0, 0]]] * H, np.zeros((H, S, A)))
    for zeta, expected in [(1.9, False), (2.0, True), (2.1, True)]:
        cv = EpochCovers(params(zeta=zeta, m=1), prev)
        cv.set_layer_estimate(0, prev)
        assert cv.objectives(0, 0) == pytest.approx(np.full((1, 2), 0.5))
        assert bool(cv.trusted(0, 0).all()) is expected


def test_vanishing_threshold_trusts_every_reachable_transition():
    prev, cur = make_model(1, H=3, S=3, A=2), make_model(2, H=3, S=3, A=2)
    cv = EpochCovers(params(zeta=1e300), prev)
    for h in range(2):
        cv.set_layer_estimate(h, cur)
    for h in range(2):
        positive = cv.objectives(0, h)[:, :, None] * cur.transitions[0, h] > 0
        assert np.array_equal(cv.trusted(0, h), positive)


def test_zero_transition_never_trusted():
    P = np.zeros((1, 2, 2, 1, 2))
    P[..., 0] = 1.0
    R = RewardFunction.zeros(1, 2, 2, 1)
    m = TabularCMDP(P, R.values, R.probs)
    cv = EpochCovers(params(zeta=1e300), m)
    cv.set_layer_estimate(0, m)
    assert not cv.trusted(0, 0)[:, :, 1].any()


def test_missing_layer_estimate_is_an_error():
    cv = EpochCovers(params(), make_model(0))
    with pytest.raises(CoverError):
        cv.cover(0, 1)


@given(st.integers(0, 2**31 - 1), st.floats(-2, 2), st.floats(0, 2))
def test_member_equals_enumeration(seed, log_eta, log_zeta):
    prev, cur = make_model(seed), make_model(seed + 1)
    cv = EpochCovers(params(eta=10 ** log_eta, zeta=10 ** log_zeta), prev)
    cv.set_layer_estimate(0, cur)
    for h in range(2):
        for s in range(2):
            for a in range(2):
                mem = cv.member(0, h, s, a)
                assert mem.objective == pytest.approx(brute_force_member(cv, 0, h, s, a), abs=1e-8)
                assert mem.relaxation >= mem.objective - 1e-9


@given(st.integers(0, 2**31 - 1))
def test_cover_structure(seed):
    prev, cur = make_model(seed, C=2, H=3, S=2, A=2), make_model(seed + 1, C=2, H=3, S=2, A=2)
    cv = EpochCovers(params(eta=5.0, zeta=3.0), prev)
    for h in range(3):
        cv.set_layer_estimate(h, cur)
    for c in range(2):
        for h in range(3):
            cov, igw = cv.cover(c, h)
            assert cov.policies[0] == cv.plan(c).pi_hat
            assert len(cov) <= cv.S * cv.A + 1
            assert len({p.key for p in cov.policies}) == len(cov)
            assert cov.regrets[0] == 0.0
            assert abs(igw.weights.sum() - 1) <= 1e-12
            assert igw.weights @ cov.regrets <= 2 * cv.S * cv.A / cv.params.eta
            assert cv.cover(c, h)[0] is cov  # memoized per (context, layer)
