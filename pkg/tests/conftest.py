import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from lolipop.cmdp import RewardFunction, TabularCMDP
from lolipop.env import RngStream
from lolipop.instances import random_model

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def make_model(seed, C=1, H=2, S=2, A=2, zero_rewards=False):
    rng = RngStream(seed, 99)
    return random_model(rng, S, A, H, C, "zero" if zero_rewards else "bernoulli-step")


def chain_model(H, S, A, next_state, means):
    """Deterministic transitions ``next_state[h, s, a]`` and Bernoulli means ``[H, S, A]``."""
    P = np.zeros((1, H, S, A, S))
    for h in range(H):
        for s in range(S):
            for a in range(A):
                P[0, h, s, a, next_state[h][s][a]] = 1.0
    R = RewardFunction.bernoulli(np.asarray(means, float)[None])
    return TabularCMDP(P, R.values, R.probs)


@st.composite
def small_models(draw, max_S=3, max_A=3, max_H=3, max_C=2):
    S = draw(st.integers(1, max_S))
    A = draw(st.integers(1, max_A))
    H = draw(st.integers(1, max_H))
    C = draw(st.integers(1, max_C))
    seed = draw(st.integers(0, 2**31 - 1))
    return make_model(seed, C, H, S, A)


@pytest.fixture
def two_arm():
    """H=1, one state, arms with means 0.2 and 0.7."""
    P = np.ones((1, 1, 1, 2, 1))
    vals = np.stack([np.zeros((1, 1, 1, 2)), np.ones((1, 1, 1, 2))], -1)
    probs = np.stack([1 - np.array([[[[0.2, 0.7]]]]), np.array([[[[0.2, 0.7]]]])], -1)
    return TabularCMDP(P, vals, probs)


def deterministic_policies(H, S, A):
    import itertools

    from lolipop.cmdp import Policy
    for acts in itertools.product(range(A), repeat=H * S):
        yield Policy.deterministic(np.array(acts).reshape(H, S), A)


def brute_force_member(covers, c, h, s, a):
    """max over deterministic policies of the trusted reach ratio, by enumeration."""
    from lolipop.cover import clipped_occupancy
    P = covers.current_transitions(c, h)
    T = covers.trusted_masks(c, h)
    best = -1.0
    for pol in deterministic_policies(covers.H, covers.S, covers.A):
        d = clipped_occupancy(P, T, pol, covers.prev.start_state, layers=h + 1)
        reg = covers.estimated_regret(c, pol)
        best = max(best, d[h, s, a] / (covers.S * covers.A + covers.params.eta * reg))
    return best


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    report = getattr(mod, "REPORT", None)
    if report:
        terminalreporter.section("acceptance criteria")
        for k in sorted(report):
            terminalreporter.write_line(report[k])
