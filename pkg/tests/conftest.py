"""Shared fixtures and brute-force oracles.

The oracles here deliberately avoid the package's window machinery: they walk
explicit joint latent paths so that the library's factorised computations are
checked against an independent route.
"""

import itertools

import numpy as np
import pytest

from pomglab.games import GameSpec, generate_game
from pomglab.model import PomgModel


def make_game(seed=0, kind="random-decoupled", **kw):
    return generate_game(GameSpec(kind=kind, seed=seed, **kw))[0]


def two_state_model(stay=0.9, correct=0.8, horizon=2, n_actions=1, reward=None):
    """Single player, two states, symmetric sticky chain, symmetric noisy sensor."""
    P = np.array([[stay, 1 - stay], [1 - stay, stay]])
    trans = np.broadcast_to(P[:, None, :], (horizon, 2, n_actions, 2)).copy()
    O = np.array([[correct, 1 - correct], [1 - correct, correct]])
    obs = np.broadcast_to(O, (horizon, 2, 2)).copy()
    if reward is None:
        reward = np.zeros((horizon, 2, n_actions))
        reward[:, 0, :] = 1.0
    return PomgModel((trans,), (obs,), (np.asarray(reward, float),), (np.array([0.5, 0.5]),))


def brute_force_values(model, profile):
    """``V_i(pi)`` by enumerating every joint latent/observation/action path."""
    N, H = model.num_players, model.horizon
    S, A, O = model.state_sizes, model.action_sizes, model.obs_sizes
    codecs = [p.codec for p in profile]
    total = np.zeros(N)

    def rec(h, states, windows, prob):
        if prob == 0.0 or h == H:
            return
        js = int(np.ravel_multi_index(states, S))
        for obs in itertools.product(*[range(o) for o in O]):
            p_o = prob * np.prod([model.observation[i][h][states[i], obs[i]] for i in range(N)])
            if p_o == 0:
                continue
            for acts in itertools.product(*[range(a) for a in A]):
                p_a = p_o * np.prod([profile[i].table[h, windows[i], acts[i]] for i in range(N)])
                if p_a == 0:
                    continue
                ja = int(np.ravel_multi_index(acts, A))
                for i in range(N):
                    total[i] += p_a * model.reward[i][h][js, ja]
                nxt_w = tuple(codecs[i].successor[windows[i], acts[i], obs[i]] for i in range(N))
                for nxt in itertools.product(*[range(s) for s in S]):
                    p_s = np.prod([model.transition[i][h][states[i], acts[i], nxt[i]] for i in range(N)])
                    rec(h + 1, nxt, nxt_w, p_a * p_s)

    for s0 in itertools.product(*[range(s) for s in S]):
        p0 = np.prod([model.init[i][s0[i]] for i in range(N)])
        rec(0, s0, tuple(0 for _ in range(N)), p0)
    return total


@pytest.fixture
def small_game():
    return make_game(seed=11, players=2, horizon=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def report_line():
    """Record one pass/fail summary line; all lines are echoed after the run."""
    def record(text):
        ACCEPTANCE_LINES.append(text)
        print(text)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
