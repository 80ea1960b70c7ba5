import itertools
import json

import numpy as np
import pytest

from conftest import make_game, two_state_model
from pomglab.model import PomgModel, exact_window_policy_value, sample_batch, state_window_chain
from pomglab.learner import window_indices
from pomglab.policy import FiniteWindowPolicy, PolicyProfile, WindowCodec
from pomglab.rng import SeededRng
from pomglab.superstate import (
    build_superstate,
    dump_superstate,
    exact_marginal_q,
    marginal_reward,
    superstate_reward,
    surrogate_values,
    window_belief,
    window_visitation,
)


class TestWindowBelief:
    def test_worked_example(self):
        model = two_state_model(stay=0.9, correct=0.8)
        wb = window_belief(model, 0, 1, [(0, 0)])
        np.testing.assert_allclose(wb.belief, [0.74, 0.26], atol=1e-12)
        assert wb.mass == pytest.approx(0.5)
        assert wb.reachable

    def test_noiseless_sensor(self):
        model = two_state_model(stay=0.9, correct=1.0, horizon=3)
        wb = window_belief(model, 0, 2, [(0, 1)], m=1)
        # certain of state 1 at the previous step, then one transition
        np.testing.assert_allclose(wb.belief, [0.1, 0.9], atol=1e-12)

    def test_uninformative_sensor(self):
        model = two_state_model(stay=0.7, correct=0.5, horizon=3)
        wb = window_belief(model, 0, 2, [(0, 1), (0, 0)])
        np.testing.assert_allclose(wb.belief, [0.5, 0.5], atol=1e-12)

    def test_unreachable(self):
        P = np.broadcast_to(np.eye(2)[:, None, :], (2, 2, 1, 2))
        Ob = np.broadcast_to(np.eye(2), (2, 2, 2))
        model = PomgModel((P,), (Ob,), (np.zeros((2, 2, 1)),), (np.array([1.0, 0.0]),))
        wb = window_belief(model, 0, 1, [(0, 1)])
        assert not wb.reachable and wb.mass == 0.0
        np.testing.assert_allclose(wb.belief, [0.5, 0.5])
        ps = build_superstate(model, 1)[0]
        w = ps.codec.encode([(0, 1)])
        assert not ps.reachable[1, w]
        np.testing.assert_allclose(ps.obs_prob[1, w], 0.5)

    def test_length_must_match_step(self):
        model = two_state_model(horizon=3)
        with pytest.raises(ValueError):
            window_belief(model, 0, 2, [(0, 0)])  # full history at step 2 has 2 pairs
        window_belief(model, 0, 2, [(0, 0)], m=1)

    def test_table_matches_single_window_calls(self):
        model = make_game(seed=3, players=2, horizon=3)
        mdp = build_superstate(model, 1)
        for i in range(2):
            ps = mdp[i]
            for h in range(3):
                for w in ps.codec.step_block(h):
                    wb = window_belief(model, i, h, ps.codec.decode(w), m=1)
                    np.testing.assert_allclose(ps.belief[h, w], wb.belief, atol=1e-14)
                    assert ps.mass[h, w] == pytest.approx(wb.mass, abs=1e-15)


def brute_kernel_m1(model, i, h, window, a):
    """``P(o_h | window of one pair, a_h)`` by summing explicit latent paths."""
    (a0, o0), = window
    S, O = model.state_sizes[i], model.obs_sizes[i]
    num = np.zeros(O)
    for s_prev, s_now, o in itertools.product(range(S), range(S), range(O)):
        num[o] += (model.init[i][s_prev] * model.observation[i][h - 1][s_prev, o0]
                   * model.transition[i][h - 1][s_prev, a0, s_now] * model.observation[i][h][s_now, o])
    return num / num.sum()


class TestKernel:
    def test_rows_sum_to_one_and_suffix_only(self):
        model = make_game(seed=4, players=2, horizon=3)
        mdp = build_superstate(model, 2)
        for ps in mdp.players:
            np.testing.assert_allclose(ps.obs_prob.sum(axis=-1), 1.0, atol=1e-10)
            for h in range(3):
                K = ps.kernel_dense(h)
                np.testing.assert_allclose(K.sum(axis=-1), 1.0, atol=1e-10)
                for w, a in itertools.product(range(ps.codec.n_windows), range(ps.codec.n_actions)):
                    allowed = {ps.codec.encode(ps.codec.truncate(ps.codec.decode(w) + ((a, o),)))
                               for o in range(ps.codec.n_obs)}
                    outside = [x for x in range(ps.codec.n_windows) if x not in allowed]
                    assert (K[w, a, outside] == 0.0).all()

    def test_matches_path_marginalisation_m1(self):
        model = make_game(seed=8, players=2, horizon=3)
        mdp = build_superstate(model, 1)
        for i in range(2):
            codec = mdp[i].codec
            for h in (1, 2):
                for w in codec.block(1):
                    for a in range(codec.n_actions):
                        np.testing.assert_allclose(
                            mdp[i].obs_prob[h, w, a], brute_kernel_m1(model, i, h, codec.decode(w), a),
                            atol=1e-12)

    def test_full_window_is_posterior(self):
        model = make_game(seed=9, players=2, horizon=3)
        rng = np.random.default_rng(0)
        prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, 3, 3, rng)
        mdp = build_superstate(model, 3)
        chains = state_window_chain(model, prof)
        for i in range(2):
            q = chains[i]  # (H, S, W): joint law of state and full history
            mass = q.sum(axis=1)
            for h in range(3):
                for w in mdp[i].codec.step_block(h):
                    if mass[h, w] > 0:
                        np.testing.assert_allclose(mdp[i].belief[h, w], q[h, :, w] / mass[h, w], atol=1e-12)

    def test_values_exact_at_full_window(self):
        model = make_game(seed=10, players=2, horizon=3)
        rng = np.random.default_rng(1)
        mdp = build_superstate(model, 3)
        for _ in range(5):
            prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, 3, 3, rng)
            np.testing.assert_allclose(surrogate_values(mdp, prof),
                                       exact_window_policy_value(model, prof), atol=1e-12)

    def test_dump(self, tmp_path):
        model = make_game(seed=1, players=2, horizon=2)
        mdp = build_superstate(model, 1)
        dump_superstate(mdp, tmp_path / "s.json")
        data = json.loads((tmp_path / "s.json").read_text())
        assert data["window"] == 1 and len(data["players"]) == 2
        np.testing.assert_allclose(data["players"][0]["belief"], mdp[0].belief)


class TestRewards:
    def test_state_independent_reward(self):
        model = make_game(seed=2, players=2, horizon=2)
        r = np.random.default_rng(3).random((2, 1, 4))
        flat = [np.broadcast_to(r, (2, 4, 4)).copy()] * 2
        model = PomgModel(model.transition, model.observation, tuple(flat), model.init)
        mdp = build_superstate(model, 1)
        for w0, w1 in itertools.product(range(1, 5), range(1, 5)):
            for a in itertools.product(range(2), range(2)):
                ja = a[0] * 2 + a[1]
                np.testing.assert_allclose(superstate_reward(mdp, 1, (w0, w1), a), r[1, 0, ja], atol=1e-14)

    def test_four_term_sum(self):
        model = make_game(seed=6, players=2, horizon=2)
        mdp = build_superstate(model, 1)
        b0, b1 = mdp[0].belief[1, 3], mdp[1].belief[1, 2]
        for a in itertools.product(range(2), range(2)):
            ja = a[0] * 2 + a[1]
            for i in range(2):
                expected = sum(model.reward[i][1][s0 * 2 + s1, ja] * b0[s0] * b1[s1]
                               for s0 in range(2) for s1 in range(2))
                assert superstate_reward(mdp, 1, (3, 2), a)[i] == pytest.approx(expected, abs=1e-14)

    def test_unreachable_component_rejected(self):
        P = np.broadcast_to(np.eye(2)[:, None, :], (2, 2, 1, 2))
        Ob = np.broadcast_to(np.eye(2), (2, 2, 2))
        model = PomgModel((P,), (Ob,), (np.zeros((2, 2, 1)),), (np.array([1.0, 0.0]),))
        mdp = build_superstate(model, 1)
        with pytest.raises(ValueError):
            superstate_reward(mdp, 1, (mdp[0].codec.encode([(0, 1)]),), (0,))

    def test_single_player_marginal_is_superstate_reward(self):
        model = make_game(seed=3, players=1, horizon=3)
        mdp = build_superstate(model, 2)
        prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, 2, 3, np.random.default_rng(2))
        r = marginal_reward(mdp, prof, 0)
        for h in range(3):
            for w in mdp[0].codec.step_block(h):
                for a in range(2):
                    assert r[h, w, a] == pytest.approx(superstate_reward(mdp, h, (w,), (a,))[0], abs=1e-14)

    def test_marginal_by_enumeration(self):
        model = make_game(seed=12, players=2, horizon=3)
        mdp = build_superstate(model, 1)
        prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, 1, 3, np.random.default_rng(5))
        d = window_visitation(mdp, prof)
        r = marginal_reward(mdp, prof, 0)
        for h in range(3):
            for w0 in mdp[0].codec.step_block(h):
                for a0 in range(2):
                    expected = sum(
                        d[1][h, w1] * prof[1].table[h, w1, a1] * superstate_reward(mdp, h, (w0, w1), (a0, a1))[0]
                        for w1 in mdp[1].codec.step_block(h) for a1 in range(2)
                    )
                    assert r[h, w0, a0] == pytest.approx(expected, abs=1e-13)

    def test_opponent_irrelevant(self):
        base = make_game(seed=14, players=2, horizon=2)
        r0 = base.reward_tensor(0, 0)[:, :1, :, :1]  # drop player-1 dependence
        rew = np.broadcast_to(np.random.default_rng(0).random((2, 2, 1, 2, 1)), (2, 2, 2, 2, 2)).reshape(2, 4, 4)
        model = PomgModel(base.transition, base.observation, (rew, rew), base.init)
        mdp = build_superstate(model, 1)
        g = np.random.default_rng(8)
        p1 = PolicyProfile.random(model.action_sizes, model.obs_sizes, 1, 2, g)
        p2 = p1.replace(1, FiniteWindowPolicy.random(p1[1].codec, 2, g))
        np.testing.assert_allclose(marginal_reward(mdp, p1, 0), marginal_reward(mdp, p2, 0), atol=1e-14)
        assert r0.shape == (2, 1, 2, 1)


def joint_chain_value(mdp, profile):
    """``V^m`` by forward DP over the joint window chain with the joint kernel built explicitly."""
    model = mdp.model
    H = model.horizon
    W0, W1 = mdp[0].codec.n_windows, mdp[1].codec.n_windows
    d = np.zeros((W0, W1))
    d[0, 0] = 1.0
    vals = np.zeros(2)
    for h in range(H):
        nxt = np.zeros((W0, W1))
        K0, K1 = mdp[0].kernel_dense(h), mdp[1].kernel_dense(h)
        for w0, w1 in zip(*np.nonzero(d)):
            for a0, a1 in itertools.product(range(2), range(2)):
                p = d[w0, w1] * profile[0].table[h, w0, a0] * profile[1].table[h, w1, a1]
                vals += p * superstate_reward(mdp, h, (w0, w1), (a0, a1))
                nxt += p * np.outer(K0[w0, a0], K1[w1, a1])
        d = nxt
    return vals


class TestMarginalQ:
    def test_terminal_and_root(self):
        model = make_game(seed=15, players=2, horizon=3)
        g = np.random.default_rng(4)
        for m in (1, 2):
            mdp = build_superstate(model, m)
            prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, m, 3, g)
            joint = joint_chain_value(mdp, prof)
            for i in range(2):
                q = exact_marginal_q(mdp, prof, i)
                np.testing.assert_array_equal(q[2], marginal_reward(mdp, prof, i)[2])
                root = prof[i].table[0, 0] @ q[0, 0]
                assert root == pytest.approx(joint[i], abs=1e-12)

    def test_constant_reward(self):
        base = make_game(seed=16, players=2, horizon=3)
        ones = tuple(np.ones_like(r) for r in base.reward)
        model = PomgModel(base.transition, base.observation, ones, base.init)
        mdp = build_superstate(model, 2)
        prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, 2, 3, np.random.default_rng(0))
        q = exact_marginal_q(mdp, prof, 1)
        for h in range(3):
            np.testing.assert_allclose(q[h], 3 - h, atol=1e-12)


def test_surrogate_visitation_is_true_window_law_at_full_window():
    model = make_game(seed=18, players=2, horizon=3)
    mdp = build_superstate(model, 3)
    prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, 3, 3, np.random.default_rng(6))
    d = window_visitation(mdp, prof)
    for i in range(2):
        assert d[i][0, 0] == 1.0
        np.testing.assert_allclose(d[i].sum(axis=1), 1.0, atol=1e-12)
    n = 10**6
    batch = sample_batch(model, prof, n, SeededRng(2))
    for i in range(2):
        w = window_indices(batch.view(i), prof[i].codec)
        for h in range(3):
            freq = np.bincount(w[:, h], minlength=d[i].shape[1]) / n
            se = np.sqrt(d[i][h] * (1 - d[i][h]) / n)
            assert (np.abs(freq - d[i][h]) <= 3 * se + 1e-12).all()
