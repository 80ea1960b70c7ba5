import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_values, make_game
from pomglab import oracle
from pomglab.games import GameSpec, generate_game
from pomglab.model import PomgModel, exact_window_policy_value
from pomglab.policy import FiniteWindowPolicy, PolicyProfile
from pomglab.superstate import build_superstate, marginal_reward, surrogate_values


def all_deterministic(codec, horizon):
    """Every deterministic window policy, varying actions on step-consistent windows only."""
    cells = [(h, w) for h in range(horizon) for w in codec.step_block(h)]
    for choice in itertools.product(range(codec.n_actions), repeat=len(cells)):
        act = np.zeros((horizon, codec.n_windows), dtype=int)
        for (h, w), a in zip(cells, choice):
            act[h, w] = a
        yield FiniteWindowPolicy.deterministic(codec, act)


def single_player(P, Ob, R, H=3):
    S = P.shape[0]
    return PomgModel((np.broadcast_to(P, (H,) + P.shape).copy(),),
                     (np.broadcast_to(Ob, (H,) + Ob.shape).copy(),),
                     (np.broadcast_to(R, (H,) + R.shape).copy(),), (np.ones(S) / S,))


NOISY = np.array([[0.8, 0.2], [0.3, 0.7]])


class TestBestResponses:
    def test_history_matches_tree_enumeration(self, rng):
        model = make_game(seed=21, players=2, horizon=2)
        H = 2
        prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, H, H, rng)
        for i in range(2):
            best = max(brute_force_values(model, prof.replace(i, alt))[i]
                       for alt in all_deterministic(prof[i].codec, H))
            assert oracle.best_response_full_history(model, prof, i) == pytest.approx(best, abs=1e-12)

    def test_single_agent_blind_is_open_loop(self):
        # one player with a constant sensor: histories are action sequences, so
        # the best response is the best open-loop plan on the latent chain
        g = np.random.default_rng(3)
        P = g.dirichlet(np.ones(3), size=(3, 2))
        R = g.random((3, 2))
        H = 4
        model = single_player(P, np.ones((3, 1)), R, H=H)
        best = -1.0
        for plan in itertools.product(range(2), repeat=H):
            d, total = model.init[0], 0.0
            for a in plan:
                total += d @ R[:, a]
                d = d @ P[:, a, :]
            best = max(best, total)
        prof = PolicyProfile.uniform([2], [1], 1, H)
        assert oracle.best_response_full_history(model, prof, 0) == pytest.approx(best, abs=1e-12)

    def test_superstate_matches_enumeration(self, rng):
        model = make_game(seed=22, players=2, horizon=2)
        mdp = build_superstate(model, 1)
        prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, 1, 2, rng)
        for i in range(2):
            value, greedy = oracle.best_response_superstate(mdp, prof, i)
            best = max(surrogate_values(mdp, prof.replace(i, alt))[i]
                       for alt in all_deterministic(prof[i].codec, 2))
            assert value == pytest.approx(best, abs=1e-12)
            assert surrogate_values(mdp, prof.replace(i, greedy))[i] == pytest.approx(value, abs=1e-12)

    def test_budget(self, small_game):
        prof = PolicyProfile.uniform(small_game.action_sizes, small_game.obs_sizes, 1, 2)
        with pytest.raises(Exception, match="budget|exceed"):
            oracle.best_response_full_history(small_game, prof, 0, budget=3)


class TestNashGap:
    def test_full_window_classes_coincide(self, rng):
        model = make_game(seed=23, players=2, horizon=3)
        prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, 3, 3, rng)
        rep = oracle.nash_gap(model, prof)
        for p in rep.players:
            assert p.value_window == pytest.approx(p.value, abs=1e-10)
            assert p.best_window == pytest.approx(p.best_history, abs=1e-10)
            assert p.gap_window == pytest.approx(p.gap_history, abs=1e-10)

    @pytest.mark.parametrize("m", [1, 2])
    def test_ordering(self, rng, m):
        model = make_game(seed=24, players=2, horizon=3)
        for _ in range(5):
            prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, m, 3, rng)
            rep = oracle.nash_gap(model, prof)
            for p in rep.players:
                assert p.gap_window >= -1e-12
                assert p.value - 1e-12 <= p.best_window_realised <= p.best_history + 1e-12
            assert rep.max_gap >= max(p.gap_window_realised for p in rep.players) - 1e-12

    def test_report_dict(self, small_game):
        prof = PolicyProfile.uniform(small_game.action_sizes, small_game.obs_sizes, 1, 2)
        d = oracle.nash_gap(small_game, prof).to_dict()
        assert d["m"] == 1 and len(d["players"]) == 2
        assert d["max_gap_history"] == max(p["gap_history"] for p in d["players"])

    def test_approximation_bound(self, rng):
        model = make_game(seed=25, players=2, horizon=3)
        stab = oracle.measure_filter_stability(model)
        for m in (1, 2):
            mdp = build_superstate(model, m)
            eps = stab.epsilon(m, 3)
            for _ in range(5):
                prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, m, 3, rng)
                diff = np.abs(surrogate_values(mdp, prof) - exact_window_policy_value(model, prof))
                assert diff.max() <= eps + 1e-12

    def test_window_error(self):
        assert oracle.window_error(3, 0.5, 2) == pytest.approx(9.0)
        assert oracle.window_error(3, 1.0, 1) == 0.0


class TestStability:
    def test_rank_one_kernel_forgets_immediately(self):
        P = np.broadcast_to(np.array([0.3, 0.7]), (2, 2, 2)).copy()
        est = oracle.measure_filter_stability(single_player(P, NOISY, np.zeros((2, 2))))
        assert est.rho == 1.0 and est.rho_players == (1.0,)

    @pytest.mark.parametrize("perm", [np.eye(2), np.eye(2)[::-1]])
    def test_permutation_kernel_never_forgets(self, perm):
        P = np.stack([perm, perm], axis=1)
        est = oracle.measure_filter_stability(single_player(P, NOISY, np.zeros((2, 2))))
        assert est.rho == 0.0

    def test_horizon_two_has_no_pairs(self):
        est = oracle.measure_filter_stability(make_game(seed=0, players=2, horizon=2))
        assert est.rho == 1.0  # first step has a single belief, the initial law

    @pytest.mark.parametrize("seed", range(6))
    def test_generated_games_above_floor(self, seed):
        model = make_game(seed=seed, players=2, horizon=3)
        est = oracle.measure_filter_stability(model)
        assert 0.0 < est.rho <= 1.0
        assert est.rho >= oracle.dobrushin_floor(model) - 1e-12
        assert len(est.rho_players) == 2 and len(est.step_ratios) == 2

    def test_floor_zero_without_full_support(self):
        P = np.stack([np.eye(2), np.eye(2)], axis=1)
        assert oracle.dobrushin_floor(single_player(P, np.eye(2), np.zeros((2, 2)))) == 0.0


class TestBlendedAndBias:
    def test_full_window_blended_is_surrogate(self, rng):
        model = make_game(seed=26, players=2, horizon=3)
        mdp = build_superstate(model, 3)
        prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, 3, 3, rng)
        for i in range(2):
            tab = oracle.blended_kernel(model, i, prof)
            seen = tab.pair_mass > 0
            np.testing.assert_allclose(tab.obs_prob[seen], mdp[i].obs_prob[seen], atol=1e-12)
            np.testing.assert_allclose(tab.reward[seen], marginal_reward(mdp, prof, i)[seen], atol=1e-12)

    def test_blended_mass(self, rng):
        model = make_game(seed=27, players=2, horizon=3)
        prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, 1, 3, rng)
        tab = oracle.blended_kernel(model, 0, prof)
        np.testing.assert_allclose(tab.pair_mass.sum(axis=(1, 2)), 1.0, atol=1e-12)

    def test_full_window_no_bias(self):
        model = make_game(seed=28, players=2, horizon=3)
        rep = oracle.bias_audit(model, build_superstate(model, 3))
        for arr in (rep.belief_suffix, rep.reward_joint, rep.kernel_player,
                    rep.kernel_blended, rep.reward_blended, rep.reward_marginal):
            assert arr.max() <= 1e-12

    @pytest.mark.parametrize("seed", [29, 30])
    def test_bias_within_bounds(self, seed, rng):
        model = make_game(seed=seed, players=2, horizon=3)
        rho = oracle.measure_filter_stability(model).rho
        mdp = build_superstate(model, 1)
        prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, 1, 3, rng)
        rep = oracle.bias_audit(model, mdp, prof)
        tol = 1e-9
        assert (rep.belief_suffix <= rep.belief_bound(rho) + tol).all()
        for arr in (rep.reward_joint, rep.kernel_player, rep.kernel_blended, rep.reward_blended):
            assert (arr <= rep.lemma_bound(rho) + tol).all()
        assert (rep.reward_marginal <= rep.marginal_bound(rho, 2) + tol).all()
        assert rep.belief_suffix[:2].max() <= 1e-12  # windows at steps 0, 1 are whole histories

    def test_bound_shapes(self):
        rep = oracle.BiasReport(1, *[np.zeros(4)] * 6)
        np.testing.assert_allclose(rep.belief_bound(0.5), [0, 0, 0.5, 0.5])
        np.testing.assert_allclose(rep.marginal_bound(0.5, 3), [0, 0, 2 * 3 * 0.5, 2 * 5 * 0.5])


class TestPotential:
    def test_generated_potentials_exact(self):
        for kind in ("identical-interest", "statewise-potential"):
            for seed in range(5):
                model, phi, _ = generate_game(GameSpec(kind=kind, seed=seed, players=3, horizon=2,
                                                       states=[2, 3, 2], actions=[2, 2, 3]))
                assert oracle.verify_statewise_potential(model, phi).max_violation < 1e-10

    def test_matching_pennies_has_no_potential(self):
        # the 4-cycle of unilateral deviations gains 4 in total, so every
        # candidate potential misses some edge by at least 1
        R0 = np.array([[1.0, 0.0], [0.0, 1.0]]).reshape(1, 1, 4)
        R1 = 1.0 - R0
        one = (np.ones((1, 1, 2, 1)),)
        model = PomgModel(one * 2, (np.ones((1, 1, 1)),) * 2, (R0, R1), (np.ones(1),) * 2)
        g = np.random.default_rng(0)
        for phi in [R0, R1, np.zeros_like(R0)] + [g.random(R0.shape) for _ in range(20)]:
            assert oracle.verify_statewise_potential(model, phi).max_violation >= 1.0 - 1e-12

    def test_shape_mismatch(self, small_game):
        with pytest.raises(ValueError):
            oracle.verify_statewise_potential(small_game, np.zeros((1, 2, 2)))

    def test_potential_value_identical_interest(self, rng):
        model, phi, _ = generate_game(GameSpec(kind="identical-interest", seed=31, horizon=2))
        prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, 1, 2, rng)
        assert oracle.potential_value(model, prof, phi) == pytest.approx(
            brute_force_values(model, prof)[0], abs=1e-12)

    @pytest.mark.parametrize("kind", ["identical-interest", "statewise-potential"])
    def test_audit(self, kind, rng):
        model, phi, _ = generate_game(GameSpec(kind=kind, seed=32, horizon=3))
        rho = oracle.measure_filter_stability(model).rho
        for m in (1, 3):
            mdp = build_superstate(model, m)
            devs = []
            for _ in range(10):
                prof = PolicyProfile.random(model.action_sizes, model.obs_sizes, m, 3, rng)
                i = int(rng.integers(2))
                alt = FiniteWindowPolicy.random(prof[i].codec, 3, rng)
                devs.append((prof, i, alt))
            rep = oracle.near_potential_audit(model, mdp, phi, devs, rho)
            assert rep.passed
            assert rep.max_true_diff < 1e-10  # exact potential in the game itself
            if m == 3:
                assert rep.max_diff < 1e-10


class TestPairwiseIdentity:
    def test_worked_example(self):
        assert oracle.pairwise_identity([1, 0], [0, 1], [3, 1]) == pytest.approx((2.0, 2.0))

    def test_support_mismatch(self):
        with pytest.raises(ValueError):
            oracle.pairwise_identity([1, 0], [0, 0, 1], [1, 2])

    @settings(max_examples=300)
    @given(st.integers(1, 8), st.integers(0, 2**31))
    def test_random(self, n, seed):
        g = np.random.default_rng(seed)
        p, q = g.dirichlet(np.ones(n), size=2)
        x = g.normal(size=n) * 10
        lhs, rhs = oracle.pairwise_identity(p, q, x)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, np.abs(x).max())
