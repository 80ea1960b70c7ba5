"""Exact desk-scale oracles: best responses, Nash gaps, filter stability,
estimator targets, potential audits and the truncation-bias measurements.

Everything here enumerates; sizes are checked against an enumeration budget
and :class:`~pomglab.model.BudgetExceeded` is raised rather than truncating.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from pomglab.model import (
    PomgModel,
    check_budget,
    check_profile,
    contract_opponents,
    expected_stage,
    exact_window_policy_value,
    state_action_occupancy,
    state_window_chain,
)
from pomglab.policy import FiniteWindowPolicy, PolicyProfile, WindowCodec, suffix_map
from pomglab.superstate import (
    SuperstateMdp,
    _filter_windows,
    build_superstate,
    check_mdp_profile,
    marginal_reward,
    surrogate_values,
)

DENOM_TOL = 1e-12


def window_error(horizon: int, rho: float, m: int) -> float:
    """Finite-window approximation error ``4 H^2 (1 - rho)^m``."""
    return 4.0 * horizon**2 * (1.0 - rho) ** m


# --- best responses ---------------------------------------------------------


def best_response_superstate(mdp: SuperstateMdp, profile: PolicyProfile, i: int,
                             reward: np.ndarray | None = None) -> tuple:
    """Optimal value and a greedy deterministic policy for player ``i`` in the
    surrogate game, opponents fixed. Ties go to the lowest action."""
    check_mdp_profile(mdp, profile)
    reward = marginal_reward(mdp, profile, i) if reward is None else reward
    ps = mdp[i]
    H, W, A = reward.shape
    v_next = np.zeros(W)
    actions = np.zeros((H, W), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        q = reward[h] + (ps.obs_prob[h] * v_next[ps.codec.successor]).sum(axis=-1)
        actions[h] = np.argmax(q, axis=1)
        v_next = q.max(axis=1)
    return float(v_next[0]), FiniteWindowPolicy.deterministic(ps.codec, actions)


def opponent_stage_rewards(model: PomgModel, profile: PolicyProfile, i: int,
                           occupancy: list | None = None) -> np.ndarray:
    """``(H, S_i, A_i)`` reward of player ``i`` with opponents averaged under
    their true state-action law."""
    occupancy = state_action_occupancy(model, profile) if occupancy is None else occupancy
    return np.stack([
        contract_opponents(model.reward_tensor(i, h), [o[h] for o in occupancy], i)
        for h in range(model.horizon)
    ])


def best_response_full_history(model: PomgModel, profile: PolicyProfile, i: int,
                               budget: int | None = None) -> float:
    """``max`` over full-history policies of player ``i`` against ``profile``.

    Decoupled dynamics make the opponents' state-action law independent of
    player ``i``'s play, so player ``i`` faces a single-agent POMDP whose
    sufficient statistic is its own exact posterior. Expectimax runs over the
    whole action-observation tree.
    """
    check_profile(model, profile)
    H, S = model.horizon, model.state_sizes[i]
    A, O = model.action_sizes[i], model.obs_sizes[i]
    base = A * O
    check_budget(sum(base**h for h in range(H)) * S * base, budget, f"player {i} history tree")
    R = opponent_stage_rewards(model, profile, i)
    Ob, P = model.observation[i], model.transition[i]

    beliefs = [model.init[i][None, :]]
    preds = []
    for h in range(H):
        b = beliefs[h]
        preds.append(b @ Ob[h])  # (n, O)
        if h == H - 1:
            break
        # child (n, a, o): (b * O[:, o]) @ P[:, a, :]
        joint = b[:, None, :] * Ob[h].T[None, :, :]  # (n, O, S)
        child = np.einsum("nos,sat->naot", joint, P[h])
        z = child.sum(axis=-1, keepdims=True)
        child = np.where(z > 0, child / np.where(z > 0, z, 1.0), 1.0 / S)
        beliefs.append(child.reshape(-1, S))

    v = None
    for h in range(H - 1, -1, -1):
        q = beliefs[h] @ R[h]  # (n, A)
        if v is not None:
            q = q + (preds[h][:, None, :] * v.reshape(-1, A, O)).sum(axis=-1)
        v = q.max(axis=1)
    return float(v[0])


# --- Nash gaps --------------------------------------------------------------


@dataclass(frozen=True)
class PlayerGap:
    value: float  # V_i(pi) in the POMG
    value_window: float  # V^m_i(pi) in the surrogate game
    best_window: float  # max over Pi^m_i in the surrogate game
    best_window_realised: float  # best of {pi_i, surrogate greedy} evaluated in the POMG
    best_history: float  # max over Pi^H_i in the POMG

    @property
    def gap_window(self) -> float:
        return self.best_window - self.value_window

    @property
    def gap_window_realised(self) -> float:
        return self.best_window_realised - self.value

    @property
    def gap_history(self) -> float:
        return self.best_history - self.value


@dataclass(frozen=True)
class NashGapReport:
    m: int
    players: tuple

    @property
    def max_gap(self) -> float:
        """Exploitability against full-history deviations in the POMG."""
        return max(p.gap_history for p in self.players)

    @property
    def max_window_gap(self) -> float:
        """Exploitability against window deviations in the surrogate game."""
        return max(p.gap_window for p in self.players)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "max_gap_history": self.max_gap,
            "max_gap_window": self.max_window_gap,
            "players": [
                {
                    "value": p.value,
                    "value_window": p.value_window,
                    "best_window": p.best_window,
                    "best_window_realised": p.best_window_realised,
                    "best_history": p.best_history,
                    "gap_window": p.gap_window,
                    "gap_window_realised": p.gap_window_realised,
                    "gap_history": p.gap_history,
                }
                for p in self.players
            ],
        }


def nash_gap(model: PomgModel, profile: PolicyProfile, mdp: SuperstateMdp | None = None,
             budget: int | None = None) -> NashGapReport:
    mdp = build_superstate(model, profile.m, budget=budget) if mdp is None else mdp
    values = exact_window_policy_value(model, profile, budget)
    values_m = surrogate_values(mdp, profile)
    players = []
    for i in range(model.num_players):
        best_m, greedy = best_response_superstate(mdp, profile, i)
        realised = exact_window_policy_value(model, profile.replace(i, greedy), budget)[i]
        players.append(PlayerGap(
            value=float(values[i]),
            value_window=float(values_m[i]),
            best_window=best_m,
            best_window_realised=float(max(realised, values[i])),
            best_history=best_response_full_history(model, profile, i, budget),
        ))
    return NashGapReport(profile.m, tuple(players))


# --- filter stability -------------------------------------------------------


@dataclass(frozen=True)
class StabilityEstimate:
    """Measured one-step contraction of the belief filter.

    ``rho`` is for joint beliefs and is what the bounds use; ``rho_players``
    holds the per-player rates. ``step_ratios[t]`` is the worst joint ratio
    seen when appending the pair of step ``t``.
    """

    rho: float
    rho_players: tuple
    step_ratios: tuple

    def epsilon(self, m: int, horizon: int) -> float:
        return window_error(horizon, self.rho, m)


def _pairwise_tv(x: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(x[:, None, :] - x[None, :, :]).sum(axis=-1)


def _update(b: np.ndarray, model: PomgModel, i: int, t: int, a: int, o: int) -> tuple:
    nu = (b * model.observation[i][t][:, o]) @ model.transition[i][t][:, a, :]
    z = nu.sum(axis=1)
    ok = z > 0
    return nu / np.where(ok, z, 1.0)[:, None], ok


def _belief_sets(model: PomgModel, i: int, t: int, depth: int) -> list:
    """Beliefs at step ``t`` reachable by filtering ``mu_i`` from any start
    step in ``[t - depth, t]``; one array per start step."""
    A, O = model.action_sizes[i], model.obs_sizes[i]
    out = []
    for start in range(max(0, t - depth), t + 1):
        length = t - start
        codec = WindowCodec(A, O, length)
        nu = _filter_windows(model, i, t, length, model.init[i], codec)
        z = nu.sum(axis=1)
        nu = nu[z > 0] / z[z > 0, None]
        out.append(np.unique(np.round(nu, 14), axis=0))
    return out


def _outer_rows(arrays: Sequence[np.ndarray]) -> np.ndarray:
    """Row-wise product measures of every combination of rows."""
    out = arrays[0]
    for arr in arrays[1:]:
        out = (out[:, None, :, None] * arr[None, :, None, :]).reshape(
            out.shape[0] * arr.shape[0], out.shape[1] * arr.shape[1])
    return out


def _max_ratio(before: np.ndarray, after: np.ndarray, ok: np.ndarray) -> float:
    d0 = _pairwise_tv(before)
    d1 = _pairwise_tv(after)
    mask = (d0 > DENOM_TOL) & ok[:, None] & ok[None, :]
    if not mask.any():
        return 0.0
    return float((d1[mask] / d0[mask]).max())


def measure_filter_stability(model: PomgModel, depth: int | None = None,
                             budget: int | None = None) -> StabilityEstimate:
    """Worst TV contraction of the Bayes filter over exhaustive belief pairs.

    At each step ``t`` the candidate beliefs are all filters of ``mu`` started
    at any step in ``[t - depth, t]`` (this covers both full-history
    posteriors and window beliefs). Joint candidates are products of
    per-player candidates sharing a start step. For every pair and every
    joint extension ``(a, o)`` the ratio of TV distances after/before is
    formed when the denominator exceeds ``1e-12``; ``rho = 1 - max ratio``,
    floored at 0.
    """
    H, N = model.horizon, model.num_players
    depth = H if depth is None else depth
    worst_joint = 0.0
    worst_player = [0.0] * N
    step_ratios = []
    for t in range(H - 1):
        sets = [_belief_sets(model, i, t, depth) for i in range(N)]
        n_joint = sum(int(np.prod([sets[i][k].shape[0] for i in range(N)])) for k in range(len(sets[0])))
        check_budget(n_joint**2 * model.joint_state_size, budget, f"joint belief pairs at step {t}")

        ext_updates = []  # per player: list over (a, o) of (updated per start, ok per start)
        for i in range(N):
            flat = np.concatenate(sets[i])
            per_ext = []
            for a in range(model.action_sizes[i]):
                for o in range(model.obs_sizes[i]):
                    upd = [_update(b, model, i, t, a, o) for b in sets[i]]
                    per_ext.append(upd)
                    u = np.concatenate([x[0] for x in upd])
                    ok = np.concatenate([x[1] for x in upd])
                    worst_player[i] = max(worst_player[i], _max_ratio(flat, u, ok))
            ext_updates.append(per_ext)

        joint_before = np.concatenate([
            _outer_rows([sets[i][k] for i in range(N)]) for k in range(len(sets[0]))
        ])
        d0 = _pairwise_tv(joint_before)
        base_mask = d0 > DENOM_TOL
        step_worst = 0.0
        for combo in itertools.product(*[range(len(e)) for e in ext_updates]):
            after, ok = [], []
            for k in range(len(sets[0])):
                parts = [ext_updates[i][combo[i]][k] for i in range(N)]
                after.append(_outer_rows([p[0] for p in parts]))
                okk = parts[0][1]
                for p in parts[1:]:
                    okk = (okk[:, None] & p[1][None, :]).reshape(-1)
                ok.append(okk)
            after = np.concatenate(after)
            ok = np.concatenate(ok)
            mask = base_mask & ok[:, None] & ok[None, :]
            if mask.any():
                d1 = _pairwise_tv(after)
                step_worst = max(step_worst, float((d1[mask] / d0[mask]).max()))
        step_ratios.append(step_worst)
        worst_joint = max(worst_joint, step_worst)

    rho = max(0.0, 1.0 - worst_joint)
    return StabilityEstimate(
        rho=rho,
        rho_players=tuple(max(0.0, 1.0 - r) for r in worst_player),
        step_ratios=tuple(step_ratios),
    )


def dobrushin_floor(model: PomgModel) -> float:
    """Lower bound on the joint filter contraction from kernel coefficients.

    One filter step conditions on ``o`` (TV grows by at most ``(3k - 1)/2``,
    ``k`` the worst likelihood ratio of an observation column) and then
    propagates (TV shrinks by the Dobrushin coefficient ``delta`` of the
    transition). The floor is ``1 - max_t delta_t (3 k_t - 1) / 2``, at 0.
    """
    worst = 0.0
    for t in range(model.horizon - 1):
        P = model.transition[0][t]
        Ob = model.observation[0][t]
        for i in range(1, model.num_players):
            Pi = model.transition[i][t]
            S0, A0 = P.shape[0], P.shape[1]
            Si, Ai = Pi.shape[0], Pi.shape[1]
            P = np.einsum("xay,ubv->xuabyv", P, Pi).reshape(S0 * Si, A0 * Ai, -1)
            Ob = np.einsum("xo,up->xuop", Ob, model.observation[i][t]).reshape(S0 * Si, -1)
        delta = max(
            float(_pairwise_tv(P[:, a, :]).max()) for a in range(P.shape[1])
        )
        lo = Ob.min(axis=0)
        if (lo <= 0).any():
            return 0.0
        kappa = float((Ob.max(axis=0) / lo).max())
        worst = max(worst, delta * (3.0 * kappa - 1.0) / 2.0)
    return max(0.0, 1.0 - worst)


# --- estimator targets ------------------------------------------------------


@dataclass(frozen=True)
class BlendedTables:
    """Exact limits of the window estimators under the true dynamics.

    ``obs_prob[h, w, a, o]`` is ``P(o_h = o | w_h = w, a_h = a)`` and
    ``reward[h, w, a]`` is ``E[r_{i,h} | w_h = w, a_h = a]``; ``pair_mass`` is
    ``P(w_h = w, a_h = a)``. Rows with zero mass are all zero.
    """

    obs_prob: np.ndarray
    reward: np.ndarray
    pair_mass: np.ndarray
    state_given_window: np.ndarray  # (H, W, S)


def true_window_conditionals(model: PomgModel, profile: PolicyProfile,
                             chains: list | None = None) -> list:
    """Per player ``(P(s_h | w_h) as (H, W, S), P(w_h) as (H, W))`` under the POMG law."""
    chains = state_window_chain(model, profile) if chains is None else chains
    out = []
    for q in chains:
        mass = q.sum(axis=1)
        cond = np.where(mass[:, None, :] > 0, q / np.where(mass > 0, mass, 1.0)[:, None, :], 0.0)
        out.append((cond.transpose(0, 2, 1), mass))
    return out


def blended_kernel(model: PomgModel, i: int, profile: PolicyProfile,
                   budget: int | None = None) -> BlendedTables:
    """Estimator targets for player ``i`` when ``profile`` is the sampling profile."""
    chains = state_window_chain(model, profile, budget)
    cond, mass = true_window_conditionals(model, profile, chains)[i]
    pol = profile[i]
    pair_mass = mass[:, :, None] * pol.table
    seen = pair_mass > 0
    H = model.horizon
    obs = np.einsum("hws,hso->hwo", cond, model.observation[i])
    obs_prob = np.where(seen[..., None], obs[:, :, None, :], 0.0)
    R = opponent_stage_rewards(model, profile, i, state_action_occupancy(model, profile, chains))
    reward = np.where(seen, np.einsum("hws,hsa->hwa", cond, R), 0.0)
    assert reward.shape[0] == H
    return BlendedTables(obs_prob, reward, pair_mass, cond)


# --- potential structure ----------------------------------------------------


@dataclass(frozen=True)
class PotentialSpec:
    """Stage potentials ``phi[h]`` over ``(joint state, joint action)``."""

    phi: np.ndarray  # (H, prod S, prod A)

    def tensor(self, model: PomgModel, h: int) -> np.ndarray:
        return self.phi[h].reshape(model.state_sizes + model.action_sizes)

    def slack(self, horizon: int, rho: float, m: int) -> float:
        return 2.0 * window_error(horizon, rho, m)


@dataclass(frozen=True)
class PotentialReport:
    max_violation: float
    per_player_step: np.ndarray  # (N, H)


def verify_statewise_potential(model: PomgModel, phi: PotentialSpec | np.ndarray) -> PotentialReport:
    """Largest mismatch between reward and potential differences over all
    unilateral ``(s_i, a_i)`` swaps."""
    phi = phi if isinstance(phi, PotentialSpec) else PotentialSpec(np.asarray(phi, dtype=float))
    N, H = model.num_players, model.horizon
    if phi.phi.shape != model.reward[0].shape:
        raise ValueError(f"potential shape {phi.phi.shape} != reward shape {model.reward[0].shape}")
    viol = np.zeros((N, H))
    for i in range(N):
        for h in range(H):
            d = model.reward_tensor(i, h) - phi.tensor(model, h)
            d = np.moveaxis(d, (i, N + i), (-2, -1))
            d = d.reshape(-1, model.state_sizes[i] * model.action_sizes[i])
            viol[i, h] = float(np.ptp(d, axis=1).max())
    return PotentialReport(float(viol.max()), viol)


def potential_value(model: PomgModel, profile: PolicyProfile, phi: PotentialSpec,
                    occupancy: list | None = None) -> float:
    """``E_pi[sum_h phi_h(s_h, a_h)]`` under the true dynamics."""
    occupancy = state_action_occupancy(model, profile) if occupancy is None else occupancy
    return sum(
        expected_stage(phi.tensor(model, h), [o[h] for o in occupancy])
        for h in range(model.horizon)
    )


@dataclass(frozen=True)
class AuditReport:
    max_diff: float  # max |dV^m - dPhi|
    bound: float
    max_true_diff: float  # max |dV - dPhi| in the POMG itself
    diffs: np.ndarray = field(repr=False)

    @property
    def utilisation(self) -> float:
        if self.bound > 0:
            return self.max_diff / self.bound
        return 0.0 if self.max_diff <= 1e-10 else float("inf")

    @property
    def passed(self) -> bool:
        return self.max_diff <= self.bound + 1e-10


def near_potential_audit(model: PomgModel, mdp: SuperstateMdp, phi: PotentialSpec,
                         deviations: Sequence[tuple], rho: float) -> AuditReport:
    """Check ``|dV^m_i - dPhi| <= 2 eps`` on ``(profile, player, alternative)`` triples."""
    diffs, true_diffs = [], []
    for profile, i, alt in deviations:
        other = profile.replace(i, alt)
        dv_m = surrogate_values(mdp, profile)[i] - surrogate_values(mdp, other)[i]
        dv = exact_window_policy_value(model, profile)[i] - exact_window_policy_value(model, other)[i]
        dphi = potential_value(model, profile, phi) - potential_value(model, other, phi)
        diffs.append(abs(dv_m - dphi))
        true_diffs.append(abs(dv - dphi))
    diffs = np.asarray(diffs)
    return AuditReport(
        max_diff=float(diffs.max(initial=0.0)),
        bound=phi.slack(model.horizon, rho, mdp.m),
        max_true_diff=float(max(true_diffs, default=0.0)),
        diffs=diffs,
    )


def pairwise_identity(p: np.ndarray, q: np.ndarray, x: np.ndarray) -> tuple:
    """Both sides of ``<p - q, x> = 1/2 sum_ij (p_i q_j - p_j q_i)(x_i - x_j)``."""
    p, q, x = (np.asarray(v, dtype=float) for v in (p, q, x))
    if not (p.shape == q.shape == x.shape) or p.ndim != 1:
        raise ValueError(f"support mismatch: {p.shape}, {q.shape}, {x.shape}")
    lhs = float(p @ x - q @ x)
    cross = np.outer(p, q) - np.outer(q, p)
    rhs = float(0.5 * (cross * (x[:, None] - x[None, :])).sum())
    return lhs, rhs


# --- truncation bias --------------------------------------------------------


@dataclass(frozen=True)
class BiasReport:
    """Per-step maxima of the truncation bias; entry ``h`` is 0-based step.

    * ``belief_suffix``: max TV between joint posteriors of histories sharing
      their last ``m`` pairs (and between each posterior and its window belief)
    * ``reward_joint``: ``max |r^m_i(w, a) - r^H_i(tau, a)|`` over consistent
      joint histories ``tau``
    * ``kernel_player``: ``max sum_o |P^m_i - P^H_i|`` per player row
    * ``kernel_blended``: ``max sum_o |P~_i - P^m_i|`` over reachable rows
    * ``reward_blended``: ``max |r~_i(w, a) - r^m_i(w, a)|`` over joint windows
    * ``reward_marginal``: ``max |r~_i(w_i, a_i) - r^{m,pi_-i}_i(w_i, a_i)|``
    """

    m: int
    belief_suffix: np.ndarray
    reward_joint: np.ndarray
    kernel_player: np.ndarray
    kernel_blended: np.ndarray
    reward_blended: np.ndarray
    reward_marginal: np.ndarray

    def truncated(self, h: int) -> bool:
        """Whether the window at step ``h`` drops part of the history."""
        return h > self.m

    def belief_bound(self, rho: float) -> np.ndarray:
        return np.array([(1 - rho) ** self.m if self.truncated(h) else 0.0
                         for h in range(self.belief_suffix.size)])

    def lemma_bound(self, rho: float) -> np.ndarray:
        return 2.0 * self.belief_bound(rho)

    def marginal_bound(self, rho: float, num_players: int) -> np.ndarray:
        return np.array([
            2.0 * (1 + (num_players - 1) * (h - self.m)) * (1 - rho) ** self.m if self.truncated(h) else 0.0
            for h in range(self.reward_marginal.size)
        ])


def _joint_stage(tensor: np.ndarray, beliefs: Sequence[np.ndarray]) -> np.ndarray:
    """``sum_s tensor[s, a] prod_j beliefs_j[n_j, s_j]`` -> ``(n_0, ..., n_{N-1}, A_0, ...)``."""
    n = len(beliefs)
    st = "".join(chr(ord("a") + k) for k in range(n))
    ac = "".join(chr(ord("n") + k) for k in range(n))
    hs = "".join(chr(ord("A") + k) for k in range(n))
    spec = st + ac + "," + ",".join(hs[j] + st[j] for j in range(n)) + "->" + hs + ac
    return np.einsum(spec, tensor, *beliefs)


def bias_audit(model: PomgModel, mdp: SuperstateMdp, profile: PolicyProfile | None = None,
               full: SuperstateMdp | None = None, budget: int | None = None) -> BiasReport:
    """Exhaustive truncation-bias measurements at every step.

    Full-history posteriors are the window beliefs of the ``m = H`` surrogate.
    The blended quantities need the sampling ``profile``; without one a
    uniform profile is used.
    """
    H, N, m = model.horizon, model.num_players, mdp.m
    full = build_superstate(model, H, budget=budget) if full is None else full
    profile = (PolicyProfile.uniform(model.action_sizes, model.obs_sizes, m, H)
               if profile is None else profile)
    check_mdp_profile(mdp, profile)
    maps = [suffix_map(full[i].codec, mdp[i].codec) for i in range(N)]

    belief_suffix = np.zeros(H)
    reward_joint = np.zeros(H)
    kernel_player = np.zeros(H)
    for h in range(H):
        post, win, groups = [], [], []
        for i in range(N):
            blk = full[i].codec.step_block(h)
            idx = np.arange(blk.start, blk.stop)
            idx = idx[full[i].reachable[h, idx]]
            wi = maps[i][idx]
            post.append(full[i].belief[h, idx])
            win.append(mdp[i].belief[h, wi])
            groups.append(wi)
            diff = np.abs(full[i].obs_prob[h, idx] - mdp[i].obs_prob[h, wi]).sum(axis=-1)
            kernel_player[h] = max(kernel_player[h], float(diff.max(initial=0.0)))
        size = int(np.prod([p.shape[0] for p in post])) * model.joint_action_size
        check_budget(size, budget, f"joint histories at step {h}")
        for i in range(N):
            rh = _joint_stage(model.reward_tensor(i, h), post)
            rm = _joint_stage(model.reward_tensor(i, h), win)
            reward_joint[h] = max(reward_joint[h], float(np.abs(rh - rm).max(initial=0.0)))

        joint_post = _outer_rows(post)
        joint_win = _outer_rows(win)
        key = groups[0]
        for g in groups[1:]:
            key = (key[:, None] * (g.max(initial=0) + 1) + g[None, :]).reshape(-1)
        tv_win = 0.5 * np.abs(joint_post - joint_win).sum(axis=1)
        worst = float(tv_win.max(initial=0.0))
        for k in np.unique(key):
            members = joint_post[key == k]
            if members.shape[0] > 1:
                worst = max(worst, float(_pairwise_tv(members).max()))
        belief_suffix[h] = worst

    chains = state_window_chain(model, profile, budget)
    conds = true_window_conditionals(model, profile, chains)
    occ_true = state_action_occupancy(model, profile, chains)
    from pomglab.superstate import surrogate_occupancy  # local: avoids widening the import block

    occ_m = surrogate_occupancy(mdp, profile)
    kernel_blended = np.zeros(H)
    reward_blended = np.zeros(H)
    reward_marginal = np.zeros(H)
    for h in range(H):
        cs, bs = [], []
        for i in range(N):
            cond, mass = conds[i]
            blk = mdp[i].codec.step_block(h)
            idx = np.arange(blk.start, blk.stop)
            idx = idx[mass[h, idx] > 0]
            cs.append(cond[h, idx])
            bs.append(mdp[i].belief[h, idx])
            pred = cond[h, idx] @ model.observation[i][h]
            diff = np.abs(pred - mdp[i].obs_prob[h, idx, 0]).sum(axis=-1)
            kernel_blended[h] = max(kernel_blended[h], float(diff.max(initial=0.0)))
            R_true = contract_opponents(model.reward_tensor(i, h), [o[h] for o in occ_true], i)
            R_m = contract_opponents(model.reward_tensor(i, h), [o[h] for o in occ_m], i)
            gap = np.abs(cond[h, idx] @ R_true - mdp[i].belief[h, idx] @ R_m)
            reward_marginal[h] = max(reward_marginal[h], float(gap.max(initial=0.0)))
        for i in range(N):
            gap = np.abs(_joint_stage(model.reward_tensor(i, h), cs) - _joint_stage(model.reward_tensor(i, h), bs))
            reward_blended[h] = max(reward_blended[h], float(gap.max(initial=0.0)))

    return BiasReport(m, belief_suffix, reward_joint, kernel_player,
                      kernel_blended, reward_blended, reward_marginal)
