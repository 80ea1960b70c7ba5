"""The finite-window surrogate game.

Each player's windows become states of a Markov chain. A window of length
``l`` held at step ``h`` is turned into a belief by filtering its pairs
forward from a fixed prior (``mu_i`` by default) placed at step ``h - l``;
pair ``k`` of the window uses the kernels of global step ``h - l + k``.
While ``h <= m`` the window is the whole history and the belief is the exact
posterior.

The next pair ``(a, o)`` has ``o`` emitted by the current latent state, so the
surrogate kernel is ``P^m_h(w + (a, o) | w, a) = sum_s O_h(o | s) b^m_h(s | w)``.
Kernels are stored per player as ``obs_prob[h, w, a, o]`` together with the
codec's successor table; only per-player factors are ever built.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from pomglab.model import (
    PomgModel,
    check_budget,
    check_profile,
    contract_opponents,
    expected_stage,
    require_valid,
    scatter_windows,
)
from pomglab.policy import FiniteWindowPolicy, PolicyProfile, WindowCodec


@dataclass(frozen=True)
class WindowBelief:
    belief: np.ndarray
    mass: float
    reachable: bool


@dataclass(frozen=True, eq=False)
class PlayerSuperstate:
    """Surrogate tables for one player.

    ``belief[h, w]`` is defined on the windows of step ``h`` (length
    ``min(h, m)``); other rows, and rows whose window has zero likelihood,
    hold a uniform belief and a uniform kernel and are flagged unreachable.
    """

    player: int
    codec: WindowCodec
    belief: np.ndarray  # (H, W, S)
    mass: np.ndarray  # (H, W)
    reachable: np.ndarray  # (H, W) bool
    obs_prob: np.ndarray  # (H, W, A, O)

    @property
    def horizon(self) -> int:
        return self.belief.shape[0]

    def kernel_dense(self, h: int) -> np.ndarray:
        """``P^m_h(w' | w, a)`` as a dense ``(W, A, W)`` array."""
        W, A, O = self.obs_prob.shape[1:]
        out = np.zeros((W, A, W))
        w_idx, a_idx, o_idx = np.meshgrid(np.arange(W), np.arange(A), np.arange(O), indexing="ij")
        np.add.at(out, (w_idx, a_idx, self.codec.successor), self.obs_prob[h])
        return out


@dataclass(frozen=True, eq=False)
class SuperstateMdp:
    model: PomgModel
    m: int
    players: tuple

    def __getitem__(self, i: int) -> PlayerSuperstate:
        return self.players[i]


def _filter_windows(model: PomgModel, i: int, h: int, length: int, prior: np.ndarray,
                    codec: WindowCodec) -> np.ndarray:
    """Unnormalised filter over every window of ``length`` ending before step ``h``."""
    digits = codec.digits(length)
    nu = np.broadcast_to(prior, (digits.shape[0], prior.size)).copy()
    start = h - length
    for k in range(length):
        t = start + k
        a, o = np.divmod(digits[:, k], codec.n_obs)
        nu = nu * model.observation[i][t][:, o].T
        nu = np.einsum("ns,nst->nt", nu, model.transition[i][t][:, a, :].transpose(1, 0, 2))
    return nu


def window_belief(model: PomgModel, i: int, h: int, window: Sequence[tuple[int, int]],
                  m: int | None = None, prior: np.ndarray | None = None) -> WindowBelief:
    """Belief over ``S_i`` at (0-based) step ``h`` after seeing ``window``.

    ``window`` must have length ``min(h, m)``; without ``m`` it must be the
    full history (length ``h``).
    """
    window = tuple(window)
    m = model.horizon if m is None else m
    if len(window) != min(h, m):
        raise ValueError(f"window of length {len(window)} cannot be held at step {h} with m={m}")
    prior = model.init[i] if prior is None else np.asarray(prior, dtype=float)
    codec = WindowCodec(model.action_sizes[i], model.obs_sizes[i], len(window))
    nu = prior.copy()
    for k, (a, o) in enumerate(window):
        codec.encode([(a, o)])  # range check
        t = h - len(window) + k
        nu = (nu * model.observation[i][t][:, o]) @ model.transition[i][t][:, a, :]
    z = float(nu.sum())
    if z <= 0.0:
        S = model.state_sizes[i]
        return WindowBelief(np.full(S, 1.0 / S), 0.0, False)
    return WindowBelief(nu / z, z, True)


def build_player_superstate(model: PomgModel, i: int, m: int, prior: np.ndarray | None = None,
                            budget: int | None = None, normalize: bool = True) -> PlayerSuperstate:
    codec = WindowCodec(model.action_sizes[i], model.obs_sizes[i], m)
    H, S = model.horizon, model.state_sizes[i]
    A, O = codec.n_actions, codec.n_obs
    check_budget(H * codec.n_windows * S * A * O, budget, f"player {i} superstate tables")
    prior = model.init[i] if prior is None else np.asarray(prior, dtype=float)

    belief = np.full((H, codec.n_windows, S), 1.0 / S)
    mass = np.zeros((H, codec.n_windows))
    reachable = np.zeros((H, codec.n_windows), dtype=bool)
    obs_prob = np.full((H, codec.n_windows, A, O), 1.0 / O)
    for h in range(H):
        length = codec.step_length(h)
        blk = codec.block(length)
        nu = _filter_windows(model, i, h, length, prior, codec)
        z = nu.sum(axis=1)
        ok = z > 0
        b = nu / np.where(ok, z, 1.0)[:, None] if normalize else nu
        sl = slice(blk.start, blk.stop)
        belief[h, sl][ok] = b[ok]
        mass[h, sl] = z
        reachable[h, sl] = ok
        pred = belief[h, sl] @ model.observation[i][h]  # (n, O)
        obs_prob[h, sl][ok] = np.broadcast_to(pred[ok][:, None, :], (int(ok.sum()), A, O))
    return PlayerSuperstate(i, codec, belief, mass, reachable, obs_prob)


def build_superstate(model: PomgModel, m: int, priors: Sequence[np.ndarray] | None = None,
                     budget: int | None = None, normalize: bool = True) -> SuperstateMdp:
    """All per-player surrogate tables for window length ``m``.

    ``normalize=False`` skips belief renormalisation; it exists only so the
    verification suite can show that a broken kernel is caught.
    """
    require_valid(model)
    players = tuple(
        build_player_superstate(model, i, m, None if priors is None else priors[i], budget, normalize)
        for i in range(model.num_players)
    )
    return SuperstateMdp(model, m, players)


def dump_superstate(mdp: SuperstateMdp, path: str | Path) -> None:
    """Write beliefs, masses and kernels of every player as JSON for inspection."""
    data = {
        "window": mdp.m,
        "players": [
            {
                "actions": ps.codec.n_actions,
                "observations": ps.codec.n_obs,
                "windows": [list(map(list, ps.codec.decode(w))) for w in range(ps.codec.n_windows)],
                "belief": ps.belief.tolist(),
                "mass": ps.mass.tolist(),
                "reachable": ps.reachable.tolist(),
                "obs_prob": ps.obs_prob.tolist(),
                "successor": ps.codec.successor.tolist(),
            }
            for ps in mdp.players
        ],
    }
    Path(path).write_text(json.dumps(data) + "\n")


def superstate_kernel(model: PomgModel, i: int, m: int) -> PlayerSuperstate:
    return build_player_superstate(model, i, m)


def superstate_reward(mdp: SuperstateMdp, h: int, joint_windows: Sequence[int],
                      joint_action: Sequence[int]) -> np.ndarray:
    """``r^m_{i,h}(w, a)`` for every player at codec-indexed joint window ``w``."""
    model = mdp.model
    beliefs = []
    for j, w in enumerate(joint_windows):
        ps = mdp[j]
        if not ps.reachable[h, w]:
            raise ValueError(f"player {j}: window {w} is unreachable at step {h}")
        beliefs.append(ps.belief[h, w])
    out = np.empty(model.num_players)
    for i in range(model.num_players):
        r = model.reward_tensor(i, h)[(Ellipsis,) + tuple(joint_action)]
        for b in reversed(beliefs):
            r = r @ b
        out[i] = r
    return out


def check_mdp_profile(mdp: SuperstateMdp, profile: PolicyProfile) -> None:
    check_profile(mdp.model, profile)
    if profile.m != mdp.m:
        raise ValueError(f"profile uses m={profile.m}, surrogate was built with m={mdp.m}")


def window_visitation(mdp: SuperstateMdp, profile: PolicyProfile) -> list:
    """Per player ``(H, W)``: window law of the surrogate chain ``P^m``."""
    check_mdp_profile(mdp, profile)
    out = []
    for ps, pol in zip(mdp.players, profile):
        d = np.zeros((ps.horizon, ps.codec.n_windows))
        d[0, 0] = 1.0
        for h in range(ps.horizon - 1):
            x = d[h][:, None, None] * pol.table[h][:, :, None] * ps.obs_prob[h]
            d[h + 1] = scatter_windows(x, ps.codec.successor, ps.codec.n_windows)
        out.append(d)
    return out


def surrogate_occupancy(mdp: SuperstateMdp, profile: PolicyProfile,
                        visitation: list | None = None) -> list:
    """Per player ``(H, S_i, A_i)``: ``sum_w d(w) pi(a | w) b(s | w)``."""
    visitation = window_visitation(mdp, profile) if visitation is None else visitation
    return [
        np.einsum("hw,hwa,hws->hsa", d, pol.table, ps.belief)
        for d, pol, ps in zip(visitation, profile, mdp.players)
    ]


def surrogate_values(mdp: SuperstateMdp, profile: PolicyProfile) -> np.ndarray:
    """``V^m_i(pi)`` for every player."""
    occ = surrogate_occupancy(mdp, profile)
    model = mdp.model
    vals = np.zeros(model.num_players)
    for i in range(model.num_players):
        for h in range(model.horizon):
            vals[i] += expected_stage(model.reward_tensor(i, h), [o[h] for o in occ])
    return vals


def marginal_reward(mdp: SuperstateMdp, profile: PolicyProfile, i: int,
                    occupancy: list | None = None) -> np.ndarray:
    """``r^{m, pi_-i}_{i,h}(w, a)``, shape ``(H, W, A)``: opponents averaged out."""
    occupancy = surrogate_occupancy(mdp, profile) if occupancy is None else occupancy
    model = mdp.model
    ps = mdp[i]
    out = np.empty((model.horizon, ps.codec.n_windows, ps.codec.n_actions))
    for h in range(model.horizon):
        R = contract_opponents(model.reward_tensor(i, h), [o[h] for o in occupancy], i)
        out[h] = ps.belief[h] @ R
    return out


def exact_marginal_q(mdp: SuperstateMdp, profile: PolicyProfile, i: int,
                     reward: np.ndarray | None = None) -> np.ndarray:
    """Q-function of player ``i``'s induced MDP, ``(H, W, A)``, by dense backups."""
    check_mdp_profile(mdp, profile)
    reward = marginal_reward(mdp, profile, i) if reward is None else reward
    ps, pol = mdp[i], profile[i]
    H = ps.horizon
    q = np.zeros_like(reward)
    q[H - 1] = reward[H - 1]
    for h in range(H - 2, -1, -1):
        v_next = (pol.table[h + 1] * q[h + 1]).sum(axis=1)
        q[h] = reward[h] + ps.kernel_dense(h) @ v_next
    return q


def greedy_policy(q: np.ndarray, codec: WindowCodec) -> FiniteWindowPolicy:
    return FiniteWindowPolicy.deterministic(codec, np.argmax(q, axis=-1))
