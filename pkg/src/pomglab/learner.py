"""Independent model estimation and soft policy iteration.

Every player estimates its own window model from its own view of the
sampled episodes (never the joint episode), evaluates its current policy on
that model by backward iteration and moves a step of size ``eta`` towards the
greedy policy.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from pomglab.model import PlayerView, PomgModel, require_valid, sample_batch
from pomglab.policy import FiniteWindowPolicy, PolicyProfile, WindowCodec, soft_update_table
from pomglab.rng import SeededRng


@dataclass(frozen=True)
class LearnerConfig:
    iterations: int
    episodes: int
    window: int
    eps: float = 0.1
    step_scale: float = 1.0
    seed: int = 0
    eval_every: int = 0  # 0 disables gap evaluation

    def __post_init__(self):
        for name in ("iterations", "episodes", "window"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.eps <= 1.0:
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")
        if not self.step_scale > 0.0:
            raise ValueError(f"step_scale must be > 0, got {self.step_scale}")
        if self.eval_every < 0:
            raise ValueError("eval_every must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "LearnerConfig":
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown learner settings: {sorted(unknown)}")
        return cls(**known)


# --- estimation -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PlayerEstimate:
    """Count tables for one player; ``P_hat`` and ``r_hat`` are derived.

    ``obs_counts[h, w, a, o]`` counts visits of ``(w, a)`` at step ``h`` that
    were followed by observation ``o``, i.e. by next window
    ``codec.successor[w, a, o]``.
    """

    codec: WindowCodec
    counts: np.ndarray  # (H, W, A)
    obs_counts: np.ndarray  # (H, W, A, O)
    reward_sums: np.ndarray  # (H, W, A)

    @property
    def P_hat(self) -> np.ndarray:
        """``(H, W, A, O)``; all-zero rows where unvisited."""
        n = self.counts[..., None]
        return np.divide(self.obs_counts, n, out=np.zeros_like(self.obs_counts), where=n > 0)

    @property
    def r_hat(self) -> np.ndarray:
        return np.divide(self.reward_sums, self.counts, out=np.zeros_like(self.reward_sums),
                         where=self.counts > 0)

    def dense_transition(self, h: int) -> np.ndarray:
        """``P_hat_h(w' | w, a)`` as ``(W, A, W)``."""
        W, A, O = self.obs_counts.shape[1:]
        out = np.zeros((W, A, W))
        w_idx, a_idx, _ = np.meshgrid(np.arange(W), np.arange(A), np.arange(O), indexing="ij")
        np.add.at(out, (w_idx, a_idx, self.codec.successor), self.P_hat[h])
        return out

    def min_visit(self) -> int:
        """Fewest visits over cells ``(h, w, a)`` whose window fits step ``h``."""
        H = self.counts.shape[0]
        return int(min(self.counts[h, self.codec.step_block(h).start:self.codec.step_block(h).stop].min()
                       for h in range(H)))


@dataclass(frozen=True)
class ModelEstimate:
    players: tuple

    def __getitem__(self, i: int) -> PlayerEstimate:
        return self.players[i]

    def min_visit(self) -> int:
        return min(p.min_visit() for p in self.players)


def window_indices(view: PlayerView, codec: WindowCodec) -> np.ndarray:
    """``(n, H)`` codec index of the window held at each step."""
    n, H = view.actions.shape
    w = np.zeros((n, H), dtype=np.int64)
    for h in range(H - 1):
        w[:, h + 1] = codec.successor[w[:, h], view.actions[:, h], view.observations[:, h]]
    return w


def _count(view: PlayerView, codec: WindowCodec) -> tuple:
    n, H = view.actions.shape
    W, A, O = codec.n_windows, codec.n_actions, codec.n_obs
    w = window_indices(view, codec)
    step = np.broadcast_to(np.arange(H), (n, H))
    cell = (step * W + w) * A + view.actions
    counts = np.bincount(cell.ravel(), minlength=H * W * A).reshape(H, W, A).astype(float)
    obs = np.bincount((cell * O + view.observations).ravel(), minlength=H * W * A * O)
    rew = np.bincount(cell.ravel(), weights=view.rewards.ravel(), minlength=H * W * A).astype(float)
    return counts, obs.reshape(H, W, A, O).astype(float), rew.reshape(H, W, A)


def estimate_player(view: PlayerView, codec: WindowCodec) -> PlayerEstimate:
    return PlayerEstimate(codec, *_count(view, codec))


def estimate_transitions(view: PlayerView, codec: WindowCodec) -> tuple:
    """Visit counts ``(H, W, A)`` and ``P_hat`` as ``(H, W, A, O)``."""
    est = estimate_player(view, codec)
    return est.counts, est.P_hat


def estimate_rewards(view: PlayerView, codec: WindowCodec) -> np.ndarray:
    """Average observed reward per ``(h, w, a)``; 0 where unvisited."""
    return estimate_player(view, codec).r_hat


def estimate_model(views: Sequence[PlayerView], codecs: Sequence[WindowCodec],
                   workers: int = 1) -> ModelEstimate:
    pairs = list(zip(views, codecs))
    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            players = tuple(pool.map(lambda p: estimate_player(*p), pairs))
    else:
        players = tuple(estimate_player(v, c) for v, c in pairs)
    return ModelEstimate(players)


# --- policy iteration -------------------------------------------------------


def backward_q(obs_prob: np.ndarray, reward: np.ndarray, policy: FiniteWindowPolicy) -> np.ndarray:
    """Q-function of ``policy`` on a window model, shape ``(H, W, A)``.

    ``obs_prob[h, w, a, o]`` gives the probability of moving to
    ``successor[w, a, o]``; rows may be all zero (unvisited).
    """
    H, W, A = reward.shape
    if obs_prob.shape[:3] != (H, W, A) or policy.table.shape != (H, W, A):
        raise ValueError(
            f"inconsistent tables: transition {obs_prob.shape}, reward {reward.shape}, "
            f"policy {policy.table.shape}"
        )
    if np.isnan(obs_prob).any() or np.isnan(reward).any():
        raise ValueError("NaN in model estimates")
    succ = policy.codec.successor
    q = np.empty_like(reward, dtype=float)
    q[H - 1] = reward[H - 1]
    for h in range(H - 2, -1, -1):
        v_next = (policy.table[h + 1] * q[h + 1]).sum(axis=1)
        q[h] = reward[h] + (obs_prob[h] * v_next[succ]).sum(axis=-1)
    if np.isnan(q).any():
        raise ValueError("NaN produced by backward iteration")
    return q


def stepsize_schedule(k: int, num_players: int, horizon: int, c: float = 1.0) -> float:
    """``min(c / sqrt(4 N^2 H^3 k), 1/2)`` for 1-based iteration ``k``."""
    if k < 1:
        raise ValueError(f"iterations are 1-based, got k={k}")
    return min(c / math.sqrt(4.0 * num_players**2 * horizon**3 * k), 0.5)


@dataclass(frozen=True, eq=False)
class IterationRecord:
    k: int
    eta: float
    q: tuple  # per player (H, W, A)
    profile: PolicyProfile  # after the update
    episodes: int
    value_estimates: tuple  # per player, Q_hat at the empty window under pi^(k)
    min_visit: int | None
    gap: object | None = None  # NashGapReport when evaluated


def run_learning(model: PomgModel, config: LearnerConfig, workers: int = 1, exact: bool = False,
                 callback: Callable[[IterationRecord], None] | None = None) -> list:
    """Run the learner for ``config.iterations`` iterations.

    With ``exact=True`` the sampled estimates are replaced by the surrogate
    game's exact kernel and marginal rewards (the idealised iteration); no
    episodes are drawn then.
    """
    from pomglab import oracle, superstate  # oracle use is diagnostic only

    require_valid(model)
    N, H = model.num_players, model.horizon
    m = config.window
    codecs = model.codecs(m)
    rng = SeededRng(config.seed)
    profile = PolicyProfile(tuple(FiniteWindowPolicy.uniform(c, H) for c in codecs))
    mdp = superstate.build_superstate(model, m) if (exact or config.eval_every) else None

    records = []
    for k in range(1, config.iterations + 1):
        eta = stepsize_schedule(k, N, H, config.step_scale)
        if exact:
            tables = [(mdp[i].obs_prob, superstate.marginal_reward(mdp, profile, i)) for i in range(N)]
            n_episodes, min_visit = 0, None
        else:
            behaviour = profile.mixed(config.eps)
            batch = sample_batch(model, behaviour, config.episodes, rng, key=(k,), workers=workers)
            est = estimate_model([batch.view(i) for i in range(N)], codecs, workers)
            tables = [(p.P_hat, p.r_hat) for p in est.players]
            n_episodes, min_visit = config.episodes, est.min_visit()

        qs = tuple(backward_q(P, r, profile[i]) for i, (P, r) in enumerate(tables))
        values = tuple(float(profile[i].table[0, 0] @ qs[i][0, 0]) for i in range(N))
        profile = PolicyProfile(tuple(
            FiniteWindowPolicy(codecs[i], soft_update_table(profile[i].table, qs[i], eta))
            for i in range(N)
        ))
        gap = None
        if config.eval_every and (k % config.eval_every == 0 or k == config.iterations):
            gap = oracle.nash_gap(model, profile, mdp)
        rec = IterationRecord(k, eta, qs, profile, n_episodes, values, min_visit, gap)
        records.append(rec)
        if callback is not None:
            callback(rec)
    return records
