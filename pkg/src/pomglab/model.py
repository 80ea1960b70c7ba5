"""Decoupled partially observable Markov games.

Only per-player factors are stored, so the joint transition, observation and
initial laws are products by construction. Rewards are dense per-player
tables over mixed-radix joint states and joint actions (player 0 most
significant), one table per step.

Step convention: at step ``h`` the state ``s_h`` emits ``o_h``, every player
acts on its window of pairs from earlier steps, rewards ``r_h(s_h, a_h)`` are
paid and the state advances with ``P_h``. The pair ``(a_h, o_h)`` joins the
window used from step ``h + 1`` on.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from pomglab.policy import PolicyProfile, WindowCodec
from pomglab.rng import SeededRng, categorical

ROW_TOL = 1e-12
ENUMERATION_BUDGET = 10**7
BLOCK_SIZE = 4096


class BudgetExceeded(RuntimeError):
    """An exact computation would enumerate more cells than allowed."""


class DimensionError(ValueError):
    pass


def check_budget(size: int, budget: int | None, what: str) -> None:
    budget = ENUMERATION_BUDGET if budget is None else budget
    if size > budget:
        raise BudgetExceeded(f"{what} needs {size} cells, budget is {budget}")


@dataclass(frozen=True, eq=False)
class PomgModel:
    """Per-player kernels plus joint reward tables.

    Arrays, per player ``i``:

    * ``transition[i]``: ``(H, S_i, A_i, S_i)``, ``P_{i,h}(s' | s, a)``
    * ``observation[i]``: ``(H, S_i, O_i)``, ``O_{i,h}(o | s)``
    * ``reward[i]``: ``(H, prod S, prod A)`` with values in ``[0, 1]``
    * ``init[i]``: ``(S_i,)``
    """

    transition: tuple
    observation: tuple
    reward: tuple
    init: tuple

    def __post_init__(self):
        for name in ("transition", "observation", "reward", "init"):
            arrs = tuple(np.array(a, dtype=float) for a in getattr(self, name))
            for a in arrs:
                a.setflags(write=False)
            object.__setattr__(self, name, arrs)
        n = len(self.transition)
        if not (len(self.observation) == len(self.reward) == len(self.init) == n) or n == 0:
            raise DimensionError("transition, observation, reward and init need one entry per player")
        if any(t.ndim != 4 for t in self.transition):
            raise DimensionError("transition tables must have shape (H, S, A, S)")
        if any(o.ndim != 3 for o in self.observation):
            raise DimensionError("observation tables must have shape (H, S, O)")

    @property
    def num_players(self) -> int:
        return len(self.transition)

    @property
    def horizon(self) -> int:
        return self.transition[0].shape[0]

    @property
    def state_sizes(self) -> tuple:
        return tuple(t.shape[1] for t in self.transition)

    @property
    def action_sizes(self) -> tuple:
        return tuple(t.shape[2] for t in self.transition)

    @property
    def obs_sizes(self) -> tuple:
        return tuple(o.shape[2] for o in self.observation)

    @property
    def joint_state_size(self) -> int:
        return math.prod(self.state_sizes)

    @property
    def joint_action_size(self) -> int:
        return math.prod(self.action_sizes)

    def reward_tensor(self, i: int, h: int) -> np.ndarray:
        """``r_{i,h}`` reshaped to ``(S_0, ..., S_{N-1}, A_0, ..., A_{N-1})``."""
        return self.reward[i][h].reshape(self.state_sizes + self.action_sizes)

    def joint_state_index(self, states: np.ndarray) -> np.ndarray:
        """Mixed-radix index from per-player states stacked on the last axis."""
        return np.ravel_multi_index(tuple(np.moveaxis(states, -1, 0)), self.state_sizes)

    def joint_action_index(self, actions: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.moveaxis(actions, -1, 0)), self.action_sizes)

    def codecs(self, m: int) -> tuple:
        return tuple(WindowCodec(a, o, m) for a, o in zip(self.action_sizes, self.obs_sizes))

    def to_dict(self) -> dict:
        return {
            "players": self.num_players,
            "horizon": self.horizon,
            "spaces": {
                "states": list(self.state_sizes),
                "actions": list(self.action_sizes),
                "observations": list(self.obs_sizes),
            },
            "transition": [t.tolist() for t in self.transition],
            "observation": [o.tolist() for o in self.observation],
            "reward": [r.tolist() for r in self.reward],
            "init": [mu.tolist() for mu in self.init],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PomgModel":
        model = cls(
            transition=tuple(np.asarray(t, dtype=float) for t in data["transition"]),
            observation=tuple(np.asarray(o, dtype=float) for o in data["observation"]),
            reward=tuple(np.asarray(r, dtype=float) for r in data["reward"]),
            init=tuple(np.asarray(mu, dtype=float) for mu in data["init"]),
        )
        declared = (data.get("players"), data.get("horizon"))
        if declared != (model.num_players, model.horizon):
            raise DimensionError(
                f"header says players/horizon {declared}, "
                f"tables give {(model.num_players, model.horizon)}"
            )
        spaces = data.get("spaces", {})
        for key, got in (("states", model.state_sizes), ("actions", model.action_sizes),
                         ("observations", model.obs_sizes)):
            if key in spaces and tuple(spaces[key]) != got:
                raise DimensionError(f"spaces.{key}={spaces[key]} but tables give {list(got)}")
        return model


def save_model(model: PomgModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()) + "\n")


def load_model(path: str | Path) -> PomgModel:
    return PomgModel.from_dict(json.loads(Path(path).read_text()))


def validate_model(model: PomgModel) -> list[str]:
    """Every problem found, as readable strings; empty iff the model is well formed."""
    problems: list[str] = []
    H = model.horizon
    S, A, O = model.state_sizes, model.action_sizes, model.obs_sizes
    for i in range(model.num_players):
        P, Ob, mu = model.transition[i], model.observation[i], model.init[i]
        if P.shape != (H, S[i], A[i], S[i]):
            problems.append(f"player {i}: transition shape {P.shape}, expected {(H, S[i], A[i], S[i])}")
        else:
            problems += _row_problems(P, f"transition[player={i}]", ("s", "a"))
        if Ob.shape != (H, S[i], O[i]):
            problems.append(f"player {i}: observation shape {Ob.shape}, expected {(H, S[i], O[i])}")
        else:
            problems += _row_problems(Ob, f"observation[player={i}]", ("s",))
        if mu.shape != (S[i],):
            problems.append(f"player {i}: init shape {mu.shape}, expected {(S[i],)}")
        else:
            if abs(mu.sum() - 1.0) > ROW_TOL or (mu < 0).any() or (mu > 1).any():
                problems.append(f"init[player={i}] is not a distribution (sum {mu.sum()!r})")
    expected = (H, model.joint_state_size, model.joint_action_size)
    for i, r in enumerate(model.reward):
        if r.shape != expected:
            problems.append(f"player {i}: reward shape {r.shape}, expected {expected}")
            continue
        if not np.isfinite(r).all():
            problems.append(f"reward[player={i}] has non-finite entries")
            continue
        for h, s, a in np.argwhere((r < 0) | (r > 1))[:10]:
            problems.append(
                f"reward[player={i}][step={h}] entry (s={s}, a={a}) = {r[h, s, a]!r} outside [0, 1]"
            )
    return problems


def _row_problems(table: np.ndarray, name: str, labels: tuple) -> list[str]:
    out = []
    sums = table.sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1.0) > ROW_TOL)
    for idx in bad[:10]:
        h, rest = idx[0], idx[1:]
        row = ", ".join(f"{k}={v}" for k, v in zip(labels, rest))
        out.append(f"{name}[step={h}] row ({row}) sums to {sums[tuple(idx)]!r}")
    neg = np.argwhere((table < 0) | (table > 1))
    for idx in neg[:10]:
        out.append(f"{name} entry {tuple(int(x) for x in idx)} = {table[tuple(idx)]!r} outside [0, 1]")
    return out


def require_valid(model: PomgModel) -> None:
    problems = validate_model(model)
    if problems:
        raise ValueError("invalid model:\n  " + "\n  ".join(problems))


def check_profile(model: PomgModel, profile: PolicyProfile) -> None:
    if len(profile) != model.num_players:
        raise DimensionError(f"profile has {len(profile)} policies for {model.num_players} players")
    if profile.horizon != model.horizon:
        raise DimensionError(f"profile horizon {profile.horizon} != model horizon {model.horizon}")
    for i, pol in enumerate(profile):
        if (pol.codec.n_actions, pol.codec.n_obs) != (model.action_sizes[i], model.obs_sizes[i]):
            raise DimensionError(
                f"player {i}: policy over {pol.codec.n_actions} actions/{pol.codec.n_obs} observations, "
                f"model has {model.action_sizes[i]}/{model.obs_sizes[i]}"
            )


# --- sampling ---------------------------------------------------------------


@dataclass(frozen=True)
class PlayerView:
    """What one player sees over a batch: arrays of shape ``(n_episodes, H)``."""

    actions: np.ndarray
    observations: np.ndarray
    rewards: np.ndarray

    def __len__(self) -> int:
        return self.actions.shape[0]


@dataclass(frozen=True)
class EpisodeBatch:
    """Sampled episodes; arrays are ``(N, n_episodes, H)``.

    ``states`` records the latent trajectory for instrumentation only; learners
    receive :class:`PlayerView` objects and never see it.
    """

    actions: np.ndarray
    observations: np.ndarray
    rewards: np.ndarray
    states: np.ndarray

    def __len__(self) -> int:
        return self.actions.shape[1]

    def view(self, i: int) -> PlayerView:
        return PlayerView(self.actions[i], self.observations[i], self.rewards[i])


@dataclass(frozen=True)
class Episode:
    """One episode: ``steps[i]`` lists ``(a, o, r)`` for player ``i`` at each step."""

    steps: tuple
    seed: int
    index: int

    def __len__(self) -> int:
        return len(self.steps[0])


def _sample_block(model: PomgModel, profile: PolicyProfile, n: int,
                  gen: np.random.Generator) -> tuple:
    N, H = model.num_players, model.horizon
    acts = np.empty((N, n, H), dtype=np.int64)
    obs = np.empty((N, n, H), dtype=np.int64)
    rews = np.empty((N, n, H))
    states = np.empty((N, n, H), dtype=np.int64)

    u0 = gen.random((N, n))
    s = np.stack([categorical(model.init[i][None, :], u0[i]) for i in range(N)])
    w = np.zeros((N, n), dtype=np.int64)
    for h in range(H):
        # three uniforms per player: observation, action, next state
        u = gen.random((3, N, n))
        states[:, :, h] = s
        for i in range(N):
            obs[i, :, h] = categorical(model.observation[i][h][s[i]], u[0, i])
            acts[i, :, h] = categorical(profile[i].table[h][w[i]], u[1, i])
        js = model.joint_state_index(states[:, :, h].T)
        ja = model.joint_action_index(acts[:, :, h].T)
        for i in range(N):
            rews[i, :, h] = model.reward[i][h][js, ja]
        s = np.stack([
            categorical(model.transition[i][h][s[i], acts[i, :, h]], u[2, i]) for i in range(N)
        ])
        w = np.stack([profile[i].codec.successor[w[i], acts[i, :, h], obs[i, :, h]] for i in range(N)])
    return acts, obs, rews, states


def sample_batch(model: PomgModel, profile: PolicyProfile, n_episodes: int, rng: SeededRng,
                 key: Sequence[int] = (), workers: int = 1,
                 block_size: int = BLOCK_SIZE) -> EpisodeBatch:
    """Sample ``n_episodes`` independent episodes.

    Episodes are cut into fixed blocks of ``block_size``; block ``b`` draws from
    stream ``(*key, b)``. The output is therefore identical for any
    ``workers`` count.
    """
    check_profile(model, profile)
    n_blocks = -(-n_episodes // block_size) if n_episodes else 0
    sizes = [min(block_size, n_episodes - b * block_size) for b in range(n_blocks)]

    def run(b: int):
        return _sample_block(model, profile, sizes[b], rng.generator(*key, b))

    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(n_blocks)))
    else:
        parts = [run(b) for b in range(n_blocks)]
    if not parts:
        N, H = model.num_players, model.horizon
        empty_i = np.empty((N, 0, H), dtype=np.int64)
        return EpisodeBatch(empty_i, empty_i.copy(), np.empty((N, 0, H)), empty_i.copy())
    return EpisodeBatch(*(np.concatenate([p[k] for p in parts], axis=1) for k in range(4)))


def sample_episode(model: PomgModel, profile: PolicyProfile, rng: SeededRng,
                   index: int = 0) -> Episode:
    """Single episode drawn from stream ``index`` of ``rng``."""
    check_profile(model, profile)
    acts, obs, rews, _ = _sample_block(model, profile, 1, rng.generator(index))
    steps = tuple(
        tuple((int(acts[i, 0, h]), int(obs[i, 0, h]), float(rews[i, 0, h])) for h in range(model.horizon))
        for i in range(model.num_players)
    )
    return Episode(steps=steps, seed=rng.seed, index=index)


# --- exact computations -----------------------------------------------------


def scatter_windows(values: np.ndarray, successor: np.ndarray, n_windows: int) -> np.ndarray:
    """Sum ``values[w, a, o, ...]`` into the successor window of ``(w, a, o)``.

    Returns an array of shape ``(n_windows, ...)``.
    """
    flat_idx = successor.reshape(-1)
    flat = values.reshape((flat_idx.size, -1))
    out = np.zeros((n_windows, flat.shape[1]))
    np.add.at(out, flat_idx, flat)
    return out.reshape((n_windows,) + values.shape[3:])


def state_window_chain(model: PomgModel, profile: PolicyProfile,
                       budget: int | None = None) -> list:
    """Exact law of ``(s_{i,h}, w_{i,h})`` under the true dynamics.

    Returns, per player, an array ``(H, S_i, n_windows)``. The joint chain over
    all players is the product of these because dynamics, observations and
    policies are all player-local.
    """
    check_profile(model, profile)
    out = []
    for i, pol in enumerate(profile):
        codec = pol.codec
        S = model.state_sizes[i]
        check_budget(S * codec.n_windows * codec.base * S, budget, f"player {i} state-window chain")
        q = np.zeros((model.horizon, S, codec.n_windows))
        q[0, :, 0] = model.init[i]
        for h in range(model.horizon - 1):
            # x[w, a, o, s'] = sum_s q[s, w] pi[w, a] O[s, o] P[s, a, s']
            x = np.einsum("sw,wa,so,sat->waot", q[h], pol.table[h],
                          model.observation[i][h], model.transition[i][h])
            q[h + 1] = scatter_windows(x, codec.successor, codec.n_windows).T
        out.append(q)
    return out


def state_action_occupancy(model: PomgModel, profile: PolicyProfile,
                           chains: list | None = None) -> list:
    """Per player ``(H, S_i, A_i)`` marginals ``P(s_{i,h}, a_{i,h})``."""
    chains = state_window_chain(model, profile) if chains is None else chains
    return [np.einsum("hsw,hwa->hsa", q, pol.table) for q, pol in zip(chains, profile)]


def state_visitation(model: PomgModel, profile: PolicyProfile,
                     budget: int | None = None) -> list:
    """Per player ``(H, S_i)``: exact ``P(s_{i,h} = s)``."""
    return [q.sum(axis=2) for q in state_window_chain(model, profile, budget)]


def _letters(n: int, start: int) -> str:
    return "".join(chr(start + k) for k in range(n))


def expected_stage(tensor: np.ndarray, occupancies: Sequence[np.ndarray]) -> float:
    """``sum_{s,a} tensor[s, a] * prod_j occ_j[s_j, a_j]`` for a product law."""
    n = len(occupancies)
    st, ac = _letters(n, ord("a")), _letters(n, ord("n"))
    spec = st + ac + "," + ",".join(st[j] + ac[j] for j in range(n)) + "->"
    return float(np.einsum(spec, tensor, *occupancies))


def contract_opponents(tensor: np.ndarray, occupancies: Sequence[np.ndarray], i: int) -> np.ndarray:
    """Average ``tensor`` over every player but ``i``; result is ``(S_i, A_i)``."""
    n = len(occupancies)
    st, ac = _letters(n, ord("a")), _letters(n, ord("n"))
    ops = [occupancies[j] for j in range(n) if j != i]
    subs = [st[j] + ac[j] for j in range(n) if j != i]
    spec = st + ac + "".join("," + s for s in subs) + "->" + st[i] + ac[i]
    return np.einsum(spec, tensor, *ops)


def values_from_occupancy(model: PomgModel, occupancies: Sequence[np.ndarray]) -> np.ndarray:
    """Per player ``sum_h E[r_{i,h}]`` for per-player occupancy arrays ``(H, S_j, A_j)``."""
    vals = np.zeros(model.num_players)
    for i in range(model.num_players):
        for h in range(model.horizon):
            vals[i] += expected_stage(model.reward_tensor(i, h), [occ[h] for occ in occupancies])
    return vals


def exact_window_policy_value(model: PomgModel, profile: PolicyProfile,
                              budget: int | None = None) -> np.ndarray:
    """Exact ``V_i(pi)`` in the POMG for a finite-window profile."""
    chains = state_window_chain(model, profile, budget)
    return values_from_occupancy(model, state_action_occupancy(model, profile, chains))
