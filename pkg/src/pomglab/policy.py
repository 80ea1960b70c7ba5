"""History windows, the finite-window policy class and its update primitives.

A window is a tuple of ``(action, observation)`` pairs, oldest first, of
length at most ``m``. Windows are indexed by :class:`WindowCodec`: windows of
length ``l`` occupy the contiguous block ``[offset(l), offset(l + 1))`` and
inside a block the index is mixed-radix with the oldest pair most
significant and pair code ``a * |O| + o``.

Steps are 0-based throughout: at step ``h`` a player's window holds the pairs
from steps ``h - min(h, m) .. h - 1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

Window = tuple  # tuple[tuple[int, int], ...]

ROW_TOL = 1e-12


class WindowCodec:
    """Bijection between windows of length ``<= m`` and ``range(n_windows)``."""

    def __init__(self, n_actions: int, n_obs: int, m: int):
        if n_actions < 1 or n_obs < 1:
            raise ValueError("action and observation spaces must be non-empty")
        if m < 0:
            raise ValueError(f"window length must be >= 0, got {m}")
        self.n_actions = int(n_actions)
        self.n_obs = int(n_obs)
        self.m = int(m)
        self.base = self.n_actions * self.n_obs
        self.offsets = np.array([self._offset(l) for l in range(self.m + 2)], dtype=np.int64)
        self.n_windows = int(self.offsets[-1])

        lengths = np.zeros(self.n_windows, dtype=np.int64)
        for l in range(self.m + 1):
            lengths[self.offsets[l]:self.offsets[l + 1]] = l
        self.lengths = lengths
        self.successor = self._successor_table()

    def _offset(self, length: int) -> int:
        return sum(self.base ** j for j in range(length))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, WindowCodec)
            and (self.n_actions, self.n_obs, self.m) == (other.n_actions, other.n_obs, other.m)
        )

    def __hash__(self) -> int:
        return hash((self.n_actions, self.n_obs, self.m))

    def __repr__(self) -> str:
        return f"WindowCodec(n_actions={self.n_actions}, n_obs={self.n_obs}, m={self.m})"

    def pair_code(self, a: int, o: int) -> int:
        return a * self.n_obs + o

    def encode(self, window: Sequence[tuple[int, int]]) -> int:
        if len(window) > self.m:
            raise ValueError(f"window of length {len(window)} exceeds m={self.m}")
        local = 0
        for a, o in window:
            if not (0 <= a < self.n_actions and 0 <= o < self.n_obs):
                raise ValueError(f"pair ({a}, {o}) outside {self.n_actions}x{self.n_obs}")
            local = local * self.base + self.pair_code(a, o)
        return int(self.offsets[len(window)]) + local

    def decode(self, index: int) -> Window:
        if not 0 <= index < self.n_windows:
            raise ValueError(f"window index {index} outside [0, {self.n_windows})")
        length = int(self.lengths[index])
        local = index - int(self.offsets[length])
        codes = []
        for _ in range(length):
            local, c = divmod(local, self.base)
            codes.append(c)
        return tuple(divmod(c, self.n_obs) for c in reversed(codes))

    def block(self, length: int) -> range:
        """Indices of all windows of the given length."""
        return range(int(self.offsets[length]), int(self.offsets[length + 1]))

    def step_length(self, h: int) -> int:
        return min(h, self.m)

    def step_block(self, h: int) -> range:
        """Indices of the windows a player can hold at (0-based) step ``h``."""
        return self.block(self.step_length(h))

    def digits(self, length: int) -> np.ndarray:
        """Pair codes of every window of ``length``, shape ``(base**length, length)``."""
        n = self.base ** length
        local = np.arange(n, dtype=np.int64)
        out = np.empty((n, length), dtype=np.int64)
        for k in range(length - 1, -1, -1):
            out[:, k] = local % self.base
            local //= self.base
        return out

    def _successor_table(self) -> np.ndarray:
        succ = np.zeros((self.n_windows, self.n_actions, self.n_obs), dtype=np.int64)
        if self.m == 0:
            return succ
        codes = np.arange(self.base).reshape(self.n_actions, self.n_obs)
        for l in range(self.m + 1):
            idx = np.arange(self.offsets[l], self.offsets[l + 1])
            local = idx - self.offsets[l]
            if l < self.m:
                new_local = local[:, None, None] * self.base + codes[None]
                succ[idx] = self.offsets[l + 1] + new_local
            else:
                keep = local % (self.base ** (self.m - 1))
                succ[idx] = self.offsets[self.m] + keep[:, None, None] * self.base + codes[None]
        return succ

    def truncate(self, window: Sequence[tuple[int, int]]) -> Window:
        window = tuple(window)
        return window[len(window) - min(len(window), self.m):]

    def iter_windows(self) -> Iterator[Window]:
        for idx in range(self.n_windows):
            yield self.decode(idx)


def suffix_map(full: WindowCodec, window: WindowCodec) -> np.ndarray:
    """Map every index of ``full`` to the index of its last ``window.m`` pairs."""
    if (full.n_actions, full.n_obs) != (window.n_actions, window.n_obs):
        raise ValueError("codecs disagree on the action/observation alphabet")
    out = np.empty(full.n_windows, dtype=np.int64)
    for l in range(full.m + 1):
        idx = np.arange(full.offsets[l], full.offsets[l + 1])
        keep = min(l, window.m)
        local = (idx - full.offsets[l]) % (full.base ** keep)
        out[idx] = window.offsets[keep] + local
    return out


@dataclass(frozen=True, eq=False)
class FiniteWindowPolicy:
    """Per-step tables ``table[h, w, a] = pi_h(a | w)`` over every codec index.

    Rows for windows that cannot occur at step ``h`` are stored too; they are
    kept valid distributions and are simply never consulted.
    """

    codec: WindowCodec
    table: np.ndarray  # (H, n_windows, n_actions)

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 3 or t.shape[1:] != (self.codec.n_windows, self.codec.n_actions):
            raise ValueError(
                f"policy table shape {t.shape} does not match codec "
                f"(H, {self.codec.n_windows}, {self.codec.n_actions})"
            )
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def horizon(self) -> int:
        return self.table.shape[0]

    @property
    def m(self) -> int:
        return self.codec.m

    @property
    def n_actions(self) -> int:
        return self.codec.n_actions

    @classmethod
    def uniform(cls, codec: WindowCodec, horizon: int) -> "FiniteWindowPolicy":
        t = np.full((horizon, codec.n_windows, codec.n_actions), 1.0 / codec.n_actions)
        return cls(codec, t)

    @classmethod
    def random(cls, codec: WindowCodec, horizon: int, rng: np.random.Generator,
               concentration: float = 1.0) -> "FiniteWindowPolicy":
        alpha = np.full(codec.n_actions, concentration)
        t = rng.dirichlet(alpha, size=(horizon, codec.n_windows))
        return cls(codec, t / t.sum(axis=-1, keepdims=True))

    @classmethod
    def deterministic(cls, codec: WindowCodec, actions: np.ndarray) -> "FiniteWindowPolicy":
        actions = np.asarray(actions, dtype=np.int64)
        t = np.zeros(actions.shape + (codec.n_actions,))
        np.put_along_axis(t, actions[..., None], 1.0, axis=-1)
        return cls(codec, t)

    def row(self, h: int, window: Sequence[tuple[int, int]]) -> np.ndarray:
        return self.table[h, self.codec.encode(window)]

    def violations(self) -> list[str]:
        out = []
        sums = self.table.sum(axis=-1)
        bad = np.argwhere(np.abs(sums - 1.0) > ROW_TOL)
        for h, w in bad[:10]:
            out.append(f"step {h} window {w}: row sums to {sums[h, w]!r}")
        if (self.table < 0).any() or (self.table > 1).any():
            out.append("entries outside [0, 1]")
        return out

    def to_dict(self) -> dict:
        return {"steps": self.table.tolist()}


@dataclass(frozen=True, eq=False)
class PolicyProfile:
    """One finite-window policy per player, all with the same ``m``."""

    policies: tuple

    def __post_init__(self):
        pols = tuple(self.policies)
        if not pols:
            raise ValueError("profile needs at least one policy")
        ms = {p.m for p in pols}
        hs = {p.horizon for p in pols}
        if len(ms) != 1 or len(hs) != 1:
            raise ValueError(f"inconsistent profile: window lengths {ms}, horizons {hs}")
        object.__setattr__(self, "policies", pols)

    def __len__(self) -> int:
        return len(self.policies)

    def __getitem__(self, i: int) -> FiniteWindowPolicy:
        return self.policies[i]

    def __iter__(self):
        return iter(self.policies)

    @property
    def m(self) -> int:
        return self.policies[0].m

    @property
    def horizon(self) -> int:
        return self.policies[0].horizon

    def replace(self, i: int, policy: FiniteWindowPolicy) -> "PolicyProfile":
        pols = list(self.policies)
        pols[i] = policy
        return PolicyProfile(tuple(pols))

    def mixed(self, eps: float) -> "PolicyProfile":
        return PolicyProfile(tuple(mix_exploration(p, eps) for p in self.policies))

    @classmethod
    def uniform(cls, action_sizes: Sequence[int], obs_sizes: Sequence[int], m: int,
                horizon: int) -> "PolicyProfile":
        return cls(tuple(
            FiniteWindowPolicy.uniform(WindowCodec(a, o, m), horizon)
            for a, o in zip(action_sizes, obs_sizes)
        ))

    @classmethod
    def random(cls, action_sizes: Sequence[int], obs_sizes: Sequence[int], m: int,
               horizon: int, rng: np.random.Generator) -> "PolicyProfile":
        return cls(tuple(
            FiniteWindowPolicy.random(WindowCodec(a, o, m), horizon, rng)
            for a, o in zip(action_sizes, obs_sizes)
        ))

    def to_dict(self) -> dict:
        return {
            "window": self.m,
            "horizon": self.horizon,
            "players": [
                {"actions": p.codec.n_actions, "observations": p.codec.n_obs, **p.to_dict()}
                for p in self.policies
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyProfile":
        m = int(data["window"])
        pols = []
        for entry in data["players"]:
            codec = WindowCodec(int(entry["actions"]), int(entry["observations"]), m)
            pols.append(FiniteWindowPolicy(codec, np.asarray(entry["steps"], dtype=float)))
        return cls(tuple(pols))


def save_profile(profile: PolicyProfile, path: str | Path) -> None:
    Path(path).write_text(json.dumps(profile.to_dict(), indent=1) + "\n")


def load_profile(path: str | Path) -> PolicyProfile:
    return PolicyProfile.from_dict(json.loads(Path(path).read_text()))


def mix_exploration(policy: FiniteWindowPolicy, eps: float) -> FiniteWindowPolicy:
    """Every row becomes ``eps / |A| + (1 - eps) * row``."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"exploration rate must lie in [0, 1], got {eps}")
    t = eps / policy.n_actions + (1.0 - eps) * policy.table
    return FiniteWindowPolicy(policy.codec, t)


def soft_update(policy_row: np.ndarray, q_row: np.ndarray, eta: float) -> np.ndarray:
    """Move ``eta`` of the mass onto the greedy action (lowest index on ties)."""
    q_row = np.asarray(q_row, dtype=float)
    policy_row = np.asarray(policy_row, dtype=float)
    _check_step(eta)
    if np.isnan(q_row).any():
        raise ValueError("q_row contains NaN")
    out = (1.0 - eta) * policy_row
    out[int(np.argmax(q_row))] += eta
    return out


def soft_update_table(table: np.ndarray, q: np.ndarray, eta: float) -> np.ndarray:
    """Row-wise :func:`soft_update` over arrays of shape ``(..., n_actions)``."""
    _check_step(eta)
    if np.isnan(q).any():
        raise ValueError("Q table contains NaN")
    greedy = np.zeros_like(table)
    np.put_along_axis(greedy, np.argmax(q, axis=-1)[..., None], 1.0, axis=-1)
    return (1.0 - eta) * table + eta * greedy


def _check_step(eta: float) -> None:
    if not 0.0 < eta < 1.0:
        raise ValueError(f"step size must lie in (0, 1), got {eta}")
