"""Seeded generators for decoupled games with certified floors.

Every kernel row is mixed with the uniform law: transitions (and the initial
law) at weight ``mixing``, observations so that every entry is at least
``obs_floor``. The uniform transition component bounds every state's
probability below by ``mixing / |S_i|`` at every step, which is the
certified visitation floor.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from pomglab.model import PomgModel, require_valid, save_model
from pomglab.oracle import PotentialSpec
from pomglab.rng import SeededRng

KINDS = ("identical-interest", "statewise-potential", "random-decoupled")


def _sizes(value, n: int, name: str) -> tuple:
    out = (int(value),) * n if np.isscalar(value) else tuple(int(v) for v in value)
    if len(out) != n:
        raise ValueError(f"{name}: expected {n} entries, got {len(out)}")
    if min(out) < 1:
        raise ValueError(f"{name}: sizes must be >= 1, got {out}")
    return out


@dataclass(frozen=True)
class GameSpec:
    kind: str = "identical-interest"
    players: int = 2
    horizon: int = 3
    states: object = 2  # int or one entry per player
    actions: object = 2
    observations: object = 2
    mixing: float = 0.5
    obs_floor: float = 0.2
    seed: int = 0
    phi: object = field(default=None, repr=False)  # optional (H, prod S, prod A) tables

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.players < 1 or self.horizon < 1:
            raise ValueError("players and horizon must be >= 1")
        if not 0.0 <= self.mixing <= 1.0:
            raise ValueError(f"mixing must lie in [0, 1], got {self.mixing}")
        obs = self.obs_sizes
        if not self.obs_floor > 0.0:
            raise ValueError(f"obs_floor must be > 0, got {self.obs_floor}")
        for i, o in enumerate(obs):
            if self.obs_floor * o > 1.0 + 1e-12:
                raise ValueError(
                    f"player {i}: obs_floor {self.obs_floor} * {o} observations exceeds 1"
                )
        self.state_sizes, self.action_sizes  # size checks

    @property
    def state_sizes(self) -> tuple:
        return _sizes(self.states, self.players, "states")

    @property
    def action_sizes(self) -> tuple:
        return _sizes(self.actions, self.players, "actions")

    @property
    def obs_sizes(self) -> tuple:
        return _sizes(self.observations, self.players, "observations")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["phi"] is not None:
            d["phi"] = np.asarray(d["phi"]).tolist()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "GameSpec":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown game settings: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Certificate:
    kind: str
    mixing: float
    obs_floor: float
    visitation_floor: tuple  # per player, mixing / |S_i|
    seed: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["visitation_floor"] = list(self.visitation_floor)
        return d


def _mixed_rows(rng: np.random.Generator, shape: tuple, weight: float) -> np.ndarray:
    k = shape[-1]
    raw = rng.dirichlet(np.ones(k), size=shape[:-1])
    return (1.0 - weight) * raw + weight / k


def generate_game(spec: GameSpec) -> tuple:
    """``(model, potential or None, certificate)`` for ``spec``."""
    N, H = spec.players, spec.horizon
    S, A, O = spec.state_sizes, spec.action_sizes, spec.obs_sizes
    rng = SeededRng(spec.seed)
    trans, obs, init = [], [], []
    for i in range(N):
        g = rng.generator(0, i)
        trans.append(_mixed_rows(g, (H, S[i], A[i], S[i]), spec.mixing))
        init.append(_mixed_rows(g, (S[i],), spec.mixing))
        obs.append(_mixed_rows(g, (H, S[i], O[i]), spec.obs_floor * O[i]))

    shape = (H, int(np.prod(S)), int(np.prod(A)))
    g = rng.generator(1)
    phi = g.random(shape) if spec.phi is None else np.asarray(spec.phi, dtype=float)
    if phi.shape != shape:
        raise ValueError(f"supplied potential has shape {phi.shape}, expected {shape}")

    potential = None
    if spec.kind == "identical-interest":
        if phi.min() < 0 or phi.max() > 1:
            raise ValueError("identical-interest potential must lie in [0, 1]")
        rewards = [phi.copy() for _ in range(N)]
        potential = PotentialSpec(phi)
    elif spec.kind == "statewise-potential":
        rewards, phi_scaled = _statewise_rewards(phi, S, A, g)
        potential = PotentialSpec(phi_scaled)
    else:
        rewards = [g.random(shape) for _ in range(N)]

    model = PomgModel(tuple(trans), tuple(obs), tuple(rewards), tuple(init))
    require_valid(model)
    cert = Certificate(
        kind=spec.kind,
        mixing=spec.mixing,
        obs_floor=spec.obs_floor,
        visitation_floor=tuple(spec.mixing / s for s in S),
        seed=spec.seed,
    )
    return model, potential, cert


def _statewise_rewards(phi: np.ndarray, S: Sequence[int], A: Sequence[int],
                       g: np.random.Generator) -> tuple:
    """``r_i = (phi + u_i - c_i) / k_h`` with ``u_i`` free of ``(s_i, a_i)``.

    The shift ``c_i`` is per player and step, the scale ``k_h`` per step and
    shared by all players, so ``phi / k_h`` remains an exact potential.
    """
    N, H = len(S), phi.shape[0]
    full = tuple(S) + tuple(A)
    raw = []
    for i in range(N):
        dummy_shape = list(full)
        dummy_shape[i] = 1
        dummy_shape[N + i] = 1
        u = g.random((H,) + tuple(dummy_shape))
        raw.append((phi.reshape((H,) + full) + u).reshape(phi.shape))
    lo = np.stack([r.min(axis=(1, 2)) for r in raw])  # (N, H)
    scale = np.stack([r.max(axis=(1, 2)) for r in raw]) - lo
    scale = np.maximum(scale.max(axis=0), 1.0)  # (H,), never blow rewards up
    rewards = [(r - lo[i][:, None, None]) / scale[:, None, None] for i, r in enumerate(raw)]
    rewards = [np.clip(r, 0.0, 1.0) for r in rewards]  # clears round-off only
    return rewards, phi / scale[:, None, None]


def write_game(out_dir: str | Path, model: PomgModel, potential: PotentialSpec | None,
               cert: Certificate) -> dict:
    """Write ``model.json`` and the ``certificate.json`` sidecar; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.json")
    data = cert.to_dict()
    data["phi"] = None if potential is None else potential.phi.tolist()
    (out / "certificate.json").write_text(json.dumps(data) + "\n")
    return {"model": str(out / "model.json"), "certificate": str(out / "certificate.json")}


def load_certificate(path: str | Path) -> tuple:
    data = json.loads(Path(path).read_text())
    phi = data.pop("phi", None)
    data["visitation_floor"] = tuple(data["visitation_floor"])
    return Certificate(**data), None if phi is None else PotentialSpec(np.asarray(phi, dtype=float))
