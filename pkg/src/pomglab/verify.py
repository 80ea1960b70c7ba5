"""The verification suite: every oracle bound on generated instances.

Each check yields a :class:`Check` row (name, bound, measured, pass). For
step-dependent bounds the row reports the step with the least slack.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from pomglab import oracle
from pomglab.games import GameSpec, generate_game
from pomglab.model import exact_window_policy_value
from pomglab.policy import FiniteWindowPolicy, PolicyProfile
from pomglab.rng import SeededRng
from pomglab.superstate import build_superstate, surrogate_values

FAULTS = ("kernel-normalization",)
TOL = 1e-9


@dataclass(frozen=True)
class Check:
    seed: int
    kind: str
    m: int
    name: str
    bound: float
    measured: float
    at_least: bool = False  # bound is a floor rather than a ceiling

    @property
    def passed(self) -> bool:
        if self.at_least:
            return bool(self.measured >= self.bound - TOL)
        return bool(self.measured <= self.bound + TOL)

    def row(self) -> str:
        return "\t".join([str(self.seed), self.kind, str(self.m), self.name,
                          f"{self.bound:.6g}", f"{self.measured:.6g}",
                          "pass" if self.passed else "FAIL"])


HEADER = "\t".join(["seed", "kind", "m", "check", "bound", "measured", "result"])


def _stepwise(seed, kind, m, name, measured: np.ndarray, bound: np.ndarray) -> Check:
    excess = measured - bound
    if excess.max() > TOL or not (bound > 0).any():
        j = int(np.argmax(excess))
    else:
        # nothing fails: show the step using the largest share of its bound
        j = int(np.argmax(np.where(bound > 0, measured / np.where(bound > 0, bound, 1.0), -np.inf)))
    return Check(seed, kind, m, name, float(bound[j]), float(measured[j]))


def check_instance(seed: int, kind: str, windows: Sequence[int] | None = None,
                   fault: str | None = None, n_profiles: int = 8, n_deviations: int = 20,
                   horizon: int = 3) -> list[Check]:
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; choose from {FAULTS}")
    model, potential, _ = generate_game(GameSpec(kind=kind, horizon=horizon, seed=seed))
    H, N = model.horizon, model.num_players
    windows = list(range(1, H + 1)) if windows is None else list(windows)
    stab = oracle.measure_filter_stability(model)
    rho = stab.rho
    gen = SeededRng(seed).generator(7)
    out = [
        Check(seed, kind, 0, "stability_floor", bound=oracle.dobrushin_floor(model),
              measured=rho, at_least=True),
    ]
    if potential is not None:
        out.append(Check(seed, kind, 0, "statewise_potential", 1e-10,
                         oracle.verify_statewise_potential(model, potential).max_violation))
    identity = max(abs(np.subtract(*oracle.pairwise_identity(*_random_pqx(gen)))) for _ in range(200))
    out.append(Check(seed, kind, 0, "pairwise_identity", 1e-12, identity))

    full = build_superstate(model, H)
    for m in windows:
        mdp = build_superstate(model, m, normalize=fault != "kernel-normalization")
        eps = stab.epsilon(m, H)
        profiles = [PolicyProfile.random(model.action_sizes, model.obs_sizes, m, H, gen)
                    for _ in range(n_profiles)]

        value_err = 0.0
        br_err = 0.0
        transfer = -np.inf
        for prof in profiles:
            v = exact_window_policy_value(model, prof)
            vm = surrogate_values(mdp, prof)
            value_err = max(value_err, float(np.abs(v - vm).max()))
            rep = oracle.nash_gap(model, prof, mdp)
            for p in rep.players:
                br_err = max(br_err, abs(p.best_window - p.best_history))
            transfer = max(transfer, rep.max_gap - rep.max_window_gap - 2 * eps)
        out.append(Check(seed, kind, m, "value_approximation", eps, value_err))
        out.append(Check(seed, kind, m, "best_response_approximation", eps, br_err))
        out.append(Check(seed, kind, m, "equilibrium_transfer", 0.0, transfer))

        bias = oracle.bias_audit(model, mdp, profiles[0], full=full)
        lb = bias.lemma_bound(rho)
        out.append(_stepwise(seed, kind, m, "belief_suffix", bias.belief_suffix, bias.belief_bound(rho)))
        out.append(_stepwise(seed, kind, m, "reward_bias", bias.reward_joint, lb))
        out.append(_stepwise(seed, kind, m, "kernel_bias", bias.kernel_player, lb))
        out.append(_stepwise(seed, kind, m, "blended_kernel_bias", bias.kernel_blended, lb))
        out.append(_stepwise(seed, kind, m, "blended_reward_bias", bias.reward_blended, lb))
        out.append(_stepwise(seed, kind, m, "marginal_reward_bias", bias.reward_marginal,
                             bias.marginal_bound(rho, N)))

        if potential is not None:
            devs = []
            for _ in range(n_deviations):
                prof = profiles[int(gen.integers(len(profiles)))]
                i = int(gen.integers(N))
                alt = FiniteWindowPolicy.random(prof[i].codec, H, gen)
                devs.append((prof, i, alt))
            audit = oracle.near_potential_audit(model, mdp, potential, devs, rho)
            out.append(Check(seed, kind, m, "near_potential", audit.bound, audit.max_diff))
            out.append(Check(seed, kind, m, "exact_potential", 1e-10, audit.max_true_diff))
    return out


def _random_pqx(gen: np.random.Generator) -> tuple:
    n = int(gen.integers(1, 9))
    return gen.dirichlet(np.ones(n)), gen.dirichlet(np.ones(n)), gen.normal(size=n)


def run_suite(seeds: Iterable[int], windows: Sequence[int] | None = None,
              fault: str | None = None,
              kinds: Sequence[str] = ("identical-interest", "statewise-potential")) -> list[Check]:
    checks = []
    for seed in seeds:
        for kind in kinds:
            checks += check_instance(seed, kind, windows, fault)
    return checks


def parse_seeds(text: str) -> range:
    """``"a..b"`` (inclusive) or a single integer."""
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
    else:
        lo = hi = int(text)
    if hi < lo:
        raise ValueError(f"empty seed range {text!r}")
    return range(lo, hi + 1)
