"""Command line entry point: ``pomglab {generate,run,gap,verify}``.

Configs are JSON or YAML. Values in a config file override the matching
command-line flags. ``POMGLAB_THREADS`` sets the worker count for episode
sampling and per-player estimation; outputs do not depend on it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import yaml

from pomglab.model import BudgetExceeded, load_model, validate_model


def _load_config(path: str | Path) -> dict:
    text = Path(path).read_text()
    data = yaml.safe_load(text)  # YAML is a superset of JSON
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return data


def _threads() -> int:
    raw = os.environ.get("POMGLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"POMGLAB_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


# --- generate ---------------------------------------------------------------


def cmd_generate(args) -> int:
    from pomglab.games import GameSpec, generate_game, write_game

    spec = GameSpec.from_dict(_load_config(args.spec))
    model, potential, cert = generate_game(spec)
    paths = write_game(args.out, model, potential, cert)
    for name, p in paths.items():
        print(f"{name}\t{p}")
    return 0


# --- run --------------------------------------------------------------------

RUN_DEFAULTS = {
    "iterations": 5,
    "episodes": 100,
    "window": 1,
    "eps": 0.1,
    "step_scale": 1.0,
    "seed": 0,
    "eval_every": 0,
}


def _resolve_run_config(args) -> dict:
    """Flags first, then the config file on top."""
    cfg = {
        "model": args.model,
        "game": None,
        "out": args.out,
        "plot": args.plot,
        "learner": {k: v for k, v in RUN_DEFAULTS.items()},
    }
    for key in RUN_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg["learner"][key] = val
    base = Path(".")
    if args.config:
        data = _load_config(args.config)
        base = Path(args.config).resolve().parent
        unknown = set(data) - {"model", "game", "out", "plot", "learner"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg["learner"].update(data.get("learner") or {})
        for key in ("model", "game", "out", "plot"):
            if key in data:
                cfg[key] = data[key]
        # paths inside a config are relative to the config file
        for key in ("model", "out"):
            if data.get(key) is not None:
                cfg[key] = str((base / data[key]).resolve())
    if (cfg["model"] is None) == (cfg["game"] is None):
        raise ValueError("give exactly one of a model path or an inline game spec")
    if cfg["out"] is None:
        raise ValueError("no output directory (use --out or 'out' in the config)")
    return cfg


def _model_from_config(cfg: dict):
    if cfg["model"] is not None:
        path = Path(cfg["model"])
        if not path.exists():
            raise FileNotFoundError(f"model file {path} does not exist")
        model = load_model(path)
        problems = validate_model(model)
        if problems:
            raise ValueError("invalid model:\n  " + "\n  ".join(problems))
        return model
    from pomglab.games import GameSpec, generate_game

    return generate_game(GameSpec.from_dict(cfg["game"]))[0]


def cmd_run(args) -> int:
    from pomglab.learner import LearnerConfig, run_learning
    from pomglab.policy import save_profile
    from pomglab.report import metrics_csv, plot_convergence, write_manifest

    cfg = _resolve_run_config(args)
    learner = LearnerConfig.from_dict(cfg["learner"])
    model = _model_from_config(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)

    records = run_learning(model, learner, workers=_threads())
    metrics = out / "metrics.csv"
    metrics.write_text(metrics_csv(records, model.num_players))
    policy = out / "policy.json"
    save_profile(records[-1].profile, policy)

    # the manifest records what determines the outputs; the output path does not
    recorded = {k: v for k, v in cfg.items() if k not in ("out", "plot")}
    if recorded["model"] is not None:
        from pomglab.report import sha256_file

        recorded["model_sha256"] = sha256_file(recorded["model"])
    config_text = json.dumps(recorded, sort_keys=True)
    write_manifest(out / "manifest.json", learner.seed, config_text, [metrics, policy])
    if cfg["plot"]:
        plot_convergence(metrics, out / "convergence.png")
    last = records[-1]
    print(f"iterations\t{len(records)}")
    if last.gap is not None:
        print(f"final_gap_history\t{last.gap.max_gap!r}")
        print(f"final_gap_window\t{last.gap.max_window_gap!r}")
    print(f"output\t{out}")
    return 0


# --- gap --------------------------------------------------------------------


def cmd_gap(args) -> int:
    from pomglab import oracle
    from pomglab.policy import load_profile

    model = load_model(args.model)
    problems = validate_model(model)
    if problems:
        raise ValueError("invalid model:\n  " + "\n  ".join(problems))
    profile = load_profile(args.policy)
    if profile.m != args.m:
        raise ValueError(f"policy file uses m={profile.m}, --m is {args.m}")
    report = oracle.nash_gap(model, profile)
    for i, p in enumerate(report.players):
        if args.deviation_class in ("window", "both"):
            print(f"player\t{i}\twindow\tvalue={p.value_window!r}\tbest={p.best_window!r}\tgap={p.gap_window!r}")
        if args.deviation_class in ("history", "both"):
            print(f"player\t{i}\thistory\tvalue={p.value!r}\tbest={p.best_history!r}\tgap={p.gap_history!r}")
    if args.deviation_class in ("window", "both"):
        print(f"max_gap\twindow\t{report.max_window_gap!r}")
    if args.deviation_class in ("history", "both"):
        print(f"max_gap\thistory\t{report.max_gap!r}")
    return 0


# --- verify -----------------------------------------------------------------


def cmd_verify(args) -> int:
    from pomglab.verify import HEADER, parse_seeds, run_suite

    windows = None
    if args.windows:
        windows = [int(x) for x in args.windows.split(",") if x.strip()]
    kinds = tuple(k.strip() for k in args.kinds.split(",") if k.strip())
    checks = run_suite(parse_seeds(args.seeds), windows, args.inject_fault, kinds)
    print(HEADER)
    for c in checks:
        print(c.row())
    failed = [c for c in checks if not c.passed]
    print(f"# {len(checks) - len(failed)}/{len(checks)} checks passed", file=sys.stderr)
    for c in failed:
        print(f"# FAILED {c.name} (seed {c.seed}, {c.kind}, m={c.m}): "
              f"measured {c.measured:.6g} vs allowed {c.bound:.6g}", file=sys.stderr)
    return 1 if failed else 0


# --- main -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pomglab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a generated game and its certificate")
    p.add_argument("--spec", required=True, help="game spec (JSON or YAML)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="run the learner and write metrics, policy and manifest")
    p.add_argument("--config", help="experiment config (JSON or YAML); overrides flags")
    p.add_argument("--model", help="model file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--plot", action="store_true", help="also render convergence.png")
    p.add_argument("--iterations", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--step-scale", dest="step_scale", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--eval-every", dest="eval_every", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gap", help="exact Nash gap of a saved profile")
    p.add_argument("--model", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--class", dest="deviation_class", choices=("window", "history", "both"),
                   default="history")
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("verify", help="run every oracle bound on generated instances")
    p.add_argument("--seeds", default="0..9", help="inclusive range a..b")
    p.add_argument("--windows", help="comma separated window lengths (default 1..H)")
    p.add_argument("--kinds", default="identical-interest,statewise-potential")
    p.add_argument("--inject-fault", dest="inject_fault", choices=("kernel-normalization",),
                   help="negative control: break the surrogate kernel on purpose")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, BudgetExceeded, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
