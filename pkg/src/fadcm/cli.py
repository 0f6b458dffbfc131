"""Command-line front end.

Exit codes: 0 ok, 1 runtime failure, 2 configuration error. Progress goes to
stderr; stdout carries one JSON line per result.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from .experiment import (PRESET_NAMES, ConfigError, ExperimentConfig, load_config_file,
                         preset, run_cases, run_replication, write_summary)
from .optimizer import CapacityError, oracle_check
from .simulator import write_ndjson

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

# CLI flag -> (config field, type)
OVERRIDES = {
    "seed": ("seed", int),
    "horizon": ("horizon", int),
    "replications": ("replications", int),
    "g": ("g", float),
    "q": ("q", float),
    "policy": ("policy", str),
    "max_len": ("max_len", int),
    "plateau_index": ("plateau_index", int),
    "checkpoint_every": ("checkpoint_every", int),
}


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel replications")
    for flag, (_, typ) in OVERRIDES.items():
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, default=None)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="policy hyperparameter override (value parsed as JSON when possible)")
    p.add_argument("--plot", action="store_true", help="also render a regret figure (PNG)")
    p.add_argument("--dump-sessions", action="store_true",
                   help="write replication 0's sessions as newline-delimited JSON "
                        "(first line is a provenance header)")
    p.add_argument("--dump-state", action="store_true",
                   help="write replication 0's final policy state as JSON")
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fadcm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the cases of a TOML/JSON config")
    p.add_argument("--config", required=True, type=Path)
    _add_run_options(p)

    p = sub.add_parser("preset", help="run one of the built-in experiments")
    p.add_argument("name", help=f"one of {', '.join(PRESET_NAMES)}")
    _add_run_options(p)

    p = sub.add_parser("oracle-check", help="compare the optimizer with exhaustive search")
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--max-n", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt-lambda", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("bench", help="time the round loop of each policy")
    p.add_argument("--rounds", type=int, default=2000)
    p.add_argument("--preset", default="III", help="preset whose first case sets the instance")
    p.add_argument("--seed", type=int, default=None)
    return parser


def _parse_param(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError("--param", f"expected KEY=VALUE, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return key.strip(), value


def apply_overrides(configs: Sequence[ExperimentConfig], args) -> list[ExperimentConfig]:
    changes = {field: getattr(args, flag) for flag, (field, _) in OVERRIDES.items()
               if getattr(args, flag) is not None}
    params = dict(_parse_param(p) for p in args.param)
    out = []
    for cfg in configs:
        data = cfg.to_dict()
        data.update(changes)
        if params:
            data["policy_params"] = {**data["policy_params"], **params}
        out.append(ExperimentConfig.from_dict(data))
    return out


def _execute(configs: list[ExperimentConfig], args) -> int:
    progress = None if args.quiet else _log
    summaries = run_cases(configs, jobs=args.jobs, progress=progress)
    for s in summaries:
        paths = write_summary(s, args.out)
        stem = paths["csv"].stem
        provenance = {"config_hash": s.config.config_hash(), "master_seed": s.config.seed}
        if args.dump_sessions or args.dump_state:
            records = []
            series, policy = run_replication(
                s.config, 0, on_session=(lambda t, r: records.append(r)) if args.dump_sessions else None,
                return_policy=True)
            if args.dump_sessions:
                with open(args.out / f"{stem}.sessions.ndjson", "w") as fh:
                    fh.write(json.dumps(provenance) + "\n")
                    write_ndjson(records, fh)
            if args.dump_state:
                state = {**provenance, **policy.to_dict()}
                (args.out / f"{stem}.state.json").write_text(json.dumps(state) + "\n")
        print(json.dumps({"case_label": s.config.case_label, "policy": s.config.policy,
                          "final_mean_regret": s.final_mean, "csv": str(paths["csv"])}))
    if args.plot:
        from .report import plot_regret
        name = configs[0].name
        fig = plot_regret(summaries, args.out / f"{name}.png", title=name)
        print(json.dumps({"figure": str(fig)}))
    return EXIT_OK


def cmd_run(args) -> int:
    return _execute(apply_overrides(load_config_file(args.config), args), args)


def cmd_preset(args) -> int:
    try:
        configs = preset(args.name)
    except KeyError as exc:
        raise ConfigError("name", str(exc.args[0])) from exc
    return _execute(apply_overrides(configs, args), args)


def cmd_oracle_check(args) -> int:
    result = oracle_check(args.instances, args.max_n, seed=args.seed, corrupt=args.corrupt_lambda)
    print(json.dumps({"passed": result.passed, "failed": result.failed,
                      "worst_gap": result.worst_gap}))
    return EXIT_OK if result.ok else EXIT_RUNTIME


def cmd_bench(args) -> int:
    base = preset(args.preset)[0]
    if args.seed is not None:
        base = base.replace(seed=args.seed)
    for kind in ("oracle", "fadcmp", "fadcm", "ete"):
        cfg = base.replace(policy=kind, policy_params={}, horizon=args.rounds, replications=1)
        start = time.perf_counter()
        series = run_replication(cfg, 0)
        elapsed = time.perf_counter() - start
        print(json.dumps({"policy": kind, "rounds": args.rounds, "seconds": round(elapsed, 4),
                          "rounds_per_second": round(args.rounds / elapsed, 1),
                          "cum_regret": series.final}))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "preset": cmd_preset, "oracle-check": cmd_oracle_check,
            "bench": cmd_bench}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CapacityError) as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        _log(f"error: {type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
