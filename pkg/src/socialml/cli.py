"""Command-line entry point.

Subcommands: ``train``, ``predict``, ``montecarlo``, ``theory`` run a
config-driven experiment and write artifacts under ``--out``;
``validate-data`` checks the SHA-256 entries of a dataset manifest
(passed via ``--config``).  Exit codes: 0 success, 1 validation error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config, validate_config
from .data import DataError, verify_manifest
from .experiments import cmd_montecarlo, cmd_predict, cmd_theory, cmd_train
from .graph import GraphError
from .mlp import ModelError
from .social import SocialLearningError
from .stats import StatisticError
from .theory import TheoryError

_VALIDATION_ERRORS = (
    ConfigError,
    DataError,
    GraphError,
    ModelError,
    SocialLearningError,
    StatisticError,
    TheoryError,
)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="socialml",
        description="decentralized classification experiments over agent graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "predict", "montecarlo", "theory"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed-override", type=int, default=None)
        p.add_argument("--replications-override", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
    v = sub.add_parser("validate-data")
    v.add_argument("--config", required=True, help="dataset manifest JSON")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate-data":
            failures = verify_manifest(args.config)
            for line in failures:
                print(f"FAIL {line}", file=sys.stderr)
            if failures:
                return 1
            print("all checksums match")
            return 0

        cfg = load_config(args.config)
        if args.seed_override is not None or args.replications_override is not None:
            raw = dict(cfg.raw)
            if args.seed_override is not None:
                raw["seed"] = args.seed_override
            if args.replications_override is not None:
                mc = dict(raw.get("montecarlo", {}))
                mc["replications"] = args.replications_override
                raw["montecarlo"] = mc
            cfg = validate_config(raw, cfg.base_dir)

        if args.command == "train":
            result = cmd_train(cfg, args.out)
            print(f"trained {result['models']} agents, {result['trace_rows']} trace rows")
        elif args.command == "predict":
            result = cmd_predict(cfg, args.out)
            print(f"prediction run over {len(result['cycles'])} cycles written")
        elif args.command == "montecarlo":
            result = cmd_montecarlo(cfg, args.out, threads=args.threads)
            print(
                f"{result['replications']} replications done, final errors: "
                f"{result['final_error']}"
            )
        elif args.command == "theory":
            result = cmd_theory(cfg, args.out)
            flag = " (vacuous)" if result["vacuous"] else ""
            print(
                f"exponent={result['exponent_exact']:.6f} "
                f"bound={result['pc_lower_bound']:.6f}{flag} "
                f"sample_complexity={result['sample_complexity']}"
            )
    except _VALIDATION_ERRORS as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
