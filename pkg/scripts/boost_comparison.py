#!/usr/bin/env python3
"""Monte Carlo error comparison: diffusion strategy versus AdaBoost.

Four agents observe 1-D mean-shifted Gaussians, train small networks, and
classify a stationary stream.  The per-step error probability of agent 0's
diffusion decision and of the centralized boosted vote are estimated over
many train+predict replications and written to montecarlo.csv.
"""

import argparse
import json
import sys

from socialml.config import validate_config
from socialml.experiments import cmd_montecarlo


def build_config(seed: int, replications: int, shift: float) -> dict:
    agents = [
        {
            "1": {"mean": [shift], "cov": [[1.0]]},
            "-1": {"mean": [-shift], "cov": [[1.0]]},
        }
        for _ in range(4)
    ]
    return {
        "seed": seed,
        "classes": [1, -1],
        "engine": "sl",
        "graph": {"ring": 4},
        "data": {"type": "gaussian", "agents": agents},
        "model": {
            "hidden": [10],
            "activation": "tanh",
            "epochs": 12,
            "batch_size": 10,
            "learning_rate": 0.05,
            "repetitions": 1,
        },
        "train_per_class": 20,
        "schedule": {"segments": [[0, 1]]},
        "stream_length": 51,
        "montecarlo": {
            "replications": replications,
            "eval_streams": 200,
            "horizon": 51,
            "observe_agent": 0,
            "strategies": ["sml", "adaboost"],
        },
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/boost_comparison")
    parser.add_argument("--seed", type=int, default=20240)
    parser.add_argument("--replications", type=int, default=200)
    parser.add_argument("--shift", type=float, default=0.35)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    cfg = validate_config(build_config(args.seed, args.replications, args.shift), ".")
    summary = cmd_montecarlo(cfg, args.out, threads=args.threads)
    print(json.dumps(summary, indent=2))
    print(f"curves in {args.out}/montecarlo.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
