"""Experiment runners behind the CLI subcommands.

Every command reads a validated configuration, derives all randomness from
the master seed through fixed phase paths, and writes tidy artifacts under
one output directory: CSVs carry a ``# config=... seed=...`` header line,
JSON artifacts carry the same fields under ``meta``, and ``manifest.json``
indexes everything.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import data as data_mod
from .boosting import adaboost_train, sign_decision
from .config import (
    PHASE_BOOST_MODEL,
    PHASE_STREAM,
    PHASE_TRAIN_DATA,
    PHASE_TRAIN_MODEL,
    ConfigError,
    ExperimentConfig,
    build_gaussian_spec,
    derived_seed,
    image_layout,
    validate_config,
)
from .mlp import LabeledDataset, binary_logit, save_model, train_erm, with_seed
from .social import RegimeSchedule, periodic_schedule, run_prediction
from .stats import make_debiased_statistic
from .theory import (
    BoundInputs,
    TrainingProfile,
    approx_exponent,
    exact_exponent,
    network_complexity_bound,
    pc_lower_bound,
    sample_complexity,
    self_consistency_check,
)
from .graph import perron_eigenvector


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _header(cfg: ExperimentConfig) -> str:
    return f"# config={cfg.digest[:16]} seed={cfg.seed}\n"


def _write_csv(path, cfg, columns, rows) -> None:
    with open(path, "w") as fh:
        fh.write(_header(cfg))
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path, cfg, payload, command: str) -> None:
    payload = {
        "meta": {"config_sha256": cfg.digest, "seed": cfg.seed, "command": command},
        **payload,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out_dir, cfg, command, artifacts) -> None:
    path = os.path.join(out_dir, "manifest.json")
    payload = {
        "meta": {"config_sha256": cfg.digest, "seed": cfg.seed, "command": command},
        "artifacts": sorted(artifacts),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_schedule(cfg: ExperimentConfig, length: int) -> RegimeSchedule:
    spec = cfg.schedule_spec
    if "period" in spec:
        states = spec.get("states", list(cfg.classes))
        for s in states:
            if s not in cfg.classes:
                raise ConfigError(f"schedule state {s!r} not in classes")
        return periodic_schedule(int(spec["period"]), states, length)
    segments = spec.get("segments")
    if not segments:
        raise ConfigError("schedule needs 'period' or 'segments'")
    for _, state in segments:
        if state not in cfg.classes:
            raise ConfigError(f"schedule state {state!r} not in classes")
    return RegimeSchedule(tuple((int(s), g) for s, g in segments))


# --- data assembly ---------------------------------------------------------


_POOL_CACHE: dict = {}


def _image_pools(cfg: ExperimentConfig) -> dict:
    """label -> image array (uint-valued), read from the dataset manifest.

    Cached per manifest/classes/label-map so replications and streams do not
    re-read the files.
    """
    manifest_rel = cfg.data_spec["manifest"]
    manifest_path = (
        manifest_rel
        if os.path.isabs(manifest_rel)
        else os.path.join(cfg.base_dir, manifest_rel)
    )
    cache_key = (
        os.path.abspath(manifest_path),
        os.path.getmtime(manifest_path),
        cfg.classes,
        tuple(sorted(cfg.data_spec.get("label_map", {}).items())),
        int(cfg.data_spec["height"]),
        int(cfg.data_spec["width"]),
    )
    if cache_key in _POOL_CACHE:
        return _POOL_CACHE[cache_key]
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    base = os.path.dirname(os.path.abspath(manifest_path))

    def _resolve(name):
        path = manifest["files"][name]["path"]
        return path if os.path.isabs(path) else os.path.join(base, path)

    height, width = int(cfg.data_spec["height"]), int(cfg.data_spec["width"])
    if manifest.get("format") == "idx":
        images = data_mod.read_idx_images(_resolve("images"))
        labels = data_mod.read_idx_labels(_resolve("labels"))
    elif manifest.get("format") == "csv":
        images, labels = data_mod.read_label_pixel_csv(_resolve("data"), height, width)
    else:
        raise ConfigError(f"unknown dataset format {manifest.get('format')!r}")
    if images.shape[1:] != (height, width):
        raise ConfigError(f"images {images.shape[1:]} vs config {(height, width)}")
    # optional class -> raw-label map, e.g. {"1": 0, "-1": 1} for digit pairs
    label_map = cfg.data_spec.get("label_map", {})
    pools = {}
    for label in cfg.classes:
        raw = label_map.get(str(label), label)
        mask = labels == raw
        if not np.any(mask):
            raise ConfigError(f"class {label!r} (raw label {raw!r}) absent from the dataset")
        pools[label] = images[mask]
    _POOL_CACHE[cache_key] = pools
    return pools


def shared_scene_training(cfg: ExperimentConfig, rep: int) -> tuple:
    """Balanced training scenes shared by all agents: (views, labels).

    Labels are common to the network (all agents observe the same scenes);
    each agent's view is its own draw (gaussian) or patch (images).
    """
    per_class = cfg.train_per_class
    if per_class < 1:
        raise ConfigError("training needs train_per_class >= 1")
    seed = derived_seed(cfg.seed, PHASE_TRAIN_DATA, rep)
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.array(cfg.classes, dtype=object), per_class)
    labels = labels[rng.permutation(labels.size)]
    if cfg.data_spec["type"] == "gaussian":
        spec = build_gaussian_spec(cfg.data_spec, cfg.classes)
        views = []
        for k in range(cfg.n_agents):
            view = np.empty((labels.size, spec.dimension(k)))
            for label in cfg.classes:
                idx = np.flatnonzero(labels == label)
                view[idx] = spec.models[k][label].sample(rng, idx.size)
            views.append(view)
        return views, labels
    pools = _image_pools(cfg)
    layout = image_layout(cfg.data_spec)
    picks = np.empty((labels.size, layout.height, layout.width))
    for label in cfg.classes:
        idx = np.flatnonzero(labels == label)
        pool = pools[label]
        if pool.shape[0] < per_class:
            raise ConfigError(f"class {label!r}: {pool.shape[0]} images < {per_class}")
        chosen = rng.choice(pool.shape[0], size=idx.size, replace=False)
        picks[idx] = data_mod.scale_pixels(pool[chosen])
    return data_mod.split_patches(picks, layout), labels


def _stream_source(cfg: ExperimentConfig):
    """Build the stream source once: (gaussian spec, None) or (pools, layout)."""
    if cfg.data_spec["type"] == "gaussian":
        return build_gaussian_spec(cfg.data_spec, cfg.classes), None
    return _image_pools(cfg), image_layout(cfg.data_spec)


def _stream_views(cfg, source, layout, schedule, horizon: int, rep: int, stream: int):
    seed = derived_seed(cfg.seed, PHASE_STREAM, rep, stream)
    return data_mod.prediction_stream(source, schedule, horizon, seed, layout)


def train_agents(cfg: ExperimentConfig, rep: int, views, labels):
    """Per-agent empirical risk minimization; returns (results, statistics)."""
    results = []
    statistics = []
    for k in range(cfg.n_agents):
        dataset = LabeledDataset(views[k], labels, cfg.classes)
        seed = derived_seed(cfg.seed, PHASE_TRAIN_MODEL, rep, k)
        result = train_erm(dataset, cfg.arch_by_agent[k], with_seed(cfg.hyper, seed))
        results.append(result)
        statistics.append(make_debiased_statistic(result.model, dataset, agent=k))
    return results, statistics


# --- commands ---------------------------------------------------------------


def cmd_train(cfg: ExperimentConfig, out_dir: str) -> dict:
    """Train every agent (repeatedly) and record the risk traces."""
    os.makedirs(out_dir, exist_ok=True)
    model_dir = os.path.join(out_dir, "models")
    os.makedirs(model_dir, exist_ok=True)
    views, labels = shared_scene_training(cfg, rep=0)
    rows = []
    artifacts = ["risk_trace.csv", "manifest.json"]
    for rep in range(cfg.repetitions):
        results, _ = train_agents(cfg, rep, views, labels)
        for k, result in enumerate(results):
            if rep == 0:
                name = f"models/agent_{k}.json"
                save_model(result.model, os.path.join(out_dir, name))
                artifacts.append(name)
            for epoch, risk in enumerate(result.risk_trace):
                rows.append((k, rep, epoch, float(risk)))
    _write_csv(
        os.path.join(out_dir, "risk_trace.csv"),
        cfg,
        ("agent", "repetition", "epoch", "empirical_risk"),
        rows,
    )
    _write_manifest(out_dir, cfg, "train", artifacts)
    return {"models": cfg.n_agents, "trace_rows": len(rows)}


def _segment_bounds(schedule: RegimeSchedule, horizon: int):
    starts = [s for s, _ in schedule.segments if s < horizon]
    ends = starts[1:] + [horizon]
    states = [g for s, g in schedule.segments if s < horizon]
    return list(zip(starts, ends, states))


def cmd_predict(cfg: ExperimentConfig, out_dir: str) -> dict:
    """Train once, run one prediction stream, write trajectory and summary."""
    if cfg.stream_length < 1:
        raise ConfigError("prediction needs stream_length >= 1")
    os.makedirs(out_dir, exist_ok=True)
    views, labels = shared_scene_training(cfg, rep=0)
    _, statistics = train_agents(cfg, 0, views, labels)
    schedule = build_schedule(cfg, cfg.stream_length)
    source, layout = _stream_source(cfg)
    stream = _stream_views(cfg, source, layout, schedule, cfg.stream_length, rep=0, stream=0)
    run = run_prediction(
        cfg.engine,
        cfg.matrix,
        statistics,
        stream.features_per_agent,
        stream.true_states,
        cfg.classes,
        delta=cfg.delta,
    )

    rows = []
    binary = len(cfg.classes) == 2
    for i in range(run.horizon):
        for k in range(cfg.n_agents):
            lam_components = (
                [(str(cfg.classes[1]), run.lam[i, k])]
                if binary
                else [(str(g), run.lam[i, k, j]) for j, g in enumerate(cfg.classes[1:])]
            )
            for gamma, lam in lam_components:
                rows.append(
                    (
                        0,
                        i,
                        k,
                        gamma,
                        float(lam),
                        run.decisions[i, k],
                        run.true_states[i],
                        int(run.correct[i, k]),
                    )
                )
    _write_csv(
        os.path.join(out_dir, "trajectory.csv"),
        cfg,
        (
            "run_id",
            "i",
            "agent",
            "gamma_or_binary",
            "lambda",
            "decision",
            "true_state",
            "correct",
        ),
        rows,
    )

    cycles = []
    for start, end, state in _segment_bounds(schedule, run.horizon):
        window = run.correct[start:end]
        accuracy = window.mean(axis=0)
        adaptation = []
        for k in range(cfg.n_agents):
            ok = window[:, k]
            wrong = np.flatnonzero(~ok)
            adaptation.append(int(wrong[-1] + 1) if wrong.size else 0)
        cycles.append(
            {
                "start": start,
                "end": end,
                "state": str(state),
                "accuracy_per_agent": accuracy.tolist(),
                "adaptation_steps_per_agent": adaptation,
            }
        )
    summary = {"engine": cfg.engine, "delta": cfg.delta, "cycles": cycles}
    _write_json(os.path.join(out_dir, "summary.json"), cfg, summary, "predict")
    _write_manifest(out_dir, cfg, "predict", ["trajectory.csv", "summary.json", "manifest.json"])
    return summary


def montecarlo_replication(cfg: ExperimentConfig, rep: int) -> dict:
    """One train+evaluate replication; per-step error per strategy.

    The per-step error probability is estimated by averaging the decision
    errors over ``eval_streams`` independent prediction streams run through
    the models trained in this replication.
    """
    mc = cfg.montecarlo
    horizon = int(mc["horizon"])
    n_streams = int(mc["eval_streams"])
    observe = int(mc["observe_agent"])
    strategies = list(mc["strategies"])
    if set(cfg.classes) != {-1, +1}:
        raise ConfigError("the Monte Carlo comparison needs classes {-1, +1}")

    views, labels = shared_scene_training(cfg, rep)
    schedule = build_schedule(cfg, horizon)

    stats = ensemble = None
    if "sml" in strategies:
        _, stats = train_agents(cfg, rep, views, labels)
    if "adaboost" in strategies:
        seeds = [derived_seed(cfg.seed, PHASE_BOOST_MODEL, rep, k) for k in range(cfg.n_agents)]
        ensemble = adaboost_train(
            views, labels, list(cfg.arch_by_agent), cfg.hyper, seeds=seeds
        )

    source, layout = _stream_source(cfg)
    streams = [
        _stream_views(cfg, source, layout, schedule, horizon, rep, s)
        for s in range(n_streams)
    ]
    states = streams[0].true_states
    truth = np.array([1.0 if g == +1 else -1.0 for g in states])

    # stack stream features per agent: (S, T, d_k)
    stacked = [
        np.stack([st.features_per_agent[k] for st in streams]) for k in range(cfg.n_agents)
    ]

    out = {}
    if stats is not None:
        stat_tracks = []
        for k in range(cfg.n_agents):
            flat = stacked[k].reshape(n_streams * horizon, -1)
            stat_tracks.append(stats[k].scalar(flat).reshape(n_streams, horizon))
        lam = np.zeros((n_streams, cfg.n_agents))
        a = cfg.matrix.weights
        keep = 1.0 if cfg.engine == "sl" else 1.0 - cfg.delta
        err = np.empty(horizon)
        for t in range(horizon):
            c_t = np.stack([track[:, t] for track in stat_tracks], axis=1)
            lam = (keep * lam + c_t) @ a
            decisions = np.where(lam[:, observe] >= 0.0, 1.0, -1.0)
            err[t] = np.mean(decisions != truth[t])
        out["sml"] = err
    if ensemble is not None:
        total = np.zeros((n_streams, horizon))
        for k in range(cfg.n_agents):
            flat = stacked[k].reshape(n_streams * horizon, -1)
            logits = binary_logit(ensemble.models[k], flat).reshape(n_streams, horizon)
            total += ensemble.votes[k] * sign_decision(logits)
        decisions = sign_decision(total)
        out["adaboost"] = np.mean(decisions != truth[None, :], axis=0)
    return out


def _mc_worker(args):
    raw, base_dir, rep = args
    cfg = validate_config(raw, base_dir)
    return montecarlo_replication(cfg, rep)


def cmd_montecarlo(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> dict:
    """Replicate train+predict, write per-step error rates per strategy."""
    os.makedirs(out_dir, exist_ok=True)
    mc = cfg.montecarlo
    reps = int(mc["replications"])
    strategies = sorted(mc["strategies"])

    if threads > 1 and reps > 1:
        jobs = [(cfg.raw, cfg.base_dir, rep) for rep in range(reps)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_mc_worker, jobs))
    else:
        results = [montecarlo_replication(cfg, rep) for rep in range(reps)]

    horizon = int(mc["horizon"])
    rows = []
    curves = {}
    for strategy in strategies:
        table = np.stack([res[strategy] for res in results])  # (R, T)
        rate = table.mean(axis=0)
        stderr = (
            table.std(axis=0, ddof=1) / math.sqrt(reps) if reps > 1 else np.zeros(horizon)
        )
        curves[strategy] = (rate, stderr)
        for i in range(horizon):
            rows.append((i + 1, strategy, float(rate[i]), float(stderr[i])))
    rows.sort(key=lambda r: (r[0], r[1]))
    _write_csv(
        os.path.join(out_dir, "montecarlo.csv"),
        cfg,
        ("i", "strategy", "error_rate", "stderr"),
        rows,
    )
    summary = {
        "replications": reps,
        "eval_streams": int(mc["eval_streams"]),
        "horizon": horizon,
        "degenerate_stderr": reps == 1,
        "final_error": {s: float(curves[s][0][-1]) for s in strategies},
    }
    _write_json(os.path.join(out_dir, "mc_summary.json"), cfg, summary, "montecarlo")
    _write_manifest(
        out_dir, cfg, "montecarlo", ["montecarlo.csv", "mc_summary.json", "manifest.json"]
    )
    return summary


def cmd_theory(cfg: ExperimentConfig, out_dir: str) -> dict:
    """Evaluate the consistency bounds on supplied numbers, plus the exponent grid."""
    os.makedirs(out_dir, exist_ok=True)
    block = cfg.theory
    if not block:
        raise ConfigError("theory command needs a 'theory' config block")
    pi = perron_eigenvector(cfg.matrix).values

    counts = block.get("sample_counts")
    if counts is None:
        if cfg.train_per_class < 1:
            raise ConfigError("theory needs sample_counts or train_per_class")
        counts = [cfg.train_per_class * len(cfg.classes)] * cfg.n_agents
    profile = TrainingProfile(tuple(int(n) for n in counts), pi)

    target_risk = float(block.get("target_risk", 0.0))
    beta = block.get("beta", 1.0)
    if beta == "analytic":
        # per-agent logit bounds from the norm-constrained architectures
        from .mlp import logit_bound

        try:
            beta_val = np.array([logit_bound(arch) for arch in cfg.arch_by_agent])
        except Exception as exc:
            raise ConfigError(
                f"beta='analytic' needs norm-constrained architectures ({exc})"
            ) from exc
        beta_source = "analytic-norm-product"
    else:
        beta_val = np.asarray(beta, dtype=float)
        beta_source = "supplied"

    constants = block.get("complexity_constants")
    if constants is None:
        from .stats import mlp_rademacher_bound

        try:
            # the bound scales as C_k / sqrt(N), so C_k is the bound at N = 1
            constants = [mlp_rademacher_bound(arch, 1) for arch in cfg.arch_by_agent]
        except Exception as exc:
            raise ConfigError(
                "theory needs complexity_constants unless architectures are "
                f"norm-constrained ({exc})"
            ) from exc
    constants = [float(c) for c in constants]
    rho_bound, c_mixed = network_complexity_bound(constants, profile)

    inputs = BoundInputs(target_risk, beta_val if beta_val.ndim else float(beta_val), rho_bound, profile)
    bound = pc_lower_bound(inputs)

    epsilon = float(block.get("epsilon", 0.05))
    beta_scalar = float(np.max(beta_val))
    n_needed = sample_complexity(c_mixed, target_risk, profile.alpha, beta_scalar, epsilon)
    consistent, check = self_consistency_check(
        c_mixed, target_risk, profile.alpha, beta_scalar, epsilon
    )

    grid_points = int(block.get("grid_points", 50))
    grid_rows = []
    for j in range(grid_points):
        r = 0.999 * math.log(2) * j / max(grid_points - 1, 1)
        grid_rows.append((r, exact_exponent(r), approx_exponent(r)))
    _write_csv(
        os.path.join(out_dir, "exponent_grid.csv"),
        cfg,
        ("target_risk", "exact_exponent", "approx_exponent"),
        grid_rows,
    )

    report = {
        "inputs": {
            "target_risk": target_risk,
            "beta": beta_val.tolist() if beta_val.ndim else float(beta_val),
            "beta_source": beta_source,
            "complexity_constants": constants,
            "sample_counts": list(profile.sample_counts),
            "alpha": profile.alpha,
            "epsilon": epsilon,
        },
        "exponent_exact": exact_exponent(target_risk),
        "exponent_approx": approx_exponent(target_risk),
        "network_complexity_bound": rho_bound,
        "mixed_constant": c_mixed,
        "pc_lower_bound": bound.value,
        "pc_raw": bound.raw,
        "vacuous": bound.vacuous,
        "sample_complexity": n_needed,
        "self_consistency": {"ok": consistent, **check},
    }
    _write_json(os.path.join(out_dir, "theory_report.json"), cfg, report, "theory")
    _write_manifest(
        out_dir,
        cfg,
        "theory",
        ["theory_report.json", "exponent_grid.csv", "manifest.json"],
    )
    return report
