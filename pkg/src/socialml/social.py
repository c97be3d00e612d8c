"""Prediction-phase engines: belief diffusion over the agent graph.

Each agent carries a log-belief ratio lambda against the reference class
(one value for two classes, a vector with one entry per non-reference class
otherwise).  A step mixes neighbors' updated values through the combination
matrix:

    standard step:  lambda_k <- sum_l A[l, k] (lambda_l + c_l)
    adaptive step:  lambda_k <- sum_l A[l, k] ((1 - delta) lambda_l + c_l)

where c_l is agent l's statistic at the current observation.  The adaptive
variant forgets at rate delta in (0, 1), trading asymptotic certainty for an
adaptation time on the order of 1/delta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stats import ConditionalMeans


class SocialLearningError(ValueError):
    """Invalid engine input (shapes, step size, non-finite statistics)."""


@dataclass(frozen=True)
class BeliefState:
    """Per-agent log-belief ratios at one time step.

    ``lam`` has shape (K,) for two classes or (K, M-1) otherwise; entries are
    log beliefs of the reference class over each alternative.
    """

    lam: np.ndarray
    step: int = 0

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim not in (1, 2):
            raise SocialLearningError(f"lambda must be 1- or 2-d, got shape {lam.shape}")
        if not np.all(np.isfinite(lam)):
            raise SocialLearningError("lambda contains non-finite values")
        object.__setattr__(self, "lam", lam)

    @property
    def n_agents(self) -> int:
        return self.lam.shape[0]


@dataclass(frozen=True)
class StatisticProvider:
    """Per-agent statistic source with a provenance tag.

    ``fn`` maps a feature batch to statistic values; tags distinguish trained
    debiased statistics, true log-likelihood ratios, and fixed functions.
    """

    fn: object
    source: str = "fixed-function"

    def __call__(self, features):
        return self.fn(features)


@dataclass(frozen=True)
class RegimeSchedule:
    """Contiguous segments of (start index, true state) covering the stream."""

    segments: tuple

    def __post_init__(self):
        segs = tuple((int(s), g) for s, g in self.segments)
        if not segs or segs[0][0] != 0:
            raise SocialLearningError("schedule must start at index 0")
        starts = [s for s, _ in segs]
        if starts != sorted(set(starts)):
            raise SocialLearningError("segment starts must be strictly increasing")
        object.__setattr__(self, "segments", segs)

    def states(self, length: int) -> np.ndarray:
        """True-state track over [0, length)."""
        track = np.empty(length, dtype=object)
        starts = [s for s, _ in self.segments] + [length]
        for (start, state), end in zip(self.segments, starts[1:]):
            track[start:min(end, length)] = state
        if length > 0 and track[length - 1] is None:
            raise SocialLearningError("schedule does not cover the stream")
        return track


def periodic_schedule(period: int, states, length: int) -> RegimeSchedule:
    """Cycle through ``states``, switching every ``period`` steps."""
    if period < 1:
        raise SocialLearningError("period must be positive")
    segments = [
        (start, states[(start // period) % len(states)])
        for start in range(0, length, period)
    ]
    return RegimeSchedule(tuple(segments))


def _check_stats(values: np.ndarray, lam: np.ndarray) -> np.ndarray:
    stats = np.asarray(values, dtype=float)
    if stats.shape != lam.shape:
        raise SocialLearningError(f"statistics shape {stats.shape} vs state {lam.shape}")
    if not np.all(np.isfinite(stats)):
        raise SocialLearningError("non-finite statistic value")
    return stats


def _mix(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    # sum_l A[l, k] x[l, ...] for 1-d (K,) or 2-d (K, D) values
    if values.ndim == 1:
        return weights.T @ values
    return np.einsum("lk,ld->kd", weights, values)


def sl_step(state: BeliefState, matrix, stats) -> BeliefState:
    """One standard diffusion step; past evidence is kept in full."""
    a = matrix.weights
    c = _check_stats(stats, state.lam)
    return BeliefState(_mix(a, state.lam + c), state.step + 1)


def asl_step(state: BeliefState, matrix, stats, delta: float) -> BeliefState:
    """One adaptive diffusion step; past evidence decays by (1 - delta)."""
    if not 0.0 < delta < 1.0:
        raise SocialLearningError(f"delta must lie strictly in (0, 1), got {delta}")
    a = matrix.weights
    c = _check_stats(stats, state.lam)
    return BeliefState(_mix(a, (1.0 - delta) * state.lam + c), state.step + 1)


def beliefs_from_lambda(lam, n_classes: int) -> np.ndarray:
    """Belief pmf of one agent from its log ratios, computed stably.

    The reference class has implicit log score 0 and the alternatives have
    -lam[j]; a max-shifted softmax keeps extreme values finite.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.shape != (n_classes - 1,):
        raise SocialLearningError(f"need {n_classes - 1} ratios, got {lam.shape}")
    scores = np.concatenate([[0.0], -lam])
    scores -= scores.max()
    weights = np.exp(scores)
    return weights / weights.sum()


def decide(state: BeliefState, classes) -> np.ndarray:
    """Per-agent label with the largest belief; ties go to the earliest class.

    For two classes this is the sign rule: the reference class wins whenever
    lambda >= 0.
    """
    classes = tuple(classes)
    lam = state.lam if state.lam.ndim == 2 else state.lam[:, None]
    if lam.shape[1] != len(classes) - 1:
        raise SocialLearningError("state width does not match the class count")
    scores = np.hstack([np.zeros((lam.shape[0], 1)), -lam])
    picks = np.argmax(scores, axis=1)  # argmax takes the first maximizer
    return np.array([classes[j] for j in picks], dtype=object)


@dataclass(frozen=True)
class PredictionRun:
    """Trajectory of one prediction-phase run."""

    lam: np.ndarray  # (T, K) or (T, K, M-1)
    decisions: np.ndarray  # (T, K) labels
    true_states: np.ndarray  # (T,)
    correct: np.ndarray  # (T, K) bool

    @property
    def horizon(self) -> int:
        return self.lam.shape[0]


def run_prediction(
    engine: str,
    matrix,
    providers,
    features_per_agent,
    true_states,
    classes,
    delta: float | None = None,
    lam0=None,
) -> PredictionRun:
    """Iterate the chosen step over a feature stream and record everything.

    ``features_per_agent[k]`` holds agent k's observations, shape (T, d_k);
    ``true_states`` is the label track the decisions are scored against.
    Providers must be pure functions of the observation; they are applied to
    each agent's whole stream in one vectorized pass and the recursion
    consumes the values in time order, so no engine-level caching exists.
    """
    if engine not in ("sl", "asl"):
        raise SocialLearningError(f"engine must be 'sl' or 'asl', got {engine!r}")
    if engine == "asl" and delta is None:
        raise SocialLearningError("adaptive engine needs delta")
    if engine == "sl" and delta is not None:
        raise SocialLearningError("standard engine takes no delta")
    classes = tuple(classes)
    n_agents = matrix.size
    if len(providers) != n_agents or len(features_per_agent) != n_agents:
        raise SocialLearningError("providers and feature views must cover all agents")
    true_states = np.asarray(true_states, dtype=object)
    horizon = len(true_states)
    for k, feats in enumerate(features_per_agent):
        if np.asarray(feats).shape[0] != horizon:
            raise SocialLearningError(f"agent {k} stream length != {horizon}")

    width = len(classes) - 1
    binary = len(classes) == 2
    # statistics for the whole stream in one vectorized pass per agent
    stat_track = np.empty((horizon, n_agents, width))
    for k in range(n_agents):
        values = np.asarray(providers[k](features_per_agent[k]), dtype=float)
        stat_track[:, k, :] = values.reshape(horizon, width)

    if lam0 is None:
        lam = np.zeros((n_agents, width))
    else:
        lam = np.asarray(lam0, dtype=float).reshape(n_agents, width).copy()
    state = BeliefState(lam if not binary else lam[:, 0], 0)

    lam_out = np.empty((horizon, n_agents) if binary else (horizon, n_agents, width))
    decisions = np.empty((horizon, n_agents), dtype=object)
    for i in range(horizon):
        stats = stat_track[i, :, 0] if binary else stat_track[i]
        if engine == "sl":
            state = sl_step(state, matrix, stats)
        else:
            state = asl_step(state, matrix, stats, delta)
        lam_out[i] = state.lam
        decisions[i] = decide(state, classes)
    correct = decisions == true_states[:, None]
    return PredictionRun(lam_out, decisions, true_states, correct)


@dataclass(frozen=True)
class ConsistencyReport:
    margin_plus: float  # mu+ minus the network training mean
    margin_minus: float  # network training mean minus mu-
    satisfied: bool
    details: dict

    def to_dict(self) -> dict:
        return {
            "margin_plus": self.margin_plus,
            "margin_minus": self.margin_minus,
            "satisfied": self.satisfied,
            **self.details,
        }


def check_consistency_conditions(means: ConditionalMeans) -> ConsistencyReport:
    """Verify that the statistic separates the classes around its training mean.

    Requires the network conditional mean under +1 to exceed the network
    training mean and the one under -1 to fall below it, strictly.
    """
    margin_plus = means.mu_plus - means.mu_train
    margin_minus = means.mu_train - means.mu_minus
    satisfied = margin_plus > 0.0 and margin_minus > 0.0
    return ConsistencyReport(
        margin_plus,
        margin_minus,
        satisfied,
        {
            "mu_plus": means.mu_plus,
            "mu_minus": means.mu_minus,
            "mu_train": means.mu_train,
            "stderr_network": means.stderr_network,
        },
    )


def bayes_classifier(log_likelihood_pair, features, priors=(0.5, 0.5)) -> np.ndarray:
    """Decisions of the known-model sequential test on one feature stream.

    ``log_likelihood_pair`` maps a feature batch to ``(logp_plus, logp_minus)``
    arrays; the running sum of their differences plus the prior log ratio is
    thresholded at zero (ties decide +1).  A zero-density observation makes
    the statistic undefined and raises.
    """
    p_plus, p_minus = priors
    if p_plus < 0 or p_minus < 0 or p_plus + p_minus <= 0:
        raise SocialLearningError("priors must be nonnegative with positive sum")
    if p_plus == 0 or p_minus == 0:
        raise SocialLearningError("degenerate prior forces one class forever")
    lp, lm = log_likelihood_pair(np.atleast_2d(np.asarray(features, dtype=float)))
    lp = np.asarray(lp, dtype=float)
    lm = np.asarray(lm, dtype=float)
    if np.any(np.isneginf(lp)) or np.any(np.isneginf(lm)):
        raise SocialLearningError("zero-density feature in the stream")
    statistic = np.cumsum(lp - lm) + np.log(p_plus / p_minus)
    return np.where(statistic >= 0.0, +1, -1)
