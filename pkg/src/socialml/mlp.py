"""Per-agent classifiers: feedforward networks with softmax heads.

The network computes pre-activations layer by layer, applies the activation
between layers only, and turns the final pre-activations z into approximate
posteriors with a softmax.  Class order is fixed by the dataset's ``classes``
tuple: output unit j scores ``classes[j]`` and ``classes[0]`` is the reference
class for every logit.  A bias is folded in as a constant trailing input
feature, so the first layer width counts one slot more than the raw feature
dimension when ``bias`` is set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

EXP_CLAMP = 500.0  # exp argument clamp used by the stable loss helpers


class ModelError(ValueError):
    """Invalid classifier configuration or input."""


class TrainingDiverged(RuntimeError):
    """Loss became NaN/Inf during empirical risk minimization."""


# activation name -> (function, derivative, Lipschitz constant); all satisfy f(0)=0
_ACTIVATIONS = {
    "tanh": (np.tanh, lambda a: 1.0 - np.tanh(a) ** 2, 1.0),
    "relu": (
        lambda a: np.maximum(a, 0.0),
        lambda a: (a > 0).astype(float),
        1.0,
    ),
    "identity": (lambda a: a, lambda a: np.ones_like(a), 1.0),
}


@dataclass(frozen=True)
class MLPArchitecture:
    """Layer widths and constraints of one agent's classifier.

    ``layer_sizes[0]`` is the input-layer width as seen by the first weight
    matrix; with ``bias=True`` it includes the constant-1 slot, so raw
    features have ``layer_sizes[0] - 1`` entries.  ``norm_bound`` caps the
    max-column-sum norm of every weight matrix; ``input_bound`` is the known
    bound on the absolute value of any (augmented) input entry.
    """

    layer_sizes: tuple
    activation: str = "tanh"
    bias: bool = True
    norm_bound: float | None = None
    input_bound: float = 1.0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ModelError(f"need positive layer sizes with L >= 1, got {sizes}")
        if self.activation not in _ACTIVATIONS:
            raise ModelError(f"unknown activation {self.activation!r}")
        if self.norm_bound is not None and self.norm_bound <= 0:
            raise ModelError("norm bound must be positive when set")
        if self.input_bound <= 0:
            raise ModelError("input bound must be positive")
        if self.bias and sizes[0] < 2:
            raise ModelError("bias slot leaves no room for features")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_features(self) -> int:
        """Raw feature dimension callers provide (bias slot excluded)."""
        return self.layer_sizes[0] - (1 if self.bias else 0)

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def lipschitz(self) -> float:
        return _ACTIVATIONS[self.activation][2]


@dataclass(frozen=True)
class TrainingHyperparameters:
    """Optimizer settings; ``optimizer`` is plain mini-batch gradient descent
    by default, with diagonally adaptive steps ("adam") available for small
    learning rates that plain descent cannot exploit.  ``init_scale``
    multiplies the default 1/sqrt(fan_in) initialization range; values above
    1 give the readout richer random hidden features to start from."""

    epochs: int
    batch_size: int
    learning_rate: float
    seed: int
    optimizer: str = "gd"
    init_scale: float = 1.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ModelError("epochs and batch size must be positive")
        if self.learning_rate < 0:
            raise ModelError("learning rate must be nonnegative")
        if self.optimizer not in ("gd", "adam"):
            raise ModelError(f"unknown optimizer {self.optimizer!r}")
        if self.init_scale <= 0:
            raise ModelError("init scale must be positive")


@dataclass(frozen=True)
class LabeledDataset:
    """One agent's feature view with labels drawn from ``classes``."""

    features: np.ndarray
    labels: np.ndarray
    classes: tuple

    def __post_init__(self):
        feats = np.atleast_2d(np.asarray(self.features, dtype=float))
        labels = np.asarray(self.labels)
        if feats.shape[0] != labels.shape[0]:
            raise ModelError(
                f"{feats.shape[0]} feature rows vs {labels.shape[0]} labels"
            )
        classes = tuple(self.classes)
        if len(set(classes)) != len(classes) or len(classes) < 2:
            raise ModelError("classes must be at least two distinct labels")
        unknown = set(labels.tolist()) - set(classes)
        if unknown:
            raise ModelError(f"labels {unknown} not in classes {classes}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "classes", classes)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_counts(self) -> dict:
        return {c: int(np.sum(self.labels == c)) for c in self.classes}

    @property
    def balanced(self) -> bool:
        counts = list(self.class_counts.values())
        return len(set(counts)) == 1

    def label_indices(self) -> np.ndarray:
        lookup = {c: j for j, c in enumerate(self.classes)}
        return np.array([lookup[l] for l in self.labels.tolist()], dtype=int)


@dataclass(frozen=True)
class MLPModel:
    architecture: MLPArchitecture
    weights: tuple = field(repr=False)

    def __post_init__(self):
        sizes = self.architecture.layer_sizes
        ws = tuple(np.asarray(w, dtype=float) for w in self.weights)
        if len(ws) != self.architecture.n_layers:
            raise ModelError(f"expected {self.architecture.n_layers} weight matrices")
        for ell, w in enumerate(ws, start=1):
            want = (sizes[ell], sizes[ell - 1])
            if w.shape != want:
                raise ModelError(f"layer {ell} weights {w.shape}, expected {want}")
        b = self.architecture.norm_bound
        if b is not None:
            worst = max(float(np.abs(w).sum(axis=0).max()) for w in ws)
            if worst > b * (1 + 1e-12):
                raise ModelError(f"column-sum norm {worst:.6g} exceeds bound {b}")
        object.__setattr__(self, "weights", ws)


def initialize_model(
    arch: MLPArchitecture, rng: np.random.Generator, scale: float = 1.0
) -> MLPModel:
    """Uniform init in +-scale/sqrt(fan_in) per layer."""
    sizes = arch.layer_sizes
    weights = []
    for ell in range(1, len(sizes)):
        bound = scale / np.sqrt(sizes[ell - 1])
        w = rng.uniform(-bound, bound, size=(sizes[ell], sizes[ell - 1]))
        weights.append(w)
    if arch.norm_bound is not None:
        weights = [_project_columns(w, arch.norm_bound) for w in weights]
    return MLPModel(arch, tuple(weights))


def _augment(arch: MLPArchitecture, features) -> np.ndarray:
    h = np.atleast_2d(np.asarray(features, dtype=float))
    if h.shape[1] != arch.n_features:
        raise ModelError(f"feature dim {h.shape[1]}, expected {arch.n_features}")
    if arch.bias:
        h = np.hstack([h, np.ones((h.shape[0], 1))])
    return h


def _forward_layers(model: MLPModel, h_aug: np.ndarray) -> list:
    """Pre-activations of every layer for an augmented (N, n_0) batch."""
    act = _ACTIVATIONS[model.architecture.activation][0]
    pre = [h_aug @ model.weights[0].T]
    for w in model.weights[1:]:
        pre.append(act(pre[-1]) @ w.T)
    return pre


def output_preactivations(model: MLPModel, features) -> np.ndarray:
    """Final-layer scores z, shape (N, M); accepts a single feature vector too."""
    single = np.asarray(features).ndim == 1
    z = _forward_layers(model, _augment(model.architecture, features))[-1]
    return z[0] if single else z


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(np.clip(shifted, -EXP_CLAMP, None))
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: MLPModel, features) -> tuple[np.ndarray, np.ndarray]:
    """Scores and approximate posteriors ``(z, softmax(z))``."""
    z = output_preactivations(model, features)
    return z, softmax(z)


def binary_logit(model: MLPModel, features) -> np.ndarray:
    """Log posterior ratio of the reference class versus the other, z_0 - z_1."""
    if model.architecture.n_outputs != 2:
        raise ModelError("binary logit needs a 2-output model")
    z = output_preactivations(model, features)
    return z[..., 0] - z[..., 1]


def reference_logits(model: MLPModel, features) -> np.ndarray:
    """Pairwise logits against the reference class: z_0 - z_gamma, gamma > 0.

    The log-odds of approximate posteriors reduce to score differences
    because the softmax normalizer cancels.  Shape (..., M-1).
    """
    z = output_preactivations(model, features)
    return z[..., :1] - z[..., 1:]


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x) without overflow: max(x, 0) + log1p(e^{-|x|})."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(np.clip(-np.abs(x), -EXP_CLAMP, 0.0)))


def logistic_risk(logit_source, dataset: LabeledDataset) -> float:
    """Mean log(1 + exp(-y f(h))) over the dataset, labels in {-1, +1}.

    ``logit_source`` may be a trained 2-output model, a callable mapping a
    feature batch to logit values, or precomputed per-sample logits.
    """
    if len(dataset) == 0:
        raise ModelError("empty dataset")
    if set(dataset.classes) != {-1, +1}:
        raise ModelError("logistic risk is defined for labels {-1, +1}")
    if isinstance(logit_source, MLPModel):
        values = binary_logit(logit_source, dataset.features)
    elif callable(logit_source):
        values = np.asarray(logit_source(dataset.features), dtype=float)
    else:
        values = np.asarray(logit_source, dtype=float)
    if values.shape != (len(dataset),):
        raise ModelError(f"expected {len(dataset)} logit values, got {values.shape}")
    y = dataset.labels.astype(float)
    return float(np.mean(softplus(-y * values)))


def _log_posteriors(model: MLPModel, features) -> np.ndarray:
    z = output_preactivations(model, np.atleast_2d(features))
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    return shifted - lse


def cross_entropy_risk(model: MLPModel, dataset: LabeledDataset) -> float:
    """Mean negative log approximate posterior of the true class."""
    if len(dataset) == 0:
        raise ModelError("empty dataset")
    if model.architecture.n_outputs != len(dataset.classes):
        raise ModelError(
            f"model has {model.architecture.n_outputs} outputs for "
            f"{len(dataset.classes)} classes"
        )
    logp = _log_posteriors(model, dataset.features)
    idx = dataset.label_indices()
    return float(-np.mean(logp[np.arange(len(dataset)), idx]))


def _project_columns(w: np.ndarray, bound: float) -> np.ndarray:
    # rescale columns whose absolute sum exceeds the bound
    sums = np.abs(w).sum(axis=0)
    factor = np.where(sums > bound, bound / np.maximum(sums, 1e-300), 1.0)
    return w * factor


def _raw_gradients(activation, weights, h_aug, idx, weights_batch):
    """Weighted-mean cross-entropy loss and its gradients per layer."""
    act_fn, act_deriv, _ = _ACTIVATIONS[activation]
    pre = [h_aug @ weights[0].T]
    for w in weights[1:]:
        pre.append(act_fn(pre[-1]) @ w.T)
    z = pre[-1]
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    logp = shifted - lse
    loss = float(-(weights_batch * logp[np.arange(len(idx)), idx]).sum())

    delta = np.exp(logp)
    delta[np.arange(len(idx)), idx] -= 1.0
    delta *= weights_batch[:, None]

    grads = [None] * len(weights)
    for ell in range(len(weights) - 1, -1, -1):
        inputs = h_aug if ell == 0 else act_fn(pre[ell - 1])
        grads[ell] = delta.T @ inputs
        if ell > 0:
            delta = (delta @ weights[ell]) * act_deriv(pre[ell - 1])
    return loss, grads


@dataclass(frozen=True)
class TrainResult:
    model: MLPModel
    risk_trace: np.ndarray  # empirical risk after each epoch


def train_erm(
    dataset: LabeledDataset,
    arch: MLPArchitecture,
    hyper: TrainingHyperparameters,
    sample_weights=None,
) -> TrainResult:
    """Mini-batch gradient descent on the empirical cross-entropy risk.

    Deterministic given the seed (initialization and per-epoch shuffles come
    from one generator).  Optional ``sample_weights`` multiply per-sample
    losses (weighted mean per batch); with a norm bound set, every update is
    followed by a column-sum projection.
    """
    if len(dataset) == 0:
        raise ModelError("empty dataset")
    if dataset.dim != arch.n_features:
        raise ModelError(f"dataset dim {dataset.dim} vs arch features {arch.n_features}")
    if arch.n_outputs != len(dataset.classes):
        raise ModelError("output layer width must match the number of classes")
    n = len(dataset)
    if sample_weights is None:
        sw = np.full(n, 1.0 / n)
    else:
        sw = np.asarray(sample_weights, dtype=float)
        if sw.shape != (n,) or np.any(sw < 0) or sw.sum() <= 0:
            raise ModelError("sample weights must be nonnegative with positive sum")
        sw = sw / sw.sum()

    rng = np.random.default_rng(hyper.seed)
    model = initialize_model(arch, rng, hyper.init_scale)
    weights = [w.copy() for w in model.weights]
    h_aug = _augment(arch, dataset.features)
    idx = dataset.label_indices()

    adam = hyper.optimizer == "adam"
    if adam:
        beta1, beta2, tiny = 0.9, 0.999, 1e-8
        first = [np.zeros_like(w) for w in weights]
        second = [np.zeros_like(w) for w in weights]
        step = 0

    trace = np.empty(hyper.epochs)
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            batch = order[start : start + hyper.batch_size]
            wb = sw[batch]
            wb = wb / wb.sum() if wb.sum() > 0 else np.full(len(batch), 1.0 / len(batch))
            loss, grads = _raw_gradients(
                arch.activation, weights, h_aug[batch], idx[batch], wb
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch start {start} "
                    f"(lr={hyper.learning_rate})"
                )
            if adam:
                step += 1
                for ell, g in enumerate(grads):
                    first[ell] = beta1 * first[ell] + (1 - beta1) * g
                    second[ell] = beta2 * second[ell] + (1 - beta2) * g**2
                    m_hat = first[ell] / (1 - beta1**step)
                    v_hat = second[ell] / (1 - beta2**step)
                    weights[ell] -= hyper.learning_rate * m_hat / (np.sqrt(v_hat) + tiny)
                    if arch.norm_bound is not None:
                        weights[ell] = _project_columns(weights[ell], arch.norm_bound)
                continue
            for ell, g in enumerate(grads):
                weights[ell] -= hyper.learning_rate * g
                if arch.norm_bound is not None:
                    weights[ell] = _project_columns(weights[ell], arch.norm_bound)
        full_loss, _ = _raw_gradients(arch.activation, weights, h_aug, idx, sw)
        if not np.isfinite(full_loss):
            raise TrainingDiverged(f"non-finite epoch risk at epoch {epoch}")
        trace[epoch] = full_loss

    return TrainResult(MLPModel(arch, tuple(weights)), trace)


def gradient_check(model: MLPModel, dataset: LabeledDataset, eps: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    The error of each weight matrix is the largest entrywise deviation scaled
    by the largest gradient entry of that matrix, so near-zero entries do not
    blow up the ratio.  Intended for small models (< 1e4 parameters).
    """
    if len(dataset) == 0:
        raise ModelError("empty dataset")
    n_params = sum(w.size for w in model.weights)
    if n_params > 10_000:
        raise ModelError(f"{n_params} parameters is too large for finite differences")
    h_aug = _augment(model.architecture, dataset.features)
    idx = dataset.label_indices()
    uniform = np.full(len(dataset), 1.0 / len(dataset))
    activation = model.architecture.activation
    weights = [w.copy() for w in model.weights]
    _, grads = _raw_gradients(activation, weights, h_aug, idx, uniform)

    worst = 0.0
    for ell, w in enumerate(weights):
        fd = np.empty_like(w)
        for pos in np.ndindex(w.shape):
            original = w[pos]
            w[pos] = original + eps
            up, _ = _raw_gradients(activation, weights, h_aug, idx, uniform)
            w[pos] = original - eps
            down, _ = _raw_gradients(activation, weights, h_aug, idx, uniform)
            w[pos] = original
            fd[pos] = (up - down) / (2 * eps)
        scale = max(np.abs(grads[ell]).max(), np.abs(fd).max(), 1e-12)
        worst = max(worst, float(np.abs(grads[ell] - fd).max() / scale))
    return worst


def logit_bound(arch: MLPArchitecture) -> float:
    """Analytic bound on |logit| from norm-constrained weights and inputs."""
    if arch.norm_bound is None:
        raise ModelError("logit bound needs a norm-constrained architecture")
    b, c = arch.norm_bound, arch.input_bound
    depth, width0 = arch.n_layers, arch.layer_sizes[0]
    return 2.0 * (b * arch.lipschitz) ** (depth - 1) * b * c * width0


def empirical_logit_bound(model: MLPModel, features) -> float:
    """Largest |logit| component observed on the given features."""
    return float(np.abs(reference_logits(model, features)).max())


def save_model(model: MLPModel, path) -> None:
    """JSON with the architecture block and row-major weight arrays.

    Floats serialize via shortest round-trip repr (17 significant digits at
    most), so save -> load -> save is byte-stable.
    """
    arch = model.architecture
    payload = {
        "format": "mlp-v1",
        "architecture": {
            "layer_sizes": list(arch.layer_sizes),
            "activation": arch.activation,
            "bias": arch.bias,
            "norm_bound": arch.norm_bound,
            "input_bound": arch.input_bound,
        },
        "weights": [w.tolist() for w in model.weights],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_model(path) -> MLPModel:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != "mlp-v1":
        raise ModelError(f"{path}: unknown model format {payload.get('format')!r}")
    spec = payload["architecture"]
    arch = MLPArchitecture(
        layer_sizes=tuple(spec["layer_sizes"]),
        activation=spec["activation"],
        bias=spec["bias"],
        norm_bound=spec["norm_bound"],
        input_bound=spec["input_bound"],
    )
    return MLPModel(arch, tuple(np.asarray(w, dtype=float) for w in payload["weights"]))


def with_seed(hyper: TrainingHyperparameters, seed: int) -> TrainingHyperparameters:
    return replace(hyper, seed=int(seed))
