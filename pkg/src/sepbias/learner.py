"""From-scratch ERM classifiers trained by gradient descent.

Two architectures: logistic regression and a one-hidden-layer tanh MLP, both
trained on the binary cross-entropy with plain (full-batch or mini-batch)
gradient descent. Training holds out a validation fraction, tracks the
validation loss after every epoch and returns the parameters of the best
epoch, stopping early once the loss has failed to improve for ``patience``
consecutive epochs. Everything is deterministic given the config seed.

Gradients are hand-derived; ``check_gradients`` compares them against central
finite differences so the derivation is verified, not trusted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import Dataset
from .errors import (
    DegenerateTargetError,
    DomainError,
    SchemaError,
    TrainingFailureError,
    UnsupportedArchitectureError,
)
from .metrics import roc_auc

__all__ = [
    "TrainConfig",
    "LinearModel",
    "MlpModel",
    "train_classifier",
    "predict_proba",
    "predict",
    "representation",
    "split_probe",
    "check_gradients",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
]

ARCHITECTURES = ("linear", "mlp")
TARGETS = ("observed_label", "group")

# Scores are clipped into this open interval so predict_proba never returns
# an exact 0 or 1 even when the logit saturates in float64.
PROB_FLOOR = 1e-12

# Sample-count ceiling for finite-difference gradient checking.
GRADCHECK_MAX_SAMPLES = 64


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for :func:`train_classifier`.

    ``batch_size`` is either the string "full" (one gradient step per epoch on
    the whole training split) or a positive integer mini-batch size.
    ``hidden_width`` only matters for the mlp architecture.
    """

    learning_rate: float = 0.1
    max_epochs: int = 500
    patience: int = 5
    val_fraction: float = 0.2
    batch_size: int | str = "full"
    hidden_width: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        lr = float(self.learning_rate)
        if not math.isfinite(lr) or lr <= 0.0:
            raise DomainError(f"learning_rate must be positive, got {self.learning_rate!r}")
        object.__setattr__(self, "learning_rate", lr)
        for name, minimum in (("max_epochs", 1), ("patience", 1), ("hidden_width", 1)):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
                raise DomainError(f"{name} must be an integer >= {minimum}, got {v!r}")
        vf = float(self.val_fraction)
        if not 0.0 < vf < 1.0:
            raise DomainError(f"val_fraction must lie strictly in (0, 1), got {self.val_fraction!r}")
        object.__setattr__(self, "val_fraction", vf)
        bs = self.batch_size
        if bs != "full" and (not isinstance(bs, int) or isinstance(bs, bool) or bs < 1):
            raise DomainError(f'batch_size must be "full" or a positive integer, got {bs!r}')
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise DomainError(f"seed must be an integer, got {self.seed!r}")

    def to_json_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "val_fraction": self.val_fraction,
            "batch_size": self.batch_size,
            "hidden_width": self.hidden_width,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "TrainConfig":
        if not isinstance(data, dict):
            raise SchemaError(f"train config must be a JSON object, got {type(data).__name__}")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise SchemaError(f"train config has unknown field(s): {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass
class LinearModel:
    """Logistic regression: score = sigmoid(weights . x + bias)."""

    weights: np.ndarray
    bias: float
    train_config: TrainConfig | None = None

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1:
            raise DomainError(f"weights must be 1-d, got shape {self.weights.shape}")
        self.bias = float(self.bias)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class MlpModel:
    """One hidden tanh layer: score = sigmoid(w_out . tanh(x W_h + b_h) + b_out)."""

    hidden_weights: np.ndarray
    hidden_bias: np.ndarray
    output_weights: np.ndarray
    output_bias: float
    train_config: TrainConfig | None = None

    def __post_init__(self) -> None:
        self.hidden_weights = np.asarray(self.hidden_weights, dtype=np.float64)
        self.hidden_bias = np.asarray(self.hidden_bias, dtype=np.float64)
        self.output_weights = np.asarray(self.output_weights, dtype=np.float64)
        if self.hidden_weights.ndim != 2:
            raise DomainError(f"hidden_weights must be 2-d, got shape {self.hidden_weights.shape}")
        width = self.hidden_weights.shape[1]
        if self.hidden_bias.shape != (width,) or self.output_weights.shape != (width,):
            raise DomainError("hidden_bias and output_weights must match the hidden width")
        self.output_bias = float(self.output_bias)

    @property
    def dim(self) -> int:
        return self.hidden_weights.shape[0]

    @property
    def width(self) -> int:
        return self.hidden_weights.shape[1]


Model = LinearModel | MlpModel


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _bce_from_logits(z: np.ndarray, y: np.ndarray) -> float:
    # mean(softplus(z) - y*z), computed in the log domain for stability.
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


class _LinearCore:
    """Parameter list layout: [weights (dim,), bias ()]."""

    arch = "linear"

    @staticmethod
    def init(rng: np.random.Generator, dim: int, config: TrainConfig, bias0: float = 0.0) -> list[np.ndarray]:
        weights = rng.normal(0.0, 0.1 / math.sqrt(dim), size=dim)
        return [weights, np.full((), bias0)]

    @staticmethod
    def logits(params: list[np.ndarray], X: np.ndarray) -> np.ndarray:
        weights, bias = params
        return X @ weights + bias

    @staticmethod
    def grads(params: list[np.ndarray], X: np.ndarray, y: np.ndarray) -> list[np.ndarray]:
        dz = (_sigmoid(_LinearCore.logits(params, X)) - y) / X.shape[0]
        return [X.T @ dz, np.asarray(np.sum(dz))]

    @staticmethod
    def to_model(params: list[np.ndarray], config: TrainConfig | None) -> LinearModel:
        return LinearModel(weights=params[0].copy(), bias=float(params[1]), train_config=config)


class _MlpCore:
    """Parameter list layout: [W_h (dim, width), b_h (width,), w_out (width,), b_out ()]."""

    arch = "mlp"

    @staticmethod
    def init(rng: np.random.Generator, dim: int, config: TrainConfig, bias0: float = 0.0) -> list[np.ndarray]:
        width = config.hidden_width
        w_hidden = rng.normal(0.0, 1.0 / math.sqrt(dim), size=(dim, width))
        w_out = rng.normal(0.0, 1.0 / math.sqrt(width), size=width)
        return [w_hidden, np.zeros(width), w_out, np.full((), bias0)]

    @staticmethod
    def hidden(params: list[np.ndarray], X: np.ndarray) -> np.ndarray:
        return np.tanh(X @ params[0] + params[1])

    @staticmethod
    def logits(params: list[np.ndarray], X: np.ndarray) -> np.ndarray:
        h = _MlpCore.hidden(params, X)
        return h @ params[2] + params[3]

    @staticmethod
    def grads(params: list[np.ndarray], X: np.ndarray, y: np.ndarray) -> list[np.ndarray]:
        w_hidden, b_hidden, w_out, b_out = params
        h = np.tanh(X @ w_hidden + b_hidden)
        z = h @ w_out + b_out
        dz = (_sigmoid(z) - y) / X.shape[0]
        d_wout = h.T @ dz
        d_bout = np.asarray(np.sum(dz))
        dh = np.outer(dz, w_out) * (1.0 - h * h)
        return [X.T @ dh, dh.sum(axis=0), d_wout, d_bout]

    @staticmethod
    def to_model(params: list[np.ndarray], config: TrainConfig | None) -> MlpModel:
        return MlpModel(
            hidden_weights=params[0].copy(),
            hidden_bias=params[1].copy(),
            output_weights=params[2].copy(),
            output_bias=float(params[3]),
            train_config=config,
        )


_CORES = {"linear": _LinearCore, "mlp": _MlpCore}


def _core_for(arch: str):
    if arch not in _CORES:
        raise DomainError(f"arch must be one of {ARCHITECTURES}, got {arch!r}")
    return _CORES[arch]


def _core_of_model(model: Model):
    if isinstance(model, LinearModel):
        return _LinearCore
    if isinstance(model, MlpModel):
        return _MlpCore
    raise DomainError(f"not a model: {model!r}")


def _params_of_model(model: Model) -> list[np.ndarray]:
    if isinstance(model, LinearModel):
        return [model.weights, np.asarray(model.bias)]
    return [model.hidden_weights, model.hidden_bias, model.output_weights, np.asarray(model.output_bias)]


def train_classifier(dataset: Dataset, target: str, arch: str, config: TrainConfig) -> Model:
    """Fit a classifier of ``target`` ("observed_label" or "group") on the dataset.

    A fraction ``config.val_fraction`` of the data (seed-determined shuffle) is
    held out for validation; the remaining training split must contain both
    target values, else DegenerateTargetError. A non-finite validation loss at
    any epoch raises TrainingFailureError carrying that epoch. The returned
    model is the snapshot with the lowest validation loss seen, including the
    untrained initialization.
    """
    if target not in TARGETS:
        raise DomainError(f"target must be one of {TARGETS}, got {target!r}")
    core = _core_for(arch)
    X = dataset.features
    y = getattr(dataset, target).astype(np.float64)
    n = X.shape[0]
    if n < 2:
        raise DomainError(f"need at least 2 samples to train, got {n}")
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(n)
    n_val = max(1, int(round(config.val_fraction * n)))
    if n_val >= n:
        n_val = n - 1
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    X_train, y_train = X[train_idx], y[train_idx]
    X_val, y_val = X[val_idx], y[val_idx]
    if np.unique(y_train).size < 2:
        raise DegenerateTargetError(f"training split has a single {target} value; cannot fit a classifier")

    # Starting the output bias at the base-rate log-odds removes the slow
    # intercept drift that otherwise dominates early epochs under a skewed
    # class balance.
    base_rate = float(np.clip(y_train.mean(), 1e-3, 1.0 - 1e-3))
    bias0 = math.log(base_rate / (1.0 - base_rate))
    params = core.init(rng, X.shape[1], config, bias0)
    best_loss = _bce_from_logits(core.logits(params, X_val), y_val)
    if not math.isfinite(best_loss):
        raise TrainingFailureError("validation loss is non-finite at initialization", epoch=0)
    best = [p.copy() for p in params]
    stale = 0
    n_train = X_train.shape[0]
    for epoch in range(1, config.max_epochs + 1):
        if config.batch_size == "full":
            grads = core.grads(params, X_train, y_train)
            for p, g in zip(params, grads):
                p -= config.learning_rate * g
        else:
            order = rng.permutation(n_train)
            for start in range(0, n_train, config.batch_size):
                batch = order[start : start + config.batch_size]
                grads = core.grads(params, X_train[batch], y_train[batch])
                for p, g in zip(params, grads):
                    p -= config.learning_rate * g
        val_loss = _bce_from_logits(core.logits(params, X_val), y_val)
        if not math.isfinite(val_loss):
            raise TrainingFailureError(
                f"training diverged: validation loss became non-finite at epoch {epoch}", epoch=epoch
            )
        if val_loss < best_loss:
            best_loss = val_loss
            best = [p.copy() for p in params]
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return core.to_model(best, config)


def _scores(model: Model, X: np.ndarray) -> np.ndarray:
    core = _core_of_model(model)
    z = core.logits(_params_of_model(model), X)
    return np.clip(_sigmoid(z), PROB_FLOOR, 1.0 - PROB_FLOOR)


def _as_batch(model: Model, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != model.dim:
        raise DomainError(f"x must have {model.dim} features, got shape {np.asarray(x).shape}")
    return arr, single


def predict_proba(model: Model, x):
    """Score(s) strictly inside (0, 1); scalar for a single feature vector."""
    arr, single = _as_batch(model, x)
    scores = _scores(model, arr)
    return float(scores[0]) if single else scores


def predict(model: Model, x, threshold: float = 0.5):
    """Hard call(s): 1 where the score strictly exceeds ``threshold``."""
    threshold = float(threshold)
    if not math.isfinite(threshold) or not 0.0 < threshold < 1.0:
        raise DomainError(f"threshold must lie strictly in (0, 1), got {threshold!r}")
    arr, single = _as_batch(model, x)
    calls = (_scores(model, arr) > threshold).astype(np.int64)
    return int(calls[0]) if single else calls


def representation(model: Model, x):
    """Hidden-layer activations of an MLP; the probe target for split_probe."""
    if not isinstance(model, MlpModel):
        raise UnsupportedArchitectureError("representation requires the mlp architecture")
    arr, single = _as_batch(model, x)
    h = _MlpCore.hidden(_params_of_model(model), arr)
    return h[0] if single else h


def probe_split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """The (eval, fit) half-split of ``range(n)`` that split_probe uses.

    Exposed so callers can compute other quantities (for instance a reference
    separability AUC) on exactly the samples the probe is scored on.
    """
    if n < 4:
        raise DomainError(f"split_probe needs at least 4 samples, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_eval = n // 2
    return perm[:n_eval], perm[n_eval:]


def split_probe(model: MlpModel, dataset: Dataset, config: TrainConfig) -> tuple[LinearModel, float]:
    """How much group information the frozen backbone encodes.

    The dataset is split in half (seed-determined shuffle, see
    probe_split_indices): a linear probe is trained on the backbone's hidden
    representations of one half to predict the group attribute, and its ROC
    AUC on the held-out half is returned alongside the probe. The backbone
    itself is read, never written.
    """
    if not isinstance(model, MlpModel):
        raise UnsupportedArchitectureError("split_probe requires the mlp architecture")
    if np.unique(dataset.group).size < 2:
        raise DegenerateTargetError("split_probe needs both groups present in the dataset")
    n = len(dataset)
    reps = representation(model, dataset.features)
    eval_idx, fit_idx = probe_split_indices(n, config.seed)
    fit_set = Dataset(
        features=reps[fit_idx],
        group=dataset.group[fit_idx],
        true_label=dataset.true_label[fit_idx],
        observed_label=dataset.observed_label[fit_idx],
    )
    probe = train_classifier(fit_set, "group", "linear", config)
    auc = roc_auc(predict_proba(probe, reps[eval_idx]), dataset.group[eval_idx])
    return probe, float(auc)


def check_gradients(arch: str, config: TrainConfig, dataset_small: Dataset, step: float = 1e-5) -> float:
    """Worst normalized gap between analytic and central finite-difference gradients.

    Evaluates the full-batch loss gradient at the seed-determined initial
    parameters on ``dataset_small`` (at most 64 samples) and perturbs every
    parameter by ``+-step``. The return value is the largest absolute
    disagreement divided by the largest gradient magnitude seen, so a healthy
    implementation lands many orders of magnitude below any sane tolerance.
    """
    core = _core_for(arch)
    n = len(dataset_small)
    if n == 0 or n > GRADCHECK_MAX_SAMPLES:
        raise DomainError(f"dataset_small must have between 1 and {GRADCHECK_MAX_SAMPLES} samples, got {n}")
    X = dataset_small.features
    y = dataset_small.observed_label.astype(np.float64)
    rng = np.random.default_rng(config.seed)
    params = core.init(rng, X.shape[1], config)
    analytic = core.grads(params, X, y)
    worst_gap = 0.0
    scale = 0.0
    for p, g in zip(params, analytic):
        flat_p = p.reshape(-1)
        flat_g = np.asarray(g).reshape(-1)
        for i in range(flat_p.size):
            original = flat_p[i]
            flat_p[i] = original + step
            loss_plus = _bce_from_logits(core.logits(params, X), y)
            flat_p[i] = original - step
            loss_minus = _bce_from_logits(core.logits(params, X), y)
            flat_p[i] = original
            fd = (loss_plus - loss_minus) / (2.0 * step)
            worst_gap = max(worst_gap, abs(fd - float(flat_g[i])))
            scale = max(scale, abs(fd), abs(float(flat_g[i])))
    return worst_gap / max(scale, 1e-12)


def model_to_dict(model: Model) -> dict:
    config = model.train_config.to_json_dict() if model.train_config is not None else None
    if isinstance(model, LinearModel):
        return {
            "architecture": "linear",
            "weights": model.weights.tolist(),
            "bias": model.bias,
            "train_config": config,
        }
    if isinstance(model, MlpModel):
        return {
            "architecture": "mlp",
            "hidden_weights": model.hidden_weights.tolist(),
            "hidden_bias": model.hidden_bias.tolist(),
            "output_weights": model.output_weights.tolist(),
            "output_bias": model.output_bias,
            "train_config": config,
        }
    raise DomainError(f"not a model: {model!r}")


def model_from_dict(data: dict) -> Model:
    if not isinstance(data, dict) or "architecture" not in data:
        raise SchemaError("model JSON must be an object with an 'architecture' field")
    arch = data["architecture"]
    config = None
    if data.get("train_config") is not None:
        config = TrainConfig.from_json_dict(data["train_config"])
    try:
        if arch == "linear":
            return LinearModel(weights=np.asarray(data["weights"]), bias=data["bias"], train_config=config)
        if arch == "mlp":
            return MlpModel(
                hidden_weights=np.asarray(data["hidden_weights"]),
                hidden_bias=np.asarray(data["hidden_bias"]),
                output_weights=np.asarray(data["output_weights"]),
                output_bias=data["output_bias"],
                train_config=config,
            )
    except KeyError as exc:
        raise SchemaError(f"model JSON missing field: {exc}") from None
    raise SchemaError(f"unknown architecture tag {arch!r}")


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> Model:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from None
    try:
        return model_from_dict(data)
    except DomainError as exc:
        raise SchemaError(f"{path}: {exc}") from None
