"""Built-in baseline classifier and the trainer session contract.

The baseline is multinomial logistic regression over block-mean-pooled 8-bit
patches, trained with plain minibatch SGD. It exists so the scheduler and the
sweep run end to end at desk scale with every number hand-checkable; external
trainers plug into the same TrainerHandle contract.

A handle is resumable: pause() emits a versioned token from which resume()
restores the exact training state, and because epoch shuffles are keyed on
(config seed, epoch index), an interrupted run replays the uninterrupted
update sequence bit for bit.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from . import metrics
from .heightfield import LABEL_INDEX, LabeledPatch
from .preprocess import GrayPatch8, quantize_center
from .seeding import rng_for

ALLOWED_BATCH_SIZES = (16, 32, 64, 128)
N_CLASSES = 3
CHECKPOINT_VERSION = 1


class LearnerError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    batch_size: int
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise LearnerError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.batch_size not in ALLOWED_BATCH_SIZES:
            raise LearnerError(f"batch size must be one of {ALLOWED_BATCH_SIZES}, "
                               f"got {self.batch_size}")


@dataclass
class BaselineModel:
    """Softmax regression: logits = x @ weights + bias."""

    weights: np.ndarray  # (n_features, 3)
    bias: np.ndarray     # (3,)
    pool_factor: int = 4
    seed: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[1] != N_CLASSES:
            raise LearnerError(f"weights must be (n_features, {N_CLASSES}), "
                               f"got {self.weights.shape}")
        if self.bias.shape != (N_CLASSES,):
            raise LearnerError(f"bias must be ({N_CLASSES},), got {self.bias.shape}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise LearnerError("model parameters must be finite")

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]


def pooled_feature_count(width_px: int, height_px: int, pool_factor: int) -> int:
    if width_px % pool_factor or height_px % pool_factor:
        raise LearnerError(f"pool factor {pool_factor} does not divide "
                           f"{width_px}x{height_px}")
    return (width_px // pool_factor) * (height_px // pool_factor)


def init_model(n_features: int, pool_factor: int = 4, seed: int = 0) -> BaselineModel:
    """Fresh model with small seeded Gaussian weights and zero bias."""
    rng = rng_for(seed, "init")
    weights = rng.normal(0.0, 0.01, size=(n_features, N_CLASSES))
    return BaselineModel(weights=weights, bias=np.zeros(N_CLASSES),
                         pool_factor=pool_factor, seed=seed)


def featurize(g: GrayPatch8, pool_factor: int = 4) -> np.ndarray:
    """Non-overlapping block-mean pooling, scaled to [0, 1] by division by 255."""
    n = pooled_feature_count(g.width_px, g.height_px, pool_factor)
    px = g.pixels.astype(np.float64)
    h, w = g.height_px, g.width_px
    blocks = px.reshape(h // pool_factor, pool_factor,
                        w // pool_factor, pool_factor).mean(axis=(1, 3))
    out = (blocks / 255.0).ravel()
    assert out.shape == (n,)
    return out


def build_features(patches: Sequence[LabeledPatch],
                   pool_factor: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Quantize and featurize patches; returns (X, y) with y as class indices."""
    if not patches:
        raise LearnerError("no patches to featurize")
    X = np.stack([featurize(quantize_center(p.image), pool_factor) for p in patches])
    y = np.array([LABEL_INDEX[p.label] for p in patches], dtype=np.int64)
    return X, y


def forward(model: BaselineModel, X: np.ndarray) -> np.ndarray:
    """Class probability rows (softmax over logits), numerically stabilized."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise LearnerError(f"feature dimension {X.shape[1]} does not match "
                           f"model ({model.n_features})")
    logits = X @ model.weights + model.bias
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class Grads:
    weights: np.ndarray
    bias: np.ndarray


def loss_and_grad(model: BaselineModel, X: np.ndarray,
                  Y: np.ndarray) -> tuple[float, Grads]:
    """Mean cross-entropy and its analytic gradient for a one-hot batch.

    d(loss)/d(logits) = (softmax - onehot) / n, hence dW = X^T d and
    db = sum(d).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] == 0:
        raise LearnerError("empty batch")
    if Y.shape != (X.shape[0], N_CLASSES):
        raise LearnerError(f"one-hot labels must be ({X.shape[0]}, {N_CLASSES}), "
                           f"got {Y.shape}")
    logits = X @ model.weights + model.bias
    zmax = logits.max(axis=1, keepdims=True)
    z = logits - zmax
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    loss = float(-(Y * log_probs).sum() / X.shape[0])
    d_logits = (np.exp(log_probs) - Y) / X.shape[0]
    return loss, Grads(weights=X.T @ d_logits, bias=d_logits.sum(axis=0))


def predict(model: BaselineModel, X: np.ndarray) -> np.ndarray:
    """Argmax class indices; ties break toward the lowest class index."""
    return forward(model, X).argmax(axis=1)


def one_hot(y: np.ndarray) -> np.ndarray:
    return np.eye(N_CLASSES, dtype=np.float64)[np.asarray(y, dtype=np.int64)]


class TrainerHandle(Protocol):
    """Session contract shared by the baseline and external trainers.

    train() returns macro-F1 on the eval split; pause()/resume() must
    preserve the learning state so training continues as if uninterrupted.
    """

    def init(self, config: TrainConfig) -> None: ...
    def train(self, epochs: int) -> float: ...
    def evaluate_test(self) -> metrics.EvalReport: ...
    def pause(self) -> str: ...
    def resume(self, token: str) -> None: ...
    def shutdown(self) -> None: ...


def _encode_array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape),
            "data": base64.b64encode(a.astype("<f8").tobytes()).decode("ascii")}


def _decode_array(d: dict) -> np.ndarray:
    a = np.frombuffer(base64.b64decode(d["data"]), dtype="<f8")
    return a.reshape(d["shape"]).astype(np.float64)


class BaselineTrainer:
    """TrainerHandle over shared feature matrices.

    Holds row indices into a shared (X, y) store rather than copies, so many
    concurrent handles stay cheap. One handle is single-threaded.
    """

    def __init__(self, X: np.ndarray, y: np.ndarray,
                 train_rows: np.ndarray, eval_rows: np.ndarray,
                 test_rows: np.ndarray, pool_factor: int = 4):
        self._X = X
        self._y = np.asarray(y, dtype=np.int64)
        self._train_rows = np.asarray(train_rows, dtype=np.int64)
        self._eval_rows = np.asarray(eval_rows, dtype=np.int64)
        self._test_rows = np.asarray(test_rows, dtype=np.int64)
        self._pool_factor = pool_factor
        self._config: TrainConfig | None = None
        self._model: BaselineModel | None = None
        self._epoch = 0

    def _require_init(self):
        if self._model is None or self._config is None:
            raise LearnerError("trainer not initialized")

    def init(self, config: TrainConfig) -> None:
        self._config = config
        self._model = init_model(self._X.shape[1], pool_factor=self._pool_factor,
                                 seed=config.seed)
        self._epoch = 0

    def train(self, epochs: int) -> float:
        self._require_init()
        if epochs < 0:
            raise LearnerError("epochs must be >= 0")
        model, cfg = self._model, self._config
        for _ in range(epochs):
            order = rng_for(cfg.seed, "epoch", self._epoch).permutation(
                len(self._train_rows))
            rows = self._train_rows[order]
            for start in range(0, len(rows), cfg.batch_size):
                batch = rows[start:start + cfg.batch_size]
                _, g = loss_and_grad(model, self._X[batch], one_hot(self._y[batch]))
                model.weights -= cfg.learning_rate * g.weights
                model.bias -= cfg.learning_rate * g.bias
            self._epoch += 1
        return self._eval_macro_f1()

    def _eval_macro_f1(self) -> float:
        preds = predict(self._model, self._X[self._eval_rows])
        cm = metrics.confusion(self._y[self._eval_rows], preds)
        return metrics.evaluate(cm).macro_f1

    def training_loss(self) -> float:
        """Mean cross-entropy over the full training rows (diagnostic)."""
        self._require_init()
        loss, _ = loss_and_grad(self._model, self._X[self._train_rows],
                                one_hot(self._y[self._train_rows]))
        return loss

    def evaluate_test(self) -> metrics.EvalReport:
        self._require_init()
        preds = predict(self._model, self._X[self._test_rows])
        cm = metrics.confusion(self._y[self._test_rows], preds)
        return metrics.evaluate(cm)

    def pause(self) -> str:
        """Versioned JSON checkpoint: parameters, config (seed state) and epoch."""
        self._require_init()
        return json.dumps({
            "version": CHECKPOINT_VERSION,
            "epoch": self._epoch,
            "config": {"learning_rate": self._config.learning_rate,
                       "batch_size": self._config.batch_size,
                       "seed": self._config.seed},
            "pool_factor": self._model.pool_factor,
            "model_seed": self._model.seed,
            "weights": _encode_array(self._model.weights),
            "bias": _encode_array(self._model.bias),
        })

    def resume(self, token: str) -> None:
        state = json.loads(token)
        if state.get("version") != CHECKPOINT_VERSION:
            raise LearnerError(f"unsupported checkpoint version {state.get('version')}")
        self._config = TrainConfig(**state["config"])
        self._model = BaselineModel(weights=_decode_array(state["weights"]),
                                    bias=_decode_array(state["bias"]),
                                    pool_factor=state["pool_factor"],
                                    seed=state["model_seed"])
        self._epoch = int(state["epoch"])

    def shutdown(self) -> None:
        self._model = None
        self._config = None

    @property
    def model(self) -> BaselineModel:
        self._require_init()
        return self._model

    @property
    def epochs_trained(self) -> int:
        return self._epoch


def gradient_check(n_draws: int = 20, seed: int = 0, n_features: int = 12,
                   batch_size: int = 5, epsilon: float = 1e-5) -> float:
    """Max relative error of the analytic gradient vs central finite differences.

    Runs n_draws random (model, batch) draws; the relative error per parameter
    is |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
    """
    worst = 0.0
    for draw in range(n_draws):
        rng = rng_for(seed, "gradcheck", draw)
        model = BaselineModel(weights=rng.normal(0, 1, (n_features, N_CLASSES)),
                              bias=rng.normal(0, 1, N_CLASSES))
        X = rng.normal(0, 1, (batch_size, n_features))
        Y = one_hot(rng.integers(0, N_CLASSES, batch_size))
        _, g = loss_and_grad(model, X, Y)
        analytic = np.concatenate([g.weights.ravel(), g.bias.ravel()])

        flat = np.concatenate([model.weights.ravel(), model.bias.ravel()])
        numeric = np.empty_like(flat)
        n_w = model.weights.size

        def loss_at(params: np.ndarray) -> float:
            m = BaselineModel(weights=params[:n_w].reshape(model.weights.shape),
                              bias=params[n_w:])
            return loss_and_grad(m, X, Y)[0]

        for i in range(flat.size):
            bumped = flat.copy()
            bumped[i] += epsilon
            hi = loss_at(bumped)
            bumped[i] -= 2 * epsilon
            lo = loss_at(bumped)
            numeric[i] = (hi - lo) / (2 * epsilon)

        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
        worst = max(worst, float((np.abs(analytic - numeric) / denom).max()))
    return worst
