"""
One-hidden-layer tanh regressor trained by mini-batch Adam.

Shared by the load forecaster and the plant surrogate. Inputs and targets
are standardized with stats stored next to the weights, so a fitted
regressor maps raw features to raw targets.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from chillopt.errors import ConfigError, ModelError
from chillopt.logger import get_logger
from chillopt.rng import derive_rng

logger = get_logger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class RegressorParams:
    hidden: int = 32
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 500
    tolerance: float = 1e-4
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 1 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("hidden, batch_size, max_epochs and patience must be positive", key="regressor")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive", key="learning_rate")


class Standardizer:
    """Per-column (x - mean) / scale. Constant columns keep scale 1 and are flagged."""

    def __init__(self, mean: np.ndarray, scale: np.ndarray, degenerate: np.ndarray):
        self.mean = np.asarray(mean, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self.degenerate = np.asarray(degenerate, dtype=bool)

    @classmethod
    def fit(cls, data: np.ndarray, weights: Optional[np.ndarray] = None) -> "Standardizer":
        data = np.asarray(data, dtype=float)
        mean = np.average(data, axis=0, weights=weights)
        variance = np.average((data - mean) ** 2, axis=0, weights=weights)
        scale = np.sqrt(variance)
        degenerate = scale < 1e-12
        scale = np.where(degenerate, 1.0, scale)
        return cls(mean, scale, degenerate)

    def transform(self, data: np.ndarray) -> np.ndarray:
        return (np.asarray(data, dtype=float) - self.mean) / self.scale

    def inverse_transform(self, data: np.ndarray) -> np.ndarray:
        return np.asarray(data, dtype=float) * self.scale + self.mean

    def to_dict(self) -> Dict[str, List]:
        return {
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "degenerate": self.degenerate.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, List]) -> "Standardizer":
        return cls(np.array(data["mean"]), np.array(data["scale"]), np.array(data["degenerate"]))


class MLP:
    """x -> tanh(x W1 + b1) W2 + b2."""

    PARAM_NAMES = ("w1", "b1", "w2", "b2")

    def __init__(self, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray):
        self.w1 = np.asarray(w1, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)
        self.b2 = np.asarray(b2, dtype=float)

    @classmethod
    def initialize(cls, n_inputs: int, n_outputs: int, hidden: int, rng: np.random.Generator) -> "MLP":
        # Glorot uniform
        limit1 = np.sqrt(6.0 / (n_inputs + hidden))
        limit2 = np.sqrt(6.0 / (hidden + n_outputs))
        return cls(
            w1=rng.uniform(-limit1, limit1, size=(n_inputs, hidden)),
            b1=np.zeros(hidden),
            w2=rng.uniform(-limit2, limit2, size=(hidden, n_outputs)),
            b2=np.zeros(n_outputs),
        )

    @property
    def n_inputs(self) -> int:
        return self.w1.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.w2.shape[1]

    def parameters(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.PARAM_NAMES}

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.tanh(x @ self.w1 + self.b1) @ self.w2 + self.b2

    def loss_and_grads(
        self, x: np.ndarray, y: np.ndarray, weights: Optional[np.ndarray] = None
    ) -> tuple[float, Dict[str, np.ndarray]]:
        """Weighted mean squared error over rows and outputs, with its gradients."""
        if weights is None:
            weights = np.ones(len(x))
        norm = float(weights.sum()) * y.shape[1]
        hidden = np.tanh(x @ self.w1 + self.b1)
        residual = hidden @ self.w2 + self.b2 - y
        loss = float(np.sum(weights[:, None] * residual**2) / norm)

        d_out = 2.0 * weights[:, None] * residual / norm
        d_hidden = (d_out @ self.w2.T) * (1.0 - hidden**2)
        grads = {
            "w2": hidden.T @ d_out,
            "b2": d_out.sum(axis=0),
            "w1": x.T @ d_hidden,
            "b1": d_hidden.sum(axis=0),
        }
        return loss, grads

    def copy(self) -> "MLP":
        return MLP(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def to_dict(self) -> Dict[str, List]:
        return {name: value.tolist() for name, value in self.parameters().items()}

    @classmethod
    def from_dict(cls, data: Dict[str, List]) -> "MLP":
        try:
            return cls(*(np.array(data[name], dtype=float) for name in cls.PARAM_NAMES))
        except KeyError as exc:
            raise ModelError(f"model document is missing weights '{exc.args[0]}'") from exc


class Adam:
    def __init__(self, model: MLP, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.model = model
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(value) for name, value in model.parameters().items()}
        self.v = {name: np.zeros_like(value) for name, value in model.parameters().items()}

    def step(self, grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, param in self.model.parameters().items():
            grad = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad**2
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def gradient_check(
    model: MLP,
    x: np.ndarray,
    y: np.ndarray,
    weights: Optional[np.ndarray] = None,
    eps: float = 1e-6,
) -> float:
    """Largest relative gap between analytic and central-difference gradients."""
    _, analytic = model.loss_and_grads(x, y, weights)
    worst = 0.0
    for name, param in model.parameters().items():
        numeric = np.zeros_like(param)
        for index in np.ndindex(param.shape):
            saved = param[index]
            param[index] = saved + eps
            plus, _ = model.loss_and_grads(x, y, weights)
            param[index] = saved - eps
            minus, _ = model.loss_and_grads(x, y, weights)
            param[index] = saved
            numeric[index] = (plus - minus) / (2 * eps)
        scale = np.linalg.norm(analytic[name]) + np.linalg.norm(numeric)
        gap = np.linalg.norm(analytic[name] - numeric) / max(scale, 1e-12)
        worst = max(worst, float(gap))
    return worst


@dataclass
class FittedRegressor:
    model: MLP
    x_scaler: Standardizer
    y_scaler: Standardizer
    params: RegressorParams
    epochs: int = 0
    final_loss: float = float("nan")
    converged: bool = False
    loss_history: List[float] = field(default_factory=list)

    @property
    def n_inputs(self) -> int:
        return self.model.n_inputs

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Raw features (n, d) -> raw targets (n, outputs)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_inputs:
            raise ModelError(f"dimension mismatch: expected {self.n_inputs} inputs, got {x.shape[1]}")
        return self.y_scaler.inverse_transform(self.model.forward(self.x_scaler.transform(x)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "weights": self.model.to_dict(),
            "x_scaler": self.x_scaler.to_dict(),
            "y_scaler": self.y_scaler.to_dict(),
            "params": asdict(self.params),
            "epochs": self.epochs,
            "final_loss": self.final_loss,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FittedRegressor":
        return cls(
            model=MLP.from_dict(data["weights"]),
            x_scaler=Standardizer.from_dict(data["x_scaler"]),
            y_scaler=Standardizer.from_dict(data["y_scaler"]),
            params=RegressorParams(**data["params"]),
            epochs=int(data.get("epochs", 0)),
            final_loss=float(data.get("final_loss", float("nan"))),
            converged=bool(data.get("converged", False)),
        )


def _has_converged(losses: List[float], params: RegressorParams) -> bool:
    if losses[-1] < 1e-12:
        return True
    if len(losses) <= params.patience:
        return False
    before = losses[-1 - params.patience]
    return (before - losses[-1]) / max(before, 1e-12) < params.tolerance


def fit_regressor(
    x: np.ndarray,
    y: np.ndarray,
    params: RegressorParams = RegressorParams(),
    sample_weight: Optional[np.ndarray] = None,
    label: str = "regressor",
) -> FittedRegressor:
    """Seeded mini-batch training until the loss stops improving or max_epochs."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if len(x) == 0 or len(x) != len(y):
        raise ModelError(f"training data has {len(x)} feature rows and {len(y)} target rows")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ModelError("training data contains non-finite values")
    weights = np.ones(len(x)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if weights.shape != (len(x),) or (weights < 0).any() or weights.sum() <= 0:
        raise ModelError("sample weights must be non-negative, one per row, with a positive sum")

    x_scaler = Standardizer.fit(x, weights)
    y_scaler = Standardizer.fit(y, weights)
    if x_scaler.degenerate.any():
        logger.warning(f"{label}: constant input columns {np.flatnonzero(x_scaler.degenerate).tolist()} kept as-is")
    xs = x_scaler.transform(x)
    ys = y_scaler.transform(y)

    model = MLP.initialize(x.shape[1], y.shape[1], params.hidden, derive_rng(params.seed, label, "init"))
    optimizer = Adam(model, lr=params.learning_rate)
    shuffle = derive_rng(params.seed, label, "shuffle")

    logger.info(f"Training {label}: {len(x)} rows, {x.shape[1]} inputs, {y.shape[1]} outputs")
    losses: List[float] = []
    converged = False
    for epoch in range(1, params.max_epochs + 1):
        order = shuffle.permutation(len(x))
        total = 0.0
        for begin in range(0, len(order), params.batch_size):
            batch = order[begin : begin + params.batch_size]
            if weights[batch].sum() <= 0:
                continue
            loss, grads = model.loss_and_grads(xs[batch], ys[batch], weights[batch])
            if not np.isfinite(loss):
                raise ModelError(
                    f"{label} diverged at epoch {epoch}; try lowering learning_rate (now {params.learning_rate})"
                )
            optimizer.step(grads)
            total += loss * weights[batch].sum()
        losses.append(total / weights.sum())
        logger.debug(f"{label} epoch {epoch}: loss {losses[-1]:.6g}")
        if _has_converged(losses, params):
            converged = True
            break

    logger.info(
        f"{label} {'converged' if converged else 'stopped at max_epochs'} after {len(losses)} epochs, "
        f"loss {losses[-1]:.6g}"
    )
    return FittedRegressor(
        model=model,
        x_scaler=x_scaler,
        y_scaler=y_scaler,
        params=params,
        epochs=len(losses),
        final_loss=losses[-1],
        converged=converged,
        loss_history=losses,
    )


def write_model_document(path: str | os.PathLike, kind: str, payload: Dict[str, Any]) -> None:
    document = {"format_version": FORMAT_VERSION, "kind": kind, **payload}
    with open(path, "w", encoding="utf-8") as file:
        json.dump(document, file)
        file.write("\n")


def read_model_document(path: str | os.PathLike, kind: str) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as file:
            document = json.load(file)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read model document {path}: {exc}") from exc
    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelError(f"model format version {version} does not match supported version {FORMAT_VERSION}")
    if document.get("kind") != kind:
        raise ModelError(f"{path} holds a '{document.get('kind')}' model, expected '{kind}'")
    return document
