"""Client models: a linear or one-hidden-layer tanh network with closed-form
gradients, and the proximal local SGD update.

Parameter layout is layer by layer, weights (row-major, ``fan_in x fan_out``)
then biases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError, DomainError
from .metrics import TaskMetrics, regression_metrics
from .numerics import RngStream, as_param_vector

CLASSIFICATION = "classification"
FORECASTING = "forecasting"


@dataclass(frozen=True)
class ModelSpec:
    task: str
    input_dim: int
    output_dim: int
    hidden_dim: int = 0
    activation: str = "tanh"

    def __post_init__(self):
        if self.task not in (CLASSIFICATION, FORECASTING):
            raise DomainError(f"unknown task {self.task!r}")
        if self.input_dim < 1 or self.output_dim < 1 or self.hidden_dim < 0:
            raise DomainError("model dimensions must be positive")
        if self.task == CLASSIFICATION and self.output_dim < 2:
            raise DomainError("classification needs at least 2 classes")
        if self.activation != "tanh":
            raise DomainError(f"unsupported activation {self.activation!r}")

    @property
    def n_params(self) -> int:
        i, h, o = self.input_dim, self.hidden_dim, self.output_dim
        if h == 0:
            return i * o + o
        return i * h + h + h * o + o

    @property
    def classify(self) -> bool:
        return self.task == CLASSIFICATION


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Model:
    spec: ModelSpec
    params: np.ndarray

    def __post_init__(self):
        params = as_param_vector(self.params)
        if params.size != self.spec.n_params:
            raise DimensionError(
                f"expected {self.spec.n_params} parameters, got {params.size}"
            )
        object.__setattr__(self, "params", _frozen(params))

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Unflatten into ``[(W, b), ...]`` views."""
        s = self.spec
        dims = [s.input_dim, s.output_dim] if s.hidden_dim == 0 else [
            s.input_dim, s.hidden_dim, s.output_dim]
        out, off = [], 0
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = self.params[off : off + fan_in * fan_out].reshape(fan_in, fan_out)
            off += fan_in * fan_out
            b = self.params[off : off + fan_out]
            off += fan_out
            out.append((w, b))
        return out


def flatten(layers) -> np.ndarray:
    return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in layers])


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise DimensionError(f"inputs must be a non-empty matrix, got shape {x.shape}")
        y = np.asarray(self.targets)
        if y.shape[0] != x.shape[0]:
            raise DimensionError(f"{x.shape[0]} inputs but {y.shape[0]} targets")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def take(self, idx) -> "Batch":
        return Batch(self.inputs[idx], self.targets[idx])


def init_model(spec: ModelSpec, stream: RngStream) -> Model:
    """Scaled-normal weights (std ``1/sqrt(fan_in)``), zero biases."""
    layers = []
    dims = [spec.input_dim, spec.output_dim] if spec.hidden_dim == 0 else [
        spec.input_dim, spec.hidden_dim, spec.output_dim]
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = stream.normal((fan_in, fan_out)) / np.sqrt(fan_in)
        layers.append((w, np.zeros(fan_out)))
    return Model(spec, flatten(layers))


def _check(spec: ModelSpec, batch: Batch):
    if batch.inputs.shape[1] != spec.input_dim:
        raise DimensionError(
            f"batch has {batch.inputs.shape[1]} features, model expects {spec.input_dim}"
        )
    y = batch.targets
    if spec.classify:
        if y.ndim != 1 or not np.issubdtype(y.dtype, np.integer):
            raise DimensionError("classification targets must be a vector of integer labels")
        if y.min() < 0 or y.max() >= spec.output_dim:
            raise DimensionError(f"labels must lie in [0, {spec.output_dim})")
        return y.astype(np.int64, copy=False)
    if y.ndim != 2 or y.shape[1] != spec.output_dim:
        raise DimensionError(
            f"forecast targets must be (batch, {spec.output_dim}), got {y.shape}"
        )
    return y.astype(np.float64, copy=False)


def _loss_grad(params, spec, batch, need_grad):
    y = _check(spec, batch)
    return kernels.loss_grad(
        params, batch.inputs, y, spec.input_dim, spec.hidden_dim, spec.output_dim,
        spec.classify, need_grad,
    )


def predict(model: Model, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    s = model.spec
    if x.ndim != 2 or x.shape[1] != s.input_dim:
        raise DimensionError(f"inputs must be (n, {s.input_dim}), got {x.shape}")
    return kernels.predict(model.params, x, s.input_dim, s.hidden_dim, s.output_dim, s.classify)


def forward_loss(model: Model, batch: Batch) -> tuple[float, np.ndarray]:
    """Mean cross-entropy (classification) or mean squared error (forecasting),
    together with the class probabilities or real-valued predictions."""
    loss, _ = _loss_grad(model.params, model.spec, batch, need_grad=False)
    return loss, predict(model, batch.inputs)


def grad(model: Model, batch: Batch) -> np.ndarray:
    return _loss_grad(model.params, model.spec, batch, need_grad=True)[1]


def loss_and_grad(model: Model, batch: Batch) -> tuple[float, np.ndarray]:
    return _loss_grad(model.params, model.spec, batch, need_grad=True)


def prox_update(params, data_grad, eta, lam_w, w_global, lam_u, u_personal) -> np.ndarray:
    """``v - eta * (g + lam_w (v - w) + lam_u (v - u))``: the gradient step on
    ``F + lam_w/2 |v-w|^2 + lam_u/2 |v-u|^2``."""
    v = np.asarray(params, dtype=np.float64)
    total = data_grad + lam_w * (v - w_global) + lam_u * (v - u_personal)
    return v - eta * total


def local_sgd_step(model: Model, batch: Batch, eta: float, lam: float, w_global, u_personal,
                   *, lam_u: float | None = None) -> Model:
    """One proximal SGD step. ``lam`` weights both anchors unless ``lam_u``
    overrides the weight on the personalized anchor."""
    if eta < 0 or lam < 0 or (lam_u is not None and lam_u < 0):
        raise DomainError("eta and lambda must be non-negative")
    w_global = as_param_vector(w_global)
    u_personal = as_param_vector(u_personal)
    n = model.spec.n_params
    if w_global.size != n or u_personal.size != n:
        raise DimensionError(f"anchor vectors must have length {n}")
    g = grad(model, batch)
    new = prox_update(model.params, g, eta, lam, w_global, lam if lam_u is None else lam_u,
                      u_personal)
    return Model(model.spec, new)


def accuracy(model: Model, batch: Batch) -> float:
    """Fraction of correct argmax predictions; ties go to the lowest class."""
    y = _check(model.spec, batch)
    probs = predict(model, batch.inputs)
    return float(np.mean(np.argmax(probs, axis=1) == y))


def evaluate(model: Model, batch: Batch, norm: tuple[float, float] = (0.0, 1.0)) -> TaskMetrics:
    """Classification accuracy (percent) or forecasting MAE/RMSE/MAPE.

    ``norm`` is the ``(mean, std)`` used to z-score the forecasting data; both
    predictions and targets are mapped back before the errors are computed.
    """
    if model.spec.classify:
        return TaskMetrics(accuracy=100.0 * accuracy(model, batch))
    y = _check(model.spec, batch)
    mean, std = norm
    pred = predict(model, batch.inputs) * std + mean
    return regression_metrics(pred.ravel(), (y * std + mean).ravel())
