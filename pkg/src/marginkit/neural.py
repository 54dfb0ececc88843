"""Single-hidden-layer perceptrons trained with resilient backpropagation.

Weights are stored per layer as ``(fan_out, fan_in + 1)`` matrices with the
bias in the last column. Flattened parameter vectors always list the hidden
layer row-major first, then the output layer row-major.

Training minimises the mean squared error averaged over samples and output
units, using the iRprop- update: only gradient signs are used, step sizes grow
by ``eta_plus`` while the sign holds and shrink by ``eta_minus`` on a sign
flip, after which that gradient component is zeroed for one epoch.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.special import expit

SIGMOID = "sigmoid"
BIPOLAR = "bipolar"
ACTIVATIONS = (SIGMOID, BIPOLAR)

UNIFORM = "uniform"
NGUYEN_WIDROW = "nguyen-widrow"

FORMAT_TAG = "marginkit-mlp"
FORMAT_VERSION = 1


@dataclass
class MlpModel:
    input_dim: int
    hidden_count: int
    output_dim: int
    hidden_weights: np.ndarray
    output_weights: np.ndarray
    activation: str = SIGMOID

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.hidden_weights = np.asarray(self.hidden_weights, dtype=float)
        self.output_weights = np.asarray(self.output_weights, dtype=float)
        if self.hidden_weights.shape != (self.hidden_count, self.input_dim + 1):
            raise ValueError("hidden_weights must be h x (n + 1)")
        if self.output_weights.shape != (self.output_dim, self.hidden_count + 1):
            raise ValueError("output_weights must be m x (h + 1)")
        if not (np.all(np.isfinite(self.hidden_weights)) and np.all(np.isfinite(self.output_weights))):
            raise ValueError("weights must be finite")

    @property
    def weight_count(self) -> int:
        return self.hidden_weights.size + self.output_weights.size

    @property
    def output_range(self) -> Tuple[float, float]:
        return (0.0, 1.0) if self.activation == SIGMOID else (-1.0, 1.0)


@dataclass(frozen=True)
class RpropConfig:
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    delta_init: float = 0.1
    delta_min: float = 1e-6
    delta_max: float = 50.0
    max_epochs: int = 1000
    mse_tolerance: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not self.eta_plus > 1:
            raise ValueError("eta_plus must be > 1")
        if not 0 < self.eta_minus < 1:
            raise ValueError("eta_minus must lie in (0, 1)")
        if not 0 < self.delta_min <= self.delta_init <= self.delta_max:
            raise ValueError("need 0 < delta_min <= delta_init <= delta_max")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if not self.mse_tolerance > 0:
            raise ValueError("mse_tolerance must be > 0")


@dataclass
class TrainReport:
    epochs_run: int = 0
    final_mse: float = math.nan
    mse_trace: List[float] = field(default_factory=list)
    converged: bool = False
    step_trace: Optional[List[np.ndarray]] = None


def _activate(z, activation):
    if activation == SIGMOID:
        return expit(z)
    return np.tanh(0.5 * z)


def _activation_slope(y, activation):
    """Derivative of the activation expressed through its output."""
    if activation == SIGMOID:
        return y * (1.0 - y)
    return 0.5 * (1.0 - y * y)


def _check_dims(dims):
    n, h, m = (int(d) for d in dims)
    if min(n, h, m) < 1:
        raise ValueError("layer sizes must all be >= 1")
    return n, h, m


def init_uniform(dims, weight_range: float = 0.5, seed: int = 0, activation: str = SIGMOID) -> MlpModel:
    """Every weight i.i.d. uniform on ``[-weight_range, weight_range]``."""
    if not weight_range > 0:
        raise ValueError("weight_range must be > 0")
    n, h, m = _check_dims(dims)
    rng = np.random.default_rng(seed)
    return MlpModel(n, h, m,
                    rng.uniform(-weight_range, weight_range, size=(h, n + 1)),
                    rng.uniform(-weight_range, weight_range, size=(m, h + 1)),
                    activation)


def nguyen_widrow_scale(n: int, h: int) -> float:
    return 0.7 * h ** (1.0 / n)


def init_nguyen_widrow(dims, seed: int = 0, activation: str = SIGMOID) -> MlpModel:
    """Nguyen-Widrow initialisation.

    Each hidden neuron's input weights are drawn uniform on [-1, 1] and
    rescaled to Euclidean norm ``beta = 0.7 * h ** (1 / n)``; hidden biases are
    uniform on ``[-beta, beta]``; the output layer is uniform on [-0.5, 0.5].
    """
    n, h, m = _check_dims(dims)
    rng = np.random.default_rng(seed)
    beta = nguyen_widrow_scale(n, h)
    w = rng.uniform(-1.0, 1.0, size=(h, n))
    norms = np.linalg.norm(w, axis=1, keepdims=True)
    # a zero row has no direction to rescale; redraw is vanishingly rare
    while np.any(norms == 0):
        zero = norms[:, 0] == 0
        w[zero] = rng.uniform(-1.0, 1.0, size=(int(zero.sum()), n))
        norms = np.linalg.norm(w, axis=1, keepdims=True)
    w = beta * w / norms
    bias = rng.uniform(-beta, beta, size=(h, 1))
    out = rng.uniform(-0.5, 0.5, size=(m, h + 1))
    return MlpModel(n, h, m, np.hstack([w, bias]), out, activation)


def _propagate(model, X):
    hidden = _activate(X @ model.hidden_weights[:, :-1].T + model.hidden_weights[:, -1], model.activation)
    out = _activate(hidden @ model.output_weights[:, :-1].T + model.output_weights[:, -1], model.activation)
    return hidden, out


def _as_batch(model, inputs):
    X = np.asarray(inputs, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.input_dim or len(X) == 0:
        raise ValueError(f"inputs must be a non-empty (batch, {model.input_dim}) array, got {X.shape}")
    return X


def forward(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) != model.input_dim:
        raise ValueError(f"expected an input of length {model.input_dim}, got shape {x.shape}")
    return _propagate(model, x[None, :])[1][0]


def forward_batch(model: MlpModel, inputs) -> np.ndarray:
    return _propagate(model, _as_batch(model, inputs))[1]


def flatten_weights(model: MlpModel) -> np.ndarray:
    return np.concatenate([model.hidden_weights.ravel(), model.output_weights.ravel()])


def with_weights(model: MlpModel, theta) -> MlpModel:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.weight_count,):
        raise ValueError(f"expected {model.weight_count} weights, got {theta.shape}")
    split = model.hidden_weights.size
    return replace(model,
                   hidden_weights=theta[:split].reshape(model.hidden_weights.shape).copy(),
                   output_weights=theta[split:].reshape(model.output_weights.shape).copy())


def _check_targets(model, targets, batch):
    T = np.asarray(targets, dtype=float)
    if T.ndim == 1 and model.output_dim == 1 and len(T) == batch:
        T = T[:, None]
    if T.shape != (batch, model.output_dim):
        raise ValueError(f"targets must have shape ({batch}, {model.output_dim}), got {T.shape}")
    lo, hi = model.output_range
    if np.any(T < lo) or np.any(T > hi):
        raise ValueError(f"targets must lie within the activation range [{lo}, {hi}]")
    return T


def mse_and_gradient(model: MlpModel, inputs, targets):
    """Batch MSE and its gradient, flattened hidden-layer first."""
    X = _as_batch(model, inputs)
    T = _check_targets(model, targets, len(X))
    hidden, out = _propagate(model, X)
    diff = out - T
    mse = float(np.mean(diff * diff))
    d_out = (2.0 / diff.size) * diff * _activation_slope(out, model.activation)
    g_out = np.hstack([d_out.T @ hidden, d_out.sum(axis=0)[:, None]])
    d_hidden = (d_out @ model.output_weights[:, :-1]) * _activation_slope(hidden, model.activation)
    g_hidden = np.hstack([d_hidden.T @ X, d_hidden.sum(axis=0)[:, None]])
    return mse, np.concatenate([g_hidden.ravel(), g_out.ravel()])


def backprop_gradient(model: MlpModel, inputs, targets) -> np.ndarray:
    """Gradient of the batch MSE with respect to every weight."""
    return mse_and_gradient(model, inputs, targets)[1]


def mse(model: MlpModel, inputs, targets) -> float:
    X = _as_batch(model, inputs)
    T = _check_targets(model, targets, len(X))
    diff = _propagate(model, X)[1] - T
    return float(np.mean(diff * diff))


def rprop_minimize(theta0, objective: Callable, config: RpropConfig,
                   callback: Optional[Callable] = None, record_steps: bool = False):
    """iRprop- on an arbitrary ``objective(theta) -> (loss, gradient)``.

    Each epoch applies one update using the gradient at the current point and
    then re-evaluates the loss. Stops when consecutive losses differ by less
    than ``mse_tolerance`` or after ``max_epochs`` updates. ``callback`` is
    called as ``callback(epoch, theta, loss)`` after every update.
    """
    theta = np.array(theta0, dtype=float)
    report = TrainReport(step_trace=[] if record_steps else None)
    if config.max_epochs == 0:
        report.final_mse, _ = objective(theta)
        return theta, report
    delta = np.full(theta.shape, config.delta_init)
    prev_sign = np.zeros(theta.shape)
    loss, grad = objective(theta)
    for epoch in range(1, config.max_epochs + 1):
        sign = np.sign(grad)
        agree = sign * prev_sign
        grow, flip = agree > 0, agree < 0
        delta[grow] = np.minimum(delta[grow] * config.eta_plus, config.delta_max)
        delta[flip] = np.maximum(delta[flip] * config.eta_minus, config.delta_min)
        sign[flip] = 0.0
        theta -= sign * delta
        prev_sign = sign
        if record_steps:
            report.step_trace.append(delta.copy())

        new_loss, grad = objective(theta)
        if not math.isfinite(new_loss):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}")
        report.mse_trace.append(new_loss)
        report.epochs_run = epoch
        if callback is not None:
            callback(epoch, theta, new_loss)
        # an epoch where every component flipped moves nothing; not a convergence
        moved = bool(np.any(sign))
        done = moved and abs(new_loss - loss) < config.mse_tolerance
        loss = new_loss
        if done:
            report.converged = True
            break
    report.final_mse = loss
    return theta, report


def rprop_train(model: MlpModel, inputs, targets, config: RpropConfig,
                callback=None, record_steps=False):
    """Full-batch Rprop on the training MSE; returns ``(trained_model, TrainReport)``."""
    X = _as_batch(model, inputs)
    T = _check_targets(model, targets, len(X))
    theta, report = rprop_minimize(
        flatten_weights(model),
        lambda th: mse_and_gradient(with_weights(model, th), X, T),
        config, callback=callback, record_steps=record_steps)
    return with_weights(model, theta), report


def one_of_c(labels, c: int, activation: str = SIGMOID, soft: bool = True) -> np.ndarray:
    """One-of-c target rows; ``soft`` uses 0.1/0.9 (or -0.9/0.9 for bipolar)."""
    labels = np.asarray(labels, dtype=int)
    if activation == SIGMOID:
        lo, hi = (0.1, 0.9) if soft else (0.0, 1.0)
    else:
        lo, hi = (-0.9, 0.9) if soft else (-1.0, 1.0)
    T = np.full((len(labels), c), lo)
    T[np.arange(len(labels)), labels] = hi
    return T


def mlp_classify(model: MlpModel, x, c: int) -> int:
    """Index of the largest output; ties go to the lowest index."""
    if model.output_dim != c:
        raise ValueError(f"model has {model.output_dim} outputs, expected {c}")
    return int(np.argmax(forward(model, x)))


def mlp_predict(model: MlpModel, inputs) -> np.ndarray:
    return np.argmax(forward_batch(model, inputs), axis=1)


def dumps_mlp(model: MlpModel) -> str:
    out = io.StringIO()
    out.write(f"{FORMAT_TAG} {FORMAT_VERSION}\n")
    out.write(f"{model.input_dim} {model.hidden_count} {model.output_dim} {model.activation}\n")
    for mat in (model.hidden_weights, model.output_weights):
        for row in mat:
            out.write(" ".join("%.17g" % v for v in row) + "\n")
    return out.getvalue()


def loads_mlp(text: str) -> MlpModel:
    lines = text.splitlines()
    try:
        tag, version = lines[0].split()
        if tag != FORMAT_TAG or int(version) != FORMAT_VERSION:
            raise ValueError(f"unsupported model header {lines[0]!r}")
        n, h, m, activation = lines[1].split()
        n, h, m = int(n), int(h), int(m)
        rows = [[float(t) for t in line.split()] for line in lines[2:2 + h + m]]
        hidden = np.array(rows[:h], dtype=float).reshape(h, n + 1)
        output = np.array(rows[h:h + m], dtype=float).reshape(m, h + 1)
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed MLP file: {exc}") from None
    return MlpModel(n, h, m, hidden, output, activation)


def save_mlp(model: MlpModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_mlp(model))


def load_mlp(path) -> MlpModel:
    with open(path) as fh:
        return loads_mlp(fh.read())


def is_mlp_file(path) -> bool:
    try:
        with open(path) as fh:
            return fh.readline().startswith(FORMAT_TAG)
    except (OSError, UnicodeDecodeError):
        return False
