"""From-scratch fully-connected Q-network.

A plain multi-layer perceptron in double precision: rectified-linear hidden
layers, an affine output layer with one value per action, mean-squared-error
loss and vanilla stochastic gradient descent. A second parameter set can be
kept as a periodically synchronized target network for bootstrap values.
Parameters serialize to a flat binary format for checkpoint and resume.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DivergenceError(RuntimeError):
    """Raised when a training step produces a non-finite loss."""


@dataclass(eq=False)
class QNetworkParams:
    """Weights and biases of the perceptron.

    ``weights[u]`` has shape (layer_sizes[u+1], layer_sizes[u]) and
    ``biases[u]`` has shape (layer_sizes[u+1],).
    """

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]


def init(layer_sizes, rng_seed) -> QNetworkParams:
    """He-style initialization: Gaussian weights with std sqrt(2/fan_in), zero biases."""
    sizes = tuple(int(n) for n in layer_sizes)
    if len(sizes) < 2 or any(n < 1 for n in sizes):
        raise ValueError(f"layer_sizes needs >= 2 positive entries, got {layer_sizes}")
    rng = np.random.default_rng(rng_seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return QNetworkParams(layer_sizes=sizes, weights=weights, biases=biases)


def forward(params: QNetworkParams, state) -> np.ndarray:
    """Q-values for one state (1-D input) or a batch of states (2-D input).

    Hidden layers alternate affine maps with rectified-linear activations;
    the output layer is affine with no activation.
    """
    x = np.asarray(state, dtype=np.float64)
    single = x.ndim == 1
    a = np.atleast_2d(x)
    if a.shape[1] != params.input_dim:
        raise ValueError(f"state dim {a.shape[1]} != network input dim {params.input_dim}")
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        a = np.maximum(a @ w.T + b, 0.0)
    out = a @ params.weights[-1].T + params.biases[-1]
    return out[0] if single else out


def train_step(params: QNetworkParams, states, targets, learning_rate: float) -> float:
    """One SGD step on the minibatch MSE.

    The loss is the mean over the minibatch of the per-sample mean squared
    error across all outputs. Gradients are exact backpropagation and the
    update is plain theta <- theta - learning_rate * grad, applied in place.

    Returns:
        The minibatch loss before the update.

    Raises:
        DivergenceError: On a non-finite loss; the step is aborted and no
            parameter is modified.
    """
    x = np.atleast_2d(np.asarray(states, dtype=np.float64))
    t = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("minibatch must be non-empty")
    if x.shape[0] != t.shape[0]:
        raise ValueError("states and targets must have equal batch size")
    if t.shape[1] != params.output_dim:
        raise ValueError(f"target dim {t.shape[1]} != network output dim {params.output_dim}")

    # overflow on a diverging run is the signal we detect, not an accident
    with np.errstate(over="ignore", invalid="ignore"):
        activations = [x]
        for w, b in zip(params.weights[:-1], params.biases[:-1]):
            activations.append(np.maximum(activations[-1] @ w.T + b, 0.0))
        pred = activations[-1] @ params.weights[-1].T + params.biases[-1]
        err = pred - t
        loss = float(np.mean(err**2))
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite training loss {loss}; step aborted")

        delta = (2.0 / err.size) * err
        grads_w = [np.empty(0)] * len(params.weights)
        grads_b = [np.empty(0)] * len(params.biases)
        for u in reversed(range(len(params.weights))):
            grads_w[u] = delta.T @ activations[u]
            grads_b[u] = delta.sum(axis=0)
            if u > 0:
                delta = (delta @ params.weights[u]) * (activations[u] > 0.0)

        for w, b, gw, gb in zip(params.weights, params.biases, grads_w, grads_b):
            w -= learning_rate * gw
            b -= learning_rate * gb
    return loss


def sync_target(online: QNetworkParams) -> QNetworkParams:
    """Deep copy of the online parameters, isolated from later updates."""
    return QNetworkParams(
        layer_sizes=online.layer_sizes,
        weights=[w.copy() for w in online.weights],
        biases=[b.copy() for b in online.biases],
    )


def predict_topk(params: QNetworkParams, state, k: int) -> np.ndarray:
    """Indices of the k largest Q-values, ties broken by the lowest index."""
    q = forward(params, np.asarray(state))
    if q.ndim != 1:
        raise ValueError("predict_topk expects a single state")
    if not 1 <= k <= q.size:
        raise ValueError(f"k must be in [1, {q.size}], got {k}")
    order = np.argsort(-q, kind="stable")
    return order[:k]


def save_params(params: QNetworkParams, path) -> None:
    """Write parameters as little-endian int64 header plus row-major float64 data."""
    with open(path, "wb") as fh:
        header = np.asarray((len(params.layer_sizes),) + params.layer_sizes, dtype="<i8")
        fh.write(header.tobytes())
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_params(path) -> QNetworkParams:
    """Read parameters written by :func:`save_params`."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError("truncated checkpoint: missing header")
    count = int(np.frombuffer(raw, dtype="<i8", count=1)[0])
    if count < 2 or len(raw) < 8 * (1 + count):
        raise ValueError("malformed checkpoint header")
    sizes = tuple(int(n) for n in np.frombuffer(raw, dtype="<i8", count=count, offset=8))
    if any(n < 1 for n in sizes):
        raise ValueError(f"malformed checkpoint: invalid layer sizes {sizes}")
    offset = 8 * (1 + count)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(raw, dtype="<f8", count=fan_out * fan_in, offset=offset)
        offset += 8 * fan_out * fan_in
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        if w.size != fan_out * fan_in or b.size != fan_out:
            raise ValueError("truncated checkpoint data")
        weights.append(w.reshape(fan_out, fan_in).copy())
        biases.append(b.copy())
    if offset != len(raw):
        raise ValueError("checkpoint has trailing bytes")
    return QNetworkParams(layer_sizes=sizes, weights=weights, biases=biases)
