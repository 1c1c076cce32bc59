"""Transmitter network, power normalization, channel, and receiver network.

The trainable system maps a message s in {0, ..., M-1} to a one-hot vector,
through the transmitter net to a complex symbol, normalizes the M-symbol
constellation to the average-power budget, sends it through the nonlinear
channel, and decodes the received sample with the receiver net whose
sigmoid outputs are normalized to a posterior over messages.

Default layer plan (overridable): the transmitter has 5 hidden tanh layers
of width M and a linear 2-neuron output; the receiver takes the 2 real
channel outputs through 6 hidden tanh layers of width M into a sigmoid
M-neuron output.

Training minimizes the batch-averaged cross-entropy (natural log) with
Adam, backpropagating through the receiver, the recorded channel tape, the
normalization scale, and the transmitter in one exact reverse pass.  The
normalization scale is treated as a differentiable function of the current
batch's M symbol powers, so the power constraint stays exact throughout
optimization.  Channel noise is sampled outside the differentiated path
and held fixed per backward pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field

import numpy as np

from fiberae.channel import (
    ChannelParams,
    backprop_channel,
    draw_noise,
    make_rng,
    propagate_tape,
    watts_from_dbm,
)
from fiberae.nets import (
    CROSS_ENTROPY_FLOOR,
    DenseLayer,
    DenseNetwork,
    adam_init,
    adam_step,
    backward,
    forward,
    network,
)

__all__ = [
    "AutoencoderModel",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "CheckpointError",
    "build_model",
    "encode",
    "constellation_points",
    "renormalize",
    "decode",
    "detect",
    "train",
    "batch_loss",
    "batch_loss_and_grads",
    "model_parameters",
    "set_model_parameters",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT = "fiberae-autoencoder-checkpoint"
CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Raised when the batch loss stops being finite."""


class CheckpointError(ValueError):
    """Raised for malformed, truncated, or wrong-version checkpoint files."""


@dataclass
class AutoencoderModel:
    tx: DenseNetwork
    rx: DenseNetwork
    norm_scale: float
    m: int
    params: ChannelParams
    input_power_w: float

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("need at least two messages")
        if self.tx.n_in != self.m or self.tx.n_out != 2:
            raise ValueError(f"transmitter must map {self.m} -> 2")
        if self.rx.n_in != 2 or self.rx.n_out != self.m:
            raise ValueError(f"receiver must map 2 -> {self.m}")
        if not self.input_power_w > 0:
            raise ValueError("input_power_w must be positive")
        if not self.norm_scale > 0:
            raise ValueError("norm_scale must be positive")

    def clone(self) -> "AutoencoderModel":
        return AutoencoderModel(
            tx=self.tx.clone(),
            rx=self.rx.clone(),
            norm_scale=self.norm_scale,
            m=self.m,
            params=self.params,
            input_power_w=self.input_power_w,
        )


def build_model(
    m: int,
    params: ChannelParams,
    input_power_w: float,
    seed: int,
    tx_hidden: int = 5,
    rx_hidden: int = 6,
    hidden_width: int | None = None,
) -> AutoencoderModel:
    """Glorot-initialized model with the default layer plan, then normalized."""
    width = m if hidden_width is None else hidden_width
    rng = make_rng(seed)
    tx = network(
        [m] + [width] * tx_hidden + [2],
        ["tanh"] * tx_hidden + ["linear"],
        rng,
    )
    rx = network(
        [2] + [width] * rx_hidden + [m],
        ["tanh"] * rx_hidden + ["sigmoid"],
        rng,
    )
    model = AutoencoderModel(
        tx=tx, rx=rx, norm_scale=1.0, m=m, params=params, input_power_w=input_power_w
    )
    renormalize(model)
    return model


def raw_symbols(model: AutoencoderModel) -> np.ndarray:
    """Unnormalized transmitter outputs for all M one-hot inputs, shape (M, 2)."""
    out, _ = forward(model.tx, np.eye(model.m))
    return out


def renormalize(model: AutoencoderModel) -> float:
    """Set norm_scale so the M-symbol constellation has mean power input_power_w."""
    raw = raw_symbols(model)
    mean_power = float(np.mean(np.sum(raw * raw, axis=1)))
    if mean_power == 0.0:
        raise ValueError("transmitter outputs have zero mean power, cannot normalize")
    model.norm_scale = float(np.sqrt(model.input_power_w / mean_power))
    return model.norm_scale


def constellation_points(model: AutoencoderModel) -> np.ndarray:
    """The M normalized complex symbols in message order."""
    raw = raw_symbols(model)
    return model.norm_scale * (raw[:, 0] + 1j * raw[:, 1])


def encode(model: AutoencoderModel, s: int) -> complex:
    """Map message s (0-based) to its normalized complex channel symbol."""
    if not 0 <= s < model.m:
        raise ValueError(f"message {s} outside 0..{model.m - 1}")
    one_hot = np.zeros(model.m)
    one_hot[s] = 1.0
    out, _ = forward(model.tx, one_hot)
    return complex(model.norm_scale * out[0], model.norm_scale * out[1])


def _rx_input_scale(model: AutoencoderModel) -> float:
    # receiver inputs are divided by sqrt(P_in) so first-layer activations are
    # O(1) at every operating power; a fixed reparameterization of the first
    # receiver layer, absorbed into the learned weights
    return 1.0 / np.sqrt(model.input_power_w)


def _posteriors(model: AutoencoderModel, y: np.ndarray):
    """Receiver posteriors for a complex sample array; returns (P, cache, sums)."""
    k = _rx_input_scale(model)
    rx_in = np.column_stack([k * y.real, k * y.imag])
    sig, cache = forward(model.rx, rx_in)
    sums = sig.sum(axis=1)
    # sigmoid outputs are strictly positive unless they underflow; fall back
    # to the uniform posterior for fully underflowed rows
    dead = sums == 0.0
    if np.any(dead):
        sig = sig.copy()
        sig[dead] = 1.0
        sums = sig.sum(axis=1)
    return sig / sums[:, None], cache, sums


def decode(model: AutoencoderModel, y):
    """Posterior over messages for one sample (M,) or a batch (n, M).

    Components are nonnegative and sum to 1 by construction.
    """
    arr = np.asarray(y, dtype=complex)
    scalar = arr.ndim == 0
    post, _, _ = _posteriors(model, np.atleast_1d(arr))
    return post[0] if scalar else post


def detect(model: AutoencoderModel, y):
    """argmax of the posterior; ties break to the lowest message index."""
    arr = np.asarray(y, dtype=complex)
    scalar = arr.ndim == 0
    post, _, _ = _posteriors(model, np.atleast_1d(arr))
    idx = np.argmax(post, axis=1)
    return int(idx[0]) if scalar else idx


def model_parameters(model: AutoencoderModel) -> list[np.ndarray]:
    """Transmitter parameters followed by receiver parameters."""
    return model.tx.parameters() + model.rx.parameters()


def set_model_parameters(model: AutoencoderModel, params: list[np.ndarray]) -> None:
    n_tx = 2 * len(model.tx.layers)
    model.tx.set_parameters(params[:n_tx])
    model.rx.set_parameters(params[n_tx:])


def _pipeline(model: AutoencoderModel, messages: np.ndarray, noise: np.ndarray):
    """Forward the full batch pipeline with fixed noise; returns all intermediates."""
    eye = np.eye(model.m)
    raw, cache_tx = forward(model.tx, eye)
    mean_power = float(np.mean(np.sum(raw * raw, axis=1)))
    if mean_power == 0.0:
        raise ValueError("transmitter outputs have zero mean power, cannot normalize")
    scale = np.sqrt(model.input_power_w / mean_power)
    points = scale * (raw[:, 0] + 1j * raw[:, 1])
    x = points[messages]
    y, tape = propagate_tape(x, noise, model.params)
    post, cache_rx, sums = _posteriors(model, y)
    n = messages.shape[0]
    p_true = post[np.arange(n), messages]
    clamped = p_true < CROSS_ENTROPY_FLOOR
    loss = float(np.mean(-np.log(np.maximum(p_true, CROSS_ENTROPY_FLOOR))))
    return loss, clamped, raw, cache_tx, mean_power, scale, tape, post, cache_rx, sums


def batch_loss(model: AutoencoderModel, messages: np.ndarray, noise: np.ndarray) -> float:
    """Mean cross-entropy of one batch for a fixed noise realization."""
    return _pipeline(model, messages, noise)[0]


def batch_loss_and_grads(model: AutoencoderModel, messages: np.ndarray, noise: np.ndarray):
    """Batch loss plus exact gradients for every transmitter/receiver parameter.

    Returns (loss, grads aligned with model_parameters(), floor_hit_count).
    The reverse pass runs decode -> channel tape -> normalization scale ->
    transmitter, with the scale differentiated through the batch's M symbol
    powers.
    """
    (loss, clamped, raw, cache_tx, mean_power, scale, tape, post, cache_rx, sums) = _pipeline(
        model, messages, noise
    )
    n = messages.shape[0]
    rows = np.arange(n)
    p_true = post[rows, messages]

    d_post = np.zeros_like(post)
    ok = ~clamped
    d_post[rows[ok], messages[ok]] = -1.0 / (n * p_true[ok])
    # posterior = sig / sum(sig): pull gradient through the normalization
    row_dot = np.sum(d_post * post, axis=1, keepdims=True)
    d_sig = (d_post - row_dot) / sums[:, None]

    rx_grads, d_rx_in = backward(model.rx, cache_rx, d_sig)
    k = _rx_input_scale(model)
    g_y = k * (d_rx_in[:, 0] + 1j * d_rx_in[:, 1])
    g_x = backprop_channel(tape, g_y)

    # scatter per-sample gradients onto the M constellation rows
    g_points = np.zeros((model.m, 2))
    np.add.at(g_points, messages, np.column_stack([g_x.real, g_x.imag]))

    # points = scale(raw) * raw with scale = sqrt(P_in / mean_power(raw))
    t = float(np.sum(g_points * raw))
    d_raw = scale * (g_points - (t / (model.m * mean_power)) * raw)
    tx_grads, _ = backward(model.tx, cache_tx, d_raw)

    return loss, tx_grads + rx_grads, int(np.count_nonzero(clamped))


@dataclass
class TrainConfig:
    """Settings for one training run at one input power."""

    batch_size: int = 1024
    batches: int = 10_000
    learning_rate: float = 1e-3
    seed: int = 0
    power_dbm: float | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.batches < 1:
            raise ValueError("batch_size and batches must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")


@dataclass
class TrainResult:
    losses: np.ndarray
    floor_hits: int


def train(model: AutoencoderModel, config: TrainConfig) -> TrainResult:
    """Adam-train the model in place; returns the per-batch mean loss trace.

    Batches are balanced: each message appears batch_size/M times (batch_size
    must be a multiple of M).  Noise is redrawn every batch from a stream
    seeded by config.seed, so identical configs reproduce identical traces.
    Raises TrainingDivergedError if the loss stops being finite.
    """
    if config.batch_size % model.m != 0:
        raise ValueError("batch_size must be a multiple of the constellation size")
    if config.power_dbm is not None:
        model.input_power_w = watts_from_dbm(config.power_dbm)
    messages = np.arange(config.batch_size) % model.m
    rng = make_rng(config.seed)
    params = [p.copy() for p in model_parameters(model)]
    set_model_parameters(model, params)
    state = adam_init(params, learning_rate=config.learning_rate)
    losses = np.empty(config.batches)
    floor_hits = 0
    for b in range(config.batches):
        noise = draw_noise(model.params, messages.shape, rng)
        loss, grads, hits = batch_loss_and_grads(model, messages, noise)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss {loss} at batch {b}")
        losses[b] = loss
        floor_hits += hits
        params, state = adam_step(state, params, grads)
        set_model_parameters(model, params)
    renormalize(model)
    return TrainResult(losses=losses, floor_hits=floor_hits)


# ---------------------------------------------------------------------------
# checkpoint files: versioned, self-describing JSON; see README for the schema


def _net_to_dict(net: DenseNetwork) -> dict:
    return {
        "layers": [
            {
                "activation": layer.activation,
                "weights": layer.weights.tolist(),
                "biases": layer.biases.tolist(),
            }
            for layer in net.layers
        ]
    }


def _net_from_dict(d: dict) -> DenseNetwork:
    layers = [
        DenseLayer(np.array(l["weights"]), np.array(l["biases"]), l["activation"])
        for l in d["layers"]
    ]
    return DenseNetwork(layers)


def save_checkpoint(model: AutoencoderModel, path, train_config: TrainConfig | None = None) -> None:
    """Write the model (and optionally its training config) as JSON text.

    Doubles are serialized via their shortest round-tripping decimal
    representation, so save -> load -> save is byte-identical.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "m": model.m,
        "input_power_w": model.input_power_w,
        "norm_scale": model.norm_scale,
        "channel": asdict(model.params),
        "transmitter": _net_to_dict(model.tx),
        "receiver": _net_to_dict(model.rx),
        "train_config": None if train_config is None else asdict(train_config),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> AutoencoderModel:
    """Read a checkpoint written by save_checkpoint."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not an autoencoder checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {doc.get('version')!r}"
        )
    try:
        model = AutoencoderModel(
            tx=_net_from_dict(doc["transmitter"]),
            rx=_net_from_dict(doc["receiver"]),
            norm_scale=doc["norm_scale"],
            m=doc["m"],
            params=ChannelParams(**doc["channel"]),
            input_power_w=doc["input_power_w"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"invalid checkpoint contents in {path}: {exc}") from exc
    return model


def load_train_config(path) -> TrainConfig | None:
    """Training config recorded in a checkpoint, if any."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    tc = doc.get("train_config")
    return None if tc is None else TrainConfig(**tc)
