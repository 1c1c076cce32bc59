"""Minimal dense-network engine: forward, exact backprop, Adam.

Everything is plain numpy in double precision.  Networks are small stacks
of dense layers with tanh, sigmoid, or linear activations; layers follow
the row-convention ``out = f(x @ W + b)`` so each column of W is one
neuron's weight vector.  Inputs may be single vectors or (batch, features)
arrays.

The training loss is the cross-entropy of a one-hot target against a
posterior, taken with the natural log (information rates elsewhere use
log2).  Posteriors are floored at CROSS_ENTROPY_FLOOR so the loss stays
finite; callers can count floor hits via the batch helpers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ACTIVATIONS",
    "CROSS_ENTROPY_FLOOR",
    "AdamState",
    "DenseLayer",
    "DenseNetwork",
    "ForwardCache",
    "adam_init",
    "adam_step",
    "backward",
    "cross_entropy",
    "forward",
    "glorot_layer",
    "grad_check",
    "network",
]

ACTIVATIONS = ("tanh", "sigmoid", "linear")

# Floor applied to posteriors inside log(); keeps -log finite.
CROSS_ENTROPY_FLOOR = 1e-12


def _sigmoid(z):
    # branch on sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _apply_activation(kind, z):
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return _sigmoid(z)
    if kind == "linear":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def _activation_deriv_from_output(kind, a):
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "linear":
        return np.ones_like(a)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class DenseLayer:
    weights: np.ndarray  # (n_in, n_out)
    biases: np.ndarray  # (n_out,)
    activation: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.biases = np.asarray(self.biases, dtype=float)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[1],):
            raise ValueError("layer weights must be (n_in, n_out) with matching biases")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.biases).all()):
            raise ValueError("layer parameters must be finite")

    @property
    def n_in(self) -> int:
        return self.weights.shape[0]

    @property
    def n_out(self) -> int:
        return self.weights.shape[1]


@dataclass
class DenseNetwork:
    layers: list[DenseLayer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if prev.n_out != cur.n_in:
                raise ValueError(
                    f"layer widths do not chain: {prev.n_out} -> {cur.n_in}"
                )

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def parameters(self) -> list[np.ndarray]:
        """Flat list [W0, b0, W1, b1, ...] referencing the live arrays."""
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.biases)
        return out

    def set_parameters(self, params: list[np.ndarray]) -> None:
        if len(params) != 2 * len(self.layers):
            raise ValueError("parameter list length mismatch")
        for i, layer in enumerate(self.layers):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != layer.weights.shape or b.shape != layer.biases.shape:
                raise ValueError("parameter shape mismatch")
            layer.weights = np.asarray(w, dtype=float)
            layer.biases = np.asarray(b, dtype=float)

    def clone(self) -> "DenseNetwork":
        return DenseNetwork(
            [
                DenseLayer(l.weights.copy(), l.biases.copy(), l.activation)
                for l in self.layers
            ]
        )


def glorot_layer(n_in: int, n_out: int, activation: str, rng: np.random.Generator) -> DenseLayer:
    """Uniform Glorot initialization, zero biases."""
    limit = np.sqrt(6.0 / (n_in + n_out))
    w = rng.uniform(-limit, limit, size=(n_in, n_out))
    return DenseLayer(w, np.zeros(n_out), activation)


def network(widths: list[int], activations: list[str], rng: np.random.Generator) -> DenseNetwork:
    """Build a Glorot-initialized stack; widths has one more entry than activations."""
    if len(widths) != len(activations) + 1:
        raise ValueError("need len(widths) == len(activations) + 1")
    layers = [
        glorot_layer(widths[i], widths[i + 1], activations[i], rng)
        for i in range(len(activations))
    ]
    return DenseNetwork(layers)


@dataclass
class ForwardCache:
    """Inputs and post-activation outputs of every layer for one forward pass."""

    inputs: list[np.ndarray]
    outputs: list[np.ndarray]
    batched: bool


def forward(net: DenseNetwork, x) -> tuple[np.ndarray, ForwardCache]:
    """Run the network; returns (output, cache for backward).

    Accepts a single vector (n_in,) or a batch (n, n_in); the output has the
    matching shape.
    """
    arr = np.asarray(x, dtype=float)
    batched = arr.ndim == 2
    a = np.atleast_2d(arr)
    if a.shape[1] != net.n_in:
        raise ValueError(f"input has {a.shape[1]} features, network expects {net.n_in}")
    inputs, outputs = [], []
    for layer in net.layers:
        inputs.append(a)
        z = a @ layer.weights + layer.biases
        a = _apply_activation(layer.activation, z)
        outputs.append(a)
    cache = ForwardCache(inputs=inputs, outputs=outputs, batched=batched)
    return (a if batched else a[0]), cache


def backward(net: DenseNetwork, cache: ForwardCache, grad_output) -> tuple[list[np.ndarray], np.ndarray]:
    """Exact reverse-mode gradients for a forward() pass.

    grad_output holds dLoss/d(output); for batches the parameter gradients
    are summed over rows.  Returns (param_grads aligned with
    net.parameters(), grad_input with the shape of the original input).
    """
    if len(cache.inputs) != len(net.layers):
        raise ValueError("cache does not match this network")
    g = np.atleast_2d(np.asarray(grad_output, dtype=float))
    if g.shape != cache.outputs[-1].shape:
        raise ValueError("grad_output shape does not match cached forward output")
    param_grads: list[np.ndarray] = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        delta = g * _activation_deriv_from_output(layer.activation, cache.outputs[i])
        param_grads[2 * i] = cache.inputs[i].T @ delta
        param_grads[2 * i + 1] = delta.sum(axis=0)
        g = delta @ layer.weights.T
    return param_grads, (g if cache.batched else g[0])


def cross_entropy(one_hot, posterior, floor: float = CROSS_ENTROPY_FLOOR) -> float:
    """-log(posterior[s]) at the hot index s, natural log.

    A posterior below `floor` is clamped (loss stays finite); the clamp is
    visible to callers because the returned value equals -log(floor).
    """
    u = np.asarray(one_hot, dtype=float)
    p = np.asarray(posterior, dtype=float)
    if u.shape != p.shape:
        raise ValueError("one_hot and posterior must have the same length")
    s = int(np.argmax(u))
    return float(-np.log(max(p[s], floor)))


@dataclass
class AdamState:
    """Adam moments plus hyperparameters; shaped like the parameter list."""

    step_count: int
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(params: list[np.ndarray], learning_rate: float, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    return AdamState(
        step_count=0,
        first_moment=[np.zeros_like(p) for p in params],
        second_moment=[np.zeros_like(p) for p in params],
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]):
    """One bias-corrected Adam update; pure (inputs are left untouched)."""
    if not (len(params) == len(grads) == len(state.first_moment)):
        raise ValueError("params/grads/state length mismatch")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m2 = b1 * m + (1.0 - b1) * g
        v2 = b2 * v + (1.0 - b2) * g * g
        step = state.learning_rate * (m2 / c1) / (np.sqrt(v2 / c2) + state.epsilon)
        new_params.append(p - step)
        new_m.append(m2)
        new_v.append(v2)
    new_state = replace(state, step_count=t, first_moment=new_m, second_moment=new_v)
    return new_params, new_state


def grad_check(net: DenseNetwork, loss_fn, x, step: float = 1e-6) -> float:
    """Compare backward() against central finite differences.

    `loss_fn(output_vector)` must return (value, grad_wrt_output).  Every
    parameter entry is perturbed by +-step; the reported figure is the worst
    mixed error |analytic - numeric| / max(|analytic|, |numeric|, 1).
    """
    out, cache = forward(net, x)
    _, grad_out = loss_fn(out)
    analytic, _ = backward(net, cache, grad_out)
    worst = 0.0
    params = net.parameters()
    for pi, p in enumerate(params):
        flat = p.reshape(-1)
        ga = analytic[pi].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            plus, _ = loss_fn(forward(net, x)[0])
            flat[j] = orig - step
            minus, _ = loss_fn(forward(net, x)[0])
            flat[j] = orig
            numeric = (plus - minus) / (2.0 * step)
            err = abs(ga[j] - numeric) / max(abs(ga[j]), abs(numeric), 1.0)
            worst = max(worst, err)
    return worst
