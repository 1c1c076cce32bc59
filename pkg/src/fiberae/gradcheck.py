"""Finite-difference verification of every gradient path in the package.

Three checks, one per gradient implementation:

* dense networks alone (forward/backward),
* the channel tape (backprop_channel) for several segment counts,
* the full training loss through transmitter, normalization, channel,
  and receiver with a fixed noise realization.

All comparisons use central differences and report the worst mixed error
|analytic - numeric| / max(|analytic|, |numeric|, 1).
"""

from __future__ import annotations

import numpy as np

from fiberae.autoencoder import (
    batch_loss,
    batch_loss_and_grads,
    build_model,
    model_parameters,
)
from fiberae.channel import (
    ChannelParams,
    backprop_channel,
    draw_noise,
    make_rng,
    propagate_tape,
    watts_from_dbm,
)
from fiberae.nets import grad_check, network

__all__ = [
    "dense_network_error",
    "channel_error",
    "end_to_end_error",
    "run_all",
]

FD_STEP = 1e-6


def _mixed_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1.0)


def dense_network_error(seed: int = 0) -> float:
    """Worst grad_check figure over a spread of small architectures."""
    rng = make_rng(seed)
    cases = [
        ([5, 3], ["linear"]),
        ([4, 8, 4], ["tanh", "tanh"]),
        ([2, 16, 16, 16, 16], ["tanh", "tanh", "tanh", "sigmoid"]),
        ([16, 16, 16, 2], ["tanh", "tanh", "linear"]),
        ([1, 1], ["sigmoid"]),
    ]
    worst = 0.0
    for widths, acts in cases:
        net = network(widths, acts, rng)
        x = rng.standard_normal(widths[0])
        target = rng.standard_normal(widths[-1])

        def loss(out, target=target):
            d = out - target
            return 0.5 * float(d @ d), d

        worst = max(worst, grad_check(net, loss, x, step=FD_STEP))
    return worst


def channel_error(segment_counts=(1, 5, 50), seed: int = 0, step: float = FD_STEP) -> float:
    """Worst error of backprop_channel against differencing propagate_tape."""
    worst = 0.0
    rng = make_rng(seed)
    for segments in segment_counts:
        params = ChannelParams(segments=segments)
        x = complex(0.02 * rng.standard_normal(), 0.02 * rng.standard_normal())
        noise = draw_noise(params, (1,), rng)
        gr, gi = rng.standard_normal(), rng.standard_normal()

        def loss(re, im):
            y, _ = propagate_tape(complex(re, im), noise, params)
            return gr * y[0].real + gi * y[0].imag

        _, tape = propagate_tape(np.array([x]), noise, params)
        g = backprop_channel(tape, np.array([complex(gr, gi)]))
        num_re = (loss(x.real + step, x.imag) - loss(x.real - step, x.imag)) / (2 * step)
        num_im = (loss(x.real, x.imag + step) - loss(x.real, x.imag - step)) / (2 * step)
        worst = max(worst, _mixed_error(g[0].real, num_re), _mixed_error(g[0].imag, num_im))
    return worst


def end_to_end_error(
    m: int = 4,
    segments: int = 5,
    batch: int = 8,
    power_dbm: float = 0.0,
    seed: int = 0,
    step: float = FD_STEP,
) -> float:
    """Worst parameter-gradient error of the full training loss.

    Differentiates the batch cross-entropy through receiver, channel tape,
    power normalization, and transmitter against central differences over
    every weight and bias, holding one drawn noise realization fixed.
    """
    params = ChannelParams(segments=segments)
    model = build_model(m, params, watts_from_dbm(power_dbm), seed)
    messages = np.arange(batch) % m
    noise = draw_noise(params, messages.shape, make_rng(seed + 1))
    _, grads, _ = batch_loss_and_grads(model, messages, noise)
    worst = 0.0
    for pi, p in enumerate(model_parameters(model)):
        flat = p.reshape(-1)
        ga = grads[pi].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            plus = batch_loss(model, messages, noise)
            flat[j] = orig - step
            minus = batch_loss(model, messages, noise)
            flat[j] = orig
            worst = max(worst, _mixed_error(ga[j], (plus - minus) / (2 * step)))
    return worst


def run_all(seed: int = 0) -> dict[str, float]:
    """All three checks; keys: dense_networks, channel, end_to_end."""
    return {
        "dense_networks": dense_network_error(seed),
        "channel": channel_error(seed=seed),
        "end_to_end": end_to_end_error(seed=seed),
    }
