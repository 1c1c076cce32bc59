"""Memoryless nonlinear fiber channel: per-sample split-step recursion.

The channel acts on one complex sample at a time.  Propagation applies K
segments; each segment rotates the sample by an intensity-dependent phase
and adds circularly-symmetric complex Gaussian noise:

    x[k+1] = x[k] * exp(j * L * gamma * |x[k]|^2 / K) + n[k+1]

with n[k+1] ~ CN(0, P_N / K), i.e. each real component has variance
P_N / (2K).  Dispersion is neglected, so samples never interact.

Unit conventions: powers are stored in watts (user-facing dBm values are
converted at the boundary), lengths in km, and the nonlinearity parameter
in rad / (W * km), so L * gamma * |x|^2 is a phase in radians.

Randomness: all noise is drawn from a numpy Generator backed by the
counter-based Philox bit generator (`make_rng`), with real and imaginary
normal deviates drawn in that order at every segment.  This is the one
generator algorithm used throughout the package; identical seeds give
bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ChannelParams",
    "PropagationTape",
    "watts_from_dbm",
    "dbm_from_watts",
    "make_rng",
    "draw_noise",
    "propagate",
    "propagate_tape",
    "backprop_channel",
]


def watts_from_dbm(p_dbm: float) -> float:
    """Convert a power in dBm to watts: 10^((p_dbm - 30) / 10)."""
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def dbm_from_watts(p_w: float) -> float:
    """Convert a power in watts to dBm."""
    if p_w <= 0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * np.log10(p_w) + 30.0


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox 4x64) used for all sampling."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class ChannelParams:
    """Physical constants of the simplified fiber link.

    Defaults are the operating point used throughout: a 5000 km link,
    gamma = 1.27 rad/(W km), noise power -21.3 dBm, 50 segments.
    """

    link_length_km: float = 5000.0
    gamma: float = 1.27
    noise_power_w: float = field(default_factory=lambda: watts_from_dbm(-21.3))
    segments: int = 50
    seed: int = 0

    def __post_init__(self):
        if not self.link_length_km > 0:
            raise ValueError("link_length_km must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.noise_power_w < 0:
            raise ValueError("noise_power_w must be >= 0")
        if self.segments < 1:
            raise ValueError("segments must be >= 1")

    @property
    def phase_rate(self) -> float:
        """Per-segment phase factor L * gamma / K in rad/W."""
        return self.link_length_km * self.gamma / self.segments


@dataclass
class PropagationTape:
    """Per-segment channel states recorded for exact backpropagation.

    states[k] is the sample entering segment k+1 (states[0] is the channel
    input, states[K] the output); noise[k] is the noise added by segment
    k+1.  The recursion states[k+1] = states[k]*exp(j*c*|states[k]|^2)
    + noise[k], c = L*gamma/K, holds exactly (bit-level) by construction.

    Arrays have shape (K+1, ...) and (K, ...) where the trailing dimensions
    are whatever batch shape the input carried.
    """

    states: np.ndarray
    noise: np.ndarray
    params: ChannelParams

    def replay(self) -> np.ndarray:
        """Recompute all states from states[0] and the stored noise."""
        out = np.empty_like(self.states)
        out[0] = self.states[0]
        c = self.params.phase_rate
        for k in range(self.noise.shape[0]):
            x = out[k]
            out[k + 1] = x * np.exp(1j * c * (x.real**2 + x.imag**2)) + self.noise[k]
        return out


def draw_noise(params: ChannelParams, shape, rng: np.random.Generator) -> np.ndarray:
    """Draw the full (K, *shape) noise tensor for one propagation.

    Each entry is CN(0, P_N/K); real parts of a segment are drawn before
    imaginary parts so the stream layout is fixed.
    """
    scale = np.sqrt(params.noise_power_w / (2.0 * params.segments))
    k = params.segments
    shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    out = np.empty((k,) + shape, dtype=complex)
    for i in range(k):
        re = rng.standard_normal(shape)
        im = rng.standard_normal(shape)
        out[i] = scale * (re + 1j * im)
    return out


def propagate(x, params: ChannelParams, rng: np.random.Generator):
    """Send samples through the channel with freshly drawn noise.

    `x` may be a complex scalar or a complex array; the result has the
    same shape.  Noise is drawn segment by segment from `rng`.
    """
    xs = np.asarray(x, dtype=complex)
    scalar = xs.ndim == 0
    y = np.atleast_1d(xs).copy()
    c = params.phase_rate
    scale = np.sqrt(params.noise_power_w / (2.0 * params.segments))
    for _ in range(params.segments):
        y = y * np.exp(1j * c * (y.real**2 + y.imag**2))
        re = rng.standard_normal(y.shape)
        im = rng.standard_normal(y.shape)
        y = y + scale * (re + 1j * im)
    return complex(y[0]) if scalar else y


def propagate_tape(x, noise: np.ndarray, params: ChannelParams):
    """Propagate with caller-supplied noise, recording every state.

    Deterministic given `noise` (shape (K, ...) matching the batch shape
    of `x`).  Returns (output, PropagationTape).
    """
    xs = np.atleast_1d(np.asarray(x, dtype=complex))
    noise = np.asarray(noise, dtype=complex)
    if noise.shape[0] != params.segments:
        raise ValueError(
            f"noise has {noise.shape[0]} segments, params require {params.segments}"
        )
    if noise.shape[1:] != xs.shape:
        raise ValueError(f"noise batch shape {noise.shape[1:]} != input shape {xs.shape}")
    c = params.phase_rate
    states = np.empty((params.segments + 1,) + xs.shape, dtype=complex)
    states[0] = xs
    for k in range(params.segments):
        cur = states[k]
        states[k + 1] = cur * np.exp(1j * c * (cur.real**2 + cur.imag**2)) + noise[k]
    return states[-1].copy(), PropagationTape(states=states, noise=noise, params=params)


def backprop_channel(tape: PropagationTape, grad_output: np.ndarray) -> np.ndarray:
    """Pull a loss gradient at the channel output back to the input.

    Gradients are encoded as complex numbers: Re(g) = dL/dRe, Im(g) =
    dL/dIm.  For each segment the map (a, b) -> (a cos t - b sin t,
    a sin t + b cos t), t = c (a^2 + b^2), has transpose-Jacobian action

        g_in = g_out * exp(-j t) + 2 c Im(g_out * conj(w)) * x

    where x is the segment input and w = x * exp(j t) the rotated value;
    additive noise contributes identity.  Applying this from the last
    segment to the first yields the exact reverse-mode gradient for the
    fixed noise realization stored in the tape.
    """
    g = np.asarray(grad_output, dtype=complex)
    if g.shape != tape.states.shape[1:]:
        g = np.broadcast_to(g, tape.states.shape[1:]).astype(complex)
    g = g.copy()
    c = tape.params.phase_rate
    for k in range(tape.noise.shape[0] - 1, -1, -1):
        x = tape.states[k]
        theta = c * (x.real**2 + x.imag**2)
        w = x * np.exp(1j * theta)
        g = g * np.exp(-1j * theta) + 2.0 * c * (g * np.conj(w)).imag * x
    return g
