"""Experiment layer: baselines, error rates, information rates, rasters.

Detectors are plain callables mapping a complex sample array to integer
message indices, so autoencoder decisions, sampled-likelihood ML decisions,
and minimum-distance decisions all plug into the same measurement code.

All Monte Carlo here uses balanced message draws for error rates and
uniform draws for information rates, with streams derived deterministically
from the caller's seed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from fiberae.autoencoder import AutoencoderModel, constellation_points, decode, detect
from fiberae.channel import ChannelParams, make_rng, propagate, watts_from_dbm
from fiberae.likelihood import (
    Constellation,
    LikelihoodOracle,
    build_oracle,
    ml_detect,
    mutual_information,
)
from fiberae.nets import CROSS_ENTROPY_FLOOR

__all__ = [
    "SweepResult",
    "RasterSpec",
    "qam",
    "min_distance_detector",
    "ae_detector",
    "ml_oracle_detector",
    "ser",
    "air",
    "air_from_posterior_mass",
    "decision_regions",
    "output_radius",
    "sweep",
]


@dataclass(frozen=True)
class SweepResult:
    power_dbm: float
    metric: str
    value: float
    n_samples: int
    seed: int


@dataclass(frozen=True)
class RasterSpec:
    """Square window and resolution for decision-region rasters."""

    center: complex = 0j
    half_width: float = 1.0
    resolution: int = 200

    def __post_init__(self):
        if self.resolution < 16:
            raise ValueError("resolution must be at least 16")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    def mesh(self):
        """(res, res) complex pixel centers; rows run along ascending imag."""
        xs = np.linspace(self.center.real - self.half_width, self.center.real + self.half_width, self.resolution)
        ys = np.linspace(self.center.imag - self.half_width, self.center.imag + self.half_width, self.resolution)
        gx, gy = np.meshgrid(xs, ys)
        return gx + 1j * gy


def _gray_decode(g: int) -> int:
    mask = g >> 1
    while mask:
        g ^= mask
        mask >>= 1
    return g


def qam(m: int, p_in_w: float) -> Constellation:
    """Square Gray-ordered m-QAM scaled to mean power p_in_w exactly.

    Message s splits into high bits (in-phase) and low bits (quadrature);
    each half is a Gray codeword selecting a PAM level, so messages of
    grid-adjacent points differ in exactly one bit.
    """
    side = int(round(np.sqrt(m)))
    if side * side != m or m < 4:
        raise ValueError(f"need a square constellation size, got {m}")
    bits_q = int(np.log2(side))
    if 2**bits_q != side:
        raise ValueError(f"side {side} must be a power of two for Gray labeling")
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    idx = np.arange(m)
    level_i = np.array([_gray_decode(s >> bits_q) for s in idx])
    level_q = np.array([_gray_decode(s & (side - 1)) for s in idx])
    pts = levels[level_i] + 1j * levels[level_q]
    pts *= np.sqrt(p_in_w / np.mean(np.abs(pts) ** 2))
    return Constellation(points=pts, power_w=p_in_w, labels=tuple(int(s) for s in idx))


def min_distance_detector(constellation: Constellation):
    """Nearest-point decisions; ties break to the lowest index."""
    pts = constellation.points

    def detector(y):
        d = np.abs(np.asarray(y, dtype=complex)[..., None] - pts)
        return np.argmin(d, axis=-1)

    return detector


def ae_detector(model: AutoencoderModel):
    def detector(y):
        return detect(model, np.asarray(y, dtype=complex))

    return detector


def ml_oracle_detector(oracle: LikelihoodOracle):
    def detector(y):
        return ml_detect(oracle, np.asarray(y, dtype=complex))

    return detector


def _points_of(source) -> np.ndarray:
    if isinstance(source, Constellation):
        return source.points
    if isinstance(source, AutoencoderModel):
        return constellation_points(source)
    raise TypeError(f"cannot take constellation points from {type(source).__name__}")


def ser(source, detector, params: ChannelParams, n_samples: int, seed: int) -> float:
    """Monte-Carlo symbol error rate with balanced message draws."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    points = _points_of(source)
    m = points.size
    msgs = np.arange(n_samples) % m
    y = propagate(points[msgs], params, make_rng(seed))
    return float(np.mean(np.asarray(detector(y)) != msgs))


def air_from_posterior_mass(mass_on_truth, m: int) -> float:
    """log2(m) + mean log2 of the posterior mass on the true message.

    The mass values lie in [0, 1] (floored like the training loss), so the
    result never exceeds log2 m.
    """
    f = np.maximum(np.asarray(mass_on_truth, dtype=float), CROSS_ENTROPY_FLOOR)
    return float(np.log2(m) + np.mean(np.log2(f)))


def air(model: AutoencoderModel, n_samples: int, seed: int) -> float:
    """Achievable information rate of the model's own decoder, in bits.

    Draws uniform messages, propagates with fresh noise, and evaluates the
    decoder posterior at the true message.  This lower-bounds the mutual
    information of the learned constellation.
    """
    rng = make_rng(seed)
    points = constellation_points(model)
    msgs = rng.integers(0, model.m, size=n_samples)
    y = propagate(points[msgs], model.params, rng)
    post = decode(model, y)
    return air_from_posterior_mass(post[np.arange(n_samples), msgs], model.m)


def decision_regions(detector, spec: RasterSpec) -> np.ndarray:
    """(res, res) grid of detected message indices over the raster window."""
    mesh = spec.mesh()
    labels = np.asarray(detector(mesh.ravel()))
    return labels.reshape(mesh.shape).astype(int)


def output_radius(source, params: ChannelParams, n_samples: int = 100_000,
                  seed: int = 0, quantile: float = 0.99) -> float:
    """Radius containing the given fraction of channel output magnitude."""
    points = _points_of(source)
    msgs = np.arange(n_samples) % points.size
    y = propagate(points[msgs], params, make_rng(seed))
    return float(np.quantile(np.abs(y), quantile))


def _derived_seed(root_seed: int, index: int, slot: int) -> int:
    ss = np.random.SeedSequence((root_seed, index, slot))
    return int(ss.generate_state(1)[0])


def sweep(
    powers_dbm,
    metric: str,
    source_fn,
    params: ChannelParams,
    n_samples: int,
    seed: int,
    detector: str = "mindist",
    oracle_samples: int = 100_000,
    threads: int = 1,
) -> list[SweepResult]:
    """Evaluate one metric over a list of input powers.

    `source_fn(power_dbm)` supplies the constellation or model for each
    power.  metric is one of "ser", "air", "mi"; for "ser" `detector`
    selects "mindist", "ml" (sampled-likelihood oracle), or "ae".  Per-power
    randomness derives from (seed, power index), so results are
    deterministic and independent of thread count.
    """
    if metric not in ("ser", "air", "mi"):
        raise ValueError(f"unknown metric {metric!r}")
    if metric == "ser" and detector not in ("mindist", "ml", "ae"):
        raise ValueError(f"unknown detector {detector!r}")
    powers = list(powers_dbm)

    def one_power(item) -> SweepResult:
        i, p_dbm = item
        source = source_fn(p_dbm)
        eval_seed = _derived_seed(seed, i, 0)
        build_seed = _derived_seed(seed, i, 1)
        if metric == "ser":
            if detector == "mindist":
                det = min_distance_detector(_as_constellation(source, p_dbm))
            elif detector == "ae":
                det = ae_detector(source)
            else:
                oracle = build_oracle(
                    _as_constellation(source, p_dbm), params, oracle_samples, build_seed
                )
                det = ml_oracle_detector(oracle)
            value = ser(source, det, params, n_samples, eval_seed)
        elif metric == "air":
            if not isinstance(source, AutoencoderModel):
                raise TypeError("air sweeps need a trained model per power")
            value = air(source, n_samples, eval_seed)
        else:
            const = _as_constellation(source, p_dbm)
            oracle = build_oracle(const, params, oracle_samples, build_seed)
            value = mutual_information(oracle, const, params, n_samples, eval_seed)
        return SweepResult(
            power_dbm=float(p_dbm), metric=metric, value=value,
            n_samples=n_samples, seed=seed,
        )

    items = list(enumerate(powers))
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one_power, items))
    return [one_power(it) for it in items]


def _as_constellation(source, power_dbm: float) -> Constellation:
    if isinstance(source, Constellation):
        return source
    if isinstance(source, AutoencoderModel):
        return Constellation(
            points=constellation_points(source), power_w=source.input_power_w
        )
    raise TypeError(f"cannot interpret {type(source).__name__} as a constellation")
