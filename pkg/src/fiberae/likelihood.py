"""Sampled per-symbol channel densities: ML detection and mutual information.

The channel law p(y|x) has no closed form in this package; instead each
constellation point gets a kernel density estimate built from S channel
output samples.  The estimate is a 2D Gaussian KDE in Cartesian (re, im)
coordinates with a per-symbol diagonal Silverman bandwidth
h_i = std_i * S^(-1/6).

For tractable evaluation the KDE is accumulated on a per-symbol grid (bin
width about h/3, padded 8 bandwidths past the sample extremes) by binning
the cloud and convolving with the Gaussian kernel; queries are answered by
bilinear interpolation.  Off-grid queries, where the exact KDE would be
vanishingly small, evaluate to the smallest positive normal double rather
than zero so likelihoods stay strictly positive and log-likelihoods finite.

Mutual information is estimated by Monte Carlo with the same density in
the numerator and the mixture denominator, making it a mismatched-decoding
estimate that converges to the true value as the KDE sharpens.  Fresh
channel samples, drawn from a stream disjoint from the one that built the
oracle, are always used.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict, field

import numpy as np
from scipy.ndimage import gaussian_filter

from fiberae.channel import ChannelParams, propagate

__all__ = [
    "Constellation",
    "LikelihoodOracle",
    "build_oracle",
    "likelihood",
    "ml_detect",
    "mutual_information",
    "save_oracle_cache",
    "load_oracle_cache",
]

DENSITY_FLOOR = float(np.finfo(float).tiny)

GRID_PAD_BANDWIDTHS = 8.0
BINS_PER_BANDWIDTH = 3.0
MAX_GRID_SIDE = 1024
MIN_GRID_SIDE = 64

CACHE_FORMAT = "fiberae-oracle-cache"
CACHE_VERSION = 1


@dataclass(frozen=True)
class Constellation:
    """M complex symbols with uniform prior and a declared mean power."""

    points: np.ndarray
    power_w: float
    labels: tuple[int, ...] | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("need at least two constellation points")
        mean_power = float(np.mean(np.abs(pts) ** 2))
        if abs(mean_power - self.power_w) > 1e-9 * self.power_w:
            raise ValueError(
                f"constellation mean power {mean_power} != declared {self.power_w}"
            )
        if self.labels is not None and len(self.labels) != pts.size:
            raise ValueError("labels must match the number of points")

    @property
    def m(self) -> int:
        return self.points.size


@dataclass
class _SymbolDensity:
    """Gridded KDE of one symbol's output cloud."""

    grid: np.ndarray  # (n_re, n_im) density values at cell centers
    re0: float
    im0: float
    dre: float
    dim: float
    bandwidth: tuple[float, float]

    def __call__(self, re: np.ndarray, im: np.ndarray) -> np.ndarray:
        u = (re - self.re0) / self.dre
        v = (im - self.im0) / self.dim
        n_re, n_im = self.grid.shape
        inside = (u >= 0) & (u <= n_re - 1) & (v >= 0) & (v <= n_im - 1)
        out = np.zeros(np.broadcast(u, v).shape)
        if np.any(inside):
            ui, vi = u[inside], v[inside]
            i0 = np.clip(np.floor(ui).astype(int), 0, n_re - 2)
            j0 = np.clip(np.floor(vi).astype(int), 0, n_im - 2)
            fu = ui - i0
            fv = vi - j0
            g = self.grid
            out[inside] = (
                g[i0, j0] * (1 - fu) * (1 - fv)
                + g[i0 + 1, j0] * fu * (1 - fv)
                + g[i0, j0 + 1] * (1 - fu) * fv
                + g[i0 + 1, j0 + 1] * fu * fv
            )
        return np.maximum(out, DENSITY_FLOOR)


@dataclass
class LikelihoodOracle:
    constellation: Constellation
    params: ChannelParams
    samples_per_symbol: int
    seed: int
    clouds: list[np.ndarray]
    densities: list[_SymbolDensity]

    @property
    def m(self) -> int:
        return self.constellation.m


def _silverman_bandwidth(cloud: np.ndarray) -> tuple[float, float]:
    # d=2 Silverman factor is exactly n^(-1/6); degenerate clouds get a
    # nominal bandwidth so the kernel stays proper
    n = cloud.size
    h_re = float(np.std(cloud.real, ddof=1)) * n ** (-1.0 / 6.0)
    h_im = float(np.std(cloud.imag, ddof=1)) * n ** (-1.0 / 6.0)
    fallback = 1e-9 * float(np.sqrt(np.mean(np.abs(cloud) ** 2))) + 1e-30
    return max(h_re, fallback), max(h_im, fallback)


def _fit_density(cloud: np.ndarray) -> _SymbolDensity:
    h_re, h_im = _silverman_bandwidth(cloud)
    lo_re = cloud.real.min() - GRID_PAD_BANDWIDTHS * h_re
    hi_re = cloud.real.max() + GRID_PAD_BANDWIDTHS * h_re
    lo_im = cloud.imag.min() - GRID_PAD_BANDWIDTHS * h_im
    hi_im = cloud.imag.max() + GRID_PAD_BANDWIDTHS * h_im
    n_re = int(np.clip(np.ceil((hi_re - lo_re) / (h_re / BINS_PER_BANDWIDTH)), MIN_GRID_SIDE, MAX_GRID_SIDE))
    n_im = int(np.clip(np.ceil((hi_im - lo_im) / (h_im / BINS_PER_BANDWIDTH)), MIN_GRID_SIDE, MAX_GRID_SIDE))
    edges_re = np.linspace(lo_re, hi_re, n_re + 1)
    edges_im = np.linspace(lo_im, hi_im, n_im + 1)
    counts, _, _ = np.histogram2d(cloud.real, cloud.imag, bins=(edges_re, edges_im))
    dre = edges_re[1] - edges_re[0]
    dim = edges_im[1] - edges_im[0]
    smooth = gaussian_filter(counts, sigma=(h_re / dre, h_im / dim), mode="constant", truncate=8.0)
    grid = smooth / (cloud.size * dre * dim)
    return _SymbolDensity(
        grid=grid,
        re0=0.5 * (edges_re[0] + edges_re[1]),
        im0=0.5 * (edges_im[0] + edges_im[1]),
        dre=dre,
        dim=dim,
        bandwidth=(h_re, h_im),
    )


def _stream(seed: int, tag: int) -> np.random.Generator:
    # structurally disjoint streams for build (tag 1) vs estimation (tag 2)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, tag))))


def build_oracle(
    constellation: Constellation,
    params: ChannelParams,
    samples_per_symbol: int = 100_000,
    seed: int = 0,
    threads: int = 1,
) -> LikelihoodOracle:
    """Propagate S samples per symbol and fit the gridded KDEs.

    Per-symbol noise streams are spawned deterministically from `seed`, so
    the result is independent of `threads`.
    """
    if samples_per_symbol < 1000:
        raise ValueError("need at least 1000 samples per symbol")
    children = np.random.SeedSequence((seed, 1)).spawn(constellation.m)

    def one_symbol(i: int):
        rng = np.random.Generator(np.random.Philox(children[i]))
        x = np.full(samples_per_symbol, constellation.points[i])
        cloud = propagate(x, params, rng)
        return cloud, _fit_density(cloud)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_symbol, range(constellation.m)))
    else:
        results = [one_symbol(i) for i in range(constellation.m)]
    return LikelihoodOracle(
        constellation=constellation,
        params=params,
        samples_per_symbol=samples_per_symbol,
        seed=seed,
        clouds=[r[0] for r in results],
        densities=[r[1] for r in results],
    )


def likelihood(oracle: LikelihoodOracle, symbol: int, y):
    """Estimated density of output y under the given symbol; strictly positive."""
    if not 0 <= symbol < oracle.m:
        raise IndexError(f"symbol {symbol} outside 0..{oracle.m - 1}")
    arr = np.asarray(y, dtype=complex)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    vals = oracle.densities[symbol](arr.real, arr.imag)
    return float(vals[0]) if scalar else vals


def _density_matrix(oracle: LikelihoodOracle, y: np.ndarray) -> np.ndarray:
    """(M, n) matrix of per-symbol densities at the query points."""
    return np.stack([oracle.densities[s](y.real, y.imag) for s in range(oracle.m)])


def ml_detect(oracle: LikelihoodOracle, y):
    """Most likely symbol for each sample; ties break to the lowest index."""
    arr = np.asarray(y, dtype=complex)
    scalar = arr.ndim == 0
    dens = _density_matrix(oracle, np.atleast_1d(arr))
    idx = np.argmax(dens, axis=0)
    return int(idx[0]) if scalar else idx


def mutual_information(
    oracle: LikelihoodOracle,
    constellation: Constellation,
    params: ChannelParams,
    n_samples: int,
    seed: int = 0,
) -> float:
    """Monte-Carlo mutual information in bits under the estimated densities.

    Draws (x_i, y_i) with uniform messages and fresh channel noise, then
    averages log2 of the ratio between p_hat(y_i | x_i) and the uniform
    mixture over all symbols.  The same density serves numerator and
    denominator, so each term is at most log2 M; negative estimates are
    Monte Carlo noise and clamp to 0.
    """
    rng = _stream(seed, 2)
    msgs = rng.integers(0, constellation.m, size=n_samples)
    y = propagate(constellation.points[msgs], params, rng)
    dens = _density_matrix(oracle, y)
    own = dens[msgs, np.arange(n_samples)]
    mix = dens.mean(axis=0)
    est = float(np.mean(np.log2(own) - np.log2(mix)))
    return max(0.0, est)


def save_oracle_cache(oracle: LikelihoodOracle, path) -> None:
    """Write the raw sample clouds so the oracle can be rebuilt exactly."""
    doc = {
        "format": CACHE_FORMAT,
        "version": CACHE_VERSION,
        "power_w": oracle.constellation.power_w,
        "points": [[p.real, p.imag] for p in oracle.constellation.points],
        "channel": asdict(oracle.params),
        "samples_per_symbol": oracle.samples_per_symbol,
        "seed": oracle.seed,
        "clouds": [
            [[c.real, c.imag] for c in cloud] for cloud in oracle.clouds
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_oracle_cache(path) -> LikelihoodOracle:
    """Rebuild an oracle from a cache file written by save_oracle_cache."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ValueError(f"malformed oracle cache {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CACHE_FORMAT:
        raise ValueError(f"{path} is not an oracle cache")
    if doc.get("version") != CACHE_VERSION:
        raise ValueError(f"unsupported oracle cache version {doc.get('version')!r}")
    points = np.array([complex(re, im) for re, im in doc["points"]])
    constellation = Constellation(points=points, power_w=doc["power_w"])
    clouds = [
        np.array([complex(re, im) for re, im in cloud]) for cloud in doc["clouds"]
    ]
    return LikelihoodOracle(
        constellation=constellation,
        params=ChannelParams(**doc["channel"]),
        samples_per_symbol=doc["samples_per_symbol"],
        seed=doc["seed"],
        clouds=clouds,
        densities=[_fit_density(c) for c in clouds],
    )
