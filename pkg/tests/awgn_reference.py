"""Closed-form AWGN references used as independent oracles by the tests.

Nothing here touches the package's channel, KDE, or network code: SER comes
from the textbook square-QAM formula, mutual information from direct 2D
quadrature of exact Gaussian densities.
"""

import math

import numpy as np


def qfunc(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def awgn_qam_ser(m: int, p_in_w: float, p_n_w: float) -> float:
    """Exact symbol error rate of square m-QAM with min-distance detection.

    Total complex noise power p_n_w (variance p_n_w/2 per dimension).
    """
    side = int(round(math.sqrt(m)))
    assert side * side == m
    half_spacing = math.sqrt(3.0 * p_in_w / (2.0 * (m - 1)))
    sigma = math.sqrt(p_n_w / 2.0)
    p_dim = 2.0 * (1.0 - 1.0 / side) * qfunc(half_spacing / sigma)
    return 1.0 - (1.0 - p_dim) ** 2


def awgn_mutual_information_bits(points, p_n_w: float, n_grid: int = 601,
                                 pad_sigmas: float = 7.0) -> float:
    """I(X;Y) in bits for equiprobable points over AWGN, by 2D quadrature."""
    pts = np.asarray(points, dtype=complex)
    m = pts.size
    sigma = math.sqrt(p_n_w / 2.0)
    extent = float(np.abs(pts).max()) + pad_sigmas * sigma
    xs = np.linspace(-extent, extent, n_grid)
    cell = (xs[1] - xs[0]) ** 2
    gx, gy = np.meshgrid(xs, xs)
    y = gx + 1j * gy
    dens = np.empty((m, n_grid, n_grid))
    for i, p in enumerate(pts):
        dens[i] = np.exp(-np.abs(y - p) ** 2 / (2.0 * sigma * sigma)) / (
            2.0 * math.pi * sigma * sigma
        )
    mix = dens.mean(axis=0)
    mi = 0.0
    for i in range(m):
        d = dens[i]
        mask = d > 0
        term = np.zeros_like(d)
        term[mask] = d[mask] * (np.log2(d[mask]) - np.log2(mix[mask]))
        mi += term.sum() * cell / m
    return mi
