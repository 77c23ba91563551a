"""Square Gray-mapped QAM: mapping, hard demapping and bit LLRs."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import erfc, logsumexp

SUPPORTED_BITS_PER_SYMBOL = (2, 4, 6)


def _gray(n: int) -> np.ndarray:
    i = np.arange(1 << n)
    return i ^ (i >> 1)


@dataclass(frozen=True)
class Constellation:
    """Unit-energy square QAM with per-axis Gray labels.

    ``points[label]`` is the complex point carrying the ``m``-bit label (MSB
    first). The first ``m/2`` label bits select the in-phase level, the last
    ``m/2`` the quadrature level; on each axis bit value 0 in the leading
    position means a positive amplitude.
    """

    m: int
    points: np.ndarray
    labels: np.ndarray  # (2**m, m) bit table, row = label

    @property
    def order(self) -> int:
        return 1 << self.m


@lru_cache(maxsize=None)
def qam_constellation(m: int) -> Constellation:
    if m not in SUPPORTED_BITS_PER_SYMBOL:
        raise ValueError(f"bits per symbol must be one of {SUPPORTED_BITS_PER_SYMBOL}, got {m}")
    k = m // 2
    levels = 1 << k
    # amplitude at position i is (levels-1) - 2i; that position carries gray(i)
    pam = np.empty(levels)
    pam[_gray(k)] = (levels - 1) - 2.0 * np.arange(levels)
    label = np.arange(1 << m)
    points = pam[label >> k] + 1j * pam[label & (levels - 1)]
    points = points / np.sqrt(np.mean(np.abs(points) ** 2))
    shifts = np.arange(m - 1, -1, -1)
    bits = ((label[:, None] >> shifts) & 1).astype(np.uint8)
    points.setflags(write=False)
    bits.setflags(write=False)
    return Constellation(m, points, bits)


def bits_to_labels(bits, m: int) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % m:
        raise ValueError(f"bit count {bits.size} is not divisible by m={m}")
    groups = bits.reshape(-1, m)
    return groups @ (1 << np.arange(m - 1, -1, -1))


def qam_map(bits, m: int) -> np.ndarray:
    """Map consecutive ``m``-bit groups onto constellation points."""
    const = qam_constellation(m)
    return const.points[bits_to_labels(bits, m)]


def qam_demap_hard(symbols, m: int) -> np.ndarray:
    """Nearest-point decisions; exact ties resolve to the lower label."""
    const = qam_constellation(m)
    symbols = np.asarray(symbols, dtype=complex).ravel()
    dist = np.abs(symbols[:, None] - const.points[None, :]) ** 2
    labels = np.argmin(dist, axis=1)
    return const.labels[labels].ravel()


def qam_demap_llr(symbols, noise_var, m: int, method: str = "exact") -> np.ndarray:
    """Bit LLRs ``log P(b=0|y) / P(b=1|y)`` under CN(0, noise_var) noise.

    ``noise_var`` may be a scalar or an array broadcastable to ``symbols``
    (e.g. per-resource-element post-equalisation noise). ``method`` is
    ``"exact"`` (log-sum-exp) or ``"maxlog"``.
    """
    const = qam_constellation(m)
    symbols = np.asarray(symbols, dtype=complex).ravel()
    noise_var = np.broadcast_to(np.asarray(noise_var, dtype=float), symbols.shape)
    if np.any(noise_var <= 0):
        raise ValueError("noise_var must be positive")
    metric = -np.abs(symbols[:, None] - const.points[None, :]) ** 2 / noise_var[:, None]
    llr = np.empty((symbols.size, m))
    for j in range(m):
        zero = const.labels[:, j] == 0
        if method == "exact":
            llr[:, j] = logsumexp(metric[:, zero], axis=1) - logsumexp(metric[:, ~zero], axis=1)
        elif method == "maxlog":
            llr[:, j] = metric[:, zero].max(axis=1) - metric[:, ~zero].max(axis=1)
        else:
            raise ValueError(f"unknown LLR method {method!r}")
    return llr.ravel()


def qfunc(x):
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


def qam_ser_awgn(esn0_linear, m: int):
    """Closed-form symbol error rate of square M-QAM over AWGN."""
    M = 1 << m
    p_axis = 2.0 * (1.0 - 1.0 / np.sqrt(M)) * qfunc(np.sqrt(3.0 * np.asarray(esn0_linear) / (M - 1)))
    return 1.0 - (1.0 - p_axis) ** 2
