"""Resource grids and CP-OFDM (de)modulation with an in-house DFT."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridShape:
    num_subcarriers: int = 72
    num_ofdm_symbols: int = 14
    num_streams: int = 1

    @property
    def capacity(self) -> int:
        return self.num_subcarriers * self.num_ofdm_symbols * self.num_streams

    @property
    def dims(self) -> tuple:
        return (self.num_streams, self.num_ofdm_symbols, self.num_subcarriers)


@dataclass(frozen=True)
class ResourceGrid:
    """Complex data indexed ``[stream, ofdm_symbol, subcarrier]``."""

    shape: GridShape
    data: np.ndarray = field(repr=False)
    occupied: int = 0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.shape != self.shape.dims:
            raise ValueError(f"grid data has shape {data.shape}, expected {self.shape.dims}")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)


def grid_map(symbols, shape: GridShape) -> ResourceGrid:
    """Fill subcarrier-fastest, then OFDM symbol, then stream; zero the rest."""
    symbols = np.asarray(symbols, dtype=complex).ravel()
    if symbols.size > shape.capacity:
        raise ValueError(f"{symbols.size} symbols exceed grid capacity {shape.capacity}")
    flat = np.zeros(shape.capacity, dtype=complex)
    flat[: symbols.size] = symbols
    return ResourceGrid(shape, flat.reshape(shape.dims), symbols.size)


def grid_unmap(grid: ResourceGrid, count: int | None = None) -> np.ndarray:
    count = grid.occupied if count is None else count
    return grid.data.ravel()[:count].copy()


def _bit_reverse_permutation(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def dft(x, inverse: bool = False) -> np.ndarray:
    """Unitary DFT along the last axis.

    Iterative radix-2 for power-of-two lengths, direct matrix product
    otherwise.
    """
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    sign = 1.0 if inverse else -1.0
    if n == 0:
        return x.copy()
    if n & (n - 1):
        k = np.arange(n)
        w = np.exp(sign * 2j * np.pi * np.outer(k, k) / n)
        return (x @ w.T) / np.sqrt(n)
    y = x[..., _bit_reverse_permutation(n)]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        y = y.reshape(y.shape[:-1] + (n // size, 2, half))
        even = y[..., 0, :]
        odd = y[..., 1, :] * tw
        y = np.concatenate([even + odd, even - odd], axis=-1).reshape(x.shape[:-1] + (n,))
        size *= 2
    return y / np.sqrt(n)


def subcarrier_bins(num_subcarriers: int, fft_size: int) -> np.ndarray:
    """FFT bin of each active subcarrier (DC-centred, contiguous)."""
    offsets = np.arange(num_subcarriers) - num_subcarriers // 2
    return np.mod(offsets, fft_size)


def _check_sizes(num_subcarriers: int, fft_size: int, cp_length: int) -> None:
    if fft_size < num_subcarriers:
        raise ValueError(f"fft_size {fft_size} smaller than {num_subcarriers} subcarriers")
    if not 0 <= cp_length < fft_size:
        raise ValueError(f"cp_length must lie in [0, fft_size), got {cp_length}")


def ofdm_modulate(grid: ResourceGrid, fft_size: int = 128, cp_length: int = 9) -> np.ndarray:
    """Time samples per stream, shape ``(streams, symbols * (fft_size + cp))``."""
    shape = grid.shape
    _check_sizes(shape.num_subcarriers, fft_size, cp_length)
    bins = np.zeros(shape.dims[:2] + (fft_size,), dtype=complex)
    bins[..., subcarrier_bins(shape.num_subcarriers, fft_size)] = grid.data
    body = dft(bins, inverse=True)
    with_cp = np.concatenate([body[..., fft_size - cp_length :], body], axis=-1)
    return with_cp.reshape(shape.num_streams, -1)


def ofdm_demodulate(samples, fft_size: int, cp_length: int, shape: GridShape) -> ResourceGrid:
    samples = np.atleast_2d(np.asarray(samples, dtype=complex))
    _check_sizes(shape.num_subcarriers, fft_size, cp_length)
    expected = (shape.num_streams, shape.num_ofdm_symbols * (fft_size + cp_length))
    if samples.shape != expected:
        raise ValueError(f"sample array has shape {samples.shape}, expected {expected}")
    blocks = samples.reshape(shape.num_streams, shape.num_ofdm_symbols, fft_size + cp_length)
    freq = dft(blocks[..., cp_length:])
    data = freq[..., subcarrier_bins(shape.num_subcarriers, fft_size)]
    return ResourceGrid(shape, data, shape.capacity)
