"""Polar codes: Bhattacharyya construction, encoding, SC decoding, shortening.

Conventions used throughout the package:

* natural-order Arikan transform ``x = u F^{(x)n}`` with ``F = [[1, 0], [1, 1]]``
  (no bit reversal),
* LLR sign: positive favours bit 0,
* zero LLR decides bit 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Finite stand-in for an infinite LLR; keeps min-sum arithmetic NaN-free.
LLR_CLIP = 1e8


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _as_bits(bits, name: str = "bits") -> np.ndarray:
    arr = np.asarray(bits)
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must contain only 0/1 values")
    return arr.astype(np.uint8)


@dataclass(frozen=True)
class PolarCode:
    """An (N, K) polar code with a fixed frozen set.

    Attributes
    ----------
    N : int
        Mother block length, a power of two.
    K : int
        Number of information bits.
    frozen_set : tuple of int
        Sorted indices of the ``N - K`` frozen synthetic channels.
    design_snr_db : float
        Eb/N0 (dB) the construction was run at.
    shortened_length : int
        Transmitted length after shortening; equals ``N`` when unshortened.
    """

    N: int
    K: int
    frozen_set: tuple
    design_snr_db: float = 2.0
    shortened_length: int | None = None

    def __post_init__(self):
        if not _is_power_of_two(self.N):
            raise ValueError(f"N must be a power of two, got {self.N}")
        if not 0 < self.K < self.N:
            raise ValueError(f"K must satisfy 0 < K < N, got K={self.K}, N={self.N}")
        frozen = tuple(sorted(int(i) for i in self.frozen_set))
        if len(frozen) != self.N - self.K or len(set(frozen)) != len(frozen):
            raise ValueError("frozen set must hold N - K distinct indices")
        if frozen and (frozen[0] < 0 or frozen[-1] >= self.N):
            raise ValueError("frozen indices must lie in [0, N)")
        object.__setattr__(self, "frozen_set", frozen)
        if self.shortened_length is None:
            object.__setattr__(self, "shortened_length", self.N)
        if not self.K <= self.shortened_length <= self.N:
            raise ValueError("shortened length must lie in [K, N]")
        missing = set(range(self.shortened_length, self.N)) - set(frozen)
        if missing:
            raise ValueError("shortened positions must be frozen")

    @property
    def rate(self) -> float:
        """Code rate against the transmitted (shortened) length."""
        return self.K / self.shortened_length

    @property
    def frozen_mask(self) -> np.ndarray:
        mask = np.zeros(self.N, dtype=bool)
        mask[list(self.frozen_set)] = True
        return mask

    @property
    def info_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.frozen_mask)


def bhattacharyya_parameters(channel_z) -> np.ndarray:
    """Bhattacharyya parameters of the synthetic channels.

    ``channel_z[i]`` is the parameter of the physical channel carrying coded bit
    ``i``. The recursion follows the decoding tree: the left child combines its
    two halves as ``a + b - a*b`` and the right child as ``a*b``.
    """
    z = np.asarray(channel_z, dtype=float)
    if z.size == 1:
        return z.copy()
    h = z.size // 2
    a, b = z[:h], z[h:]
    return np.concatenate(
        [bhattacharyya_parameters(a + b - a * b), bhattacharyya_parameters(a * b)]
    )


def polar_construct(
    N: int, K: int, design_snr_db: float = 2.0, shortened_length: int | None = None
) -> PolarCode:
    """Build a polar code by Bhattacharyya ranking over a BI-AWGN channel.

    The channel parameter is ``z0 = exp(-R * 10**(design_snr_db/10))`` with
    ``R = K / transmitted length``. With shortening, the dropped tail positions
    are known at the receiver (``z = 0``) and their synthetic channels are frozen
    so the dropped coded bits are always zero. Ties in ``z`` freeze the lower
    index first.
    """
    if not _is_power_of_two(N):
        raise ValueError(f"N must be a power of two, got {N}")
    if not 0 < K < N:
        raise ValueError(f"K must satisfy 0 < K < N, got K={K}, N={N}")
    length = N if shortened_length is None else int(shortened_length)
    if not K <= length <= N:
        raise ValueError(f"shortened length must lie in [K, N], got {length}")

    z0 = np.exp(-(K / length) * 10.0 ** (design_snr_db / 10.0))
    channel_z = np.full(N, z0)
    channel_z[length:] = 0.0
    z = bhattacharyya_parameters(channel_z)

    forced = list(range(length, N))
    remaining = np.arange(length)
    # sort by descending z, ascending index on ties
    order = remaining[np.lexsort((remaining, -z[:length]))]
    frozen = forced + order[: N - K - len(forced)].tolist()
    return PolarCode(N, K, tuple(frozen), float(design_snr_db), length)


def polar_transform(u) -> np.ndarray:
    """Apply ``F^{(x)n}`` over GF(2) along the last axis."""
    x = np.array(u, dtype=np.uint8, copy=True)
    n = x.shape[-1]
    if not _is_power_of_two(n):
        raise ValueError(f"length must be a power of two, got {n}")
    step = 1
    while step < n:
        view = x.reshape(x.shape[:-1] + (n // (2 * step), 2, step))
        view[..., 0, :] ^= view[..., 1, :]
        step *= 2
    return x


def polar_encode(msg, code: PolarCode) -> np.ndarray:
    """Encode ``K`` message bits (or a batch, shape ``(..., K)``) into ``N`` bits."""
    msg = _as_bits(msg, "msg")
    if msg.shape[-1] != code.K:
        raise ValueError(f"message length must be {code.K}, got {msg.shape[-1]}")
    u = np.zeros(msg.shape[:-1] + (code.N,), dtype=np.uint8)
    u[..., code.info_indices] = msg
    return polar_transform(u)


def _sc_node(llr: np.ndarray, frozen: np.ndarray):
    """Decode one subtree; returns (u_hat, re-encoded x) for a batch."""
    n = llr.shape[-1]
    if frozen.all():
        zeros = np.zeros(llr.shape, dtype=np.uint8)
        return zeros, zeros
    if n == 1:
        u = (llr < 0).astype(np.uint8)
        return u, u
    h = n // 2
    a, b = llr[:, :h], llr[:, h:]
    left = np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
    u_left, v = _sc_node(left, frozen[:h])
    right = b + (1.0 - 2.0 * v) * a
    u_right, w = _sc_node(right, frozen[h:])
    return np.concatenate([u_left, u_right], axis=1), np.concatenate([v ^ w, w], axis=1)


def polar_decode_sc(llrs, code: PolarCode) -> np.ndarray:
    """Successive-cancellation decoding with min-sum check-node updates.

    Accepts a single LLR vector of length ``N`` or a batch ``(B, N)`` and
    returns the ``K`` message bits per codeword.
    """
    llrs = np.asarray(llrs, dtype=float)
    single = llrs.ndim == 1
    batch = np.atleast_2d(llrs)
    if batch.shape[-1] != code.N:
        raise ValueError(f"LLR length must be {code.N}, got {batch.shape[-1]}")
    batch = np.clip(batch, -LLR_CLIP, LLR_CLIP)
    u, _ = _sc_node(batch, code.frozen_mask)
    msg = u[:, code.info_indices]
    return msg[0] if single else msg


def rate_match(codeword, target_length: int) -> np.ndarray:
    """Shorten by dropping the trailing coded bits."""
    codeword = np.asarray(codeword)
    if target_length > codeword.shape[-1] or target_length < 0:
        raise ValueError(
            f"target length {target_length} exceeds mother length {codeword.shape[-1]}"
        )
    return codeword[..., :target_length].copy()


def rate_recover(llrs, mother_length: int) -> np.ndarray:
    """Inverse of :func:`rate_match` on LLRs: dropped bits are known zeros."""
    llrs = np.asarray(llrs, dtype=float)
    short = llrs.shape[-1]
    if short > mother_length:
        raise ValueError("received length exceeds mother length")
    pad = np.full(llrs.shape[:-1] + (mother_length - short,), np.inf)
    return np.concatenate([llrs, pad], axis=-1)


def save_frozen_set(code: PolarCode, path) -> None:
    Path(path).write_text("".join(f"{i}\n" for i in code.frozen_set))


def load_frozen_set(path) -> list:
    return [int(line) for line in Path(path).read_text().split()]
