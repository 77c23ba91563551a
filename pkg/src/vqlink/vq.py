"""Codebook transport: segmentation, nearest-neighbour quantisation, index
bit-packing, k-means fitting and the VQ-VAE loss."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Codebook:
    """``K`` code vectors of dimension ``d_z`` (rows of ``vectors``)."""

    vectors: np.ndarray

    def __post_init__(self):
        vec = np.array(self.vectors, dtype=float)
        if vec.ndim != 2:
            raise ValueError("codebook vectors must be a K x d_z matrix")
        if vec.shape[0] < 2:
            raise ValueError(f"codebook needs K >= 2 entries, got {vec.shape[0]}")
        if not np.all(np.isfinite(vec)):
            raise ValueError("codebook entries must be finite")
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)

    @property
    def K(self) -> int:
        return self.vectors.shape[0]

    @property
    def d_z(self) -> int:
        return self.vectors.shape[1]

    @property
    def index_bits(self) -> int:
        return index_bits(self.K)

    def is_distinct(self) -> bool:
        """Lint: duplicate entries break ``quantize(dequantize(t)) == t``."""
        return np.unique(self.vectors, axis=0).shape[0] == self.K

    def save(self, path) -> None:
        lines = [f"{self.K} {self.d_z}"]
        lines += [" ".join(repr(float(v)) for v in row) for row in self.vectors]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "Codebook":
        rows = Path(path).read_text().split("\n")
        K, d_z = (int(v) for v in rows[0].split())
        vec = np.array([[float(v) for v in r.split()] for r in rows[1 : K + 1]])
        if vec.shape != (K, d_z):
            raise ValueError(f"codebook file declares {K}x{d_z}, found {vec.shape}")
        return cls(vec)


def index_bits(K: int) -> int:
    if K < 2:
        raise ValueError(f"K must be >= 2, got {K}")
    return math.ceil(math.log2(K))


def segment(r, d_z: int) -> np.ndarray:
    """Split ``(n, d_r)`` latents into ``(n, d_r / d_z, d_z)`` segments."""
    r = np.asarray(r, dtype=float)
    n, d_r = r.shape
    if d_z <= 0 or d_r % d_z:
        raise ValueError(f"d_z={d_z} does not divide d_r={d_r}")
    return r.reshape(n, d_r // d_z, d_z)


def unsegment(segments) -> np.ndarray:
    segments = np.asarray(segments)
    return segments.reshape(segments.shape[0], -1)


def squared_distances(points, codebook: Codebook) -> np.ndarray:
    """``||p - z_k||^2`` for every point/entry pair, shape ``(..., K)``."""
    diff = np.asarray(points, dtype=float)[..., None, :] - codebook.vectors
    return np.einsum("...kd,...kd->...k", diff, diff)


def quantize(segments, codebook: Codebook, chunk: int = 4096) -> np.ndarray:
    """Nearest codebook index per segment; ties go to the lowest index."""
    segments = np.asarray(segments, dtype=float)
    if segments.shape[-1] != codebook.d_z:
        raise ValueError(f"segment dim {segments.shape[-1]} != d_z {codebook.d_z}")
    flat = segments.reshape(-1, codebook.d_z)
    out = np.empty(flat.shape[0], dtype=np.int64)
    for start in range(0, flat.shape[0], chunk):
        out[start : start + chunk] = np.argmin(squared_distances(flat[start : start + chunk], codebook), axis=1)
    return out.reshape(segments.shape[:-1])


def dequantize(indices, codebook: Codebook) -> np.ndarray:
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= codebook.K):
        raise IndexError(f"codebook index out of range [0, {codebook.K})")
    return codebook.vectors[indices]


def pack_indices(indices, K: int) -> np.ndarray:
    """Natural binary, MSB first, ``ceil(log2 K)`` bits per index."""
    width = index_bits(K)
    idx = np.asarray(indices, dtype=np.int64).ravel()
    shifts = np.arange(width - 1, -1, -1)
    return ((idx[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def unpack_indices(bits, K: int, count: int | None = None):
    """Inverse of :func:`pack_indices`.

    Received patterns ``>= K`` (possible when K is not a power of two) are
    clamped to ``K - 1``. Returns ``(indices, clamped_count)``.
    """
    width = index_bits(K)
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if count is None:
        count = bits.size // width
    if count * width > bits.size:
        raise ValueError("not enough bits for the requested index count")
    groups = bits[: count * width].reshape(count, width)
    idx = groups @ (1 << np.arange(width - 1, -1, -1))
    over = idx >= K
    idx[over] = K - 1
    return idx, int(over.sum())


# --------------------------------------------------------------------------
# k-means


@dataclass
class KMeansResult:
    codebook: Codebook
    distortion: list  # mean squared distance after each assignment step
    iterations: int


def _kmeans_pp(samples: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = samples.shape[0]
    centers = [samples[rng.integers(n)]]
    closest = np.sum((samples - centers[0]) ** 2, axis=1)
    for _ in range(1, K):
        total = closest.sum()
        if total <= 0:
            # every sample already sits on a centre; pick unused samples
            pick = rng.integers(n)
        else:
            pick = rng.choice(n, p=closest / total)
        centers.append(samples[pick])
        closest = np.minimum(closest, np.sum((samples - samples[pick]) ** 2, axis=1))
    return np.array(centers)


def kmeans_fit(samples, K: int, max_iters: int = 100, seed: int = 0, tol: float = 1e-6) -> KMeansResult:
    """k-means++ seeding followed by Lloyd iterations.

    Empty clusters are re-seeded from the samples farthest from their current
    centre. Stops after ``max_iters`` or when the relative distortion change
    drops below ``tol``.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] < K:
        raise ValueError(f"need at least K={K} samples, got {samples.shape[0]}")
    if K < 2:
        raise ValueError("K must be >= 2")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(samples, K, rng)

    history = []
    it = 0
    for it in range(1, max_iters + 1):
        d2 = squared_distances(samples, Codebook(centers))
        labels = np.argmin(d2, axis=1)
        best = d2[np.arange(samples.shape[0]), labels]
        history.append(float(best.mean()))
        if len(history) > 1:
            prev = history[-2]
            if prev == 0 or (prev - history[-1]) / prev < tol:
                break

        counts = np.bincount(labels, minlength=K)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, samples)
        new = centers.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        empty = np.flatnonzero(~filled)
        if empty.size:
            far = np.argsort(-best, kind="stable")[: empty.size]
            new[empty] = samples[far]
        centers = new
    return KMeansResult(Codebook(centers), history, it)


# --------------------------------------------------------------------------
# VQ-VAE loss


@dataclass
class VQLoss:
    loss: float
    codebook_term: float
    commitment_term: float
    grad_codebook_side: np.ndarray  # d loss / d quantized, codebook term only
    grad_encoder_side: np.ndarray  # d loss / d r, commitment term only


def vqvae_loss(r_segments, quantized_segments, beta: float = 0.25) -> VQLoss:
    """``||sg[r] - q||^2 + beta ||sg[q] - r||^2``, averaged over segments.

    Squared norms are summed over the code dimension and averaged over all
    segments. Stop-gradient semantics: the codebook term contributes only to
    the gradient w.r.t. the quantized vectors, the commitment term only to
    the gradient w.r.t. the encoder output.
    """
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    r = np.asarray(r_segments, dtype=float)
    q = np.asarray(quantized_segments, dtype=float)
    if r.shape != q.shape:
        raise ValueError(f"shape mismatch {r.shape} vs {q.shape}")
    count = max(1, int(np.prod(r.shape[:-1])))
    diff = q - r
    sq = float(np.sum(diff * diff)) / count
    return VQLoss(
        loss=sq + beta * sq,
        codebook_term=sq,
        commitment_term=beta * sq,
        grad_codebook_side=2.0 * diff / count,
        grad_encoder_side=-2.0 * beta * diff / count,
    )
