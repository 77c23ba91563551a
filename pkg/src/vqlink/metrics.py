"""Evaluation metrics: BLEU, cosine match, compression accounting, error rates."""

from __future__ import annotations

import hashlib
import math
import struct
from collections import Counter
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BleuReport:
    precisions: tuple  # clipped p_n for n = 1..max_n
    brevity_penalty: float
    bleu_n: tuple  # BP * p_n
    score: float  # BP * exp(sum w_n log p_n), 0 if any weighted p_n is 0
    empty_hypothesis: bool = False


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def clipped_precision(reference, hypothesis, n: int) -> float:
    hyp = _ngrams(hypothesis, n)
    total = sum(hyp.values())
    if total == 0:
        return 0.0
    ref = _ngrams(reference, n)
    matched = sum(min(c, ref[g]) for g, c in hyp.items())
    return matched / total


def brevity_penalty(ref_len: int, hyp_len: int) -> float:
    if hyp_len == 0:
        return 0.0
    if hyp_len > ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / hyp_len)


def bleu(reference, hypothesis, max_n: int = 4, weights=None) -> BleuReport:
    """Single-reference sentence BLEU without smoothing.

    Token sequences may be lists of strings or whitespace-separated text.
    """
    if isinstance(reference, str):
        reference = reference.split()
    if isinstance(hypothesis, str):
        hypothesis = hypothesis.split()
    reference, hypothesis = list(reference), list(hypothesis)
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    if weights is None:
        weights = [1.0 / max_n] * max_n
    weights = list(weights)
    if len(weights) != max_n or abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError("need max_n weights summing to one")
    if not hypothesis:
        zeros = (0.0,) * max_n
        return BleuReport(zeros, 0.0, zeros, 0.0, empty_hypothesis=True)

    p = tuple(clipped_precision(reference, hypothesis, n) for n in range(1, max_n + 1))
    bp = brevity_penalty(len(reference), len(hypothesis))
    bleu_n = tuple(bp * pn for pn in p)
    if any(pn == 0 and w > 0 for pn, w in zip(p, weights)):
        score = 0.0
    else:
        score = bp * math.exp(sum(w * math.log(pn) for pn, w in zip(p, weights) if w > 0))
    return BleuReport(p, bp, bleu_n, min(score, 1.0))


def cumulative_bleu(reference, hypothesis, n: int) -> float:
    """Uniformly weighted BLEU up to order ``n`` (the usual BLEU-n)."""
    return bleu(reference, hypothesis, max_n=n).score


# --------------------------------------------------------------------------
# semantic match


def sentence_match(emb_a, emb_b):
    """Cosine similarity; returns ``(value, degenerate)``.

    A zero-norm input yields ``(0.0, True)``.
    """
    a = np.asarray(emb_a, dtype=float).ravel()
    b = np.asarray(emb_b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"embedding dims differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0, True
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0)), False


def toy_embed(tokens, dim: int = 256) -> np.ndarray:
    """Hashed bag-of-tokens embedding, L2-normalised; word order is ignored."""
    if dim < 8:
        raise ValueError("dim must be >= 8")
    if isinstance(tokens, str):
        tokens = tokens.split()
    vec = np.zeros(dim)
    for tok in tokens:
        h = int.from_bytes(hashlib.blake2b(str(tok).encode(), digest_size=8).digest(), "little")
        vec[h % dim] += 1.0 if (h >> 63) & 1 else -1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def semantic_match(reference, hypothesis, dim: int = 256) -> float:
    value, _ = sentence_match(toy_embed(reference, dim), toy_embed(hypothesis, dim))
    return value


# --------------------------------------------------------------------------
# compression


@dataclass(frozen=True)
class CompressionReport:
    size_r: int  # bits per token before quantisation
    size_t: int  # bits per token after quantisation, word accounting
    factor: float  # F = size_r / size_t, word accounting
    size_ratio: float  # size_t / size_r
    size_t_bits: int  # bits per token when indices cost ceil(log2 K) bits
    factor_bits: float
    efficiency: float | None  # match / log2(F); None when F <= 1
    efficiency_defined: bool


def compression_report(d_r: int, d_z: int, K: int, bits_per_value: int = 32, match_score: float = 1.0, accounting: str = "word") -> CompressionReport:
    if d_z <= 0 or d_r % d_z:
        raise ValueError(f"d_z={d_z} does not divide d_r={d_r}")
    s = d_r // d_z
    size_r = d_r * bits_per_value
    size_t = s * bits_per_value
    size_bits = s * math.ceil(math.log2(K))
    factor = size_r / size_t
    factor_bits = size_r / size_bits
    f = factor if accounting == "word" else factor_bits
    defined = f > 1
    eff = match_score / math.log2(f) if defined else None
    return CompressionReport(size_r, size_t, factor, size_t / size_r, size_bits, factor_bits, eff, defined)


# --------------------------------------------------------------------------
# error rates and the float demonstrator


def error_rate(tx, rx) -> float:
    tx, rx = np.asarray(tx), np.asarray(rx)
    if tx.shape != rx.shape:
        raise ValueError(f"length mismatch {tx.shape} vs {rx.shape}")
    if tx.size == 0:
        return 0.0
    return float(np.count_nonzero(tx != rx)) / tx.size


def ber_ser(tx_bits, rx_bits, tx_syms=None, rx_syms=None):
    ber = error_rate(tx_bits, rx_bits)
    ser = error_rate(tx_syms, rx_syms) if tx_syms is not None else float("nan")
    return ber, ser


def float_bitflip(value: float, bit_position: int) -> float:
    """Invert one bit of the float32 pattern; position 0 is the sign bit."""
    if not 0 <= bit_position < 32:
        raise ValueError("bit_position must lie in 0..31")
    (word,) = struct.unpack(">I", struct.pack(">f", value))
    word ^= 1 << (31 - bit_position)
    return struct.unpack(">f", struct.pack(">I", word))[0]
