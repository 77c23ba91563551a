"""Desk-scale semantic codec trained with cross entropy plus the VQ-VAE loss.

The encoder maps each token to ``r_i = tanh(E[id_i] W1 + b1)``; the decoder
classifies each position independently from ``logits = r_hat W2 + b2``.
Quantisation (and, during noise-tuning, channel corruption of the indices)
sits between them and is crossed with the straight-through rule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .vq import (
    Codebook,
    dequantize,
    kmeans_fit,
    pack_indices,
    quantize,
    segment,
    unpack_indices,
    vqvae_loss,
)

log = logging.getLogger(__name__)

PAD = "<pad>"
UNK = "<unk>"
CHECKPOINT_MAGIC = "vqlink-checkpoint"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


# --------------------------------------------------------------------------
# vocabulary and corpus


@dataclass(frozen=True)
class ToyVocab:
    tokens: tuple

    def __post_init__(self):
        tokens = tuple(self.tokens)
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be distinct")
        if UNK not in tokens:
            raise ValueError("vocabulary must contain the UNK token")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "_lookup", {t: i for i, t in enumerate(tokens)})

    @property
    def lookup(self) -> dict:
        return self._lookup

    @property
    def unk_id(self) -> int:
        return self._lookup[UNK]

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_corpus(cls, sentences, max_size: int | None = None) -> "ToyVocab":
        counts = {}
        for s in sentences:
            for w in s.lower().split():
                counts[w] = counts.get(w, 0) + 1
        words = sorted(counts, key=lambda w: (-counts[w], w))
        if max_size is not None:
            words = words[: max_size - 2]
        return cls((PAD, UNK, *sorted(words)))


def tokenize(text: str, vocab: ToyVocab) -> np.ndarray:
    unk = vocab.unk_id
    return np.array([vocab.lookup.get(w, unk) for w in text.lower().split()], dtype=np.int64)


def detokenize(ids, vocab: ToyVocab) -> str:
    return " ".join(vocab.tokens[int(i)] for i in ids)


_SUBJECTS = ["a man", "a woman", "the dog", "a child", "two girls", "the boy", "an old man", "a player"]
_VERBS = ["pushes", "rides", "carries", "watches", "throws", "holds", "paints", "follows"]
_OBJECTS = ["a bicycle", "the ball", "a red kite", "a small boat", "the camera", "a blue bag", "the flag"]
_PLACES = [
    "along the beach",
    "near the river",
    "in the park",
    "on a busy street",
    "across the field",
    "under the bridge",
    "by the lake",
]
_TAILS = ["", "as the sun sets", "in the rain", "at night", "with a friend"]


def toy_corpus(num_sentences: int = 200, seed: int = 0) -> list:
    """Synthetic caption-like sentences from a small template grammar."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(num_sentences):
        parts = [
            _SUBJECTS[rng.integers(len(_SUBJECTS))],
            _VERBS[rng.integers(len(_VERBS))],
            _OBJECTS[rng.integers(len(_OBJECTS))],
            _PLACES[rng.integers(len(_PLACES))],
            _TAILS[rng.integers(len(_TAILS))],
        ]
        out.append(" ".join(p for p in parts if p))
    return out


def read_corpus(path) -> list:
    return [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]


# --------------------------------------------------------------------------
# parameters


BLOCKS = ("E", "W1", "b1", "W2", "b2")


@dataclass
class ToyCodecParams:
    E: np.ndarray  # (V, d_e), shared token embedding
    W1: np.ndarray  # (d_e, d_r)
    b1: np.ndarray  # (d_r,)
    W2: np.ndarray  # (d_r, V)
    b2: np.ndarray  # (V,)

    @classmethod
    def init(cls, vocab_size: int, d_e: int = 16, d_r: int = 16, seed: int = 0) -> "ToyCodecParams":
        rng = np.random.default_rng(seed)
        return cls(
            E=rng.standard_normal((vocab_size, d_e)),
            W1=rng.standard_normal((d_e, d_r)) / np.sqrt(d_e),
            b1=np.zeros(d_r),
            W2=rng.standard_normal((d_r, vocab_size)) * 0.1,
            b2=np.zeros(vocab_size),
        )

    @property
    def d_r(self) -> int:
        return self.W1.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.E.shape[0]

    def copy(self) -> "ToyCodecParams":
        return ToyCodecParams(*(getattr(self, b).copy() for b in BLOCKS))

    def blocks(self) -> dict:
        return {b: getattr(self, b) for b in BLOCKS}


@dataclass
class TrainConfig:
    learning_rate: float = 1.0
    epochs: int = 60
    batch_size: int = 16
    beta: float = 0.25
    noise_tuning: bool = False
    channel: str = "TDL-A"
    ebn0_db: float = 3.0
    noise_mode: str = "phy"  # or "surrogate"
    flip_prob: float | None = None  # surrogate p; calibrated from the PHY when None
    d_e: int = 16
    d_r: int = 16
    d_z: int = 2
    K: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.d_r % self.d_z:
            raise ValueError("d_z must divide d_r")
        if self.noise_mode not in ("surrogate", "phy"):
            raise ValueError(f"unknown noise mode {self.noise_mode!r}")


# --------------------------------------------------------------------------
# forward pieces


def encode(ids, params: ToyCodecParams) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= params.vocab_size):
        raise ValueError("token id outside the vocabulary")
    return np.tanh(params.E[ids] @ params.W1 + params.b1)


def decode(r_hat, params: ToyCodecParams):
    """Logits ``(n, V)`` and per-position argmax ids (lowest id on ties)."""
    logits = np.asarray(r_hat, dtype=float) @ params.W2 + params.b2
    return logits, np.argmax(logits, axis=1)


def ce_loss(logits, targets):
    """Mean categorical cross entropy and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=float)
    targets = np.asarray(targets, dtype=np.int64)
    n = logits.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logsum[:, None]
    loss = -float(logp[np.arange(n), targets].mean())
    grad = np.exp(logp)
    grad[np.arange(n), targets] -= 1.0
    return loss, grad / n


def token_accuracy(predicted, target) -> float:
    """Fraction of reference positions reproduced; missing positions count as errors."""
    predicted = np.asarray(predicted)
    target = np.asarray(target)
    if target.size == 0:
        return 1.0 if predicted.size == 0 else 0.0
    k = min(predicted.size, target.size)
    return float(np.count_nonzero(predicted[:k] == target[:k])) / target.size


# --------------------------------------------------------------------------
# loss and gradients


@dataclass
class LossBreakdown:
    total: float
    ce: float
    codebook: float
    commitment: float
    accuracy: float


@dataclass
class Frozen:
    """Stop-gradient quantities captured at a forward pass."""

    r: np.ndarray  # encoder output (n, d_r)
    indices: np.ndarray  # encoder-side indices (n, s)
    received: np.ndarray  # indices the decoder saw (n, s)
    offset: np.ndarray  # r_hat - r, held constant by the straight-through rule
    quantized: np.ndarray  # codebook entries of ``indices`` at capture time


def forward(ids, params: ToyCodecParams, codebook: Codebook, corrupt=None) -> Frozen:
    r = encode(ids, params)
    t = quantize(segment(r, codebook.d_z), codebook)
    t_rx = t if corrupt is None else corrupt(t)
    r_hat = dequantize(t_rx, codebook).reshape(r.shape)
    q = dequantize(t, codebook)
    return Frozen(r=r, indices=t, received=t_rx, offset=r_hat - r, quantized=q)


def straight_through_objective(ids, params: ToyCodecParams, codebook: Codebook, frozen: Frozen, beta: float) -> float:
    """The training loss as a smooth function of the parameters.

    Every stop-gradient quantity comes from ``frozen``; its ordinary gradient
    equals the straight-through/stop-gradient gradient of
    :func:`loss_and_grads`. Used by finite-difference checks.
    """
    ids = np.asarray(ids, dtype=np.int64)
    r = encode(ids, params)
    logits, _ = decode(r + frozen.offset, params)
    ce, _ = ce_loss(logits, ids)
    q_live = codebook.vectors[frozen.indices]
    q_const = frozen.quantized
    segs_live = segment(r, codebook.d_z)
    segs_const = segment(frozen.r, codebook.d_z)
    count = segs_live.shape[0] * segs_live.shape[1]
    codebook_term = np.sum((segs_const - q_live) ** 2) / count
    commitment = np.sum((q_const - segs_live) ** 2) / count
    return float(ce + codebook_term + beta * commitment)


def loss_and_grads(ids, params: ToyCodecParams, codebook: Codebook, beta: float = 0.25, corrupt=None, frozen=None):
    """Loss breakdown and gradients for every parameter block and ``Z``."""
    ids = np.asarray(ids, dtype=np.int64)
    if frozen is None:
        frozen = forward(ids, params, codebook, corrupt)
    d_z = codebook.d_z
    emb = params.E[ids]
    r = np.tanh(emb @ params.W1 + params.b1)
    r_hat = r + frozen.offset
    logits, pred = decode(r_hat, params)
    ce, g_logits = ce_loss(logits, ids)

    q = dequantize(frozen.indices, codebook)
    vq = vqvae_loss(segment(r, d_z), q, beta)

    grads = {"W2": r_hat.T @ g_logits, "b2": g_logits.sum(axis=0)}
    d_r = g_logits @ params.W2.T + vq.grad_encoder_side.reshape(r.shape)
    d_pre = d_r * (1.0 - r * r)
    grads["W1"] = emb.T @ d_pre
    grads["b1"] = d_pre.sum(axis=0)
    dE = np.zeros_like(params.E)
    np.add.at(dE, ids, d_pre @ params.W1.T)
    grads["E"] = dE
    dZ = np.zeros_like(codebook.vectors)
    np.add.at(dZ, frozen.indices.ravel(), vq.grad_codebook_side.reshape(-1, d_z))
    grads["Z"] = dZ

    total = ce + vq.loss
    breakdown = LossBreakdown(
        total=total,
        ce=ce,
        codebook=vq.codebook_term,
        commitment=vq.commitment_term,
        accuracy=token_accuracy(pred, ids),
    )
    return breakdown, grads


def train_step(batch, params: ToyCodecParams, codebook: Codebook, config: TrainConfig, corrupt=None):
    """One plain gradient-descent step; returns new params, codebook, losses."""
    ids = np.concatenate([np.asarray(b, dtype=np.int64) for b in batch]) if isinstance(batch, list) else batch
    breakdown, grads = loss_and_grads(ids, params, codebook, config.beta, corrupt)
    if not np.isfinite(breakdown.total):
        raise TrainingDiverged(
            f"non-finite loss (ce={breakdown.ce}, codebook={breakdown.codebook}, "
            f"commitment={breakdown.commitment}); lower the learning rate"
        )
    lr = config.learning_rate
    new = ToyCodecParams(*(getattr(params, b) - lr * grads[b] for b in BLOCKS))
    new_codebook = Codebook(codebook.vectors - lr * grads["Z"])
    return new, new_codebook, breakdown


# --------------------------------------------------------------------------
# noise-tuning channels


@dataclass
class IndexFlipChannel:
    """Surrogate channel: each index becomes a different random index w.p. ``p``."""

    p: float
    K: int

    def __call__(self, indices, rng: np.random.Generator) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        hit = rng.random(indices.shape) < self.p
        shift = rng.integers(1, self.K, size=indices.shape)
        return np.where(hit, (indices + shift) % self.K, indices)


@dataclass
class PhyIndexChannel:
    """Indices through the full PHY chain: pack, transmit, unpack."""

    link: object  # link.PhyLink
    ebn0_db: float
    K: int

    def __call__(self, indices, rng: np.random.Generator) -> np.ndarray:
        from .link import deframe_payload, frame_payload

        indices = np.asarray(indices, dtype=np.int64)
        bits = pack_indices(indices, self.K)
        info = self.link.config.info_bits
        blocks = frame_payload(bits, indices.size, info)
        rng_channel = np.random.default_rng(rng.integers(2**63))
        rng_noise = np.random.default_rng(rng.integers(2**63))
        result = self.link.transmit(blocks, self.ebn0_db, rng_channel, rng_noise)
        _, payload = deframe_payload(result.decoded)
        out, _ = unpack_indices(payload, self.K, indices.size)
        return out.reshape(indices.shape)


def noise_tune_corrupt(indices, channel_stack, rng: np.random.Generator) -> np.ndarray:
    """Corrupt transmitted indices; forward pass only (gradients pass straight through)."""
    return channel_stack(indices, rng)


def calibrate_flip_prob(link, ebn0_db: float, K: int, transmissions: int = 100, indices_per_tx: int = 64, seed: int = 0) -> float:
    """Measured index error rate of the PHY chain, used as the surrogate ``p``."""
    rng = np.random.default_rng(seed)
    stack = PhyIndexChannel(link, ebn0_db, K)
    errors = total = 0
    for _ in range(transmissions):
        t = rng.integers(0, K, indices_per_tx)
        errors += int(np.count_nonzero(stack(t, rng) != t))
        total += t.size
    return errors / total


# --------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    params: ToyCodecParams
    codebook: Codebook
    history: list = field(default_factory=list)  # per-epoch mean LossBreakdown totals


def init_codebook(params: ToyCodecParams, K: int, d_z: int, seed: int = 0) -> Codebook:
    """k-means over the segments of every vocabulary token's latent."""
    r = encode(np.arange(params.vocab_size), params)
    segs = segment(r, d_z).reshape(-1, d_z)
    if segs.shape[0] >= K:
        return kmeans_fit(segs, K, max_iters=50, seed=seed).codebook
    rng = np.random.default_rng(seed)
    return Codebook(rng.uniform(-1, 1, (K, d_z)))


def build_noise_channel(config: TrainConfig, link=None):
    if not config.noise_tuning:
        return None
    if config.noise_mode == "phy":
        return PhyIndexChannel(link, config.ebn0_db, config.K)
    p = config.flip_prob
    if p is None:
        p = calibrate_flip_prob(link, config.ebn0_db, config.K, seed=config.seed)
        log.info("calibrated surrogate flip probability %.4f at %.1f dB", p, config.ebn0_db)
    return IndexFlipChannel(p, config.K)


def train(sentences, vocab: ToyVocab, config: TrainConfig, params=None, codebook=None, link=None) -> TrainResult:
    """Train (or fine-tune) the codec; deterministic for a fixed config."""
    data = [tokenize(s, vocab) for s in sentences]
    data = [d for d in data if d.size]
    if params is None:
        params = ToyCodecParams.init(len(vocab), config.d_e, config.d_r, seed=config.seed)
    if codebook is None:
        codebook = init_codebook(params, config.K, config.d_z, seed=config.seed)
    if config.noise_tuning and link is None and (config.noise_mode == "phy" or config.flip_prob is None):
        from .link import PhyConfig, PhyLink

        link = PhyLink(PhyConfig(channel=config.channel))
    stack = build_noise_channel(config, link)
    rng = np.random.default_rng([config.seed, 1])
    corrupt = None
    if stack is not None:
        corrupt = lambda t: noise_tune_corrupt(t, stack, rng)  # noqa: E731

    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        totals = []
        for start in range(0, len(order), config.batch_size):
            batch = [data[i] for i in order[start : start + config.batch_size]]
            params, codebook, bd = train_step(batch, params, codebook, config, corrupt)
            totals.append(bd.total)
        history.append(float(np.mean(totals)))
        log.debug("epoch %d loss %.5f", epoch, history[-1])
    return TrainResult(params, codebook, history)


def evaluate_loss(sentences, vocab: ToyVocab, params: ToyCodecParams, codebook: Codebook, beta: float = 0.25) -> LossBreakdown:
    ids = np.concatenate([tokenize(s, vocab) for s in sentences])
    bd, _ = loss_and_grads(ids, params, codebook, beta)
    return bd


# --------------------------------------------------------------------------
# checkpoints


def _write_matrix(lines: list, name: str, arr: np.ndarray) -> None:
    arr = np.atleast_2d(arr) if arr.ndim == 1 else arr
    lines.append(f"[{name}] {arr.shape[0]} {arr.shape[1]}")
    lines.extend(" ".join(repr(float(v)) for v in row) for row in arr)


def save_checkpoint(path, vocab: ToyVocab, params: ToyCodecParams, codebook: Codebook | None = None, meta=None) -> None:
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}", f"[vocab] {len(vocab)}", *vocab.tokens]
    for b in BLOCKS:
        _write_matrix(lines, b, getattr(params, b))
    if codebook is not None:
        _write_matrix(lines, "Z", codebook.vectors)
    for key, value in (meta or {}).items():
        lines.append(f"[meta] {key} {value}")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class Checkpoint:
    vocab: ToyVocab
    params: ToyCodecParams
    codebook: Codebook | None
    meta: dict


def load_checkpoint(path) -> Checkpoint:
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    if len(head) != 2 or head[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a codec checkpoint")
    if int(head[1]) != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {head[1]}")
    pos = 1
    mats, meta, vocab = {}, {}, None
    while pos < len(lines):
        line = lines[pos]
        pos += 1
        if not line.startswith("["):
            continue
        tag, _, rest = line.partition("] ")
        tag = tag[1:]
        if tag == "vocab":
            n = int(rest)
            vocab = ToyVocab(tuple(lines[pos : pos + n]))
            pos += n
        elif tag == "meta":
            key, _, value = rest.partition(" ")
            meta[key] = value
        else:
            rows, cols = (int(v) for v in rest.split())
            mats[tag] = np.array([[float(v) for v in lines[pos + i].split()] for i in range(rows)]).reshape(rows, cols)
            pos += rows
    params = ToyCodecParams(
        E=mats["E"], W1=mats["W1"], b1=mats["b1"].ravel(), W2=mats["W2"], b2=mats["b2"].ravel()
    )
    codebook = Codebook(mats["Z"]) if "Z" in mats else None
    return Checkpoint(vocab, params, codebook, meta)


def with_overrides(config: TrainConfig, **kwargs) -> TrainConfig:
    return replace(config, **kwargs)
