"""End-to-end pipeline: codec, transmission modes, Monte-Carlo sweeps, CSV."""

from __future__ import annotations

import configparser
import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import codec as cd
from .channel import rng_stream
from .link import PhyConfig, PhyLink, deframe_payload, frame_payload
from .metrics import bleu, error_rate, semantic_match
from .vq import Codebook, dequantize, index_bits, pack_indices, quantize, segment, unpack_indices

log = logging.getLogger(__name__)

MODES = ("direct", "tanh", "vq")
FIXED_POINT_BITS = 16
DIRECT_CLAMP = 1e6
PREFIX_BITS = 16


class ConfigError(ValueError):
    """Invalid pipeline configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


# --------------------------------------------------------------------------
# configuration


_PHY_INT = (
    "mother_length",
    "info_bits",
    "coded_bits",
    "bits_per_symbol",
    "num_subcarriers",
    "num_ofdm_symbols",
    "fft_size",
    "cp_length",
    "num_tx",
    "num_rx",
)


@dataclass
class PipelineConfig:
    mode: str = "vq"
    checkpoint: str | None = None
    codebook: str | None = None
    corpus: str | None = None
    ebn0_db: tuple = (0.0, 2.0, 4.0, 6.0, 8.0)
    trials: int = 20
    master_seed: int = 0
    phy: PhyConfig = field(default_factory=PhyConfig)

    def validate(self, check_files: bool = True) -> "PipelineConfig":
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}, got {self.mode!r}")
        if self.checkpoint is None:
            raise ConfigError("checkpoint", "a codec checkpoint is required")
        if self.mode == "vq" and self.codebook is None:
            raise ConfigError("codebook", "vq mode needs a codebook file")
        if self.trials < 1:
            raise ConfigError("trials", "must be >= 1")
        if not self.ebn0_db:
            raise ConfigError("ebn0_db", "need at least one EbN0 point")
        phy = self.phy
        if abs(phy.rate * phy.coded_bits - phy.info_bits) > 0 or not phy.info_bits < phy.coded_bits <= phy.mother_length:
            raise ConfigError("coded_bits", "need info_bits < coded_bits <= mother_length")
        if check_files:
            for name in ("checkpoint", "codebook", "corpus"):
                path = getattr(self, name)
                if path is not None and not Path(path).is_file():
                    raise ConfigError(name, f"file not found: {path}")
        return self

    @classmethod
    def from_ini(cls, path) -> "PipelineConfig":
        parser = configparser.ConfigParser()
        try:
            if not parser.read(path):
                raise ConfigError("config", f"cannot read {path}")
        except configparser.Error as exc:
            raise ConfigError("config", f"malformed file: {exc}") from exc
        return cls.from_parser(parser, base=Path(path).parent)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser, base: Path | None = None) -> "PipelineConfig":
        cfg = cls()
        if parser.has_section("pipeline"):
            sec = parser["pipeline"]
            for key in sec:
                if key not in ("mode", "checkpoint", "codebook", "corpus", "ebn0_db", "trials", "master_seed"):
                    raise ConfigError(key, "unknown [pipeline] key")
            cfg.mode = sec.get("mode", cfg.mode)
            for name in ("checkpoint", "codebook", "corpus"):
                value = sec.get(name)
                if value:
                    p = Path(value)
                    if base is not None and not p.is_absolute():
                        p = base / p
                    setattr(cfg, name, str(p))
            try:
                if "ebn0_db" in sec:
                    cfg.ebn0_db = parse_float_list(sec["ebn0_db"])
                cfg.trials = sec.getint("trials", cfg.trials)
                cfg.master_seed = sec.getint("master_seed", cfg.master_seed)
            except ValueError as exc:
                raise ConfigError("pipeline", str(exc)) from exc
        if parser.has_section("phy"):
            kwargs = {}
            known = {f.name for f in fields(PhyConfig)}
            for key, value in parser["phy"].items():
                if key not in known:
                    raise ConfigError(key, "unknown [phy] key")
                try:
                    if key in _PHY_INT:
                        kwargs[key] = int(value)
                    elif key == "design_snr_db":
                        kwargs[key] = float(value)
                    else:
                        kwargs[key] = value or None
                except ValueError as exc:
                    raise ConfigError(key, str(exc)) from exc
            try:
                cfg.phy = PhyConfig(**kwargs)
            except ValueError as exc:
                raise ConfigError("phy", str(exc)) from exc
        return cfg

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        parser["pipeline"] = {
            "mode": self.mode,
            "checkpoint": self.checkpoint or "",
            "codebook": self.codebook or "",
            "corpus": self.corpus or "",
            "ebn0_db": ",".join(repr(float(v)) for v in self.ebn0_db),
            "trials": str(self.trials),
            "master_seed": str(self.master_seed),
        }
        parser["phy"] = {k: "" if v is None else str(v) for k, v in asdict(self.phy).items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()


def parse_float_list(text: str) -> tuple:
    values = tuple(float(v) for v in text.replace(" ", "").split(",") if v)
    if not values:
        raise ValueError("empty list")
    return values


# --------------------------------------------------------------------------
# system and payload conversion


@dataclass
class System:
    vocab: cd.ToyVocab
    params: cd.ToyCodecParams
    codebook: Codebook | None
    link: PhyLink
    mode: str
    d_z: int = 2
    corpus: list = field(default_factory=list)

    @classmethod
    def from_config(cls, cfg: PipelineConfig) -> "System":
        ckpt = cd.load_checkpoint(cfg.checkpoint)
        codebook = Codebook.load(cfg.codebook) if cfg.codebook else None
        if cfg.mode == "vq" and ckpt.params.d_r % codebook.d_z:
            raise ConfigError("codebook", f"d_z={codebook.d_z} does not divide d_r={ckpt.params.d_r}")
        corpus = cd.read_corpus(cfg.corpus) if cfg.corpus else cd.toy_corpus(200, seed=0)
        return cls(ckpt.vocab, ckpt.params, codebook, PhyLink(cfg.phy), cfg.mode, codebook.d_z if codebook else 2, corpus)

    def noiseless_prediction(self, ids) -> np.ndarray:
        r = cd.encode(ids, self.params)
        if self.mode == "vq":
            t = quantize(segment(r, self.codebook.d_z), self.codebook)
            r = dequantize(t, self.codebook).reshape(r.shape)
        elif self.mode == "tanh":
            r = fixed_point_to_latents(latents_to_fixed_point(r), r.size).reshape(r.shape)
        return cd.decode(r, self.params)[1]


def latents_to_float_bits(r) -> np.ndarray:
    """Big-endian float32 bit-cast, MSB first per value."""
    raw = np.asarray(r, dtype=">f4").ravel().view(np.uint8)
    return np.unpackbits(raw)


def float_bits_to_latents(bits, count: int) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)[: 32 * count]
    with np.errstate(invalid="ignore", over="ignore"):
        values = np.packbits(bits).view(">f4").astype(float)
    values = np.nan_to_num(values, nan=0.0, posinf=DIRECT_CLAMP, neginf=-DIRECT_CLAMP)
    return np.clip(values, -DIRECT_CLAMP, DIRECT_CLAMP)


def latents_to_fixed_point(r) -> np.ndarray:
    """Uniform 16-bit codes over [-1, 1], MSB first per value."""
    levels = (1 << FIXED_POINT_BITS) - 1
    codes = np.rint((np.clip(np.asarray(r, dtype=float).ravel(), -1, 1) + 1.0) / 2.0 * levels).astype(np.int64)
    shifts = np.arange(FIXED_POINT_BITS - 1, -1, -1)
    return ((codes[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def fixed_point_to_latents(bits, count: int) -> np.ndarray:
    levels = (1 << FIXED_POINT_BITS) - 1
    groups = np.asarray(bits, dtype=np.int64)[: FIXED_POINT_BITS * count].reshape(count, FIXED_POINT_BITS)
    codes = groups @ (1 << np.arange(FIXED_POINT_BITS - 1, -1, -1))
    return codes / levels * 2.0 - 1.0


def unit_bits(system: System) -> int:
    """Payload bits per transmitted unit (latent value or index)."""
    if system.mode == "direct":
        return 32
    if system.mode == "tanh":
        return FIXED_POINT_BITS
    return index_bits(system.codebook.K)


def units_per_token(system: System) -> int:
    d_r = system.params.d_r
    return d_r // system.codebook.d_z if system.mode == "vq" else d_r


# --------------------------------------------------------------------------
# single transmission


@dataclass
class TrialRecord:
    mode: str
    channel: str
    ebn0_db: float
    seed: int
    trial: int
    ber: float  # post-decoding payload bit error rate
    raw_ber: float  # pre-decoding hard-decision bit error rate
    ser: float  # pre-decoding QAM symbol error rate
    index_error_rate: float  # vq mode only, NaN otherwise
    token_accuracy: float
    bleu_1: float
    bleu_2: float
    bleu_3: float
    bleu_4: float
    match: float
    compression_f: float  # word accounting against 32-bit latents
    payload_bits: int
    isi_flag: bool


METRIC_FIELDS = (
    "ber",
    "raw_ber",
    "ser",
    "index_error_rate",
    "token_accuracy",
    "bleu_1",
    "bleu_2",
    "bleu_3",
    "bleu_4",
    "match",
    "compression_f",
    "payload_bits",
)


def transmit(ids, system: System, ebn0_db: float, rng_channel, rng_noise, tamper=None, seed: int = 0, trial: int = 0):
    """Send one sentence through the chain; returns ``(TrialRecord, predicted ids)``.

    ``tamper`` (optional) maps the received payload bits to new bits before
    reconstruction; tests use it to force specific bit errors.
    """
    ids = np.asarray(ids, dtype=np.int64)
    r = cd.encode(ids, system.params)
    if system.mode == "direct":
        payload = latents_to_float_bits(r)
        count = r.size
    elif system.mode == "tanh":
        payload = latents_to_fixed_point(r)
        count = r.size
    else:
        t = quantize(segment(r, system.codebook.d_z), system.codebook)
        payload = pack_indices(t, system.codebook.K)
        count = t.size

    info = system.link.config.info_bits
    blocks = frame_payload(payload, count, info, PREFIX_BITS)
    result = system.link.transmit(blocks, ebn0_db, rng_channel, rng_noise)
    rx_blocks = result.decoded
    ber = error_rate(blocks, rx_blocks)
    rx_count, rx_payload = deframe_payload(rx_blocks, PREFIX_BITS)
    if tamper is not None:
        rx_payload = np.asarray(tamper(rx_payload.copy()), dtype=np.uint8)

    # trust the received length only as far as the received bits reach
    per_token = units_per_token(system)
    width = unit_bits(system)
    rx_count = min(rx_count, rx_payload.size // width)
    n_rx = rx_count // per_token
    used = n_rx * per_token
    index_err = float("nan")
    if system.mode == "direct":
        r_hat = float_bits_to_latents(rx_payload, used)
    elif system.mode == "tanh":
        r_hat = fixed_point_to_latents(rx_payload, used)
    else:
        t_hat, _ = unpack_indices(rx_payload, system.codebook.K, used)
        k = min(t_hat.size, t.size)
        index_err = (np.count_nonzero(t_hat[:k] != t.ravel()[:k]) + (t.size - k)) / max(t.size, 1)
        r_hat = dequantize(t_hat, system.codebook)
    r_hat = np.asarray(r_hat, dtype=float).reshape(n_rx, system.params.d_r)
    pred = cd.decode(r_hat, system.params)[1] if n_rx else np.zeros(0, dtype=np.int64)

    ref_tokens = [system.vocab.tokens[i] for i in ids]
    hyp_tokens = [system.vocab.tokens[i] for i in pred]
    bleus = [bleu(ref_tokens, hyp_tokens, max_n=n).score for n in (1, 2, 3, 4)]
    comp = 1.0 if system.mode != "vq" else float(system.codebook.d_z)
    record = TrialRecord(
        mode=system.mode,
        channel=system.link.config.channel,
        ebn0_db=float(ebn0_db),
        seed=int(seed),
        trial=int(trial),
        ber=ber,
        raw_ber=result.raw_bit_errors / max(result.raw_bits, 1),
        ser=result.symbol_errors / max(result.symbols, 1),
        index_error_rate=float(index_err),
        token_accuracy=cd.token_accuracy(pred, ids),
        bleu_1=bleus[0],
        bleu_2=bleus[1],
        bleu_3=bleus[2],
        bleu_4=bleus[3],
        match=semantic_match(ref_tokens, hyp_tokens),
        compression_f=comp,
        payload_bits=int(payload.size),
        isi_flag=bool(result.isi),
    )
    return record, pred


# --------------------------------------------------------------------------
# sweeps


def trial_streams(master_seed: int, point: int, trial: int):
    """Independent ``(data, channel, noise)`` generators for one trial."""
    return tuple(rng_stream(master_seed, point, trial, name) for name in ("data", "channel", "noise"))


def run_trial(system: System, master_seed: int, point: int, trial: int, ebn0_db: float) -> TrialRecord:
    rng_data, rng_channel, rng_noise = trial_streams(master_seed, point, trial)
    sentence = system.corpus[int(rng_data.integers(len(system.corpus)))]
    ids = cd.tokenize(sentence, system.vocab)
    record, _ = transmit(ids, system, ebn0_db, rng_channel, rng_noise, seed=master_seed, trial=trial)
    return record


_WORKER_SYSTEM = None


def _worker_init(cfg: PipelineConfig):
    global _WORKER_SYSTEM
    _WORKER_SYSTEM = System.from_config(cfg)


def _worker_trial(args):
    master_seed, point, trial, ebn0 = args
    try:
        return run_trial(_WORKER_SYSTEM, master_seed, point, trial, ebn0)
    except Exception as exc:  # a failing trial becomes a failed row
        return f"{type(exc).__name__}: {exc}"


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("VQLINK_THREADS")
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


CSV_COLUMNS = (
    ("status", "mode", "channel", "ebn0_db", "seed", "point", "trials", "failed")
    + tuple(f"{m}_{s}" for m in METRIC_FIELDS for s in ("mean", "se"))
    + ("isi_flag", "message")
)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def aggregate(records: list) -> dict:
    """Mean and standard error of every metric (NaNs ignored)."""
    out = {}
    for name in METRIC_FIELDS:
        vals = np.array([getattr(r, name) for r in records], dtype=float)
        vals = vals[~np.isnan(vals)]
        if vals.size == 0:
            out[f"{name}_mean"] = out[f"{name}_se"] = float("nan")
            continue
        out[f"{name}_mean"] = float(np.mean(vals))
        out[f"{name}_se"] = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return out


def sweep(cfg: PipelineConfig, workers: int | None = None, system: System | None = None):
    """Run every (EbN0 point, trial); returns ``(rows, records)``.

    Results are reduced in (point, trial) order, so the output does not
    depend on the number of workers.
    """
    cfg.validate(check_files=system is None)
    jobs = [(cfg.master_seed, p, t, float(e)) for p, e in enumerate(cfg.ebn0_db) for t in range(cfg.trials)]
    n = worker_count(workers)
    if n > 1 and system is None:
        with ProcessPoolExecutor(max_workers=n, initializer=_worker_init, initargs=(cfg,)) as pool:
            results = list(pool.map(_worker_trial, jobs, chunksize=max(1, len(jobs) // (4 * n))))
    else:
        global _WORKER_SYSTEM
        _WORKER_SYSTEM = system if system is not None else System.from_config(cfg)
        results = [_worker_trial(j) for j in jobs]

    rows, records = [], []
    for p, ebn0 in enumerate(cfg.ebn0_db):
        chunk = results[p * cfg.trials : (p + 1) * cfg.trials]
        ok = [r for r in chunk if isinstance(r, TrialRecord)]
        failed = [(t, r) for t, r in enumerate(chunk) if not isinstance(r, TrialRecord)]
        records.extend(ok)
        base = {
            "mode": cfg.mode,
            "channel": cfg.phy.channel,
            "ebn0_db": float(ebn0),
            "seed": cfg.master_seed,
            "point": p,
        }
        row = dict(base, status="ok", trials=len(ok), failed=len(failed), message="")
        row.update(aggregate(ok))
        row["isi_flag"] = bool(ok and ok[0].isi_flag)
        rows.append(row)
        for t, msg in failed:
            rows.append(dict(base, status="failed", trials=t, failed=1, isi_flag=False, message=msg))
    return rows, records


def rows_to_csv(rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row.get(c, "")) for c in CSV_COLUMNS])
    return buf.getvalue()
