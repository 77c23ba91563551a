"""Fast built-in checks run by ``vqlink selftest``."""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from . import codec as cd
from .channel import awgn, ebn0_to_noise_var, rng_stream
from .fec import polar_construct, polar_decode_sc, polar_encode, rate_match, rate_recover
from .harness import fixed_point_to_latents, float_bits_to_latents, latents_to_fixed_point, latents_to_float_bits
from .link import PhyConfig, PhyLink, deframe_payload, frame_payload
from .modem import qam_demap_hard, qam_map, qam_ser_awgn
from .ofdm import GridShape, grid_map, ofdm_demodulate, ofdm_modulate
from .vq import Codebook, pack_indices, unpack_indices


def check_analytic_ser(ebn0_db: float = 8.0, m: int = 4, symbols: int = 100_000, seed: int = 0) -> bool:
    rng = rng_stream(seed, "selftest", "ser")
    bits = rng.integers(0, 2, symbols * m, dtype=np.uint8)
    tx = qam_map(bits, m)
    rx = awgn(tx, ebn0_to_noise_var(ebn0_db, m, 1.0), rng)
    err = np.any(qam_demap_hard(rx, m).reshape(-1, m) != bits.reshape(-1, m), axis=1)
    p = qam_ser_awgn(m * 10 ** (ebn0_db / 10), m)
    se = np.sqrt(p * (1 - p) / symbols)
    return abs(err.mean() - p) <= 3 * se


def check_polar_roundtrip(n: int = 200) -> bool:
    code = polar_construct(1024, 480, 2.0, 960)
    msg = np.random.default_rng(1).integers(0, 2, (n, 480), dtype=np.uint8)
    cw = rate_match(polar_encode(msg, code), 960)
    llr = np.where(cw == 0, 1.0, -1.0)
    return np.array_equal(polar_decode_sc(rate_recover(llr, 1024), code), msg)


def check_ofdm_roundtrip() -> bool:
    shape = GridShape(72, 14, 2)
    sym = np.random.default_rng(2).standard_normal(shape.capacity) + 0j
    rx = ofdm_demodulate(ofdm_modulate(grid_map(sym, shape)), 128, 9, shape)
    return np.allclose(rx.data.ravel(), sym, atol=1e-12)


def check_payload_roundtrips() -> bool:
    rng = np.random.default_rng(3)
    idx = rng.integers(0, 1000, 300)
    ok = np.array_equal(unpack_indices(pack_indices(idx, 1000), 1000)[0], idx)
    r = np.tanh(rng.standard_normal(64))
    ok &= np.array_equal(float_bits_to_latents(latents_to_float_bits(r), r.size), r.astype(np.float32))
    ok &= np.max(np.abs(fixed_point_to_latents(latents_to_fixed_point(r), r.size) - r)) <= 1.0 / 65535
    payload = rng.integers(0, 2, 1000, dtype=np.uint8)
    count, back = deframe_payload(frame_payload(payload, 1000, 480))
    ok &= count == 1000 and np.array_equal(back[:1000], payload)
    return bool(ok)


def check_serialization() -> bool:
    corpus = cd.toy_corpus(20, seed=0)
    vocab = cd.ToyVocab.from_corpus(corpus)
    params = cd.ToyCodecParams.init(len(vocab), seed=4)
    book = Codebook(np.random.default_rng(5).standard_normal((16, 2)))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "ckpt.txt"
        cd.save_checkpoint(path, vocab, params, book)
        back = cd.load_checkpoint(path)
        book.save(Path(tmp) / "book.txt")
        book2 = Codebook.load(Path(tmp) / "book.txt")
    same = all(np.array_equal(getattr(params, b), getattr(back.params, b)) for b in cd.BLOCKS)
    return same and back.vocab == vocab and np.array_equal(back.codebook.vectors, book.vectors) and np.array_equal(book2.vectors, book.vectors)


def check_noiseless_link() -> bool:
    link = PhyLink(PhyConfig())
    blocks = np.random.default_rng(6).integers(0, 2, (3, 480), dtype=np.uint8)
    res = link.transmit(blocks, float("inf"), rng_stream(0, "c"), rng_stream(0, "n"))
    return np.array_equal(res.decoded, blocks)


CHECKS = (
    ("analytic 16-QAM SER at 8 dB", check_analytic_ser),
    ("polar noiseless round trip", check_polar_roundtrip),
    ("OFDM round trip", check_ofdm_roundtrip),
    ("payload packing round trips", check_payload_roundtrips),
    ("checkpoint and codebook serialization", check_serialization),
    ("noiseless TDL-A 2x2 link", check_noiseless_link),
)


def run_selftest(verbose: bool = False) -> list:
    failures = []
    for name, fn in CHECKS:
        ok = bool(fn())
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name}")
        if not ok:
            failures.append(name)
    return failures
