"""Bit-level PHY chain: Polar -> QAM -> OFDM -> channel -> LMMSE -> SC decode."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from .fec import (
    LLR_CLIP,
    PolarCode,
    polar_construct,
    polar_decode_sc,
    polar_encode,
    rate_match,
    rate_recover,
)
from .modem import qam_demap_hard, qam_demap_llr, qam_map
from .ofdm import GridShape, grid_map, ofdm_demodulate, ofdm_modulate

FLAT_CHANNELS = ("awgn", "rayleigh")


@dataclass(frozen=True)
class PhyConfig:
    """PHY parameters; defaults follow the reference system table."""

    mother_length: int = 1024
    info_bits: int = 480
    coded_bits: int = 960
    design_snr_db: float = 2.0
    bits_per_symbol: int = 4
    num_subcarriers: int = 72
    num_ofdm_symbols: int = 14
    fft_size: int = 128
    cp_length: int = 9
    num_tx: int = 2
    num_rx: int = 2
    channel: str = "TDL-A"
    llr_method: str = "exact"
    profile_path: str | None = None

    @property
    def rate(self) -> float:
        return self.info_bits / self.coded_bits

    def __post_init__(self):
        if self.coded_bits % self.bits_per_symbol:
            raise ValueError("coded bits must be a multiple of bits per symbol")
        if self.num_rx < self.num_tx:
            raise ValueError("spatial multiplexing needs num_rx >= num_tx")
        if self.channel == "awgn" and self.num_rx != self.num_tx:
            raise ValueError("awgn channel requires num_rx == num_tx")


@dataclass
class LinkResult:
    decoded: np.ndarray  # (blocks, info_bits)
    symbol_errors: int
    symbols: int
    raw_bit_errors: int
    raw_bits: int
    isi: bool = False
    noise_var: float = 0.0
    extras: dict = field(default_factory=dict)


class PhyLink:
    """Transmits batches of information blocks through the full PHY chain."""

    def __init__(self, config: PhyConfig = PhyConfig()):
        self.config = config
        self.code: PolarCode = polar_construct(
            config.mother_length, config.info_bits, config.design_snr_db, config.coded_bits
        )
        self.profile = None
        if config.channel not in FLAT_CHANNELS:
            self.profile = ch.get_profile(config.channel, config.profile_path)
        self.shape = GridShape(config.num_subcarriers, config.num_ofdm_symbols, config.num_tx)
        symbols_per_block = config.coded_bits // config.bits_per_symbol
        self.blocks_per_frame = self.shape.capacity // symbols_per_block
        if self.blocks_per_frame < 1:
            raise ValueError("one coded block does not fit into the resource grid")

    @property
    def isi(self) -> bool:
        return self.profile is not None and ch.isi_present(self.profile, self.config.cp_length)

    def noise_var(self, ebn0_db: float) -> float:
        return ch.ebn0_to_noise_var(ebn0_db, self.config.bits_per_symbol, self.config.rate)

    def encode_blocks(self, blocks) -> np.ndarray:
        return rate_match(polar_encode(blocks, self.code), self.config.coded_bits)

    def transmit(self, blocks, ebn0_db: float, rng_channel, rng_noise) -> LinkResult:
        """Send ``(B, info_bits)`` blocks; one channel realisation per call."""
        cfg = self.config
        blocks = np.atleast_2d(np.asarray(blocks, dtype=np.uint8))
        if blocks.shape[1] != cfg.info_bits:
            raise ValueError(f"blocks must have {cfg.info_bits} bits, got {blocks.shape[1]}")
        noise_var = self.noise_var(ebn0_db)
        taps = None
        if self.profile is not None:
            taps = ch.tdl_draw(self.profile, rng_channel, cfg.num_rx, cfg.num_tx)

        decoded = []
        sym_err = nsym = raw_err = nraw = 0
        for start in range(0, blocks.shape[0], self.blocks_per_frame):
            frame = blocks[start : start + self.blocks_per_frame]
            coded = self.encode_blocks(frame)
            llr, rx_hard = self._frame(coded.ravel(), noise_var, taps, rng_channel, rng_noise)
            hard_groups = rx_hard.reshape(-1, cfg.bits_per_symbol)
            tx_groups = coded.reshape(-1, cfg.bits_per_symbol)
            sym_err += int(np.any(hard_groups != tx_groups, axis=1).sum())
            nsym += hard_groups.shape[0]
            raw_err += int(np.count_nonzero(rx_hard != coded.ravel()))
            nraw += coded.size
            llr = llr.reshape(frame.shape[0], cfg.coded_bits)
            decoded.append(polar_decode_sc(rate_recover(llr, cfg.mother_length), self.code))
        return LinkResult(
            decoded=np.concatenate(decoded, axis=0),
            symbol_errors=sym_err,
            symbols=nsym,
            raw_bit_errors=raw_err,
            raw_bits=nraw,
            isi=self.isi,
            noise_var=noise_var,
        )

    def _frame(self, coded_bits, noise_var, taps, rng_channel, rng_noise):
        cfg = self.config
        symbols = qam_map(coded_bits, cfg.bits_per_symbol)
        grid = grid_map(symbols, self.shape)
        x = ofdm_modulate(grid, cfg.fft_size, cfg.cp_length)
        sym_len = cfg.fft_size + cfg.cp_length

        if cfg.channel == "awgn":
            y = x
            H = np.broadcast_to(np.eye(cfg.num_rx, dtype=complex), (1, 1, cfg.num_rx, cfg.num_tx))
        elif cfg.channel == "rayleigh":
            Hl = ch.complex_normal(rng_channel, (cfg.num_ofdm_symbols, cfg.num_rx, cfg.num_tx))
            xb = x.reshape(cfg.num_tx, cfg.num_ofdm_symbols, sym_len)
            y = np.einsum("lrt,tln->rln", Hl, xb).reshape(cfg.num_rx, -1)
            H = Hl[:, None]
        else:
            y, _ = ch.tdl_apply(self.profile, x, rng_channel, coefficients=taps, num_rx=cfg.num_rx)
            Hk = ch.tdl_frequency_response(self.profile, taps, cfg.num_subcarriers, cfg.fft_size)
            H = Hk[None]

        # noise is drawn for the full frame so its realisation does not depend on payload size
        y = ch.awgn(y, noise_var, rng_noise)
        rx_shape = GridShape(cfg.num_subcarriers, cfg.num_ofdm_symbols, cfg.num_rx)
        rx = ofdm_demodulate(y, cfg.fft_size, cfg.cp_length, rx_shape).data
        Y = np.moveaxis(rx, 0, -1)  # (sym, sc, rx)
        H = np.broadcast_to(H, Y.shape[:2] + (cfg.num_rx, cfg.num_tx))
        x_hat, eff = ch.lmmse_detect(H, Y, noise_var)
        x_hat = np.moveaxis(x_hat, -1, 0).ravel()[: symbols.size]
        eff = np.moveaxis(eff, -1, 0).ravel()[: symbols.size]

        hard = qam_demap_hard(x_hat, cfg.bits_per_symbol)
        if noise_var == 0:
            llr = np.where(hard == 0, LLR_CLIP, -LLR_CLIP)
        else:
            eff = np.maximum(eff, 1e-12)
            llr = qam_demap_llr(x_hat, eff, cfg.bits_per_symbol, cfg.llr_method)
        return llr, hard


def frame_payload(payload, count: int, info_bits: int, prefix_bits: int = 16) -> np.ndarray:
    """Prefix ``count`` (MSB first) and split into zero-padded info blocks."""
    if not 0 <= count < (1 << prefix_bits):
        raise ValueError(f"count {count} does not fit in {prefix_bits} bits")
    prefix = (count >> np.arange(prefix_bits - 1, -1, -1)) & 1
    bits = np.concatenate([prefix.astype(np.uint8), np.asarray(payload, dtype=np.uint8).ravel()])
    nblocks = max(1, -(-bits.size // info_bits))
    out = np.zeros(nblocks * info_bits, dtype=np.uint8)
    out[: bits.size] = bits
    return out.reshape(nblocks, info_bits)


def deframe_payload(blocks, prefix_bits: int = 16):
    """Inverse of :func:`frame_payload`: returns ``(count, payload_bits)``."""
    bits = np.asarray(blocks, dtype=np.uint8).ravel()
    count = int(bits[:prefix_bits] @ (1 << np.arange(prefix_bits - 1, -1, -1)))
    return count, bits[prefix_bits:]
