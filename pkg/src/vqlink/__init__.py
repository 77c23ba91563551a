"""Codebook-based semantic transport over a simulated 5G-like physical layer."""

from .channel import rng_stream
from .codec import ToyCodecParams, ToyVocab, TrainConfig, train
from .fec import PolarCode, polar_construct, polar_decode_sc, polar_encode
from .harness import PipelineConfig, System, sweep, transmit
from .link import PhyConfig, PhyLink
from .metrics import bleu, compression_report, float_bitflip, sentence_match, toy_embed
from .vq import Codebook, dequantize, kmeans_fit, quantize, vqvae_loss

__version__ = "0.1.0"

__all__ = [
    "Codebook",
    "PhyConfig",
    "PhyLink",
    "PipelineConfig",
    "PolarCode",
    "System",
    "ToyCodecParams",
    "ToyVocab",
    "TrainConfig",
    "bleu",
    "compression_report",
    "dequantize",
    "float_bitflip",
    "kmeans_fit",
    "polar_construct",
    "polar_decode_sc",
    "polar_encode",
    "quantize",
    "rng_stream",
    "sentence_match",
    "sweep",
    "toy_embed",
    "train",
    "transmit",
    "vqvae_loss",
]
