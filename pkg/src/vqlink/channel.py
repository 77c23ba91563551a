"""Channel models for ``y = h x + n``: AWGN, flat Rayleigh, TDL, MIMO, LMMSE.

Every stochastic function takes an explicit ``numpy.random.Generator``. Use
:func:`rng_stream` to derive independent, named streams from a master seed.
"""

from __future__ import annotations

import ast
import configparser
import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .ofdm import subcarrier_bins

#: Diagonal loading applied when LMMSE runs at zero noise variance.
SINGULAR_EPS = 1e-12


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream keys must be non-negative")
        return int(key)
    digest = hashlib.blake2b(str(key).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_stream(master_seed: int, *keys) -> np.random.Generator:
    """Counter-derived generator for ``(master_seed, *keys)``.

    Keys may be non-negative integers (trial or point counters) or strings
    (stream domains such as ``"channel"`` or ``"noise"``).
    """
    entropy = [_key_to_int(master_seed)] + [_key_to_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def complex_normal(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Draws from CN(0, var)."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


# --------------------------------------------------------------------------
# noise


def ebn0_to_noise_var(ebn0_db: float, m: int, rate: float) -> float:
    """Complex noise variance for unit-energy symbols; Eb counts information bits."""
    if m < 1:
        raise ValueError(f"bits per symbol must be >= 1, got {m}")
    if not 0 < rate <= 1:
        raise ValueError(f"code rate must lie in (0, 1], got {rate}")
    if np.isposinf(ebn0_db):
        return 0.0
    return 1.0 / (rate * m * 10.0 ** (ebn0_db / 10.0))


def awgn(samples, noise_var: float, rng: np.random.Generator) -> np.ndarray:
    samples = np.asarray(samples, dtype=complex)
    if noise_var < 0:
        raise ValueError("noise_var must be non-negative")
    if noise_var == 0:
        return samples.copy()
    return samples + complex_normal(rng, samples.shape, noise_var)


# --------------------------------------------------------------------------
# flat Rayleigh


def rayleigh_flat(grid_data, rng: np.random.Generator, h=None):
    """Block-flat fading on ``[stream, symbol, subcarrier]`` data.

    One CN(0, 1) coefficient per (stream, OFDM symbol) scales every subcarrier
    of that block. Pass ``h`` to force the coefficients.
    """
    grid_data = np.asarray(grid_data, dtype=complex)
    if h is None:
        h = complex_normal(rng, grid_data.shape[:2])
    h = np.broadcast_to(np.asarray(h, dtype=complex), grid_data.shape[:2])
    return grid_data * h[..., None], np.array(h)


def equalize_flat(faded, h) -> np.ndarray:
    """Zero-forcing inverse of :func:`rayleigh_flat` with known ``h``."""
    return np.asarray(faded) / np.asarray(h)[..., None]


# --------------------------------------------------------------------------
# tapped delay line


@dataclass(frozen=True)
class ChannelProfile:
    """Power-delay profile of a tapped-delay-line channel.

    ``taps`` holds ``(delay_samples, avg_power_linear)`` pairs with strictly
    increasing non-negative delays and powers summing to one.
    """

    name: str
    taps: tuple
    fading: str = "rayleigh"
    seed_domain: str = ""

    def __post_init__(self):
        taps = tuple((int(d), float(p)) for d, p in self.taps)
        if not taps:
            raise ValueError("profile needs at least one tap")
        delays = [d for d, _ in taps]
        powers = np.array([p for _, p in taps])
        if delays[0] < 0 or any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValueError(f"tap delays must be non-negative and strictly increasing: {delays}")
        if np.any(powers < 0) or abs(powers.sum() - 1.0) > 1e-9:
            raise ValueError(f"tap powers must be non-negative and sum to 1, got {powers.sum()!r}")
        if self.fading not in ("rayleigh", "fixed"):
            raise ValueError(f"fading must be 'rayleigh' or 'fixed', got {self.fading!r}")
        object.__setattr__(self, "taps", taps)
        if not self.seed_domain:
            object.__setattr__(self, "seed_domain", self.name)

    @property
    def delays(self) -> np.ndarray:
        return np.array([d for d, _ in self.taps], dtype=int)

    @property
    def powers(self) -> np.ndarray:
        return np.array([p for _, p in self.taps])

    @property
    def max_delay(self) -> int:
        return int(self.delays[-1])


def parse_profiles(text: str) -> dict:
    """Parse profile sections (``name``, ``taps``, optional ``fading``)."""
    parser = configparser.ConfigParser()
    parser.read_string(text)
    profiles = {}
    for section in parser.sections():
        body = parser[section]
        if "taps" not in body:
            raise ValueError(f"profile [{section}] lacks a 'taps' field")
        taps = ast.literal_eval(body["taps"])
        prof = ChannelProfile(
            name=body.get("name", section),
            taps=tuple(taps),
            fading=body.get("fading", "rayleigh"),
            seed_domain=section,
        )
        profiles[section] = prof
    return profiles


def load_profiles(path=None) -> dict:
    """Profiles keyed by section name; defaults to the shipped TDL file."""
    if path is None:
        text = resources.files("vqlink").joinpath("tdl_profiles.ini").read_text()
    else:
        text = Path(path).read_text()
    return parse_profiles(text)


def get_profile(name: str, path=None) -> ChannelProfile:
    profiles = load_profiles(path)
    for key, prof in profiles.items():
        if name in (key, prof.name):
            return prof
    raise KeyError(f"unknown channel profile {name!r}; available: {sorted(profiles)}")


def tdl_draw(profile: ChannelProfile, rng: np.random.Generator, num_rx: int = 1, num_tx: int = 1):
    """Tap coefficients ``(num_rx, num_tx, taps)``, each ``sqrt(P) * CN(0, 1)``."""
    amp = np.sqrt(profile.powers)
    if profile.fading == "fixed":
        return np.broadcast_to(amp, (num_rx, num_tx, amp.size)).astype(complex)
    return amp * complex_normal(rng, (num_rx, num_tx, amp.size))


def tdl_apply(profile: ChannelProfile, samples, rng: np.random.Generator, coefficients=None, num_rx=None):
    """Convolve time samples with one block-fading TDL realisation.

    ``samples`` has shape ``(T,)`` or ``(num_tx, T)``. Returns the received
    samples ``(num_rx, T)`` (or ``(T,)`` for 1-D SISO input) and the tap
    coefficients ``(num_rx, num_tx, taps)``. The output is truncated to the
    input length.
    """
    samples = np.asarray(samples, dtype=complex)
    squeeze = samples.ndim == 1
    x = np.atleast_2d(samples)
    num_tx, T = x.shape
    if num_rx is None:
        num_rx = num_tx
    if coefficients is None:
        coefficients = tdl_draw(profile, rng, num_rx, num_tx)
    coefficients = np.asarray(coefficients, dtype=complex).reshape(num_rx, num_tx, len(profile.taps))
    y = np.zeros((num_rx, T), dtype=complex)
    for p, d in enumerate(profile.delays):
        if d >= T:
            continue
        shifted = np.zeros_like(x)
        shifted[:, d:] = x[:, : T - d]
        y += coefficients[:, :, p] @ shifted
    if squeeze and num_rx == 1:
        y = y[0]
    return y, coefficients


def tdl_frequency_response(profile: ChannelProfile, coefficients, num_subcarriers: int, fft_size: int):
    """Per-subcarrier channel matrices ``(num_subcarriers, num_rx, num_tx)``."""
    bins = subcarrier_bins(num_subcarriers, fft_size)
    phase = np.exp(-2j * np.pi * np.outer(bins, profile.delays) / fft_size)
    return np.einsum("kp,rtp->krt", phase, np.asarray(coefficients))


def isi_present(profile: ChannelProfile, cp_length: int) -> bool:
    return profile.max_delay >= cp_length


# --------------------------------------------------------------------------
# MIMO and equalisation


def mimo_apply(H, x, noise_var: float, rng: np.random.Generator) -> np.ndarray:
    """``y = H x + n`` per resource element.

    ``H`` has shape ``(..., num_rx, num_tx)`` and ``x`` ``(..., num_tx)``.
    """
    H = np.asarray(H, dtype=complex)
    x = np.asarray(x, dtype=complex)
    if H.ndim < 2 or x.shape[-1] != H.shape[-1]:
        raise ValueError(f"channel {H.shape} incompatible with streams {x.shape}")
    y = np.einsum("...rt,...t->...r", H, x)
    return awgn(y, noise_var, rng)


def _lmmse_filter(H, noise_var: float) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if noise_var < 0:
        raise ValueError("noise_var must be non-negative")
    Hh = np.conj(np.swapaxes(H, -1, -2))
    gram = Hh @ H
    load = noise_var if noise_var > 0 else 0.0
    eye = np.eye(H.shape[-1])
    try:
        inv = np.linalg.inv(gram + load * eye)
    except np.linalg.LinAlgError:
        inv = np.linalg.inv(gram + (load + SINGULAR_EPS) * eye)
    if noise_var == 0 and not np.all(np.isfinite(inv)):
        inv = np.linalg.inv(gram + SINGULAR_EPS * eye)
    return inv @ Hh


def lmmse_equalize(H, y, noise_var: float) -> np.ndarray:
    """``x_hat = (H^H H + noise_var I)^-1 H^H y`` per resource element."""
    W = _lmmse_filter(H, noise_var)
    return np.einsum("...tr,...r->...t", W, np.asarray(y, dtype=complex))


def lmmse_detect(H, y, noise_var: float):
    """Unbiased LMMSE estimates and their post-equalisation noise variance.

    With ``g = diag(W H)`` the estimate ``x_hat / g`` sees noise plus
    interference of variance ``(1 - g) / g`` for unit-energy symbols.
    """
    W = _lmmse_filter(H, noise_var)
    g = np.real(np.einsum("...ii->...i", W @ np.asarray(H, dtype=complex)))
    x_hat = np.einsum("...tr,...r->...t", W, np.asarray(y, dtype=complex))
    with np.errstate(divide="ignore", invalid="ignore"):
        x_unbiased = x_hat / g
        eff = np.where(g > 0, np.clip((1.0 - g) / g, 0.0, None), np.inf)
    if noise_var == 0:
        eff = np.zeros_like(g)
        x_unbiased = x_hat
    return x_unbiased, eff


def lmmse_sinr(H, noise_var: float) -> np.ndarray:
    """Per-stream post-LMMSE SINR, ``g / (1 - g)``."""
    W = _lmmse_filter(H, noise_var)
    g = np.real(np.einsum("...ii->...i", W @ np.asarray(H, dtype=complex)))
    return g / (1.0 - g)
