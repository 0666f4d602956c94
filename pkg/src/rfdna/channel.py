"""Rayleigh tapped-delay-line channel simulation.

A channel profile lists path delays (ns) and normalized tap variances;
a realization is one draw of complex Gaussian taps.  Noise is calibrated
against the mean power of the signal's occupied span.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .signal_model import STANDARD_RATE, ComplexBaseband

_SAMPLE_PERIOD_NS = 1e9 / STANDARD_RATE  # 50 ns


@dataclass
class ChannelProfile:
    """Statistical description of an L-path Rayleigh fading channel."""

    n_paths: int
    delays_ns: tuple
    variances: tuple
    rms_delay_spread_ns: float | None = None

    def __post_init__(self):
        self.delays_ns = tuple(float(d) for d in self.delays_ns)
        self.variances = tuple(float(v) for v in self.variances)
        if len(self.delays_ns) != self.n_paths or len(self.variances) != self.n_paths:
            raise ValueError("delays and variances must each list one value per path")
        if any(b <= a for a, b in zip(self.delays_ns, self.delays_ns[1:])):
            raise ValueError("path delays must be strictly increasing")
        for d in self.delays_ns:
            if abs(d / _SAMPLE_PERIOD_NS - round(d / _SAMPLE_PERIOD_NS)) > 1e-9:
                raise ValueError(f"delay {d} ns is not a multiple of the {_SAMPLE_PERIOD_NS:.0f} ns sample period")
        total = sum(self.variances)
        if abs(total - 1.0) > 1e-3:
            raise ValueError(f"tap variances must sum to 1 within 1e-3, got {total}")

    def delays_samples(self, sample_rate: float = STANDARD_RATE) -> np.ndarray:
        return np.array([round(d * 1e-9 * sample_rate) for d in self.delays_ns], dtype=int)


PROFILE_L2 = ChannelProfile(2, (50.0, 200.0), (0.8, 0.2))
PROFILE_L3 = ChannelProfile(3, (50.0, 150.0, 250.0), (0.8, 0.13, 0.07))
PROFILE_L5 = ChannelProfile(5, (50.0, 100.0, 150.0, 200.0, 250.0),
                            (0.865, 0.117, 0.016, 0.002, 0.0003))

SHIPPED_PROFILES = {"l2": PROFILE_L2, "l3": PROFILE_L3, "l5": PROFILE_L5}


def tap_variance(k: int, t_s: float, t_r: float) -> float:
    """Exponentially decaying tap variance for path index k.

    t_s is the sample period and t_r the RMS delay spread, both in seconds.
    """
    if k < 0:
        raise ValueError("path index must be nonnegative")
    if t_s <= 0 or t_r <= 0:
        raise ValueError("sample period and delay spread must be positive")
    ratio = t_s / t_r
    return 0.5 * (1.0 - math.exp(-ratio)) * math.exp(-k * ratio)


@dataclass
class ChannelRealization:
    """One drawn set of complex taps at integer sample delays."""

    taps: np.ndarray
    delays: np.ndarray

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.complex128)
        self.delays = np.asarray(self.delays, dtype=int)
        if self.taps.shape != self.delays.shape:
            raise ValueError("taps and delays must have matching lengths")
        if not np.all(np.isfinite(self.taps)):
            raise ValueError("taps must be finite")


IDENTITY_CHANNEL = ChannelRealization(np.array([1.0 + 0j]), np.array([0]))


def draw_channel(profile: ChannelProfile, rng: np.random.Generator,
                 sample_rate: float = STANDARD_RATE) -> ChannelRealization:
    """Draw one realization: tap k is A+jB with Var(A)=Var(B)=sigma_k^2/2."""
    sigma = np.sqrt(np.asarray(profile.variances) / 2.0)
    re = rng.standard_normal(profile.n_paths) * sigma
    im = rng.standard_normal(profile.n_paths) * sigma
    return ChannelRealization(re + 1j * im, profile.delays_samples(sample_rate))


def apply_channel(s: ComplexBaseband, ch: ChannelRealization) -> ComplexBaseband:
    """Filter through the TDL: sum_k alpha_k * s(m - tau_k), tail retained."""
    n = len(s)
    max_delay = int(ch.delays.max())
    if max_delay >= n:
        raise ValueError(f"max delay {max_delay} exceeds signal length {n}")
    out = np.zeros(n + max_delay, dtype=np.complex128)
    for tap, delay in zip(ch.taps, ch.delays):
        out[delay:delay + n] += tap * s.samples
    return ComplexBaseband(out, s.sample_rate)


def occupied_span_power(s: ComplexBaseband) -> float:
    """Mean power between the first and last nonzero samples."""
    nz = np.nonzero(np.abs(s.samples))[0]
    if nz.size == 0:
        raise ValueError("signal is all zero; SNR reference power undefined")
    span = s.samples[nz[0]:nz[-1] + 1]
    return float(np.mean(np.abs(span) ** 2))


def add_awgn(s: ComplexBaseband, snr_db: float | None,
             rng: np.random.Generator) -> tuple[ComplexBaseband, float]:
    """Add circular complex Gaussian noise at the requested SNR.

    Returns the noisy signal and the per-sample noise variance actually
    used, for downstream estimators that consume the noise statistics.
    snr_db=None (or +inf) disables noise.
    """
    if snr_db is None or math.isinf(snr_db):
        return ComplexBaseband(s.samples.copy(), s.sample_rate), 0.0
    p_signal = occupied_span_power(s)
    noise_var = p_signal / (10.0 ** (snr_db / 10.0))
    scale = math.sqrt(noise_var / 2.0)
    noise = scale * (rng.standard_normal(len(s)) + 1j * rng.standard_normal(len(s)))
    return ComplexBaseband(s.samples + noise, s.sample_rate), noise_var


def parse_channel_profile(text: str) -> ChannelProfile:
    """Parse a profile line of the form 'L=2; delays_ns=50,200; variances=0.8,0.2'."""
    fields = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        key, _, value = part.partition("=")
        fields[key.strip().lower()] = value.strip()
    try:
        n = int(fields["l"])
        delays = tuple(float(v) for v in fields["delays_ns"].split(","))
        variances = tuple(float(v) for v in fields["variances"].split(","))
    except KeyError as exc:
        raise ValueError(f"channel profile text missing field {exc}") from exc
    spread = float(fields["rms_delay_spread_ns"]) if "rms_delay_spread_ns" in fields else None
    return ChannelProfile(n, delays, variances, spread)


def realization_to_csv(ch: ChannelRealization) -> str:
    lines = ["tap_index, delay_samples, re, im"]
    for i, (tap, delay) in enumerate(zip(ch.taps, ch.delays)):
        lines.append(f"{i}, {int(delay)}, {float(tap.real)!r}, {float(tap.imag)!r}")
    return "\n".join(lines) + "\n"
