"""Frequency-domain channel equalization (zero-forcing and Wiener/MMSE).

Both equalizers divide the received spectrum by the estimated channel
response over an N_K-point DFT grid and truncate back to the preamble
span.  ZF raises on spectral nulls to preserve its contrast with MMSE;
the MMSE gain is regularized by the inverse SNR and never blows up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chanest import ChannelEstimate
from .signal_model import PREAMBLE_LEN, ComplexBaseband

DFT_SIZE = 512  # next power of two above preamble plus channel tail
ZF_NULL_FLOOR = 1e-8


class SpectralNullError(ValueError):
    """ZF equalization hit a deep fade; regularize or fall back to MMSE."""


@dataclass
class EqualizerChoice:
    kind: str                   # "zf" or "mmse"
    snr_db: float | None = None  # required for mmse

    def __post_init__(self):
        if self.kind not in ("zf", "mmse"):
            raise ValueError(f"unknown equalizer kind {self.kind!r}")
        if self.kind == "mmse" and (self.snr_db is None or not np.isfinite(self.snr_db)):
            raise ValueError("mmse equalization requires a finite SNR")


def channel_response(h_best: ChannelEstimate, n_fft: int = DFT_SIZE) -> np.ndarray:
    """DFT of the estimated impulse response over n_fft bins."""
    impulse = np.zeros(n_fft, dtype=np.complex128)
    for tap, delay in zip(h_best.taps, h_best.delays):
        impulse[int(delay) % n_fft] += tap
    return np.fft.fft(impulse)


def _check_length(r: ComplexBaseband, n_fft: int):
    if n_fft < len(r):
        raise ValueError(f"n_fft {n_fft} is smaller than the signal length {len(r)}")


def zf_equalize(r: ComplexBaseband, h_best: ChannelEstimate,
                n_fft: int = DFT_SIZE, out_len: int = PREAMBLE_LEN) -> ComplexBaseband:
    """Per-bin division by the estimated response; exact inverse when noiseless."""
    _check_length(r, n_fft)
    response = channel_response(h_best, n_fft)
    low = np.abs(response) < ZF_NULL_FLOOR
    if np.any(low):
        raise SpectralNullError(
            f"{int(np.count_nonzero(low))} bins below {ZF_NULL_FLOOR} in the estimated response")
    spectrum = np.fft.fft(r.samples, n_fft) / response
    return ComplexBaseband(np.fft.ifft(spectrum)[:out_len], r.sample_rate)


def mmse_equalize(r: ComplexBaseband, h_best: ChannelEstimate, snr_db: float,
                  n_fft: int = DFT_SIZE, out_len: int = PREAMBLE_LEN) -> ComplexBaseband:
    """Per-bin Wiener division H*R / (|H|^2 + 1/gamma) with gamma the linear SNR."""
    if not np.isfinite(snr_db):
        raise ValueError("mmse equalization requires a finite SNR in dB")
    _check_length(r, n_fft)
    gamma = 10.0 ** (snr_db / 10.0)
    response = channel_response(h_best, n_fft)
    gain = np.conj(response) / (np.abs(response) ** 2 + 1.0 / gamma)
    spectrum = np.fft.fft(r.samples, n_fft) * gain
    return ComplexBaseband(np.fft.ifft(spectrum)[:out_len], r.sample_rate)


def equalize(choice: EqualizerChoice, r: ComplexBaseband, h_best: ChannelEstimate,
             n_fft: int = DFT_SIZE, out_len: int = PREAMBLE_LEN) -> ComplexBaseband:
    if choice.kind == "zf":
        return zf_equalize(r, h_best, n_fft, out_len)
    return mmse_equalize(r, h_best, choice.snr_db, n_fft, out_len)
