"""Gabor-surface statistical fingerprints.

The equalized preamble is expanded into Gabor coefficients on a periodic
time-frequency grid; either the normalized magnitude-squared or the phase
surface is tiled into patches, and each patch (plus the whole surface)
contributes four statistics: standard deviation, variance, skewness, and
excess kurtosis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_model import ComplexBaseband

STATISTIC_NAMES = ("std", "var", "skew", "kurt")
SURFACE_REGION = 0  # region id of the whole-surface statistics; patches are 1..N_R


def gaussian_window(length: int, std: float) -> np.ndarray:
    """Gaussian analysis window wrapped on the periodic grid, peak at index 0."""
    m = np.arange(length)
    dist = np.minimum(m, length - m)
    return np.exp(-0.5 * (dist / std) ** 2)


@dataclass
class GaborConfig:
    m_shifts: int = 186
    freq_bins: int = 186
    stride: int = 1
    window: np.ndarray | None = None  # defaults to a periodic Gaussian, std M/8

    def __post_init__(self):
        if min(self.m_shifts, self.freq_bins, self.stride) < 1:
            raise ValueError("m_shifts, freq_bins, and stride must be positive")
        if self.freq_bins < self.stride:
            raise ValueError(f"freq_bins {self.freq_bins} must be >= stride {self.stride}")
        if (self.m_shifts * self.stride) % self.freq_bins != 0:
            raise ValueError(f"m_shifts*stride ({self.m_shifts * self.stride}) must be "
                             f"a multiple of freq_bins ({self.freq_bins})")
        if self.window is None:
            self.window = gaussian_window(self.period, self.m_shifts / 8.0)
        else:
            self.window = np.asarray(self.window, dtype=np.complex128)
            if self.window.size != self.period:
                raise ValueError(f"window length {self.window.size} != period {self.period}")

    @property
    def period(self) -> int:
        return self.m_shifts * self.stride


def gabor_coefficients(s: ComplexBaseband, cfg: GaborConfig) -> np.ndarray:
    """Gabor expansion on the periodic grid; rows are shifts 1..M, columns bins.

    The input is trimmed or cyclically extended to the M*stride period.
    """
    period = cfg.period
    x = s.samples
    if x.size >= period:
        x = x[:period]
    else:
        x = np.tile(x, int(np.ceil(period / x.size)))[:period]

    window = np.conj(cfg.window)
    shifts = (np.arange(1, cfg.m_shifts + 1) * cfg.stride) % period
    # row eta: x(m) * W*(m - eta*stride), window indexed periodically
    windowed = x[None, :] * np.stack([np.roll(window, shift) for shift in shifts])
    if period == cfg.freq_bins:
        folded = windowed
    else:
        folded = windowed.reshape(cfg.m_shifts, period // cfg.freq_bins, cfg.freq_bins).sum(axis=1)
    return np.fft.fft(folded, axis=1)


@dataclass
class TFSurface:
    values: np.ndarray
    kind: str  # "magnitude" or "phase"


def to_surface(coefficients: np.ndarray, kind: str) -> TFSurface:
    """Normalized magnitude-squared (peak exactly 1) or principal-value phase."""
    coefficients = np.asarray(coefficients)
    if coefficients.size == 0:
        raise ValueError("empty coefficient matrix")
    if kind == "magnitude":
        mag = np.abs(coefficients) ** 2
        peak = mag.max()
        if peak == 0:
            raise ValueError("all-zero coefficients; magnitude normalization undefined")
        return TFSurface(mag / peak, kind)
    if kind == "phase":
        phase = np.angle(coefficients)
        phase[phase <= -np.pi] = np.pi  # keep values in (-pi, pi]
        return TFSurface(phase, kind)
    raise ValueError(f"unknown surface kind {kind!r}")


def _moments(values: np.ndarray) -> tuple[float, float, float, float]:
    """Population std/var and standardized skew / excess kurtosis.

    Zero-variance input yields skew = kurt = 0 by convention.
    """
    mean = values.mean()
    centered = values - mean
    var = float(np.mean(centered ** 2))
    std = float(np.sqrt(var))
    if var == 0.0:
        return 0.0, 0.0, 0.0, 0.0
    skew = float(np.mean(centered ** 3) / std ** 3)
    kurt = float(np.mean(centered ** 4) / var ** 2 - 3.0)
    return std, var, skew, kurt


@dataclass
class Fingerprint:
    features: np.ndarray
    layout: tuple          # (region id, statistic name) per feature
    kind: str

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.size != len(self.layout):
            raise ValueError("features and layout lengths differ")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("fingerprint contains non-finite features")


def extract_fingerprint(surface: TFSurface, n_time: int = 12, n_freq: int = 10) -> Fingerprint:
    """Patch statistics over a non-overlapping tiling plus whole-surface statistics.

    The surface is tiled row-major from the origin with n_time x n_freq
    patches; remainder rows/columns are discarded.  Feature order is
    patch 1..N_R statistics, then the surface statistics.
    """
    values = surface.values
    rows, cols = values.shape
    if n_time > rows or n_freq > cols:
        raise ValueError(f"patch {n_time}x{n_freq} exceeds surface {rows}x{cols}")
    n_patch_rows = rows // n_time
    n_patch_cols = cols // n_freq

    trimmed = values[:n_patch_rows * n_time, :n_patch_cols * n_freq]
    patches = trimmed.reshape(n_patch_rows, n_time, n_patch_cols, n_freq).swapaxes(1, 2)
    patches = patches.reshape(n_patch_rows * n_patch_cols, n_time * n_freq)

    features = []
    layout = []
    for region, patch in enumerate(patches, start=1):
        features.extend(_moments(patch))
        layout.extend((region, stat) for stat in STATISTIC_NAMES)
    features.extend(_moments(values.ravel()))
    layout.extend((SURFACE_REGION, stat) for stat in STATISTIC_NAMES)
    return Fingerprint(np.array(features), tuple(layout), surface.kind)


def fingerprint_length(cfg: GaborConfig, n_time: int = 12, n_freq: int = 10) -> int:
    n_regions = (cfg.m_shifts // n_time) * (cfg.freq_bins // n_freq)
    return (n_regions + 1) * len(STATISTIC_NAMES)


def fingerprints_to_csv(rows) -> str:
    """CSV rows of (radio_id, snr_db, trial, Fingerprint)."""
    rows = list(rows)
    if not rows:
        raise ValueError("no fingerprints to export")
    n = rows[0][3].features.size
    header = "radio_id, snr_db, trial, " + ", ".join(f"f_{i + 1:04d}" for i in range(n))
    lines = [header]
    for radio_id, snr_db, trial, fp in rows:
        values = ", ".join(repr(float(v)) for v in fp.features)
        lines.append(f"{radio_id}, {snr_db!r}, {trial}, {values}")
    return "\n".join(lines) + "\n"


def surface_to_csv(surface: TFSurface) -> str:
    return "\n".join(", ".join(repr(float(v)) for v in row) for row in surface.values) + "\n"
