"""Burst timing from the STS auto-correlation plateau difference.

Two normalized auto-correlations of the received preamble are compared:
lag of one STS (plateau spanning nine STS) and lag of two STS (plateau of
eight).  Their difference peaks at the start of the ninth STS; the burst
start follows by subtracting eight STS lengths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_model import PREAMBLE_LEN, STS_LEN, ComplexBaseband

N_STS_BEFORE_NINTH = 8
# preamble samples remaining from the ninth-STS start: 2 STS + guard + 2 LTS
_TAIL_AFTER_NINTH = PREAMBLE_LEN - N_STS_BEFORE_NINTH * STS_LEN


@dataclass
class TimingEstimate:
    theta_hat: int            # sample index of the ninth-STS start
    first_path_offset: int    # sample index of the burst start
    metric_trace: np.ndarray  # M1 - M2 for each scanned theta

    def __post_init__(self):
        if self.first_path_offset < 0:
            raise ValueError(f"first_path_offset {self.first_path_offset} is negative; "
                             "burst does not contain a full preamble prefix")


def timing_correlation(r: ComplexBaseband, theta: int, lag: int) -> complex:
    """Normalized complex auto-correlation over one STS window at the given lag."""
    n = STS_LEN
    if theta < 0 or theta + n + lag > len(r):
        raise ValueError(f"correlation window at theta={theta}, lag={lag} exceeds signal")
    w = r.samples[theta:theta + n]
    energy = float(np.sum(np.abs(w) ** 2))
    if energy == 0.0:
        raise ValueError(f"zero-energy window at theta={theta}")
    return complex(np.sum(w * np.conj(r.samples[theta + lag:theta + lag + n])) / energy)


def timing_metric(r: ComplexBaseband, theta: int, lag: int) -> float:
    """Magnitude of the normalized auto-correlation (real-valued, finite)."""
    return abs(timing_correlation(r, theta, lag))


def _metric_difference_trace(r: ComplexBaseband, n_thetas: int) -> np.ndarray:
    """Vectorized M1(theta) - M2(theta) for theta = 0..n_thetas-1.

    Windows with zero energy contribute a metric of 0 rather than raising,
    so leading silence in a capture scans cleanly.
    """
    x = r.samples
    n = STS_LEN
    prod1 = x[:-n] * np.conj(x[n:])
    prod2 = x[:-2 * n] * np.conj(x[2 * n:])
    power = np.abs(x) ** 2

    def window_sums(values, count):
        c = np.concatenate([[0.0 + 0j] if np.iscomplexobj(values) else [0.0], np.cumsum(values)])
        return c[n:n + count] - c[:count]

    num1 = np.abs(window_sums(prod1, n_thetas))
    num2 = np.abs(window_sums(prod2, n_thetas))
    den = window_sums(power, n_thetas).real
    trace = np.zeros(n_thetas)
    ok = den > 0
    trace[ok] = (num1[ok] - num2[ok]) / den[ok]
    return trace


def estimate_time_offset(r: ComplexBaseband) -> TimingEstimate:
    """Locate the ninth-STS start as argmax of M1 - M2 (earliest tie wins).

    Theta is scanned over [0, len - 192] so the remaining preamble always
    fits after the candidate ninth-STS start.  An argmax landing earlier
    than eight STS into the signal (possible on noise-dominated captures)
    clamps first_path_offset to 0 rather than reporting a negative start.
    """
    if len(r) < PREAMBLE_LEN:
        raise ValueError(f"signal length {len(r)} is shorter than one preamble")
    n_thetas = len(r) - _TAIL_AFTER_NINTH + 1
    trace = _metric_difference_trace(r, n_thetas)
    theta_hat = int(np.argmax(trace))  # argmax returns the earliest maximizer
    return TimingEstimate(theta_hat=theta_hat,
                          first_path_offset=max(0, theta_hat - N_STS_BEFORE_NINTH * STS_LEN),
                          metric_trace=trace)


def metric_trace_to_csv(estimate: TimingEstimate) -> str:
    lines = ["theta, m1_minus_m2"]
    for theta, value in enumerate(estimate.metric_trace):
        lines.append(f"{theta}, {float(value)!r}")
    return "\n".join(lines) + "\n"
