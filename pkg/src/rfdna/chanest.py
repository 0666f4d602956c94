"""Multipath channel estimation: LS, LMMSE, and Nelder-Mead simplex.

All three estimators produce taps on an explicit delay hypothesis (sample
offsets in the same time base as the received signal).  LS works from the
two long training symbols; LMMSE applies a Wiener correction built from
the profile statistics; the Nelder-Mead path minimizes time-domain squared
error against candidate preambles, decomposed into two real-valued costs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import ChannelRealization
from .signal_model import FFT_SIZE, PREAMBLE_LEN, ComplexBaseband

LTS1_OFFSET = 192  # LTS positions within the preamble
LTS2_OFFSET = 256


class EstimationError(ValueError):
    """Raised when an estimator cannot produce a usable result."""


@dataclass
class ChannelEstimate:
    taps: np.ndarray
    delays: np.ndarray
    method: str
    residual_power: float
    noise_variance_used: float | None = None

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.complex128)
        self.delays = np.asarray(self.delays, dtype=int)
        if self.taps.shape != self.delays.shape:
            raise ValueError("taps and delays must have matching lengths")
        if not np.all(np.isfinite(self.taps)):
            raise ValueError("estimated taps must be finite")
        if self.residual_power < 0:
            raise ValueError("residual power must be nonnegative")


@dataclass
class NmConfig:
    """Simplex coefficients, stopping tolerances, and iteration budget.

    The tolerances apply to the variance of the vertex function values and
    to the mean squared vertex displacement between iterations; both are
    quadratic in the simplex size, so 1e-16 corresponds to roughly 1e-4
    coordinate accuracy on unit-scale problems.
    max_iterations=None means 200 iterations per problem dimension.
    """

    rho: float = 1.0      # reflection
    chi: float = 2.0      # expansion
    gamma: float = 0.5    # contraction
    phi: float = 0.5      # shrinkage
    eps1: float = 1e-16   # function-value variance tolerance
    eps2: float = 1e-16   # mean squared vertex displacement tolerance
    max_iterations: int | None = None

    def __post_init__(self):
        violations = []
        if not self.rho > 0:
            violations.append(f"rho > 0 (got {self.rho})")
        if not self.chi > 1:
            violations.append(f"chi > 1 (got {self.chi})")
        if not self.chi > self.rho:
            violations.append(f"chi > rho (got chi={self.chi}, rho={self.rho})")
        if not 0 < self.gamma < 1:
            violations.append(f"0 < gamma < 1 (got {self.gamma})")
        if not 0 < self.phi < 1:
            violations.append(f"0 < phi < 1 (got {self.phi})")
        if violations:
            raise ValueError("invalid simplex coefficients: " + "; ".join(violations))
        if self.eps1 <= 0 or self.eps2 <= 0:
            raise ValueError("stopping tolerances must be positive")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@lru_cache(maxsize=64)
def _support_basis(delays: tuple, occupied: tuple):
    """Fourier basis on the delay support over the occupied bins, plus its pinv."""
    k = np.asarray(occupied)[:, None]
    tau = np.asarray(delays)[None, :]
    basis = np.exp(-2j * np.pi * k * tau / FFT_SIZE)
    return basis, np.linalg.pinv(basis)


def extract_lts_windows(r: ComplexBaseband, first_path_offset: int):
    """The two 64-sample LTS windows at the synchronized burst position.

    Windows running past the end of the capture are zero-padded.
    """
    padded = np.zeros(first_path_offset + PREAMBLE_LEN, dtype=np.complex128)
    avail = min(len(r), padded.size)
    padded[:avail] = r.samples[:avail]
    lts1 = padded[first_path_offset + LTS1_OFFSET:first_path_offset + LTS1_OFFSET + FFT_SIZE]
    lts2 = padded[first_path_offset + LTS2_OFFSET:first_path_offset + LTS2_OFFSET + FFT_SIZE]
    return lts1, lts2


def ls_frequency_response(lts_windows, x_ref: np.ndarray) -> np.ndarray:
    """Per-bin LS channel response from one or more received LTS windows.

    Averages the windows' spectra; bins where the reference is zero are
    excluded from inversion and reported as 0.
    """
    if not lts_windows:
        raise EstimationError("at least one LTS window is required")
    spectra = []
    for w in lts_windows:
        w = np.asarray(w, dtype=np.complex128)
        if w.size != FFT_SIZE:
            raise EstimationError(f"LTS window must be {FFT_SIZE} samples, got {w.size}")
        spectra.append(np.fft.fft(w))
    y_avg = np.mean(spectra, axis=0)
    occupied = x_ref != 0
    response = np.zeros(FFT_SIZE, dtype=np.complex128)
    response[occupied] = y_avg[occupied] / x_ref[occupied]
    return response


def ls_estimate(rx_lts1, rx_lts2, x_ref: np.ndarray, delays) -> ChannelEstimate:
    """Two-symbol LS estimate, solved on the given delay support.

    The occupied-bin frequency response is projected onto the Fourier
    basis of the delay hypothesis; with the channel inside the cyclic
    prefix this is exact in the absence of noise.
    """
    rx_lts1 = np.asarray(rx_lts1, dtype=np.complex128)
    rx_lts2 = np.asarray(rx_lts2, dtype=np.complex128)
    if rx_lts1.size != rx_lts2.size:
        raise EstimationError("LTS windows have mismatched lengths")
    if not (np.any(rx_lts1) or np.any(rx_lts2)):
        raise EstimationError("received LTS windows are all zero")
    response = ls_frequency_response([rx_lts1, rx_lts2], x_ref)
    occupied = np.flatnonzero(x_ref != 0)
    delays = np.asarray(delays, dtype=int)
    basis, pinv = _support_basis(tuple(delays.tolist()), tuple(occupied.tolist()))
    taps = pinv @ response[occupied]
    residual = response[occupied] - basis @ taps
    return ChannelEstimate(taps, delays, "LS", float(np.sum(np.abs(residual) ** 2)))


def lmmse_estimate(ls_est: ChannelEstimate, profile, noise_variance: float,
                   x_ref: np.ndarray) -> ChannelEstimate:
    """Wiener correction of the LS taps using the profile's tap variances.

    The LS tap-error covariance for the two-symbol form is
    32*sigma_n^2*(E^H E)^-1, with E the occupied-bin Fourier basis on the
    delay support (per-bin FFT noise variance 64*sigma_n^2, halved by the
    two-symbol average).
    """
    if noise_variance < 0:
        raise EstimationError("noise variance must be nonnegative")
    variances = np.asarray(profile.variances, dtype=float)
    if variances.size != ls_est.taps.size:
        raise EstimationError(f"profile lists {variances.size} paths but the LS "
                              f"estimate has {ls_est.taps.size} taps")
    r_hh = np.diag(variances)
    occupied = np.flatnonzero(x_ref != 0)
    basis, _ = _support_basis(tuple(ls_est.delays.tolist()), tuple(occupied.tolist()))
    gram = basis.conj().T @ basis
    try:
        err_cov = (FFT_SIZE / 2.0) * noise_variance * np.linalg.inv(gram)
        weights = r_hh @ np.linalg.inv(r_hh + err_cov)
    except np.linalg.LinAlgError as exc:
        raise EstimationError(f"degenerate profile: combined matrix is singular ({exc})") from exc
    taps = weights @ ls_est.taps
    # residual vs the measured response: the LS fit error is orthogonal to
    # the support basis, so the two contributions add
    shift = basis @ (ls_est.taps - taps)
    residual = float(np.sum(np.abs(shift) ** 2)) + ls_est.residual_power
    return ChannelEstimate(taps, ls_est.delays.copy(), "LMMSE", residual,
                           noise_variance_used=float(noise_variance))


class NonFiniteCostError(RuntimeError):
    def __init__(self, point):
        super().__init__(f"objective returned a non-finite value at {point}")
        self.point = np.asarray(point)


def _checked(f, x):
    value = float(f(x))
    if not np.isfinite(value):
        raise NonFiniteCostError(x)
    return value


def nelder_mead_minimize(f, x0, cfg: NmConfig):
    """Minimize f over R^d with the simplex method.

    Runs reflection/expansion/contraction with a shrink fallback, until the
    function-value variance drops below eps1, the mean squared displacement
    of the sorted vertices between successive iterations drops below eps2,
    or the iteration budget is spent.

    Returns (x_min, f_min, iterations, termination_reason).
    """
    x0 = np.asarray(x0, dtype=float)
    d = x0.size
    if d < 1:
        raise ValueError("x0 must have at least one coordinate")
    max_iter = cfg.max_iterations if cfg.max_iterations is not None else 200 * d

    vertices = np.tile(x0, (d + 1, 1))
    for i in range(d):
        vertices[i + 1, i] += max(0.05, 0.05 * abs(x0[i]))
    values = np.array([_checked(f, v) for v in vertices])

    order = np.argsort(values, kind="stable")
    vertices, values = vertices[order], values[order]
    reason = "max_iterations"
    iteration = 0
    for iteration in range(1, max_iter + 1):
        previous = vertices.copy()
        centroid = vertices[:d].mean(axis=0)
        worst = vertices[d]

        reflected = centroid + cfg.rho * (centroid - worst)
        f_reflected = _checked(f, reflected)
        if values[0] <= f_reflected < values[d - 1]:
            vertices[d], values[d] = reflected, f_reflected
        elif f_reflected < values[0]:
            expanded = centroid + cfg.chi * (reflected - centroid)
            f_expanded = _checked(f, expanded)
            if f_expanded < f_reflected:
                vertices[d], values[d] = expanded, f_expanded
            else:
                vertices[d], values[d] = reflected, f_reflected
        elif f_reflected < values[d]:
            contracted = centroid + cfg.gamma * (reflected - centroid)
            f_contracted = _checked(f, contracted)
            if f_contracted <= f_reflected:
                vertices[d], values[d] = contracted, f_contracted
            else:
                vertices, values = _shrink(f, vertices, cfg.phi)
        else:
            contracted = centroid - cfg.gamma * (centroid - worst)
            f_contracted = _checked(f, contracted)
            if f_contracted < values[d]:
                vertices[d], values[d] = contracted, f_contracted
            else:
                vertices, values = _shrink(f, vertices, cfg.phi)

        order = np.argsort(values, kind="stable")
        vertices, values = vertices[order], values[order]

        if np.sum((values - values.mean()) ** 2) / d < cfg.eps1:
            reason = "function_tolerance"
            break
        # displacement over all d+1 sorted vertices: summing only the best d
        # reads zero whenever the new point sorts last, stopping mid-descent
        if np.sum((vertices - previous) ** 2) / d < cfg.eps2:
            reason = "vertex_tolerance"
            break

    return vertices[0].copy(), float(values[0]), iteration, reason


def _shrink(f, vertices, phi):
    best = vertices[0]
    for i in range(1, vertices.shape[0]):
        vertices[i] = best + phi * (vertices[i] - best)
    values = np.array([_checked(f, v) for v in vertices])
    return vertices, values


def _shifted_components(candidate: np.ndarray, delays: np.ndarray, span: int):
    shifted = np.zeros((delays.size, span))
    shifted_im = np.zeros((delays.size, span))
    for row, tau in enumerate(delays):
        n = min(candidate.size, span - tau)
        shifted[row, tau:tau + n] = candidate.real[:n]
        shifted_im[row, tau:tau + n] = candidate.imag[:n]
    return shifted, shifted_im


def build_nm_costs(r: ComplexBaseband, candidate: ComplexBaseband, delays):
    """The two real-valued squared-error costs over the stacked tap variables.

    Both costs take a vector of 2L reals packed [h_1r..h_Lr, h_1i..h_Li]
    and are evaluated over the burst span (candidate length plus maximum
    delay, clipped to the received signal).
    """
    delays = np.asarray(delays, dtype=int)
    n_paths = delays.size
    if np.any(delays < 0):
        raise ValueError("delays must be nonnegative")
    if delays.max() >= len(candidate):
        raise ValueError(f"delay {delays.max()} exceeds candidate length {len(candidate)}")
    span = min(len(r), len(candidate) + int(delays.max()))
    re_x, im_x = _shifted_components(candidate.samples, delays, span)
    re_r = r.samples.real[:span]
    im_r = r.samples.imag[:span]

    def cost_real(v):
        resid = re_r - v[:n_paths] @ re_x + v[n_paths:] @ im_x
        return float(resid @ resid)

    def cost_imag(v):
        resid = im_r - v[:n_paths] @ im_x - v[n_paths:] @ re_x
        return float(resid @ resid)

    return cost_real, cost_imag


def _model_residual_power(r: ComplexBaseband, candidate: ComplexBaseband,
                          delays: np.ndarray, taps: np.ndarray) -> float:
    span = min(len(r), len(candidate) + int(delays.max()))
    model = np.zeros(span, dtype=np.complex128)
    for tap, tau in zip(taps, delays):
        n = min(len(candidate), span - tau)
        model[tau:tau + n] += tap * candidate.samples[:n]
    return float(np.sum(np.abs(r.samples[:span] - model) ** 2))


def nm_estimate(r: ComplexBaseband, candidates, delays, cfg: NmConfig,
                x0_taps=None) -> ChannelEstimate:
    """Simplex channel estimate over a candidate-preamble pool.

    Each candidate's two decomposed costs are minimized independently and
    the recovered real/imaginary parts averaged per tap; the estimate with
    minimum residual power wins (earliest candidate index on ties).
    Byte-identical duplicate candidates are optimized once.

    x0_taps warm-starts the simplex (normally the LS tap estimate);
    omitted, the search starts from zero.
    """
    if len(candidates) == 0:
        raise EstimationError("candidate pool is empty")
    delays = np.asarray(delays, dtype=int)
    n_paths = delays.size
    if x0_taps is None:
        x0 = np.zeros(2 * n_paths)
    else:
        x0_taps = np.asarray(x0_taps, dtype=np.complex128)
        x0 = np.concatenate([x0_taps.real, x0_taps.imag])

    first_seen = {}
    best = None
    failures = []
    for index, candidate in enumerate(candidates):
        key = candidate.samples.tobytes()
        if key in first_seen:
            continue
        first_seen[key] = index
        cost_real, cost_imag = build_nm_costs(r, candidate, delays)
        try:
            v_real, _, _, _ = nelder_mead_minimize(cost_real, x0, cfg)
            v_imag, _, _, _ = nelder_mead_minimize(cost_imag, x0, cfg)
        except NonFiniteCostError as exc:
            failures.append((index, exc))
            continue
        taps = ((v_real[:n_paths] + v_imag[:n_paths])
                + 1j * (v_real[n_paths:] + v_imag[n_paths:])) / 2.0
        residual = _model_residual_power(r, candidate, delays, taps)
        if best is None or (residual, index) < (best[0], best[1]):
            best = (residual, index, taps)

    if best is None:
        raise EstimationError(f"every candidate optimization failed: {failures}")
    residual, _, taps = best
    return ChannelEstimate(taps, delays.copy(), "NM", residual)


def squared_error(h_true: ChannelRealization, h_est: ChannelEstimate) -> float:
    """Sum of squared tap differences, aligned by delay (missing taps are 0)."""
    actual = {int(d): t for d, t in zip(h_true.delays, h_true.taps)}
    estimated = {int(d): t for d, t in zip(h_est.delays, h_est.taps)}
    total = 0.0
    for delay in actual.keys() | estimated.keys():
        diff = actual.get(delay, 0j) - estimated.get(delay, 0j)
        total += abs(diff) ** 2
    return total


def estimate_to_csv(est: ChannelEstimate) -> str:
    lines = ["method, tap_index, delay_samples, re, im, residual_power"]
    for i, (tap, delay) in enumerate(zip(est.taps, est.delays)):
        lines.append(f"{est.method}, {i}, {int(delay)}, {float(tap.real)!r}, "
                     f"{float(tap.imag)!r}, {float(est.residual_power)!r}")
    return "\n".join(lines) + "\n"
