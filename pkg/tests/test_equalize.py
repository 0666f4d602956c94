"""ZF and MMSE equalization against known channels."""

import numpy as np
import pytest

from rfdna.channel import PROFILE_L2, add_awgn, apply_channel, draw_channel
from rfdna.chanest import ChannelEstimate, extract_lts_windows, ls_estimate
from rfdna.equalize import (EqualizerChoice, SpectralNullError, channel_response,
                            equalize, mmse_equalize, zf_equalize)
from rfdna.signal_model import ComplexBaseband, generate_preamble, lts_frequency_reference

PREAMBLE = generate_preamble()
IDENTITY = ChannelEstimate(np.array([1.0 + 0j]), np.array([0]), "LS", 0.0)


class TestZeroForcing:
    def test_identity_estimate_passthrough(self):
        out = zf_equalize(PREAMBLE, IDENTITY)
        assert np.max(np.abs(out.samples - PREAMBLE.samples)) < 1e-9

    def test_exact_inverse_noiseless(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            realization = draw_channel(PROFILE_L2, rng)
            faded = apply_channel(PREAMBLE, realization)
            est = ChannelEstimate(realization.taps, realization.delays, "LS", 0.0)
            out = zf_equalize(faded, est)
            assert np.max(np.abs(out.samples - PREAMBLE.samples)) < 1e-9

    def test_scaling_linearity(self):
        doubled = ChannelEstimate(2.0 * IDENTITY.taps, IDENTITY.delays, "LS", 0.0)
        out = zf_equalize(PREAMBLE, doubled)
        assert np.max(np.abs(out.samples - PREAMBLE.samples / 2.0)) < 1e-9

    def test_spectral_null_raises(self):
        # two equal taps 32 samples apart null every odd bin of a 512 DFT
        est = ChannelEstimate(np.array([1.0 + 0j, -1.0 + 0j]), np.array([0, 32]), "LS", 0.0)
        with pytest.raises(SpectralNullError):
            zf_equalize(PREAMBLE, est)

    def test_rejects_small_fft(self):
        with pytest.raises(ValueError):
            zf_equalize(PREAMBLE, IDENTITY, n_fft=256)


class TestMmse:
    def test_identity_channel_gamma_one_halves(self):
        out = mmse_equalize(PREAMBLE, IDENTITY, snr_db=0.0)
        assert np.max(np.abs(out.samples - PREAMBLE.samples / 2.0)) < 1e-9

    def test_converges_to_zf_at_high_snr(self):
        rng = np.random.default_rng(1)
        realization = draw_channel(PROFILE_L2, rng)
        faded = apply_channel(PREAMBLE, realization)
        est = ChannelEstimate(realization.taps, realization.delays, "NM", 0.0)
        zf = zf_equalize(faded, est)
        wiener = mmse_equalize(faded, est, snr_db=120.0)  # gamma = 1e12
        assert np.max(np.abs(zf.samples - wiener.samples)) < 1e-6

    def test_finite_at_spectral_null(self):
        est = ChannelEstimate(np.array([1.0 + 0j, -1.0 + 0j]), np.array([0, 32]), "LS", 0.0)
        out = mmse_equalize(PREAMBLE, est, snr_db=10.0)
        assert np.all(np.isfinite(out.samples))

    def test_linearity_in_received_signal(self):
        rng = np.random.default_rng(2)
        realization = draw_channel(PROFILE_L2, rng)
        est = ChannelEstimate(realization.taps, realization.delays, "NM", 0.0)
        a = ComplexBaseband(rng.standard_normal(325) + 1j * rng.standard_normal(325), 20e6)
        b = ComplexBaseband(rng.standard_normal(325) + 1j * rng.standard_normal(325), 20e6)
        combo = ComplexBaseband(1.5 * a.samples - 2j * b.samples, 20e6)
        lhs = mmse_equalize(combo, est, 12.0).samples
        rhs = (1.5 * mmse_equalize(a, est, 12.0).samples
               - 2j * mmse_equalize(b, est, 12.0).samples)
        assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_mmse_reconstruction_beats_zf_at_9db():
    """Signal-level restatement of the equalizer contrast: average preamble
    reconstruction error of MMSE <= ZF at 9 dB over Monte-Carlo trials."""
    x_ref = lts_frequency_reference()
    rng = np.random.default_rng(3)
    zf_mse, mmse_mse = [], []
    trials = 0
    while trials < 500:
        realization = draw_channel(PROFILE_L2, rng)
        noisy, noise_var = add_awgn(apply_channel(PREAMBLE, realization), 9.0, rng)
        lts1, lts2 = extract_lts_windows(noisy, 0)
        est = ls_estimate(lts1, lts2, x_ref, realization.delays)
        try:
            zf_out = zf_equalize(noisy, est)
        except SpectralNullError:
            continue  # ZF undefined on this draw; contrast is over its domain
        mmse_out = mmse_equalize(noisy, est, 9.0)
        zf_mse.append(np.mean(np.abs(zf_out.samples - PREAMBLE.samples) ** 2))
        mmse_mse.append(np.mean(np.abs(mmse_out.samples - PREAMBLE.samples) ** 2))
        trials += 1
    assert np.mean(mmse_mse) <= np.mean(zf_mse)


def test_equalizer_choice_dispatch():
    with pytest.raises(ValueError):
        EqualizerChoice("zf2")
    with pytest.raises(ValueError):
        EqualizerChoice("mmse")  # missing SNR
    zf = equalize(EqualizerChoice("zf"), PREAMBLE, IDENTITY)
    wiener = equalize(EqualizerChoice("mmse", snr_db=0.0), PREAMBLE, IDENTITY)
    assert np.max(np.abs(zf.samples - PREAMBLE.samples)) < 1e-9
    assert np.max(np.abs(wiener.samples - PREAMBLE.samples / 2.0)) < 1e-9


def test_channel_response_matches_direct_dft():
    est = ChannelEstimate(np.array([0.7 + 0.1j, 0.3j]), np.array([1, 4]), "NM", 0.0)
    response = channel_response(est, 512)
    k = np.arange(512)
    expected = (0.7 + 0.1j) * np.exp(-2j * np.pi * k / 512) + 0.3j * np.exp(-2j * np.pi * 4 * k / 512)
    assert np.max(np.abs(response - expected)) < 1e-12
