"""Acceptance criteria, one test per criterion.

Each test prints a `[criterion N] PASS` line (visible with `pytest -s`)
and enforces its stated runtime bound.  Criterion 9 runs three seeded
desk-scale repetitions of the classification experiment and dominates the
suite's runtime.
"""

import time

import numpy as np
import pytest
from scipy import stats

from rfdna.channel import (PROFILE_L2, PROFILE_L3, PROFILE_L5, ChannelProfile,
                           add_awgn, apply_channel, draw_channel)
from rfdna.chanest import (NmConfig, extract_lts_windows, ls_estimate, nm_estimate,
                           squared_error)
from rfdna.classify import (GrlvqiHyper, grlvqi_classify_batch, grlvqi_fit, mda_fit,
                            ml_classify_batch)
from rfdna.equalize import SpectralNullError, mmse_equalize, zf_equalize
from rfdna.fingerprint import GaborConfig, extract_fingerprint, gabor_coefficients, to_surface
from rfdna.harness import (ExperimentConfig, collect_fingerprints, run_estimator_comparison,
                           run_classification_experiment, select_and_classify,
                           split_train_blind)
from rfdna.signal_model import ComplexBaseband, generate_preamble, lts_frequency_reference
from rfdna.sync import estimate_time_offset

X_REF = lts_frequency_reference()
PREAMBLE = generate_preamble()


class _Budget:
    def __init__(self, criterion, seconds):
        self.criterion = criterion
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        if exc_type is None:
            print(f"\n[criterion {self.criterion}] PASS ({elapsed:.1f}s)")
            assert elapsed < self.seconds, (
                f"criterion {self.criterion} exceeded its {self.seconds}s budget: {elapsed:.1f}s")
        else:
            print(f"\n[criterion {self.criterion}] FAIL ({elapsed:.1f}s)")


def test_criterion_1_channel_statistics():
    with _Budget(1, 30):
        rng = np.random.default_rng(101)
        n = 100_000
        for profile in (PROFILE_L2, PROFILE_L3, PROFILE_L5):
            sigma = np.sqrt(np.asarray(profile.variances) / 2.0)
            draws = ((rng.standard_normal((n, profile.n_paths))
                      + 1j * rng.standard_normal((n, profile.n_paths))) * sigma)
            powers = np.mean(np.abs(draws) ** 2, axis=0)
            for measured, expected in zip(powers, profile.variances):
                assert abs(measured - expected) <= 0.02 * expected, profile

        single = ChannelProfile(1, (0.0,), (1.0,))
        mags = np.abs((rng.standard_normal(n) + 1j * rng.standard_normal(n))
                      * np.sqrt(single.variances[0] / 2.0))
        result = stats.kstest(mags, "rayleigh", args=(0, 1.0 / np.sqrt(2.0)))
        assert result.pvalue > 0.01
        # the same statistics must hold through the public draw API
        api_draws = np.array([draw_channel(PROFILE_L2, rng).taps for _ in range(20_000)])
        api_powers = np.mean(np.abs(api_draws) ** 2, axis=0)
        np.testing.assert_allclose(api_powers, PROFILE_L2.variances, rtol=0.02)


def test_criterion_2_sync_exactness():
    with _Budget(2, 5):
        rng = np.random.default_rng(102)
        for _ in range(500):
            lead = int(rng.integers(0, 513))
            samples = np.concatenate([np.zeros(lead, dtype=complex), PREAMBLE.samples])
            estimate = estimate_time_offset(ComplexBaseband(samples, 20e6))
            assert estimate.first_path_offset == lead


def test_criterion_3_ls_exactness():
    with _Budget(3, 5):
        rng = np.random.default_rng(103)
        for _ in range(100):
            realization = draw_channel(PROFILE_L2, rng)
            received = apply_channel(PREAMBLE, realization)
            lts1, lts2 = extract_lts_windows(received, 0)
            estimate = ls_estimate(lts1, lts2, X_REF, realization.delays)
            assert squared_error(realization, estimate) < 1e-9


def test_criterion_4_nm_recovery():
    with _Budget(4, 120):
        rng = np.random.default_rng(104)
        cfg = NmConfig()
        for profile in (PROFILE_L2, PROFILE_L3, PROFILE_L5):
            hits = 0
            for _ in range(50):
                realization = draw_channel(profile, rng)
                received = apply_channel(PREAMBLE, realization)
                lts1, lts2 = extract_lts_windows(received, 0)
                warm = ls_estimate(lts1, lts2, X_REF, realization.delays)
                estimate = nm_estimate(received, [PREAMBLE], realization.delays, cfg,
                                       x0_taps=warm.taps)
                hits += squared_error(realization, estimate) <= 1e-3
            assert hits >= 0.95 * 50, f"L={profile.n_paths}: {hits}/50"


def test_criterion_5_estimator_ordering_trend():
    with _Budget(5, 600):
        grid = tuple(float(s) for s in range(0, 31, 3))
        for profile in (PROFILE_L2, PROFILE_L5):
            cfg = ExperimentConfig(channel_profile=profile, snr_grid=grid,
                                   n_estimation_preambles=200, n_noise_realizations=3,
                                   master_seed=105)
            rows = run_estimator_comparison(cfg)
            table = {}
            for kind, snr, err, _n in rows:
                table[(kind, snr)] = err
            for snr in grid:
                if snr >= 9.0:
                    assert table[("NM", snr)] < table[("LS", snr)], \
                        f"L={profile.n_paths} snr={snr}: NM {table[('NM', snr)]:.3e} " \
                        f"vs LS {table[('LS', snr)]:.3e}"
            for snr in (0.0, 3.0, 6.0):
                assert table[("MMSE", snr)] < table[("LS", snr)], \
                    f"L={profile.n_paths} snr={snr}: MMSE {table[('MMSE', snr)]:.3e} " \
                    f"vs LS {table[('LS', snr)]:.3e}"


def test_criterion_6_equalizer_contrast():
    with _Budget(6, 120):
        rng = np.random.default_rng(106)
        zf_errors, mmse_errors = [], []
        trials = 0
        while trials < 500:
            realization = draw_channel(PROFILE_L2, rng)
            noisy, _ = add_awgn(apply_channel(PREAMBLE, realization), 9.0, rng)
            lts1, lts2 = extract_lts_windows(noisy, 0)
            estimate = ls_estimate(lts1, lts2, X_REF, realization.delays)
            try:
                zf_out = zf_equalize(noisy, estimate)
            except SpectralNullError:
                continue
            mmse_out = mmse_equalize(noisy, estimate, 9.0)
            zf_errors.append(np.mean(np.abs(zf_out.samples - PREAMBLE.samples) ** 2))
            mmse_errors.append(np.mean(np.abs(mmse_out.samples - PREAMBLE.samples) ** 2))
            trials += 1
        assert np.mean(mmse_errors) <= np.mean(zf_errors)

        # vanishing-regularizer limit: MMSE at gamma = 1e12 converges to ZF
        realization = draw_channel(PROFILE_L2, rng)
        received = apply_channel(PREAMBLE, realization)
        estimate = ls_estimate(*extract_lts_windows(received, 0), X_REF,
                               realization.delays)
        zf_out = zf_equalize(received, estimate)
        near_zf = mmse_equalize(received, estimate, snr_db=120.0)
        assert np.max(np.abs(zf_out.samples - near_zf.samples)) < 1e-6


def _naive_moments(values):
    v = np.asarray(values, dtype=float).ravel()
    mu = v.mean()
    var = np.mean((v - mu) ** 2)
    if var == 0:
        return np.array([0.0, 0.0, 0.0, 0.0])
    std = np.sqrt(var)
    return np.array([std, var, np.mean((v - mu) ** 3) / std ** 3,
                     np.mean((v - mu) ** 4) / var ** 2 - 3.0])


def test_criterion_7_fingerprint_oracle():
    with _Budget(7, 60):
        rng = np.random.default_rng(107)
        from rfdna.fingerprint import TFSurface
        for _ in range(50):
            surface = TFSurface(rng.random((186, 186)), "magnitude")
            fp = extract_fingerprint(surface, 12, 10)
            for pr in range(15):
                for pc in range(18):
                    region = pr * 18 + pc
                    patch = surface.values[12 * pr:12 * (pr + 1), 10 * pc:10 * (pc + 1)]
                    np.testing.assert_allclose(fp.features[4 * region:4 * region + 4],
                                               _naive_moments(patch), atol=1e-10)
            np.testing.assert_allclose(fp.features[-4:],
                                       _naive_moments(surface.values), atol=1e-10)

        cfg = GaborConfig()
        x = rng.standard_normal(186) + 1j * rng.standard_normal(186)
        base = extract_fingerprint(to_surface(
            gabor_coefficients(ComplexBaseband(x, 20e6), cfg), "magnitude"))
        scaled = extract_fingerprint(to_surface(
            gabor_coefficients(ComplexBaseband(123.4 * x, 20e6), cfg), "magnitude"))
        np.testing.assert_allclose(base.features, scaled.features, atol=1e-10)


def test_criterion_8_classifier_fixtures():
    with _Budget(8, 120):
        rng = np.random.default_rng(108)
        # separable blobs: pairwise center distance >= 10 sigma
        centers = 10.0 * np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]], float)
        features = np.vstack([c + rng.standard_normal((60, 3)) for c in centers])
        labels = np.repeat([f"radio{i}" for i in range(4)], 60)
        model = mda_fit(features, labels, 1e-3)
        assert np.mean(ml_classify_batch(model, features) == labels) == 1.0

        # identical class distributions: chance plus or minus 10 points
        train = rng.standard_normal((400, 4))
        two_labels = np.repeat(["a", "b"], 200)
        chance_model = mda_fit(train, two_labels, 1e-3)
        test = rng.standard_normal((1000, 4))
        truth = np.repeat(["a", "b"], 500)
        accuracy = np.mean(ml_classify_batch(chance_model, test) == truth)
        assert 0.40 <= accuracy <= 0.60

        # GRLVQI separable fixture with an uninformative second feature
        g_train = np.vstack([
            np.column_stack([rng.normal(0, 1, 250), rng.normal(0, 1, 250)]),
            np.column_stack([rng.normal(8, 1, 250), rng.normal(0, 1, 250)])])
        g_labels = np.repeat(["a", "b"], 250)
        g_model = grlvqi_fit(g_train, g_labels, GrlvqiHyper(prototypes_per_class=1,
                                                            epochs=50),
                             np.random.default_rng(0))
        g_test = np.vstack([
            np.column_stack([rng.normal(0, 1, 500), rng.normal(0, 1, 500)]),
            np.column_stack([rng.normal(8, 1, 500), rng.normal(0, 1, 500)])])
        g_truth = np.repeat(["a", "b"], 500)
        assert np.mean(grlvqi_classify_batch(g_model, g_test) == g_truth) >= 0.99
        assert g_model.relevances[0] > g_model.relevances[1]


# --- criterion 9: end-to-end trends over three seeds ---

_SEEDS = (0, 1, 2)
# desk scale: enough signals for stable per-radio accuracies, an iteration
# cap that only binds the slowest low-SNR L=5 searches
_BASE = dict(n_signals_per_radio=80, n_noise_realizations=3, k_folds=5,
             n_candidates=20, nm=NmConfig(max_iterations=600))


def _trend_data():
    """Blind accuracies for every (config, snr, seed) the trends need.

    One pipeline pass is shared wherever only the surface kind or the
    classifier differs.
    """
    accuracy = {}
    per_class = {}

    def record(key, snr, seed, matrix):
        accuracy[(key, snr, seed)] = 100.0 * matrix.accuracy()
        per_class[(key, snr, seed)] = matrix.per_class_percent()

    for seed in _SEEDS:
        cfg_l2 = ExperimentConfig(channel_profile=PROFILE_L2, snr_grid=(9.0, 15.0, 30.0),
                                  master_seed=seed, **_BASE)
        cfg_l2_g = ExperimentConfig(channel_profile=PROFILE_L2, snr_grid=(9.0, 15.0, 30.0),
                                    master_seed=seed, classifier="grlvqi", **_BASE)
        train, blind = split_train_blind(cfg_l2)
        for si, snr in enumerate(cfg_l2.snr_grid):
            fps = collect_fingerprints(cfg_l2, si)
            matrix, _ = select_and_classify(cfg_l2, si, fps["magnitude"], train, blind)
            record("l2-mag-mda", snr, seed, matrix)
            if snr <= 15.0:
                matrix, _ = select_and_classify(cfg_l2_g, si, fps["magnitude"],
                                                train, blind)
                record("l2-mag-grlvqi", snr, seed, matrix)

        cfg_l5 = ExperimentConfig(channel_profile=PROFILE_L5, snr_grid=(9.0, 30.0),
                                  master_seed=seed, **_BASE)
        cfg_l5_ph = ExperimentConfig(channel_profile=PROFILE_L5, snr_grid=(9.0, 30.0),
                                     master_seed=seed, fingerprint_kind="phase", **_BASE)
        train, blind = split_train_blind(cfg_l5)
        for si, snr in enumerate(cfg_l5.snr_grid):
            fps = collect_fingerprints(cfg_l5, si, kinds=("magnitude", "phase"))
            matrix, _ = select_and_classify(cfg_l5, si, fps["magnitude"], train, blind)
            record("l5-mag-mda", snr, seed, matrix)
            matrix, _ = select_and_classify(cfg_l5_ph, si, fps["phase"], train, blind)
            record("l5-phase-mda", snr, seed, matrix)

        cfg_none = ExperimentConfig(channel_profile=None, snr_grid=(9.0, 30.0),
                                    master_seed=seed, **_BASE)
        train, blind = split_train_blind(cfg_none)
        for si, snr in enumerate(cfg_none.snr_grid):
            fps = collect_fingerprints(cfg_none, si)
            matrix, _ = select_and_classify(cfg_none, si, fps["magnitude"], train, blind)
            record("none-mag-mda", snr, seed, matrix)

    return accuracy, per_class


def _seed_mean(accuracy, key, snr):
    return float(np.mean([accuracy[(key, snr, seed)] for seed in _SEEDS]))


def test_criterion_9_end_to_end_trends():
    with _Budget(9, 1800):
        accuracy, per_class = _trend_data()

        # (a) accuracy at 30 dB >= accuracy at 9 dB for every radio and profile
        for key in ("l2-mag-mda", "l5-mag-mda", "none-mag-mda"):
            for radio in ("radio1", "radio2", "radio3", "radio4"):
                low = np.mean([per_class[(key, 9.0, s)][radio] for s in _SEEDS])
                high = np.mean([per_class[(key, 30.0, s)][radio] for s in _SEEDS])
                assert high >= low, f"(a) {key} {radio}: {high:.1f} < {low:.1f}"

        # (b) magnitude beats phase at L=5 by at least 3 points in mean accuracy
        mag = np.mean([_seed_mean(accuracy, "l5-mag-mda", s) for s in (9.0, 30.0)])
        phase = np.mean([_seed_mean(accuracy, "l5-phase-mda", s) for s in (9.0, 30.0)])
        assert mag - phase >= 3.0, f"(b) magnitude {mag:.1f} vs phase {phase:.1f}"

        # (c) MDA/ML >= GRLVQI at every evaluated SNR <= 15 dB
        for snr in (9.0, 15.0):
            mda = _seed_mean(accuracy, "l2-mag-mda", snr)
            grlvqi = _seed_mean(accuracy, "l2-mag-grlvqi", snr)
            assert mda >= grlvqi, f"(c) snr={snr}: MDA {mda:.1f} < GRLVQI {grlvqi:.1f}"

        # (d) no-multipath accuracy >= L=5 accuracy at every SNR
        for snr in (9.0, 30.0):
            none = _seed_mean(accuracy, "none-mag-mda", snr)
            l5 = _seed_mean(accuracy, "l5-mag-mda", snr)
            assert none >= l5, f"(d) snr={snr}: none {none:.1f} < L5 {l5:.1f}"


def test_criterion_10_determinism():
    cfg = ExperimentConfig(channel_profile=PROFILE_L2, snr_grid=(15.0,),
                           n_signals_per_radio=16, n_noise_realizations=2,
                           n_estimation_preambles=12, k_folds=2, n_candidates=4,
                           master_seed=110)
    with _Budget(10, 600):
        import tempfile, pathlib
        with tempfile.TemporaryDirectory() as tmp:
            tmp = pathlib.Path(tmp)
            run_estimator_comparison(cfg, tmp / "est_a")
            run_estimator_comparison(cfg, tmp / "est_b")
            assert ((tmp / "est_a" / "estimator_error.csv").read_bytes()
                    == (tmp / "est_b" / "estimator_error.csv").read_bytes())

            run_classification_experiment(cfg, tmp / "cls_a")
            run_classification_experiment(cfg, tmp / "cls_b")
            parallel = ExperimentConfig(channel_profile=PROFILE_L2, snr_grid=(15.0,),
                                        n_signals_per_radio=16, n_noise_realizations=2,
                                        n_estimation_preambles=12, k_folds=2,
                                        n_candidates=4, master_seed=110, workers=3)
            run_classification_experiment(parallel, tmp / "cls_c")
            for name in ("accuracy.csv", "accuracy_vs_snr.dat", "confusion_snr15.csv"):
                reference = (tmp / "cls_a" / name).read_bytes()
                assert (tmp / "cls_b" / name).read_bytes() == reference, name
                assert (tmp / "cls_c" / name).read_bytes() == reference, name
