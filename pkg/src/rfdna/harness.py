"""Experiment harness: estimator-error and classification-vs-SNR protocols.

Every random draw comes from a child generator derived from the master
seed and a fixed stream key, so runs are reproducible byte-for-byte and
independent of worker scheduling.  Stream ids: 0 candidate selection,
1 channel draws, 2 noise draws, 3 train/blind splits, 4 classifier
training, 5/6 estimator-comparison channel/noise.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import chanest, classify, equalize, fingerprint, sync
from .channel import (IDENTITY_CHANNEL, ChannelProfile, SHIPPED_PROFILES,
                      add_awgn, apply_channel, draw_channel)
from .chanest import NmConfig
from .classify import GrlvqiHyper
from .fingerprint import GaborConfig
from .signal_model import (REFERENCE_RADIOS, ComplexBaseband, apply_emitter,
                           generate_preamble, lts_frequency_reference)

ESTIMATORS = ("ls", "mmse", "nm")
EQUALIZERS = ("zf", "mmse")
FINGERPRINT_KINDS = ("magnitude", "phase")
CLASSIFIERS = ("mdaml", "grlvqi")

# delay support used when no multipath is simulated
NO_MULTIPATH_PROFILE = ChannelProfile(1, (0.0,), (1.0,))


def child_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Deterministic per-stream generator; independent of execution order."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


@dataclass
class ExperimentConfig:
    radios: tuple = REFERENCE_RADIOS
    channel_profile: ChannelProfile | None = SHIPPED_PROFILES["l2"]
    snr_grid: tuple = tuple(float(s) for s in range(9, 31, 3))
    n_noise_realizations: int = 3
    n_signals_per_radio: int = 400
    n_estimation_preambles: int = 200   # total trials, allocated round-robin
    train_fraction: float = 0.5
    k_folds: int = 5
    estimator: str = "nm"
    equalizer: str = "mmse"
    fingerprint_kind: str = "magnitude"
    classifier: str = "mdaml"
    n_candidates: int = 20
    master_seed: int = 0
    workers: int = 1
    nm: NmConfig = field(default_factory=NmConfig)
    gabor: GaborConfig = field(default_factory=GaborConfig)
    # heavy ridge: fingerprints have ~1e3 dimensions against a few hundred
    # training rows, so the within-class scatter needs strong shrinkage
    mda_regularization: float = 1.0
    grlvqi: GrlvqiHyper = field(default_factory=GrlvqiHyper)

    def __post_init__(self):
        if not self.snr_grid:
            raise ValueError("snr_grid must not be empty")
        if self.k_folds < 2:
            raise ValueError("k_folds must be at least 2")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if len(self.radios) == 0:
            raise ValueError("at least one radio is required")
        if self.n_candidates % len(self.radios) != 0:
            raise ValueError(f"n_candidates {self.n_candidates} must divide evenly "
                             f"across {len(self.radios)} radios")
        for name, allowed in (("estimator", ESTIMATORS), ("equalizer", EQUALIZERS),
                              ("fingerprint_kind", FINGERPRINT_KINDS),
                              ("classifier", CLASSIFIERS)):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}")

    @property
    def estimation_profile(self) -> ChannelProfile:
        return self.channel_profile if self.channel_profile is not None else NO_MULTIPATH_PROFILE

    def relative_delays(self) -> np.ndarray:
        grid = self.estimation_profile.delays_samples()
        return grid - grid[0]

    def canonical_text(self) -> str:
        lines = [f"radios = {[r.id for r in self.radios]}"]
        for r in self.radios:
            lines.append(f"radio {r.id}: gain_db={r.iq_gain_imbalance_db!r} "
                         f"phase_deg={r.iq_phase_imbalance_deg!r} pa={r.pa_coefficients!r} "
                         f"cfo={r.residual_cfo_hz!r} dc={r.dc_offset!r}")
        profile = self.channel_profile
        lines.append("channel = none" if profile is None else
                     f"channel = L={profile.n_paths}; delays_ns={profile.delays_ns}; "
                     f"variances={profile.variances}")
        for name in ("snr_grid", "n_noise_realizations", "n_signals_per_radio",
                     "n_estimation_preambles", "train_fraction", "k_folds", "estimator",
                     "equalizer", "fingerprint_kind", "classifier", "n_candidates",
                     "master_seed", "mda_regularization"):
            lines.append(f"{name} = {getattr(self, name)!r}")
        lines.append(f"nm = {self.nm!r}")
        lines.append(f"grlvqi = {self.grlvqi!r}")
        window_hash = hashlib.sha256(self.gabor.window.tobytes()).hexdigest()[:12]
        lines.append(f"gabor = ({self.gabor.m_shifts}, {self.gabor.freq_bins}, "
                     f"{self.gabor.stride}, window:{window_hash})")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


def transmitted_preambles(cfg: ExperimentConfig) -> dict:
    base = generate_preamble()
    return {radio.id: apply_emitter(radio, base) for radio in cfg.radios}


def select_candidates(dataset: dict, n_p: int, rng: np.random.Generator) -> list:
    """Uniform per-radio selection of n_p / n_radios candidate preambles.

    dataset maps radio id to its list of transmitted preambles; returns
    (radio_id, waveform) pairs in radio order.
    """
    radios = sorted(dataset.keys())
    if n_p % len(radios) != 0:
        raise ValueError(f"n_p {n_p} must divide evenly across {len(radios)} radios")
    quota = n_p // len(radios)
    picks = []
    for radio_id in radios:
        pool = dataset[radio_id]
        if quota > len(pool):
            raise ValueError(f"quota {quota} exceeds the {len(pool)} signals of {radio_id}")
        chosen = rng.choice(len(pool), size=quota, replace=False)
        picks.extend((radio_id, pool[int(i)]) for i in sorted(chosen))
    return picks


def _estimate(cfg: ExperimentConfig, kind: str, noisy: ComplexBaseband,
              noise_var: float, candidates, x_ref) -> chanest.ChannelEstimate:
    """Run one estimator at the synchronized position; delays are absolute."""
    offset = sync.estimate_time_offset(noisy).first_path_offset
    spacings = cfg.relative_delays()
    lts1, lts2 = chanest.extract_lts_windows(noisy, offset)
    ls_est = chanest.ls_estimate(lts1, lts2, x_ref, spacings)
    ls_abs = chanest.ChannelEstimate(ls_est.taps, offset + spacings, "LS",
                                     ls_est.residual_power)
    if kind == "ls":
        return ls_abs
    if kind == "mmse":
        return chanest.lmmse_estimate(ls_abs, cfg.estimation_profile, noise_var, x_ref)
    return chanest.nm_estimate(noisy, candidates, offset + spacings, cfg.nm,
                               x0_taps=ls_est.taps)


def _equalize(cfg: ExperimentConfig, noisy, estimate, snr_db):
    if cfg.equalizer == "zf":
        try:
            return equalize.zf_equalize(noisy, estimate)
        except equalize.SpectralNullError:
            pass  # deep fade: fall back to the regularized equalizer
    return equalize.mmse_equalize(noisy, estimate, snr_db)


def run_estimator_comparison(cfg: ExperimentConfig, out_dir=None) -> list:
    """Mean squared tap error per estimator per SNR.

    Each trial draws a fresh channel for one radio's transmitted preamble,
    then adds N_z independent noise realizations; every estimator sees the
    identical received signal.  Returns rows of
    (estimator, snr_db, mean_squared_error, n_trials).
    """
    if cfg.channel_profile is None:
        raise ValueError("estimator comparison requires a multipath profile")
    x_ref = lts_frequency_reference()
    tx = transmitted_preambles(cfg)
    radio_ids = [r.id for r in cfg.radios]

    tasks = [(si, trial) for si in range(len(cfg.snr_grid))
             for trial in range(cfg.n_estimation_preambles)]
    chunks = _split_chunks(tasks, cfg.workers)
    results = _dispatch(cfg, _est_compare_chunk, chunks,
                        (cfg, {rid: tx[rid] for rid in radio_ids}, x_ref))

    sums = {(kind, si): 0.0 for kind in ESTIMATORS for si in range(len(cfg.snr_grid))}
    counts = {key: 0 for key in sums}
    for (si, _trial, kind), err in sorted(results.items()):
        sums[(kind, si)] += err
        counts[(kind, si)] += 1
    rows = []
    for kind in ("LS", "MMSE", "NM"):
        for si, snr in enumerate(cfg.snr_grid):
            key = (kind.lower(), si)
            rows.append((kind, float(snr), float(sums[key] / counts[key]), counts[key]))

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        lines = ["estimator, snr_db, mean_squared_error, n_trials"]
        lines += [f"{kind}, {snr!r}, {err!r}, {n}" for kind, snr, err, n in rows]
        _write(os.path.join(out_dir, "estimator_error.csv"), "\n".join(lines) + "\n")
        _write_manifest(cfg, out_dir)
    return rows


def _est_compare_chunk(cfg: ExperimentConfig, tx: dict, x_ref, tasks) -> dict:
    """Estimator accuracy under known timing (the burst is placed at 0 and
    the delay grid comes from the profile); every estimator sees the same
    received signal per trial."""
    radio_ids = [r.id for r in cfg.radios]
    out = {}
    for si, trial in tasks:
        snr = cfg.snr_grid[si]
        radio_id = radio_ids[trial % len(radio_ids)]
        sent = tx[radio_id]
        realization = draw_channel(cfg.channel_profile, child_rng(cfg.master_seed, 5, si, trial))
        delays = realization.delays
        faded = apply_channel(sent, realization)
        for z in range(cfg.n_noise_realizations):
            noisy, noise_var = add_awgn(faded, snr, child_rng(cfg.master_seed, 6, si, trial, z))
            lts1, lts2 = chanest.extract_lts_windows(noisy, 0)
            ls_est = chanest.ls_estimate(lts1, lts2, x_ref, delays)
            mmse = chanest.lmmse_estimate(ls_est, cfg.channel_profile, noise_var, x_ref)
            nm = chanest.nm_estimate(noisy, [sent], delays, cfg.nm, x0_taps=ls_est.taps)
            for kind, est in (("ls", ls_est), ("mmse", mmse), ("nm", nm)):
                key = (si, trial * cfg.n_noise_realizations + z, kind)
                out[key] = chanest.squared_error(realization, est)
    return out


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    labels: tuple
    snr_db: float

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=int)
        n = len(self.labels)
        if self.counts.shape != (n, n):
            raise ValueError("counts must be square over the label set")
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")

    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts)) / total if total else 0.0

    def per_class_percent(self) -> dict:
        out = {}
        for i, label in enumerate(self.labels):
            row = self.counts[i].sum()
            out[label] = 100.0 * self.counts[i, i] / row if row else 0.0
        return out

    def to_csv(self) -> str:
        header = "snr_db, true_radio, " + ", ".join(f"declared_{l}" for l in self.labels)
        lines = [header]
        for i, label in enumerate(self.labels):
            row = ", ".join(str(int(v)) for v in self.counts[i])
            lines.append(f"{self.snr_db!r}, {label}, {row}")
        return "\n".join(lines) + "\n"


def split_train_blind(cfg: ExperimentConfig) -> tuple[dict, dict]:
    """Seeded per-radio index split; train and blind sets never overlap."""
    train, blind = {}, {}
    n_train = round(cfg.train_fraction * cfg.n_signals_per_radio)
    if not 0 < n_train < cfg.n_signals_per_radio:
        raise ValueError("train fraction leaves an empty train or blind set")
    for ri, radio in enumerate(cfg.radios):
        order = child_rng(cfg.master_seed, 3, ri).permutation(cfg.n_signals_per_radio)
        train[radio.id] = np.sort(order[:n_train])
        blind[radio.id] = np.sort(order[n_train:])
    return train, blind


def collect_fingerprints(cfg: ExperimentConfig, snr_index: int, kinds=None) -> dict:
    """Pipeline every signal of every radio at one SNR through
    channel -> sync -> estimate -> equalize -> fingerprint.

    Returns {kind: {z: {radio_id: features array (n_signals, N_f)}}}.
    """
    kinds = tuple(kinds) if kinds else (cfg.fingerprint_kind,)
    x_ref = lts_frequency_reference()
    tx = transmitted_preambles(cfg)
    dataset = {rid: [tx[rid]] * cfg.n_signals_per_radio for rid in tx}
    pairs = select_candidates(dataset, cfg.n_candidates, child_rng(cfg.master_seed, 0))
    candidates = [wave for _rid, wave in pairs]

    tasks = [(ri, g) for ri in range(len(cfg.radios))
             for g in range(cfg.n_signals_per_radio)]
    chunks = _split_chunks(tasks, cfg.workers)
    results = _dispatch(cfg, _fingerprint_chunk, chunks,
                        (cfg, tx, x_ref, candidates, snr_index, kinds))

    n_features = fingerprint.fingerprint_length(cfg.gabor)
    out = {kind: {z: {radio.id: np.empty((cfg.n_signals_per_radio, n_features))
                      for radio in cfg.radios}
                  for z in range(cfg.n_noise_realizations)}
           for kind in kinds}
    for (ri, g, z, kind), features in results.items():
        out[kind][z][cfg.radios[ri].id][g] = features
    return out


def _fingerprint_chunk(cfg: ExperimentConfig, tx, x_ref, candidates, snr_index, kinds,
                       tasks) -> dict:
    snr = cfg.snr_grid[snr_index]
    out = {}
    for ri, g in tasks:
        radio_id = cfg.radios[ri].id
        sent = tx[radio_id]
        signal_key = ri * cfg.n_signals_per_radio + g
        if cfg.channel_profile is None:
            realization = IDENTITY_CHANNEL
        else:
            realization = draw_channel(cfg.channel_profile,
                                       child_rng(cfg.master_seed, 1, snr_index, signal_key))
        faded = apply_channel(sent, realization)
        for z in range(cfg.n_noise_realizations):
            noisy, noise_var = add_awgn(faded, snr,
                                        child_rng(cfg.master_seed, 2, snr_index, signal_key, z))
            estimate = _estimate(cfg, cfg.estimator, noisy, noise_var, candidates, x_ref)
            recovered = _equalize(cfg, noisy, estimate, snr)
            coefficients = fingerprint.gabor_coefficients(recovered, cfg.gabor)
            for kind in kinds:
                surface = fingerprint.to_surface(coefficients, kind)
                out[(ri, g, z, kind)] = fingerprint.extract_fingerprint(surface).features
    return out


def _fold_assignments(cfg: ExperimentConfig, train_idx: dict) -> list:
    """k folds of per-radio train indices, shuffled by the split stream."""
    folds = [dict() for _ in range(cfg.k_folds)]
    for ri, radio in enumerate(cfg.radios):
        indices = train_idx[radio.id]
        order = child_rng(cfg.master_seed, 3, ri, 1).permutation(len(indices))
        for f in range(cfg.k_folds):
            folds[f][radio.id] = np.sort(indices[order[f::cfg.k_folds]])
    return folds


def _stack(per_radio: dict, index_map: dict) -> tuple[np.ndarray, np.ndarray]:
    blocks, labels = [], []
    for radio_id in sorted(per_radio.keys()):
        rows = per_radio[radio_id][index_map[radio_id]]
        blocks.append(rows)
        labels.extend([radio_id] * rows.shape[0])
    return np.vstack(blocks), np.array(labels)


def _fit(cfg: ExperimentConfig, features, labels, rng):
    if cfg.classifier == "mdaml":
        return classify.mda_fit(features, labels, cfg.mda_regularization)
    return classify.grlvqi_fit(features, labels, cfg.grlvqi, rng)


def _predict(cfg: ExperimentConfig, model, features):
    if cfg.classifier == "mdaml":
        return classify.ml_classify_batch(model, features)
    return classify.grlvqi_classify_batch(model, features)


def select_and_classify(cfg: ExperimentConfig, snr_index: int, per_z: dict,
                        train_idx: dict, blind_idx: dict):
    """Cross-validate over (fold, realization), keep the minimum-error model,
    and classify every blind fingerprint of every realization with it.
    """
    folds = _fold_assignments(cfg, train_idx)
    best = None
    for z in range(cfg.n_noise_realizations):
        for f in range(cfg.k_folds):
            held = folds[f]
            kept = {rid: np.setdiff1d(train_idx[rid], held[rid]) for rid in train_idx}
            fit_x, fit_y = _stack(per_z[z], kept)
            val_x, val_y = _stack(per_z[z], held)
            model = _fit(cfg, fit_x, fit_y, child_rng(cfg.master_seed, 4, snr_index, z, f))
            error = float(np.mean(_predict(cfg, model, val_x) != val_y))
            if best is None or error < best[0]:
                best = (error, z, f, model)

    model = best[3]
    labels = tuple(sorted(r.id for r in cfg.radios))
    index = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=int)
    for z in range(cfg.n_noise_realizations):
        blind_x, blind_y = _stack(per_z[z], blind_idx)
        declared = _predict(cfg, model, blind_x)
        for truth, guess in zip(blind_y, declared):
            counts[index[truth], index[guess]] += 1
    return ConfusionMatrix(counts, labels, cfg.snr_grid[snr_index]), best[:3]


def run_classification_experiment(cfg: ExperimentConfig, out_dir=None):
    """Blind-set confusion matrices and accuracy for every SNR in the grid."""
    train_idx, blind_idx = split_train_blind(cfg)
    for radio_id in train_idx:
        overlap = np.intersect1d(train_idx[radio_id], blind_idx[radio_id])
        if overlap.size:
            raise RuntimeError(f"train/blind overlap for {radio_id}: {overlap}")

    matrices = []
    for si in range(len(cfg.snr_grid)):
        fps = collect_fingerprints(cfg, si)
        per_z = fps[cfg.fingerprint_kind]
        matrix, _selected = select_and_classify(cfg, si, per_z, train_idx, blind_idx)
        matrices.append(matrix)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        acc_lines = ["snr_db, radio_id, percent_correct"]
        plot_lines = ["# snr_db  mean_percent_correct"]
        for matrix in matrices:
            per_class = matrix.per_class_percent()
            for radio_id in matrix.labels:
                acc_lines.append(f"{float(matrix.snr_db)!r}, {radio_id}, "
                                 f"{float(per_class[radio_id])!r}")
            plot_lines.append(f"{matrix.snr_db:g} {float(100.0 * matrix.accuracy())!r}")
            _write(os.path.join(out_dir, f"confusion_snr{matrix.snr_db:g}.csv"),
                   matrix.to_csv())
        _write(os.path.join(out_dir, "accuracy.csv"), "\n".join(acc_lines) + "\n")
        _write(os.path.join(out_dir, "accuracy_vs_snr.dat"), "\n".join(plot_lines) + "\n")
        _write_manifest(cfg, out_dir)
    return matrices


def _split_chunks(tasks: list, workers: int) -> list:
    if workers <= 1:
        return [tasks]
    size = max(1, (len(tasks) + workers - 1) // workers)
    return [tasks[i:i + size] for i in range(0, len(tasks), size)]


def _dispatch(cfg: ExperimentConfig, fn, chunks: list, args: tuple) -> dict:
    """Run chunk workers serially or in a pool; merge keyed results."""
    merged = {}
    if cfg.workers <= 1 or len(chunks) == 1:
        for chunk in chunks:
            merged.update(fn(*args, chunk))
        return merged
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        for result in pool.map(fn, *zip(*[(args + (chunk,)) for chunk in chunks])):
            merged.update(result)
    return merged


def _write(path: str, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _write_manifest(cfg: ExperimentConfig, out_dir: str) -> None:
    text = (f"config_hash {cfg.config_hash()}\n"
            f"master_seed {cfg.master_seed}\n"
            f"--- config ---\n{cfg.canonical_text()}")
    _write(os.path.join(out_dir, "manifest.txt"), text)
