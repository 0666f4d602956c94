"""Radio discrimination: Fisher-projection MDA with Gaussian ML decisions,
and relevance-weighted prototype learning (GRLVQI).

Both classifiers z-score features with training statistics stored in the
model.  Fitted models are immutable; classification is pure.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg

_COV_RIDGE = 1e-6  # relative ridge on projected class covariances


class ClassifierError(ValueError):
    """Raised for degenerate training sets or dimension mismatches."""


def _standardizer(features: np.ndarray):
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std > 0, std, 1.0)  # constant features pass through
    return mean, std


@dataclass
class MdaModel:
    classes: tuple
    feature_mean: np.ndarray
    feature_std: np.ndarray
    projection: np.ndarray        # N_f x (N_D - 1)
    class_means: np.ndarray       # N_D x (N_D - 1)
    class_covariances: np.ndarray  # N_D x (N_D - 1) x (N_D - 1)
    priors: np.ndarray
    regularization: float

    def transform(self, features: np.ndarray) -> np.ndarray:
        return ((features - self.feature_mean) / self.feature_std) @ self.projection


def _scatter_matrices(z: np.ndarray, labels: np.ndarray, classes):
    d = z.shape[1]
    overall = z.mean(axis=0)
    s_w = np.zeros((d, d))
    deviations = []
    for cls in classes:
        block = z[labels == cls]
        mu = block.mean(axis=0)
        centered = block - mu
        s_w += centered.T @ centered
        deviations.append(np.sqrt(block.shape[0]) * (mu - overall))
    return s_w, np.array(deviations)


def mda_fit(fingerprints, labels, regularization: float = 1e-3) -> MdaModel:
    """Fisher projection to N_D - 1 dimensions plus per-class Gaussians.

    Solves the generalized eigenproblem S_b v = lambda S_w v for the top
    N_D - 1 eigenvectors, exploiting that S_b has rank N_D - 1: with
    U the stacked weighted class-mean deviations (S_b = U^T U), the
    nonzero spectrum comes from the small matrix U S_w^-1 U^T.
    """
    features = np.asarray([np.asarray(f, dtype=float) for f in fingerprints])
    labels = np.asarray(labels)
    classes = tuple(sorted(set(labels.tolist())))
    if len(classes) < 2:
        raise ClassifierError("need at least two classes")
    counts = {cls: int(np.sum(labels == cls)) for cls in classes}
    if min(counts.values()) < len(classes):
        raise ClassifierError(f"need at least {len(classes)} samples per class, got {counts}")

    mean, std = _standardizer(features)
    z = (features - mean) / std
    s_w, u = _scatter_matrices(z, labels, classes)

    d = z.shape[1]
    if regularization > 0:
        s_w = s_w + regularization * (np.trace(s_w) / d) * np.eye(d)
    try:
        chol = scipy.linalg.cho_factor(s_w, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise ClassifierError(
            "within-class scatter is singular; raise the regularization term") from exc

    backsolved = scipy.linalg.cho_solve(chol, u.T, check_finite=False)  # d x N_D
    small = u @ backsolved                                              # N_D x N_D
    eigvals, eigvecs = np.linalg.eigh((small + small.T) / 2.0)
    top = eigvecs[:, ::-1][:, :len(classes) - 1]
    projection = backsolved @ top
    norms = np.linalg.norm(projection, axis=0)
    projection = projection / np.where(norms > 0, norms, 1.0)

    projected = z @ projection
    p = projection.shape[1]
    class_means = np.zeros((len(classes), p))
    class_covs = np.zeros((len(classes), p, p))
    priors = np.zeros(len(classes))
    for i, cls in enumerate(classes):
        block = projected[labels == cls]
        class_means[i] = block.mean(axis=0)
        centered = block - class_means[i]
        cov = centered.T @ centered / block.shape[0]
        cov += _COV_RIDGE * (np.trace(cov) / p) * np.eye(p)
        class_covs[i] = cov
        priors[i] = block.shape[0] / features.shape[0]
    return MdaModel(classes, mean, std, projection, class_means, class_covs,
                    priors, float(regularization))


def ml_classify(model: MdaModel, fingerprint):
    """Most likely class and the per-class log-likelihoods (plus log-priors)."""
    features = np.asarray(fingerprint, dtype=float)
    if features.size != model.feature_mean.size:
        raise ClassifierError(f"fingerprint length {features.size} != model "
                              f"dimension {model.feature_mean.size}")
    projected = model.transform(features[None, :])[0]
    scores = np.empty(len(model.classes))
    for i in range(len(model.classes)):
        diff = projected - model.class_means[i]
        cov = model.class_covariances[i]
        sign, logdet = np.linalg.slogdet(cov)
        maha = diff @ np.linalg.solve(cov, diff)
        scores[i] = (-0.5 * (maha + logdet + diff.size * np.log(2 * np.pi))
                     + np.log(model.priors[i]))
    best = int(np.argmax(scores))  # earliest class index wins ties
    return model.classes[best], scores


def ml_classify_batch(model: MdaModel, features: np.ndarray) -> np.ndarray:
    """Vectorized ml_classify over rows; returns an array of labels."""
    features = np.asarray(features, dtype=float)
    projected = model.transform(features)
    scores = np.empty((features.shape[0], len(model.classes)))
    for i in range(len(model.classes)):
        diff = projected - model.class_means[i]
        cov = model.class_covariances[i]
        sign, logdet = np.linalg.slogdet(cov)
        maha = np.einsum("ij,ij->i", diff, np.linalg.solve(cov, diff.T).T)
        scores[:, i] = -0.5 * (maha + logdet + diff.shape[1] * np.log(2 * np.pi))
        scores[:, i] += np.log(model.priors[i])
    indices = np.argmax(scores, axis=1)
    return np.array([model.classes[i] for i in indices])


@dataclass
class GrlvqiHyper:
    prototypes_per_class: int = 2
    epochs: int = 100
    prototype_learn_rate: float = 0.05
    relevance_learn_rate: float = 0.005
    sigmoid_steepness: float = 2.0

    def __post_init__(self):
        if self.prototypes_per_class < 1 or self.epochs < 1:
            raise ValueError("prototypes_per_class and epochs must be positive")


@dataclass
class GrlvqiModel:
    classes: tuple
    feature_mean: np.ndarray
    feature_std: np.ndarray
    prototypes: np.ndarray      # P x N_f
    prototype_classes: np.ndarray  # class index per prototype
    relevances: np.ndarray      # N_f, nonnegative, sums to 1
    hyper: GrlvqiHyper


def grlvqi_fit(fingerprints, labels, hyper: GrlvqiHyper | None = None,
               rng: np.random.Generator | None = None) -> GrlvqiModel:
    """Prototype/relevance learning on the sigmoid of the relative distance gap.

    Prototypes start at class means plus seeded jitter; each sample pulls
    its nearest correct-class prototype closer and pushes the nearest
    wrong-class prototype away, with gradients routed through
    mu = (d_J - d_K)/(d_J + d_K).  Relevances stay on the simplex.
    """
    hyper = hyper or GrlvqiHyper()
    rng = rng or np.random.default_rng(0)
    features = np.asarray([np.asarray(f, dtype=float) for f in fingerprints])
    labels = np.asarray(labels)
    classes = tuple(sorted(set(labels.tolist())))
    if len(classes) < 2:
        raise ClassifierError("need at least two classes")

    mean, std = _standardizer(features)
    z = (features - mean) / std
    n, d = z.shape
    if np.all(z == z[0]):
        raise ClassifierError("degenerate training set: all samples identical, "
                              "every prototype distance is zero")
    label_idx = np.array([classes.index(lbl) for lbl in labels])

    prototypes = np.empty((len(classes) * hyper.prototypes_per_class, d))
    proto_cls = np.empty(prototypes.shape[0], dtype=int)
    for i, cls in enumerate(classes):
        mu = z[label_idx == i].mean(axis=0)
        for j in range(hyper.prototypes_per_class):
            row = i * hyper.prototypes_per_class + j
            prototypes[row] = mu + 0.01 * rng.standard_normal(d)
            proto_cls[row] = i

    relevances = np.full(d, 1.0 / d)
    beta = hyper.sigmoid_steepness
    for epoch in range(hyper.epochs):
        decay = 1.0 - epoch / hyper.epochs
        lr_proto = hyper.prototype_learn_rate * decay
        lr_rel = hyper.relevance_learn_rate * decay
        for idx in rng.permutation(n):
            x = z[idx]
            diffs = x - prototypes
            dists = (diffs ** 2) @ relevances
            same = proto_cls == label_idx[idx]
            j = np.flatnonzero(same)[np.argmin(dists[same])]
            k = np.flatnonzero(~same)[np.argmin(dists[~same])]
            denom = dists[j] + dists[k]
            if denom == 0.0:
                raise ClassifierError("degenerate training set: zero distance to both "
                                      "the correct and wrong class prototypes")
            mu = (dists[j] - dists[k]) / denom
            f = 1.0 / (1.0 + np.exp(-beta * mu))
            slope = beta * f * (1.0 - f)
            gain_j = 2.0 * dists[k] / denom ** 2
            gain_k = 2.0 * dists[j] / denom ** 2
            prototypes[j] += lr_proto * slope * gain_j * 2.0 * relevances * diffs[j]
            prototypes[k] -= lr_proto * slope * gain_k * 2.0 * relevances * diffs[k]
            relevances -= lr_rel * slope * (gain_j * diffs[j] ** 2 - gain_k * diffs[k] ** 2)
            np.clip(relevances, 0.0, None, out=relevances)
            total = relevances.sum()
            if total == 0.0:
                relevances[:] = 1.0 / d
            else:
                relevances /= total
        if not (np.all(np.isfinite(prototypes)) and np.all(np.isfinite(relevances))):
            raise ClassifierError(f"training diverged at epoch {epoch}")
    return GrlvqiModel(classes, mean, std, prototypes, proto_cls, relevances, hyper)


def grlvqi_classify(model: GrlvqiModel, fingerprint):
    """Class of the nearest prototype under the relevance-weighted distance."""
    features = np.asarray(fingerprint, dtype=float)
    if features.size != model.feature_mean.size:
        raise ClassifierError(f"fingerprint length {features.size} != model "
                              f"dimension {model.feature_mean.size}")
    z = (features - model.feature_mean) / model.feature_std
    dists = ((z - model.prototypes) ** 2) @ model.relevances
    best = int(np.argmin(dists))  # earliest prototype index wins ties
    return model.classes[model.prototype_classes[best]]


def grlvqi_classify_batch(model: GrlvqiModel, features: np.ndarray) -> np.ndarray:
    """Vectorized grlvqi_classify over rows; returns an array of labels."""
    features = np.asarray(features, dtype=float)
    z = (features - model.feature_mean) / model.feature_std
    dists = np.einsum("npd,d->np",
                      (z[:, None, :] - model.prototypes[None, :, :]) ** 2,
                      model.relevances)
    best = np.argmin(dists, axis=1)
    return np.array([model.classes[model.prototype_classes[i]] for i in best])


_MODEL_MAGIC = b"RFDNAML1"


def _pack_array(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes()


def _unpack_array(buf, offset):
    (ndim,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    shape = struct.unpack_from(f"<{ndim}I", buf, offset)
    offset += 4 * ndim
    count = int(np.prod(shape))
    arr = np.frombuffer(buf, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
    return arr, offset + 8 * count


def _pack_labels(classes) -> bytes:
    out = struct.pack("<I", len(classes))
    for cls in classes:
        raw = str(cls).encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
    return out


def _unpack_labels(buf, offset):
    (n,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    classes = []
    for _ in range(n):
        (length,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        classes.append(buf[offset:offset + length].decode("utf-8"))
        offset += length
    return tuple(classes), offset


def save_model(path, model) -> None:
    """Versioned flat binary: magic, method tag, labels, then f64 matrices."""
    if isinstance(model, MdaModel):
        tag = b"MDAML\x00\x00\x00"
        body = (_pack_labels(model.classes)
                + _pack_array(model.feature_mean) + _pack_array(model.feature_std)
                + _pack_array(model.projection) + _pack_array(model.class_means)
                + _pack_array(model.class_covariances) + _pack_array(model.priors)
                + _pack_array(np.array([model.regularization])))
    elif isinstance(model, GrlvqiModel):
        tag = b"GRLVQI\x00\x00"
        h = model.hyper
        body = (_pack_labels(model.classes)
                + _pack_array(model.feature_mean) + _pack_array(model.feature_std)
                + _pack_array(model.prototypes)
                + _pack_array(model.prototype_classes.astype(float))
                + _pack_array(model.relevances)
                + _pack_array(np.array([h.prototypes_per_class, h.epochs,
                                        h.prototype_learn_rate, h.relevance_learn_rate,
                                        h.sigmoid_steepness])))
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC + tag + body)


def load_model(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != _MODEL_MAGIC:
        raise ValueError(f"{path}: not a {_MODEL_MAGIC.decode()} model container")
    tag = buf[8:16].rstrip(b"\x00").decode("ascii")
    classes, offset = _unpack_labels(buf, 16)
    arrays = []
    while offset < len(buf):
        arr, offset = _unpack_array(buf, offset)
        arrays.append(arr)
    if tag == "MDAML":
        mean, std, projection, means, covs, priors, reg = arrays
        return MdaModel(classes, mean, std, projection, means, covs, priors, float(reg[0]))
    if tag == "GRLVQI":
        mean, std, prototypes, proto_cls, relevances, hyper_vals = arrays
        hyper = GrlvqiHyper(int(hyper_vals[0]), int(hyper_vals[1]), hyper_vals[2],
                            hyper_vals[3], hyper_vals[4])
        return GrlvqiModel(classes, mean, std, prototypes, proto_cls.astype(int),
                           relevances, hyper)
    raise ValueError(f"{path}: unknown model tag {tag!r}")
