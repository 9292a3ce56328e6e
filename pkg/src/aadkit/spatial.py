"""Direction classifiers: multiclass filterbank CSP with log-energy
features, Riemannian tangent-space features, and a shared shrinkage LDA."""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Tuple

import numpy as np

from . import kernels, preprocess
from .errors import DegenerateClass, DimensionMismatch, NotSpd, SingularScatter
from .numerics import gen_sym_eig, spd_function, sym_eig, symmetrize

# Filter bank at the 40 Hz processing rate. The top band stops just under
# the 20 Hz Nyquist so the band-pass design stays valid.
DEFAULT_BANDS = ((1.0, 4.0), (4.0, 8.0), (8.0, 14.0), (14.0, 19.5))
DEFAULT_CSP_FILTERS = 4
DEFAULT_RGC_SHRINKAGE = 0.1
DEFAULT_LDA_GAMMA = 1e-3


def _center(segment):
    segment = np.asarray(segment, dtype=np.float64)
    return segment - segment.mean(axis=0)


def segment_covariance(segment, shrinkage=0.0):
    """Channel covariance X^T X / (T-1) of a centered window, optionally
    shrunk toward (trace/C) * I."""
    x = _center(segment)
    t_len, n_ch = x.shape
    if t_len < 2:
        raise DimensionMismatch("window too short for covariance")
    cov = symmetrize(x.T @ x / (t_len - 1))
    if shrinkage > 0.0:
        cov = (1.0 - shrinkage) * cov + shrinkage * (
            np.trace(cov) / n_ch
        ) * np.eye(n_ch)
    return cov


# ---------------------------------------------------------------------------
# filterbank CSP
# ---------------------------------------------------------------------------


@dataclass
class CspModel:
    filters: Dict[Tuple[int, int], np.ndarray]  # (band, class) -> (C, F)
    bands: tuple
    n_classes: int
    f_per: int
    fs: float
    channels: int
    # training covariances and eigenvalues retained for diagnostics
    class_cov: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)
    total_cov: Dict[int, np.ndarray] = field(default_factory=dict)
    eigenvalues: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)


@lru_cache(maxsize=32)
def _band_cascades(bands, fs):
    return [preprocess.design_bandpass(lo, hi, 4, fs) for lo, hi in bands]


def _bandpass_window(segment, cascade):
    return kernels.sosfilt(
        cascade.sections, np.ascontiguousarray(segment, dtype=np.float64)
    )


def csp_fit(segments, labels, fs, bands=DEFAULT_BANDS, f_per=DEFAULT_CSP_FILTERS,
            n_classes=None):
    """Fit one-vs-rest spatial filters per frequency band.

    For each (band, class), the filters are the top generalized
    eigenvectors of the class ensemble covariance against the all-class
    ensemble covariance.
    """
    labels = np.asarray(labels, dtype=int)
    if len(segments) != labels.shape[0]:
        raise DimensionMismatch("one label per segment required")
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    present = np.unique(labels)
    if present.size < 2:
        raise DegenerateClass("need at least 2 classes with segments")
    n_ch = np.asarray(segments[0]).shape[1]
    if f_per > n_ch:
        raise DimensionMismatch(f"f_per={f_per} exceeds C={n_ch}")
    bands = tuple(tuple(b) for b in bands)
    cascades = _band_cascades(bands, fs)
    filters = {}
    class_cov = {}
    total_cov = {}
    eigenvalues = {}
    for j, cascade in enumerate(cascades):
        covs = [
            segment_covariance(_bandpass_window(s, cascade)) for s in segments
        ]
        r_all = symmetrize(np.mean(covs, axis=0))
        total_cov[j] = r_all
        for k in range(n_classes):
            idx = np.flatnonzero(labels == k)
            if idx.size == 0:
                raise DegenerateClass(f"class {k} has no training segments")
            r_k = symmetrize(np.mean([covs[i] for i in idx], axis=0))
            if np.trace(r_k) <= 0:
                raise DegenerateClass(f"class {k} covariance is rank-0")
            pairs = gen_sym_eig(r_k, r_all)
            filters[(j, k)] = pairs.vectors[:, :f_per]
            class_cov[(j, k)] = r_k
            eigenvalues[(j, k)] = pairs.values[:f_per]
    return CspModel(
        filters=filters,
        bands=tuple(bands),
        n_classes=n_classes,
        f_per=f_per,
        fs=fs,
        channels=n_ch,
        class_cov=class_cov,
        total_cov=total_cov,
        eigenvalues=eigenvalues,
    )


def csp_features(segment, model):
    """Log variance of each filtered projection, concatenated over bands
    then classes; length N_band * N_class * F."""
    segment = np.asarray(segment, dtype=np.float64)
    if segment.shape[1] != model.channels:
        raise DimensionMismatch(
            f"segment has {segment.shape[1]} channels, model wants "
            f"{model.channels}"
        )
    cascades = _band_cascades(tuple(tuple(b) for b in model.bands), model.fs)
    feats = []
    for j, cascade in enumerate(cascades):
        filtered = _center(_bandpass_window(segment, cascade))
        for k in range(model.n_classes):
            proj = filtered @ model.filters[(j, k)]
            var = np.mean(proj ** 2, axis=0)
            feats.append(np.log(np.maximum(var, 1e-300)))
    return np.concatenate(feats)


# ---------------------------------------------------------------------------
# Riemannian tangent-space features
# ---------------------------------------------------------------------------


@dataclass
class RgcModel:
    mean: np.ndarray
    mean_inv_sqrt: np.ndarray
    shrinkage: float


def riemannian_mean(covs):
    """Log-Euclidean mean: exp of the average matrix logarithm."""
    covs = [np.asarray(c, dtype=np.float64) for c in covs]
    if not covs:
        raise DimensionMismatch("need at least one covariance")
    logs = [spd_function(c, "log") for c in covs]
    return spd_function(symmetrize(np.mean(logs, axis=0)), "exp_of_sym")


def rgc_fit(segments, shrinkage=DEFAULT_RGC_SHRINKAGE):
    """Reference point for tangent projection from training windows."""
    covs = [segment_covariance(s, shrinkage) for s in segments]
    mean = riemannian_mean(covs)
    return RgcModel(
        mean=mean,
        mean_inv_sqrt=spd_function(mean, "inv_sqrt"),
        shrinkage=shrinkage,
    )


def tangent_from_cov(cov, model):
    """Upper-triangle vectorization of log(W cov W), off-diagonals
    scaled by sqrt(2) so the Euclidean norm matches the Frobenius norm."""
    w = model.mean_inv_sqrt
    tn = spd_function(symmetrize(w @ cov @ w), "log")
    n = tn.shape[0]
    iu = np.triu_indices(n)
    coeff = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return coeff * tn[iu]


def tangent_features(segment, model):
    """Tangent-space feature vector of one window; length C(C+1)/2."""
    cov = segment_covariance(segment, model.shrinkage)
    try:
        return tangent_from_cov(cov, model)
    except NotSpd as exc:
        raise NotSpd(f"window covariance not positive definite: {exc}") from exc


# ---------------------------------------------------------------------------
# shrinkage LDA
# ---------------------------------------------------------------------------


@dataclass
class LdaModel:
    class_means: np.ndarray  # (K, D)
    weights: np.ndarray  # (D, K)
    biases: np.ndarray  # (K,)
    priors: np.ndarray  # (K,)


def lda_fit(features, labels, gamma=DEFAULT_LDA_GAMMA, n_classes=None):
    """Linear discriminant with diagonal shrinkage of the pooled scatter."""
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    if x.shape[0] != labels.shape[0]:
        raise DimensionMismatch("one label per feature row required")
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    n, d = x.shape
    present = np.unique(labels)
    if present.size < 1:
        raise DegenerateClass("no training samples")
    if n <= present.size:
        raise DegenerateClass("need more samples than classes")
    means = np.zeros((n_classes, d))
    priors = np.zeros(n_classes)
    scatter = np.zeros((d, d))
    for k in present:
        rows = x[labels == k]
        means[k] = rows.mean(axis=0)
        priors[k] = rows.shape[0] / n
        centered = rows - means[k]
        scatter += centered.T @ centered
    # a single training class degenerates to a constant predictor (absent
    # classes carry -inf prior score)
    pooled = symmetrize(scatter / (n - present.size))
    if gamma > 0.0:
        pooled = pooled + gamma * (np.trace(pooled) / d) * np.eye(d)
    values, vectors = sym_eig(pooled)
    floor = 1e-12 * max(values[0], 1.0)
    if values[-1] <= floor:
        raise SingularScatter(
            "pooled scatter is singular; increase gamma"
        )
    inv = (vectors / values) @ vectors.T
    weights = inv @ means.T
    biases = np.empty(n_classes)
    for k in range(n_classes):
        biases[k] = -0.5 * means[k] @ weights[:, k] + (
            np.log(priors[k]) if priors[k] > 0 else -np.inf
        )
    return LdaModel(class_means=means, weights=weights, biases=biases,
                    priors=priors)


def lda_predict(features, model):
    """Argmax of discriminant scores; ties resolve to the lowest index."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[0] == 0:
        return np.zeros(0, dtype=int)
    if x.shape[1] != model.weights.shape[0]:
        raise DimensionMismatch(
            f"feature width {x.shape[1]} != model dim {model.weights.shape[0]}"
        )
    scores = x @ model.weights + model.biases
    return np.argmax(scores, axis=1)
