"""Envelope reconstruction decoders: ridge-regularized Wiener filter and
regularized CCA, plus per-channel statistics of the fitted weights."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch
from .metrics import pcc
from .numerics import solve_regularized, spd_function, svd


@dataclass
class WfModel:
    w: np.ndarray  # (L*C,)
    lam: float
    lags: int
    channels: int


def wf_fit(stats, lam):
    """Least-squares backward model with diagonal loading lam.

    Solves (rxx + lam I) w = rxy on accumulated statistics.
    """
    if stats.rxy is None:
        raise DimensionMismatch("stats carry no regression target")
    w = solve_regularized(stats.rxx, stats.rxy, lam)
    return WfModel(w=w, lam=float(lam), lags=stats.lags, channels=stats.channels)


@dataclass
class CcaModel:
    wx: np.ndarray  # (Lx*C, n_components)
    wy: np.ndarray  # (Ly, n_components)
    correlations: np.ndarray  # descending, clipped to [0, 1]
    reg: float


def cca_fit(stats, reg, n_components):
    """Canonical projections from whitened cross-covariance SVD.

    Both auto-covariances receive ``reg`` on the diagonal before the
    inverse square root; singular vectors are mapped back through the
    whitening transforms and singular values clipped into [0, 1].
    """
    if stats.ryy is None or stats.rxy_mat is None:
        raise DimensionMismatch("stats carry no lagged-target covariances")
    dx = stats.rxx.shape[0]
    dy = stats.ryy.shape[0]
    n_components = int(n_components)
    if n_components < 1 or n_components > min(dx, dy):
        raise DimensionMismatch(
            f"n_components={n_components} out of range for ({dx}, {dy})"
        )
    wxw = spd_function(stats.rxx + reg * np.eye(dx), "inv_sqrt")
    wyw = spd_function(stats.ryy + reg * np.eye(dy), "inv_sqrt")
    u, s, v = svd(wxw @ stats.rxy_mat @ wyw)
    wx = wxw @ u[:, :n_components]
    wy = wyw @ v[:, :n_components]
    corr = np.clip(s[:n_components], 0.0, 1.0)
    return CcaModel(wx=wx, wy=wy, correlations=corr, reg=float(reg))


def cca_score(x, y, model):
    """Mean correlation between paired projections of EEG and a candidate.

    Averaging over components keeps the score in [-1, 1]; rankings are
    identical to the summed-component form.
    """
    if x.matrix.shape[1] != model.wx.shape[0]:
        raise DimensionMismatch("EEG design does not match model")
    if y.matrix.shape[1] != model.wy.shape[0]:
        raise DimensionMismatch("candidate design does not match model")
    px = x.matrix @ model.wx
    py = y.matrix @ model.wy
    n = model.wx.shape[1]
    return float(np.mean([pcc(px[:, i], py[:, i]) for i in range(n)]))


def wf_predict(x, model):
    """Reconstruction X_lag @ w for a lagged design."""
    if x.matrix.shape[1] != model.w.shape[0]:
        raise DimensionMismatch(
            f"design width {x.matrix.shape[1]} != weights {model.w.shape[0]}"
        )
    return x.matrix @ model.w


class ChannelWeightStats(NamedTuple):
    max_abs: np.ndarray  # (C,)
    mean_sq: np.ndarray  # (C,)


def channel_weight_stats(w, lags, channels):
    """Per-channel max |w| and mean w^2 over that channel's lag block."""
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.shape[0] != lags * channels:
        raise DimensionMismatch(
            f"weight length {w.shape[0]} != lags*channels {lags * channels}"
        )
    blocks = w.reshape(channels, lags)
    return ChannelWeightStats(
        max_abs=np.max(np.abs(blocks), axis=1),
        mean_sq=np.mean(blocks ** 2, axis=1),
    )
