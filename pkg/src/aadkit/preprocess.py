"""EEG conditioning chain: re-referencing, IIR band-pass/notch filtering,
rational resampling, and per-channel z-scoring.

Filtering is causal (zero initial conditions, no forward-backward pass) so
the chain stays usable online; this is documented behaviour and makes the
whole chain deterministic.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal as _scipy_signal

from . import kernels
from .errors import BadChannelIndex, InvalidBand, IrrationalRatio


@dataclass
class MultichannelSignal:
    """Time-major (T, C) signal with sampling rate and channel labels."""

    samples: np.ndarray
    fs: float
    channel_names: list = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim == 1:
            self.samples = self.samples[:, None]
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise ValueError(f"bad sample shape {self.samples.shape}")
        if not self.fs > 0:
            raise ValueError("fs must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")
        if not self.channel_names:
            self.channel_names = [f"ch{i}" for i in range(self.samples.shape[1])]
        if len(self.channel_names) != self.samples.shape[1]:
            raise ValueError("channel_names length mismatch")

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def n_channels(self):
        return self.samples.shape[1]

    def with_samples(self, samples, fs=None, channel_names=None):
        return MultichannelSignal(
            samples,
            self.fs if fs is None else fs,
            list(self.channel_names) if channel_names is None else channel_names,
        )


@dataclass
class IirCascade:
    """Cascade of biquad sections, rows (b0, b1, b2, a1, a2), a0 == 1."""

    sections: np.ndarray
    design_label: str = ""

    def __post_init__(self):
        self.sections = np.atleast_2d(np.asarray(self.sections, dtype=np.float64))
        if self.sections.shape[1] != 5:
            raise ValueError("sections must have 5 coefficients per row")
        for a1, a2 in self.sections[:, 3:5]:
            poles = np.roots([1.0, a1, a2])
            if poles.size and np.max(np.abs(poles)) >= 1.0:
                raise InvalidBand(
                    f"unstable section in {self.design_label or 'cascade'}: "
                    f"pole magnitude {np.max(np.abs(poles)):.6f}"
                )

    def response(self, freqs_hz, fs):
        """Complex frequency response evaluated on the unit circle."""
        w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / fs
        z1 = np.exp(-1j * w)
        z2 = z1 * z1
        h = np.ones_like(z1, dtype=np.complex128)
        for b0, b1, b2, a1, a2 in self.sections:
            h *= (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2)
        return h


def _sos_from_scipy(sos, label):
    if not np.allclose(sos[:, 3], 1.0):
        sos = sos / sos[:, 3:4]
    return IirCascade(np.column_stack([sos[:, 0:3], sos[:, 4:6]]), label)


def design_bandpass(low_hz, high_hz, order, fs):
    """Butterworth band-pass of the given total order (even, >= 2).

    Uses the bilinear transform with frequency pre-warping; the returned
    cascade has unity gain (within 1 dB) at the geometric mean of the band
    edges.
    """
    if not (0 < low_hz < high_hz < fs / 2):
        raise InvalidBand(
            f"band edges ({low_hz}, {high_hz}) invalid for fs={fs}"
        )
    if order < 2 or order % 2 != 0:
        raise InvalidBand(f"order must be even and >= 2, got {order}")
    sos = _scipy_signal.butter(
        order // 2, [low_hz, high_hz], btype="bandpass", fs=fs, output="sos"
    )
    return _sos_from_scipy(sos, f"bandpass {low_hz}-{high_hz} Hz ord{order}")


def design_notch(stop_low_hz, stop_high_hz, fs, order=4):
    """Butterworth band-stop covering [stop_low_hz, stop_high_hz]."""
    if not (0 < stop_low_hz < stop_high_hz < fs / 2):
        raise InvalidBand(
            f"stopband ({stop_low_hz}, {stop_high_hz}) invalid for fs={fs}"
        )
    sos = _scipy_signal.butter(
        order // 2,
        [stop_low_hz, stop_high_hz],
        btype="bandstop",
        fs=fs,
        output="sos",
    )
    return _sos_from_scipy(sos, f"notch {stop_low_hz}-{stop_high_hz} Hz")


def filter_apply(x, cascade):
    """Causal per-channel filtering with zero initial conditions."""
    y = kernels.sosfilt(cascade.sections, x.samples)
    return x.with_samples(y)


def rereference(x, ref_index, drop_ref=False):
    """Subtract the reference channel from every channel.

    With ``drop_ref`` the reference channel is removed from the output,
    otherwise it stays as a column of zeros.
    """
    if not (0 <= ref_index < x.n_channels):
        raise BadChannelIndex(
            f"reference index {ref_index} out of range for C={x.n_channels}"
        )
    ref = x.samples[:, ref_index : ref_index + 1]
    out = x.samples - ref
    names = list(x.channel_names)
    if drop_ref:
        keep = [c for c in range(x.n_channels) if c != ref_index]
        out = out[:, keep]
        names = [names[c] for c in keep]
    return x.with_samples(out, channel_names=names)


_FIR_CACHE = {}


def _rational_ratio(fs_from, fs_to):
    ratio = fs_to / fs_from
    frac = Fraction(ratio).limit_denominator(1000)
    if frac.numerator <= 0:
        raise IrrationalRatio(f"bad rate ratio {fs_to}/{fs_from}")
    if abs(float(frac) - ratio) > 1e-9 * ratio:
        raise IrrationalRatio(
            f"ratio {fs_to}/{fs_from} has no rational form with "
            "denominator <= 1000"
        )
    return frac.numerator, frac.denominator


def _antialias_fir(fs_from, fs_to, up):
    """Kaiser-windowed linear-phase low-pass at 0.45 x the lower rate.

    Each polyphase branch is normalized to unit DC gain so constants pass
    through exactly.
    """
    key = (round(fs_from, 9), round(fs_to, 9))
    if key in _FIR_CACHE:
        return _FIR_CACHE[key]
    fs_up = fs_from * up
    fmin = min(fs_from, fs_to)
    cutoff = 0.45 * fmin / fs_up  # cycles per sample at the upsampled rate
    trans = 0.05 * fmin / fs_up
    atten_db = 60.0
    beta = 0.1102 * (atten_db - 8.7)
    n_taps = int(math.ceil((atten_db - 7.95) / (14.36 * trans)))
    if n_taps % 2 == 0:
        n_taps += 1
    m = (n_taps - 1) / 2.0
    n = np.arange(n_taps)
    h = 2.0 * cutoff * np.sinc(2.0 * cutoff * (n - m)) * np.kaiser(n_taps, beta)
    for phase in range(up):
        branch = h[phase::up]
        h[phase::up] = branch / branch.sum()
    _FIR_CACHE[key] = h
    return h


def resample(x, to_fs):
    """Polyphase rational resampling to ``to_fs``.

    Output length is ceil(T * to_fs / fs). The anti-alias low-pass sits at
    0.45 x the lower of the two rates, Kaiser-designed for >= 60 dB
    stopband attenuation.
    """
    if not to_fs > 0:
        raise IrrationalRatio("target rate must be positive")
    if to_fs == x.fs:
        return x.with_samples(x.samples.copy())
    up, down = _rational_ratio(x.fs, to_fs)
    h = _antialias_fir(x.fs, to_fs, up)
    n_out = -(-x.n_samples * up // down)  # ceil in exact integer arithmetic
    y = kernels.fir_resample(x.samples, h, up, down, n_out)
    return x.with_samples(y, fs=to_fs)


def zscore(x):
    """Per-channel zero mean, unit sample standard deviation (ddof=1).

    Constant channels come back as all zeros.
    """
    mean = x.samples.mean(axis=0)
    centered = x.samples - mean
    if x.n_samples < 2:
        return x.with_samples(np.zeros_like(x.samples))
    std = centered.std(axis=0, ddof=1)
    floor = 1e-15 * np.maximum(1.0, np.abs(mean))
    out = np.where(std > floor, centered / np.where(std > floor, std, 1.0), 0.0)
    return x.with_samples(out)


def standard_chain(x, ref_index=None, band=(0.5, 62.0), band_order=8,
                   notch=(48.0, 52.0), to_fs=40.0):
    """Re-reference, band-pass, notch, resample, z-score. Any stage can be
    skipped by passing None for its parameter."""
    if ref_index is not None:
        x = rereference(x, ref_index, drop_ref=True)
    if band is not None:
        x = filter_apply(x, design_bandpass(band[0], band[1], band_order, x.fs))
    if notch is not None:
        x = filter_apply(x, design_notch(notch[0], notch[1], x.fs))
    if to_fs is not None:
        x = resample(x, to_fs)
    return zscore(x)
