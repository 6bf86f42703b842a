"""MFCC + delta + delta-delta features for the shallow baseline.

Each window is cut into Hann-tapered frames, turned into log mel-filterbank
energies, decorrelated with an orthonormal DCT-II, and pooled over frames
into a single 36-dim vector (12 cepstra, 12 deltas, 12 delta-deltas).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct


@dataclass(frozen=True)
class MfccConfig:
    rate_hz: int = 8000
    frame_len: int = 256  # 32 ms at 8 kHz
    hop: int = 128
    n_fft: int = 256
    n_filters: int = 26
    n_ceps: int = 12
    log_floor: float = 1e-10

    @property
    def feature_dim(self) -> int:
        return 3 * self.n_ceps


def hanning_window(n: int) -> np.ndarray:
    """Symmetric Hann window ``0.5 - 0.5 cos(2 pi k / (n - 1))``."""
    if n < 2:
        raise ValueError("Hann window needs n >= 2")
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / (n - 1))


def frame_signal(window: np.ndarray, frame_len: int = 256, hop: int = 128) -> np.ndarray:
    """Overlapping Hann-tapered frames, one per row."""
    window = np.asarray(window, dtype=np.float64)
    if hop < 1:
        raise ValueError("hop must be positive")
    if window.size < frame_len:
        raise ValueError(f"window of {window.size} samples is shorter than a frame ({frame_len})")
    count = 1 + (window.size - frame_len) // hop
    idx = np.arange(frame_len)[None, :] + hop * np.arange(count)[:, None]
    return window[idx] * hanning_window(frame_len)


def power_spectrum(frame: np.ndarray, n_fft: int = 256) -> np.ndarray:
    """``|DFT|^2`` of the zero-padded frame at bins 0..n_fft/2 (works row-wise)."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] > n_fft:
        raise ValueError(f"frame length {frame.shape[-1]} exceeds n_fft={n_fft}")
    spec = np.fft.rfft(frame, n=n_fft, axis=-1)
    return spec.real ** 2 + spec.imag ** 2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(n_filters: int, rate_hz: int) -> np.ndarray:
    """Filter centers in Hz, equally spaced in mel strictly inside (0, rate/2)."""
    mels = np.linspace(0.0, hz_to_mel(rate_hz / 2.0), n_filters + 2)
    return mel_to_hz(mels[1:-1])


def mel_filterbank(n_filters: int = 26, rate_hz: int = 8000, n_fft: int = 256) -> np.ndarray:
    """Triangular filters of shape (n_filters, n_fft // 2 + 1).

    Edge and center frequencies are snapped to the nearest FFT bin so every
    row reaches exactly 1 at its center bin.
    """
    if n_filters < 13:
        raise ValueError("need at least 13 mel filters for 12 cepstral coefficients")
    mels = np.linspace(0.0, hz_to_mel(rate_hz / 2.0), n_filters + 2)
    bins = np.round(mel_to_hz(mels) * n_fft / rate_hz).astype(int)
    if np.any(np.diff(bins) <= 0):
        raise ValueError(
            f"{n_filters} mel filters collide at n_fft={n_fft}; use fewer filters")
    fbank = np.zeros((n_filters, n_fft // 2 + 1))
    k = np.arange(n_fft // 2 + 1)
    for i in range(n_filters):
        lo, mid, hi = bins[i], bins[i + 1], bins[i + 2]
        rise = (k - lo) / (mid - lo)
        fall = (hi - k) / (hi - mid)
        fbank[i] = np.clip(np.minimum(rise, fall), 0.0, None)
    return fbank


def mfcc_frames(window: np.ndarray, config: MfccConfig = MfccConfig()) -> np.ndarray:
    """Cepstra 1..n_ceps for every frame, shape (n_frames, n_ceps)."""
    frames = frame_signal(window, config.frame_len, config.hop)
    power = power_spectrum(frames, config.n_fft)
    energies = power @ mel_filterbank(config.n_filters, config.rate_hz, config.n_fft).T
    cepstra = dct(np.log(energies + config.log_floor), type=2, norm="ortho", axis=-1)
    return cepstra[:, 1:config.n_ceps + 1]


def deltas(seq: np.ndarray) -> np.ndarray:
    """``d[t] = c[t+1] - c[t-1]`` along axis 0 with edge replication."""
    padded = np.concatenate([seq[:1], seq, seq[-1:]], axis=0)
    return padded[2:] - padded[:-2]


def mfcc_feature(window: np.ndarray, config: MfccConfig = MfccConfig()) -> np.ndarray:
    ceps = mfcc_frames(window, config)
    d1 = deltas(ceps)
    d2 = deltas(d1)
    return np.concatenate([ceps.mean(axis=0), d1.mean(axis=0), d2.mean(axis=0)])


def mfcc_features(windows: np.ndarray, config: MfccConfig = MfccConfig()) -> np.ndarray:
    return np.stack([mfcc_feature(w, config) for w in np.atleast_2d(windows)])


def write_feature_csv(path, features: np.ndarray, labels: np.ndarray) -> None:
    """Dump features as ``f0..f{d-1},label`` rows."""
    features = np.atleast_2d(features)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(features.shape[1])] + ["label"])
        for row, label in zip(features, labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
