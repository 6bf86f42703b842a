"""Knock recordings: WAV ingestion, peak-aligned windows and a synthetic corpus.

A recording is reduced to the ``n`` samples that start at its largest
absolute amplitude; those windows are the classifier input. The synthetic
generator models a struck object as a sum of exponentially damped modes.
"""

from __future__ import annotations

import csv
import hashlib
import os
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_RATE_HZ = 8000
DEFAULT_WINDOW = 500
DEFAULT_DURATION_S = 2.0


class WavError(ValueError):
    """Base class for WAV ingestion failures."""


class MalformedWavError(WavError):
    pass


class MultiChannelWavError(WavError):
    pass


class UnsupportedBitDepthError(WavError):
    pass


@dataclass(frozen=True)
class RawSignal:
    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_RATE_HZ

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("a raw signal needs a non-empty 1-D sample vector")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size


@dataclass
class LabeledDataset:
    """Windows stacked row-wise with one integer label per row."""

    windows: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.windows.ndim != 2 or self.windows.shape[0] != self.labels.shape[0]:
            raise ValueError("windows must be 2-D with one label per row")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError("labels must lie in [0, n_classes)")

    def __len__(self):
        return self.labels.size

    def content_hash(self) -> str:
        """SHA-256 over the window bytes and labels; identifies the pipeline output."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.windows).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        return h.hexdigest()


def load_wav(path) -> RawSignal:
    """Read a mono 8- or 16-bit PCM WAV file into amplitudes in [-1, 1]."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such WAV file: {path}")
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            frames = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise MalformedWavError(f"{path}: {exc}") from exc
    if channels != 1:
        raise MultiChannelWavError(f"{path}: expected mono, found {channels} channels")
    if width == 1:
        # 8-bit PCM is unsigned with a 128 offset
        samples = (np.frombuffer(frames, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif width == 2:
        samples = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
    else:
        raise UnsupportedBitDepthError(f"{path}: {8 * width}-bit PCM is not supported")
    if samples.size == 0:
        raise MalformedWavError(f"{path}: file contains no samples")
    return RawSignal(samples, rate)


def write_wav(path, signal: RawSignal) -> None:
    """Write a signal as mono 16-bit PCM, clipping to the representable range."""
    ints = np.clip(np.round(signal.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(signal.sample_rate_hz)
        wf.writeframes(ints.tobytes())


def extract_window(raw: RawSignal, n: int = DEFAULT_WINDOW) -> np.ndarray:
    """Return ``n`` samples starting at the peak of ``|samples|``.

    The earliest index wins ties. When the recording ends before ``k + n`` the
    window is zero-padded on the right.
    """
    if n < 1:
        raise ValueError("window length must be at least 1")
    samples = raw.samples if isinstance(raw, RawSignal) else np.asarray(raw, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("cannot window an empty signal")
    k = int(np.argmax(np.abs(samples)))
    out = np.zeros(n)
    chunk = samples[k:k + n]
    out[:chunk.size] = chunk
    return out


def normalize(window: np.ndarray) -> np.ndarray:
    """Scale by the max magnitude only when it exceeds 1."""
    window = np.asarray(window, dtype=np.float64)
    peak = np.max(np.abs(window)) if window.size else 0.0
    if peak > 1.0:
        return window / peak
    return window.copy()


@dataclass(frozen=True)
class KnockClassParams:
    """Resonant modes of one object as (frequency_hz, decay_per_s, amplitude)."""

    modes: tuple[tuple[float, float, float], ...]
    noise_std: float = 0.0

    def __post_init__(self):
        modes = tuple(tuple(float(v) for v in m) for m in self.modes)
        for f, d, a in modes:
            if f <= 0 or d <= 0 or a < 0:
                raise ValueError(f"invalid mode (f={f}, decay={d}, amp={a})")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        object.__setattr__(self, "modes", modes)


@dataclass(frozen=True)
class CorpusConfig:
    """Knobs of the synthetic knock generator."""

    rate_hz: int = DEFAULT_RATE_HZ
    duration_s: float = DEFAULT_DURATION_S
    window_length: int = DEFAULT_WINDOW
    min_modes: int = 3
    max_modes: int = 5
    freq_range_hz: tuple[float, float] = (150.0, 3500.0)
    decay_range: tuple[float, float] = (4.0, 40.0)
    peak_amplitude: float = 0.9
    noise_std: float = 0.005
    freq_jitter: float = 0.02
    amp_jitter: float = 0.10
    random_phase: bool = True


def synth_knock(params: KnockClassParams, duration_s: float = DEFAULT_DURATION_S,
                rate_hz: int = DEFAULT_RATE_HZ, rng: np.random.Generator | None = None,
                freq_jitter: float = 0.02, amp_jitter: float = 0.10,
                random_phase: bool = True) -> RawSignal:
    """Synthesize one strike as a sum of damped sinusoids plus Gaussian noise.

    Each mode's frequency is perturbed by a uniform factor in
    ``1 +- freq_jitter``, its amplitude by ``1 +- amp_jitter`` and its phase is
    uniform in [0, 2*pi) when ``random_phase`` is set. The result is clipped to
    [-1, 1].
    """
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    nyquist = rate_hz / 2.0
    for f, _, _ in params.modes:
        if f >= nyquist:
            raise ValueError(f"mode frequency {f} Hz is at or above Nyquist ({nyquist} Hz)")
    if rng is None:
        rng = np.random.default_rng()
    n = max(1, int(round(duration_s * rate_hz)))
    t = np.arange(n) / rate_hz
    x = np.zeros(n)
    if params.modes:
        freq, decay, amp = (np.array(col) for col in zip(*params.modes))
        k = freq.size
        freq = freq * (1.0 + rng.uniform(-freq_jitter, freq_jitter, k)) if freq_jitter else freq
        amp = amp * (1.0 + rng.uniform(-amp_jitter, amp_jitter, k)) if amp_jitter else amp
        phase = rng.uniform(0.0, 2.0 * np.pi, k) if random_phase else np.zeros(k)
        # jitter may not push a mode past Nyquist
        freq = np.minimum(freq, nyquist * (1.0 - 1e-9))
        x = np.sum(amp[:, None] * np.exp(-decay[:, None] * t)
                   * np.sin(2.0 * np.pi * freq[:, None] * t + phase[:, None]), axis=0)
    if params.noise_std > 0:
        x = x + rng.normal(0.0, params.noise_std, n)
    return RawSignal(np.clip(x, -1.0, 1.0), rate_hz)


def random_class_params(rng: np.random.Generator, config: CorpusConfig = CorpusConfig()) -> KnockClassParams:
    k = int(rng.integers(config.min_modes, config.max_modes + 1))
    freqs = rng.uniform(*config.freq_range_hz, size=k)
    decays = rng.uniform(*config.decay_range, size=k)
    amps = rng.uniform(0.2, 1.0, size=k)
    amps = amps / amps.sum() * config.peak_amplitude
    return KnockClassParams(tuple(zip(freqs, decays, amps)), config.noise_std)


def synth_recordings(n_classes: int, trials_per_class: int, seed: int,
                     config: CorpusConfig = CorpusConfig()):
    """Generate ``(RawSignal, label)`` pairs, class by class in trial order."""
    if n_classes < 2 or trials_per_class < 2:
        raise ValueError("need at least 2 classes and 2 trials per class")
    root = np.random.SeedSequence(seed)
    class_seq, *trial_seqs = root.spawn(n_classes + 1)
    class_rng = np.random.default_rng(class_seq)
    classes = [random_class_params(class_rng, config) for _ in range(n_classes)]
    out = []
    for label, (params, seq) in enumerate(zip(classes, trial_seqs)):
        rng = np.random.default_rng(seq)
        for _ in range(trials_per_class):
            raw = synth_knock(params, config.duration_s, config.rate_hz, rng,
                              config.freq_jitter, config.amp_jitter, config.random_phase)
            out.append((raw, label))
    return out


def synth_corpus(n_classes: int, trials_per_class: int, seed: int,
                 config: CorpusConfig = CorpusConfig()) -> LabeledDataset:
    """Synthesize, window and normalize a labeled knock corpus."""
    recordings = synth_recordings(n_classes, trials_per_class, seed, config)
    windows = np.stack([normalize(extract_window(raw, config.window_length))
                        for raw, _ in recordings])
    labels = np.array([label for _, label in recordings])
    return LabeledDataset(windows, labels, n_classes)


def write_manifest(path, rows) -> None:
    """Write ``path,label`` rows; paths are stored relative to the manifest."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label"])
        for wav_path, label in rows:
            rel = os.path.relpath(Path(wav_path), path.parent)
            writer.writerow([Path(rel).as_posix(), int(label)])


def read_manifest(path) -> list[tuple[Path, int]]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames[:2]) != ["path", "label"]:
            raise ValueError(f"{path}: manifest header must be 'path,label'")
        return [((path.parent / row["path"]), int(row["label"])) for row in reader]


def write_corpus(directory, n_classes: int, trials_per_class: int, seed: int,
                 config: CorpusConfig = CorpusConfig()) -> Path:
    """Write a synthetic corpus as WAV files plus ``manifest.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    counts: dict[int, int] = {}
    for raw, label in synth_recordings(n_classes, trials_per_class, seed, config):
        trial = counts.get(label, 0)
        counts[label] = trial + 1
        wav_path = directory / f"class{label:02d}_trial{trial:03d}.wav"
        write_wav(wav_path, raw)
        rows.append((wav_path, label))
    manifest = directory / "manifest.csv"
    write_manifest(manifest, rows)
    return manifest


def load_dataset(manifest, window_length: int = DEFAULT_WINDOW,
                 n_classes: int | None = None) -> LabeledDataset:
    """Load every WAV in a manifest and turn it into a normalized window."""
    rows = read_manifest(manifest)
    if not rows:
        raise ValueError(f"{manifest}: manifest lists no files")
    windows = np.stack([normalize(extract_window(load_wav(p), window_length)) for p, _ in rows])
    labels = np.array([label for _, label in rows])
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    return LabeledDataset(windows, labels, n_classes)
