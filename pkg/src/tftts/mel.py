"""Mel filterbank, mel analysis, feature normalisation and mel-to-amplitude inversion."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Optional

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, InvalidStatsError
from .signal import AmplitudeSpectrogram, StftConfig


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True, eq=False)
class MelFilterbank:
    weights: np.ndarray
    sample_rate: int
    fft_size: int
    fmin: float
    fmax: float
    center_freqs: np.ndarray = field(repr=False)

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]

    @property
    def n_bins(self) -> int:
        return self.weights.shape[1]

    @property
    def peak_bins(self) -> np.ndarray:
        return np.argmax(self.weights, axis=1)

    @cached_property
    def pinv(self) -> np.ndarray:
        """Moore-Penrose pseudo-inverse, ``(n_bins, n_mels)``; computed once."""
        p = np.linalg.pinv(self.weights)
        p.setflags(write=False)
        return p


def build_filterbank(n_mels=80, sample_rate=16000, fft_size=1024, fmin=0.0, fmax=None) -> MelFilterbank:
    """Triangular filters with centres equally spaced on the HTK mel scale.

    Filter ``i`` rises linearly from centre ``i - 1`` to centre ``i`` and falls
    to centre ``i + 1`` (edges included as centres ``-1`` and ``n_mels``),
    sampled at the FFT bin frequencies. Weights are unit-peak, not area
    normalised.
    """
    fmax = sample_rate / 2.0 if fmax is None else float(fmax)
    if n_mels < 1:
        raise InvalidConfigError(f"n_mels must be >= 1, got {n_mels}")
    if not 0.0 <= fmin < fmax <= sample_rate / 2.0:
        raise InvalidConfigError(f"need 0 <= fmin < fmax <= sr/2, got fmin={fmin} fmax={fmax}")
    n_bins = fft_size // 2 + 1
    if n_mels > n_bins:
        raise InvalidConfigError(f"{n_mels} filters cannot fit in {n_bins} bins")

    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bin_freqs = np.arange(n_bins) * sample_rate / fft_size
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_freqs - lower) / (center - lower)
    falling = (upper - bin_freqs) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))

    if np.any(weights.max(axis=1) <= 0.0):
        empty = int(np.flatnonzero(weights.max(axis=1) <= 0.0)[0])
        raise InvalidConfigError(
            f"mel filter {empty} covers no FFT bin; too many filters for fft_size={fft_size}"
        )
    peaks = np.argmax(weights, axis=1)
    if np.any(np.diff(peaks) <= 0):
        raise InvalidConfigError("mel filter peaks collide; lower n_mels or raise fft_size")
    weights.setflags(write=False)
    return MelFilterbank(weights, int(sample_rate), int(fft_size), float(fmin), fmax, edges[1:-1])


@dataclass(frozen=True, eq=False)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.ndim != 1 or mean.shape != std.shape:
            raise InvalidStatsError(f"mean/std shapes differ: {mean.shape} vs {std.shape}")
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(std)):
            raise InvalidStatsError("non-finite normalisation stats")
        if np.any(std <= 0):
            raise InvalidStatsError("per-channel std must be > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def identity(cls, n_mels):
        return cls(np.zeros(n_mels), np.ones(n_mels))

    @classmethod
    def fit(cls, mels: Iterable["MelSpectrogram"]) -> "NormStats":
        """Per-channel mean and population std pooled over every frame."""
        mels = list(mels)
        frames = [m.values for m in mels]
        if not frames:
            raise InvalidInputError("cannot fit stats on an empty corpus")
        if any(m.normalized for m in mels):
            raise InvalidInputError("fit stats on raw (unnormalised) mel features")
        stacked = np.concatenate(frames, axis=0)
        return cls(stacked.mean(axis=0), stacked.std(axis=0))


@dataclass(frozen=True, eq=False)
class MelSpectrogram:
    values: np.ndarray
    normalized: bool = False
    stats: Optional[NormStats] = None
    sample_rate: int = 16000
    hop_length: int = 200
    win_length: int = 800

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise InvalidInputError(f"mel features must be frames x n_mels, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("mel features contain non-finite values")
        if not self.normalized and np.any(v < 0):
            raise InvalidInputError("raw mel features must be non-negative")
        if self.normalized and self.stats is None:
            raise InvalidInputError("normalised mel features must carry their stats")
        if self.stats is not None and self.stats.mean.shape[0] != v.shape[1]:
            raise InvalidInputError("stats channel count does not match features")
        object.__setattr__(self, "values", v)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]


def mel_spectrum(A: AmplitudeSpectrogram, fb: MelFilterbank, sample_rate=None) -> MelSpectrogram:
    """Project each amplitude frame onto the filterbank (linear amplitude, no log)."""
    values = A.values if isinstance(A, AmplitudeSpectrogram) else np.asarray(A, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != fb.n_bins:
        raise InvalidInputError(
            f"amplitude has {values.shape[-1]} bins, filterbank expects {fb.n_bins}"
        )
    cfg = A.config if isinstance(A, AmplitudeSpectrogram) else StftConfig()
    return MelSpectrogram(
        values @ fb.weights.T,
        sample_rate=sample_rate or fb.sample_rate,
        hop_length=cfg.hop_length,
        win_length=cfg.win_length,
    )


def normalize(M: MelSpectrogram, stats: NormStats) -> MelSpectrogram:
    if M.normalized:
        raise InvalidInputError("features are already normalised")
    _check_stats(M, stats)
    return replace(M, values=(M.values - stats.mean) / stats.std, normalized=True, stats=stats)


def denormalize(M: MelSpectrogram, stats: Optional[NormStats] = None) -> MelSpectrogram:
    if not M.normalized:
        raise InvalidInputError("features are not normalised")
    stats = stats or M.stats
    _check_stats(M, stats)
    return replace(M, values=M.values * stats.std + stats.mean, normalized=False, stats=None)


def _check_stats(M, stats):
    if not isinstance(stats, NormStats):
        raise InvalidStatsError("expected NormStats")
    if stats.mean.shape[0] != M.n_mels:
        raise InvalidInputError(f"stats have {stats.mean.shape[0]} channels, features {M.n_mels}")


def epsilon_amplitude(M: MelSpectrogram, fb: MelFilterbank, config: StftConfig | None = None) -> AmplitudeSpectrogram:
    """Linear amplitude estimate from raw mel features: ``max(0, pinv(W) @ mel)``."""
    if M.normalized:
        raise InvalidInputError("denormalise mel features before amplitude estimation")
    if M.n_mels != fb.n_mels:
        raise InvalidInputError(f"features have {M.n_mels} channels, filterbank {fb.n_mels}")
    cfg = config or StftConfig(M.win_length, M.hop_length, fb.fft_size)
    return AmplitudeSpectrogram(epsilon_array(M.values, fb), cfg)


def epsilon_array(mel_raw: np.ndarray, fb: MelFilterbank) -> np.ndarray:
    """``max(0, pinv(W) @ mel)`` on a bare ``(frames, n_mels)`` array."""
    return np.maximum(np.asarray(mel_raw, dtype=np.float64) @ fb.pinv.T, 0.0)


def extract_mel(w, cfg: StftConfig, fb: MelFilterbank) -> MelSpectrogram:
    """Raw (unnormalised) mel features of a waveform."""
    from .signal import Waveform, amplitude, stft

    if not isinstance(w, Waveform):
        w = Waveform(w, fb.sample_rate)
    return mel_spectrum(amplitude(stft(w, cfg)), fb, sample_rate=w.sample_rate)
