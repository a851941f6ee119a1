"""Windowing, short-time Fourier analysis/synthesis and amplitude extraction.

Everything runs in float64/complex128. The STFT does no centre padding: frame
``t`` covers samples ``[t * hop, t * hop + win)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, NumericalError

WINDOW_KINDS = ("hann", "rect")


@dataclass(frozen=True)
class StftConfig:
    win_length: int = 800
    hop_length: int = 200
    fft_size: int = 1024
    window_kind: str = "hann"

    def __post_init__(self):
        if self.window_kind not in WINDOW_KINDS:
            raise InvalidConfigError(f"unknown window kind {self.window_kind!r}")
        if not 0 < self.hop_length <= self.win_length <= self.fft_size:
            raise InvalidConfigError(
                "need 0 < hop_length <= win_length <= fft_size, got "
                f"hop={self.hop_length} win={self.win_length} fft={self.fft_size}"
            )
        if self.fft_size & (self.fft_size - 1):
            raise InvalidConfigError(f"fft_size must be a power of two, got {self.fft_size}")
        if self.win_length < 2:
            raise InvalidConfigError("win_length must be >= 2")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @classmethod
    def from_ms(cls, sample_rate, win_ms=50.0, hop_ms=12.5, window_kind="hann"):
        """Build a config from frame length/shift in milliseconds.

        The FFT size is the next power of two at or above the window length.
        """
        win = int(round(sample_rate * win_ms / 1000.0))
        hop = int(round(sample_rate * hop_ms / 1000.0))
        fft = 1 << max(1, int(np.ceil(np.log2(max(win, 2)))))
        return cls(win_length=win, hop_length=hop, fft_size=fft, window_kind=window_kind)


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise InvalidInputError(f"waveform must be 1-D, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise InvalidInputError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True, eq=False)
class ComplexSpectrogram:
    values: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        X = np.asarray(self.values, dtype=np.complex128)
        _check_spec_shape(X, self.config)
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("spectrogram contains non-finite values")
        object.__setattr__(self, "values", X)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class AmplitudeSpectrogram:
    values: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        A = np.asarray(self.values, dtype=np.float64)
        _check_spec_shape(A, self.config)
        if not np.all(np.isfinite(A)) or np.any(A < 0):
            raise InvalidInputError("amplitudes must be finite and non-negative")
        object.__setattr__(self, "values", A)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


def _check_spec_shape(values, cfg):
    if values.ndim != 2 or values.shape[1] != cfg.n_bins:
        raise InvalidInputError(
            f"expected frames x {cfg.n_bins} matrix for fft_size={cfg.fft_size}, "
            f"got shape {values.shape}"
        )


def make_window(kind: str, win_length: int) -> np.ndarray:
    """Analysis/synthesis window. ``hann`` is the periodic (DFT-even) form."""
    if win_length < 2:
        raise InvalidConfigError(f"win_length must be >= 2, got {win_length}")
    if kind == "hann":
        n = np.arange(win_length)
        return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / win_length))
    if kind == "rect":
        return np.ones(win_length)
    raise InvalidConfigError(f"unknown window kind {kind!r}")


@lru_cache(maxsize=16)
def _cached_window(kind, win_length):
    w = make_window(kind, win_length)
    w.setflags(write=False)
    return w


def window_of(cfg: StftConfig) -> np.ndarray:
    return _cached_window(cfg.window_kind, cfg.win_length)


def n_frames_for(n_samples: int, cfg: StftConfig) -> int:
    if n_samples < cfg.win_length:
        raise InvalidInputError(
            f"signal of {n_samples} samples is shorter than one window ({cfg.win_length})"
        )
    return 1 + (n_samples - cfg.win_length) // cfg.hop_length


def n_samples_for(n_frames: int, cfg: StftConfig) -> int:
    return (n_frames - 1) * cfg.hop_length + cfg.win_length if n_frames > 0 else 0


def frame_signal(x: np.ndarray, win_length: int, hop_length: int) -> np.ndarray:
    """Copy of the ``(frames, win_length)`` matrix of hop-spaced segments."""
    n = 1 + (x.shape[-1] - win_length) // hop_length
    view = np.lib.stride_tricks.sliding_window_view(x, win_length, axis=-1)
    return view[..., : (n - 1) * hop_length + 1 : hop_length, :].copy()


def overlap_add(frames: np.ndarray, hop_length: int) -> np.ndarray:
    """Sum hop-spaced frames ``(..., frames, win)`` into signals; the adjoint of :func:`frame_signal`."""
    *lead, n_frames, win = frames.shape
    dtype = np.result_type(frames.dtype, np.float64)
    if n_frames == 0:
        return np.zeros((*lead, 0), dtype=dtype)
    out_len = (n_frames - 1) * hop_length + win
    if win % hop_length == 0:
        r = win // hop_length
        blocks = frames.reshape(*lead, n_frames, r, hop_length)
        out = np.zeros((*lead, n_frames + r - 1, hop_length), dtype=dtype)
        for j in range(r):
            out[..., j : j + n_frames, :] += blocks[..., j, :]
        return out.reshape(*lead, out_len)
    out = np.zeros((*lead, out_len), dtype=dtype)
    for t in range(n_frames):
        out[..., t * hop_length : t * hop_length + win] += frames[..., t, :]
    return out


@lru_cache(maxsize=64)
def _window_square_sum(kind, win_length, hop_length, n_frames):
    w = make_window(kind, win_length)
    norm = overlap_add(np.broadcast_to(w * w, (n_frames, win_length)).copy(), hop_length)
    zero = norm <= 0.0
    if np.any(zero):
        covered = np.flatnonzero(~zero)
        if covered.size == 0:
            raise NumericalError("window-square sum is zero everywhere")
        inner = zero[covered[0] : covered[-1] + 1]
        if np.any(inner):
            raise NumericalError(
                "window-square sum vanishes inside the signal; window/hop do not overlap-cover"
            )
    inv = np.zeros_like(norm)
    inv[~zero] = 1.0 / norm[~zero]
    inv.setflags(write=False)
    return inv


def inverse_window_norm(cfg: StftConfig, n_frames: int) -> np.ndarray:
    """Reciprocal of the overlapped squared-window sum (0 where the sum is 0).

    Zero sums are only tolerated on the leading/trailing edges, where every
    contributing window sample is itself zero.
    """
    return _window_square_sum(cfg.window_kind, cfg.win_length, cfg.hop_length, n_frames)


def stft_array(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    n_frames_for(x.shape[-1], cfg)
    frames = frame_signal(np.asarray(x, dtype=np.float64), cfg.win_length, cfg.hop_length)
    return np.fft.rfft(frames * window_of(cfg), n=cfg.fft_size, axis=-1)


def istft_array(X: np.ndarray, cfg: StftConfig) -> np.ndarray:
    n_frames = X.shape[0]
    if n_frames == 0:
        return np.zeros(0)
    frames = np.fft.irfft(X, n=cfg.fft_size, axis=-1)[:, : cfg.win_length]
    y = overlap_add(frames * window_of(cfg), cfg.hop_length)
    return y * inverse_window_norm(cfg, n_frames)


def stft(w: Waveform, cfg: StftConfig | None = None) -> ComplexSpectrogram:
    """Short-time Fourier transform of ``w``.

    Frame ``t`` is the windowed segment starting at ``t * hop_length``,
    zero-padded to ``fft_size``; only the non-negative frequency bins are kept.
    """
    cfg = cfg or StftConfig()
    samples = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    return ComplexSpectrogram(stft_array(samples, cfg), cfg)


def istft(X: ComplexSpectrogram, sample_rate: int = 16000) -> Waveform:
    """Windowed overlap-add inverse with squared-window normalisation.

    Output length is ``(frames - 1) * hop + win``. For a spectrogram produced
    by :func:`stft` the input signal is recovered wherever the window sum is
    non-zero.
    """
    return Waveform(istft_array(X.values, X.config), sample_rate)


def amplitude(X: ComplexSpectrogram) -> AmplitudeSpectrogram:
    return AmplitudeSpectrogram(np.abs(X.values), X.config)


def interior_slice(n_samples: int, cfg: StftConfig) -> slice:
    """Samples covered by the full ``win/hop`` overlap, away from both edges."""
    edge = cfg.win_length - cfg.hop_length
    return slice(edge, max(edge, n_samples - edge))
