"""Griffin-Lim phase reconstruction by alternating metric projections."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, InvalidStatsError
from .mel import MelFilterbank, MelSpectrogram, NormStats, epsilon_array
from .signal import (
    AmplitudeSpectrogram,
    ComplexSpectrogram,
    StftConfig,
    Waveform,
    istft_array,
    stft_array,
)

INIT_PHASES = ("zero", "random")


@dataclass(frozen=True)
class GriffinLimConfig:
    iterations: int = 64
    init_phase: str = "zero"
    seed: Optional[int] = None

    def __post_init__(self):
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise InvalidConfigError(f"iterations must be a non-negative int, got {self.iterations}")
        if self.init_phase not in INIT_PHASES:
            raise InvalidConfigError(f"init_phase must be one of {INIT_PHASES}")
        if self.init_phase == "random" and self.seed is None:
            raise InvalidConfigError("random initial phase needs a seed")

    def initial_phase(self, shape) -> np.ndarray:
        if self.init_phase == "zero":
            return np.zeros(shape)
        rng = np.random.default_rng(self.seed)
        return rng.uniform(0.0, 2.0 * np.pi, size=shape)


TRAIN_GL = GriffinLimConfig(iterations=1)
RUNTIME_GL = GriffinLimConfig(iterations=64)


def _values(x):
    return x.values if hasattr(x, "values") else np.asarray(x)


def project_amplitude_array(X, A):
    mag = np.abs(X)
    nz = mag > 0
    unit = np.ones(X.shape, dtype=np.complex128)
    unit[nz] = X[nz] / mag[nz]
    return A * unit


def project_amplitude(X, A):
    """Replace the modulus of ``X`` by ``A``, keeping its phase (zero phase where ``X == 0``)."""
    Xv, Av = _values(X), _values(A)
    if Xv.shape != Av.shape:
        raise InvalidInputError(f"shape mismatch {Xv.shape} vs {Av.shape}")
    out = project_amplitude_array(Xv, Av)
    if isinstance(X, ComplexSpectrogram):
        return ComplexSpectrogram(out, X.config)
    return out


def project_consistency_array(X, cfg: StftConfig):
    return stft_array(istft_array(X, cfg), cfg)


def project_consistency(X: ComplexSpectrogram) -> ComplexSpectrogram:
    """Nearest STFT-consistent spectrogram: ``stft(istft(X))``."""
    return ComplexSpectrogram(project_consistency_array(X.values, X.config), X.config)


def spectral_norm(X, cfg: StftConfig) -> float:
    """Frobenius norm of the equivalent two-sided spectrogram.

    Interior bins stand for a conjugate pair and count twice. This is the norm
    in which the consistency projection is orthogonal.
    """
    weights = np.full(cfg.n_bins, 2.0)
    weights[0] = 1.0
    if cfg.fft_size % 2 == 0:
        weights[-1] = 1.0
    return float(np.sqrt(np.sum(weights * np.abs(X) ** 2)))


def inconsistency(X, A, cfg: StftConfig) -> float:
    """Distance between ``P_A(X)`` and its consistent projection."""
    Y = project_amplitude_array(X, A)
    return spectral_norm(Y - project_consistency_array(Y, cfg), cfg)


def griffin_lim(
    A: AmplitudeSpectrogram,
    cfg: GriffinLimConfig = RUNTIME_GL,
    init: Optional[np.ndarray] = None,
    callback: Optional[Callable[[int, np.ndarray, np.ndarray], None]] = None,
) -> ComplexSpectrogram:
    """Run ``cfg.iterations`` rounds of ``X <- P_C(P_A(X))`` from ``X0 = A e^{i phase0}``.

    Parameters
    ----------
    A : AmplitudeSpectrogram
        Target amplitudes.
    cfg : GriffinLimConfig
        Iteration count and initial-phase rule.
    init : ndarray, optional
        Explicit initial phase (radians); overrides ``cfg.init_phase``.
    callback : callable, optional
        Called as ``callback(n, P_A(X_{n-1}), X_n)`` after each iteration.

    Returns
    -------
    ComplexSpectrogram
        ``X_n`` after the last consistency projection (or ``X0`` if zero iterations).
    """
    stft_cfg = A.config
    Av = A.values
    phase0 = cfg.initial_phase(Av.shape) if init is None else np.asarray(init, dtype=np.float64)
    X = Av * np.exp(1j * phase0)
    if Av.shape[0] == 0:
        return ComplexSpectrogram(X, stft_cfg)
    for n in range(1, cfg.iterations + 1):
        Y = project_amplitude_array(X, Av)
        X = project_consistency_array(Y, stft_cfg)
        if callback is not None:
            callback(n, Y, X)
    return ComplexSpectrogram(X, stft_cfg)


def reconstruct(
    M: MelSpectrogram,
    fb: MelFilterbank,
    stats: Optional[NormStats] = None,
    glcfg: GriffinLimConfig = RUNTIME_GL,
    stft_cfg: Optional[StftConfig] = None,
) -> Waveform:
    """Mel features to waveform: denormalise, estimate amplitude, Griffin-Lim, inverse STFT.

    Works on the raw values directly, so denormalised predictions that dip
    below zero are accepted (the amplitude clamp absorbs them).
    """
    if M.n_mels != fb.n_mels:
        raise InvalidInputError(f"features have {M.n_mels} channels, filterbank {fb.n_mels}")
    raw = M.values
    if M.normalized:
        stats = stats or M.stats
        if not isinstance(stats, NormStats):
            raise InvalidStatsError("normalised features need NormStats to denormalise")
        if stats.mean.shape[0] != M.n_mels:
            raise InvalidInputError(f"stats have {stats.mean.shape[0]} channels, features {M.n_mels}")
        raw = raw * stats.std + stats.mean
    cfg = stft_cfg or StftConfig(M.win_length, M.hop_length, fb.fft_size)
    X = griffin_lim(AmplitudeSpectrogram(epsilon_array(raw, fb), cfg), glcfg)
    if X.n_frames == 0:
        return Waveform(np.zeros(0), M.sample_rate)
    return Waveform(istft_array(X.values, X.config), M.sample_rate)
