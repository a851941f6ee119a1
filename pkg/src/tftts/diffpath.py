"""Differentiable mel -> amplitude -> Griffin-Lim -> waveform path.

Same maths as :mod:`tftts.phase`, written with tape primitives so the
time-domain loss can be back-propagated to the predicted mel features through
an unrolled, fixed number of Griffin-Lim iterations.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .mel import MelFilterbank, NormStats
from .phase import GriffinLimConfig
from .signal import StftConfig, inverse_window_norm, n_samples_for


def stft(x, cfg: StftConfig, frame_mask=None):
    return ad.stft(x, cfg, frame_mask)


def istft(X, cfg: StftConfig, inv_norm=None):
    return ad.istft(X, cfg, inv_norm)


def project_amplitude(X, A):
    return ad.project_amplitude(X, A)


def project_consistency(X, cfg: StftConfig, frame_mask=None, inv_norm=None):
    return stft(istft(X, cfg, inv_norm), cfg, frame_mask)


def griffin_lim(A, cfg: StftConfig, glcfg: GriffinLimConfig, frame_mask=None, inv_norm=None):
    shape = ad.value_of(A).shape
    zero = glcfg.init_phase == "zero"
    if zero:
        X = ad.mul(A, np.ones(shape, dtype=np.complex128))
    else:
        X = ad.polar(A, glcfg.initial_phase(shape))
    for n in range(glcfg.iterations):
        # A + 0j already has amplitude A: the first P_A is then an exact
        # identity in value and vector-Jacobian product, so skip it
        if n or not zero:
            X = project_amplitude(X, A)
        X = project_consistency(X, cfg, frame_mask, inv_norm)
    return X


def epsilon_amplitude(mel_raw, fb: MelFilterbank):
    return ad.clamp(ad.matmul(mel_raw, fb.pinv.T), lo=0.0)


def denormalize(mel, stats: NormStats):
    return ad.add(ad.mul(mel, stats.std), stats.mean)


def mel_to_waveform(mel, fb: MelFilterbank, cfg: StftConfig, glcfg: GriffinLimConfig, stats=None):
    """``istft(griffin_lim(eps(mel)))``; ``mel`` is denormalised first when ``stats`` is given."""
    raw = denormalize(mel, stats) if stats is not None else mel
    A = epsilon_amplitude(raw, fb)
    return istft(griffin_lim(A, cfg, glcfg), cfg)


def batch_masks(lengths, cfg: StftConfig):
    """Frame mask ``(B, T, 1)`` and per-row inverse window norm ``(B, L)`` for padded batches."""
    lengths = np.asarray(lengths)
    T = int(lengths.max())
    mask = (np.arange(T)[None, :] < lengths[:, None]).astype(np.float64)[..., None]
    inv = np.zeros((len(lengths), n_samples_for(T, cfg)))
    for b, t in enumerate(lengths):
        inv[b, : n_samples_for(int(t), cfg)] = inverse_window_norm(cfg, int(t))
    return mask, inv


def mel_to_waveform_batch(mel, lengths, fb: MelFilterbank, cfg: StftConfig,
                          glcfg: GriffinLimConfig, stats=None):
    """Row-wise :func:`mel_to_waveform` for a zero-padded ``(B, T, n_mels)`` batch.

    Row ``b`` only uses its first ``lengths[b]`` frames; the returned
    ``(B, L)`` signals are exactly zero past each row's own length.
    """
    mask, inv = batch_masks(lengths, cfg)
    raw = denormalize(mel, stats) if stats is not None else mel
    A = ad.mul(epsilon_amplitude(raw, fb), mask)
    return istft(griffin_lim(A, cfg, glcfg, mask, inv), cfg, inv)


def clamp_kinks(mel_raw, fb: MelFilterbank, step: float) -> np.ndarray:
    """Mel elements whose ``+/- step`` perturbation can flip a clamped amplitude bin.

    Returns a boolean mask shaped like ``mel_raw``.
    """
    mel_raw = np.asarray(mel_raw, dtype=np.float64)
    pre = mel_raw @ fb.pinv.T
    reach = np.abs(fb.pinv) * step * 1.000001
    # (frames, bins, 1) vs (bins, mels): bin b of frame t is within reach of mel m
    near = np.abs(pre)[:, :, None] <= reach[None, :, :]
    return near.any(axis=1)
