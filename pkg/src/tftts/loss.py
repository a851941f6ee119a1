"""Frequency-domain feature loss, SI-SDR time-domain loss and their weighted sum.

The array-level helpers (``mse``, ``si_sdr_db``) are written with the
:mod:`tftts.autodiff` primitives, so they accept plain arrays as well as
tracked values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import InvalidInputError
from .mel import MelSpectrogram
from .signal import Waveform

SI_SDR_LIMIT_DB = 80.0
SI_SDR_EPS = 1e-12
_RATIO_LO = 10.0 ** (-SI_SDR_LIMIT_DB / 10.0)
_RATIO_HI = 10.0 ** (SI_SDR_LIMIT_DB / 10.0)


@dataclass(frozen=True)
class LossReport:
    loss_f: float
    loss_t: float
    lam: float
    total: float

    @classmethod
    def combine(cls, loss_f, loss_t, lam):
        return cls(float(loss_f), float(loss_t), float(lam), float(loss_f) + float(lam) * float(loss_t))

    def as_dict(self):
        return {"loss_f": self.loss_f, "loss_t": self.loss_t, "lambda": self.lam, "total": self.total}


def mse(pred, target):
    """Mean squared difference over every element."""
    diff = ad.sub(pred, target)
    return ad.mul(ad.norm_sq(diff), 1.0 / ad.value_of(diff).size)


def si_sdr_db(est, ref):
    """Scale-invariant SDR in dB, clamped to +/-80 dB.

    ``alpha = <est, ref> / |ref|^2`` rescales the reference; the ratio of
    projected energy to residual energy (plus ``1e-12``) is clipped before the
    log so an orthogonal estimate lands on -80 dB instead of -inf.
    """
    ref_energy = ad.norm_sq(ref)
    alpha = ad.div(ad.dot(est, ref), ref_energy)
    target = ad.mul(alpha, ref)
    residual = ad.sub(target, est)
    ratio = ad.div(ad.norm_sq(target), ad.add(ad.norm_sq(residual), SI_SDR_EPS))
    return ad.mul(ad.log10(ad.clamp(ratio, _RATIO_LO, _RATIO_HI)), 10.0)


def si_sdr_db_rows(est, ref):
    """Row-wise :func:`si_sdr_db` over the last axis; returns one value per row.

    Trailing zeros shared by both rows change nothing, so zero-padded batches
    of unequal lengths are scored exactly.
    """
    ref_energy = ad.sum(ad.mul(ref, ref), axis=-1)
    alpha = ad.div(ad.sum(ad.mul(est, ref), axis=-1), ref_energy)
    target = ad.mul(ad.reshape(alpha, ad.value_of(alpha).shape + (1,)), ref)
    residual = ad.sub(target, est)
    ratio = ad.div(
        ad.sum(ad.mul(target, target), axis=-1),
        ad.add(ad.sum(ad.mul(residual, residual), axis=-1), SI_SDR_EPS),
    )
    return ad.mul(ad.log10(ad.clamp(ratio, _RATIO_LO, _RATIO_HI)), 10.0)


def _samples(w):
    if isinstance(w, Waveform):
        return w.samples
    return np.asarray(w, dtype=np.float64)


def _check_pair(est, ref):
    if est.ndim != 1 or est.shape != ref.shape:
        raise InvalidInputError(f"waveform lengths differ: {est.shape} vs {ref.shape}")
    if est.shape[0] < 1:
        raise InvalidInputError("waveforms must hold at least one sample")
    if not np.any(ref):
        raise InvalidInputError("reference waveform is all zeros")


def si_sdr(est, ref) -> float:
    est, ref = _samples(est), _samples(ref)
    _check_pair(est, ref)
    return float(si_sdr_db(est, ref))


def loss_t(est, ref) -> float:
    """Negated SI-SDR."""
    return -si_sdr(est, ref)


def loss_f(pred: MelSpectrogram, target: MelSpectrogram) -> float:
    """Mean over frames and channels of the squared feature difference."""
    if pred.values.shape != target.values.shape:
        raise InvalidInputError(f"shape mismatch {pred.values.shape} vs {target.values.shape}")
    if pred.normalized != target.normalized:
        raise InvalidInputError("normalisation state differs between prediction and target")
    if pred.values.size == 0:
        raise InvalidInputError("empty mel features")
    return float(mse(pred.values, target.values))


def joint_loss(pred_mel, target_mel, est_wave, ref_wave, lam) -> LossReport:
    if lam < 0:
        raise InvalidInputError(f"lambda must be >= 0, got {lam}")
    return LossReport.combine(loss_f(pred_mel, target_mel), loss_t(est_wave, ref_wave), lam)
