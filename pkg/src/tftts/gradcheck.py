"""Reverse-mode vs central-difference gradient comparison."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    tol: float
    fd_step: float
    n_checked: int
    excluded: list = field(default_factory=list)
    negligible: int = 0
    failures: list = field(default_factory=list)
    worst_index: Optional[tuple] = None

    def as_dict(self):
        return {
            "passed": self.passed,
            "max_rel_error": self.max_rel_error,
            "tol": self.tol,
            "fd_step": self.fd_step,
            "n_checked": self.n_checked,
            "n_excluded": len(self.excluded),
            "n_negligible": self.negligible,
            "n_failures": len(self.failures),
        }


def reverse_gradient(fn, x):
    tape = ad.Tape()
    var = tape.variable(np.array(x, dtype=np.float64))
    out = fn(var)
    if not isinstance(out, ad.DiffValue) or out.node_id is None:
        return float(ad.value_of(out)), np.zeros_like(var.value)
    return float(out.value), ad.backward(tape, out)[var]


def grad_check(
    fn: Callable,
    x,
    fd_step: float = 1e-5,
    tol: float = 1e-5,
    indices=None,
    exclude=None,
    kink_tol: float = 1e-2,
    min_grad: float = 0.0,
) -> GradCheckReport:
    """Compare ``fn``'s tape gradient with central differences element by element.

    ``fn`` maps an array (or tracked value) to a scalar. Elements where the
    one-sided difference quotients disagree by more than ``kink_tol``
    (relative) sit on a non-smooth point and are excluded, as are any flagged
    by the boolean ``exclude`` mask. Elements where both estimates are below
    ``min_grad`` in magnitude are counted as negligible and skipped, since
    their central difference is dominated by round-off. The relative error of
    a checked element is ``|g - fd| / max(|g|, |fd|)``.
    """
    x = np.array(x, dtype=np.float64)
    f0, grad = reverse_gradient(fn, x)
    if indices is None:
        indices = list(np.ndindex(x.shape))
    excluded, failures = [], []
    worst, worst_idx, checked, negligible = 0.0, None, 0, 0
    tiny = np.finfo(np.float64).tiny
    for idx in indices:
        idx = tuple(np.atleast_1d(idx)) if x.ndim else ()
        if exclude is not None and exclude[idx]:
            excluded.append(idx)
            continue
        xp = x.copy()
        xp[idx] += fd_step
        fp = float(ad.value_of(fn(xp)))
        xp[idx] = x[idx] - fd_step
        fm = float(ad.value_of(fn(xp)))
        d_plus = (fp - f0) / fd_step
        d_minus = (f0 - fm) / fd_step
        fd = (fp - fm) / (2.0 * fd_step)
        g = grad[idx]
        if max(abs(g), abs(fd)) < min_grad:
            negligible += 1
            continue
        scale = max(abs(d_plus), abs(d_minus), min_grad, tiny)
        if abs(d_plus - d_minus) > kink_tol * scale:
            excluded.append(idx)
            continue
        rel = abs(g - fd) / max(abs(g), abs(fd), tiny)
        checked += 1
        if rel > worst:
            worst, worst_idx = rel, idx
        if rel > tol:
            failures.append((idx, float(g), float(fd), float(rel)))
    return GradCheckReport(
        passed=not failures and checked > 0,
        max_rel_error=float(worst),
        tol=tol,
        fd_step=fd_step,
        n_checked=checked,
        excluded=excluded,
        negligible=negligible,
        failures=failures,
        worst_index=worst_idx,
    )


def mel_path_check(
    iterations: int = 1,
    n_frames: int = 10,
    seed: int = 0,
    fd_step: float = 1e-5,
    tol: float = 1e-3,
    min_grad: float = 1e-5,
    min_value: float = 1e-3,
    noise: float = 0.1,
) -> GradCheckReport:
    """Check the gradient of ``-SI-SDR(istft(GL_k(eps(mel))), w)`` with respect to ``mel``.

    The reference ``w`` is the same path applied to the mel features of a
    synthetic voiced token; the checked point is that mel with multiplicative
    noise. Only elements with ``|mel| > min_value`` are perturbed. Elements
    whose perturbation can flip a clamped amplitude bin are declared non-smooth
    and excluded up front; the remaining non-smooth points are caught by the
    one-sided quotient test. ``min_grad`` sits well above the round-off level
    of a central difference on a loss of order 10 with step ``1e-5``.
    """
    from . import diffpath
    from .corpus import render_tokens
    from .loss import si_sdr_db
    from .mel import build_filterbank, extract_mel
    from .phase import GriffinLimConfig
    from .signal import StftConfig, n_samples_for

    cfg = StftConfig()
    fb = build_filterbank(sample_rate=16000, fft_size=cfg.fft_size)
    gl = GriffinLimConfig(iterations=iterations)
    wave = render_tokens([1, 4], 16000).samples[: n_samples_for(n_frames, cfg)]
    target = extract_mel(wave, cfg, fb).values
    ref = ad.value_of(diffpath.mel_to_waveform(target, fb, cfg, gl))
    rng = np.random.default_rng(seed)
    mel = target * (1.0 + noise * rng.standard_normal(target.shape))

    def fn(m):
        return ad.neg(si_sdr_db(diffpath.mel_to_waveform(m, fb, cfg, gl), ref))

    indices = [tuple(i) for i in np.argwhere(np.abs(mel) > min_value)]
    return grad_check(fn, mel, fd_step=fd_step, tol=tol, min_grad=min_grad, indices=indices,
                      exclude=diffpath.clamp_kinks(mel, fb, fd_step))
