import numpy as np
import pytest

from tftts import autodiff as ad
from tftts import diffpath
from tftts.gradcheck import grad_check, mel_path_check
from tftts.loss import mse, si_sdr_db
from tftts.mel import MelSpectrogram
from tftts.phase import GriffinLimConfig, griffin_lim, reconstruct
from tftts.signal import AmplitudeSpectrogram


def test_frequency_loss_gradient(rng):
    target = rng.standard_normal((4, 6))
    report = grad_check(lambda p: mse(p, target), rng.standard_normal((4, 6)), tol=1e-6)
    assert report.passed and report.max_rel_error <= 1e-6


def test_si_sdr_gradient(rng):
    ref = rng.standard_normal(64)
    est = ref + 0.7 * rng.standard_normal(64)
    report = grad_check(lambda e: ad.neg(si_sdr_db(e, ref)), est, tol=1e-5)
    assert report.passed and report.max_rel_error <= 1e-5


def test_kinks_are_excluded():
    x = np.array([0.0, 1.0, -1.0])
    report = grad_check(lambda v: ad.sum(ad.clamp(v, lo=0.0)), x, tol=1e-6, min_grad=1e-9)
    assert (0,) in report.excluded
    assert report.n_checked == 1 and report.negligible == 1 and report.passed


def test_explicit_exclusion_mask(rng):
    x = rng.standard_normal(4)
    mask = np.array([True, False, False, True])
    report = grad_check(lambda v: ad.norm_sq(v), x, exclude=mask)
    assert report.n_checked == 2 and len(report.excluded) == 2


def test_wrong_gradient_is_reported():
    def lying(v):
        # value of sum(v**2) with the gradient of sum(v)
        val = ad.value_of(v)
        return ad.add(ad.sum(v), float(np.sum(val * val) - np.sum(val)))

    report = grad_check(lying, np.array([2.0, 3.0]))
    assert not report.passed and len(report.failures) == 2


def test_constant_function_has_nothing_to_check():
    report = grad_check(lambda v: 1.0, np.ones(3), min_grad=1e-9)
    assert not report.passed and report.n_checked == 0 and report.negligible == 3


def test_diff_path_matches_reference_reconstruction(fb, cfg, rng):
    mel = np.abs(rng.standard_normal((8, 80)))
    for k in (0, 1, 3):
        gl = GriffinLimConfig(k)
        ours = diffpath.mel_to_waveform(mel, fb, cfg, gl)
        ref = reconstruct(MelSpectrogram(mel), fb, glcfg=gl, stft_cfg=cfg).samples
        assert np.max(np.abs(ours - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_diff_griffin_lim_random_init_matches(cfg, rng):
    A = np.abs(rng.standard_normal((6, cfg.n_bins)))
    gl = GriffinLimConfig(2, "random", 3)
    ours = diffpath.griffin_lim(A, cfg, gl)
    ref = griffin_lim(AmplitudeSpectrogram(A, cfg), gl).values
    assert np.allclose(ours, ref, atol=1e-12)


def test_batched_path_matches_rows(fb, cfg, rng):
    lengths = [7, 4]
    mel = np.zeros((2, 7, 80))
    for b, t in enumerate(lengths):
        mel[b, :t] = np.abs(rng.standard_normal((t, 80)))
    gl = GriffinLimConfig(2)
    batch = diffpath.mel_to_waveform_batch(mel, lengths, fb, cfg, gl)
    for b, t in enumerate(lengths):
        row = diffpath.mel_to_waveform(mel[b, :t], fb, cfg, gl)
        assert np.allclose(batch[b, : len(row)], row, atol=1e-12)
        assert not np.any(batch[b, len(row):])


@pytest.mark.parametrize("k", [1, 2])
def test_mel_path_gradient(k):
    report = mel_path_check(iterations=k)
    assert report.passed, report.failures[:5]
    assert report.max_rel_error <= 1e-3
    assert report.n_checked >= 100
