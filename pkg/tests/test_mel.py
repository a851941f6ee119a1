import math

import numpy as np
import pytest

from tftts.corpus import make_corpus
from tftts.errors import InvalidConfigError, InvalidInputError, InvalidStatsError
from tftts.mel import (
    MelSpectrogram,
    NormStats,
    build_filterbank,
    denormalize,
    epsilon_amplitude,
    extract_mel,
    hz_to_mel,
    mel_spectrum,
    mel_to_hz,
    normalize,
)
from tftts.signal import AmplitudeSpectrogram, StftConfig

# measured 0.0148 for the two-bump amplitude below; pinned with headroom
SMOOTH_EPSILON_BOUND = 0.02


def test_mel_scale_round_trip():
    f = np.array([0.0, 700.0, 4000.0, 8000.0])
    assert np.allclose(mel_to_hz(hz_to_mel(f)), f)
    assert math.isclose(float(hz_to_mel(700.0)), 2595.0 * math.log10(2.0))


def test_rows_non_negative_and_non_empty(fb):
    assert fb.weights.shape == (80, 513)
    assert np.all(fb.weights >= 0)
    assert np.all(fb.weights.max(axis=1) > 0)
    assert np.all(np.diff(fb.center_freqs) > 0)
    assert np.all(np.diff(fb.peak_bins) > 0)


def test_first_centre_matches_independent_formula(fb):
    # evenly spaced mel points between 0 and 8 kHz, 82 points, centre 0 is the second
    top = 2595.0 * math.log10(1.0 + 8000.0 / 700.0)
    centre_hz = 700.0 * (10 ** ((top / 81.0) / 2595.0) - 1.0)
    assert math.isclose(fb.center_freqs[0], centre_hz, rel_tol=1e-12)
    centre_bin = centre_hz * 1024 / 16000
    assert abs(centre_bin - 1.4157) < 1e-4
    upper_hz = 700.0 * (10 ** ((2 * top / 81.0) / 2595.0) - 1.0)
    tri = [min(k * 15.625 / centre_hz, (upper_hz - k * 15.625) / (upper_hz - centre_hz)) for k in (1, 2)]
    assert fb.peak_bins[0] == 1 + int(np.argmax(tri))
    assert fb.weights[0, 1] == pytest.approx(max(tri[0], 0.0), rel=1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n_mels=400, fft_size=512),
        dict(n_mels=0),
        dict(fmin=5000.0, fmax=4000.0),
        dict(fmax=9000.0),
        dict(n_mels=200, fft_size=256),
    ],
)
def test_infeasible_filterbanks(kwargs):
    with pytest.raises(InvalidConfigError):
        build_filterbank(**kwargs)


def test_mel_spectrum_oracles(fb, rng):
    cfg = StftConfig()
    zero = mel_spectrum(AmplitudeSpectrogram(np.zeros((2, 513)), cfg), fb)
    assert not np.any(zero.values) and not zero.normalized
    impulse = np.zeros((1, 513))
    impulse[0, 40] = 1.0
    assert np.array_equal(mel_spectrum(AmplitudeSpectrogram(impulse, cfg), fb).values[0], fb.weights[:, 40])
    A = np.abs(rng.standard_normal((3, 513)))
    expected = np.zeros((3, 80))
    for t in range(3):
        for m in range(80):
            expected[t, m] = sum(fb.weights[m, k] * A[t, k] for k in range(513))
    assert np.allclose(mel_spectrum(AmplitudeSpectrogram(A, cfg), fb).values, expected, atol=1e-12)


def test_mel_spectrum_is_monotone(fb, rng):
    lo = np.abs(rng.standard_normal((4, 513)))
    hi = lo + np.abs(rng.standard_normal((4, 513)))
    assert np.all(mel_spectrum(hi, fb).values >= mel_spectrum(lo, fb).values)


def test_mel_spectrum_bin_mismatch(fb):
    with pytest.raises(InvalidInputError):
        mel_spectrum(np.ones((2, 257)), fb)


def test_normalize_identity_and_round_trip(rng):
    M = MelSpectrogram(np.abs(rng.standard_normal((5, 80))))
    ident = normalize(M, NormStats.identity(80))
    assert np.array_equal(ident.values, M.values)
    stats = NormStats(rng.standard_normal(80), 0.5 + rng.random(80))
    back = denormalize(normalize(M, stats))
    assert np.max(np.abs(back.values - M.values)) <= 1e-12
    assert not back.normalized


def test_normalization_state_errors(rng):
    M = MelSpectrogram(np.ones((2, 4)))
    stats = NormStats.identity(4)
    with pytest.raises(InvalidInputError):
        denormalize(M, stats)
    with pytest.raises(InvalidInputError):
        normalize(normalize(M, stats), stats)
    with pytest.raises(InvalidInputError):
        normalize(M, NormStats.identity(5))
    with pytest.raises(InvalidStatsError):
        normalize(M, "not stats")


@pytest.mark.parametrize("std", [0.0, -1.0, np.nan])
def test_bad_std_rejected(std):
    with pytest.raises(InvalidStatsError):
        NormStats(np.zeros(3), np.array([1.0, std, 1.0]))


def test_mel_spectrogram_invariants():
    with pytest.raises(InvalidInputError):
        MelSpectrogram(np.array([[1.0, -0.1]]))
    with pytest.raises(InvalidInputError):
        MelSpectrogram(np.ones((2, 3)), normalized=True)
    with pytest.raises(InvalidInputError):
        MelSpectrogram(np.ones(3))
    # a normalised feature may be negative
    MelSpectrogram(-np.ones((2, 3)), normalized=True, stats=NormStats.identity(3))


def test_corpus_fit_standardises(cfg, fb):
    corpus = make_corpus(6, min_duration=0.5, max_duration=1.0, seed=3)
    raw = [extract_mel(w, cfg, fb) for w in corpus.waveforms]
    stats = NormStats.fit(raw)
    assert np.all(stats.std > 0)
    pooled = np.concatenate([normalize(m, stats).values for m in raw])
    assert np.max(np.abs(pooled.mean(axis=0))) < 1e-9
    assert np.max(np.abs(pooled.std(axis=0) - 1.0)) < 1e-9


def test_fit_rejects_normalised_or_empty():
    M = MelSpectrogram(np.ones((2, 3)) + np.arange(3))
    with pytest.raises(InvalidInputError):
        NormStats.fit([])
    with pytest.raises(InvalidInputError):
        NormStats.fit([normalize(M, NormStats.identity(3))])


def test_epsilon_basics(fb, rng):
    zero = epsilon_amplitude(MelSpectrogram(np.zeros((2, 80))), fb)
    assert not np.any(zero.values)
    est = epsilon_amplitude(MelSpectrogram(np.abs(rng.standard_normal((4, 80)))), fb)
    assert est.values.shape == (4, 513) and np.all(est.values >= 0)
    with pytest.raises(InvalidInputError):
        epsilon_amplitude(normalize(MelSpectrogram(np.ones((1, 80))), NormStats.identity(80)), fb)


def test_epsilon_left_inverse_on_row_space(fb, rng):
    A = np.abs(rng.standard_normal((3, 80))) @ fb.weights
    est = epsilon_amplitude(MelSpectrogram(A @ fb.weights.T), fb).values
    assert np.linalg.norm(est - A) / np.linalg.norm(A) < 1e-8


def test_epsilon_smooth_amplitude_regression(fb):
    f = np.arange(513) * 16000 / 1024
    A = np.exp(-(((f - 1500) / 900) ** 2)) + 0.5 * np.exp(-(((f - 4500) / 1500) ** 2)) + 0.05
    A = np.tile(A, (3, 1))
    est = epsilon_amplitude(MelSpectrogram(A @ fb.weights.T), fb).values
    assert np.linalg.norm(est - A) / np.linalg.norm(A) < SMOOTH_EPSILON_BOUND


def test_pinv_cached_and_read_only(fb):
    assert fb.pinv is fb.pinv
    assert not fb.pinv.flags.writeable
