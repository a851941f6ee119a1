"""Deterministic synthetic token/waveform corpus.

Every token id owns one fixed sound (a harmonic tone with two formant bumps or
a band-limited noise burst, always over a faint broadband floor); an utterance
is its tokens' sounds concatenated. The token-to-sound map does not depend on
the corpus seed, which only draws the token sequences.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidConfigError, InvalidInputError
from .signal import Waveform

_PATTERN_SEED = 20240
_TARGET_RMS = 0.1


@dataclass(frozen=True, eq=False)
class SyntheticCorpus:
    items: tuple
    seed: int
    sample_rate: int
    vocab_size: int
    token_duration: float

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i):
        return self.items[i]

    @property
    def tokens(self):
        return [t for t, _ in self.items]

    @property
    def waveforms(self):
        return [w for _, w in self.items]


@lru_cache(maxsize=256)
def _pattern(token, sample_rate, n):
    rng = np.random.default_rng([_PATTERN_SEED, token])
    t = np.arange(n) / sample_rate
    nyq = sample_rate / 2.0
    floor = rng.standard_normal(n)
    if token % 3 == 2:
        lo = rng.uniform(0.15, 0.45) * nyq
        hi = min(lo + rng.uniform(0.1, 0.35) * nyq, 0.98 * nyq)
        spec = np.fft.rfft(rng.standard_normal(n))
        freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
        spec[(freqs < lo) | (freqs > hi)] = 0.0
        x = np.fft.irfft(spec, n=n)
    else:
        f0 = 90.0 + 23.0 * token
        f1 = rng.uniform(0.04, 0.12) * nyq
        f2 = rng.uniform(0.15, 0.4) * nyq
        x = np.zeros(n)
        for k in range(1, int(0.9 * nyq / f0) + 1):
            f = k * f0
            gain = np.exp(-(((f - f1) / (0.03 * nyq)) ** 2)) + 0.5 * np.exp(-(((f - f2) / (0.05 * nyq)) ** 2))
            x += (gain + 0.02) / k * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    x = x / np.sqrt(np.mean(x * x)) + 0.05 * floor
    x *= _TARGET_RMS / np.sqrt(np.mean(x * x))
    fade = min(n // 4, int(0.005 * sample_rate))
    if fade > 0:
        ramp = 0.5 * (1 - np.cos(np.pi * np.arange(fade) / fade))
        x[:fade] *= ramp
        x[-fade:] *= ramp[::-1]
    x.setflags(write=False)
    return x


def token_pattern(token: int, sample_rate: int = 16000, token_duration: float = 0.25) -> np.ndarray:
    """The fixed sound of ``token``."""
    if token < 0:
        raise InvalidInputError(f"token ids are non-negative, got {token}")
    return _pattern(int(token), int(sample_rate), int(round(token_duration * sample_rate)))


def render_tokens(tokens, sample_rate: int = 16000, token_duration: float = 0.25) -> Waveform:
    if len(tokens) == 0:
        raise InvalidInputError("empty token sequence")
    parts = [token_pattern(int(k), sample_rate, token_duration) for k in tokens]
    return Waveform(np.concatenate(parts), sample_rate)


def check_corpus_bounds(size, vocab_size, min_duration, max_duration, token_duration, sample_rate=16000):
    """Validate corpus settings; returns the feasible ``(min, max)`` token count per utterance."""
    if size < 1:
        raise InvalidConfigError(f"corpus size must be >= 1, got {size}")
    if vocab_size < 1:
        raise InvalidConfigError("vocab_size must be >= 1")
    if sample_rate <= 0:
        raise InvalidConfigError("sample_rate must be positive")
    if token_duration <= 0 or min_duration > max_duration:
        raise InvalidConfigError("need token_duration > 0 and min_duration <= max_duration")
    lo = max(1, int(np.ceil(min_duration / token_duration - 1e-9)))
    hi = int(np.floor(max_duration / token_duration + 1e-9))
    if lo > hi:
        raise InvalidConfigError(
            f"no whole number of {token_duration}s tokens fits in [{min_duration}, {max_duration}] s"
        )
    return lo, hi


def make_corpus(
    size: int = 64,
    vocab_size: int = 16,
    min_duration: float = 1.0,
    max_duration: float = 3.0,
    seed: int = 0,
    sample_rate: int = 16000,
    token_duration: float = 0.25,
) -> SyntheticCorpus:
    """Draw ``size`` random token sequences whose rendered durations lie in the bounds."""
    lo, hi = check_corpus_bounds(size, vocab_size, min_duration, max_duration, token_duration, sample_rate)
    rng = np.random.default_rng(seed)
    items = []
    for _ in range(size):
        n_tok = int(rng.integers(lo, hi + 1))
        tokens = rng.integers(0, vocab_size, size=n_tok)
        items.append((tokens, render_tokens(tokens, sample_rate, token_duration)))
    return SyntheticCorpus(tuple(items), seed, sample_rate, vocab_size, token_duration)
