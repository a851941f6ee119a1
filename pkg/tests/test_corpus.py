import numpy as np
import pytest

from tftts.corpus import check_corpus_bounds, make_corpus, render_tokens, token_pattern
from tftts.errors import InvalidConfigError, InvalidInputError
from tftts.mel import NormStats, extract_mel


def test_same_seed_same_bytes():
    a, b = make_corpus(5, seed=11), make_corpus(5, seed=11)
    for (ta, wa), (tb, wb) in zip(a, b):
        assert np.array_equal(ta, tb)
        assert wa.samples.tobytes() == wb.samples.tobytes()
    c = make_corpus(5, seed=12)
    assert any(not np.array_equal(x, y) for x, y in zip(a.tokens, c.tokens))


def test_single_token_is_its_pattern():
    w = render_tokens([5])
    assert np.array_equal(w.samples, token_pattern(5))


def test_durations_within_bounds():
    corpus = make_corpus(20, min_duration=0.5, max_duration=1.5, seed=1)
    for tokens, w in corpus:
        assert 0.5 <= len(w) / 16000 <= 1.5
        assert len(w) == len(tokens) * 4000
        assert tokens.min() >= 0 and tokens.max() < 16


def test_patterns_differ_and_are_normalised():
    pats = [token_pattern(k) for k in range(16)]
    rms = [np.sqrt(np.mean(p * p)) for p in pats]
    assert np.allclose(rms, 0.1, rtol=0.05)
    assert all(not np.allclose(pats[0], p) for p in pats[1:])
    assert not pats[0].flags.writeable


def test_every_mel_channel_varies(cfg, fb):
    corpus = make_corpus(16, seed=0)
    stats = NormStats.fit([extract_mel(w, cfg, fb) for w in corpus.waveforms])
    assert np.all(stats.std > 0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(size=0),
        dict(vocab_size=0),
        dict(min_duration=2.0, max_duration=1.0),
        dict(min_duration=1.1, max_duration=1.2),
        dict(token_duration=0.0),
    ],
)
def test_infeasible_bounds(kwargs):
    with pytest.raises(InvalidConfigError):
        make_corpus(**{"size": 4, **kwargs})


def test_bounds_helper():
    assert check_corpus_bounds(1, 16, 1.0, 3.0, 0.25) == (4, 12)


def test_render_errors():
    with pytest.raises(InvalidInputError):
        render_tokens([])
    with pytest.raises(InvalidInputError):
        token_pattern(-1)
