"""scikit-learn style wrappers around the functional API.

Utterances differ in length, so ``X`` is a list of 1-D arrays (waveforms or
token sequences) rather than a 2-D matrix, and outputs are lists as well.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import SyntheticCorpus
from .errors import InvalidInputError
from .loss import si_sdr
from .mel import MelSpectrogram, NormStats, build_filterbank, extract_mel, normalize
from .model import ModelShape, forward
from .phase import GriffinLimConfig, griffin_lim, reconstruct
from .signal import AmplitudeSpectrogram, StftConfig, Waveform, istft_array
from .trainer import Frontend, TrainConfig, Trainer, synthesize


def check_waveforms(X, min_length=1):
    """List of finite float64 1-D arrays, each at least ``min_length`` long."""
    if isinstance(X, np.ndarray) and X.ndim == 1 and X.dtype != object:
        X = [X]
    out = []
    for i, x in enumerate(X):
        x = x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise InvalidInputError(f"item {i}: expected a 1-D waveform, got shape {x.shape}")
        if x.shape[0] < min_length:
            raise InvalidInputError(f"item {i}: {x.shape[0]} samples, need at least {min_length}")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError(f"item {i}: non-finite samples")
        out.append(x)
    if not out:
        raise InvalidInputError("no waveforms given")
    return out


def check_token_sequences(X, vocab_size=None):
    out = []
    for i, seq in enumerate(X):
        seq = np.asarray(seq)
        if seq.ndim != 1 or seq.size == 0:
            raise InvalidInputError(f"item {i}: token sequences must be non-empty 1-D")
        if not np.issubdtype(seq.dtype, np.integer):
            if not np.all(np.mod(seq, 1) == 0):
                raise InvalidInputError(f"item {i}: token ids must be integers")
            seq = seq.astype(np.int64)
        if seq.min() < 0 or (vocab_size is not None and seq.max() >= vocab_size):
            raise InvalidInputError(f"item {i}: token id outside vocabulary")
        out.append(seq)
    if not out:
        raise InvalidInputError("no token sequences given")
    return out


def check_mels(X, n_mels):
    out = []
    for i, m in enumerate(X):
        m = m.values if isinstance(m, MelSpectrogram) else np.asarray(m, dtype=np.float64)
        if m.ndim != 2 or m.shape[1] != n_mels:
            raise InvalidInputError(f"item {i}: expected (frames, {n_mels}) mel features, got {m.shape}")
        out.append(m)
    return out


class _FrontendParams:
    """Shared analysis hyperparameters."""

    def _stft(self):
        return StftConfig(self.win_length, self.hop_length, self.fft_size, self.window)

    def _frontend(self):
        return Frontend(self._stft(), self.n_mels, self.sample_rate, self.fmin, self.fmax)


class MelTransformer(_FrontendParams, TransformerMixin, BaseEstimator):
    """Waveforms to mel features, optionally standardised per channel.

    ``fit`` learns per-channel mean and std over every frame of ``X``;
    ``inverse_transform`` goes back to waveforms with Griffin-Lim.
    """

    def __init__(self, win_length=800, hop_length=200, fft_size=1024, window="hann",
                 n_mels=80, sample_rate=16000, fmin=0.0, fmax=None, normalize=True,
                 gl_iterations=64):
        self.win_length = win_length
        self.hop_length = hop_length
        self.fft_size = fft_size
        self.window = window
        self.n_mels = n_mels
        self.sample_rate = sample_rate
        self.fmin = fmin
        self.fmax = fmax
        self.normalize = normalize
        self.gl_iterations = gl_iterations

    def _raw(self, X):
        return [extract_mel(Waveform(x, self.sample_rate), self.stft_, self.filterbank_)
                for x in check_waveforms(X, self.win_length)]

    def fit(self, X, y=None):
        self.stft_ = self._stft()
        self.filterbank_ = build_filterbank(self.n_mels, self.sample_rate, self.fft_size, self.fmin, self.fmax)
        raw = self._raw(X)
        self.stats_ = NormStats.fit(raw) if self.normalize else None
        self.n_features_out_ = self.n_mels
        return self

    def transform(self, X):
        check_is_fitted(self, "filterbank_")
        raw = self._raw(X)
        if self.stats_ is None:
            return [m.values for m in raw]
        return [normalize(m, self.stats_).values for m in raw]

    def inverse_transform(self, X):
        check_is_fitted(self, "filterbank_")
        gl = GriffinLimConfig(self.gl_iterations)
        out = []
        for m in check_mels(X, self.n_mels):
            M = MelSpectrogram(m, self.stats_ is not None, self.stats_, self.sample_rate,
                               self.hop_length, self.win_length)
            out.append(reconstruct(M, self.filterbank_, self.stats_, gl, self.stft_).samples)
        return out


class GriffinLimInverter(TransformerMixin, BaseEstimator):
    """Amplitude spectrograms ``(frames, fft_size // 2 + 1)`` to waveforms. Stateless."""

    def __init__(self, iterations=64, win_length=800, hop_length=200, fft_size=1024,
                 window="hann", init_phase="zero", seed=None):
        self.iterations = iterations
        self.win_length = win_length
        self.hop_length = hop_length
        self.fft_size = fft_size
        self.window = window
        self.init_phase = init_phase
        self.seed = seed

    def fit(self, X=None, y=None):
        self.stft_ = StftConfig(self.win_length, self.hop_length, self.fft_size, self.window)
        self.gl_ = GriffinLimConfig(self.iterations, self.init_phase, self.seed)
        return self

    def transform(self, X):
        check_is_fitted(self, "gl_")
        out = []
        for A in X:
            A = AmplitudeSpectrogram(getattr(A, "values", A), self.stft_)
            out.append(istft_array(griffin_lim(A, self.gl_).values, self.stft_))
        return out


class JointTTSRegressor(_FrontendParams, BaseEstimator):
    """Toy token-to-speech model trained with the joint feature/waveform loss.

    ``fit(X, y)`` takes token sequences and their waveforms; ``predict``
    returns synthesised waveforms; ``score`` is the median SI-SDR of
    teacher-free synthesis against the Griffin-Lim reconstruction of each
    target's own features.
    """

    def __init__(self, lam=1e-3, steps=2000, batch_size=32, lr_start=1e-3, lr_end=1e-5,
                 decay_start=None, l2_weight=1e-6, gl_train_iterations=1, gl_iterations=64,
                 time_domain=True, embed_dim=32, enc_dim=64, dec_dim=64, vocab_size=None,
                 win_length=800, hop_length=200, fft_size=1024, window="hann", n_mels=80,
                 sample_rate=16000, fmin=0.0, fmax=None, random_state=0):
        self.lam = lam
        self.steps = steps
        self.batch_size = batch_size
        self.lr_start = lr_start
        self.lr_end = lr_end
        self.decay_start = decay_start
        self.l2_weight = l2_weight
        self.gl_train_iterations = gl_train_iterations
        self.gl_iterations = gl_iterations
        self.time_domain = time_domain
        self.embed_dim = embed_dim
        self.enc_dim = enc_dim
        self.dec_dim = dec_dim
        self.vocab_size = vocab_size
        self.win_length = win_length
        self.hop_length = hop_length
        self.fft_size = fft_size
        self.window = window
        self.n_mels = n_mels
        self.sample_rate = sample_rate
        self.fmin = fmin
        self.fmax = fmax
        self.random_state = random_state

    def fit(self, X, y):
        tokens = check_token_sequences(X, self.vocab_size)
        waves = check_waveforms(y, self.win_length)
        if len(tokens) != len(waves):
            raise InvalidInputError(f"{len(tokens)} token sequences but {len(waves)} waveforms")
        vocab = self.vocab_size or int(max(t.max() for t in tokens)) + 1
        corpus = SyntheticCorpus(
            tuple((t, Waveform(w, self.sample_rate)) for t, w in zip(tokens, waves)),
            seed=self.random_state, sample_rate=self.sample_rate, vocab_size=vocab,
            token_duration=float("nan"),
        )
        cfg = TrainConfig(
            steps=self.steps, batch_size=self.batch_size, lr_start=self.lr_start, lr_end=self.lr_end,
            decay_start=self.decay_start, l2_weight=self.l2_weight, lam=self.lam,
            gl_train_iterations=self.gl_train_iterations, seed=self.random_state,
            time_domain=self.time_domain,
        )
        shape = ModelShape(vocab, self.n_mels, self.embed_dim, self.enc_dim, self.dec_dim)
        trainer = Trainer(corpus, cfg, self._frontend(), shape)
        trainer.run()
        self.params_ = trainer.params
        self.stats_ = trainer.stats
        self.frontend_ = trainer.frontend
        self.history_ = trainer.history
        self.vocab_size_ = vocab
        self.frames_per_token_ = float(np.mean([t.shape[0] / len(s) for t, s in zip(trainer.targets, tokens)]))
        return self

    def _frames_for(self, tokens):
        return max(1, int(round(self.frames_per_token_ * len(tokens))))

    def predict_mel(self, X, max_frames=None):
        """Normalised mel predictions, free-running."""
        check_is_fitted(self, "params_")
        out = []
        for t in check_token_sequences(X, self.vocab_size_):
            n = max_frames or self._frames_for(t)
            out.append(forward(self.params_, [t], None, n)[0])
        return out

    def predict(self, X, max_frames=None):
        check_is_fitted(self, "params_")
        gl = GriffinLimConfig(self.gl_iterations)
        return [
            synthesize(self.params_, t, self.frontend_, self.stats_, gl, max_frames or self._frames_for(t)).samples
            for t in check_token_sequences(X, self.vocab_size_)
        ]

    def score(self, X, y):
        check_is_fitted(self, "params_")
        fe, gl = self.frontend_, GriffinLimConfig(self.gl_iterations)
        scores = []
        for t, w in zip(check_token_sequences(X, self.vocab_size_), check_waveforms(y, self.win_length)):
            target = extract_mel(Waveform(w, self.sample_rate), fe.stft, fe.filterbank)
            ref = reconstruct(target, fe.filterbank, None, gl, fe.stft).samples
            est = synthesize(self.params_, t, fe, self.stats_, gl, target.n_frames).samples
            scores.append(si_sdr(est, ref))
        return float(np.median(scores))
