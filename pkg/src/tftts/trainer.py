"""Joint time/frequency-loss training loop, synthesis and held-out evaluation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import diffpath
from .corpus import SyntheticCorpus
from .errors import InvalidConfigError, InvalidInputError, TrainingFailure
from .loss import LossReport, mse, si_sdr_db, si_sdr_db_rows
from .mel import MelSpectrogram, NormStats, build_filterbank, extract_mel, normalize
from .model import ModelShape, forward, init_params
from .optim import Adam, exponential_lr
from .phase import GriffinLimConfig, RUNTIME_GL, reconstruct
from .signal import StftConfig, Waveform

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    epochs: Optional[int] = None
    batch_size: int = 32
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    decay_start: Optional[int] = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-6
    l2_weight: float = 1e-6
    lam: float = 1e-3
    gl_train_iterations: int = 1
    seed: int = 0
    time_domain: bool = True

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise InvalidConfigError("Adam betas must lie in (0, 1)")
        if self.lam < 0:
            raise InvalidConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.gl_train_iterations < 1:
            raise InvalidConfigError("gl_train_iterations must be >= 1")
        if self.batch_size < 1 or self.steps < 0:
            raise InvalidConfigError("batch_size must be >= 1 and steps >= 0")
        if self.epochs is not None and self.epochs < 0:
            raise InvalidConfigError("epochs must be >= 0")
        if self.lr_start <= 0 or self.lr_end <= 0:
            raise InvalidConfigError("learning rates must be positive")
        if self.eps_adam <= 0 or self.l2_weight < 0:
            raise InvalidConfigError("eps_adam must be > 0 and l2_weight >= 0")

    def total_steps(self, corpus_size: int) -> int:
        if self.epochs is None:
            return self.steps
        return self.epochs * batches_per_epoch(corpus_size, self.batch_size)

    def decay_start_step(self, total: int) -> int:
        return total // 10 if self.decay_start is None else self.decay_start

    @property
    def gl_config(self) -> GriffinLimConfig:
        return GriffinLimConfig(iterations=self.gl_train_iterations)


def batches_per_epoch(n_items, batch_size):
    return max(1, math.ceil(n_items / batch_size))


def batch_indices(step, n_items, batch_size, seed):
    """Utterance indices for ``step``; a fresh permutation per epoch, derived from ``(seed, epoch)``."""
    nb = batches_per_epoch(n_items, batch_size)
    epoch, j = divmod(step, nb)
    perm = np.random.default_rng([seed, epoch]).permutation(n_items)
    return perm[j * batch_size : (j + 1) * batch_size]


@dataclass
class Frontend:
    """STFT and filterbank settings shared by feature extraction and reconstruction."""

    stft: StftConfig = field(default_factory=StftConfig)
    n_mels: int = 80
    sample_rate: int = 16000
    fmin: float = 0.0
    fmax: Optional[float] = None

    def __post_init__(self):
        self.filterbank = build_filterbank(self.n_mels, self.sample_rate, self.stft.fft_size, self.fmin, self.fmax)

    def extract(self, w) -> MelSpectrogram:
        return extract_mel(w, self.stft, self.filterbank)


class Trainer:
    """Holds the model, optimiser and cached targets for one training run.

    Every step follows the joint-loss recipe: predict ``y_hat`` (teacher
    forced), estimate amplitudes for ``y_hat`` and ``y``, run Griffin-Lim with
    one shared config on both, inverse-STFT both, and update with
    ``loss_f + lam * loss_t``. The target branch does not depend on the
    parameters, so its waveforms are computed once and cached.
    """

    def __init__(self, corpus: SyntheticCorpus, cfg: TrainConfig = TrainConfig(),
                 frontend: Optional[Frontend] = None, shape: Optional[ModelShape] = None,
                 stats: Optional[NormStats] = None):
        if len(corpus) == 0:
            raise InvalidInputError("training corpus is empty")
        self.corpus = corpus
        self.cfg = cfg
        self.frontend = frontend or Frontend(sample_rate=corpus.sample_rate)
        self.shape = shape or ModelShape(vocab_size=corpus.vocab_size, n_mels=self.frontend.n_mels)
        raw = [self.frontend.extract(w) for w in corpus.waveforms]
        self.stats = stats or NormStats.fit(raw)
        self.targets = [normalize(m, self.stats).values for m in raw]
        self.params = init_params(self.shape, seed=cfg.seed)
        self.optimizer = Adam(cfg.beta1, cfg.beta2, cfg.eps_adam, cfg.l2_weight)
        self.step = 0
        self.total = cfg.total_steps(len(corpus))
        self.history = []
        self._ref_cache = {}

    # -- target branch -----------------------------------------------------------

    def reference_waveform(self, index, gl: GriffinLimConfig) -> np.ndarray:
        key = (index, gl)
        if key not in self._ref_cache:
            fe = self.frontend
            self._ref_cache[key] = diffpath.mel_to_waveform(
                self.targets[index], fe.filterbank, fe.stft, gl, self.stats
            )
        return self._ref_cache[key]

    def waveform_pair(self, pred_mel, index, gl: GriffinLimConfig):
        """``(w_hat, w)`` for one utterance; both go through the same Griffin-Lim config."""
        fe = self.frontend
        est = diffpath.mel_to_waveform(pred_mel, fe.filterbank, fe.stft, gl, self.stats)
        return est, self.reference_waveform(index, gl)

    # -- one update ----------------------------------------------------------------

    def loss_terms(self, params, idx):
        """Tracked ``(loss_f, loss_t)`` for a batch; ``loss_t`` is None for a frequency-only run.

        Utterances are zero-padded to a common frame count. Both terms are
        per-utterance losses averaged over the batch, with padding masked out.
        """
        tokens = [self.corpus.tokens[i] for i in idx]
        lengths = np.array([self.targets[i].shape[0] for i in idx])
        B, M = len(idx), self.shape.n_mels
        teacher = np.zeros((B, lengths.max(), M))
        for b, i in enumerate(idx):
            teacher[b, : lengths[b]] = self.targets[i]
        pred = forward(params, tokens, teacher)

        frame_mask = np.arange(teacher.shape[1])[None, :] < lengths[:, None]
        weight = frame_mask[..., None] / (lengths[:, None, None] * M * B)
        diff = ad.sub(pred, teacher)
        lf = ad.sum(ad.mul(ad.mul(diff, diff), weight))
        if not self.cfg.time_domain:
            return lf, None

        fe, gl = self.frontend, self.cfg.gl_config
        est = diffpath.mel_to_waveform_batch(
            pred if self.cfg.lam > 0 else ad.value_of(pred),
            lengths, fe.filterbank, fe.stft, gl, self.stats,
        )
        ref = np.zeros(ad.value_of(est).shape)
        for b, i in enumerate(idx):
            r = self.reference_waveform(i, gl)
            ref[b, : r.shape[0]] = r
        return lf, ad.mul(ad.sum(si_sdr_db_rows(est, ref)), -1.0 / B)

    def train_step(self) -> LossReport:
        cfg = self.cfg
        idx = batch_indices(self.step, len(self.corpus), cfg.batch_size, cfg.seed)
        tape = ad.Tape()
        tracked = {k: tape.variable(v) for k, v in self.params.items()}
        lf, lt = self.loss_terms(tracked, idx)
        total = lf if lt is None else ad.add(lf, ad.mul(lt, cfg.lam))
        report = LossReport(
            loss_f=float(ad.value_of(lf)),
            loss_t=float("nan") if lt is None else float(ad.value_of(lt)),
            lam=cfg.lam,
            total=float(ad.value_of(total)),
        )
        if not np.isfinite(report.total) or not np.isfinite(report.loss_f):
            raise TrainingFailure(f"non-finite loss at step {self.step}", step=self.step)
        grads = ad.backward(tape, total)
        lr = exponential_lr(self.step, self.total, cfg.lr_start, cfg.lr_end, cfg.decay_start_step(self.total))
        self.optimizer.step(self.params, {k: grads[v] for k, v in tracked.items()}, lr)
        self.history.append({"step": self.step, "lr": lr, **report.as_dict()})
        self.step += 1
        return report

    def run(self, steps: Optional[int] = None, callback=None):
        end = self.total if steps is None else self.step + steps
        while self.step < end:
            report = self.train_step()
            log.debug("step %d total %.6f", self.step - 1, report.total)
            if callback is not None:
                callback(self.step - 1, report)
        return self.params, self.history

    # -- inference -------------------------------------------------------------------

    def predict(self, tokens, teacher: Optional[np.ndarray] = None, max_frames: int = 1000) -> MelSpectrogram:
        out = forward(self.params, [tokens], None if teacher is None else teacher[None], max_frames)
        fe = self.frontend
        return MelSpectrogram(out[0], True, self.stats, fe.sample_rate, fe.stft.hop_length, fe.stft.win_length)

    def synthesize(self, tokens, glcfg: GriffinLimConfig = RUNTIME_GL, max_frames: int = 1000) -> Waveform:
        return synthesize(self.params, tokens, self.frontend, self.stats, glcfg, max_frames)


def train(corpus: SyntheticCorpus, cfg: TrainConfig = TrainConfig(), frontend=None, callback=None):
    """Train from scratch; returns ``(params, history)``."""
    trainer = Trainer(corpus, cfg, frontend)
    return trainer.run(callback=callback)


def synthesize(params, tokens, frontend: Frontend, stats: NormStats,
               glcfg: GriffinLimConfig = RUNTIME_GL, max_frames: int = 1000) -> Waveform:
    """Free-running prediction for ``tokens`` followed by Griffin-Lim reconstruction."""
    if max_frames is None or max_frames < 1:
        raise InvalidInputError("frame cap must be >= 1 to produce any output")
    mel = forward(params, [np.asarray(tokens)], None, max_frames)[0]
    M = MelSpectrogram(mel, True, stats, frontend.sample_rate, frontend.stft.hop_length, frontend.stft.win_length)
    return reconstruct(M, frontend.filterbank, stats, glcfg, frontend.stft)


@dataclass
class HeldOutResult:
    si_sdr: np.ndarray
    loss_f: np.ndarray

    @property
    def median_si_sdr(self):
        return float(np.median(self.si_sdr))

    @property
    def mean_loss_f(self):
        return float(np.mean(self.loss_f))


def evaluate_heldout(trainer: Trainer, corpus: SyntheticCorpus, glcfg: GriffinLimConfig = RUNTIME_GL) -> HeldOutResult:
    """Teacher-forced prediction on unseen utterances, scored against the Griffin-Lim target.

    SI-SDR compares ``reconstruct(y_hat)`` with ``reconstruct(y)`` using the
    same Griffin-Lim config for both.
    """
    fe = trainer.frontend
    sdr, lf = [], []
    for tokens, wave in corpus:
        target = normalize(fe.extract(wave), trainer.stats)
        pred = trainer.predict(tokens, teacher=target.values)
        est = reconstruct(pred, fe.filterbank, trainer.stats, glcfg, fe.stft)
        ref = reconstruct(target, fe.filterbank, trainer.stats, glcfg, fe.stft)
        sdr.append(float(si_sdr_db(est.samples, ref.samples)))
        lf.append(float(mse(pred.values, target.values)))
    return HeldOutResult(np.array(sdr), np.array(lf))
