"""Joint-loss versus frequency-only comparison on the synthetic corpus."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import make_corpus
from .phase import RUNTIME_GL, GriffinLimConfig
from .trainer import HeldOutResult, TrainConfig, Trainer, evaluate_heldout


@dataclass(frozen=True)
class ExperimentConfig:
    seeds: tuple = (0, 1, 2, 3, 4)
    train_size: int = 64
    heldout_size: int = 16
    min_duration: float = 0.5
    max_duration: float = 1.0
    vocab_size: int = 16
    train: TrainConfig = field(default_factory=lambda: TrainConfig(batch_size=4))
    eval_gl: GriffinLimConfig = RUNTIME_GL


@dataclass
class RunResult:
    seed: int
    lam: float
    heldout: HeldOutResult
    final_loss_f: float
    final_loss_t: float
    seconds: float


def _corpora(cfg: ExperimentConfig, seed: int):
    kw = dict(vocab_size=cfg.vocab_size, min_duration=cfg.min_duration, max_duration=cfg.max_duration)
    train = make_corpus(cfg.train_size, seed=seed, **kw)
    # offset keeps held-out utterances disjoint from every training seed's draw
    heldout = make_corpus(cfg.heldout_size, seed=10_000 + seed, **kw)
    return train, heldout


def run_one(cfg: ExperimentConfig, seed: int, train_cfg: TrainConfig) -> RunResult:
    train, heldout = _corpora(cfg, seed)
    start = time.perf_counter()
    trainer = Trainer(train, replace(train_cfg, seed=seed))
    trainer.run()
    last = trainer.history[-1] if trainer.history else {"loss_f": float("nan"), "loss_t": float("nan")}
    result = evaluate_heldout(trainer, heldout, cfg.eval_gl)
    return RunResult(seed, train_cfg.lam, result, last["loss_f"], last["loss_t"],
                     time.perf_counter() - start)


@dataclass
class Comparison:
    joint: list
    baseline: list

    @staticmethod
    def _pooled(runs, attr):
        return np.concatenate([getattr(r.heldout, attr) for r in runs])

    @property
    def joint_median_si_sdr(self):
        return float(np.median(self._pooled(self.joint, "si_sdr")))

    @property
    def baseline_median_si_sdr(self):
        return float(np.median(self._pooled(self.baseline, "si_sdr")))

    @property
    def joint_loss_f(self):
        return float(np.mean(self._pooled(self.joint, "loss_f")))

    @property
    def baseline_loss_f(self):
        return float(np.mean(self._pooled(self.baseline, "loss_f")))

    def as_dict(self):
        return {
            "joint_median_si_sdr": self.joint_median_si_sdr,
            "baseline_median_si_sdr": self.baseline_median_si_sdr,
            "joint_loss_f": self.joint_loss_f,
            "baseline_loss_f": self.baseline_loss_f,
        }


def compare(cfg: ExperimentConfig = ExperimentConfig(), log=None) -> Comparison:
    """Train the joint model and the lambda = 0 baseline for every seed.

    The baseline runs the frequency-only trainer, which produces the same
    parameter trajectory as the joint trainer at lambda = 0 without the
    (discarded) waveform branch. Held-out scores are pooled over seeds.
    """
    joint_cfg = replace(cfg.train, time_domain=True)
    base_cfg = replace(cfg.train, lam=0.0, time_domain=False)
    joint, baseline = [], []
    for seed in cfg.seeds:
        for runs, tc in ((joint, joint_cfg), (baseline, base_cfg)):
            r = run_one(cfg, seed, tc)
            runs.append(r)
            if log is not None:
                log(r)
    return Comparison(joint, baseline)
