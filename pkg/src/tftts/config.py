"""Flat ``key = value`` run configuration covering every tunable of a training run."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, get_args, get_type_hints

from .errors import InvalidConfigError, TfttsError
from .model import ModelShape
from .phase import GriffinLimConfig
from .signal import StftConfig
from .trainer import Frontend, TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # corpus
    corpus_size: int = 64
    vocab_size: int = 16
    min_duration: float = 1.0
    max_duration: float = 3.0
    token_duration: float = 0.25
    sample_rate: int = 16000
    # analysis
    win_length: int = 800
    hop_length: int = 200
    fft_size: int = 1024
    window: str = "hann"
    n_mels: int = 80
    fmin: float = 0.0
    fmax: Optional[float] = None
    # run-time reconstruction
    gl_iterations: int = 64
    gl_init_phase: str = "zero"
    gl_seed: Optional[int] = None
    # model
    embed_dim: int = 32
    enc_dim: int = 64
    dec_dim: int = 64
    # optimisation
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
    time_domain: bool = True
    seed: int = 0
    # outputs
    log_path: Optional[str] = None

    def __post_init__(self):
        # build every derived config once so invalid values fail before any work starts
        self.validate()

    def validate(self):
        from .corpus import check_corpus_bounds

        try:
            check_corpus_bounds(self.corpus_size, self.vocab_size, self.min_duration,
                                self.max_duration, self.token_duration, self.sample_rate)
            self.frontend()
            self.shape
            self.train_config
            self.gl_config
        except TfttsError as exc:
            raise InvalidConfigError(str(exc)) from exc
        if self.win_length > self.min_duration * self.sample_rate:
            raise InvalidConfigError("min_duration is shorter than one analysis window")

    @property
    def stft(self) -> StftConfig:
        return StftConfig(self.win_length, self.hop_length, self.fft_size, self.window)

    def frontend(self) -> Frontend:
        return Frontend(self.stft, self.n_mels, self.sample_rate, self.fmin, self.fmax)

    @property
    def shape(self) -> ModelShape:
        return ModelShape(self.vocab_size, self.n_mels, self.embed_dim, self.enc_dim, self.dec_dim)

    @property
    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: getattr(self, k) for k in names})

    @property
    def gl_config(self) -> GriffinLimConfig:
        return GriffinLimConfig(self.gl_iterations, self.gl_init_phase, self.gl_seed)

    def corpus(self):
        from .corpus import make_corpus

        return make_corpus(self.corpus_size, self.vocab_size, self.min_duration, self.max_duration,
                           self.seed, self.sample_rate, self.token_duration)

    # -- text form ---------------------------------------------------------------

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise InvalidConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            values[key.strip()] = value.strip()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), **overrides)

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        values = {_ALIASES.get(k, k): v for k, v in values.items()}
        hints = get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise InvalidConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**{k: _parse(k, v, hints[k]) for k, v in values.items()})

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_ALIASES = {"lambda": "lam", "window_kind": "window"}


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _parse(key, value, hint):
    if not isinstance(value, str):
        return value
    text = value.strip()
    args = get_args(hint)
    optional = type(None) in args
    base = next(a for a in args if a is not type(None)) if optional else hint
    if optional and text.lower() in ("none", ""):
        return None
    try:
        if base is bool:
            lowered = text.lower()
            if lowered not in _BOOLS:
                raise ValueError(text)
            return _BOOLS[lowered]
        if base is int:
            as_float = float(text)
            if not as_float.is_integer():
                raise ValueError(text)
            return int(as_float)
        return base(text)
    except ValueError:
        raise InvalidConfigError(f"{key}: cannot parse {value!r} as {base.__name__}") from None


_BOOLS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}
