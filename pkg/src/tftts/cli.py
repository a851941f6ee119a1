"""Command-line interface.

Every command prints one JSON object on a single line, numbers to six
significant digits. Failures print a single-line JSON error to stderr and exit
non-zero: 1 for library errors, 2 for bad usage, 3 for a failed gradient check.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import io
from .config import RunConfig
from .errors import InvalidInputError, TfttsError
from .loss import LossReport, loss_f, loss_t, si_sdr
from .mel import build_filterbank, extract_mel
from .phase import GriffinLimConfig, reconstruct
from .signal import StftConfig, n_frames_for


class UsageError(TfttsError):
    kind = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def format_number(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return format(x, "#.6g") if math.isfinite(x) else "null"


def to_json(obj) -> str:
    """Single-line JSON with every float rendered to six significant digits."""
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {to_json(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(to_json(v) for v in obj) + "]"
    if isinstance(obj, str):
        return json.dumps(obj)
    return format_number(obj)


def _emit(obj, stream=None):
    print(to_json(obj), file=stream or sys.stdout, flush=True)


# -- shared flags ------------------------------------------------------------------------


def _add_stft_flags(p, with_mel=True):
    p.add_argument("--win-length", type=int, default=800)
    p.add_argument("--hop-length", type=int, default=200)
    p.add_argument("--fft-size", type=int, default=1024)
    p.add_argument("--window", default="hann")
    if with_mel:
        p.add_argument("--n-mels", type=int, default=80)
        p.add_argument("--fmin", type=float, default=0.0)
        p.add_argument("--fmax", type=float, default=None)


def _add_gl_flags(p, default_iterations):
    p.add_argument("--iterations", type=int, default=default_iterations)
    p.add_argument("--init-phase", default="zero", choices=["zero", "random"])
    p.add_argument("--seed", type=int, default=None)


def _gl(args):
    seed = args.seed if args.seed is not None or args.init_phase == "zero" else 0
    return GriffinLimConfig(args.iterations, args.init_phase, seed)


def _mel_stft(M, fft_size):
    return StftConfig(M.win_length, M.hop_length, fft_size)


# -- commands ------------------------------------------------------------------------------


def cmd_extract(args):
    w = io.read_wav(args.input)
    cfg = StftConfig(args.win_length, args.hop_length, args.fft_size, args.window)
    fb = build_filterbank(args.n_mels, w.sample_rate, args.fft_size, args.fmin, args.fmax)
    M = extract_mel(w, cfg, fb)
    io.write_mel(args.output, M)
    return {"frames": M.n_frames, "n_mels": M.n_mels, "sample_rate": M.sample_rate,
            "hop_length": M.hop_length, "win_length": M.win_length}


def cmd_reconstruct(args):
    M = io.read_mel(args.input)
    cfg = _mel_stft(M, args.fft_size)
    fb = build_filterbank(M.n_mels, M.sample_rate, args.fft_size, args.fmin, args.fmax)
    w = reconstruct(M, fb, M.stats, _gl(args), cfg)
    io.write_wav(args.output, w, args.bit_depth)
    return {"samples": len(w), "sample_rate": w.sample_rate, "iterations": args.iterations}


def cmd_evaluate(args):
    est, ref = io.read_wav(args.est), io.read_wav(args.ref)
    value = si_sdr(est, ref)
    return {"si_sdr_db": value, "loss_t": -value}


def cmd_loss(args):
    pred, target = io.read_mel(args.pred), io.read_mel(args.target)
    lf = loss_f(pred, target)
    if (args.est is None) != (args.ref is None):
        raise InvalidInputError("--est and --ref must be given together")
    if args.est is not None:
        lt = loss_t(io.read_wav(args.est), io.read_wav(args.ref))
    else:
        # no waveforms given: reconstruct both with one shared config
        cfg = _mel_stft(target, args.fft_size)
        fb = build_filterbank(target.n_mels, target.sample_rate, args.fft_size)
        gl = _gl(args)
        lt = loss_t(reconstruct(pred, fb, pred.stats, gl, cfg), reconstruct(target, fb, target.stats, gl, cfg))
    if args.lam < 0:
        raise InvalidInputError(f"lambda must be >= 0, got {args.lam}")
    return LossReport.combine(lf, lt, args.lam).as_dict()


def cmd_gradcheck(args):
    from .gradcheck import mel_path_check

    report = mel_path_check(args.iterations, n_frames=args.frames, seed=args.seed or 0,
                            fd_step=args.fd_step, tol=args.tol, min_grad=args.min_grad)
    return {"iterations": args.iterations, **report.as_dict()}


def _run_config(args):
    overrides = {k: v for k, v in (("steps", args.steps), ("seed", args.seed)) if v is not None}
    if args.config is not None:
        return RunConfig.from_file(args.config, **overrides)
    return RunConfig.from_mapping(overrides)


def cmd_train(args):
    from .trainer import Trainer

    if args.resume is not None:
        ck = io.load_checkpoint(args.resume)
        trainer = io.restore_trainer(ck)
        run = RunConfig.from_text(ck.config_text)
        if args.steps is not None:
            run = run.replace(steps=args.steps)
            trainer.total = run.train_config.total_steps(len(trainer.corpus))
    else:
        run = _run_config(args)
        trainer = Trainer(run.corpus(), run.train_config, run.frontend(), run.shape)
    log_path = args.log or run.log_path
    log = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        trainer.run(callback=(lambda step, r: _emit(trainer.history[-1], log)) if log else None)
    finally:
        if log:
            log.close()
    io.save_checkpoint(args.output, trainer, run.to_text())
    last = trainer.history[-1] if trainer.history else {}
    return {"steps": trainer.step, "loss_f": last.get("loss_f"), "loss_t": last.get("loss_t"),
            "total": last.get("total"), "checkpoint": str(args.output)}


def parse_tokens(text, vocab_size):
    try:
        tokens = [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise InvalidInputError(f"tokens must be integers, got {text!r}") from None
    if not tokens:
        raise InvalidInputError("empty token sequence")
    if min(tokens) < 0 or max(tokens) >= vocab_size:
        raise InvalidInputError(f"token id outside vocabulary of {vocab_size}")
    return np.array(tokens)


def cmd_synthesize(args):
    from .trainer import synthesize

    ck = io.load_checkpoint(args.ckpt)
    run = RunConfig.from_text(ck.config_text)
    tokens = parse_tokens(args.tokens, run.vocab_size)
    if args.max_frames is None:
        # no stop token: decode as many frames as the rendered tokens would span
        n = int(round(len(tokens) * run.token_duration * run.sample_rate))
        max_frames = n_frames_for(max(n, run.win_length), run.stft)
    else:
        max_frames = args.max_frames
    if max_frames < 1:
        raise InvalidInputError("frame cap must be >= 1 to produce any output")
    iterations = run.gl_iterations if args.iterations is None else args.iterations
    gl = GriffinLimConfig(iterations, run.gl_init_phase, run.gl_seed)
    w = synthesize(ck.params, tokens, run.frontend(), ck.stats, gl, max_frames)
    io.write_wav(args.output, w, args.bit_depth)
    return {"samples": len(w), "frames": max_frames, "iterations": iterations}


# -- wiring ----------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tftts", description="Joint time/frequency TTS criterion toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="mel analysis of a WAV file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    _add_stft_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("reconstruct", help="mel features to waveform via Griffin-Lim")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--fft-size", type=int, default=1024)
    p.add_argument("--fmin", type=float, default=0.0)
    p.add_argument("--fmax", type=float, default=None)
    p.add_argument("--bit-depth", type=int, default=16, choices=[16, 32])
    _add_gl_flags(p, 64)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="SI-SDR of an estimate against a reference")
    p.add_argument("--est", required=True)
    p.add_argument("--ref", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("loss", help="frequency, time and joint loss report")
    p.add_argument("--pred", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--est")
    p.add_argument("--ref")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    p.add_argument("--fft-size", type=int, default=1024)
    _add_gl_flags(p, 64)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("gradcheck", help="verify the mel-to-waveform-loss gradient")
    p.add_argument("--iterations", type=int, default=1)
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fd-step", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--min-grad", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train", help="train the toy model on a synthetic corpus")
    p.add_argument("--config")
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--log", help="write one JSON line per step here")
    p.add_argument("--resume", help="continue from this checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synthesize", help="tokens to waveform with a trained checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--tokens", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--iterations", type=int)
    p.add_argument("--max-frames", type=int)
    p.add_argument("--bit-depth", type=int, default=16, choices=[16, 32])
    p.set_defaults(func=cmd_synthesize)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        result = args.func(args)
    except UsageError as exc:
        _emit({"error": exc.kind, "message": str(exc)}, sys.stderr)
        return 2
    except TfttsError as exc:
        _emit({"error": exc.kind, "message": str(exc)}, sys.stderr)
        return 1
    except OSError as exc:
        _emit({"error": "io", "message": f"{exc.strerror or exc}: {exc.filename or ''}".strip()}, sys.stderr)
        return 1
    _emit(result)
    if args.command == "gradcheck" and not result["passed"]:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
