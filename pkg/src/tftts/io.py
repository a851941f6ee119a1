"""WAV, MelFile and checkpoint serialisation.

All binary fields are little-endian. The stdlib ``wave`` module cannot read or
write IEEE-float WAV, so RIFF chunks are handled with :mod:`struct` directly.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptFileError, FormatError, InvalidInputError, UnsupportedFormatError
from .mel import MelSpectrogram, NormStats
from .signal import Waveform

_PCM, _FLOAT = 1, 3
_EXTENSIBLE = 0xFFFE


# -- WAV -----------------------------------------------------------------------------


def pcm16_encode(samples: np.ndarray) -> np.ndarray:
    """Scale by 32768, round half away from zero, saturate to the int16 range."""
    scaled = np.asarray(samples, dtype=np.float64) * 32768.0
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(rounded, -32768, 32767).astype("<i2")


def write_wav(path, w: Waveform, bit_depth: int = 16) -> None:
    """Write a mono RIFF/WAVE file, 16-bit PCM or 32-bit IEEE float."""
    if bit_depth == 16:
        fmt_tag, data = _PCM, pcm16_encode(w.samples).tobytes()
    elif bit_depth == 32:
        fmt_tag, data = _FLOAT, w.samples.astype("<f4").tobytes()
    else:
        raise UnsupportedFormatError(f"bit depth {bit_depth} not supported (16 or 32)")
    block = bit_depth // 8
    fmt = struct.pack("<HHIIHH", fmt_tag, 1, w.sample_rate, w.sample_rate * block, block, bit_depth)
    body = b"WAVE" + _chunk(b"fmt ", fmt) + _chunk(b"data", data)
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


def _chunk(tag, payload):
    pad = b"\0" if len(payload) % 2 else b""
    return tag + struct.pack("<I", len(payload)) + payload + pad


def read_wav(path) -> Waveform:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise UnsupportedFormatError(f"{path}: not a RIFF/WAVE file")
    fmt = data = None
    pos = 12
    while pos + 8 <= len(raw):
        tag, size = raw[pos : pos + 4], struct.unpack_from("<I", raw, pos + 4)[0]
        start, end = pos + 8, pos + 8 + size
        if end > len(raw):
            raise CorruptFileError(f"{path}: chunk {tag!r} runs past end of file")
        if tag == b"fmt ":
            fmt = raw[start:end]
        elif tag == b"data":
            data = raw[start:end]
        pos = end + (size & 1)
    if fmt is None or data is None:
        raise CorruptFileError(f"{path}: missing fmt or data chunk")
    if len(fmt) < 16:
        raise CorruptFileError(f"{path}: fmt chunk too short")
    tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == _EXTENSIBLE and len(fmt) >= 26:
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if channels != 1:
        raise UnsupportedFormatError(f"{path}: {channels} channels, only mono is supported")
    if (tag, bits) == (_PCM, 16):
        dtype, scale = "<i2", 1.0 / 32768.0
    elif (tag, bits) == (_FLOAT, 32):
        dtype, scale = "<f4", 1.0
    else:
        raise UnsupportedFormatError(f"{path}: codec {tag} at {bits} bits is not supported")
    width = np.dtype(dtype).itemsize
    if len(data) % width:
        raise CorruptFileError(f"{path}: data chunk is not a whole number of samples")
    samples = np.frombuffer(data, dtype=dtype).astype(np.float64) * scale
    return Waveform(samples, rate)


# -- MelFile -----------------------------------------------------------------------------

MEL_MAGIC = b"MELF"
MEL_VERSION = 1
_MEL_HEADER = struct.Struct("<4sIIIIIIB")  # 29 bytes: 4-byte magic then 25 bytes of fields


def mel_to_bytes(M: MelSpectrogram) -> bytes:
    header = _MEL_HEADER.pack(MEL_MAGIC, MEL_VERSION, M.n_frames, M.n_mels, M.sample_rate,
                              M.hop_length, M.win_length, int(M.normalized))
    parts = [header]
    if M.normalized:
        parts += [M.stats.mean.astype("<f8").tobytes(), M.stats.std.astype("<f8").tobytes()]
    parts.append(np.ascontiguousarray(M.values, dtype="<f8").tobytes())
    return b"".join(parts)


def mel_from_bytes(raw: bytes, name="<bytes>") -> MelSpectrogram:
    if len(raw) < _MEL_HEADER.size:
        raise CorruptFileError(f"{name}: truncated MelFile header")
    magic, version, frames, n_mels, sr, hop, win, flag = _MEL_HEADER.unpack_from(raw)
    if magic != MEL_MAGIC:
        raise FormatError(f"{name}: bad magic {magic!r}")
    if version != MEL_VERSION:
        raise FormatError(f"{name}: unsupported MelFile version {version}")
    if flag not in (0, 1):
        raise FormatError(f"{name}: normalized flag must be 0 or 1, got {flag}")
    stats_len = 2 * n_mels * 8 if flag else 0
    expected = _MEL_HEADER.size + stats_len + frames * n_mels * 8
    if len(raw) != expected:
        raise CorruptFileError(f"{name}: expected {expected} bytes, found {len(raw)}")
    pos = _MEL_HEADER.size
    stats = None
    if flag:
        mean = np.frombuffer(raw, "<f8", n_mels, pos).astype(np.float64)
        std = np.frombuffer(raw, "<f8", n_mels, pos + n_mels * 8).astype(np.float64)
        stats = NormStats(mean, std)
        pos += stats_len
    values = np.frombuffer(raw, "<f8", frames * n_mels, pos).astype(np.float64).reshape(frames, n_mels)
    return MelSpectrogram(values, bool(flag), stats, sr, hop, win)


def write_mel(path, M: MelSpectrogram) -> None:
    Path(path).write_bytes(mel_to_bytes(M))


def read_mel(path) -> MelSpectrogram:
    return mel_from_bytes(Path(path).read_bytes(), str(path))


# -- checkpoints ---------------------------------------------------------------------------

CKPT_MAGIC = b"TFCK"
CKPT_VERSION = 1
_TENSOR, _TEXT = 1, 2


@dataclass
class Checkpoint:
    """Everything needed to resume a run: config text, tensors and counters."""

    config_text: str
    params: dict
    optimizer: dict
    stats: NormStats
    step: int


def _tensor_payload(a):
    a = np.asarray(a, dtype="<f8")
    return struct.pack(f"<I{a.ndim}Q", a.ndim, *a.shape) + a.tobytes()


def _section(kind, name, payload):
    key = name.encode("utf-8")
    return struct.pack("<BH", kind, len(key)) + key + struct.pack("<Q", len(payload)) + payload


def checkpoint_to_bytes(ck: Checkpoint) -> bytes:
    """Tag-length-value sections: ``kind u8, name u16+utf8, length u64, payload``.

    Tensors are ``ndim u32, dims u64 each, f64 values``; text is UTF-8.
    Integers ride along as text sections so no precision is lost.
    """
    sections = [
        _section(_TEXT, "config", ck.config_text.encode("utf-8")),
        _section(_TEXT, "step", str(int(ck.step)).encode()),
        _section(_TENSOR, "stats.mean", _tensor_payload(ck.stats.mean)),
        _section(_TENSOR, "stats.std", _tensor_payload(ck.stats.std)),
    ]
    for name, value in ck.params.items():
        sections.append(_section(_TENSOR, f"param.{name}", _tensor_payload(value)))
    for name, value in ck.optimizer.items():
        if isinstance(value, (int, np.integer)):
            sections.append(_section(_TEXT, f"optim.{name}", str(int(value)).encode()))
        else:
            sections.append(_section(_TENSOR, f"optim.{name}", _tensor_payload(value)))
    return CKPT_MAGIC + struct.pack("<II", CKPT_VERSION, len(sections)) + b"".join(sections)


def checkpoint_from_bytes(raw: bytes, name="<bytes>") -> Checkpoint:
    if raw[:4] != CKPT_MAGIC:
        raise FormatError(f"{name}: not a checkpoint file")
    try:
        version, count = struct.unpack_from("<II", raw, 4)
        if version != CKPT_VERSION:
            raise FormatError(f"{name}: unsupported checkpoint version {version}")
        pos, entries = 12, {}
        for _ in range(count):
            kind, klen = struct.unpack_from("<BH", raw, pos)
            key = raw[pos + 3 : pos + 3 + klen].decode("utf-8")
            (plen,) = struct.unpack_from("<Q", raw, pos + 3 + klen)
            start = pos + 11 + klen
            payload = raw[start : start + plen]
            if len(payload) != plen:
                raise CorruptFileError(f"{name}: section {key!r} truncated")
            entries[key] = _decode(kind, payload, key, name)
            pos = start + plen
        if pos != len(raw):
            raise CorruptFileError(f"{name}: {len(raw) - pos} trailing bytes")
    except struct.error as exc:
        raise CorruptFileError(f"{name}: truncated checkpoint ({exc})") from None
    try:
        return Checkpoint(
            config_text=entries["config"],
            params={k[6:]: v for k, v in entries.items() if k.startswith("param.")},
            optimizer={k[6:]: (int(v) if isinstance(v, str) else v)
                       for k, v in entries.items() if k.startswith("optim.")},
            stats=NormStats(entries["stats.mean"], entries["stats.std"]),
            step=int(entries["step"]),
        )
    except KeyError as exc:
        raise CorruptFileError(f"{name}: missing section {exc}") from None


def _decode(kind, payload, key, name):
    if kind == _TEXT:
        return payload.decode("utf-8")
    if kind != _TENSOR:
        raise FormatError(f"{name}: section {key!r} has unknown kind {kind}")
    (ndim,) = struct.unpack_from("<I", payload)
    shape = struct.unpack_from(f"<{ndim}Q", payload, 4)
    offset = 4 + 8 * ndim
    if len(payload) - offset != 8 * int(np.prod(shape, dtype=np.int64)):
        raise CorruptFileError(f"{name}: tensor {key!r} size does not match its shape")
    return np.frombuffer(payload, "<f8", offset=offset).astype(np.float64).reshape(shape)


def save_checkpoint(path, trainer, config_text: str) -> None:
    ck = Checkpoint(config_text, trainer.params, trainer.optimizer.state_dict(), trainer.stats, trainer.step)
    Path(path).write_bytes(checkpoint_to_bytes(ck))


def load_checkpoint(path) -> Checkpoint:
    return checkpoint_from_bytes(Path(path).read_bytes(), str(path))


def restore_trainer(ck: Checkpoint):
    """Rebuild the trainer a checkpoint came from, positioned to take its next step."""
    from .config import RunConfig
    from .trainer import Trainer

    run = RunConfig.from_text(ck.config_text)
    trainer = Trainer(run.corpus(), run.train_config, run.frontend(), run.shape, ck.stats)
    expected = {k: v.shape for k, v in trainer.params.items()}
    got = {k: v.shape for k, v in ck.params.items()}
    if expected != got:
        raise InvalidInputError("checkpoint tensors do not match the configured model shape")
    trainer.params = {k: np.array(v) for k, v in ck.params.items()}
    trainer.optimizer.load_state_dict(ck.optimizer)
    trainer.step = ck.step
    return trainer
