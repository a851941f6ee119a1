"""Toy attention-based feature predictor.

Encoder: token embedding fed through a gated-recurrent tanh cell, one state per
token. Decoder: at step ``t`` the previous state queries the encoder states
(scaled dot-product attention), the gated cell consumes the previous mel frame
and the context, and a linear layer maps ``[state, context]`` to one
non-overlapping output frame.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import InvalidInputError

PARAM_NAMES = ("emb", "enc_W", "enc_b", "att_Wq", "dec_W", "dec_b", "out_W", "out_b")
_MASK = -1e9


@dataclass(frozen=True)
class ModelShape:
    vocab_size: int = 16
    n_mels: int = 80
    embed_dim: int = 32
    enc_dim: int = 64
    dec_dim: int = 64


def init_params(shape: ModelShape, seed: int = 0, zero: bool = False) -> dict:
    """Glorot-uniform weights, zero biases; ``zero=True`` gives an all-zero model."""
    E, H, D, M = shape.embed_dim, shape.enc_dim, shape.dec_dim, shape.n_mels
    dims = {
        "emb": (shape.vocab_size, E),
        "enc_W": (E + H, 2 * H),
        "enc_b": (2 * H,),
        "att_Wq": (D, H),
        "dec_W": (M + H + D, 2 * D),
        "dec_b": (2 * D,),
        "out_W": (D + H, M),
        "out_b": (M,),
    }
    rng = np.random.default_rng(seed)
    params = {}
    for name in PARAM_NAMES:
        size = dims[name]
        if zero or len(size) == 1:
            params[name] = np.zeros(size)
        elif name == "emb":
            params[name] = rng.normal(0.0, 1.0 / np.sqrt(E), size=size)
        else:
            limit = np.sqrt(6.0 / (size[0] + size[1]))
            params[name] = rng.uniform(-limit, limit, size=size)
    return params


def shape_of(params) -> ModelShape:
    V, E = ad.value_of(params["emb"]).shape
    H = ad.value_of(params["enc_b"]).shape[0] // 2
    D = ad.value_of(params["dec_b"]).shape[0] // 2
    M = ad.value_of(params["out_b"]).shape[0]
    return ModelShape(V, M, E, H, D)


def pad_tokens(token_seqs, vocab_size):
    lengths = np.array([len(t) for t in token_seqs])
    if lengths.size == 0 or lengths.min() < 1:
        raise InvalidInputError("token sequences must be non-empty")
    ids = np.zeros((len(token_seqs), lengths.max()), dtype=np.int64)
    for b, seq in enumerate(token_seqs):
        seq = np.asarray(seq, dtype=np.int64)
        if seq.min() < 0 or seq.max() >= vocab_size:
            raise InvalidInputError(f"token id outside vocabulary of {vocab_size}")
        ids[b, : len(seq)] = seq
    mask = np.arange(ids.shape[1])[None, :] < lengths[:, None]
    return ids, mask


def encode(params, ids, mask):
    """Run the encoder over padded ``(B, T)`` token ids; returns ``(B, T, H)`` states."""
    H = ad.value_of(params["enc_b"]).shape[0] // 2
    B, T = ids.shape
    h = np.zeros((B, H))
    states = []
    for t in range(T):
        x = ad.getitem(params["emb"], ids[:, t])
        pre = ad.add(ad.matmul(ad.concat([x, h], axis=-1), params["enc_W"]), params["enc_b"])
        h_new = ad.gated_update(pre, h)
        keep = mask[:, t : t + 1].astype(np.float64)
        # padded positions carry the previous state through unchanged
        h = h_new if keep.all() else ad.add(h, ad.mul(ad.sub(h_new, h), keep))
        states.append(h)
    return ad.stack(states, axis=1)


def decode_step(params, state, prev_frame, keys, bias):
    """Returns ``[new_state, context]`` side by side, ``(B, D + H)``."""
    return ad.decoder_cell(
        state, prev_frame, keys, bias, params["att_Wq"], params["dec_W"], params["dec_b"]
    )


def project(params, state_context):
    return ad.add(ad.matmul(state_context, params["out_W"]), params["out_b"])


def forward(params, token_seqs, teacher=None, max_frames=None):
    """Predict normalised mel frames for a batch of token sequences.

    With ``teacher`` (``(B, T, n_mels)``, padded) the decoder is fed the target
    frame ``y[t-1]`` at step ``t`` (a zero frame at ``t = 0``) and returns
    ``(B, T, n_mels)``. Without it, decoding feeds back its own output for
    ``max_frames`` steps.
    """
    shape = shape_of(params)
    ids, mask = pad_tokens(token_seqs, shape.vocab_size)
    keys = encode(params, ids, mask)
    bias = np.where(mask, 0.0, _MASK)
    B = ids.shape[0]
    state = np.zeros((B, shape.dec_dim))
    prev = np.zeros((B, shape.n_mels))

    if teacher is not None:
        teacher = np.asarray(teacher, dtype=np.float64)
        if teacher.ndim != 3 or teacher.shape[0] != B or teacher.shape[2] != shape.n_mels:
            raise InvalidInputError(f"teacher must be (B, T, {shape.n_mels}), got {teacher.shape}")
        n_steps = teacher.shape[1]
    else:
        n_steps = max_frames
    if not n_steps or n_steps < 1:
        raise InvalidInputError("nothing to decode: frame count / cap must be >= 1")

    if teacher is not None:
        # step t consumes y[t-1]; the go-frame for t = 0 is zero
        prev_frames = np.concatenate([prev[:, None], teacher[:, :-1]], axis=1)
        steps = ad.decoder_unroll(prev_frames, keys, bias, params["att_Wq"], params["dec_W"], params["dec_b"])
        return project(params, steps)

    D = shape.dec_dim
    outputs = []
    for _ in range(n_steps):
        sc = decode_step(params, state, prev, keys, bias)
        state = ad.getitem(sc, (slice(None), slice(0, D)))
        prev = project(params, sc)
        outputs.append(prev)
    return ad.stack(outputs, axis=1)
