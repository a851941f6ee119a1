"""Reverse-mode differentiation on an append-only tape.

Values are numpy arrays (float64 or complex128). For complex intermediates the
adjoint stored for ``z = x + iy`` is ``dL/dx + i dL/dy``, so for a real loss
``dL = Re(conj(adj) * dz)``. Linear maps therefore back-propagate through their
Hermitian adjoint.

Every primitive also accepts plain arrays; if none of its inputs is a tracked
:class:`DiffValue` it just returns the numpy result, so inference code can run
the same functions without building a tape.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


class Tape:
    """Append-only record of primitive applications.

    Node ``i`` only references nodes ``< i``, so reverse iteration is a valid
    topological order.
    """

    def __init__(self):
        self.values = []
        self.parents = []
        self.vjps = []

    def __len__(self):
        return len(self.values)

    def variable(self, value) -> "DiffValue":
        value = _as_array(value)
        return self._push(value, (), ())

    def _push(self, value, parents, vjps):
        self.values.append(value)
        self.parents.append(parents)
        self.vjps.append(vjps)
        return DiffValue(value, len(self.values) - 1, self)


class DiffValue:
    """An array value, optionally tied to a tape node (``node_id is None`` = constant)."""

    __slots__ = ("value", "node_id", "tape")
    __array_ufunc__ = None

    def __init__(self, value, node_id=None, tape=None):
        self.value = value
        self.node_id = node_id
        self.tape = tape

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"DiffValue(node={self.node_id}, shape={self.shape}, dtype={self.dtype})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return transpose(self)


def value_of(x):
    return x.value if isinstance(x, DiffValue) else x


def _as_array(x):
    a = np.asarray(x)
    if np.iscomplexobj(a):
        return a.astype(np.complex128, copy=False)
    return a.astype(np.float64, copy=False)


def _tracked(x):
    return isinstance(x, DiffValue) and x.node_id is not None


def _record(value, inputs, vjps):
    """Attach ``value`` to the tape of the first tracked input, if any."""
    tape = None
    parents = []
    rules = []
    for x, vjp in zip(inputs, vjps):
        if _tracked(x):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise InvalidInputError("inputs belong to different tapes")
            parents.append(x.node_id)
            rules.append(vjp)
    if tape is None:
        return value
    return tape._push(value, tuple(parents), tuple(rules))


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


@dataclass
class GradientMap:
    """Adjoints keyed by node id; unreachable nodes report zeros."""

    tape: Tape
    adjoints: dict = field(default_factory=dict)

    def __getitem__(self, key):
        node_id = key.node_id if isinstance(key, DiffValue) else int(key)
        if node_id in self.adjoints:
            return self.adjoints[node_id]
        return np.zeros_like(self.tape.values[node_id])

    def __contains__(self, key):
        node_id = key.node_id if isinstance(key, DiffValue) else int(key)
        return node_id in self.adjoints


def backward(tape: Tape, loss: DiffValue) -> GradientMap:
    """Propagate adjoints from scalar ``loss`` back through ``tape``."""
    if not _tracked(loss) or loss.tape is not tape:
        raise InvalidInputError("loss is not a node of this tape")
    if loss.value.size != 1:
        raise InvalidInputError(f"loss must be scalar, got shape {loss.shape}")
    adj = {loss.node_id: np.ones_like(loss.value)}
    values, parents, vjps = tape.values, tape.parents, tape.vjps
    for i in range(loss.node_id, -1, -1):
        g = adj.get(i)
        if g is None or not parents[i]:
            continue
        for p, vjp in zip(parents[i], vjps[i]):
            gp = vjp(g)
            target = values[p]
            if np.iscomplexobj(gp) and not np.iscomplexobj(target):
                gp = gp.real
            gp = _unbroadcast(gp, target.shape)
            if p in adj:
                adj[p] = adj[p] + gp
            else:
                adj[p] = gp
    return GradientMap(tape, adj)


# -- elementwise arithmetic ---------------------------------------------------

def add(a, b):
    return _record(value_of(a) + value_of(b), (a, b), (lambda g: g, lambda g: g))


def sub(a, b):
    return _record(value_of(a) - value_of(b), (a, b), (lambda g: g, lambda g: -g))


def neg(a):
    return _record(-value_of(a), (a,), (lambda g: -g,))


def mul(a, b):
    va, vb = value_of(a), value_of(b)
    return _record(va * vb, (a, b), (lambda g: g * np.conj(vb), lambda g: g * np.conj(va)))


def div(a, b):
    va, vb = value_of(a), value_of(b)
    out = va / vb
    return _record(
        out,
        (a, b),
        (lambda g: g / np.conj(vb), lambda g: -g * np.conj(out / vb)),
    )


def exp(a):
    out = np.exp(value_of(a))
    return _record(out, (a,), (lambda g: g * out,))


def log10(a):
    va = value_of(a)
    return _record(np.log10(va), (a,), (lambda g: g / (va * np.log(10.0)),))


def tanh(a):
    out = np.tanh(value_of(a))
    return _record(out, (a,), (lambda g: g * (1.0 - out * out),))


def sigmoid(a):
    out = 0.5 * (1.0 + np.tanh(0.5 * value_of(a)))
    return _record(out, (a,), (lambda g: g * out * (1.0 - out),))


def clamp(a, lo=None, hi=None):
    """Clip to ``[lo, hi]``; the subgradient is zero wherever the clip is active."""
    va = value_of(a)
    out = np.clip(va, lo, hi)
    active = np.ones(va.shape, dtype=bool)
    if lo is not None:
        active &= va > lo
    if hi is not None:
        active &= va < hi
    return _record(out, (a,), (lambda g: g * active,))


def modulus(z):
    """``|z|``; subgradient 0 at ``z = 0``."""
    vz = value_of(z)
    out = np.abs(vz)
    safe = np.where(out > 0, out, 1.0)
    unit = np.where(out > 0, vz / safe, 0.0)
    return _record(out, (z,), (lambda g: g * unit,))


def polar(mag, phase):
    """``mag * exp(i * phase)`` from real magnitude and phase."""
    vm, vp = value_of(mag), value_of(phase)
    rot = np.exp(1j * vp)
    out = vm * rot
    return _record(
        out,
        (mag, phase),
        (lambda g: (g * np.conj(rot)).real, lambda g: (np.conj(g) * 1j * out).real),
    )


def real(z):
    return _record(np.real(value_of(z)).copy(), (z,), (lambda g: g.astype(np.float64),))


# -- reductions -----------------------------------------------------------------

def sum(a, axis=None, keepdims=False):
    va = value_of(a)
    out = np.sum(va, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, va.shape)

    return _record(np.asarray(out), (a,), (vjp,))


def mean(a, axis=None, keepdims=False):
    va = value_of(a)
    count = va.size if axis is None else np.prod([va.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def dot(a, b):
    """Real inner product of two equally shaped real arrays."""
    va, vb = value_of(a), value_of(b)
    out = np.asarray(np.vdot(va.ravel(), vb.ravel()).real)
    return _record(out, (a, b), (lambda g: g * vb, lambda g: g * va))


def norm_sq(a):
    """``sum(|a|**2)``."""
    va = value_of(a)
    out = np.asarray(np.vdot(va.ravel(), va.ravel()).real)
    return _record(out, (a,), (lambda g: 2.0 * g * va,))


# -- linear algebra / shape -----------------------------------------------------

def matmul(a, b):
    va, vb = value_of(a), value_of(b)
    if va.ndim < 2 or vb.ndim < 2:
        raise InvalidInputError("matmul needs operands with ndim >= 2")
    if va.shape[-1] != vb.shape[-2]:
        raise InvalidInputError(f"matmul shape mismatch {va.shape} @ {vb.shape}")
    out = va @ vb
    return _record(
        out,
        (a, b),
        (
            lambda g: g @ np.conj(np.swapaxes(vb, -1, -2)),
            lambda g: np.conj(np.swapaxes(va, -1, -2)) @ g,
        ),
    )


def transpose(a, axes=None):
    va = value_of(a)
    out = np.transpose(va, axes)
    inv = None if axes is None else np.argsort(axes)
    return _record(out, (a,), (lambda g: np.transpose(g, inv),))


def reshape(a, shape):
    va = value_of(a)
    return _record(va.reshape(shape), (a,), (lambda g: g.reshape(va.shape),))


def getitem(a, idx):
    va = value_of(a)
    out = va[idx]

    basic = all(isinstance(i, (slice, int)) for i in (idx if isinstance(idx, tuple) else (idx,)))

    def vjp(g):
        full = np.zeros(va.shape, dtype=np.result_type(va.dtype, g.dtype))
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return full

    return _record(np.array(out), (a,), (vjp,))


def stack(items, axis=0):
    vals = [value_of(x) for x in items]
    out = np.stack(vals, axis=axis)
    vjps = [(lambda g, k=k: np.take(g, k, axis=axis)) for k in range(len(items))]
    return _record(out, tuple(items), tuple(vjps))


def concat(items, axis=-1):
    vals = [value_of(x) for x in items]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    vjps = [
        (lambda g, lo=lo, hi=hi: np.take(g, np.arange(lo, hi), axis=axis))
        for lo, hi in zip(bounds[:-1], bounds[1:])
    ]
    return _record(out, tuple(items), tuple(vjps))


def softmax(a, axis=-1):
    va = value_of(a)
    e = np.exp(va - va.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)
    return _record(
        out, (a,), (lambda g: out * (g - np.sum(g * out, axis=axis, keepdims=True)),)
    )


# -- Fourier / framing ------------------------------------------------------------

def rfft(x, n):
    """One-sided DFT of the last axis, zero-padded (or truncated) to ``n``."""
    vx = value_of(x)
    m = vx.shape[-1]
    out = np.fft.rfft(vx, n=n, axis=-1)

    def vjp(g):
        # adjoint of the one-sided DFT: sum_k Re(g_k e^{+2 pi i k t / n})
        back = _rfft_adjoint(g, n)
        if m <= n:
            return back[..., :m]
        pad = np.zeros(back.shape[:-1] + (m - n,))
        return np.concatenate([back, pad], axis=-1)

    return _record(out, (x,), (vjp,))


def irfft(X, n):
    """Real inverse of a one-sided spectrum (imaginary DC/Nyquist parts ignored)."""
    vX = value_of(X)
    out = np.fft.irfft(vX, n=n, axis=-1)
    bins = vX.shape[-1]

    def vjp(g):
        G = _irfft_adjoint(g, n)
        if G.shape[-1] < bins:
            G = np.concatenate([G, np.zeros(G.shape[:-1] + (bins - G.shape[-1],))], axis=-1)
        return G[..., :bins]

    return _record(out, (X,), (vjp,))


def frame(x, win_length, hop_length):
    """Hop-spaced ``(frames, win_length)`` segments of a 1-D signal."""
    from .signal import frame_signal, overlap_add as _ola

    vx = value_of(x)
    out = frame_signal(vx, win_length, hop_length)
    n_used = (out.shape[0] - 1) * hop_length + win_length

    def vjp(g):
        back = _ola(g, hop_length)
        if n_used < vx.shape[0]:
            back = np.concatenate([back, np.zeros(vx.shape[0] - n_used, dtype=back.dtype)])
        return back

    return _record(out, (x,), (vjp,))


def overlap_add(frames, hop_length):
    """Sum of hop-spaced frames; adjoint of :func:`frame`."""
    from .signal import frame_signal, overlap_add as _ola

    vf = value_of(frames)
    win = vf.shape[1]
    out = _ola(vf, hop_length)
    return _record(out, (frames,), (lambda g: frame_signal(g, win, hop_length),))


# -- fused model primitives -------------------------------------------------------

def gated_update(pre, h):
    """Gated-recurrent state update ``h + z * (c - h)``.

    ``pre`` holds the gate and candidate pre-activations side by side,
    ``(..., 2H)``: ``z = sigmoid(pre[..., :H])``, ``c = tanh(pre[..., H:])``.
    """
    vp, vh = value_of(pre), value_of(h)
    n = vh.shape[-1]
    z = 0.5 * (1.0 + np.tanh(0.5 * vp[..., :n]))
    c = np.tanh(vp[..., n:])
    out = vh + z * (c - vh)

    def vjp_pre(g):
        return np.concatenate([g * (c - vh) * z * (1.0 - z), g * z * (1.0 - c * c)], axis=-1)

    return _record(out, (pre, h), (vjp_pre, lambda g: g * (1.0 - z)))


def attend(query, keys, bias=None):
    """Scaled dot-product attention of one query per batch row.

    ``query`` is ``(B, H)``, ``keys`` ``(B, T, H)``, ``bias`` an additive
    ``(B, T)`` constant (large negative values mask padding). Returns the
    ``(B, H)`` context.
    """
    vq, vk = value_of(query), value_of(keys)
    scale = 1.0 / np.sqrt(vq.shape[-1])
    scores = np.einsum("bth,bh->bt", vk, vq) * scale
    if bias is not None:
        scores = scores + bias
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    alpha = e / e.sum(axis=-1, keepdims=True)
    ctx = np.einsum("bt,bth->bh", alpha, vk)

    def d_scores(g):
        da = np.einsum("bh,bth->bt", g, vk)
        return alpha * (da - np.sum(da * alpha, axis=-1, keepdims=True)) * scale

    def vjp_q(g):
        return np.einsum("bt,bth->bh", d_scores(g), vk)

    def vjp_k(g):
        return alpha[:, :, None] * g[:, None, :] + d_scores(g)[:, :, None] * vq[:, None, :]

    return _record(ctx, (query, keys), (vjp_q, vjp_k))


# -- fused spectral primitives ------------------------------------------------------
# Same maths as composing frame/rfft/irfft/overlap_add, with fewer temporaries.

def _rfft_adjoint(g, n):
    h = g.copy()
    h[..., 1 : (n + 1) // 2] *= 0.5
    return np.fft.irfft(h, n=n, axis=-1) * n


def _irfft_adjoint(g, n):
    G = np.fft.rfft(g, n=n, axis=-1) / n
    G[..., 1 : (n + 1) // 2] *= 2.0
    G[..., 0] = G[..., 0].real
    if n % 2 == 0:
        G[..., n // 2] = G[..., n // 2].real
    return G


def stft(x, cfg, frame_mask=None):
    """Fused ``rfft(frame(x) * window)`` over the last axis of ``x``.

    ``frame_mask`` (``(..., frames, 1)``, 0/1) zeroes frames past each row's
    true length when signals of different lengths are batched with padding.
    """
    from .signal import frame_signal, overlap_add as _ola, window_of

    vx = value_of(x)
    win, hop, n = cfg.win_length, cfg.hop_length, cfg.fft_size
    wnd = window_of(cfg)
    frames = frame_signal(vx, win, hop)
    out = np.fft.rfft(frames * wnd, n=n, axis=-1)
    if frame_mask is not None:
        out *= frame_mask
    n_used = (frames.shape[-2] - 1) * hop + win

    def vjp(g):
        if frame_mask is not None:
            g = g * frame_mask
        back = _ola(_rfft_adjoint(g, n)[..., :win] * wnd, hop)
        if n_used < vx.shape[-1]:
            pad = np.zeros(vx.shape[:-1] + (vx.shape[-1] - n_used,))
            back = np.concatenate([back, pad], axis=-1)
        return back

    return _record(out, (x,), (vjp,))


def istft(X, cfg, inv_norm=None):
    """Fused windowed overlap-add inverse with squared-window normalisation.

    ``inv_norm`` overrides the reciprocal window-square sum (shape of the
    output signal), e.g. per-row norms for padded batches.
    """
    from .signal import frame_signal, inverse_window_norm, overlap_add as _ola, window_of

    vX = value_of(X)
    win, hop, n = cfg.win_length, cfg.hop_length, cfg.fft_size
    wnd = window_of(cfg)
    inv = inverse_window_norm(cfg, vX.shape[-2]) if inv_norm is None else inv_norm
    out = _ola(np.fft.irfft(vX, n=n, axis=-1)[..., :win] * wnd, hop) * inv

    def vjp(g):
        frames = frame_signal(g * inv, win, hop) * wnd
        return _irfft_adjoint(frames, n)

    return _record(out, (X,), (vjp,))


def project_amplitude(X, A):
    """``A * X / |X|`` with phase 0 where ``X == 0`` (zero subgradient in ``X`` there)."""
    vX, vA = value_of(X), value_of(A)
    r = np.abs(vX)
    nz = r > 0
    if nz.all():
        u = vX / r
    else:
        u = np.ones(vX.shape, dtype=np.complex128)
        u[nz] = vX[nz] / r[nz]
    out = vA * u

    def vjp_X(g):
        c = (np.conj(u) * g).real
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(nz, vA / np.where(nz, r, 1.0), 0.0)
        return scale * (g - u * c)

    return _record(out, (X, A), (vjp_X, lambda g: (np.conj(u) * g).real))


def decoder_cell(state, prev, keys, bias, Wq, W, b):
    """One attention + gated-recurrent decoder step as a single node.

    The query ``state @ Wq`` attends over ``keys`` (see :func:`attend`), then
    ``[prev, context, state] @ W + b`` feeds :func:`gated_update`. Returns
    ``[new_state, context]`` concatenated, ``(B, D + H)``.
    """
    vs, vp, vk = value_of(state), value_of(prev), value_of(keys)
    vWq, vW, vb = value_of(Wq), value_of(W), value_of(b)
    D, H, M = vs.shape[-1], vk.shape[-1], vp.shape[-1]
    scale = 1.0 / np.sqrt(H)
    q = vs @ vWq
    scores = np.einsum("bth,bh->bt", vk, q) * scale
    if bias is not None:
        scores = scores + bias
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    alpha = e / e.sum(axis=-1, keepdims=True)
    ctx = np.einsum("bt,bth->bh", alpha, vk)
    inp = np.concatenate([vp, ctx, vs], axis=-1)
    pre = inp @ vW + vb
    z = 0.5 * (1.0 + np.tanh(0.5 * pre[:, :D]))
    c = np.tanh(pre[:, D:])
    new = vs + z * (c - vs)
    out = np.concatenate([new, ctx], axis=-1)

    cache = {}

    def grads(g):
        if cache.get("g") is not g:
            gs, gc = g[:, :D], g[:, D:]
            gpre = np.concatenate([gs * (c - vs) * z * (1.0 - z), gs * z * (1.0 - c * c)], axis=-1)
            ginp = gpre @ vW.T
            gctx = gc + ginp[:, M : M + H]
            da = np.einsum("bh,bth->bt", gctx, vk)
            ds = alpha * (da - np.sum(da * alpha, axis=-1, keepdims=True)) * scale
            gq = np.einsum("bt,bth->bh", ds, vk)
            cache.update(
                g=g,
                state=gs * (1.0 - z) + ginp[:, M + H :] + gq @ vWq.T,
                prev=ginp[:, :M],
                keys=alpha[:, :, None] * gctx[:, None, :] + ds[:, :, None] * q[:, None, :],
                Wq=vs.T @ gq,
                W=inp.T @ gpre,
                b=gpre.sum(axis=0),
            )
        return cache

    return _record(
        out,
        (state, prev, keys, Wq, W, b),
        tuple((lambda g, k=k: grads(g)[k]) for k in ("state", "prev", "keys", "Wq", "W", "b")),
    )


def decoder_unroll(prev_frames, keys, bias, Wq, W, b):
    """Teacher-forced run of :func:`decoder_cell` over every step as one node.

    ``prev_frames`` ``(B, T, M)`` is the constant decoder input per step and
    the state starts at zero. Returns the stacked ``[state, context]``
    outputs, ``(B, T, D + H)``. The backward pass is a single reverse loop
    with the parameter gradients summed over steps afterwards.
    """
    frames = np.asarray(value_of(prev_frames), dtype=np.float64)
    vk, vWq, vW, vb = value_of(keys), value_of(Wq), value_of(W), value_of(b)
    B, T, M = frames.shape
    H, D = vk.shape[-1], vWq.shape[0]
    scale = 1.0 / np.sqrt(H)
    inp = np.empty((B, T, M + H + D))
    inp[:, :, :M] = frames
    alpha = np.empty((B, T, vk.shape[1]))
    q = np.empty((B, T, H))
    z = np.empty((B, T, D))
    c = np.empty((B, T, D))
    out = np.empty((B, T, D + H))
    s = np.zeros((B, D))
    for t in range(T):
        q[:, t] = s @ vWq
        scores = np.einsum("bkh,bh->bk", vk, q[:, t]) * scale
        if bias is not None:
            scores = scores + bias
        e = np.exp(scores - scores.max(axis=-1, keepdims=True))
        a = e / e.sum(axis=-1, keepdims=True)
        alpha[:, t] = a
        ctx = np.einsum("bk,bkh->bh", a, vk)
        inp[:, t, M : M + H] = ctx
        inp[:, t, M + H :] = s
        pre = inp[:, t] @ vW + vb
        zt = 0.5 * (1.0 + np.tanh(0.5 * pre[:, :D]))
        ct = np.tanh(pre[:, D:])
        z[:, t], c[:, t] = zt, ct
        s = s + zt * (ct - s)
        out[:, t, :D] = s
        out[:, t, D:] = ctx
    prev_s = inp[:, :, M + H :]

    cache = {}

    def grads(g):
        if cache.get("g") is g:
            return cache
        gpre = np.empty((B, T, 2 * D))
        gctx = np.empty((B, T, H))
        ds = np.empty_like(alpha)
        carry = np.zeros((B, D))
        WT, WqT = vW.T, vWq.T
        for t in range(T - 1, -1, -1):
            gs = g[:, t, :D] + carry
            zt, ct, st = z[:, t], c[:, t], prev_s[:, t]
            gp = gpre[:, t]
            gp[:, :D] = gs * (ct - st) * zt * (1.0 - zt)
            gp[:, D:] = gs * zt * (1.0 - ct * ct)
            ginp = gp @ WT
            gc = g[:, t, D:] + ginp[:, M : M + H]
            gctx[:, t] = gc
            a = alpha[:, t]
            da = np.einsum("bh,bkh->bk", gc, vk)
            d = a * (da - np.sum(da * a, axis=-1, keepdims=True)) * scale
            ds[:, t] = d
            gq = np.einsum("bk,bkh->bh", d, vk)
            carry = gs * (1.0 - zt) + ginp[:, M + H :] + gq @ WqT
        gq_all = np.einsum("btk,bkh->bth", ds, vk)
        cache.update(
            g=g,
            keys=np.einsum("btk,bth->bkh", alpha, gctx) + np.einsum("btk,bth->bkh", ds, q),
            Wq=prev_s.reshape(-1, D).T @ gq_all.reshape(-1, H),
            W=inp.reshape(-1, inp.shape[-1]).T @ gpre.reshape(-1, 2 * D),
            b=gpre.sum(axis=(0, 1)),
        )
        return cache

    return _record(
        out,
        (keys, Wq, W, b),
        tuple((lambda g, k=k: grads(g)[k]) for k in ("keys", "Wq", "W", "b")),
    )
