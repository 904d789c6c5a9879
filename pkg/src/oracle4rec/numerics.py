"""Numeric core: a small reverse-mode tape over numpy arrays plus the
standalone primitives everything else is built from (real FFT along the
sequence axis, layer normalization, softmax, inverted dropout, Adam, and a
finite-difference gradient checker).

Every trainable operation in this package goes through the tape, so analytic
gradients exist for all parameters and inputs.  Gradient checks run the tape
in float64; training defaults to float32.

The low-pass filter used by the encoders is linear and self-adjoint, so its
backward pass applies the same filter to the upstream gradient instead of
differentiating through complex arithmetic.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .errors import NumericError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


# ---------------------------------------------------------------------------
# reverse-mode tape
# ---------------------------------------------------------------------------

class Tensor:
    """A node in the computation graph wrapping a numpy array.

    ``data`` is never copied on construction; parameter tensors alias the
    arrays held by the model's parameter store.  ``grad`` is populated by
    :func:`backward` and has the same shape as ``data``.
    """

    __slots__ = ("data", "grad", "parents", "bw", "requires_grad")

    def __init__(self, data, requires_grad=False, parents=(), bw=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.bw = bw

    @property
    def shape(self):
        return self.data.shape

    # arithmetic sugar; scalars and arrays are wrapped as constants
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor division is only supported by scalars")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def param(data):
    """Leaf tensor that accumulates gradients (aliases ``data``)."""
    return Tensor(data, requires_grad=True)


def const(data):
    return Tensor(data, requires_grad=False)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _acc(t, g):
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(root, seed=None):
    """Run reverse-mode accumulation from a scalar (or seeded) root node."""
    topo = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.data) if seed is None else seed
    for node in reversed(topo):
        if node.bw is not None and node.grad is not None:
            node.bw(node.grad)


def _node(data, parents, bw):
    req = any(p.requires_grad for p in parents)
    if not req:
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=tuple(parents), bw=bw)


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = _wrap(a), _wrap(b)
    out = a.data + b.data

    def bw(g):
        _acc(a, _unbroadcast(g, a.data.shape))
        _acc(b, _unbroadcast(g, b.data.shape))

    return _node(out, (a, b), bw)


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    out = a.data - b.data

    def bw(g):
        _acc(a, _unbroadcast(g, a.data.shape))
        _acc(b, _unbroadcast(-g, b.data.shape))

    return _node(out, (a, b), bw)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    out = a.data * b.data

    def bw(g):
        _acc(a, _unbroadcast(g * b.data, a.data.shape))
        _acc(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out, (a, b), bw)


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    out = a.data @ b.data

    def bw(g):
        if a.requires_grad:
            _acc(a, _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape))
        if b.requires_grad:
            _acc(b, _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape))

    return _node(out, (a, b), bw)


def transpose_last(a):
    out = a.data.swapaxes(-1, -2)

    def bw(g):
        _acc(a, g.swapaxes(-1, -2))

    return _node(out, (a,), bw)


def tsum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _acc(a, np.broadcast_to(g, a.data.shape).copy())

    return _node(out, (a,), bw)


def tmean(a, axis=None, keepdims=False):
    out = a.data.mean(axis=axis, keepdims=keepdims)
    scale = a.data.size / out.size

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _acc(a, np.broadcast_to(g, a.data.shape) / scale)

    return _node(out, (a,), bw)


def sigmoid(a):
    # clip keeps exp() in range; saturated values round to {0, 1} anyway
    z = np.clip(a.data, -60.0, 60.0)
    y = 1.0 / (1.0 + np.exp(-z))

    def bw(g):
        _acc(a, g * y * (1.0 - y))

    return _node(y, (a,), bw)


def tanh_t(a):
    y = np.tanh(a.data)

    def bw(g):
        _acc(a, g * (1.0 - y * y))

    return _node(y, (a,), bw)


def gelu(a):
    x = a.data
    phi_cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    y = x * phi_cdf

    def bw(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        _acc(a, g * (phi_cdf + x * pdf))

    return _node(y, (a,), bw)


def log_t(a):
    y = np.log(a.data)

    def bw(g):
        _acc(a, g / a.data)

    return _node(y, (a,), bw)


def exp_t(a):
    y = np.exp(a.data)

    def bw(g):
        _acc(a, g * y)

    return _node(y, (a,), bw)


def sqrt_t(a):
    y = np.sqrt(a.data)

    def bw(g):
        _acc(a, g * 0.5 / y)

    return _node(y, (a,), bw)


def clip_t(a, lo, hi):
    y = np.clip(a.data, lo, hi)

    def bw(g):
        inside = (a.data > lo) & (a.data < hi)
        _acc(a, g * inside)

    return _node(y, (a,), bw)


def gather(table, idx):
    """Row lookup ``table[idx]``; backward scatter-adds duplicate indices."""
    idx = np.asarray(idx)
    out = table.data[idx]

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        _acc(table, gt)

    return _node(out, (table,), bw)


def gather_rows(x, idx):
    """Per-batch row selection: x (B,L,d), idx (B,K) -> (B,K,d)."""
    idx = np.asarray(idx)
    out = np.take_along_axis(x.data, idx[..., None], axis=1)

    def bw(g):
        gx = np.zeros_like(x.data)
        bsz, seqlen, dim = x.data.shape
        flat = gx.reshape(bsz * seqlen, dim)
        rows = (np.arange(bsz)[:, None] * seqlen + idx).reshape(-1)
        np.add.at(flat, rows, g.reshape(-1, dim))
        _acc(x, gx)

    return _node(out, (x,), bw)


def row_at(x, i):
    """x (B,L,d) -> (B,d), the row at sequence position ``i``."""
    out = x.data[:, i, :]

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[:, i, :] = g
        _acc(x, gx)

    return _node(out, (x,), bw)


def stack_rows(tensors):
    """Stack (B,d) tensors into (B,L,d) along axis 1."""
    out = np.stack([t.data for t in tensors], axis=1)

    def bw(g):
        for j, t in enumerate(tensors):
            _acc(t, g[:, j, :])

    return _node(out, tuple(tensors), bw)


def expand_mid(x, k):
    """x (B,d) -> (B,k,d) by repetition; backward sums the middle axis."""
    out = np.broadcast_to(x.data[:, None, :], (x.data.shape[0], k, x.data.shape[1])).copy()

    def bw(g):
        _acc(x, g.sum(axis=1))

    return _node(out, (x,), bw)


def softmax(a):
    """Softmax over the last axis.  -inf entries map to exact zeros."""
    m = np.max(a.data, axis=-1, keepdims=True)
    e = np.exp(a.data - m)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        _acc(a, (g - inner) * y)

    return _node(y, (a,), bw)


def log_softmax(a):
    m = np.max(a.data, axis=-1, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - lse

    def bw(g):
        p = np.exp(y)
        _acc(a, g - p * g.sum(axis=-1, keepdims=True))

    return _node(y, (a,), bw)


def layer_norm_t(x, gain, bias, eps=1e-8):
    """Row-wise layer norm over the last axis with learned affine."""
    gain, bias = _wrap(gain), _wrap(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    sigma = np.sqrt(var + eps)
    xhat = xc / sigma
    out = xhat * gain.data + bias.data

    def bw(g):
        if gain.requires_grad:
            _acc(gain, _unbroadcast(g * xhat, gain.data.shape))
        if bias.requires_grad:
            _acc(bias, _unbroadcast(g, bias.data.shape))
        if x.requires_grad:
            gh = g * gain.data
            term = gh - gh.mean(axis=-1, keepdims=True) \
                - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
            _acc(x, term / sigma)

    return _node(out, (x, gain, bias), bw)


def low_pass(x, keep):
    """Boolean low-pass along axis 1 of (B,L,d): irfft(keep * rfft(x)).

    The transform is an orthogonal projector, so the backward pass is the
    same filter applied to the upstream gradient.
    """
    length = x.data.shape[1]
    k = keep[None, :, None]
    out = np.fft.irfft(np.fft.rfft(x.data, axis=1) * k, n=length, axis=1)
    out = out.astype(x.data.dtype, copy=False)

    def bw(g):
        gx = np.fft.irfft(np.fft.rfft(g, axis=1) * k, n=length, axis=1)
        _acc(x, gx.astype(x.data.dtype, copy=False))

    return _node(out, (x,), bw)


def complex_filter(x, w):
    """Learnable frequency-domain filter along axis 1 of (B,L,d).

    ``w`` holds the complex weights as a real (c,d,2) array (re, im).
    """
    length = x.data.shape[1]
    wc = w.data[..., 0] + 1j * w.data[..., 1]
    spec_x = np.fft.rfft(x.data, axis=1)
    out = np.fft.irfft(spec_x * wc[None], n=length, axis=1)
    out = out.astype(x.data.dtype, copy=False)

    def bw(g):
        spec_g = np.fft.rfft(g, axis=1)
        if x.requires_grad:
            gx = np.fft.irfft(spec_g * np.conj(wc)[None], n=length, axis=1)
            _acc(x, gx.astype(x.data.dtype, copy=False))
        if w.requires_grad:
            # bins other than DC (and Nyquist, for even L) appear twice in
            # the implicit Hermitian extension
            c = wc.shape[0]
            s = np.full(c, 2.0)
            s[0] = 1.0
            if length % 2 == 0:
                s[-1] = 1.0
            gw = (spec_g * np.conj(spec_x)).sum(axis=0) * (s[:, None] / length)
            _acc(w, np.stack([gw.real, gw.imag], axis=-1).astype(w.data.dtype, copy=False))

    return _node(out, (x, w), bw)


# ---------------------------------------------------------------------------
# standalone primitives (array in, array out)
# ---------------------------------------------------------------------------

def rfft_seq(mat):
    """Column-wise real DFT along the sequence axis of an (L, d) matrix.

    Returns ``(spectrum, freq)`` where spectrum is complex (c, d) with
    c = floor(L/2)+1 and freq[k] = k/L in cycles per step.
    """
    mat = np.asarray(mat)
    if not np.all(np.isfinite(mat)):
        raise NumericError("rfft_seq: input contains non-finite values")
    spectrum = np.fft.rfft(mat, axis=0)
    freq = np.arange(spectrum.shape[0]) / mat.shape[0]
    return spectrum, freq


def irfft_seq(spectrum, length):
    """Inverse of :func:`rfft_seq` for a known sequence length."""
    spectrum = np.asarray(spectrum)
    if spectrum.shape[0] != length // 2 + 1:
        raise NumericError(
            f"irfft_seq: spectrum has {spectrum.shape[0]} bins, "
            f"expected {length // 2 + 1} for length {length}"
        )
    return np.fft.irfft(spectrum, n=length, axis=0)


def layer_norm(x, gain, bias, eps=1e-8):
    """(x - mean) / sqrt(var + eps), then elementwise gain and bias."""
    x = np.asarray(x, dtype=float)
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def softmax_rows(mat):
    """Row-wise softmax; -inf entries are mask sentinels mapping to 0."""
    mat = np.asarray(mat, dtype=float)
    if np.isnan(mat).any() or np.isposinf(mat).any():
        raise NumericError("softmax_rows: input must be finite or -inf")
    if np.all(np.isneginf(mat), axis=-1).any():
        raise NumericError("softmax_rows: a row is entirely -inf")
    m = np.max(mat, axis=-1, keepdims=True)
    e = np.exp(mat - m)
    return e / e.sum(axis=-1, keepdims=True)


def dropout(x, p, rng, training):
    """Inverted dropout: identity at inference, survivors scaled by 1/(1-p)."""
    if not training or p == 0.0:
        return np.asarray(x)
    return np.asarray(x) * dropout_mask(np.shape(x), p, rng, np.asarray(x).dtype)


def dropout_mask(shape, p, rng, dtype=np.float64):
    keep = rng.random(shape) >= p
    return (keep / (1.0 - p)).astype(dtype)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class AdamState:
    """First/second moment accumulators shaped like the parameters."""

    def __init__(self, params):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.step = 0


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update, in place on ``params``.

    Returns ``(params, state)`` for convenience.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise NumericError(
                f"adam_step: gradient shape {g.shape} != parameter shape "
                f"{p.shape} for '{name}'"
            )
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype, copy=False)
    return params, state


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def check_gradients(loss_fn, params, step=1e-5, max_entries_per_param=None, rng=None):
    """Compare analytic gradients with central finite differences.

    ``loss_fn(params) -> (loss, grads)`` where grads maps parameter names to
    arrays.  Parameters should be float64.  Returns a report dict with the
    worst parameter block; ``max_entries_per_param`` optionally subsamples
    coordinates of large blocks (seeded via ``rng``).
    """
    loss0, grads = loss_fn(params)
    if not np.isfinite(loss0):
        raise NumericError("check_gradients: loss is not finite")
    report = {"loss": float(loss0), "per_param": {}, "max_rel_error": 0.0,
              "worst_param": None}
    for name in sorted(grads):
        p = params[name]
        flat = p.reshape(-1)
        idxs = np.arange(flat.size)
        if max_entries_per_param is not None and flat.size > max_entries_per_param:
            picker = rng if rng is not None else np.random.default_rng(0)
            idxs = picker.choice(flat.size, size=max_entries_per_param, replace=False)
        analytic = grads[name].reshape(-1)
        worst = 0.0
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + step
            hi, _ = loss_fn(params)
            flat[i] = orig - step
            lo, _ = loss_fn(params)
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * step)
            a = analytic[i]
            rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-4)
            worst = max(worst, rel)
        report["per_param"][name] = worst
        if worst > report["max_rel_error"]:
            report["max_rel_error"] = worst
            report["worst_param"] = name
    return report
