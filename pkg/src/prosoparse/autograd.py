"""Minimal reverse-mode autodiff over numpy arrays.

A ``Tape`` records every op applied to its ``Var`` nodes as a flat list of
backward closures; ``Tape.backward`` replays the list in reverse.  Storage
is float32 by default (float64 available for gradient checking); softmax
and layer_norm reduce in float64 regardless.  There is no broadcasting
beyond bias/vector-over-rows; shapes are validated on every op.

Independent tapes share nothing except read-only parameter values, so
separate sentences can be processed concurrently.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError


class Parameter:
    """Named trainable array with a persistent gradient buffer."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name, value):
        self.name = name
        self.value = np.ascontiguousarray(value)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0

    def astype(self, dtype):
        clone = Parameter(self.name, self.value.astype(dtype))
        return clone

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Var:
    """A node on a tape: forward value plus a lazily allocated gradient."""

    __slots__ = ("value", "grad", "tape")

    def __init__(self, value, tape):
        self.value = value
        self.grad = None
        self.tape = tape

    @property
    def shape(self):
        return self.value.shape


class Tape:
    """One recorded computation (typically: one sentence's forward pass)."""

    def __init__(self, rng=None, train=False, dtype=np.float32):
        self.rng = rng
        self.train = train
        self.dtype = np.dtype(dtype)
        self._ops = []
        self._watched = {}

    def constant(self, value):
        return Var(np.asarray(value, dtype=self.dtype), self)

    def watch(self, param):
        """Leaf Var for a Parameter; backward() accumulates into param.grad."""
        entry = self._watched.get(id(param))
        if entry is None:
            entry = (param, Var(param.value, self))
            self._watched[id(param)] = entry
        return entry[1]

    def _record(self, fn):
        self._ops.append(fn)

    def backward(self, loss, seed=1.0):
        """Backpropagate d(seed * loss) into every watched Parameter's grad."""
        if loss.tape is not self:
            raise NumericError("backward() on a Var from a different tape")
        if loss.value.shape != ():
            raise ShapeError("backward", loss.value.shape)
        loss.grad = np.asarray(seed, dtype=self.dtype)
        for fn in reversed(self._ops):
            fn()
        for param, var in self._watched.values():
            if var.grad is not None:
                param.grad += var.grad


def _accum(var, g):
    if var.grad is None:
        var.grad = np.array(g, dtype=var.value.dtype, copy=True)
    else:
        var.grad += g


def _same_tape(op, *vars_):
    tape = vars_[0].tape
    for v in vars_[1:]:
        if v.tape is not tape:
            raise NumericError(f"{op}: operands recorded on different tapes")
    return tape


def add(a, b):
    tape = _same_tape("add", a, b)
    if a.value.shape != b.value.shape:
        raise ShapeError("add", a.value.shape, b.value.shape)
    out = Var(a.value + b.value, tape)

    def bwd():
        if out.grad is None:
            return
        _accum(a, out.grad)
        _accum(b, out.grad)

    tape._record(bwd)
    return out


def sub(a, b):
    tape = _same_tape("sub", a, b)
    if a.value.shape != b.value.shape:
        raise ShapeError("sub", a.value.shape, b.value.shape)
    out = Var(a.value - b.value, tape)

    def bwd():
        if out.grad is None:
            return
        _accum(a, out.grad)
        _accum(b, -out.grad)

    tape._record(bwd)
    return out


def add_bias(x, b):
    tape = _same_tape("add_bias", x, b)
    if x.value.ndim != 2 or b.value.ndim != 1 or x.value.shape[1] != b.value.shape[0]:
        raise ShapeError("add_bias", x.value.shape, b.value.shape)
    out = Var(x.value + b.value[None, :], tape)

    def bwd():
        if out.grad is None:
            return
        _accum(x, out.grad)
        _accum(b, out.grad.sum(axis=0))

    tape._record(bwd)
    return out


def mul(a, b):
    """Elementwise product; ``b`` may be a vector broadcast over rows of a matrix."""
    tape = _same_tape("mul", a, b)
    if a.value.shape == b.value.shape:
        out = Var(a.value * b.value, tape)

        def bwd():
            if out.grad is None:
                return
            _accum(a, out.grad * b.value)
            _accum(b, out.grad * a.value)

    elif a.value.ndim == 2 and b.value.ndim == 1 and a.value.shape[1] == b.value.shape[0]:
        out = Var(a.value * b.value[None, :], tape)

        def bwd():
            if out.grad is None:
                return
            _accum(a, out.grad * b.value[None, :])
            _accum(b, (out.grad * a.value).sum(axis=0))

    else:
        raise ShapeError("mul", a.value.shape, b.value.shape)
    tape._record(bwd)
    return out


def smul(x, c):
    tape = x.tape
    c = float(c)
    out = Var(x.value * np.asarray(c, dtype=x.value.dtype), tape)

    def bwd():
        if out.grad is None:
            return
        _accum(x, out.grad * c)

    tape._record(bwd)
    return out


def matmul(a, b):
    tape = _same_tape("matmul", a, b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ShapeError("matmul", a.value.shape, b.value.shape)
    out = Var(a.value @ b.value, tape)

    def bwd():
        if out.grad is None:
            return
        _accum(a, out.grad @ b.value.T)
        _accum(b, a.value.T @ out.grad)

    tape._record(bwd)
    return out


def transpose(x):
    tape = x.tape
    if x.value.ndim != 2:
        raise ShapeError("transpose", x.value.shape)
    out = Var(np.ascontiguousarray(x.value.T), tape)

    def bwd():
        if out.grad is None:
            return
        _accum(x, out.grad.T)

    tape._record(bwd)
    return out


def relu(x):
    tape = x.tape
    out = Var(np.maximum(x.value, 0), tape)

    def bwd():
        if out.grad is None:
            return
        _accum(x, out.grad * (x.value > 0))

    tape._record(bwd)
    return out


def softmax(x):
    """Row softmax over the last axis (float64 internally)."""
    tape = x.tape
    v = x.value.astype(np.float64)
    v = v - v.max(axis=-1, keepdims=True)
    e = np.exp(v)
    y64 = e / e.sum(axis=-1, keepdims=True)
    out = Var(y64.astype(x.value.dtype), tape)

    def bwd():
        if out.grad is None:
            return
        g = out.grad.astype(np.float64)
        dot = (g * y64).sum(axis=-1, keepdims=True)
        _accum(x, ((g - dot) * y64).astype(x.value.dtype))

    tape._record(bwd)
    return out


def layer_norm(x, eps=1e-5):
    """Normalize the last axis to zero mean and unit variance (no affine)."""
    tape = x.tape
    v = x.value.astype(np.float64)
    mu = v.mean(axis=-1, keepdims=True)
    var = v.var(axis=-1, keepdims=True)
    std = np.sqrt(var + eps)
    y64 = (v - mu) / std
    out = Var(y64.astype(x.value.dtype), tape)

    def bwd():
        if out.grad is None:
            return
        g = out.grad.astype(np.float64)
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y64).mean(axis=-1, keepdims=True)
        _accum(x, ((g - gm - y64 * gym) / std).astype(x.value.dtype))

    tape._record(bwd)
    return out


def dropout(x, rate):
    """Inverted dropout; identity when the tape is not in training mode."""
    tape = x.tape
    if not tape.train or rate <= 0.0:
        return x
    if rate >= 1.0:
        raise NumericError(f"dropout rate must be < 1, got {rate}")
    if tape.rng is None:
        raise NumericError("dropout requires a tape rng in training mode")
    keep = 1.0 - rate
    mask = (tape.rng.random(x.value.shape) < keep).astype(x.value.dtype) / keep
    out = Var(x.value * mask, tape)

    def bwd():
        if out.grad is None:
            return
        _accum(x, out.grad * mask)

    tape._record(bwd)
    return out


def conv1d(x, w, b):
    """Same-padded 1-D convolution over time.

    x: [time, in_ch]; w: [width, in_ch, out_ch]; b: [out_ch] -> [time, out_ch].
    Zero padding of (width-1)//2 left and width//2 right guarantees at least
    one output position for any input length.
    """
    tape = _same_tape("conv1d", x, w, b)
    if x.value.ndim != 2 or w.value.ndim != 3 or x.value.shape[1] != w.value.shape[1]:
        raise ShapeError("conv1d", x.value.shape, w.value.shape)
    if b.value.ndim != 1 or b.value.shape[0] != w.value.shape[2]:
        raise ShapeError("conv1d bias", b.value.shape, w.value.shape)
    t, cin = x.value.shape
    width, _, cout = w.value.shape
    pad_l = (width - 1) // 2
    pad_r = width // 2
    xp = np.zeros((t + pad_l + pad_r, cin), dtype=x.value.dtype)
    xp[pad_l : pad_l + t] = x.value
    cols = np.empty((t, width * cin), dtype=x.value.dtype)
    for k in range(width):
        cols[:, k * cin : (k + 1) * cin] = xp[k : k + t]
    w2d = w.value.reshape(width * cin, cout)
    out = Var(cols @ w2d + b.value[None, :], tape)

    def bwd():
        if out.grad is None:
            return
        g = out.grad
        _accum(b, g.sum(axis=0))
        _accum(w, (cols.T @ g).reshape(width, cin, cout))
        dcols = g @ w2d.T
        dxp = np.zeros_like(xp)
        for k in range(width):
            dxp[k : k + t] += dcols[:, k * cin : (k + 1) * cin]
        _accum(x, dxp[pad_l : pad_l + t])

    tape._record(bwd)
    return out


def max_pool_time(x):
    """Max over the time axis: [time, ch] -> [1, ch] (first max wins)."""
    tape = x.tape
    if x.value.ndim != 2:
        raise ShapeError("max_pool_time", x.value.shape)
    idx = x.value.argmax(axis=0)
    out = Var(x.value[idx, np.arange(x.value.shape[1])][None, :], tape)

    def bwd():
        if out.grad is None:
            return
        g = np.zeros_like(x.value)
        g[idx, np.arange(x.value.shape[1])] = out.grad[0]
        _accum(x, g)

    tape._record(bwd)
    return out


def take_rows(x, ids):
    """Row gather: x[ids]; the gradient scatter-adds back into x."""
    tape = x.tape
    ids = np.asarray(ids, dtype=np.int64)
    if x.value.ndim != 2 or ids.ndim != 1:
        raise ShapeError("take_rows", x.value.shape, ids.shape)
    if ids.size and (ids.min() < 0 or ids.max() >= x.value.shape[0]):
        raise NumericError(
            f"take_rows: index out of range for {x.value.shape[0]} rows"
        )
    out = Var(x.value[ids], tape)

    def bwd():
        if out.grad is None:
            return
        g = np.zeros_like(x.value)
        np.add.at(g, ids, out.grad)
        _accum(x, g)

    tape._record(bwd)
    return out


def embedding_lookup(tape, table, ids):
    """Rows of a Parameter table; gradients flow into the table."""
    return take_rows(tape.watch(table), ids)


def concat(vars_, axis):
    if not vars_:
        raise ShapeError("concat", ())
    tape = _same_tape("concat", *vars_)
    if axis not in (0, 1):
        raise ShapeError("concat axis", (axis,))
    shapes = [v.value.shape for v in vars_]
    if any(len(s) != 2 for s in shapes):
        raise ShapeError("concat", shapes[0])
    other = 1 - axis
    if any(s[other] != shapes[0][other] for s in shapes):
        raise ShapeError("concat", shapes[0], tuple(shapes))
    out = Var(np.concatenate([v.value for v in vars_], axis=axis), tape)
    sizes = [s[axis] for s in shapes]
    offsets = np.cumsum([0] + sizes)

    def bwd():
        if out.grad is None:
            return
        for v, lo, hi in zip(vars_, offsets[:-1], offsets[1:]):
            if axis == 0:
                _accum(v, out.grad[lo:hi])
            else:
                _accum(v, out.grad[:, lo:hi])

    tape._record(bwd)
    return out


def slice_rows(x, lo, hi):
    tape = x.tape
    if x.value.ndim != 2 or not (0 <= lo <= hi <= x.value.shape[0]):
        raise ShapeError("slice_rows", x.value.shape, (lo, hi))
    out = Var(x.value[lo:hi], tape)

    def bwd():
        if out.grad is None:
            return
        g = np.zeros_like(x.value)
        g[lo:hi] = out.grad
        _accum(x, g)

    tape._record(bwd)
    return out


def slice_cols(x, lo, hi):
    tape = x.tape
    if x.value.ndim != 2 or not (0 <= lo <= hi <= x.value.shape[1]):
        raise ShapeError("slice_cols", x.value.shape, (lo, hi))
    out = Var(np.ascontiguousarray(x.value[:, lo:hi]), tape)

    def bwd():
        if out.grad is None:
            return
        g = np.zeros_like(x.value)
        g[:, lo:hi] = out.grad
        _accum(x, g)

    tape._record(bwd)
    return out


def sum_all(x):
    tape = x.tape
    out = Var(np.asarray(x.value.sum(dtype=np.float64), dtype=x.value.dtype), tape)

    def bwd():
        if out.grad is None:
            return
        _accum(x, np.full_like(x.value, out.grad))

    tape._record(bwd)
    return out


def gather_sum(x, rows, cols):
    """Sum of selected matrix entries x[rows[i], cols[i]] as a scalar."""
    tape = x.tape
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if x.value.ndim != 2 or rows.shape != cols.shape or rows.ndim != 1:
        raise ShapeError("gather_sum", x.value.shape, rows.shape)
    out = Var(
        np.asarray(
            x.value[rows, cols].sum(dtype=np.float64), dtype=x.value.dtype
        ),
        tape,
    )

    def bwd():
        if out.grad is None:
            return
        g = np.zeros_like(x.value)
        np.add.at(g, (rows, cols), out.grad)
        _accum(x, g)

    tape._record(bwd)
    return out


def check_finite(x, where):
    if not np.isfinite(x.value).all():
        raise NumericError(f"non-finite values in {where}")
    return x


def grad_check(f, params, n_samples=50, h=1e-3, seed=0):
    """Max relative error between reverse-mode and central finite differences.

    ``f()`` must rebuild the forward pass deterministically (dropout off) and
    return a scalar Var.  For each parameter at least ``n_samples`` random
    coordinates are perturbed by ±h; use float64 parameters for tight
    tolerances.  Coordinates where both gradients are ~0 are skipped, as are
    ReLU-style kinks the caller avoids by construction.
    """
    rng = np.random.default_rng(seed)
    params = list(params)
    for p in params:
        p.zero_grad()
    loss = f()
    loss.tape.backward(loss)
    analytic = {p.name: p.grad.copy() for p in params}

    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        size = flat.shape[0]
        if size <= n_samples:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=n_samples, replace=False)
        ga = analytic[p.name].reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            lp = float(f().value)
            flat[c] = orig - h
            lm = float(f().value)
            flat[c] = orig
            gf = (lp - lm) / (2.0 * h)
            scale = max(abs(ga[c]), abs(gf))
            if scale < 1e-10:
                continue
            worst = max(worst, abs(ga[c] - gf) / scale)
    return worst
