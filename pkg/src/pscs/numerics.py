"""Dense tensors with reverse-mode differentiation and Adam.

Just enough tensor math for the fixed retrieval architecture: embedding
gathers, a gated recurrence, masked softmax, linear maps, dropout, cosine
similarity, and elementwise glue. Data is float32 in production; every op
also runs in float64, which is what the finite-difference checks use.

Graphs are built per forward pass; ``backward(loss)`` walks the tape once
in reverse topological order and accumulates gradients additively into
every tensor created with ``requires_grad=True``.
"""

import math
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

DTYPE = np.float32

_grad_enabled = True


@contextmanager
def no_grad():
    """Skip tape construction inside the block (inference-only forwards)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g


def tensor(data, requires_grad=False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def _result(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._backward is not None for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g, shape):
    """Sum g down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(loss: Tensor):
    """Reverse-mode pass from a scalar loss; accumulates into .grad fields."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar, got shape {loss.data.shape}")
    # iterative topological order over the tape
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# -- elementwise and shape ops ------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        out = _result(a.data + b.data, (a, b), None)
        if out._parents:
            out._backward = lambda g: (a._accumulate(_unbroadcast(g, a.data.shape)),
                                       b._accumulate(_unbroadcast(g, b.data.shape)))
        return out
    out = _result(a.data + b, (a,), None)
    if out._parents:
        out._backward = lambda g: a._accumulate(g)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = _result(a.data - b.data, (a, b), None)
    if out._parents:
        out._backward = lambda g: (a._accumulate(_unbroadcast(g, a.data.shape)),
                                   b._accumulate(_unbroadcast(-g, b.data.shape)))
    return out


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; ``b`` may be a Tensor, an ndarray constant, or a scalar."""
    if isinstance(b, Tensor):
        out = _result(a.data * b.data, (a, b), None)
        if out._parents:
            out._backward = lambda g: (a._accumulate(_unbroadcast(g * b.data, a.data.shape)),
                                       b._accumulate(_unbroadcast(g * a.data, b.data.shape)))
        return out
    const = np.asarray(b, dtype=a.data.dtype) if not np.isscalar(b) else b
    out = _result(a.data * const, (a,), None)
    if out._parents:
        out._backward = lambda g: a._accumulate(_unbroadcast(g * const, a.data.shape))
    return out


def neg(a: Tensor) -> Tensor:
    return mul(a, -1.0)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = _result(a.data.reshape(shape), (a,), None)
    if out._parents:
        out._backward = lambda g: a._accumulate(g.reshape(a.data.shape))
    return out


def concat(parts, axis=-1) -> Tensor:
    datas = [p.data for p in parts]
    out = _result(np.concatenate(datas, axis=axis), tuple(parts), None)
    if out._parents:
        sizes = [d.shape[axis] for d in datas]
        splits = np.cumsum(sizes)[:-1]

        def _bw(g):
            for piece, p in zip(np.split(g, splits, axis=axis), parts):
                p._accumulate(piece)
        out._backward = _bw
    return out


def narrow(a: Tensor, start: int, length: int, axis: int = -1) -> Tensor:
    """Contiguous slice along one axis."""
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = _result(a.data[index], (a,), None)
    if out._parents:
        def _bw(g):
            full = np.zeros_like(a.data)
            full[index] = g
            a._accumulate(full)
        out._backward = _bw
    return out


def reduce_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)
    out = _result(out_data, (a,), None)
    if out._parents:
        def _bw(g):
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.data.shape).copy()
                              if np.ndim(g) else np.full_like(a.data, g))
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                a._accumulate(np.broadcast_to(gg, a.data.shape))
        out._backward = _bw
    return out


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def sigmoid(a: Tensor) -> Tensor:
    # tanh-based: one vectorized transcendental instead of exp+division
    y = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    out = _result(y, (a,), None)
    if out._parents:
        out._backward = lambda g: a._accumulate(g * (y * (1.0 - y)))
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = _result(y, (a,), None)
    if out._parents:
        out._backward = lambda g: a._accumulate(g * (1.0 - y * y))
    return out


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0)
    out = _result(y, (a,), None)
    if out._parents:
        out._backward = lambda g: a._accumulate(g * (a.data > 0))
    return out


# -- linear algebra -----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = _result(a.data @ b.data, (a, b), None)
    if out._parents:
        out._backward = lambda g: (a._accumulate(g @ b.data.T),
                                   b._accumulate(a.data.T @ g))
    return out


def linear(x: Tensor, w: Tensor) -> Tensor:
    """x @ w.T with w stored (out_features, in_features)."""
    out = _result(x.data @ w.data.T, (x, w), None)
    if out._parents:
        out._backward = lambda g: (x._accumulate(g @ w.data),
                                   w._accumulate(g.T @ x.data))
    return out


# -- gathers ------------------------------------------------------------------

_DENSE_SCATTER_MAX_ROWS = 64


def _scatter_add_rows(table_shape, dtype, ids_flat, grads_flat):
    """Sum gradient rows into their table rows; duplicates accumulate."""
    o = table_shape[0]
    if o <= _DENSE_SCATTER_MAX_ROWS:
        onehot = np.zeros((o, ids_flat.size), dtype=dtype)
        onehot[ids_flat, np.arange(ids_flat.size)] = 1.0
        return onehot @ grads_flat
    out = np.zeros(table_shape, dtype=dtype)
    np.add.at(out, ids_flat, grads_flat)
    return out


def gather_rows(table: Tensor, ids) -> Tensor:
    """Row gather: output shape ids.shape + (d,). Checks id bounds."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(
            f"id out of range [0, {table.data.shape[0]}): "
            f"min {ids.min()}, max {ids.max()}")
    out = _result(table.data[ids], (table,), None)
    if out._parents:
        d = table.data.shape[1]

        def _bw(g):
            table._accumulate(_scatter_add_rows(
                table.data.shape, table.data.dtype,
                ids.reshape(-1), g.reshape(-1, d)))
        out._backward = _bw
    return out


def embedding_lookup(table: Tensor, ids, mask=None) -> Tensor:
    """Gather embedding rows; masked-off rows come back as zero vectors."""
    out = gather_rows(table, ids)
    if mask is not None:
        mask = np.asarray(mask)
        out = mul(out, mask[..., None].astype(table.data.dtype))
    return out


# -- softmax / dropout / cosine -----------------------------------------------

def softmax(logits: Tensor, mask=None, axis=-1) -> Tensor:
    """Masked softmax: masked positions get weight 0, real weights sum to 1.

    Max-subtraction keeps it overflow-safe; adding a constant to all real
    logits leaves the output unchanged. Rows with no real positions are
    rejected.
    """
    z = logits.data
    if mask is None:
        mask_arr = np.ones_like(z, dtype=bool)
    else:
        mask_arr = np.asarray(mask, dtype=bool)
        if mask_arr.shape != z.shape:
            raise ValueError(f"mask shape {mask_arr.shape} != logits shape {z.shape}")
    if not mask_arr.any(axis=axis).all():
        raise ValueError("softmax over a fully masked axis")
    neg = np.finfo(z.dtype).min
    masked = np.where(mask_arr, z, neg)
    m = masked.max(axis=axis, keepdims=True)
    e = np.exp(masked - m)
    e = np.where(mask_arr, e, 0.0)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _result(y, (logits,), None)
    if out._parents:
        def _bw(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            logits._accumulate(y * (g - dot))
        out._backward = _bw
    return out


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: identity at eval, 1/(1-rate)-scaled keep mask at train."""
    if not train or rate == 0.0:
        return x
    if not (0.0 <= rate < 1.0):
        raise ValueError(f"dropout rate must be in [0, 1): {rate}")
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    return mul(x, keep * (1.0 / (1.0 - rate)))


def cosine(x: Tensor, y: Tensor, delta: float = 1e-8) -> Tensor:
    """Row-wise cosine(x, y) = x.y / max(|x||y|, delta).

    1-D inputs give a scalar; 2-D inputs pair rows. The delta clamp makes
    zero vectors score 0 instead of dividing by zero.
    """
    single = x.data.ndim == 1
    xd = x.data[None, :] if single else x.data
    yd = y.data[None, :] if single else y.data
    s = (xd * yd).sum(axis=-1)
    nx = np.sqrt((xd * xd).sum(axis=-1))
    ny = np.sqrt((yd * yd).sum(axis=-1))
    raw = nx * ny
    clamped = raw < delta
    r = np.where(clamped, delta, raw)
    cos = s / r
    out_data = cos[0] if single else cos
    out = _result(np.asarray(out_data, dtype=x.data.dtype), (x, y), None)
    if out._parents:
        nx_safe = np.where(nx == 0, 1.0, nx)
        ny_safe = np.where(ny == 0, 1.0, ny)

        def _bw(g):
            gg = np.asarray(g).reshape(-1, 1) if not single else np.asarray(g).reshape(1, 1)
            c = cos[:, None]
            cl = clamped[:, None]
            gx = np.where(cl, yd / delta, yd / r[:, None] - c * xd / (nx_safe ** 2)[:, None])
            gy = np.where(cl, xd / delta, xd / r[:, None] - c * yd / (ny_safe ** 2)[:, None])
            gx = gg * gx
            gy = gg * gy
            x._accumulate(gx[0] if single else gx)
            y._accumulate(gy[0] if single else gy)
        out._backward = _bw
    return out


# -- recurrence ---------------------------------------------------------------

@dataclass
class LstmWeights:
    """Gate weights, stored (out, in); gate order along rows is i, f, g, o."""

    wx: Tensor   # (4H, d)
    wh: Tensor   # (4H, H)
    b: Tensor    # (4H,)

    @property
    def hidden(self) -> int:
        return self.wh.data.shape[1]

    def tensors(self):
        return {"wx": self.wx, "wh": self.wh, "b": self.b}


def unstack(x: Tensor, axis: int = 1) -> list:
    """Split into per-index views along one axis.

    Each child's backward adds straight into the parent's grad slice, so a
    step loop does not allocate a full-size buffer per step.
    """
    n_steps = x.data.shape[axis]
    children = []
    needs_grad = _grad_enabled and (x.requires_grad or x._backward is not None)
    for t in range(n_steps):
        view = np.take(x.data, t, axis=axis)
        child = Tensor(view)
        if needs_grad:
            child.requires_grad = True
            child._parents = (x,)

            def _bw(g, t=t):
                if x.grad is None:
                    x.grad = np.zeros_like(x.data)
                index = [slice(None)] * x.data.ndim
                index[axis] = t
                x.grad[tuple(index)] += g
            child._backward = _bw
        children.append(child)
    return children


def _lstm_cell(xz: Tensor, hc_prev: Tensor, wh: Tensor, b: Tensor, m_col):
    """Fused masked LSTM cell: hc = [h | c] carried through padded steps.

    ``m_col`` is an (N, 1) 0/1 constant; where it is 0 the previous state
    passes through unchanged. Fusing one step into a single tape node keeps
    the saved state per step to the gate matrix plus tanh(c).
    """
    h_dim = wh.data.shape[1]
    h_prev = hc_prev.data[:, :h_dim]
    c_prev = hc_prev.data[:, h_dim:]
    z = xz.data + h_prev @ wh.data.T + b.data
    gates = np.empty_like(z)
    np.tanh(0.5 * z[:, :2 * h_dim], out=gates[:, :2 * h_dim])
    gates[:, :2 * h_dim] += 1.0
    gates[:, :2 * h_dim] *= 0.5
    np.tanh(z[:, 2 * h_dim:3 * h_dim], out=gates[:, 2 * h_dim:3 * h_dim])
    np.tanh(0.5 * z[:, 3 * h_dim:], out=gates[:, 3 * h_dim:])
    gates[:, 3 * h_dim:] += 1.0
    gates[:, 3 * h_dim:] *= 0.5
    i = gates[:, :h_dim]
    f = gates[:, h_dim:2 * h_dim]
    g = gates[:, 2 * h_dim:3 * h_dim]
    o = gates[:, 3 * h_dim:]

    c_raw = f * c_prev + i * g
    t_raw = np.tanh(c_raw)
    hc = np.empty_like(hc_prev.data)
    hc[:, :h_dim] = m_col * (o * t_raw) + (1.0 - m_col) * h_prev
    hc[:, h_dim:] = m_col * c_raw + (1.0 - m_col) * c_prev

    out = _result(hc, (xz, hc_prev, wh, b), None)
    if out._parents:
        def _bw(ghc):
            gh = ghc[:, :h_dim]
            gc = ghc[:, h_dim:]
            gh_raw = gh * m_col
            do = gh_raw * t_raw
            dc_raw = gc * m_col + gh_raw * o * (1.0 - t_raw * t_raw)
            dz = np.empty_like(gates)
            dz[:, :h_dim] = (dc_raw * g) * i * (1.0 - i)
            dz[:, h_dim:2 * h_dim] = (dc_raw * c_prev) * f * (1.0 - f)
            dz[:, 2 * h_dim:3 * h_dim] = (dc_raw * i) * (1.0 - g * g)
            dz[:, 3 * h_dim:] = do * o * (1.0 - o)
            g_prev = np.empty_like(ghc)
            g_prev[:, :h_dim] = dz @ wh.data + gh * (1.0 - m_col)
            g_prev[:, h_dim:] = dc_raw * f + gc * (1.0 - m_col)
            xz._accumulate(dz)
            hc_prev._accumulate(g_prev)
            wh._accumulate(dz.T @ h_prev)
            b._accumulate(dz.sum(axis=0))
        out._backward = _bw
    return out


def lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor, weights: LstmWeights):
    """One gated-recurrence step over a batch of rows; returns (h, c)."""
    if x.data.shape[-1] != weights.wx.data.shape[1]:
        raise ValueError(
            f"input width {x.data.shape[-1]} != wx width {weights.wx.data.shape[1]}")
    if h_prev.data.shape[-1] != weights.hidden or c_prev.data.shape[-1] != weights.hidden:
        raise ValueError("state width does not match the hidden size")
    h_dim = weights.hidden
    xz = linear(x, weights.wx)
    hc_prev = concat([h_prev, c_prev], axis=-1)
    ones = np.ones((x.data.shape[0], 1), dtype=x.data.dtype)
    hc = _lstm_cell(xz, hc_prev, weights.wh, weights.b, ones)
    return narrow(hc, 0, h_dim), narrow(hc, h_dim, h_dim)


def bilstm(xs: Tensor, mask, fwd: LstmWeights, bwd: LstmWeights,
           return_sequence: bool = True):
    """Bidirectional recurrence over (N, l, d) inputs with an (N, l) mask.

    Left-packed masks assumed (real steps then padding). Returns the
    per-step concatenation (N, l, 2H) and the terminal pair: forward state
    after the last real step and backward state after step 0. Rows that are
    entirely padding keep zero states; a mask with no real positions at all
    is rejected. ``return_sequence=False`` skips assembling the per-step
    output (the retrieval model only consumes the terminal pair).
    """
    n, l, d = xs.data.shape
    mask = np.asarray(mask, dtype=xs.data.dtype)
    if mask.shape != (n, l):
        raise ValueError(f"mask shape {mask.shape} != {(n, l)}")
    if not mask.any():
        raise ValueError("bilstm over an entirely masked input")
    h_dim = fwd.hidden

    # all input projections in one matmul per direction, then per-step views
    flat = reshape(xs, (n * l, d))
    xz_f = unstack(reshape(linear(flat, fwd.wx), (n, l, 4 * h_dim)), axis=1)
    xz_b = unstack(reshape(linear(flat, bwd.wx), (n, l, 4 * h_dim)), axis=1)

    hc = Tensor(np.zeros((n, 2 * h_dim), dtype=xs.data.dtype))
    steps_f = []
    for t in range(l):
        hc = _lstm_cell(xz_f[t], hc, fwd.wh, fwd.b, mask[:, t:t + 1])
        if return_sequence:
            steps_f.append(narrow(hc, 0, h_dim))
    h_fwd_last = narrow(hc, 0, h_dim)

    hc = Tensor(np.zeros((n, 2 * h_dim), dtype=xs.data.dtype))
    steps_b = [None] * l
    for t in range(l - 1, -1, -1):
        hc = _lstm_cell(xz_b[t], hc, bwd.wh, bwd.b, mask[:, t:t + 1])
        if return_sequence:
            steps_b[t] = narrow(hc, 0, h_dim)
    h_bwd_first = narrow(hc, 0, h_dim)

    per_step = None
    if return_sequence:
        cols = [reshape(concat([hf, hb], axis=-1), (n, 1, 2 * h_dim))
                for hf, hb in zip(steps_f, steps_b)]
        per_step = concat(cols, axis=1)
    return per_step, h_fwd_last, h_bwd_first


# -- optimizer ----------------------------------------------------------------

@dataclass
class AdamState:
    """Bias-corrected Adam moments, keyed like the parameter dict."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, state: AdamState):
    """One Adam update over a name->Tensor dict, in fixed name order.

    Parameters without an accumulated gradient are skipped. Updates are
    in-place on the parameter data.
    """
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.step
    bias2 = 1.0 - b2 ** state.step
    for name in sorted(params):
        p = params[name]
        if p.grad is None:
            continue
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        p.data -= state.lr * update.astype(p.data.dtype, copy=False)


def uniform_init(rng: np.random.Generator, shape, scale: float, dtype=DTYPE) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape).astype(dtype)


def fan_in_init(rng: np.random.Generator, shape, dtype=DTYPE) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); fan_in is the last dim."""
    return uniform_init(rng, shape, 1.0 / math.sqrt(shape[-1]), dtype=dtype)
