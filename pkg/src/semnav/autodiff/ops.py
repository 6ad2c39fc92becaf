"""Differentiable kernels: elementwise math, conv, pooling, dense correlation,
weighted placement, softmax/losses and the recurrent cell step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Array, as_array, make_output


# ---------------------------------------------------------------------------
# broadcasting helpers


def _reduce_to_shape(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / linear algebra


def add(a, b) -> Array:
    a, b = as_array(a), as_array(b)
    out_data = a.data + b.data

    def backward(g):
        a.accumulate_grad(_reduce_to_shape(g, a.shape))
        b.accumulate_grad(_reduce_to_shape(g, b.shape))

    return make_output(out_data, (a, b), backward)


def sub(a, b) -> Array:
    a, b = as_array(a), as_array(b)
    out_data = a.data - b.data

    def backward(g):
        a.accumulate_grad(_reduce_to_shape(g, a.shape))
        b.accumulate_grad(_reduce_to_shape(-g, b.shape))

    return make_output(out_data, (a, b), backward)


def mul(a, b) -> Array:
    a, b = as_array(a), as_array(b)
    out_data = a.data * b.data

    def backward(g):
        a.accumulate_grad(_reduce_to_shape(g * b.data, a.shape))
        b.accumulate_grad(_reduce_to_shape(g * a.data, b.shape))

    return make_output(out_data, (a, b), backward)


def scale(a, s: float) -> Array:
    a = as_array(a)
    s = float(s)

    def backward(g):
        a.accumulate_grad(g * s)

    return make_output(a.data * s, (a,), backward)


def neg(a) -> Array:
    return scale(a, -1.0)


def matmul(a, b) -> Array:
    a, b = as_array(a), as_array(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    out_data = a.data @ b.data

    def backward(g):
        a.accumulate_grad(g @ b.data.T)
        b.accumulate_grad(a.data.T @ g)

    return make_output(out_data, (a, b), backward)


def reshape(a, shape) -> Array:
    a = as_array(a)
    shape = tuple(shape)
    old = a.shape

    def backward(g):
        a.accumulate_grad(g.reshape(old))

    return make_output(a.data.reshape(shape), (a,), backward)


def concat(arrays, axis: int) -> Array:
    arrays = [as_array(x) for x in arrays]
    out_data = np.concatenate([x.data for x in arrays], axis=axis)
    sizes = [x.shape[axis] for x in arrays]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for x, piece in zip(arrays, np.split(g, splits, axis=axis)):
            x.accumulate_grad(piece)

    return make_output(out_data, tuple(arrays), backward)


def sum_(a, axes=None) -> Array:
    a = as_array(a)
    out_data = a.data.sum(axis=axes)

    def backward(g):
        if axes is None:
            a.accumulate_grad(np.broadcast_to(g, a.shape).copy())
        else:
            a.accumulate_grad(np.broadcast_to(np.expand_dims(g, axes), a.shape).copy())

    return make_output(out_data, (a,), backward)


def mean_(a, axes=None) -> Array:
    a = as_array(a)
    n = a.size if axes is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axes)])
    return scale(sum_(a, axes), 1.0 / float(n))


def relu(a) -> Array:
    a = as_array(a)
    mask = a.data > 0

    def backward(g):
        a.accumulate_grad(g * mask)

    return make_output(a.data * mask, (a,), backward)


def sigmoid(a) -> Array:
    a = as_array(a)
    y = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        a.accumulate_grad(g * y * (1.0 - y))

    return make_output(y, (a,), backward)


def tanh(a) -> Array:
    a = as_array(a)
    y = np.tanh(a.data)

    def backward(g):
        a.accumulate_grad(g * (1.0 - y * y))

    return make_output(y, (a,), backward)


# ---------------------------------------------------------------------------
# im2col machinery shared by conv2d / correlate / place


_INDEX_CACHE: dict[tuple, np.ndarray] = {}


def _window_indices(h, w, c, kh, kw, ph, pw, stride):
    """Flat indices into the zero-padded (h+2ph, w+2pw, c) volume, one row of
    kh*kw*c entries per output position."""
    key = (h, w, c, kh, kw, ph, pw, stride)
    idx = _INDEX_CACHE.get(key)
    if idx is None:
        hp, wp = h + 2 * ph, w + 2 * pw
        oh = (h + 2 * ph - kh) // stride + 1
        ow = (w + 2 * pw - kw) // stride + 1
        oi = np.arange(oh) * stride
        oj = np.arange(ow) * stride
        ki = np.arange(kh)
        kj = np.arange(kw)
        rows = (oi[:, None, None, None] + ki[None, None, :, None])  # oh,1,kh,1
        cols = (oj[None, :, None, None] + kj[None, None, None, :])  # 1,ow,1,kw
        base = (rows * wp + cols) * c  # oh,ow,kh,kw
        idx = base[..., None] + np.arange(c)  # oh,ow,kh,kw,c
        idx = idx.reshape(oh * ow, kh * kw * c)
        _INDEX_CACHE[key] = idx
    return idx


def _pad2d(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((ph, ph), (pw, pw), (0, 0)))


def conv2d(x, kernels, pad: int = 0, stride: int = 1) -> Array:
    """Cross-correlation of an h*w*c_in input with k*k*c_in*c_out kernels."""
    x, kernels = as_array(x), as_array(kernels)
    if x.ndim != 3 or kernels.ndim != 4:
        raise ValueError("conv2d expects h*w*c_in input and k*k*c_in*c_out kernels")
    k = kernels.shape[0]
    if kernels.shape[1] != k or k % 2 != 1:
        raise ValueError("conv2d kernels must be square with odd extent")
    if pad < 0 or stride < 1:
        raise ValueError("conv2d requires pad >= 0 and stride >= 1")
    h, w, cin = x.shape
    if kernels.shape[2] != cin:
        raise ValueError(f"channel mismatch: input has {cin}, kernels expect {kernels.shape[2]}")
    cout = kernels.shape[3]
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    if oh < 1 or ow < 1:
        raise ValueError("conv2d output would be empty")
    idx = _window_indices(h, w, cin, k, k, pad, pad, stride)
    xp = _pad2d(x.data, pad, pad)
    cols = xp.reshape(-1)[idx]  # (oh*ow, k*k*cin)
    wm = kernels.data.reshape(k * k * cin, cout)
    out_data = (cols @ wm).reshape(oh, ow, cout)

    def backward(g):
        g2 = g.reshape(oh * ow, cout)
        kernels.accumulate_grad((cols.T @ g2).reshape(kernels.shape))
        dcols = g2 @ wm.T
        dxp = np.bincount(idx.reshape(-1), weights=dcols.reshape(-1).astype(np.float64),
                          minlength=xp.size).reshape(xp.shape)
        if pad:
            dxp = dxp[pad:pad + h, pad:pad + w]
        x.accumulate_grad(dxp.astype(x.dtype))

    return make_output(out_data, (x, kernels), backward)


def correlate_stack(map_arr, stack) -> Array:
    """Dense 'same'-padded correlation of a u*v*n map against r centered
    u'*v'*n templates; score[i,j,rho] is the template/window inner product."""
    map_arr, stack = as_array(map_arr), as_array(stack)
    if map_arr.ndim != 3 or stack.ndim != 4:
        raise ValueError("correlate_stack expects u*v*n map and u'*v'*n*r stack")
    u, v, n = map_arr.shape
    uh, vw, n2, r = stack.shape
    if n2 != n:
        raise ValueError(f"feature dim mismatch: map {n}, templates {n2}")
    if uh % 2 != 1 or vw % 2 != 1:
        raise ValueError("templates must have odd extents (no defined center otherwise)")
    if uh > u or vw > v:
        raise ValueError("template larger than map")
    ph, pw = uh // 2, vw // 2
    idx = _window_indices(u, v, n, uh, vw, ph, pw, 1)
    mp = _pad2d(map_arr.data, ph, pw)
    cols = mp.reshape(-1)[idx]  # (u*v, uh*vw*n)
    tm = stack.data.reshape(uh * vw * n, r)
    out_data = (cols @ tm).reshape(u, v, r)

    def backward(g):
        g2 = g.reshape(u * v, r)
        stack.accumulate_grad((cols.T @ g2).reshape(stack.shape))
        dcols = g2 @ tm.T
        dmp = np.bincount(idx.reshape(-1), weights=dcols.reshape(-1).astype(np.float64),
                          minlength=mp.size).reshape(mp.shape)
        map_arr.accumulate_grad(dmp[ph:ph + u, pw:pw + v].astype(map_arr.dtype))

    return make_output(out_data, (map_arr, stack), backward)


def correlate_dense(map_arr, template) -> Array:
    """Single-template dense correlation; returns a u*v score grid."""
    template = as_array(template)
    stack = reshape(template, template.shape + (1,))
    scores = correlate_stack(map_arr, stack)
    return reshape(scores, scores.shape[:2])


def place_weighted(stack, weights) -> Array:
    """Adjoint of correlate_stack: sum of rotated templates pasted with their
    centers at (i,j), scaled by weights[i,j,rho]; border overhang is dropped."""
    stack, weights = as_array(stack), as_array(weights)
    if stack.ndim != 4 or weights.ndim != 3:
        raise ValueError("place_weighted expects u'*v'*n*r stack and u*v*r weights")
    uh, vw, n, r = stack.shape
    u, v, r2 = weights.shape
    if r2 != r:
        raise ValueError(f"rotation axis mismatch: stack {r}, weights {r2}")
    if uh % 2 != 1 or vw % 2 != 1:
        raise ValueError("templates must have odd extents")
    ph, pw = uh // 2, vw // 2
    idx = _window_indices(u, v, n, uh, vw, ph, pw, 1)
    tm = stack.data.reshape(uh * vw * n, r)
    w2 = weights.data.reshape(u * v, r)
    vals = w2 @ tm.T  # (u*v, uh*vw*n)
    padded = np.bincount(idx.reshape(-1), weights=vals.reshape(-1).astype(np.float64),
                         minlength=(u + 2 * ph) * (v + 2 * pw) * n)
    out_data = padded.reshape(u + 2 * ph, v + 2 * pw, n)[ph:ph + u, pw:pw + v].astype(stack.dtype)

    def backward(g):
        gp = _pad2d(g, ph, pw)
        gcols = gp.reshape(-1)[idx]  # (u*v, uh*vw*n)
        weights.accumulate_grad((gcols @ tm).reshape(weights.shape))
        stack.accumulate_grad((gcols.T @ w2).reshape(stack.shape))

    return make_output(out_data, (stack, weights), backward)


# ---------------------------------------------------------------------------
# pooling / normalization


def maxpool_2x2(x) -> Array:
    """2x2/stride-2 max pooling; odd extents are padded with -inf."""
    x = as_array(x)
    if x.ndim != 3:
        raise ValueError("maxpool_2x2 expects an h*w*c input")
    h, w, c = x.shape
    hp, wp = (h + 1) // 2 * 2, (w + 1) // 2 * 2
    xp = x.data
    if (hp, wp) != (h, w):
        xp = np.pad(xp, ((0, hp - h), (0, wp - w), (0, 0)), constant_values=-np.inf)
    win = xp.reshape(hp // 2, 2, wp // 2, 2, c).transpose(0, 2, 4, 1, 3).reshape(hp // 2, wp // 2, c, 4)
    am = win.argmax(axis=-1)
    out_data = np.take_along_axis(win, am[..., None], axis=-1)[..., 0]

    def backward(g):
        dwin = np.zeros_like(win)
        np.put_along_axis(dwin, am[..., None], g[..., None], axis=-1)
        dxp = dwin.reshape(hp // 2, wp // 2, c, 2, 2).transpose(0, 3, 1, 4, 2).reshape(hp, wp, c)
        x.accumulate_grad(dxp[:h, :w])

    return make_output(out_data, (x,), backward)


def softmax(x, axes=None) -> Array:
    """Softmax over the given axes (all axes when None); sums to 1 there."""
    x = as_array(x)
    if axes is None:
        axes = tuple(range(x.ndim))
    elif isinstance(axes, int):
        axes = (axes,)
    else:
        axes = tuple(axes)
    for ax in axes:
        if not -x.ndim <= ax < x.ndim:
            raise ValueError(f"softmax axis {ax} out of range for ndim {x.ndim}")
    z = x.data - x.data.max(axis=axes, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axes, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=axes, keepdims=True)
        x.accumulate_grad(y * (g - dot))

    return make_output(y, (x,), backward)


CROSS_ENTROPY_CLIP = 1e-12


def cross_entropy(pred, target) -> Array:
    """-sum(target * log(pred)) with pred clipped at 1e-12.

    pred must already be a normalized distribution (softmax output) and the
    target a distribution of matching shape.
    """
    pred, target = as_array(pred), as_array(target)
    if pred.shape != target.shape:
        raise ValueError("cross_entropy shapes differ")
    if abs(float(pred.data.sum()) - 1.0) > 1e-6:
        raise ValueError("cross_entropy pred must sum to 1 (pass a softmax output)")
    if abs(float(target.data.sum()) - 1.0) > 1e-6:
        raise ValueError("cross_entropy target must sum to 1")
    p = np.maximum(pred.data, CROSS_ENTROPY_CLIP)
    out_data = np.asarray(-(target.data * np.log(p)).sum(), dtype=pred.dtype)

    def backward(g):
        dpred = np.where(pred.data > CROSS_ENTROPY_CLIP, -target.data / p, 0.0) * g
        pred.accumulate_grad(dpred.astype(pred.dtype))

    return make_output(out_data, (pred, target), backward)


def l1_loss(pred, target) -> Array:
    """Mean absolute error; the subgradient at 0 is taken as 0."""
    pred, target = as_array(pred), as_array(target)
    if pred.shape != target.shape:
        raise ValueError("l1_loss shapes differ")
    d = pred.data - target.data
    out_data = np.asarray(np.abs(d).mean(), dtype=pred.dtype)
    n = d.size

    def backward(g):
        pred.accumulate_grad(np.sign(d) * (g / n))

    return make_output(out_data, (pred, target), backward)


# ---------------------------------------------------------------------------
# dropout / batch norm


def dropout(x, rate: float, rng: np.random.Generator, training: bool) -> Array:
    if not training or rate <= 0.0:
        return as_array(x)
    x = as_array(x)
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def backward(g):
        x.accumulate_grad(g * keep)

    return make_output(x.data * keep, (x,), backward)


@dataclass
class BatchNormState:
    """Running statistics for inference-time normalization."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def create(cls, channels: int, dtype=np.float64) -> "BatchNormState":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


def batchnorm_spatial(x, gamma, beta, state: BatchNormState, training: bool) -> Array:
    """Per-channel normalization over the spatial extent of an h*w*c sample.

    Training normalizes with the sample's own spatial statistics and updates
    the running averages; inference uses the running statistics.
    """
    x, gamma, beta = as_array(x), as_array(gamma), as_array(beta)
    h, w, c = x.shape
    m = h * w
    if training:
        mean = x.data.mean(axis=(0, 1))
        var = x.data.var(axis=(0, 1))
        state.running_mean = (1 - state.momentum) * state.running_mean + state.momentum * mean
        state.running_var = (1 - state.momentum) * state.running_var + state.momentum * var
    else:
        mean, var = state.running_mean, state.running_var
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.data - mean) * inv
    out_data = xhat * gamma.data + beta.data

    def backward(g):
        gamma.accumulate_grad((g * xhat).sum(axis=(0, 1)))
        beta.accumulate_grad(g.sum(axis=(0, 1)))
        gx = g * gamma.data
        if training:
            dx = inv * (gx - gx.mean(axis=(0, 1)) - xhat * (gx * xhat).sum(axis=(0, 1)) / m)
        else:
            dx = gx * inv
        x.accumulate_grad(dx.astype(x.dtype))

    return make_output(out_data, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# recurrent cell


@dataclass
class RecurrentCellParams:
    """Four-gate recurrent cell weights; all gates share d_in and d_h."""

    w_i: Array
    u_i: Array
    b_i: Array
    w_f: Array
    u_f: Array
    b_f: Array
    w_o: Array
    u_o: Array
    b_o: Array
    w_g: Array
    u_g: Array
    b_g: Array

    @classmethod
    def create(cls, rng: np.random.Generator, d_in: int, d_h: int,
               dtype=np.float64) -> "RecurrentCellParams":
        def w(fan_in, shape):
            return Array(rng.normal(0.0, 1.0 / np.sqrt(fan_in), shape).astype(dtype),
                         requires_grad=True)

        fields = {}
        for gate in "ifog":
            fields[f"w_{gate}"] = w(d_in, (d_in, d_h))
            fields[f"u_{gate}"] = w(d_h, (d_h, d_h))
            fields[f"b_{gate}"] = Array(np.zeros(d_h, dtype=dtype), requires_grad=True)
        return cls(**fields)

    def arrays(self) -> dict[str, Array]:
        return {name: getattr(self, name) for name in
                ("w_i", "u_i", "b_i", "w_f", "u_f", "b_f",
                 "w_o", "u_o", "b_o", "w_g", "u_g", "b_g")}

    @property
    def d_in(self) -> int:
        return self.w_i.shape[0]

    @property
    def d_h(self) -> int:
        return self.w_i.shape[1]


def lstm_step(params: RecurrentCellParams, x, h, cstate) -> tuple[Array, Array]:
    """One step of the gated recurrent cell over a (batch, dim) input."""
    x, h, cstate = as_array(x), as_array(h), as_array(cstate)
    if x.ndim == 1:
        x, h, cstate = (reshape(a, (1, a.shape[0])) for a in (x, h, cstate))
        hp, cp = lstm_step(params, x, h, cstate)
        return reshape(hp, (hp.shape[1],)), reshape(cp, (cp.shape[1],))
    if x.shape[1] != params.d_in or h.shape[1] != params.d_h:
        raise ValueError("lstm_step dimension mismatch")
    i = sigmoid(add(add(matmul(x, params.w_i), matmul(h, params.u_i)), params.b_i))
    f = sigmoid(add(add(matmul(x, params.w_f), matmul(h, params.u_f)), params.b_f))
    o = sigmoid(add(add(matmul(x, params.w_o), matmul(h, params.u_o)), params.b_o))
    g = tanh(add(add(matmul(x, params.w_g), matmul(h, params.u_g)), params.b_g))
    c_new = add(mul(f, cstate), mul(i, g))
    h_new = mul(o, tanh(c_new))
    return h_new, c_new


# ---------------------------------------------------------------------------
# grid rotation


_ROT_CACHE: dict[tuple, list[tuple[np.ndarray, np.ndarray]]] = {}


def _rotation_tables(n_side: int, r: int):
    """Per-rotation (indices, weights) resampling tables about the grid center.

    Multiples of 90 degrees are exact single-index permutations; other angles
    use bilinear weights with zero fill outside the grid.
    """
    key = (n_side, r)
    tables = _ROT_CACHE.get(key)
    if tables is not None:
        return tables
    c = (n_side - 1) / 2.0
    ii, jj = np.meshgrid(np.arange(n_side), np.arange(n_side), indexing="ij")
    pi, pj = (ii - c).reshape(-1), (jj - c).reshape(-1)
    tables = []
    for rho in range(r):
        ang = 2.0 * np.pi * rho / r
        deg = (360 * rho) // r if (360 * rho) % r == 0 else None
        # source = R(-ang) applied to destination offsets
        si = np.cos(ang) * pi + np.sin(ang) * pj + c
        sj = -np.sin(ang) * pi + np.cos(ang) * pj + c
        if deg is not None and deg % 90 == 0:
            idx = (np.rint(si) * n_side + np.rint(sj)).astype(np.int64)[:, None]
            wts = np.ones_like(idx, dtype=np.float64)
        else:
            i0, j0 = np.floor(si).astype(np.int64), np.floor(sj).astype(np.int64)
            fi, fj = si - i0, sj - j0
            corners, weights = [], []
            for di, dj, wq in ((0, 0, (1 - fi) * (1 - fj)), (0, 1, (1 - fi) * fj),
                               (1, 0, fi * (1 - fj)), (1, 1, fi * fj)):
                ci, cj = i0 + di, j0 + dj
                inside = (ci >= 0) & (ci < n_side) & (cj >= 0) & (cj < n_side)
                corners.append(np.where(inside, ci * n_side + cj, 0))
                weights.append(np.where(inside, wq, 0.0))
            idx = np.stack(corners, axis=1)
            wts = np.stack(weights, axis=1)
        tables.append((idx, wts))
    _ROT_CACHE[key] = tables
    return tables


def rotate_stack(grid, r: int) -> Array:
    """Stack of r copies of a u'*v'*n grid rotated about its center by
    multiples of 360/r degrees; copy 0 is the input itself."""
    grid = as_array(grid)
    if grid.ndim != 3:
        raise ValueError("rotate_stack expects a u'*v'*n grid")
    if r < 1:
        raise ValueError("rotate_stack requires r >= 1")
    uh, vw, n = grid.shape
    if r > 1 and uh != vw:
        raise ValueError("rotation requires a square grid")
    tables = _rotation_tables(uh, r)
    flat = grid.data.reshape(uh * vw, n)
    out_data = np.empty((uh, vw, n, r), dtype=grid.dtype)
    for rho, (idx, wts) in enumerate(tables):
        out_data[..., rho] = (wts[..., None] * flat[idx]).sum(axis=1).reshape(uh, vw, n)

    def backward(g):
        dflat = np.zeros_like(flat)
        for rho, (idx, wts) in enumerate(tables):
            contrib = wts[..., None] * g[..., rho].reshape(uh * vw, 1, n)
            np.add.at(dflat, idx, contrib)
        grid.accumulate_grad(dflat.reshape(grid.shape))

    return make_output(out_data, (grid,), backward)
