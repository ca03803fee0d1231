"""Neural network layers: causal 1-D convolution, pooling, dense, batch and
layer normalization, GRU cell, bidirectional GRU, and softmax cross-entropy.

Each layer has a forward building on the autodiff ops in ``tensor`` plus a
few fused ops defined here with hand-derived backwards (conv, pooling,
normalization, the GRU step, softmax-CE). All backwards are covered by
finite-difference checks in the verification suite.

Shape conventions: convolution inputs are (batch, channels, time);
recurrent inputs are (batch, time, features); dense inputs are
(batch, features). Feature/channel axes for normalization are always last.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import (
    ShapeError,
    Tensor,
    _fmt,
    _sigmoid,
    concat,
    make_op,
)


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------------------
# causal 1-D convolution
# ---------------------------------------------------------------------------


class Conv1D:
    """Causal 1-D convolution: output at time t sees inputs at times <= t.

    Weights are (kernel, in_channels, out_channels); the input is left-padded
    with kernel-1 zeros so output length equals input length.
    """

    def __init__(self, kernel_size: int, in_channels: int, out_channels: int,
                 rng: np.random.Generator):
        if kernel_size < 1:
            raise ValueError(f"Conv1D: kernel_size must be >= 1, got {kernel_size}")
        self.kernel_size = kernel_size
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.w = Tensor(
            glorot_uniform(
                rng,
                (kernel_size, in_channels, out_channels),
                fan_in=kernel_size * in_channels,
                fan_out=kernel_size * out_channels,
            ),
            requires_grad=True,
        )
        self.b = Tensor(np.zeros(out_channels), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return conv1d_causal(x, self.w, self.b)

    __call__ = forward

    def params(self):
        return [("w", self.w), ("b", self.b)]


def conv1d_causal(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y[n,o,t] = b[o] + sum_{k,c} w[k,c,o] * x[n,c,t-f+1+k] (zeros before t=0)."""
    if x.ndim != 3:
        raise ShapeError(f"conv1d: input must be (batch, channels, time), got {_fmt(x.shape)}")
    f, cin, cout = w.shape
    n, c, t = x.shape
    if c != cin:
        raise ShapeError(
            f"conv1d: input has {c} channels but weights expect {cin} "
            f"(input {_fmt(x.shape)}, weights {_fmt(w.shape)})"
        )
    if t < 1:
        raise ShapeError("conv1d: empty time axis")

    xd = x.data
    xp = np.pad(xd, ((0, 0), (0, 0), (f - 1, 0))) if f > 1 else xd
    # windows[n, c, t, k] = xp[n, c, t + k]
    windows = sliding_window_view(xp, f, axis=2)
    cols = windows.transpose(0, 2, 3, 1).reshape(n * t, f * cin)
    w2 = w.data.reshape(f * cin, cout)
    y = (cols @ w2 + b.data).reshape(n, t, cout).transpose(0, 2, 1)

    nx, nw, nb = x.requires_grad, w.requires_grad, b.requires_grad

    def backward(g):
        g2 = g.transpose(0, 2, 1).reshape(n * t, cout)
        gw = gb = gx = None
        if nw:
            # recomputing the column matrix is cheaper than keeping it alive
            cols_b = sliding_window_view(
                np.pad(xd, ((0, 0), (0, 0), (f - 1, 0))) if f > 1 else xd, f, axis=2
            ).transpose(0, 2, 3, 1).reshape(n * t, f * cin)
            gw = (cols_b.T @ g2).reshape(f, cin, cout)
        if nb:
            gb = g2.sum(axis=0)
        if nx:
            dcols = (g2 @ w2.T).reshape(n, t, f, cin).transpose(0, 3, 1, 2)
            dxp = np.zeros((n, cin, t + f - 1))
            for k in range(f):
                dxp[:, :, k:k + t] += dcols[:, :, :, k]
            gx = dxp[:, :, f - 1:] if f > 1 else dxp
        return gx, gw, gb

    return make_op("conv1d", y, (x, w, b), backward)


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------


def maxpool1d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping max over windows along time; trailing remainder dropped.

    Gradient routes to the first maximal element of each window.
    """
    if x.ndim != 3:
        raise ShapeError(f"maxpool1d: input must be (batch, channels, time), got {_fmt(x.shape)}")
    n, c, t = x.shape
    if t < size:
        raise ShapeError(f"maxpool1d: time axis {t} shorter than pool size {size}")
    tout = t // size
    blocks = x.data[:, :, : tout * size].reshape(n, c, tout, size)
    idx = blocks.argmax(axis=3)
    y = np.take_along_axis(blocks, idx[..., None], axis=3)[..., 0]

    def backward(g):
        dblocks = np.zeros((n, c, tout, size))
        np.put_along_axis(dblocks, idx[..., None], g[..., None], axis=3)
        dx = np.zeros((n, c, t))
        dx[:, :, : tout * size] = dblocks.reshape(n, c, tout * size)
        return (dx,)

    return make_op("maxpool1d", y, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the time axis per channel: (batch, channels, time) -> (batch, channels)."""
    if x.ndim != 3:
        raise ShapeError(f"global_avg_pool: input must be 3-D, got {_fmt(x.shape)}")
    if x.shape[2] < 1:
        raise ShapeError("global_avg_pool: empty time axis")
    return x.mean(axis=2)


# ---------------------------------------------------------------------------
# dense
# ---------------------------------------------------------------------------


class Dense:
    """y = act(x @ w + b) with w of shape (in, out)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 activation: str | None = None):
        if activation not in (None, "relu"):
            raise ValueError(f"Dense: unknown activation {activation!r}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.w = Tensor(glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim),
                        requires_grad=True)
        self.b = Tensor(np.zeros(out_dim), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        y = x @ self.w + self.b
        return y.relu() if self.activation == "relu" else y

    __call__ = forward

    def params(self):
        return [("w", self.w), ("b", self.b)]


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


def _norm_backward(g, gamma, xhat, inv_std, axes, count):
    """Shared gradient for (x - mean)/std * gamma + beta normalizers."""
    dxhat = g * gamma
    m1 = dxhat.sum(axis=axes, keepdims=True) / count
    m2 = (dxhat * xhat).sum(axis=axes, keepdims=True) / count
    return (dxhat - m1 - xhat * m2) * inv_std


class BatchNorm:
    """Per-feature normalization over batch (and time) statistics.

    The feature axis is last. Training mode normalizes with current batch
    statistics (population variance) and updates running statistics with
    momentum (keep fraction); inference mode uses the running statistics and
    is a pure per-feature affine map.
    """

    def __init__(self, num_features: int, momentum: float = 0.99, eps: float = 1e-5):
        self.num_features = num_features
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.gamma = Tensor(np.ones(num_features), requires_grad=True)
        self.beta = Tensor(np.zeros(num_features), requires_grad=True)
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)

    def forward(self, x: Tensor, train: bool) -> Tensor:
        if x.shape[-1] != self.num_features:
            raise ShapeError(
                f"batchnorm: expected {self.num_features} features, got {_fmt(x.shape)}"
            )
        if not train:
            scale = self.gamma.data / np.sqrt(self.running_var + self.eps)
            shift = self.beta.data - self.running_mean * scale
            return x * Tensor(scale) + Tensor(shift)

        if x.shape[0] < 2:
            raise ValueError("batchnorm: train mode needs batch size >= 2 (variance degenerate)")
        axes = tuple(range(x.ndim - 1))
        count = int(np.prod([x.shape[a] for a in axes]))
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        self.running_mean = self.momentum * self.running_mean + (1.0 - self.momentum) * mean
        self.running_var = self.momentum * self.running_var + (1.0 - self.momentum) * var

        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x.data - mean) * inv_std
        y = xhat * self.gamma.data + self.beta.data
        gamma_d = self.gamma.data
        ng, nb, nx = self.gamma.requires_grad, self.beta.requires_grad, x.requires_grad

        def backward(g):
            gx = _norm_backward(g, gamma_d, xhat, inv_std, axes, count) if nx else None
            ggamma = (g * xhat).sum(axis=axes) if ng else None
            gbeta = g.sum(axis=axes) if nb else None
            return gx, ggamma, gbeta

        return make_op("batchnorm", y, (x, self.gamma, self.beta), backward)

    __call__ = forward

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def state(self):
        return [("gamma", self.gamma.data), ("beta", self.beta.data),
                ("running_mean", self.running_mean), ("running_var", self.running_var)]

    def load_state(self, values: dict[str, np.ndarray]):
        self.gamma.data = values["gamma"].copy()
        self.beta.data = values["beta"].copy()
        self.running_mean = values["running_mean"].copy()
        self.running_var = values["running_var"].copy()


class LayerNorm:
    """Per-sample normalization over the feature (last) axis."""

    def __init__(self, num_features: int, eps: float = 1e-5):
        if num_features < 2:
            raise ValueError("layernorm: needs at least 2 features")
        self.num_features = num_features
        self.eps = float(eps)
        self.gamma = Tensor(np.ones(num_features), requires_grad=True)
        self.beta = Tensor(np.zeros(num_features), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.num_features:
            raise ShapeError(
                f"layernorm: expected {self.num_features} features, got {_fmt(x.shape)}"
            )
        if x.shape[-1] < 2:
            raise ValueError("layernorm: single-feature input")
        mean = x.data.mean(axis=-1, keepdims=True)
        var = x.data.var(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x.data - mean) * inv_std
        y = xhat * self.gamma.data + self.beta.data
        count = x.shape[-1]
        gamma_d = self.gamma.data
        ng, nb, nx = self.gamma.requires_grad, self.beta.requires_grad, x.requires_grad
        red = tuple(range(x.ndim - 1))

        def backward(g):
            gx = _norm_backward(g, gamma_d, xhat, inv_std, (-1,), count) if nx else None
            ggamma = (g * xhat).sum(axis=red) if ng else None
            gbeta = g.sum(axis=red) if nb else None
            return gx, ggamma, gbeta

        return make_op("layernorm", y, (x, self.gamma, self.beta), backward)

    __call__ = forward

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]


# ---------------------------------------------------------------------------
# GRU
# ---------------------------------------------------------------------------


def gru_step(proj: Tensor, h_prev: Tensor, u_upd: Tensor, u_rst: Tensor,
             u_cand: Tensor) -> Tensor:
    """One fused GRU step from precomputed input projections.

    ``proj`` is (batch, 3D): the input contribution x @ W + b for the update,
    reset and candidate gates, concatenated in that order. Computes

        u = sigmoid(p_u + h U_u);  r = sigmoid(p_r + h U_r)
        c = tanh(p_c + (r*h) U_c);  h_new = (1-u)*h + u*c
    """
    b, d3 = proj.shape
    d = h_prev.shape[1]
    if d3 != 3 * d or h_prev.shape[0] != b:
        raise ShapeError(
            f"gru_step: projection {_fmt(proj.shape)} incompatible with state {_fmt(h_prev.shape)}"
        )
    for name, m in (("update", u_upd), ("reset", u_rst), ("candidate", u_cand)):
        if m.shape != (d, d):
            raise ShapeError(f"gru_step: {name} recurrent matrix {_fmt(m.shape)} != ({d}, {d})")

    p = proj.data
    h = h_prev.data
    u = _sigmoid(p[:, :d] + h @ u_upd.data)
    r = _sigmoid(p[:, d:2 * d] + h @ u_rst.data)
    rh = r * h
    c = np.tanh(p[:, 2 * d:] + rh @ u_cand.data)
    h_new = (1.0 - u) * h + u * c

    uu, ur, uc = u_upd.data, u_rst.data, u_cand.data
    needs = (proj.requires_grad, h_prev.requires_grad,
             u_upd.requires_grad, u_rst.requires_grad, u_cand.requires_grad)

    def backward(g):
        da_c = (g * u) * (1.0 - c * c)
        drh = da_c @ uc.T
        da_u = (g * (c - h)) * u * (1.0 - u)
        da_r = (drh * h) * r * (1.0 - r)
        gproj = gh = guu = gur = guc = None
        if needs[0]:
            gproj = np.concatenate([da_u, da_r, da_c], axis=1)
        if needs[1]:
            gh = g * (1.0 - u) + drh * r + da_u @ uu.T + da_r @ ur.T
        if needs[2]:
            guu = h.T @ da_u
        if needs[3]:
            gur = h.T @ da_r
        if needs[4]:
            guc = rh.T @ da_c
        return gproj, gh, guu, gur, guc

    return make_op("gru_step", h_new, (proj, h_prev, u_upd, u_rst, u_cand), backward)


def gru_scan(proj: Tensor, u_upd: Tensor, u_rst: Tensor, u_cand: Tensor,
             reverse: bool = False) -> Tensor:
    """Run a GRU over a whole projected sequence as one fused op.

    ``proj`` is (batch, time, 3D): per-step input contributions (x W + b) for
    the update/reset/candidate gates. Consumption starts from a zero state at
    the first step (last step when ``reverse``). The output is (batch, time,
    D), aligned to input time order: out[:, i] is the state after consuming
    step i (after consuming steps i..T-1 when ``reverse``).

    One graph node per call; the backward runs the reverse-time recurrence
    internally, which keeps per-step graph bookkeeping off the hot path.
    """
    if proj.ndim != 3 or proj.shape[2] % 3 != 0:
        raise ShapeError(f"gru_scan: projections must be (batch, time, 3D), got {_fmt(proj.shape)}")
    n, t, d3 = proj.shape
    d = d3 // 3
    for name, m in (("update", u_upd), ("reset", u_rst), ("candidate", u_cand)):
        if m.shape != (d, d):
            raise ShapeError(f"gru_scan: {name} recurrent matrix {_fmt(m.shape)} != ({d}, {d})")

    order = range(t - 1, -1, -1) if reverse else range(t)
    uu, ur, uc = u_upd.data, u_rst.data, u_cand.data
    p = proj.data
    h_all = np.zeros((t + 1, n, d))  # state before each consumption step
    u_all = np.empty((t, n, d))
    r_all = np.empty((t, n, d))
    c_all = np.empty((t, n, d))
    out = np.empty((n, t, d))
    h = h_all[0]
    for j, idx in enumerate(order):
        pj = p[:, idx, :]
        u = _sigmoid(pj[:, :d] + h @ uu)
        r = _sigmoid(pj[:, d:2 * d] + h @ ur)
        c = np.tanh(pj[:, 2 * d:] + (r * h) @ uc)
        h = (1.0 - u) * h + u * c
        u_all[j], r_all[j], c_all[j] = u, r, c
        h_all[j + 1] = h
        out[:, idx, :] = h

    needs = (proj.requires_grad, u_upd.requires_grad,
             u_rst.requires_grad, u_cand.requires_grad)

    def backward(g):
        gproj = np.empty((n, t, d3)) if needs[0] else None
        guu = np.zeros((d, d)) if needs[1] else None
        gur = np.zeros((d, d)) if needs[2] else None
        guc = np.zeros((d, d)) if needs[3] else None
        dh = np.zeros((n, d))
        for j in range(t - 1, -1, -1):
            idx = order[j]
            dh = dh + g[:, idx, :]
            u, r, c, h_prev = u_all[j], r_all[j], c_all[j], h_all[j]
            da_c = (dh * u) * (1.0 - c * c)
            drh = da_c @ uc.T
            da_u = (dh * (c - h_prev)) * u * (1.0 - u)
            da_r = (drh * h_prev) * r * (1.0 - r)
            if needs[0]:
                gproj[:, idx, :d] = da_u
                gproj[:, idx, d:2 * d] = da_r
                gproj[:, idx, 2 * d:] = da_c
            if needs[1]:
                guu += h_prev.T @ da_u
            if needs[2]:
                gur += h_prev.T @ da_r
            if needs[3]:
                guc += (r * h_prev).T @ da_c
            dh = dh * (1.0 - u) + drh * r + da_u @ uu.T + da_r @ ur.T
        return gproj, guu, gur, guc

    return make_op("gru_scan", out, (proj, u_upd, u_rst, u_cand), backward)


class GRUCell:
    """Update/reset-gated recurrent cell.

    Input-to-hidden weights for the three gates are packed column-wise into
    ``w_in`` of shape (input_dim, 3D) in update/reset/candidate order, with a
    matching packed bias. Each gate block is initialized Glorot-uniform
    independently.
    """

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        d = hidden_dim
        blocks = [glorot_uniform(rng, (input_dim, d), input_dim, d) for _ in range(3)]
        self.w_in = Tensor(np.concatenate(blocks, axis=1), requires_grad=True)
        self.u_upd = Tensor(glorot_uniform(rng, (d, d), d, d), requires_grad=True)
        self.u_rst = Tensor(glorot_uniform(rng, (d, d), d, d), requires_grad=True)
        self.u_cand = Tensor(glorot_uniform(rng, (d, d), d, d), requires_grad=True)
        self.bias = Tensor(np.zeros(3 * d), requires_grad=True)

    def project(self, x: Tensor) -> Tensor:
        """Input contribution for all gates at once; x is (rows, input_dim)."""
        return x @ self.w_in + self.bias

    def step(self, x_t: Tensor, h_prev: Tensor) -> Tensor:
        if x_t.shape[1] != self.input_dim:
            raise ShapeError(
                f"gru cell: input dim {x_t.shape[1]} != expected {self.input_dim}"
            )
        return gru_step(self.project(x_t), h_prev, self.u_upd, self.u_rst, self.u_cand)

    def params(self):
        return [("w_in", self.w_in), ("u_upd", self.u_upd), ("u_rst", self.u_rst),
                ("u_cand", self.u_cand), ("bias", self.bias)]


class BiGRU:
    """Two independent GRU cells reading the sequence in opposite directions.

    In full-sequence mode the per-step outputs are concatenated on the
    feature axis, with the backward outputs aligned to original time (the
    backward feature at time t reflects inputs t..T-1). In final-state mode
    the output is the concatenation of both cells' final states.
    """

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator,
                 return_sequences: bool = True):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.return_sequences = return_sequences
        self.fwd = GRUCell(input_dim, hidden_dim, rng)
        self.bwd = GRUCell(input_dim, hidden_dim, rng)

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden_dim

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ShapeError(
                f"bigru: input must be (batch, time, {self.input_dim}), got {_fmt(x.shape)}"
            )
        n, t, fdim = x.shape
        flat = x.reshape(n * t, fdim)
        proj_f = self.fwd.project(flat).reshape(n, t, 3 * self.hidden_dim)
        proj_b = self.bwd.project(flat).reshape(n, t, 3 * self.hidden_dim)
        out_f = gru_scan(proj_f, self.fwd.u_upd, self.fwd.u_rst, self.fwd.u_cand)
        out_b = gru_scan(proj_b, self.bwd.u_upd, self.bwd.u_rst, self.bwd.u_cand,
                         reverse=True)
        if self.return_sequences:
            return concat([out_f, out_b], axis=2)
        return concat([out_f[:, t - 1, :], out_b[:, 0, :]], axis=1)

    __call__ = forward

    def params(self):
        out = []
        for prefix, cell in (("fwd", self.fwd), ("bwd", self.bwd)):
            out.extend((f"{prefix}.{k}", v) for k, v in cell.params())
        return out


# ---------------------------------------------------------------------------
# softmax cross-entropy
# ---------------------------------------------------------------------------


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Mean negative log-likelihood under a stabilized softmax.

    Returns the scalar loss tensor and the (batch, classes) probability
    matrix as a plain array. Labels are integer class ids in [0, classes).
    """
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: logits must be 2-D, got {_fmt(logits.shape)}")
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(
            f"softmax_cross_entropy: labels shape {_fmt(labels.shape)} != ({n},)"
        )
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        bad = labels[(labels < 0) | (labels >= k)][0]
        raise ValueError(f"softmax_cross_entropy: label {bad} outside [0, {k})")

    z = logits.data
    shifted = z - z.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    denom = ez.sum(axis=1, keepdims=True)
    probs = ez / denom
    log_probs = shifted - np.log(denom)
    loss = -log_probs[np.arange(n), labels].mean()

    def backward(g):
        dz = probs.copy()
        dz[np.arange(n), labels] -= 1.0
        return (dz * (g / n),)

    return make_op("softmax_ce", loss, (logits,), backward), probs.copy()
