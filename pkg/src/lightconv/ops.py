"""Primitive numeric operations on NCHW tensors.

Two layers live here. The public functions (:func:`conv2d`,
:func:`group_norm`, :func:`softmax_over_channels`, ...) take and return
:class:`~lightconv.tensor.Tensor` values and enforce the operation
contracts. Underneath them, ``*_forward`` / ``*_vjp`` pairs work on raw
ndarrays and carry an opaque cache between the passes; composite blocks
chain those directly so their analytic backward passes stay explicit.

All forwards are pure functions; MAC instrumentation (see
:mod:`lightconv.counting`) observes them without changing results.
"""

import numpy as np

from .counting import add_macs
from .errors import ShapeError
from .tensor import ConvSpec, GroupNormParams, Tensor

# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


def conv2d_forward(x: np.ndarray, weights: np.ndarray, bias, spec: ConvSpec):
    """Grouped 2-D cross-correlation with zero padding.

    Returns ``(out, cache)`` where ``out`` has shape (n, N, Ho, Wo) and the
    cache feeds :func:`conv2d_vjp`.
    """
    n, cin, h, w = x.shape
    nout, cpg, k, _ = weights.shape
    g = spec.groups
    s = spec.stride
    p = spec.padding
    ho, wo = spec.output_hw(h, w)

    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    win_g = win.reshape(n, g, cpg, ho, wo, k, k)
    w_g = weights.reshape(g, nout // g, cpg, k, k)
    out = np.einsum("ngmxykl,gdmkl->ngdxy", win_g, w_g, optimize=True)
    out = np.ascontiguousarray(out.reshape(n, nout, ho, wo))
    if bias is not None:
        out += bias[None, :, None, None]
    add_macs(n * nout * ho * wo * cpg * k * k)
    cache = (xp.shape, win_g, w_g, spec, x.shape, (ho, wo))
    return out, cache


def conv2d_vjp(grad_out: np.ndarray, cache):
    """Gradients of a conv2d forward w.r.t. input, weights, and bias."""
    xp_shape, win_g, w_g, spec, x_shape, (ho, wo) = cache
    n, cin, h, w = x_shape
    g = spec.groups
    k = spec.kernel
    s = spec.stride
    p = spec.padding
    nout = spec.out_channels

    go_g = grad_out.reshape(n, g, nout // g, ho, wo)
    gw = np.einsum("ngdxy,ngmxykl->gdmkl", go_g, win_g, optimize=True)
    gw = gw.reshape(nout, cin // g, k, k)
    gwin = np.einsum("ngdxy,gdmkl->ngmxykl", go_g, w_g, optimize=True)
    gwin = gwin.reshape(n, cin, ho, wo, k, k)

    gxp = np.zeros(xp_shape)
    for ki in range(k):
        for kj in range(k):
            gxp[:, :, ki : ki + s * ho : s, kj : kj + s * wo : s] += gwin[..., ki, kj]
    gx = gxp[:, :, p : p + h, p : p + w] if p else gxp
    gb = grad_out.sum(axis=(0, 2, 3)) if spec.has_bias else None
    return gx, gw, gb


def conv2d(x: Tensor, weights: Tensor, bias=None, spec: ConvSpec = None) -> Tensor:
    """Standard/grouped convolution (cross-correlation, no kernel flip)."""
    if spec is None:
        raise ValueError("conv2d requires a ConvSpec")
    if x.c != spec.in_channels:
        raise ShapeError(
            f"input has {x.c} channels, spec expects {spec.in_channels}"
        )
    if weights.shape != spec.weight_shape:
        raise ShapeError(
            f"weights shaped {weights.shape}, spec expects {spec.weight_shape}"
        )
    b = None
    if spec.has_bias:
        if bias is None:
            raise ValueError("spec.has_bias is set but no bias supplied")
        b = np.asarray(bias, dtype=np.float64).ravel()
        if b.size != spec.out_channels:
            raise ShapeError(
                f"bias length {b.size} != out_channels {spec.out_channels}"
            )
    elif bias is not None:
        raise ValueError("bias supplied but spec.has_bias is false")
    out, _ = conv2d_forward(x.data, weights.data, b, spec)
    return Tensor._wrap(out)


# ---------------------------------------------------------------------------
# group normalization
# ---------------------------------------------------------------------------


def group_norm_forward(x: np.ndarray, params: GroupNormParams):
    """Normalize per (sample, channel group), then apply per-channel affine."""
    n, c, h, w = x.shape
    g = params.num_groups
    xg = x.reshape(n, g, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + params.epsilon)
    xhat = ((xg - mu) * inv).reshape(n, c, h, w)
    out = params.gamma[None, :, None, None] * xhat + params.beta[None, :, None, None]
    add_macs(2 * x.size)
    cache = (xhat, inv, params.gamma, g, x.shape)
    return out, cache


def group_norm_vjp(grad_out: np.ndarray, cache):
    """Gradients w.r.t. input, gamma, beta. Uses biased group variance."""
    xhat, inv, gamma, g, shape = cache
    n, c, h, w = shape
    ggamma = (grad_out * xhat).sum(axis=(0, 2, 3))
    gbeta = grad_out.sum(axis=(0, 2, 3))
    gxh = (grad_out * gamma[None, :, None, None]).reshape(n, g, -1)
    xhat_g = xhat.reshape(n, g, -1)
    m1 = gxh.mean(axis=2, keepdims=True)
    m2 = (gxh * xhat_g).mean(axis=2, keepdims=True)
    gx = (inv * (gxh - m1 - xhat_g * m2)).reshape(shape)
    return gx, ggamma, gbeta


def group_norm(x: Tensor, params: GroupNormParams) -> Tensor:
    if x.c != params.channels:
        raise ShapeError(
            f"input has {x.c} channels, params cover {params.channels}"
        )
    out, _ = group_norm_forward(x.data, params)
    return Tensor._wrap(out)


def group_norm_prenormalized(x: Tensor, params: GroupNormParams) -> Tensor:
    """The normalized map before the affine step (testing/diagnostics)."""
    if x.c != params.channels:
        raise ShapeError(
            f"input has {x.c} channels, params cover {params.channels}"
        )
    _, cache = group_norm_forward(x.data, params)
    return Tensor._wrap(cache[0].copy())


# ---------------------------------------------------------------------------
# softmax / pooling / pointwise helpers
# ---------------------------------------------------------------------------


def softmax_forward(x: np.ndarray):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)
    return out, out


def softmax_vjp(grad_out: np.ndarray, cache):
    out = cache
    dot = (grad_out * out).sum(axis=1, keepdims=True)
    return out * (grad_out - dot)


def softmax_over_channels(x: Tensor) -> Tensor:
    """Channel-axis softmax with max-subtraction, per sample and location."""
    out, _ = softmax_forward(x.data)
    return Tensor._wrap(out)


def avg_pool_forward(x: np.ndarray):
    n, c, h, w = x.shape
    out = x.mean(axis=(2, 3), keepdims=True)
    return out, (h, w)


def avg_pool_vjp(grad_out: np.ndarray, cache):
    h, w = cache
    return np.tile(grad_out / (h * w), (1, 1, h, w))


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial extent; output shape (n, c, 1, 1)."""
    if x.h < 1 or x.w < 1:
        raise ShapeError("global_avg_pool needs a non-empty spatial extent")
    out, _ = avg_pool_forward(x.data)
    return Tensor._wrap(out)


def sigmoid_forward(x: np.ndarray):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out, out


def sigmoid_vjp(grad_out: np.ndarray, cache):
    out = cache
    return grad_out * out * (1.0 - out)


def sigmoid(x: Tensor) -> Tensor:
    out, _ = sigmoid_forward(x.data)
    return Tensor._wrap(out)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add requires equal shapes, got {a.shape} and {b.shape}")
    return Tensor._wrap(a.data + b.data)


def multiply(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; counts one MAC per element."""
    if a.shape != b.shape:
        raise ShapeError(f"multiply requires equal shapes, got {a.shape} and {b.shape}")
    add_macs(a.size)
    return Tensor._wrap(a.data * b.data)


def concat_channels(tensors) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat_channels needs at least one tensor")
    base = tensors[0]
    for t in tensors[1:]:
        if (t.n, t.h, t.w) != (base.n, base.h, base.w):
            raise ShapeError(
                f"concat_channels requires matching (n, h, w), got {t.shape} vs {base.shape}"
            )
    return Tensor._wrap(np.concatenate([t.data for t in tensors], axis=1))


def split_channels(x: Tensor, sizes) -> list[Tensor]:
    sizes = [int(s) for s in sizes]
    if any(s < 1 for s in sizes):
        raise ValueError(f"split sizes must be positive, got {sizes}")
    if sum(sizes) != x.c:
        raise ShapeError(f"split sizes {sizes} do not sum to {x.c} channels")
    parts = np.split(x.data, np.cumsum(sizes)[:-1], axis=1)
    return [Tensor._wrap(p.copy()) for p in parts]


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------


def upsample_forward(x: np.ndarray, scale: int):
    out = np.repeat(np.repeat(x, scale, axis=2), scale, axis=3)
    return out, (x.shape, scale)


def upsample_vjp(grad_out: np.ndarray, cache):
    (n, c, h, w), s = cache
    return grad_out.reshape(n, c, h, s, w, s).sum(axis=(3, 5))


def nearest_upsample(x: Tensor, scale: int) -> Tensor:
    """Replicate each source pixel into a scale x scale block."""
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    out, _ = upsample_forward(x.data, scale)
    return Tensor._wrap(out)


def pixel_shuffle_forward(x: np.ndarray, scale: int):
    n, c, h, w = x.shape
    r = scale
    co = c // (r * r)
    out = (
        x.reshape(n, co, r, r, h, w)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(n, co, h * r, w * r)
    )
    return np.ascontiguousarray(out), (x.shape, r)


def pixel_unshuffle_array(y: np.ndarray, scale: int) -> np.ndarray:
    """Inverse rearrangement of :func:`pixel_shuffle_forward` (also its VJP)."""
    n, co, hh, ww = y.shape
    r = scale
    h, w = hh // r, ww // r
    out = (
        y.reshape(n, co, h, r, w, r)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, co * r * r, h, w)
    )
    return np.ascontiguousarray(out)


def pixel_shuffle(x: Tensor, scale: int) -> Tensor:
    """Channel-to-space rearrangement: (n, s*s*c, h, w) -> (n, c, s*h, s*w).

    Channel order is block-major: output channel ``t`` collects input
    channels ``t*s*s .. t*s*s + s*s - 1`` as its s x s spatial phases.
    """
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    if x.c % (scale * scale):
        raise ShapeError(
            f"pixel_shuffle needs channels divisible by {scale * scale}, got {x.c}"
        )
    out, _ = pixel_shuffle_forward(x.data, scale)
    return Tensor._wrap(out)
