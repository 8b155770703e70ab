"""Content-aware feature reassembly upsampling.

Kernel prediction runs channel compression (1x1), content encoding
(k_enc x k_enc), channel-to-space expansion (pixel shuffle by the upscale
factor), and a per-location softmax so every target pixel owns a
k_up x k_up probability kernel. Reassembly then forms each upsampled pixel
as that kernel's weighted sum over the k_up x k_up source neighborhood
around its originating pixel, shared across channels.
"""

from dataclasses import dataclass

import numpy as np

from .counting import add_macs
from .errors import ShapeError
from .ops import (
    conv2d_forward,
    conv2d_vjp,
    pixel_shuffle_forward,
    pixel_unshuffle_array,
    softmax_forward,
    softmax_vjp,
)
from .tensor import ConvSpec, Tensor


def _init_conv(rng: np.random.Generator, out_c: int, in_c: int, k: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(in_c * k * k)
    return rng.uniform(-bound, bound, size=(out_c, in_c, k, k))


@dataclass
class CarafeParams:
    """Upscale factor, kernel sizes, and the two predictor convolutions."""

    channels: int
    upscale: int = 2
    k_up: int = 5
    k_enc: int = 3
    mid_channels: int = None
    compressor: np.ndarray = None
    encoder: np.ndarray = None

    def __post_init__(self):
        if self.upscale < 1:
            raise ValueError(f"upscale must be >= 1, got {self.upscale}")
        if self.k_up % 2 == 0 or self.k_up < 1:
            raise ValueError(f"k_up must be odd and positive, got {self.k_up}")
        if self.k_enc % 2 == 0 or self.k_enc < 1:
            raise ValueError(f"k_enc must be odd and positive, got {self.k_enc}")
        if self.mid_channels is None:
            self.mid_channels = min(self.channels, 64)
        if self.mid_channels < 1:
            raise ValueError(f"mid_channels must be >= 1, got {self.mid_channels}")
        enc_out = self.upscale * self.upscale * self.k_up * self.k_up
        shapes = {
            "compressor": (self.mid_channels, self.channels, 1, 1),
            "encoder": (enc_out, self.mid_channels, self.k_enc, self.k_enc),
        }
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr is None:
                raise ValueError(f"missing weight array {name!r}")
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} shaped {arr.shape}, expected {shape}")
            setattr(self, name, arr)

    @classmethod
    def create(cls, channels: int, rng: np.random.Generator, upscale: int = 2,
               k_up: int = 5, k_enc: int = 3,
               mid_channels: int | None = None) -> "CarafeParams":
        mid = min(channels, 64) if mid_channels is None else mid_channels
        enc_out = upscale * upscale * k_up * k_up
        return cls(
            channels=channels,
            upscale=upscale,
            k_up=k_up,
            k_enc=k_enc,
            mid_channels=mid,
            compressor=_init_conv(rng, mid, channels, 1),
            encoder=_init_conv(rng, enc_out, mid, k_enc),
        )


@dataclass
class KernelField:
    """Per-target-pixel reassembly kernels, shape (n, k_up^2, s*H, s*W).

    Each location's k_up^2 weights form a probability vector: non-negative
    and summing to 1 (within 1e-9).
    """

    tensor: Tensor
    upscale: int
    k_up: int

    def __post_init__(self):
        t = self.tensor
        if t.c != self.k_up * self.k_up:
            raise ShapeError(
                f"kernel field has {t.c} channels, expected k_up^2 = {self.k_up ** 2}"
            )
        if t.h % self.upscale or t.w % self.upscale:
            raise ShapeError(
                f"kernel field spatial dims {t.h}x{t.w} not divisible by upscale {self.upscale}"
            )
        if np.any(t.data < 0):
            raise ValueError("kernel weights must be non-negative")
        sums = t.data.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > 1e-9:
            raise ValueError("kernel weights must sum to 1 at every location")


def predict_kernels_core(x: np.ndarray, params: CarafeParams):
    c_spec = ConvSpec(params.channels, params.mid_channels, 1)
    e_spec = ConvSpec(
        params.mid_channels,
        params.upscale ** 2 * params.k_up ** 2,
        params.k_enc,
        padding=(params.k_enc - 1) // 2,
    )
    compressed, cache_c = conv2d_forward(x, params.compressor, None, c_spec)
    encoded, cache_e = conv2d_forward(compressed, params.encoder, None, e_spec)
    expanded, shuffle_cache = pixel_shuffle_forward(encoded, params.upscale)
    kernels, soft_cache = softmax_forward(expanded)
    cache = (cache_c, cache_e, shuffle_cache, soft_cache)
    return kernels, cache


def predict_kernels_vjp(grad_out: np.ndarray, cache):
    cache_c, cache_e, shuffle_cache, soft_cache = cache
    g_expanded = softmax_vjp(grad_out, soft_cache)
    g_encoded = pixel_unshuffle_array(g_expanded, shuffle_cache[1])
    g_compressed, g_encoder, _ = conv2d_vjp(g_encoded, cache_e)
    gx, g_compressor, _ = conv2d_vjp(g_compressed, cache_c)
    return gx, {"compressor": g_compressor, "encoder": g_encoder}


def predict_kernels(x: Tensor, params: CarafeParams) -> KernelField:
    """Compress, encode, expand, and normalize into a field of kernels."""
    if x.c != params.channels:
        raise ShapeError(f"input has {x.c} channels, params cover {params.channels}")
    kernels, _ = predict_kernels_core(x.data, params)
    return KernelField(
        tensor=Tensor._wrap(kernels), upscale=params.upscale, k_up=params.k_up
    )


def reassemble_forward(x: np.ndarray, kernels: np.ndarray, upscale: int, k_up: int):
    """Weighted neighborhood sums; kernels are shared across channels.

    Target (i, j) draws from the k_up x k_up zero-padded neighborhood of
    source pixel (i // upscale, j // upscale).
    """
    n, c, h, w = x.shape
    s = upscale
    pad = k_up // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, c, s * h, s * w))
    for a in range(k_up):
        for b in range(k_up):
            tap = xp[:, :, a : a + h, b : b + w]
            tap_up = np.repeat(np.repeat(tap, s, axis=2), s, axis=3)
            out += tap_up * kernels[:, a * k_up + b][:, None]
    add_macs(n * c * (s * h) * (s * w) * k_up * k_up)
    cache = (xp, kernels, s, k_up, x.shape)
    return out, cache


def reassemble_vjp(grad_out: np.ndarray, cache):
    xp, kernels, s, k_up, (n, c, h, w) = cache
    pad = k_up // 2
    gxp = np.zeros_like(xp)
    gk = np.zeros_like(kernels)
    for a in range(k_up):
        for b in range(k_up):
            tap = xp[:, :, a : a + h, b : b + w]
            tap_up = np.repeat(np.repeat(tap, s, axis=2), s, axis=3)
            t = a * k_up + b
            gk[:, t] = np.einsum("nchw,nchw->nhw", grad_out, tap_up, optimize=True)
            g_tap_up = grad_out * kernels[:, t][:, None]
            g_tap = g_tap_up.reshape(n, c, h, s, w, s).sum(axis=(3, 5))
            gxp[:, :, a : a + h, b : b + w] += g_tap
    gx = gxp[:, :, pad : pad + h, pad : pad + w]
    return np.ascontiguousarray(gx), gk


def reassemble(x: Tensor, kernels, upscale: int, k_up: int) -> Tensor:
    """Apply a kernel field (or raw kernel tensor of matching shape) to x."""
    if isinstance(kernels, KernelField):
        if kernels.upscale != upscale or kernels.k_up != k_up:
            raise ShapeError(
                f"kernel field built for upscale={kernels.upscale}, k_up={kernels.k_up}; "
                f"called with upscale={upscale}, k_up={k_up}"
            )
        kern = kernels.tensor
    else:
        kern = kernels
    if upscale < 1 or k_up % 2 == 0:
        raise ValueError("upscale must be >= 1 and k_up odd")
    expected = (x.n, k_up * k_up, upscale * x.h, upscale * x.w)
    if kern.shape != expected:
        raise ShapeError(f"kernel field shaped {kern.shape}, expected {expected}")
    out, _ = reassemble_forward(x.data, kern.data, upscale, k_up)
    return Tensor._wrap(out)


def carafe_core(x: np.ndarray, params: CarafeParams):
    kernels, cache_p = predict_kernels_core(x, params)
    out, cache_r = reassemble_forward(x, kernels, params.upscale, params.k_up)
    return out, (cache_p, cache_r)


def carafe_vjp(grad_out: np.ndarray, cache):
    cache_p, cache_r = cache
    gx_direct, g_kernels = reassemble_vjp(grad_out, cache_r)
    gx_pred, grads = predict_kernels_vjp(g_kernels, cache_p)
    return gx_direct + gx_pred, grads


def carafe_forward(x: Tensor, params: CarafeParams) -> Tensor:
    """Predict per-pixel kernels from the content, then reassemble upsample."""
    if x.c != params.channels:
        raise ShapeError(f"input has {x.c} channels, params cover {params.channels}")
    out, _ = carafe_core(x.data, params)
    return Tensor._wrap(out)
