"""Depthwise-separable convolution and the exact parameter/MAC cost model.

For a K x K convolution over M input channels producing N output channels
on an H x W map (stride 1, "same" padding):

    standard    params = K*K*M*N        macs = H*W*K*K*M*N
    separable   params = K*K*M + M*N    macs = K*K*M*H*W + M*N*H*W

and the separable/standard ratio of either quantity is 1/N + 1/K^2,
independent of M, H, W. MACs are counted as one multiply-accumulate each
(not two FLOPs); bias terms are excluded from the model and reported
separately where a block carries them.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ShapeError
from .ops import conv2d_forward, conv2d_vjp
from .tensor import ConvSpec, Tensor

MAC_CONVENTION = "one multiply-accumulate per kernel product (not 2 FLOPs); bias excluded"

_MODES = ("standard", "separable")


@dataclass(frozen=True)
class CostReport:
    """Exact integer parameter and MAC counts for one convolution."""

    params: int
    macs: int
    mode: str
    inputs: tuple[int, int, int, int, int]  # (K, M, N, H, W)

    def to_dict(self) -> dict:
        k, m, n, h, w = self.inputs
        return {
            "params": self.params,
            "macs": self.macs,
            "mode": self.mode,
            "inputs": {"K": k, "M": m, "N": n, "H": h, "W": w},
            "mac_convention": MAC_CONVENTION,
        }


def conv_cost(kernel: int, in_channels: int, out_channels: int,
              height: int, width: int, mode: str) -> CostReport:
    """Closed-form cost of one standard or depthwise-separable convolution."""
    for name, value in (("kernel", kernel), ("in_channels", in_channels),
                        ("out_channels", out_channels), ("height", height),
                        ("width", width)):
        if int(value) < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    k, m, n, h, w = (int(v) for v in (kernel, in_channels, out_channels, height, width))
    if mode == "standard":
        params = k * k * m * n
        macs = h * w * k * k * m * n
    else:
        params = k * k * m + m * n
        macs = k * k * m * h * w + m * n * h * w
    return CostReport(params=params, macs=macs, mode=mode, inputs=(k, m, n, h, w))


def cost_ratio_exact(kernel: int, out_channels: int) -> Fraction:
    """Separable/standard cost ratio 1/N + 1/K^2 as an exact rational."""
    if kernel < 1 or out_channels < 1:
        raise ValueError("kernel and out_channels must be >= 1")
    return Fraction(1, out_channels) + Fraction(1, kernel * kernel)


def cost_ratio(kernel: int, out_channels: int) -> float:
    """Separable/standard cost ratio 1/N + 1/K^2."""
    return float(cost_ratio_exact(kernel, out_channels))


# ---------------------------------------------------------------------------
# depthwise-separable forward
# ---------------------------------------------------------------------------


def _ds_specs(in_channels: int, out_channels: int, kernel: int) -> tuple[ConvSpec, ConvSpec]:
    if kernel % 2 == 0:
        raise ValueError(f"depthwise-separable kernel must be odd, got {kernel}")
    depthwise = ConvSpec(
        in_channels=in_channels,
        out_channels=in_channels,
        kernel=kernel,
        stride=1,
        padding=(kernel - 1) // 2,
        groups=in_channels,
    )
    pointwise = ConvSpec(in_channels=in_channels, out_channels=out_channels, kernel=1)
    return depthwise, pointwise


def ds_forward_core(x: np.ndarray, depthwise_weights: np.ndarray,
                    pointwise_weights: np.ndarray):
    """ndarray-level separable forward: per-channel K x K conv, then 1x1 mix."""
    m = x.shape[1]
    n = pointwise_weights.shape[0]
    dspec, pspec = _ds_specs(m, n, depthwise_weights.shape[2])
    mid, dcache = conv2d_forward(x, depthwise_weights, None, dspec)
    out, pcache = conv2d_forward(mid, pointwise_weights, None, pspec)
    return out, (dcache, pcache)


def ds_vjp(grad_out: np.ndarray, cache):
    dcache, pcache = cache
    gmid, gpw, _ = conv2d_vjp(grad_out, pcache)
    gx, gdw, _ = conv2d_vjp(gmid, dcache)
    return gx, gdw, gpw


def ds_forward(x: Tensor, depthwise_weights: Tensor, pointwise_weights: Tensor) -> Tensor:
    """Depthwise K x K convolution followed by a pointwise 1x1 convolution.

    Depthwise weights are shaped (M, 1, K, K), pointwise (N, M, 1, 1); K odd,
    stride 1, symmetric padding, so the spatial size is preserved.
    """
    m = x.c
    dw, pw = depthwise_weights, pointwise_weights
    if dw.shape[0] != m or dw.shape[1] != 1 or dw.shape[2] != dw.shape[3]:
        raise ShapeError(
            f"depthwise weights shaped {dw.shape}, expected ({m}, 1, K, K)"
        )
    if pw.shape[1] != m or pw.shape[2] != 1 or pw.shape[3] != 1:
        raise ShapeError(
            f"pointwise weights shaped {pw.shape}, expected (N, {m}, 1, 1)"
        )
    out, _ = ds_forward_core(x.data, dw.data, pw.data)
    return Tensor._wrap(out)
