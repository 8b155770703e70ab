"""Spatial and channel reconstruction convolution (SRU + CRU).

The spatial unit gates a group-normalized map into informative and
less-informative parts and fuses them by cross-addition of channel halves.
The channel unit splits the channels, transforms each part with cheap
convolutions (grouped 3x3 + pointwise on top, pointwise + feature reuse
below), and fuses the two branch outputs with a two-way softmax channel
attention derived from global average pooling.
"""

from dataclasses import dataclass

import numpy as np

from .counting import add_macs
from .errors import ShapeError
from .ops import (
    avg_pool_forward,
    avg_pool_vjp,
    conv2d_forward,
    conv2d_vjp,
    group_norm_forward,
    group_norm_vjp,
    sigmoid_forward,
    sigmoid_vjp,
)
from .tensor import ConvSpec, GroupNormParams, Tensor

_GATE_MODES = ("hard", "soft")


# ---------------------------------------------------------------------------
# spatial reconstruction unit
# ---------------------------------------------------------------------------


@dataclass
class SruParams:
    """Group-norm parameters plus the gate configuration.

    The per-channel weights gamma must be non-negative with a positive sum;
    they double as the channel-importance weights of the gate.
    """

    gn: GroupNormParams
    threshold: float = 0.5
    gate_mode: str = "hard"

    def __post_init__(self):
        if self.gate_mode not in _GATE_MODES:
            raise ValueError(f"gate_mode must be one of {_GATE_MODES}, got {self.gate_mode!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if np.any(self.gn.gamma < 0):
            raise ValueError("gamma entries must be non-negative for the channel gate")
        if not self.gn.gamma.sum() > 0:
            raise ValueError("gamma must have a positive sum (all-zero gamma is invalid)")

    @property
    def channels(self) -> int:
        return self.gn.channels

    @classmethod
    def create(cls, channels: int, rng: np.random.Generator, num_groups: int = 2,
               threshold: float = 0.5, gate_mode: str = "hard",
               epsilon: float = 1e-5) -> "SruParams":
        """Random positive gamma, small beta; deterministic for a seeded rng."""
        gamma = rng.uniform(0.25, 1.0, size=channels)
        beta = rng.uniform(-0.5, 0.5, size=channels)
        gn = GroupNormParams(gamma=gamma, beta=beta, num_groups=num_groups, epsilon=epsilon)
        return cls(gn=gn, threshold=threshold, gate_mode=gate_mode)


@dataclass
class SruTrace:
    """Intermediates of one spatial-reconstruction pass."""

    gate: Tensor        # W, sigmoid gate map, same shape as the input
    mask_rich: Tensor   # W1 (binary in hard mode)
    mask_poor: Tensor   # W2 = 1 - W1
    x_rich: Tensor      # X1w = W1 * X
    x_poor: Tensor      # X2w = W2 * X
    fused_a: Tensor     # Xw1 = X11 + X22
    fused_b: Tensor     # Xw2 = X21 + X12


def sru_forward_core(x: np.ndarray, params: SruParams):
    n, c, h, w = x.shape
    half = c // 2

    gn_out, gn_cache = group_norm_forward(x, params.gn)
    weights = params.gn.gamma / params.gn.gamma.sum()
    z = weights[None, :, None, None] * gn_out
    add_macs(x.size)
    gate, sig_cache = sigmoid_forward(z)

    if params.gate_mode == "hard":
        mask_rich = (gate >= params.threshold).astype(np.float64)
    else:
        mask_rich = gate
    mask_poor = 1.0 - mask_rich

    x_rich = mask_rich * x
    x_poor = mask_poor * x
    add_macs(2 * x.size)

    fused_a = x_rich[:, :half] + x_poor[:, half:]
    fused_b = x_poor[:, :half] + x_rich[:, half:]
    out = np.concatenate([fused_a, fused_b], axis=1)

    trace = SruTrace(
        gate=Tensor(gate),
        mask_rich=Tensor(mask_rich),
        mask_poor=Tensor(mask_poor),
        x_rich=Tensor(x_rich),
        x_poor=Tensor(x_poor),
        fused_a=Tensor(fused_a),
        fused_b=Tensor(fused_b),
    )
    cache = (x, gn_cache, gn_out, weights, sig_cache, mask_rich, mask_poor, params, half)
    return out, trace, cache


def sru_vjp(grad_out: np.ndarray, cache):
    """Gradients w.r.t. input, gamma, beta (soft gate only).

    In hard mode the masks are piecewise-constant indicator maps; gradient
    flows through them as constants (zero gradient through the threshold),
    so only the soft gate is exposed for gradient checking.
    """
    x, gn_cache, gn_out, weights, sig_cache, mask_rich, mask_poor, params, half = cache

    g1 = grad_out[:, :half]
    g2 = grad_out[:, half:]
    g_rich = grad_out                                  # [g1 ; g2]
    g_poor = np.concatenate([g2, g1], axis=1)          # halves swapped

    gx = g_rich * mask_rich + g_poor * mask_poor
    if params.gate_mode == "hard":
        return gx, np.zeros_like(params.gn.gamma), np.zeros_like(params.gn.beta)

    g_gate = g_rich * x - g_poor * x
    gz = sigmoid_vjp(g_gate, sig_cache)
    g_weights = (gz * gn_out).sum(axis=(0, 2, 3))
    g_gn = gz * weights[None, :, None, None]

    gamma_sum = params.gn.gamma.sum()
    g_gamma_w = (g_weights - np.dot(g_weights, weights)) / gamma_sum

    gx_gn, g_gamma_gn, g_beta = group_norm_vjp(g_gn, gn_cache)
    return gx + gx_gn, g_gamma_w + g_gamma_gn, g_beta


def sru_forward(x: Tensor, params: SruParams) -> tuple[Tensor, SruTrace]:
    """Gate and cross-add the two channel halves; shape is preserved."""
    if x.c != params.channels:
        raise ShapeError(f"input has {x.c} channels, params cover {params.channels}")
    if x.c % 2:
        raise ShapeError(f"channel count must be even for the half-split, got {x.c}")
    out, trace, _ = sru_forward_core(x.data, params)
    return Tensor._wrap(out), trace


# ---------------------------------------------------------------------------
# channel reconstruction unit
# ---------------------------------------------------------------------------


def _cru_channel_split(channels: int, alpha: float, compression: int,
                       gwc_groups: int) -> tuple[int, int, int, int]:
    """Validate the channel bookkeeping; returns (up, low, up_r, low_r)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if compression < 1:
        raise ValueError(f"compression must be >= 1, got {compression}")
    up_f = alpha * channels
    if abs(up_f - round(up_f)) > 1e-9:
        raise ValueError(f"alpha*C must be an integer, got {up_f}")
    up = int(round(up_f))
    low = channels - up
    if up < 1 or low < 1:
        raise ValueError(f"both channel parts must be non-empty, got {up}/{low}")
    if up % compression or low % compression:
        raise ValueError(
            f"split channels ({up}, {low}) must be divisible by compression {compression}"
        )
    up_r = up // compression
    low_r = low // compression
    if up_r % gwc_groups or channels % gwc_groups:
        raise ValueError(
            f"squeezed upper channels {up_r} and output channels {channels} must be "
            f"divisible by gwc_groups {gwc_groups}"
        )
    return up, low, up_r, low_r


@dataclass
class CruParams:
    """Split/transform/fuse configuration and weights.

    For C input channels with split fraction alpha and compression r:
    the upper part keeps alpha*C channels squeezed to alpha*C/r, the lower
    part the rest squeezed to (1-alpha)*C/r. The upper branch runs a grouped
    3x3 plus a pointwise conv (both to C channels, summed); the lower branch
    concatenates a pointwise conv output with the squeezed features back to
    C channels.
    """

    channels: int
    alpha: float = 0.5
    compression: int = 2
    gwc_groups: int = 2
    gwc_kernel: int = 3
    squeeze_up: np.ndarray = None
    squeeze_low: np.ndarray = None
    gwc: np.ndarray = None
    pwc_up: np.ndarray = None
    pwc_low: np.ndarray = None

    def __post_init__(self):
        c = self.channels
        up, low, up_r, low_r = _cru_channel_split(
            c, self.alpha, self.compression, self.gwc_groups
        )
        if self.gwc_kernel % 2 == 0:
            raise ValueError(f"gwc kernel must be odd, got {self.gwc_kernel}")
        self._up, self._low, self._up_r, self._low_r = up, low, up_r, low_r

        shapes = {
            "squeeze_up": (up_r, up, 1, 1),
            "squeeze_low": (low_r, low, 1, 1),
            "gwc": (c, up_r // self.gwc_groups, self.gwc_kernel, self.gwc_kernel),
            "pwc_up": (c, up_r, 1, 1),
            "pwc_low": (c - low_r, low_r, 1, 1),
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
    def create(cls, channels: int, rng: np.random.Generator, alpha: float = 0.5,
               compression: int = 2, gwc_groups: int = 2,
               gwc_kernel: int = 3) -> "CruParams":
        def init(out_c, in_c, k):
            bound = 1.0 / np.sqrt(in_c * k * k)
            return rng.uniform(-bound, bound, size=(out_c, in_c, k, k))

        up, low, up_r, low_r = _cru_channel_split(channels, alpha, compression, gwc_groups)
        return cls(
            channels=channels,
            alpha=alpha,
            compression=compression,
            gwc_groups=gwc_groups,
            gwc_kernel=gwc_kernel,
            squeeze_up=init(up_r, up, 1),
            squeeze_low=init(low_r, low, 1),
            gwc=init(channels, up_r // gwc_groups, gwc_kernel),
            pwc_up=init(channels, up_r, 1),
            pwc_low=init(channels - low_r, low_r, 1),
        )


@dataclass
class CruTrace:
    """Branch outputs plus the pooled descriptors and attention weights."""

    pooled_upper: Tensor   # s1, shape (n, C, 1, 1)
    pooled_lower: Tensor   # s2
    beta_upper: Tensor     # attention weight on the upper branch, (n, C, 1, 1)
    beta_lower: Tensor
    y_upper: Tensor        # Y1
    y_lower: Tensor        # Y2


def _cru_specs(params: CruParams):
    c = params.channels
    up, low, up_r, low_r = params._up, params._low, params._up_r, params._low_r
    k = params.gwc_kernel
    return {
        "squeeze_up": ConvSpec(up, up_r, 1),
        "squeeze_low": ConvSpec(low, low_r, 1),
        "gwc": ConvSpec(up_r, c, k, padding=(k - 1) // 2, groups=params.gwc_groups),
        "pwc_up": ConvSpec(up_r, c, 1),
        "pwc_low": ConvSpec(low_r, c - low_r, 1),
    }


def cru_forward_core(x: np.ndarray, params: CruParams):
    n, c, h, w = x.shape
    up, low_r = params._up, params._low_r
    specs = _cru_specs(params)

    x_up = x[:, :up]
    x_low = x[:, up:]
    squeezed_up, cache_su = conv2d_forward(x_up, params.squeeze_up, None, specs["squeeze_up"])
    squeezed_low, cache_sl = conv2d_forward(x_low, params.squeeze_low, None, specs["squeeze_low"])

    gwc_out, cache_g = conv2d_forward(squeezed_up, params.gwc, None, specs["gwc"])
    pwc_up_out, cache_pu = conv2d_forward(squeezed_up, params.pwc_up, None, specs["pwc_up"])
    y_upper = gwc_out + pwc_up_out

    pwc_low_out, cache_pl = conv2d_forward(squeezed_low, params.pwc_low, None, specs["pwc_low"])
    y_lower = np.concatenate([pwc_low_out, squeezed_low], axis=1)

    s1, pool_cache = avg_pool_forward(y_upper)
    s2, _ = avg_pool_forward(y_lower)

    # two-way softmax per channel, computed stably as a sigmoid of the gap
    beta_upper, sig_cache = sigmoid_forward(s1 - s2)
    beta_lower = 1.0 - beta_upper

    out = beta_upper * y_upper + beta_lower * y_lower
    add_macs(2 * out.size)

    trace = CruTrace(
        pooled_upper=Tensor(s1),
        pooled_lower=Tensor(s2),
        beta_upper=Tensor(beta_upper),
        beta_lower=Tensor(beta_lower),
        y_upper=Tensor(y_upper),
        y_lower=Tensor(y_lower),
    )
    cache = (cache_su, cache_sl, cache_g, cache_pu, cache_pl, pool_cache,
             sig_cache, beta_upper, beta_lower, y_upper, y_lower, up, low_r)
    return out, trace, cache


def cru_vjp(grad_out: np.ndarray, cache):
    """Gradients w.r.t. input and the five weight arrays."""
    (cache_su, cache_sl, cache_g, cache_pu, cache_pl, pool_cache,
     sig_cache, beta_upper, beta_lower, y_upper, y_lower, up, low_r) = cache

    g_beta_upper = (grad_out * y_upper).sum(axis=(2, 3), keepdims=True)
    g_beta_lower = (grad_out * y_lower).sum(axis=(2, 3), keepdims=True)
    gy_upper = grad_out * beta_upper
    gy_lower = grad_out * beta_lower

    g_gap = sigmoid_vjp(g_beta_upper - g_beta_lower, sig_cache)
    gy_upper = gy_upper + avg_pool_vjp(g_gap, pool_cache)
    gy_lower = gy_lower + avg_pool_vjp(-g_gap, pool_cache)

    c_minus = gy_lower.shape[1] - low_r
    g_pwc_low_out = gy_lower[:, :c_minus]
    g_squeezed_low = np.ascontiguousarray(gy_lower[:, c_minus:])
    g_sl2, g_w_pwc_low, _ = conv2d_vjp(g_pwc_low_out, cache_pl)
    g_squeezed_low = g_squeezed_low + g_sl2

    g_su1, g_w_gwc, _ = conv2d_vjp(gy_upper, cache_g)
    g_su2, g_w_pwc_up, _ = conv2d_vjp(gy_upper, cache_pu)
    g_squeezed_up = g_su1 + g_su2

    g_x_up, g_w_squeeze_up, _ = conv2d_vjp(g_squeezed_up, cache_su)
    g_x_low, g_w_squeeze_low, _ = conv2d_vjp(g_squeezed_low, cache_sl)
    gx = np.concatenate([g_x_up, g_x_low], axis=1)

    grads = {
        "squeeze_up": g_w_squeeze_up,
        "squeeze_low": g_w_squeeze_low,
        "gwc": g_w_gwc,
        "pwc_up": g_w_pwc_up,
        "pwc_low": g_w_pwc_low,
    }
    return gx, grads


def cru_forward(x: Tensor, params: CruParams) -> tuple[Tensor, CruTrace]:
    """Split, transform, and fuse the channels; shape is preserved."""
    if x.c != params.channels:
        raise ShapeError(f"input has {x.c} channels, params cover {params.channels}")
    out, trace, _ = cru_forward_core(x.data, params)
    return Tensor._wrap(out), trace


# ---------------------------------------------------------------------------
# full block
# ---------------------------------------------------------------------------


def scconv_forward(x: Tensor, sru: SruParams, cru: CruParams) -> Tensor:
    """Spatial reconstruction followed by channel reconstruction."""
    gated, _ = sru_forward(x, sru)
    out, _ = cru_forward(gated, cru)
    return out
