"""Ghost convolution, the residual ghost bottleneck, and the C3Ghost block.

A ghost convolution spends a full convolution on only N/s "intrinsic"
output channels and derives the remaining channels from them with a cheap
depthwise convolution, then concatenates both sets. The bottleneck chains
two ghost convolutions around a residual add; C3Ghost runs a bottleneck
chain on one 1x1-projected path, a bare 1x1 projection on the other, and
fuses them with a concat plus exit 1x1 convolution.

Blocks are linear by default (no activation), which keeps composition
oracles exact; an optional elementwise sigmoid can be enabled per spec.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .ops import conv2d_forward, conv2d_vjp, sigmoid_forward, sigmoid_vjp
from .tensor import ConvSpec, Tensor

_ACTIVATIONS = ("none", "sigmoid")


def _init_conv(rng: np.random.Generator, out_c: int, in_per_group: int, k: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(in_per_group * k * k)
    return rng.uniform(-bound, bound, size=(out_c, in_per_group, k, k))


@dataclass
class GhostSpec:
    """Configuration and weights of one ghost convolution.

    ``ratio`` controls how many output channels the primary convolution
    produces (N / ratio); the cheap depthwise convolution fills in the rest.
    """

    in_channels: int
    out_channels: int
    ratio: int = 2
    primary_kernel: int = 1
    cheap_kernel: int = 3
    activation: str = "none"
    primary_weights: np.ndarray = None
    cheap_weights: np.ndarray = None

    def __post_init__(self):
        if self.ratio < 2:
            raise ValueError(f"ratio must be >= 2, got {self.ratio}")
        if self.out_channels % self.ratio:
            raise ValueError(
                f"out_channels {self.out_channels} not divisible by ratio {self.ratio}"
            )
        if self.primary_kernel % 2 == 0 or self.cheap_kernel % 2 == 0:
            raise ValueError("ghost kernels must be odd to preserve the spatial size")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        init = self.intrinsic_channels
        shapes = {
            "primary_weights": (init, self.in_channels, self.primary_kernel, self.primary_kernel),
            "cheap_weights": (self.out_channels - init, 1, self.cheap_kernel, self.cheap_kernel),
        }
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr is None:
                raise ValueError(f"missing weight array {name!r}")
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} shaped {arr.shape}, expected {shape}")
            setattr(self, name, arr)

    @property
    def intrinsic_channels(self) -> int:
        return self.out_channels // self.ratio

    @classmethod
    def create(cls, in_channels: int, out_channels: int, rng: np.random.Generator,
               ratio: int = 2, primary_kernel: int = 1, cheap_kernel: int = 3,
               activation: str = "none") -> "GhostSpec":
        init = out_channels // ratio
        return cls(
            in_channels=in_channels,
            out_channels=out_channels,
            ratio=ratio,
            primary_kernel=primary_kernel,
            cheap_kernel=cheap_kernel,
            activation=activation,
            primary_weights=_init_conv(rng, init, in_channels, primary_kernel),
            cheap_weights=_init_conv(rng, out_channels - init, 1, cheap_kernel),
        )


def _ghost_specs(spec: GhostSpec) -> tuple[ConvSpec, ConvSpec]:
    init = spec.intrinsic_channels
    primary = ConvSpec(
        spec.in_channels, init, spec.primary_kernel,
        padding=(spec.primary_kernel - 1) // 2,
    )
    cheap = ConvSpec(
        init, spec.out_channels - init, spec.cheap_kernel,
        padding=(spec.cheap_kernel - 1) // 2, groups=init,
    )
    return primary, cheap


def ghost_conv_core(x: np.ndarray, spec: GhostSpec):
    primary_spec, cheap_spec = _ghost_specs(spec)
    intrinsic, cache_p = conv2d_forward(x, spec.primary_weights, None, primary_spec)
    ghost, cache_c = conv2d_forward(intrinsic, spec.cheap_weights, None, cheap_spec)
    out = np.concatenate([intrinsic, ghost], axis=1)
    act_cache = None
    if spec.activation == "sigmoid":
        out, act_cache = sigmoid_forward(out)
    cache = (cache_p, cache_c, spec.intrinsic_channels, act_cache)
    return out, cache


def ghost_conv_vjp(grad_out: np.ndarray, cache):
    cache_p, cache_c, init, act_cache = cache
    if act_cache is not None:
        grad_out = sigmoid_vjp(grad_out, act_cache)
    g_intrinsic = np.ascontiguousarray(grad_out[:, :init])
    g_ghost = np.ascontiguousarray(grad_out[:, init:])
    g_int2, g_cheap, _ = conv2d_vjp(g_ghost, cache_c)
    gx, g_primary, _ = conv2d_vjp(g_intrinsic + g_int2, cache_p)
    return gx, {"primary": g_primary, "cheap": g_cheap}


def ghost_conv(x: Tensor, spec: GhostSpec) -> Tensor:
    """Primary convolution for N/s channels, cheap depthwise for the rest."""
    if x.c != spec.in_channels:
        raise ShapeError(f"input has {x.c} channels, spec expects {spec.in_channels}")
    out, _ = ghost_conv_core(x.data, spec)
    return Tensor._wrap(out)


# ---------------------------------------------------------------------------
# bottleneck
# ---------------------------------------------------------------------------


@dataclass
class GhostBottleneckSpec:
    """Two chained ghost convolutions plus a residual add (stride 1 only)."""

    channels: int
    expand: GhostSpec
    project: GhostSpec

    def __post_init__(self):
        if self.expand.in_channels != self.channels:
            raise ValueError("expand stage must consume the block input channels")
        if self.expand.out_channels != self.project.in_channels:
            raise ValueError("project stage must consume the expand stage output")
        if self.project.out_channels != self.channels:
            raise ValueError(
                "residual variant requires out_channels == in_channels, got "
                f"{self.project.out_channels} != {self.channels}"
            )

    @classmethod
    def create(cls, channels: int, rng: np.random.Generator,
               mid_channels: int | None = None) -> "GhostBottleneckSpec":
        mid = channels // 2 if mid_channels is None else mid_channels
        if mid < 2:
            raise ValueError(f"mid_channels must be >= 2 for a ratio-2 ghost, got {mid}")
        return cls(
            channels=channels,
            expand=GhostSpec.create(channels, mid, rng),
            project=GhostSpec.create(mid, channels, rng),
        )


def ghost_bottleneck_core(x: np.ndarray, spec: GhostBottleneckSpec):
    mid, cache_e = ghost_conv_core(x, spec.expand)
    branch, cache_j = ghost_conv_core(mid, spec.project)
    return x + branch, (cache_e, cache_j)


def ghost_bottleneck_vjp(grad_out: np.ndarray, cache):
    cache_e, cache_j = cache
    g_mid, g_project = ghost_conv_vjp(grad_out, cache_j)
    g_in, g_expand = ghost_conv_vjp(g_mid, cache_e)
    gx = grad_out + g_in
    grads = {f"expand.{k}": v for k, v in g_expand.items()}
    grads.update({f"project.{k}": v for k, v in g_project.items()})
    return gx, grads


def ghost_bottleneck(x: Tensor, spec: GhostBottleneckSpec) -> Tensor:
    """Expand ghost conv, project ghost conv, then add the input back."""
    if x.c != spec.channels:
        raise ShapeError(f"input has {x.c} channels, spec expects {spec.channels}")
    out, _ = ghost_bottleneck_core(x.data, spec)
    return Tensor._wrap(out)


# ---------------------------------------------------------------------------
# C3Ghost
# ---------------------------------------------------------------------------


@dataclass
class C3GhostSpec:
    """Dual-path block: bottleneck chain on one path, bare 1x1 on the other."""

    in_channels: int
    out_channels: int
    hidden: int
    bottlenecks: list[GhostBottleneckSpec] = field(default_factory=list)
    entry_main: np.ndarray = None
    entry_side: np.ndarray = None
    exit: np.ndarray = None

    def __post_init__(self):
        if self.hidden < 1:
            raise ValueError(f"hidden width must be >= 1, got {self.hidden}")
        for i, b in enumerate(self.bottlenecks):
            if b.channels != self.hidden:
                raise ValueError(
                    f"bottleneck {i} works on {b.channels} channels, hidden is {self.hidden}"
                )
        shapes = {
            "entry_main": (self.hidden, self.in_channels, 1, 1),
            "entry_side": (self.hidden, self.in_channels, 1, 1),
            "exit": (self.out_channels, 2 * self.hidden, 1, 1),
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
    def create(cls, in_channels: int, out_channels: int, rng: np.random.Generator,
               hidden: int | None = None, n_bottlenecks: int = 1) -> "C3GhostSpec":
        h = out_channels // 2 if hidden is None else hidden
        if n_bottlenecks < 0:
            raise ValueError(f"n_bottlenecks must be >= 0, got {n_bottlenecks}")
        return cls(
            in_channels=in_channels,
            out_channels=out_channels,
            hidden=h,
            bottlenecks=[GhostBottleneckSpec.create(h, rng) for _ in range(n_bottlenecks)],
            entry_main=_init_conv(rng, h, in_channels, 1),
            entry_side=_init_conv(rng, h, in_channels, 1),
            exit=_init_conv(rng, out_channels, 2 * h, 1),
        )


def _c3_specs(spec: C3GhostSpec):
    entry = ConvSpec(spec.in_channels, spec.hidden, 1)
    exit_spec = ConvSpec(2 * spec.hidden, spec.out_channels, 1)
    return entry, exit_spec


def c3ghost_core(x: np.ndarray, spec: C3GhostSpec):
    entry_spec, exit_spec = _c3_specs(spec)
    main, cache_m = conv2d_forward(x, spec.entry_main, None, entry_spec)
    chain_caches = []
    for b in spec.bottlenecks:
        main, c = ghost_bottleneck_core(main, b)
        chain_caches.append(c)
    side, cache_s = conv2d_forward(x, spec.entry_side, None, entry_spec)
    merged = np.concatenate([main, side], axis=1)
    out, cache_x = conv2d_forward(merged, spec.exit, None, exit_spec)
    return out, (cache_m, chain_caches, cache_s, cache_x, spec.hidden)


def c3ghost_vjp(grad_out: np.ndarray, cache):
    cache_m, chain_caches, cache_s, cache_x, hidden = cache
    g_merged, g_exit, _ = conv2d_vjp(grad_out, cache_x)
    g_main = np.ascontiguousarray(g_merged[:, :hidden])
    g_side = np.ascontiguousarray(g_merged[:, hidden:])

    grads = {"exit": g_exit}
    for i in reversed(range(len(chain_caches))):
        g_main, g_b = ghost_bottleneck_vjp(g_main, chain_caches[i])
        grads.update({f"bottleneck{i}.{k}": v for k, v in g_b.items()})
    gx_main, g_entry_main, _ = conv2d_vjp(g_main, cache_m)
    gx_side, g_entry_side, _ = conv2d_vjp(g_side, cache_s)
    grads["entry_main"] = g_entry_main
    grads["entry_side"] = g_entry_side
    return gx_main + gx_side, grads


def c3ghost(x: Tensor, spec: C3GhostSpec) -> Tensor:
    """Bottleneck path and shortcut path, concatenated then mixed by 1x1 conv."""
    if x.c != spec.in_channels:
        raise ShapeError(f"input has {x.c} channels, spec expects {spec.in_channels}")
    out, _ = c3ghost_core(x.data, spec)
    return Tensor._wrap(out)
