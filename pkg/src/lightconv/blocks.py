"""Uniform block wrappers around the functional kernels.

A block bundles hyperparameters and weight arrays behind a common surface:
``forward`` / ``forward_with_cache`` / ``backward`` for evaluation and
gradient checking, ``param_groups`` for live access to the weights, and
``cost`` for exact parameter and MAC accounting via an instrumented
forward pass. Weights are materialized deterministically from a seed
(uniform in [-b, b] with b = 1/sqrt(fan_in) for convolutions), or can be
overwritten through :meth:`Block.set_param`.
"""

import numpy as np

from . import carafe as _carafe
from . import cost as _cost
from . import ghost as _ghost
from . import ops as _ops
from . import scconv as _scconv
from .counting import count_macs
from .errors import ShapeError
from .tensor import ConvSpec, GroupNormParams, Tensor


def _parse_params(kind: str, params: dict, schema: dict) -> dict:
    params = dict(params or {})
    out = {}
    for key, (convert, default) in schema.items():
        if key in params:
            out[key] = convert(params.pop(key))
        else:
            out[key] = default
    if params:
        raise ValueError(f"unknown parameter(s) {sorted(params)} for kind '{kind}'")
    return out


def _init_conv(rng, out_c, in_per_group, k):
    bound = 1.0 / np.sqrt(in_per_group * k * k)
    return rng.uniform(-bound, bound, size=(out_c, in_per_group, k, k))


class Block:
    """Base class; subclasses set ``kind`` and ``arity``."""

    kind = ""
    arity = 1
    differentiable = True

    def __init__(self, in_shapes):
        if len(in_shapes) != self.arity:
            raise ShapeError(
                f"kind '{self.kind}' takes {self.arity} input(s), got {len(in_shapes)}"
            )
        self.in_shapes = [tuple(int(d) for d in s) for s in in_shapes]

    # -- parameter access ----------------------------------------------

    def param_groups(self) -> dict[str, np.ndarray]:
        return {}

    def bias_group_names(self) -> frozenset[str]:
        return frozenset()

    def set_param(self, name: str, values: np.ndarray) -> None:
        groups = self.param_groups()
        if name not in groups:
            raise KeyError(f"kind '{self.kind}' has no parameter group '{name}'")
        target = groups[name]
        arr = np.asarray(values, dtype=np.float64)
        if arr.size != target.size:
            raise ShapeError(
                f"parameter '{name}' needs {target.size} values, got {arr.size}"
            )
        target[...] = arr.reshape(target.shape)

    # -- evaluation ------------------------------------------------------

    def forward(self, *xs: Tensor) -> Tensor:
        out, _ = self.forward_with_cache(*xs)
        return out

    def forward_with_cache(self, *xs: Tensor):
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray, cache):
        raise NotImplementedError(f"kind '{self.kind}' has no backward pass")

    def output_shape(self) -> tuple[int, int, int, int]:
        raise NotImplementedError

    # -- accounting ------------------------------------------------------

    def cost(self) -> tuple[int, int, int]:
        """(weight params, bias params, MACs) for a single-sample forward."""
        groups = self.param_groups()
        bias_names = self.bias_group_names()
        params = sum(a.size for k, a in groups.items() if k not in bias_names)
        bias_params = sum(a.size for k, a in groups.items() if k in bias_names)
        zeros = [Tensor.zeros((1,) + s[1:]) for s in self.in_shapes]
        with count_macs() as counter:
            self.forward(*zeros)
        return int(params), int(bias_params), counter.total


class Conv2dBlock(Block):
    kind = "conv2d"

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        c = self.in_shapes[0][1]
        hp = _parse_params(self.kind, params, {
            "out_channels": (int, c),
            "kernel": (int, 3),
            "stride": (int, 1),
            "padding": (int, None),
            "groups": (int, 1),
            "bias": (bool, False),
        })
        if hp["padding"] is None:
            hp["padding"] = (hp["kernel"] - 1) // 2
        self.spec = ConvSpec(
            in_channels=c,
            out_channels=hp["out_channels"],
            kernel=hp["kernel"],
            stride=hp["stride"],
            padding=hp["padding"],
            groups=hp["groups"],
            has_bias=hp["bias"],
        )
        rng = np.random.default_rng(seed)
        self.weight = _init_conv(
            rng, self.spec.out_channels,
            self.spec.in_channels // self.spec.groups, self.spec.kernel,
        )
        self.bias = None
        if self.spec.has_bias:
            bound = 1.0 / np.sqrt(self.spec.in_channels // self.spec.groups
                                  * self.spec.kernel ** 2)
            self.bias = rng.uniform(-bound, bound, size=self.spec.out_channels)

    def param_groups(self):
        groups = {"weight": self.weight}
        if self.bias is not None:
            groups["bias"] = self.bias
        return groups

    def bias_group_names(self):
        return frozenset({"bias"})

    def forward_with_cache(self, x):
        out, cache = _ops.conv2d_forward(x.data, self.weight, self.bias, self.spec)
        return Tensor._wrap(out), cache

    def backward(self, grad_out, cache):
        gx, gw, gb = _ops.conv2d_vjp(grad_out, cache)
        grads = {"weight": gw}
        if gb is not None:
            grads["bias"] = gb
        return gx, grads

    def output_shape(self):
        n, c, h, w = self.in_shapes[0]
        ho, wo = self.spec.output_hw(h, w)
        return (n, self.spec.out_channels, ho, wo)


class DsConvBlock(Block):
    kind = "ds_conv"

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        c = self.in_shapes[0][1]
        hp = _parse_params(self.kind, params, {
            "out_channels": (int, c),
            "kernel": (int, 3),
        })
        if hp["kernel"] % 2 == 0:
            raise ValueError(f"ds_conv kernel must be odd, got {hp['kernel']}")
        self.out_channels = hp["out_channels"]
        self.kernel = hp["kernel"]
        rng = np.random.default_rng(seed)
        self.depthwise = _init_conv(rng, c, 1, self.kernel)
        self.pointwise = _init_conv(rng, self.out_channels, c, 1)

    def param_groups(self):
        return {"depthwise": self.depthwise, "pointwise": self.pointwise}

    def forward_with_cache(self, x):
        out, cache = _cost.ds_forward_core(x.data, self.depthwise, self.pointwise)
        return Tensor._wrap(out), cache

    def backward(self, grad_out, cache):
        gx, gdw, gpw = _cost.ds_vjp(grad_out, cache)
        return gx, {"depthwise": gdw, "pointwise": gpw}

    def output_shape(self):
        n, c, h, w = self.in_shapes[0]
        return (n, self.out_channels, h, w)


class GroupNormBlock(Block):
    kind = "group_norm"

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        c = self.in_shapes[0][1]
        hp = _parse_params(self.kind, params, {
            "num_groups": (int, 2),
            "epsilon": (float, 1e-5),
        })
        rng = np.random.default_rng(seed)
        self.params = GroupNormParams(
            gamma=rng.uniform(0.25, 1.0, size=c),
            beta=rng.uniform(-0.5, 0.5, size=c),
            num_groups=hp["num_groups"],
            epsilon=hp["epsilon"],
        )

    def param_groups(self):
        return {"gamma": self.params.gamma, "beta": self.params.beta}

    def forward_with_cache(self, x):
        out, cache = _ops.group_norm_forward(x.data, self.params)
        return Tensor._wrap(out), cache

    def backward(self, grad_out, cache):
        gx, ggamma, gbeta = _ops.group_norm_vjp(grad_out, cache)
        return gx, {"gamma": ggamma, "beta": gbeta}

    def output_shape(self):
        return self.in_shapes[0]


class SoftmaxBlock(Block):
    kind = "softmax"

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        _parse_params(self.kind, params, {})

    def forward_with_cache(self, x):
        out, cache = _ops.softmax_forward(x.data)
        return Tensor._wrap(out), cache

    def backward(self, grad_out, cache):
        return _ops.softmax_vjp(grad_out, cache), {}

    def output_shape(self):
        return self.in_shapes[0]


class GlobalAvgPoolBlock(Block):
    kind = "global_avg_pool"

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        _parse_params(self.kind, params, {})

    def forward_with_cache(self, x):
        out, cache = _ops.avg_pool_forward(x.data)
        return Tensor._wrap(out), cache

    def backward(self, grad_out, cache):
        return _ops.avg_pool_vjp(grad_out, cache), {}

    def output_shape(self):
        n, c, h, w = self.in_shapes[0]
        return (n, c, 1, 1)


class NearestUpsampleBlock(Block):
    kind = "nearest_upsample"

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        hp = _parse_params(self.kind, params, {"scale": (int, 2)})
        if hp["scale"] < 1:
            raise ValueError(f"scale must be >= 1, got {hp['scale']}")
        self.scale = hp["scale"]

    def forward_with_cache(self, x):
        out, cache = _ops.upsample_forward(x.data, self.scale)
        return Tensor._wrap(out), cache

    def backward(self, grad_out, cache):
        return _ops.upsample_vjp(grad_out, cache), {}

    def output_shape(self):
        n, c, h, w = self.in_shapes[0]
        return (n, c, self.scale * h, self.scale * w)


class SruBlock(Block):
    kind = "sru"

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        c = self.in_shapes[0][1]
        if c % 2:
            raise ValueError(f"sru needs an even channel count, got {c}")
        hp = _parse_params(self.kind, params, {
            "num_groups": (int, 2),
            "threshold": (float, 0.5),
            "gate_mode": (str, "hard"),
            "epsilon": (float, 1e-5),
        })
        rng = np.random.default_rng(seed)
        self.params = _scconv.SruParams.create(
            c, rng, num_groups=hp["num_groups"], threshold=hp["threshold"],
            gate_mode=hp["gate_mode"], epsilon=hp["epsilon"],
        )

    @property
    def differentiable(self):
        return self.params.gate_mode == "soft"

    def param_groups(self):
        return {"gamma": self.params.gn.gamma, "beta": self.params.gn.beta}

    def forward_with_cache(self, x):
        out, _, cache = _scconv.sru_forward_core(x.data, self.params)
        return Tensor._wrap(out), cache

    def backward(self, grad_out, cache):
        gx, ggamma, gbeta = _scconv.sru_vjp(grad_out, cache)
        return gx, {"gamma": ggamma, "beta": gbeta}

    def output_shape(self):
        return self.in_shapes[0]


class CruBlock(Block):
    kind = "cru"

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        c = self.in_shapes[0][1]
        hp = _parse_params(self.kind, params, {
            "alpha": (float, 0.5),
            "compression": (int, 2),
            "gwc_groups": (int, 2),
            "gwc_kernel": (int, 3),
        })
        rng = np.random.default_rng(seed)
        self.params = _scconv.CruParams.create(
            c, rng, alpha=hp["alpha"], compression=hp["compression"],
            gwc_groups=hp["gwc_groups"], gwc_kernel=hp["gwc_kernel"],
        )

    def param_groups(self):
        p = self.params
        return {
            "squeeze_up": p.squeeze_up,
            "squeeze_low": p.squeeze_low,
            "gwc": p.gwc,
            "pwc_up": p.pwc_up,
            "pwc_low": p.pwc_low,
        }

    def forward_with_cache(self, x):
        out, _, cache = _scconv.cru_forward_core(x.data, self.params)
        return Tensor._wrap(out), cache

    def backward(self, grad_out, cache):
        return _scconv.cru_vjp(grad_out, cache)

    def output_shape(self):
        return self.in_shapes[0]


class ScconvBlock(Block):
    kind = "scconv"

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        c = self.in_shapes[0][1]
        if c % 2:
            raise ValueError(f"scconv needs an even channel count, got {c}")
        hp = _parse_params(self.kind, params, {
            "num_groups": (int, 2),
            "threshold": (float, 0.5),
            "gate_mode": (str, "hard"),
            "epsilon": (float, 1e-5),
            "alpha": (float, 0.5),
            "compression": (int, 2),
            "gwc_groups": (int, 2),
            "gwc_kernel": (int, 3),
        })
        rng = np.random.default_rng(seed)
        self.sru_params = _scconv.SruParams.create(
            c, rng, num_groups=hp["num_groups"], threshold=hp["threshold"],
            gate_mode=hp["gate_mode"], epsilon=hp["epsilon"],
        )
        self.cru_params = _scconv.CruParams.create(
            c, rng, alpha=hp["alpha"], compression=hp["compression"],
            gwc_groups=hp["gwc_groups"], gwc_kernel=hp["gwc_kernel"],
        )

    @property
    def differentiable(self):
        return self.sru_params.gate_mode == "soft"

    def param_groups(self):
        groups = {"sru.gamma": self.sru_params.gn.gamma,
                  "sru.beta": self.sru_params.gn.beta}
        cp = self.cru_params
        groups.update({
            "cru.squeeze_up": cp.squeeze_up,
            "cru.squeeze_low": cp.squeeze_low,
            "cru.gwc": cp.gwc,
            "cru.pwc_up": cp.pwc_up,
            "cru.pwc_low": cp.pwc_low,
        })
        return groups

    def forward_with_cache(self, x):
        gated, _, sru_cache = _scconv.sru_forward_core(x.data, self.sru_params)
        out, _, cru_cache = _scconv.cru_forward_core(gated, self.cru_params)
        return Tensor._wrap(out), (sru_cache, cru_cache)

    def backward(self, grad_out, cache):
        sru_cache, cru_cache = cache
        g_gated, cru_grads = _scconv.cru_vjp(grad_out, cru_cache)
        gx, ggamma, gbeta = _scconv.sru_vjp(g_gated, sru_cache)
        grads = {"sru.gamma": ggamma, "sru.beta": gbeta}
        grads.update({f"cru.{k}": v for k, v in cru_grads.items()})
        return gx, grads

    def output_shape(self):
        return self.in_shapes[0]


class GhostConvBlock(Block):
    kind = "ghost_conv"

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        c = self.in_shapes[0][1]
        hp = _parse_params(self.kind, params, {
            "out_channels": (int, c),
            "ratio": (int, 2),
            "primary_kernel": (int, 3),
            "cheap_kernel": (int, 3),
            "activation": (str, "none"),
        })
        rng = np.random.default_rng(seed)
        self.spec = _ghost.GhostSpec.create(
            c, hp["out_channels"], rng, ratio=hp["ratio"],
            primary_kernel=hp["primary_kernel"], cheap_kernel=hp["cheap_kernel"],
            activation=hp["activation"],
        )

    def param_groups(self):
        return {"primary": self.spec.primary_weights, "cheap": self.spec.cheap_weights}

    def forward_with_cache(self, x):
        out, cache = _ghost.ghost_conv_core(x.data, self.spec)
        return Tensor._wrap(out), cache

    def backward(self, grad_out, cache):
        return _ghost.ghost_conv_vjp(grad_out, cache)

    def output_shape(self):
        n, c, h, w = self.in_shapes[0]
        return (n, self.spec.out_channels, h, w)


class GhostBottleneckBlock(Block):
    kind = "ghost_bottleneck"

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        c = self.in_shapes[0][1]
        hp = _parse_params(self.kind, params, {"mid_channels": (int, c // 2)})
        rng = np.random.default_rng(seed)
        self.spec = _ghost.GhostBottleneckSpec.create(c, rng, mid_channels=hp["mid_channels"])

    def param_groups(self):
        return {
            "expand.primary": self.spec.expand.primary_weights,
            "expand.cheap": self.spec.expand.cheap_weights,
            "project.primary": self.spec.project.primary_weights,
            "project.cheap": self.spec.project.cheap_weights,
        }

    def forward_with_cache(self, x):
        out, cache = _ghost.ghost_bottleneck_core(x.data, self.spec)
        return Tensor._wrap(out), cache

    def backward(self, grad_out, cache):
        return _ghost.ghost_bottleneck_vjp(grad_out, cache)

    def output_shape(self):
        return self.in_shapes[0]


class C3GhostBlock(Block):
    kind = "c3ghost"

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        c = self.in_shapes[0][1]
        hp = _parse_params(self.kind, params, {
            "out_channels": (int, c),
            "hidden": (int, None),
            "n": (int, 1),
        })
        rng = np.random.default_rng(seed)
        self.spec = _ghost.C3GhostSpec.create(
            c, hp["out_channels"], rng, hidden=hp["hidden"], n_bottlenecks=hp["n"],
        )

    def param_groups(self):
        groups = {
            "entry_main": self.spec.entry_main,
            "entry_side": self.spec.entry_side,
            "exit": self.spec.exit,
        }
        for i, b in enumerate(self.spec.bottlenecks):
            groups[f"bottleneck{i}.expand.primary"] = b.expand.primary_weights
            groups[f"bottleneck{i}.expand.cheap"] = b.expand.cheap_weights
            groups[f"bottleneck{i}.project.primary"] = b.project.primary_weights
            groups[f"bottleneck{i}.project.cheap"] = b.project.cheap_weights
        return groups

    def forward_with_cache(self, x):
        out, cache = _ghost.c3ghost_core(x.data, self.spec)
        return Tensor._wrap(out), cache

    def backward(self, grad_out, cache):
        return _ghost.c3ghost_vjp(grad_out, cache)

    def output_shape(self):
        n, c, h, w = self.in_shapes[0]
        return (n, self.spec.out_channels, h, w)


class CarafeBlock(Block):
    kind = "carafe"

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        c = self.in_shapes[0][1]
        hp = _parse_params(self.kind, params, {
            "upscale": (int, 2),
            "k_up": (int, 5),
            "k_enc": (int, 3),
            "mid_channels": (int, None),
        })
        rng = np.random.default_rng(seed)
        self.params = _carafe.CarafeParams.create(
            c, rng, upscale=hp["upscale"], k_up=hp["k_up"], k_enc=hp["k_enc"],
            mid_channels=hp["mid_channels"],
        )

    def param_groups(self):
        return {"compressor": self.params.compressor, "encoder": self.params.encoder}

    def forward_with_cache(self, x):
        out, cache = _carafe.carafe_core(x.data, self.params)
        return Tensor._wrap(out), cache

    def backward(self, grad_out, cache):
        return _carafe.carafe_vjp(grad_out, cache)

    def output_shape(self):
        n, c, h, w = self.in_shapes[0]
        s = self.params.upscale
        return (n, c, s * h, s * w)


class PredictKernelsBlock(CarafeBlock):
    kind = "predict_kernels"

    def forward_with_cache(self, x):
        out, cache = _carafe.predict_kernels_core(x.data, self.params)
        return Tensor._wrap(out), cache

    def backward(self, grad_out, cache):
        return _carafe.predict_kernels_vjp(grad_out, cache)

    def output_shape(self):
        n, c, h, w = self.in_shapes[0]
        s = self.params.upscale
        return (n, self.params.k_up ** 2, s * h, s * w)


class ReassembleBlock(Block):
    """Reassembly with the kernel field held as a free parameter group."""

    kind = "reassemble"

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        n, c, h, w = self.in_shapes[0]
        hp = _parse_params(self.kind, params, {"upscale": (int, 2), "k_up": (int, 5)})
        self.upscale = hp["upscale"]
        self.k_up = hp["k_up"]
        if self.k_up % 2 == 0:
            raise ValueError(f"k_up must be odd, got {self.k_up}")
        rng = np.random.default_rng(seed)
        shape = (n, self.k_up ** 2, self.upscale * h, self.upscale * w)
        self.kernels = rng.uniform(-0.5, 0.5, size=shape)

    def param_groups(self):
        return {"kernels": self.kernels}

    def forward_with_cache(self, x):
        out, cache = _carafe.reassemble_forward(x.data, self.kernels, self.upscale, self.k_up)
        return Tensor._wrap(out), cache

    def backward(self, grad_out, cache):
        gx, gk = _carafe.reassemble_vjp(grad_out, cache)
        return gx, {"kernels": gk}

    def output_shape(self):
        n, c, h, w = self.in_shapes[0]
        return (n, c, self.upscale * h, self.upscale * w)


class ConcatBlock(Block):
    kind = "concat"
    arity = 2
    differentiable = False

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        _parse_params(self.kind, params, {})
        a, b = self.in_shapes
        if (a[0], a[2], a[3]) != (b[0], b[2], b[3]):
            raise ShapeError(f"concat inputs must agree on (n, h, w), got {a} and {b}")

    def forward_with_cache(self, a, b):
        return _ops.concat_channels([a, b]), None

    def output_shape(self):
        a, b = self.in_shapes
        return (a[0], a[1] + b[1], a[2], a[3])


class AddBlock(Block):
    kind = "add"
    arity = 2
    differentiable = False

    def __init__(self, in_shapes, params, seed):
        super().__init__(in_shapes)
        _parse_params(self.kind, params, {})
        a, b = self.in_shapes
        if a != b:
            raise ShapeError(f"add inputs must have identical shapes, got {a} and {b}")

    def forward_with_cache(self, a, b):
        return _ops.add(a, b), None

    def output_shape(self):
        return self.in_shapes[0]


_REGISTRY = {
    cls.kind: cls
    for cls in (
        Conv2dBlock, DsConvBlock, GroupNormBlock, SoftmaxBlock, GlobalAvgPoolBlock,
        NearestUpsampleBlock, SruBlock, CruBlock, ScconvBlock, GhostConvBlock,
        GhostBottleneckBlock, C3GhostBlock, CarafeBlock, PredictKernelsBlock,
        ReassembleBlock, ConcatBlock, AddBlock,
    )
}

# kinds a graph document may use
GRAPH_KINDS = frozenset({
    "conv2d", "ds_conv", "sru", "cru", "scconv", "ghost_conv",
    "ghost_bottleneck", "c3ghost", "carafe", "nearest_upsample", "concat", "add",
})

# kinds with an analytic backward pass, eligible for gradient checking
CHECKABLE_KINDS = (
    "conv2d", "group_norm", "ds_conv", "ghost_conv", "ghost_bottleneck",
    "c3ghost", "sru", "cru", "scconv", "predict_kernels", "reassemble",
    "carafe", "softmax", "global_avg_pool",
)


def block_kinds() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def make_block(kind: str, in_shapes, params=None, seed: int = 0) -> Block:
    """Instantiate a block with seeded weights for the given input shapes."""
    if kind not in _REGISTRY:
        raise ValueError(f"unknown kind '{kind}'")
    return _REGISTRY[kind](list(in_shapes), params, seed)
