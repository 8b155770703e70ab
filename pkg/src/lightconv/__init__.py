"""Lightweight convolution blocks with exact cost accounting and verification.

The package provides:

* an immutable NCHW tensor type with primitive operations and the LTB1
  binary file format,
* depthwise-separable convolution plus its exact parameter/MAC cost model,
* the SRU/CRU spatial-and-channel reconstruction block,
* ghost convolutions, ghost bottlenecks, and the C3Ghost block,
* content-aware reassembly upsampling,
* a central-difference gradient checker for every differentiable block,
* a JSON block-graph runtime with per-node cost analysis and a CLI,
* a detection-metrics evaluator (IoU matching, AP, mAP, F1).
"""

from .blocks import CHECKABLE_KINDS, GRAPH_KINDS, block_kinds, make_block
from .carafe import (
    CarafeParams,
    KernelField,
    carafe_forward,
    predict_kernels,
    reassemble,
)
from .cost import (
    MAC_CONVENTION,
    CostReport,
    conv_cost,
    cost_ratio,
    cost_ratio_exact,
    ds_forward,
)
from .counting import MacCounter, count_macs
from .errors import FormatError, GraphError, ShapeError
from .ghost import (
    C3GhostSpec,
    GhostBottleneckSpec,
    GhostSpec,
    c3ghost,
    ghost_bottleneck,
    ghost_conv,
)
from .gradcheck import GradCheckReport, check_module, numeric_gradient, relative_error
from .graph import (
    BlockGraph,
    GraphCostReport,
    analyze_graph,
    load_graph,
    parse_graph,
    run_graph,
)
from .ltb import read_tensor, write_tensor
from .metrics import (
    DetectionRecord,
    GroundTruthRecord,
    MetricsReport,
    average_precision,
    f1_score,
    iou,
    match_detections,
    pr_curve,
    read_detections_csv,
    read_ground_truth_csv,
    summarize,
)
from .ops import (
    add,
    concat_channels,
    conv2d,
    global_avg_pool,
    group_norm,
    group_norm_prenormalized,
    multiply,
    nearest_upsample,
    pixel_shuffle,
    sigmoid,
    softmax_over_channels,
    split_channels,
)
from .scconv import (
    CruParams,
    CruTrace,
    SruParams,
    SruTrace,
    cru_forward,
    scconv_forward,
    sru_forward,
)
from .tensor import ConvSpec, GroupNormParams, Tensor

__version__ = "0.1.0"
