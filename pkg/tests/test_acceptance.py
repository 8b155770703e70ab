"""Acceptance suite: one test per criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; plain ``pytest`` reports the same tests pass/fail by name.
"""

import json
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from lightconv import (
    ConvSpec,
    CruParams,
    FormatError,
    SruParams,
    Tensor,
    analyze_graph,
    carafe_forward,
    check_module,
    conv2d,
    conv_cost,
    cost_ratio_exact,
    count_macs,
    cru_forward,
    ds_forward,
    f1_score,
    iou,
    make_block,
    match_detections,
    average_precision,
    nearest_upsample,
    parse_graph,
    predict_kernels,
    read_detections_csv,
    read_ground_truth_csv,
    read_tensor,
    reassemble,
    sru_forward,
    summarize,
    write_tensor,
)
from lightconv.carafe import CarafeParams
from oracles import brute_force_average_precision, count_conv_macs_by_loop

FIXTURES = Path(__file__).parent / "fixtures"
README = Path(__file__).resolve().parents[1] / "README.md"


def report(number, text):
    print(f"[criterion {number:02d}] PASS - {text}")


def counted_standard_cost(k, m, n, h, w):
    """Params by enumerating instantiated weights, MACs by instrumented forward."""
    weights = Tensor.zeros((n, m, k, k))
    params = weights.size
    spec = ConvSpec(m, n, k, padding=(k - 1) // 2)
    with count_macs() as counter:
        conv2d(Tensor.zeros((1, m, h, w)), weights, spec=spec)
    return params, counter.total


def counted_separable_cost(k, m, n, h, w):
    dw = Tensor.zeros((m, 1, k, k))
    pw = Tensor.zeros((n, m, 1, 1))
    params = dw.size + pw.size
    with count_macs() as counter:
        ds_forward(Tensor.zeros((1, m, h, w)), dw, pw)
    return params, counter.total


def test_criterion_01_cost_ratio_identity_grid():
    started = time.perf_counter()
    h = w = 8
    for k in (1, 3, 5, 7):
        for m in (8, 16, 64):
            for n in (8, 32, 128):
                p1, c1 = counted_standard_cost(k, m, n, h, w)
                p2, c2 = counted_separable_cost(k, m, n, h, w)
                expected = cost_ratio_exact(k, n)
                assert Fraction(p2, p1) == expected, (k, m, n)
                assert Fraction(c2, c1) == expected, (k, m, n)
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"grid took {elapsed:.3f}s, budget is 1s"
    report(1, f"counted separable/standard ratios equal 1/N + 1/K^2 exactly on the "
              f"36-point grid ({elapsed * 1000:.0f} ms)")


def test_criterion_02_worked_cost_example():
    k, m, n, h, w = 3, 16, 32, 8, 8
    # element enumeration of instantiated weight tensors
    p1, c1_fwd = counted_standard_cost(k, m, n, h, w)
    p2, c2_fwd = counted_separable_cost(k, m, n, h, w)
    # literal loop-counting oracle
    c1_loop = count_conv_macs_by_loop(h, w, k, m, n)
    c2_loop = (count_conv_macs_by_loop(h, w, k, 1, m)
               + count_conv_macs_by_loop(h, w, 1, m, n))
    assert (p1, c1_fwd, c1_loop) == (4608, 294912, 294912)
    assert (p2, c2_fwd, c2_loop) == (656, 41984, 41984)
    # closed forms agree
    assert conv_cost(k, m, n, h, w, "standard").params == 4608
    assert conv_cost(k, m, n, h, w, "standard").macs == 294912
    assert conv_cost(k, m, n, h, w, "separable").params == 656
    assert conv_cost(k, m, n, h, w, "separable").macs == 41984
    report(2, "K=3, M=16, N=32, H=W=8 counts P1=4608, C1=294912, P2=656, C2=41984 "
              "by element/loop counting")


GRADCHECK_TABLE = [
    # kind, shape, params, seeds (shapes <= (1, 8, 6, 6))
    ("conv2d", (1, 2, 5, 5), {"out_channels": 3, "kernel": 3, "bias": True}, (11, 12, 13)),
    ("group_norm", (1, 4, 3, 3), {"num_groups": 2}, (11, 12, 13)),
    ("ds_conv", (1, 3, 5, 5), {"out_channels": 4, "kernel": 3}, (11, 12, 13)),
    ("ghost_conv", (1, 4, 6, 6), {"out_channels": 8}, (11, 12, 13)),
    ("ghost_bottleneck", (1, 8, 5, 5), {}, (11, 12, 13)),
    ("c3ghost", (1, 8, 5, 5), {}, (11, 12, 13)),
    ("sru", (1, 4, 4, 4), {"gate_mode": "soft"}, (11, 12, 13)),
    ("cru", (1, 8, 4, 4), {}, (11, 12, 13)),
    ("scconv", (1, 8, 4, 4), {"gate_mode": "soft"}, (11, 12, 13)),
    ("predict_kernels", (1, 4, 4, 4), {}, (1, 3, 5)),
    ("reassemble", (1, 4, 4, 4), {}, (11, 12, 13)),
    ("carafe", (1, 4, 4, 4), {}, (1, 3, 12)),
    ("softmax", (1, 4, 3, 3), {}, (11, 12, 13)),
    ("global_avg_pool", (1, 8, 6, 6), {}, (11, 12, 13)),
]


def test_criterion_03_gradient_suite():
    started = time.perf_counter()
    worst = {}
    for kind, shape, params, seeds in GRADCHECK_TABLE:
        for seed in seeds:
            block = make_block(kind, [shape], params, seed=seed)
            rep = check_module(block, shape, seed=seed, tolerance=1e-5, epsilon=1e-6)
            assert rep.status == "ok", (kind, seed)
            assert rep.passed, (kind, seed, rep.max_relative_errors)
            worst[kind] = max(worst.get(kind, 0.0), max(rep.max_relative_errors.values()))
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s, budget is 60s"
    summary = max(worst.values())
    report(3, f"{len(GRADCHECK_TABLE)} blocks x 3 seeds pass at rel err < 1e-5 "
              f"(worst {summary:.2e}, {elapsed:.1f}s)")


def test_criterion_04_sru_invariants():
    rng = np.random.default_rng(42)
    params = SruParams.create(8, rng, num_groups=2, gate_mode="hard")
    weights = params.gn.gamma / params.gn.gamma.sum()
    assert abs(weights.sum() - 1.0) < 1e-12
    x = Tensor(np.random.default_rng(43).uniform(-2, 2, (2, 8, 5, 5)))
    out, trace = sru_forward(x, params)
    np.testing.assert_array_equal(trace.mask_rich.data + trace.mask_poor.data, 1.0)
    np.testing.assert_array_equal(trace.x_rich.data + trace.x_poor.data, x.data)
    assert out.shape == x.shape
    report(4, "channel weights sum to 1; hard masks partition exactly; gated parts "
              "reassemble the input; shape preserved")


def test_criterion_05_cru_invariants():
    params = CruParams.create(8, np.random.default_rng(44))
    x = Tensor(np.random.default_rng(45).uniform(-2, 2, (2, 8, 4, 4)))
    out, trace = cru_forward(x, params)
    total = trace.beta_upper.data + trace.beta_lower.data
    np.testing.assert_allclose(total, 1.0, atol=1e-12)
    low = np.minimum(trace.y_upper.data, trace.y_lower.data)
    high = np.maximum(trace.y_upper.data, trace.y_lower.data)
    assert np.all(out.data >= low - 1e-12) and np.all(out.data <= high + 1e-12)
    assert out.shape == x.shape
    report(5, "branch attention weights sum to 1 per channel; output is a per-channel "
              "convex combination; shape preserved")


def test_criterion_06_carafe_invariants():
    params = CarafeParams.create(4, np.random.default_rng(46))
    x = Tensor(np.random.default_rng(47).uniform(-2, 2, (1, 4, 6, 6)))
    field = predict_kernels(x, params)
    np.testing.assert_allclose(field.tensor.data.sum(axis=1), 1.0, atol=1e-9)

    constant = Tensor.full((1, 4, 6, 6), 3.25)
    out = carafe_forward(constant, params)
    pad = params.k_up // 2
    interior = out.data[:, :, 2 * pad : 2 * (6 - pad), 2 * pad : 2 * (6 - pad)]
    np.testing.assert_allclose(interior, 3.25, atol=1e-9)

    kernels = np.zeros((1, 25, 12, 12))
    kernels[:, 12] = 1.0  # center tap of the 5x5 window
    nn = reassemble(x, Tensor(kernels), 2, 5)
    np.testing.assert_array_equal(nn.data, nearest_upsample(x, 2).data)
    report(6, "kernel vectors sum to 1; constant input reproduced on interior "
              "support; one-hot center kernels equal nearest-neighbor exactly")


def test_criterion_07_ghost_efficiency():
    # element counting on instantiated weights
    from lightconv import GhostSpec

    spec = GhostSpec.create(64, 64, np.random.default_rng(48), primary_kernel=3)
    ghost_params = spec.primary_weights.size + spec.cheap_weights.size
    standard_params = np.zeros((64, 64, 3, 3)).size
    assert ghost_params == 18720
    assert standard_params == 36864

    def doc(kind, m, n):
        params = ({"out_channels": n, "kernel": 3} if kind == "conv2d"
                  else {"out_channels": n})
        return json.dumps({
            "input_shape": [1, m, 8, 8],
            "nodes": [{"id": "a", "kind": kind, "params": params, "seed": 0}],
            "edges": [],
        })

    for m, n in [(2, 4), (16, 16), (64, 64), (8, 32)]:
        conv_total = analyze_graph(parse_graph(doc("conv2d", m, n))).total_params
        ghost_total = analyze_graph(parse_graph(doc("ghost_conv", m, n))).total_params
        assert ghost_total < conv_total, (m, n)
    report(7, "ghost conv (s=2, 3x3/3x3, M=N=64) counts 18720 params vs 36864 "
              "standard; node swaps strictly decrease totals")


def test_criterion_08_metrics_oracle():
    # 50 random tiny instances against the brute-force pipeline
    rng = np.random.default_rng(49)
    checked = 0
    for _ in range(50):
        from lightconv import DetectionRecord, GroundTruthRecord

        gts = []
        for _g in range(rng.integers(1, 4)):
            x, y = rng.uniform(0, 8, 2)
            w, h = rng.uniform(1, 4, 2)
            gts.append(GroundTruthRecord("img", "c", (x, y, x + w, y + h)))
        dets = []
        for _d in range(rng.integers(1, 6)):
            if rng.random() < 0.6:
                b = gts[rng.integers(0, len(gts))].box
                j = rng.uniform(-0.4, 0.4, 4)
                box = (b[0] + j[0], b[1] + j[1], b[2] + j[2], b[3] + j[3])
                if not (box[0] < box[2] and box[1] < box[3]):
                    box = b
            else:
                x, y = rng.uniform(0, 8, 2)
                w, h = rng.uniform(1, 4, 2)
                box = (x, y, x + w, y + h)
            dets.append(DetectionRecord("img", "c", box, float(rng.uniform(0.05, 1.0))))
        result = match_detections(dets, gts, "c")
        got = average_precision(result.flags, result.num_ground_truth)
        want = brute_force_average_precision(result.flags, result.num_ground_truth)
        assert abs(got - want) < 1e-9
        checked += 1
    assert checked == 50

    ap = average_precision([True, False, True], 2)
    assert abs(ap - 5.0 / 6.0) < 1e-12

    f1 = f1_score(0.770, 0.724)
    assert abs(f1 - 0.7464) < 5e-4
    assert abs(f1 - 0.74) <= 0.01
    report(8, "AP matches brute force on 50 instances; [TP,FP,TP]/2GT = 0.83333; "
              f"F1(0.770, 0.724) = {f1:.4f}, within 0.01 of the 0.74 operating peak")


def test_criterion_09_composite_shape_and_cost_agreement():
    graph = parse_graph((FIXTURES / "mini_neck.json").read_text())
    assert graph.output_shape == (1, 6, 32, 32)
    from lightconv import run_graph

    x = Tensor(np.random.default_rng(50).uniform(-1, 1, (1, 32, 16, 16)))
    out = run_graph(graph, x)
    assert out.shape == (1, 6, 32, 32)

    first = analyze_graph(graph).to_dict()
    second = analyze_graph(parse_graph((FIXTURES / "mini_neck.json").read_text())).to_dict()
    assert json.dumps(first) == json.dumps(second)

    head = next(e for e in first["nodes"] if e["id"] == "head")
    want = conv_cost(1, 32, 6, 32, 32, "standard")
    assert head["params"] == want.params
    assert head["macs"] == want.macs
    report(9, "mini neck maps (1,32,16,16) -> (1,6,32,32); cost report deterministic; "
              "conv node agrees with the closed-form cost module")


def test_criterion_10_non_reproduction_statement():
    text = README.read_text(encoding="utf-8")
    for token in ("not reproduced", "79.6", "77.0", "NEU-DET"):
        assert token in text, f"README must state the non-reproduction terms ({token})"
    report(10, "README states that trained detection results (mAP 79.6 / precision "
               "77.0, NEU-DET) are not reproduced; this suite substitutes for them")


def test_criterion_11_file_format_conformance(tmp_path):
    t = Tensor(np.random.default_rng(51).standard_normal((2, 3, 4, 5)))
    path = tmp_path / "t.ltb"
    write_tensor(path, t)
    assert read_tensor(path).data.tobytes() == t.data.tobytes()

    bad_magic = bytearray(path.read_bytes())
    bad_magic[:4] = b"XXXX"
    (tmp_path / "bad.ltb").write_bytes(bytes(bad_magic))
    with pytest.raises(FormatError, match="magic"):
        read_tensor(tmp_path / "bad.ltb")

    short = path.read_bytes()[:-8]
    (tmp_path / "short.ltb").write_bytes(short)
    with pytest.raises(FormatError, match="length mismatch"):
        read_tensor(tmp_path / "short.ltb")

    dets = read_detections_csv(FIXTURES / "sample_detections.csv")
    gts = read_ground_truth_csv(FIXTURES / "sample_ground_truth.csv")
    got = summarize(dets, gts, iou_threshold=0.5, confidence_threshold=0.25).to_dict()
    want = json.loads((FIXTURES / "sample_metrics.json").read_text())
    assert got == want
    report(11, "LTB1 roundtrip bit-exact with specified failure modes; CSV eval "
               "reproduces the fixture report exactly")
