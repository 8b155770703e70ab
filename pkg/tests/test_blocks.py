"""Block registry: construction, parameter access, instrumented costs."""

import numpy as np
import pytest

from lightconv import Tensor, count_macs, make_block
from lightconv.blocks import CHECKABLE_KINDS, GRAPH_KINDS, block_kinds


def test_registries_are_consistent():
    kinds = set(block_kinds())
    assert GRAPH_KINDS <= kinds
    assert set(CHECKABLE_KINDS) <= kinds


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="unknown kind"):
        make_block("bogus", [(1, 2, 3, 3)], {}, 0)


def test_unknown_param_rejected():
    with pytest.raises(ValueError, match="unknown parameter"):
        make_block("conv2d", [(1, 2, 3, 3)], {"bogus": 1}, 0)


def test_seeded_weights_are_deterministic():
    a = make_block("conv2d", [(1, 3, 4, 4)], {"out_channels": 5}, seed=9)
    b = make_block("conv2d", [(1, 3, 4, 4)], {"out_channels": 5}, seed=9)
    np.testing.assert_array_equal(a.param_groups()["weight"], b.param_groups()["weight"])
    c = make_block("conv2d", [(1, 3, 4, 4)], {"out_channels": 5}, seed=10)
    assert not np.array_equal(a.param_groups()["weight"], c.param_groups()["weight"])


def test_weight_init_bound_follows_fan_in():
    block = make_block("conv2d", [(1, 4, 4, 4)], {"out_channels": 64, "kernel": 3}, seed=0)
    w = block.param_groups()["weight"]
    bound = 1.0 / np.sqrt(4 * 9)
    assert np.abs(w).max() <= bound


def test_set_param_validates_size():
    block = make_block("conv2d", [(1, 2, 3, 3)], {"out_channels": 2, "kernel": 1}, 0)
    with pytest.raises(Exception):
        block.set_param("weight", np.zeros(5))
    with pytest.raises(KeyError):
        block.set_param("nope", np.zeros(4))
    block.set_param("weight", np.eye(2).reshape(2, 2, 1, 1))
    x = Tensor(np.random.default_rng(0).uniform(-1, 1, (1, 2, 3, 3)))
    np.testing.assert_array_equal(block.forward(x).data, x.data)


def test_differentiable_flag_tracks_gate_mode():
    soft = make_block("sru", [(1, 4, 3, 3)], {"gate_mode": "soft"}, 0)
    hard = make_block("sru", [(1, 4, 3, 3)], {"gate_mode": "hard"}, 0)
    assert soft.differentiable and not hard.differentiable


class TestCosts:
    def test_conv_cost_counts(self):
        block = make_block("conv2d", [(1, 16, 8, 8)], {"out_channels": 32, "kernel": 3}, 0)
        params, bias, macs = block.cost()
        assert (params, bias, macs) == (4608, 0, 294912)

    def test_bias_split_out(self):
        block = make_block("conv2d", [(1, 4, 4, 4)], {"out_channels": 8, "bias": True}, 0)
        params, bias, macs = block.cost()
        assert params == 8 * 4 * 9 and bias == 8

    def test_scconv_macs_hand_count(self):
        # sru: 5 multiplies per element on (1, 8, 4, 4) = 640
        # cru: squeeze 128 + 128, gwc 1152, pwc_up 256, pwc_low 192,
        #      attention weighting 256
        block = make_block("scconv", [(1, 8, 4, 4)], {}, 0)
        _, _, macs = block.cost()
        assert macs == 640 + 2112

    def test_ghost_macs_hand_count(self):
        block = make_block("ghost_conv", [(1, 4, 6, 6)], {"out_channels": 8}, 0)
        _, _, macs = block.cost()
        assert macs == 1 * 4 * 36 * 4 * 9 + 1 * 4 * 36 * 1 * 9

    def test_carafe_macs_hand_count(self):
        block = make_block("carafe", [(1, 4, 4, 4)], {}, 0)
        _, _, macs = block.cost()
        compressor = 16 * 4 * 4
        encoder = 16 * 4 * 100 * 9
        reassembly = 4 * (8 * 8) * 25
        assert macs == compressor + encoder + reassembly

    def test_cost_forward_is_instrumented_not_formulaic(self):
        # counting the same forward under an explicit counter must agree
        block = make_block("c3ghost", [(1, 8, 5, 5)], {}, 0)
        _, _, macs = block.cost()
        with count_macs() as counter:
            block.forward(Tensor.zeros((1, 8, 5, 5)))
        assert counter.total == macs

    def test_routing_blocks_cost_nothing(self):
        for kind in ("nearest_upsample", "global_avg_pool", "softmax"):
            block = make_block(kind, [(1, 4, 4, 4)], {}, 0)
            params, bias, macs = block.cost()
            assert (params, bias, macs) == (0, 0, 0)


class TestOutputShapes:
    @pytest.mark.parametrize("kind,shape,params,want", [
        ("conv2d", (1, 3, 8, 8), {"out_channels": 5, "kernel": 3, "stride": 2}, (1, 5, 4, 4)),
        ("ds_conv", (2, 4, 6, 6), {"out_channels": 7}, (2, 7, 6, 6)),
        ("sru", (1, 4, 5, 5), {}, (1, 4, 5, 5)),
        ("cru", (1, 8, 5, 5), {}, (1, 8, 5, 5)),
        ("scconv", (1, 8, 5, 5), {}, (1, 8, 5, 5)),
        ("ghost_conv", (1, 4, 5, 5), {"out_channels": 8}, (1, 8, 5, 5)),
        ("ghost_bottleneck", (1, 8, 5, 5), {}, (1, 8, 5, 5)),
        ("c3ghost", (1, 8, 5, 5), {}, (1, 8, 5, 5)),
        ("carafe", (1, 4, 5, 5), {}, (1, 4, 10, 10)),
        ("predict_kernels", (1, 4, 5, 5), {}, (1, 25, 10, 10)),
        ("nearest_upsample", (1, 4, 5, 5), {"scale": 3}, (1, 4, 15, 15)),
        ("global_avg_pool", (2, 6, 5, 5), {}, (2, 6, 1, 1)),
        ("softmax", (1, 4, 5, 5), {}, (1, 4, 5, 5)),
    ])
    def test_declared_matches_actual(self, kind, shape, params, want):
        block = make_block(kind, [shape], params, seed=1)
        assert block.output_shape() == want
        out = block.forward(Tensor(np.random.default_rng(2).uniform(-1, 1, shape)))
        assert out.shape == want

    def test_concat_and_add_shapes(self):
        cat = make_block("concat", [(1, 3, 4, 4), (1, 2, 4, 4)], {}, 0)
        assert cat.output_shape() == (1, 5, 4, 4)
        both = [Tensor.full((1, 3, 4, 4), 1.0), Tensor.full((1, 2, 4, 4), 2.0)]
        assert cat.forward(*both).shape == (1, 5, 4, 4)
        add = make_block("add", [(1, 3, 4, 4), (1, 3, 4, 4)], {}, 0)
        out = add.forward(Tensor.full((1, 3, 4, 4), 1.0), Tensor.full((1, 3, 4, 4), 2.0))
        np.testing.assert_array_equal(out.data, 3.0)
