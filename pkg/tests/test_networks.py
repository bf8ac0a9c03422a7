"""Pyramid architecture contracts: receptive fields, depth progression,
composition algebra, seeding, and the ablation-fairness parameter layout."""

import numpy as np
import pytest
import torch

from spmedit.modulation import validate_layout
from spmedit.netops import ShapeError
from spmedit.networks import (PyramidConfig, build_pyramid, compose_input,
                              parameter_count, pyramid_forward, receptive_field)
from tests.conftest import tiny_config


def tiny_batch(rng, cfg, n=2):
    h, w = cfg.base_resolution
    image = torch.tensor(rng.uniform(-1, 1, (n, 3, h, w)).astype(np.float32))
    mask = torch.zeros(n, 1, h, w)
    mask[:, :, h // 4: 3 * h // 4, w // 4: 3 * w // 4] = 1.0
    seg = torch.tensor(rng.integers(0, cfg.num_classes, (n, h, w)))
    local = torch.where(mask[:, 0].bool(), seg, torch.full_like(seg, cfg.num_classes))
    layout = torch.nn.functional.one_hot(local, cfg.num_classes + 1).permute(0, 3, 1, 2).float()
    return image * (1 - mask), layout, mask


class TestReceptiveField:
    def test_single_layer(self):
        assert receptive_field(1, 5, 2) == 5

    @pytest.mark.parametrize("layers,expected", [(4, 61), (5, 125), (6, 253)])
    def test_recurrence_oracle(self, layers, expected):
        # independent oracle: effective stride product accumulation
        r, jump = 1, 1
        for _ in range(layers):
            r += 4 * jump
            jump *= 2
        assert receptive_field(layers, 5, 2) == expected == r

    def test_covers_input_sides(self):
        for layers, side in ((4, 64), (5, 128), (6, 256)):
            assert receptive_field(layers, 5, 2) >= 0.9 * side


class TestBuildPyramid:
    def test_desk_scale_resolutions(self):
        cfg = tiny_config()
        assert [cfg.scale_resolution(n) for n in (1, 2, 3)] == [(16, 16), (32, 32), (64, 64)]

    def test_paper_scale_resolutions(self):
        cfg = tiny_config(base_resolution=(256, 256))
        assert [cfg.scale_resolution(n) for n in (1, 2, 3)] == [(64, 64), (128, 128), (256, 256)]

    def test_same_seed_bit_identical(self):
        a = build_pyramid(tiny_config(), seed=7)
        b = build_pyramid(tiny_config(), seed=7)
        for pa, pb in zip(a.generators.parameters(), b.generators.parameters()):
            assert torch.equal(pa, pb)
        for pa, pb in zip(a.discriminators.parameters(), b.discriminators.parameters()):
            assert torch.equal(pa, pb)

    def test_bad_resolution_names_divisor(self):
        with pytest.raises(ShapeError, match="divisible by 64"):
            build_pyramid(tiny_config(base_resolution=(48, 48)), seed=0)

    def test_depth_progression(self, tiny_state):
        counts = [parameter_count(g) for g in tiny_state.generators]
        assert counts[0] < counts[1] < counts[2]
        depths = [g.depth for g in tiny_state.generators]
        assert depths == [4, 5, 6]

    def test_modulation_heads_zero_initialized(self, tiny_state):
        for name, p in tiny_state.generators.named_parameters():
            if ".heads." in name:
                assert torch.equal(p, torch.zeros_like(p))


class TestComposeInput:
    def test_mask_all_ones(self, rng):
        o = torch.tensor(rng.standard_normal((1, 3, 4, 4)))
        i = torch.tensor(rng.standard_normal((1, 3, 4, 4)))
        m = torch.ones(1, 1, 4, 4, dtype=torch.float64)
        assert torch.equal(compose_input(o, i, m), o)

    def test_mask_all_zeros(self, rng):
        o = torch.tensor(rng.standard_normal((1, 3, 4, 4)))
        i = torch.tensor(rng.standard_normal((1, 3, 4, 4)))
        m = torch.zeros(1, 1, 4, 4, dtype=torch.float64)
        assert torch.equal(compose_input(o, i, m), i)

    def test_checkerboard(self):
        o = torch.full((1, 1, 4, 4), 7.0)
        i = torch.full((1, 1, 4, 4), -3.0)
        m = torch.zeros(1, 1, 4, 4)
        m[0, 0, ::2, ::2] = 1
        m[0, 0, 1::2, 1::2] = 1
        out = compose_input(o, i, m)
        assert torch.equal(out, torch.where(m.bool(), o, i))

    def test_partition_property(self, rng):
        o = torch.tensor(rng.standard_normal((2, 3, 6, 6)))
        i = torch.tensor(rng.standard_normal((2, 3, 6, 6)))
        m = torch.tensor((rng.random((2, 1, 6, 6)) > 0.5).astype(np.float64))
        out = compose_input(o, i, m)
        assert torch.equal(out * (1 - m), i * (1 - m))
        assert torch.equal(out * m, o * m)

    def test_non_binary_mask_rejected(self):
        o = torch.zeros(1, 1, 2, 2)
        with pytest.raises(ValueError, match="binary"):
            compose_input(o, o, torch.full((1, 1, 2, 2), 0.5))


class TestGeneratorForward:
    def test_shape_and_range(self, tiny_state, rng):
        cfg = tiny_state.cfg
        image, layout, mask = tiny_batch(rng, cfg)
        out = tiny_state.generator(3)(image, layout, mask)
        assert out.shape == image.shape
        assert torch.isfinite(out).all()
        assert out.abs().max() <= 1.0

    def test_deterministic(self, tiny_state, rng):
        cfg = tiny_state.cfg
        image, layout, mask = tiny_batch(rng, cfg)
        a = tiny_state.generator(3)(image, layout, mask)
        b = tiny_state.generator(3)(image, layout, mask)
        assert torch.equal(a, b)

    def test_resolution_mismatch_rejected(self, tiny_state, rng):
        cfg = tiny_state.cfg
        image, layout, mask = tiny_batch(rng, cfg)
        with pytest.raises(ShapeError, match="expects"):
            tiny_state.generator(1)(image, layout, mask)


class TestDiscriminator:
    def test_score_map_size(self, tiny_state, rng):
        # 4 stride-2 5x5 convs with pad 2: 64 -> 32 -> 16 -> 8 -> 4
        cfg = tiny_state.cfg
        image, layout, _ = tiny_batch(rng, cfg)
        d1 = tiny_state.discriminator(1)
        img16 = torch.nn.functional.interpolate(image, size=(16, 16), mode="bilinear",
                                                align_corners=False)
        lay16 = torch.nn.functional.interpolate(layout, size=(16, 16), mode="nearest")
        assert d1(img16, lay16).shape == (2, 1, 1, 1)

        cfg64 = tiny_config()
        d_full = build_pyramid(cfg64, seed=0).discriminator(3)
        assert d_full.n_layers == 6
        out = d_full(image, layout)
        assert out.shape == (2, 1, 1, 1)

    def test_4layer_map_on_64(self, rng):
        # D1 applied at its native resolution in a 256-base pyramid
        state = build_pyramid(tiny_config(base_resolution=(256, 256)), seed=0)
        image = torch.tensor(rng.uniform(-1, 1, (1, 3, 64, 64)).astype(np.float32))
        layout = torch.zeros(1, state.cfg.layout_channels, 64, 64)
        layout[:, -1] = 1.0
        assert state.discriminator(1)(image, layout).shape == (1, 1, 4, 4)

    def test_spectral_norm_bounds_kernels(self, tiny_state):
        d = tiny_state.discriminator(3)
        for conv in d.convs:
            conv.advance_power_iteration(iters=50)
            w = conv.normalized_weight().detach()
            top = torch.linalg.svdvals(w.reshape(w.shape[0], -1).double())[0].item()
            assert top <= 1 + 1e-3


class TestPyramidForward:
    def test_output_shapes(self, tiny_state, rng):
        image, layout, mask = tiny_batch(rng, tiny_state.cfg)
        outs = pyramid_forward(tiny_state, image, layout, mask)
        assert [tuple(o.shape[2:]) for o in outs] == [(16, 16), (32, 32), (64, 64)]

    def test_progressive_off_returns_single_output(self, rng):
        cfg = tiny_config(progressive=False)
        state = build_pyramid(cfg, seed=0)
        image, layout, mask = tiny_batch(rng, cfg)
        outs = pyramid_forward(state, image, layout, mask)
        assert len(outs) == 1
        assert tuple(outs[0].shape[2:]) == (64, 64)

    def test_layouts_stay_one_hot_at_all_scales(self, tiny_state, rng):
        from spmedit.networks import build_pyramids

        image, layout, mask = tiny_batch(rng, tiny_state.cfg)
        _, layouts, masks = build_pyramids(tiny_state.cfg, image, layout, mask)
        for lay, m in zip(layouts, masks):
            validate_layout(lay, m)
            assert ((m == 0) | (m == 1)).all()


class TestAblationFairness:
    def test_block_swap_changes_only_modulation_weights(self):
        spm = build_pyramid(tiny_config(block_type="spm"), seed=3)
        spade = build_pyramid(tiny_config(block_type="spade"), seed=3)
        spm_params = dict(spm.generators.named_parameters())
        spade_params = dict(spade.generators.named_parameters())

        def non_mod(names):
            return {n for n in names if ".mod_blocks." not in n and ".extra_mod_blocks." not in n}

        assert non_mod(spm_params) == non_mod(spade_params)
        for name in non_mod(spm_params):
            assert torch.equal(spm_params[name], spade_params[name]), name
        # discriminators are identical by construction
        for pa, pb in zip(spm.discriminators.parameters(), spade.discriminators.parameters()):
            assert torch.equal(pa, pb)

    def test_spade_l_adds_parameters(self):
        spade = build_pyramid(tiny_config(block_type="spade"), seed=0)
        spade_l = build_pyramid(tiny_config(block_type="spade", extra_spade_block=True), seed=0)
        assert parameter_count(spade_l.generators) > parameter_count(spade.generators)
