"""Mask generator contracts: exact extension/outpainting geometry, free-form
coverage bounds, instance/class semantics, and the five-way sampler."""

import logging

import numpy as np
import pytest
import torch

from spmedit.masks import (MASK_TYPES, MaskContext, class_mask, extension_mask,
                           free_form_mask, instance_mask, load_mask,
                           outpainting_mask, sample_mask, save_mask)
from spmedit.netops import resize


class TestExtensionMask:
    def test_even_width(self):
        m = extension_mask(4, 4)
        assert m[:, :2].sum() == 0 and (m[:, 2:] == 1).all()

    def test_exact_half_coverage(self):
        assert extension_mask(8, 8).mean() == 0.5

    def test_odd_width_ceil_rule(self):
        m = extension_mask(4, 5)
        assert (m[:, 2:] == 1).all() and m[:, :2].sum() == 0


class TestOutpaintingMask:
    def test_paper_scale_patch(self, rng):
        m = outpainting_mask(256, 256, rng)
        assert (m == 0).sum() == 128 * 128

    def test_desk_scale_patch(self, rng):
        m = outpainting_mask(64, 64, rng)
        assert (m == 0).sum() == 32 * 32

    def test_exact_coverage(self, rng):
        for _ in range(20):
            assert outpainting_mask(64, 64, rng).mean() == 0.75

    def test_patch_is_contiguous_box(self, rng):
        m = outpainting_mask(32, 32, rng)
        ys, xs = np.nonzero(m == 0)
        assert (ys.max() - ys.min() + 1) * (xs.max() - xs.min() + 1) == (m == 0).sum()


class TestFreeFormMask:
    def test_reproducible(self):
        a = free_form_mask(64, 64, np.random.default_rng(11))
        b = free_form_mask(64, 64, np.random.default_rng(11))
        assert np.array_equal(a, b)

    def test_coverage_bounds_sampled(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            cov = free_form_mask(64, 64, rng).mean()
            assert 0.05 <= cov <= 0.5

    def test_binary_only(self, rng):
        m = free_form_mask(48, 80, rng)
        assert set(np.unique(m)) <= {0, 1}

    def test_too_small_rejected(self, rng):
        with pytest.raises(ValueError):
            free_form_mask(8, 8, rng)


def square_seg(h=64, w=64):
    seg = np.zeros((h, w), dtype=np.int64)
    seg[:] = 2  # grass
    seg[20:30, 24:34] = 6
    return seg


class TestInstanceClassMasks:
    def test_instance_is_dilated_bbox(self, rng):
        seg = square_seg()
        m = instance_mask(seg, rng)
        assert (m[16:34, 20:38] == 1).all()
        assert m.sum() == 18 * 18

    def test_no_instance_falls_back(self, rng, caplog):
        seg = np.full((64, 64), 1, dtype=np.int64)
        with caplog.at_level(logging.INFO):
            m = instance_mask(seg, rng)
        assert "falling back" in caplog.text
        assert 0.05 <= m.mean() <= 0.5

    def test_class_mask_exact_pixels(self, rng):
        seg = square_seg()
        for _ in range(8):
            m = class_mask(seg, rng)
            k = seg[m.astype(bool)][0]
            assert ((m == 1) == (seg == k)).all()
            assert (m[seg != k] == 0).all()

    def test_class_mask_full_grid_falls_back(self, rng, caplog):
        seg = np.zeros((64, 64), dtype=np.int64)
        with caplog.at_level(logging.INFO):
            m = class_mask(seg, rng)
        assert "falling back" in caplog.text


class TestSampler:
    def test_uniform_frequencies(self):
        rng = np.random.default_rng(7)
        ctx = MaskContext(64, 64, seg=square_seg())
        counts = {k: 0 for k in MASK_TYPES}
        draws = 2000
        for _ in range(draws):
            _, kind = sample_mask(ctx, rng)
            counts[kind] += 1
        for kind, c in counts.items():
            assert 0.16 <= c / draws <= 0.24, (kind, c / draws)

    def test_deterministic(self):
        ctx = MaskContext(64, 64, seg=square_seg())
        a = [sample_mask(ctx, np.random.default_rng(3))[0] for _ in range(5)]
        b = [sample_mask(ctx, np.random.default_rng(3))[0] for _ in range(5)]
        for ma, mb in zip(a, b):
            assert np.array_equal(ma, mb)

    def test_invariants_hold_for_every_sample(self):
        rng = np.random.default_rng(1)
        ctx = MaskContext(64, 64, seg=square_seg())
        for _ in range(100):
            m, _ = sample_mask(ctx, rng)
            assert set(np.unique(m)) <= {0, 1}
            assert 0 < m.sum() < m.size


class TestMaskPyramids:
    def test_nearest_resize_stays_binary(self, rng):
        m = free_form_mask(64, 64, rng)
        t = torch.tensor(m[None, None].astype(np.float32))
        for res in ((32, 32), (16, 16)):
            d = resize(t, res, mode="nearest")
            assert set(np.unique(d.numpy())) <= {0.0, 1.0}


class TestPngRoundTrip:
    def test_save_load(self, rng, tmp_path):
        m = free_form_mask(64, 64, rng)
        path = tmp_path / "mask.png"
        save_mask(m, path)
        assert np.array_equal(load_mask(path), m)
