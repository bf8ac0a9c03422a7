"""Editing contracts: bit-exact known-pixel pass-through on every path,
add/remove label-map rewriting, and panorama growth rules."""

import numpy as np
import pytest
import torch

from spmedit.data import synthetic_scene
from spmedit.editing import (EditError, EditRequest, add_object, edit,
                             extend_rightmost_column, panorama, remove_object)
from spmedit.masks import free_form_mask
from spmedit.networks import build_pyramid
from tests.conftest import tiny_config


@pytest.fixture(scope="module")
def state():
    return build_pyramid(tiny_config(), seed=1)


def request_for(scene, mask):
    return EditRequest(image=scene.image * (1.0 - mask[..., None]).astype(np.float32),
                       mask=mask, label_map=scene.seg.copy())


class TestEdit:
    def test_known_pixels_pass_through_bitwise(self, state):
        scene = synthetic_scene(np.random.default_rng(0), 64, 64)
        mask = free_form_mask(64, 64, np.random.default_rng(1))
        out = edit(request_for(scene, mask), state)
        keep = ~mask.astype(bool)
        assert np.array_equal(out[keep], request_for(scene, mask).image[keep])

    def test_zero_mask_returns_input_bitwise(self, state):
        scene = synthetic_scene(np.random.default_rng(2), 64, 64)
        mask = np.zeros((64, 64), dtype=np.uint8)
        req = request_for(scene, mask)
        out = edit(req, state)
        assert np.array_equal(out, req.image)

    def test_deterministic(self, state):
        scene = synthetic_scene(np.random.default_rng(3), 64, 64)
        mask = free_form_mask(64, 64, np.random.default_rng(3))
        req = request_for(scene, mask)
        assert np.array_equal(edit(req, state), edit(req, state))

    def test_dimension_mismatch_rejected(self, state):
        scene = synthetic_scene(np.random.default_rng(4), 64, 64)
        bad = EditRequest(image=scene.image, mask=np.zeros((32, 32), dtype=np.uint8),
                          label_map=scene.seg)
        with pytest.raises(EditError, match="mask shape"):
            edit(bad, state)

    def test_unknown_class_rejected(self, state):
        scene = synthetic_scene(np.random.default_rng(5), 64, 64)
        mask = np.zeros((64, 64), dtype=np.uint8)
        mask[10:20, 10:20] = 1
        labels = scene.seg.copy()
        labels[12, 12] = 42
        with pytest.raises(EditError, match="42 out of range"):
            edit(EditRequest(image=scene.image, mask=mask, label_map=labels), state)

    def test_resolution_mismatch_resizes_with_warning(self, state, caplog):
        import logging

        scene = synthetic_scene(np.random.default_rng(6), 128, 128)
        mask = np.zeros((128, 128), dtype=np.uint8)
        mask[30:70, 30:70] = 1
        req = request_for(scene, mask)
        with caplog.at_level(logging.WARNING):
            out = edit(req, state)
        assert "resizing" in caplog.text
        keep = ~mask.astype(bool)
        assert np.array_equal(out[keep], req.image[keep])  # still bit-exact


class TestAddRemove:
    def test_add_object_mask_is_dilated_bbox(self):
        scene = synthetic_scene(np.random.default_rng(7), 64, 64)
        req = add_object(scene, 6, (20, 20, 30, 30))
        assert req.mask[16:34, 16:34].all()
        assert req.mask.sum() == 18 * 18
        assert (req.label_map[20:30, 20:30] == 6).all()

    def test_add_bbox_outside_rejected(self):
        scene = synthetic_scene(np.random.default_rng(8), 64, 64)
        with pytest.raises(EditError, match="bbox"):
            add_object(scene, 6, (50, 50, 80, 80))

    def test_remove_fills_with_ring_background(self):
        # square foreground on uniform grass: the fill must be all grass
        from spmedit.data import Scene

        image = np.zeros((64, 64, 3), dtype=np.float32)
        seg = np.full((64, 64), 2, dtype=np.int64)
        seg[20:30, 24:34] = 6
        pix = seg == 6
        scene = Scene(image=image, seg=seg, instances=[(6, pix)])
        req = remove_object(scene, 0)
        assert np.array_equal(req.mask.astype(bool), pix)
        assert (req.label_map[pix] == 2).all()

    def test_remove_bad_index_rejected(self):
        scene = synthetic_scene(np.random.default_rng(9), 64, 64)
        with pytest.raises(EditError, match="instances"):
            remove_object(scene, 99)


class ConstantLayout:
    def __init__(self, seg):
        self.seg = seg

    def __call__(self, step, width):
        return extend_rightmost_column(self.seg, width)


class TestPanorama:
    def test_zero_steps_identity(self, state):
        scene = synthetic_scene(np.random.default_rng(10), 64, 64)
        out = panorama(scene.image, 0, ConstantLayout(scene.seg), state)
        assert np.array_equal(out, scene.image)

    def test_negative_steps_rejected(self, state):
        scene = synthetic_scene(np.random.default_rng(10), 64, 64)
        with pytest.raises(EditError):
            panorama(scene.image, -1, ConstantLayout(scene.seg), state)

    def test_two_steps_grow_half_width_each(self, state):
        scene = synthetic_scene(np.random.default_rng(11), 64, 64)
        out = panorama(scene.image, 2, ConstantLayout(scene.seg), state)
        assert out.shape == (64, 64 + 64, 3)

    def test_committed_pixels_immutable(self, state):
        scene = synthetic_scene(np.random.default_rng(12), 64, 64)
        provider = ConstantLayout(scene.seg)
        one = panorama(scene.image, 1, provider, state)
        two = panorama(scene.image, 2, provider, state)
        assert np.array_equal(two[:, : one.shape[1]], one)
        assert np.array_equal(one[:, :64], scene.image)

    def test_wrong_height_rejected(self, state):
        scene = synthetic_scene(np.random.default_rng(13), 32, 64)
        with pytest.raises(EditError, match="tall"):
            panorama(scene.image, 1, ConstantLayout(scene.seg), state)
