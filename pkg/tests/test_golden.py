"""Golden-file pins: behavior frozen at the first release."""

import os

import numpy as np
import pytest

from spmedit.data import synthetic_scene
from spmedit.editing import EditRequest, add_object, edit
from spmedit.checkpoint import load_checkpoint
from spmedit.masks import free_form_mask, instance_mask

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


def golden(name):
    return np.load(os.path.join(GOLDEN, name))


class TestGoldenMasks:
    def test_freeform_matches_golden(self):
        mask = free_form_mask(64, 64, np.random.default_rng(11))
        assert np.array_equal(mask, golden("freeform_seed11.npy"))

    def test_instance_mask_matches_golden(self):
        seg = golden("scene_seed21_seg.npy")
        mask = instance_mask(seg, np.random.default_rng(5))
        assert np.array_equal(mask, golden("instance_mask_seed21.npy"))


class TestGoldenScene:
    def test_scene_matches_golden(self):
        scene = synthetic_scene(np.random.default_rng(21), 64, 64)
        assert np.array_equal(scene.image, golden("scene_seed21_image.npy"))
        assert np.array_equal(scene.seg, golden("scene_seed21_seg.npy"))


class TestGoldenEdit:
    def test_edit_output_digest_frozen(self):
        # golden checkpoint + deterministic request -> frozen output digest
        state = load_checkpoint(os.path.join(GOLDEN, "tiny.ckpt"))
        image = golden("scene_seed21_image.npy")
        seg = golden("scene_seed21_seg.npy")
        mask = golden("freeform_seed11.npy")
        req = EditRequest(image=image * (1.0 - mask[..., None]).astype(np.float32),
                          mask=mask, label_map=seg.copy())
        out = edit(req, state)
        digest = float(np.float64(out).sum())
        assert digest == pytest.approx(EDIT_DIGEST, abs=1e-3)

    def test_add_object_request_digest(self):
        scene_image = golden("scene_seed21_image.npy")
        seg = golden("scene_seed21_seg.npy")
        from spmedit.data import Scene

        scene = Scene(image=scene_image, seg=seg)
        req = add_object(scene, 6, (10, 10, 26, 30))
        assert req.mask.sum() == 24 * 28
        assert (req.label_map[10:26, 10:30] == 6).all()


EDIT_DIGEST = -1868.364501953125  # frozen from the first release run
