"""Image editing entry points: single edits from (image, mask, labels)
triples, object addition/removal helpers that rewrite the label map, and the
recursive panorama extension.

Every path composites the final output as result = O * M + I * (1 - M) with a
bitwise select, so known pixels always pass through untouched.
"""

import logging

import numpy as np
import torch
from dataclasses import dataclass

from .data import layout_from_seg
from .masks import extension_mask
from .networks import PyramidState, pyramid_forward
from .netops import resize

log = logging.getLogger(__name__)


@dataclass
class EditRequest:
    image: np.ndarray        # (H, W, 3) float32 in [-1, 1]
    mask: np.ndarray         # (H, W) {0, 1}
    label_map: np.ndarray    # (H, W) class indices; values outside the mask ignored
    checkpoint_id: str = None


class EditError(ValueError):
    pass


def _validate_request(req: EditRequest, num_classes):
    if req.image.ndim != 3 or req.image.shape[2] != 3:
        raise EditError(f"image must be (H, W, 3), got {req.image.shape}")
    if req.mask.shape != req.image.shape[:2]:
        raise EditError(f"mask shape {req.mask.shape} does not match image {req.image.shape[:2]}")
    if req.label_map.shape != req.image.shape[:2]:
        raise EditError(
            f"label map shape {req.label_map.shape} does not match image {req.image.shape[:2]}")
    if not np.isin(req.mask, (0, 1)).all():
        raise EditError("mask must be binary")
    inside = req.label_map[req.mask.astype(bool)]
    if inside.size and (inside.min() < 0 or inside.max() >= num_classes):
        raise EditError(
            f"label {int(inside.max())} out of range for {num_classes} classes inside the mask")


def edit(req: EditRequest, state: PyramidState):
    """Run the pyramid on the request and paste known pixels back bit-exactly."""
    cfg = state.cfg
    _validate_request(req, cfg.num_classes)
    state.eval()

    image = torch.from_numpy(np.ascontiguousarray(req.image)).permute(2, 0, 1)[None]
    mask = torch.from_numpy(req.mask.astype(np.float32))[None, None]
    layout = layout_from_seg(req.label_map, req.mask, cfg.num_classes)[None]
    # the model runs in float32; compositing below stays in the request dtype
    model_image = image.to(torch.float32)

    h, w = req.image.shape[:2]
    if (h, w) != cfg.base_resolution:
        log.warning("request resolution %sx%s != checkpoint resolution %sx%s; resizing",
                    h, w, *cfg.base_resolution)
        run_image = resize(model_image, cfg.base_resolution, mode="bilinear")
        run_mask = resize(mask, cfg.base_resolution, mode="nearest")
        run_layout = resize(layout, cfg.base_resolution, mode="nearest")
    else:
        run_image, run_mask, run_layout = model_image, mask, layout

    with torch.no_grad():
        outputs = pyramid_forward(state, run_image * (1.0 - run_mask), run_layout, run_mask)
        final = outputs[-1]
        if final.shape[2:] != image.shape[2:]:
            final = resize(final, (h, w), mode="bilinear")
        result = torch.where(mask.bool(), final.to(image.dtype), image)
    return result[0].permute(1, 2, 0).numpy()


def _dilated_bbox(pix, h, w, dilate=4):
    ys, xs = np.nonzero(pix)
    y0, y1 = max(0, ys.min() - dilate), min(h, ys.max() + 1 + dilate)
    x0, x1 = max(0, xs.min() - dilate), min(w, xs.max() + 1 + dilate)
    return y0, y1, x0, x1


def add_object(scene, class_id, bbox, dilate=4):
    """Addition request: mask is the dilated bbox, layout carries the new
    class inside the bbox and the scene's own classes on the dilation ring."""
    h, w = scene.seg.shape
    y0, x0, y1, x1 = bbox
    if not (0 <= y0 < y1 <= h and 0 <= x0 < x1 <= w):
        raise EditError(f"bbox {bbox} outside image {h}x{w}")
    mask = np.zeros((h, w), dtype=np.uint8)
    mask[max(0, y0 - dilate): min(h, y1 + dilate), max(0, x0 - dilate): min(w, x1 + dilate)] = 1
    labels = scene.seg.copy()
    labels[y0:y1, x0:x1] = class_id
    return EditRequest(image=scene.image * (1.0 - mask[..., None].astype(np.float32)),
                       mask=mask, label_map=labels)


def remove_object(scene, instance_index, ring=8):
    """Removal request: mask is the instance's pixel set, layout fills it with
    the most common background label in a ring around the instance."""
    if not (0 <= instance_index < len(scene.instances)):
        raise EditError(f"scene has {len(scene.instances)} instances, asked for {instance_index}")
    from scipy import ndimage

    _cls, pix = scene.instances[instance_index]
    ring_sel = ndimage.binary_dilation(pix, iterations=ring) & ~pix
    ring_labels = scene.seg[ring_sel]
    background = ring_labels[ring_labels < 6]
    pool = background if background.size else ring_labels
    fill = int(np.bincount(pool).argmax())
    mask = pix.astype(np.uint8)
    labels = scene.seg.copy()
    labels[pix] = fill
    return EditRequest(image=scene.image * (1.0 - mask[..., None].astype(np.float32)),
                       mask=mask, label_map=labels)


def extend_rightmost_column(seg, width):
    """Default panorama layout: repeat the rightmost column's classes."""
    return np.repeat(seg[:, -1:], width, axis=1)


def panorama(image, steps, layout_provider, state: PyramidState):
    """Extend the image to the right by half the base width per step.

    Each step edits the rightmost base-sized window with an extension mask;
    only the newly generated half is appended, so committed pixels never
    change. `layout_provider(step, width)` yields the window's label map.
    """
    if steps < 0:
        raise EditError(f"steps must be >= 0, got {steps}")
    bh, bw = state.cfg.base_resolution
    if image.shape[0] != bh or image.shape[1] < bw:
        raise EditError(
            f"panorama input must be {bh} tall and at least {bw} wide, got {image.shape[:2]}")
    half = bw // 2
    canvas = image.astype(np.float32)
    for step in range(steps):
        window = np.concatenate(
            [canvas[:, -half:], np.zeros((bh, bw - half, 3), dtype=np.float32)], axis=1)
        mask = extension_mask(bh, bw)
        labels = layout_provider(step, bw)
        req = EditRequest(image=window * (1.0 - mask[..., None].astype(np.float32)),
                          mask=mask, label_map=labels)
        out = edit(req, state)
        canvas = np.concatenate([canvas, out[:, half:]], axis=1)
    return canvas
