"""Training mask generators: free-form strokes, right-half extension,
outpainting, instance and class masks, plus the uniform five-way sampler.

Masks are (H, W) uint8 grids, 1 = edited region. Every training mask keeps
both regions nonempty.
"""

import logging
from dataclasses import dataclass

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

MASK_TYPES = ("freeform", "extension", "outpainting", "instance", "class")

DEFAULT_FOREGROUND_CLASSES = (6, 7)


@dataclass
class MaskContext:
    """What the samplers need to know about the scene being masked."""

    height: int
    width: int
    seg: np.ndarray = None
    foreground_classes: tuple = DEFAULT_FOREGROUND_CLASSES


def _check_training_mask(mask):
    ones = int(mask.sum())
    if ones == 0 or ones == mask.size:
        raise ValueError("training mask must contain both edited and known pixels")
    return mask


def _draw_stroke(draw, h, w, rng):
    side = min(h, w)
    radius = int(rng.integers(max(1, side // 16), max(2, side // 7)))
    n_vertices = int(rng.integers(3, 9))
    y = float(rng.integers(radius, h - radius))
    x = float(rng.integers(radius, w - radius))
    angle = rng.uniform(0, 2 * np.pi)
    points = [(x, y)]
    for _ in range(n_vertices):
        angle += rng.uniform(-0.9, 0.9)
        length = rng.uniform(side / 8, side / 3)
        y = float(np.clip(y + length * np.sin(angle), 0, h - 1))
        x = float(np.clip(x + length * np.cos(angle), 0, w - 1))
        points.append((x, y))
    draw.line(points, fill=1, width=2 * radius, joint="curve")
    for px, py in points:
        draw.ellipse([px - radius, py - radius, px + radius, py + radius], fill=1)


def free_form_mask(height, width, rng):
    """Union of 1-8 random thick polyline strokes covering 5-50% of the grid."""
    from PIL import ImageDraw

    if height < 16 or width < 16:
        raise ValueError(f"free-form masks need at least 16x16, got {height}x{width}")
    for _ in range(64):
        canvas = Image.new("L", (width, height), 0)
        draw = ImageDraw.Draw(canvas)
        n_strokes = int(rng.integers(1, 9))
        mask = None
        for _ in range(n_strokes):
            _draw_stroke(draw, height, width, rng)
            mask = np.asarray(canvas, dtype=np.uint8)
            if mask.mean() > 0.5:
                break
        cov = mask.mean()
        if 0.05 <= cov <= 0.5:
            return _check_training_mask(mask)
    # pathological RNG streak: fall back to a centered box at 25% coverage
    mask = np.zeros((height, width), dtype=np.uint8)
    mask[height // 4: height // 4 + height // 2, width // 4: width // 4 + width // 2] = 1
    return _check_training_mask(mask)


def extension_mask(height, width):
    """The right half of the grid (right ceil(W/2) columns for odd W)."""
    mask = np.zeros((height, width), dtype=np.uint8)
    mask[:, width // 2:] = 1
    return _check_training_mask(mask)


def outpainting_mask(height, width, rng):
    """Everything edited except one retained (H/2)x(W/2) patch at a random
    offset (the paper-scale 128x128 known patch, scaled to half-side)."""
    ph, pw = height // 2, width // 2
    if ph < 1 or pw < 1:
        raise ValueError("grid too small for outpainting")
    top = int(rng.integers(0, height - ph + 1))
    left = int(rng.integers(0, width - pw + 1))
    mask = np.ones((height, width), dtype=np.uint8)
    mask[top: top + ph, left: left + pw] = 0
    return _check_training_mask(mask)


def _instance_components(seg, foreground_classes):
    from scipy import ndimage

    fg = np.isin(seg, list(foreground_classes))
    labels, count = ndimage.label(fg)
    return [(labels == i) for i in range(1, count + 1)]


def instance_mask(seg, rng, foreground_classes=DEFAULT_FOREGROUND_CLASSES, dilate=4):
    """Dilated bounding box of one randomly chosen foreground instance; falls
    back to a free-form mask when the scene has no foreground."""
    h, w = seg.shape
    components = _instance_components(seg, foreground_classes)
    if not components:
        log.info("no foreground instance found; falling back to free-form mask")
        return free_form_mask(h, w, rng)
    comp = components[int(rng.integers(0, len(components)))]
    ys, xs = np.nonzero(comp)
    y0, y1 = max(0, ys.min() - dilate), min(h, ys.max() + 1 + dilate)
    x0, x1 = max(0, xs.min() - dilate), min(w, xs.max() + 1 + dilate)
    mask = np.zeros((h, w), dtype=np.uint8)
    mask[y0:y1, x0:x1] = 1
    if mask.all():
        log.info("instance box covers the full grid; falling back to free-form mask")
        return free_form_mask(h, w, rng)
    return _check_training_mask(mask)


def class_mask(seg, rng):
    """Exact pixel set of one randomly chosen class present in the grid."""
    classes = np.unique(seg)
    k = int(classes[int(rng.integers(0, len(classes)))])
    mask = (seg == k).astype(np.uint8)
    if mask.all() or not mask.any():
        log.info("class %d covers the full grid; falling back to free-form mask", k)
        return free_form_mask(seg.shape[0], seg.shape[1], rng)
    return _check_training_mask(mask)


def sample_mask(ctx: MaskContext, rng):
    """Uniform choice among the five mask generators."""
    kind = MASK_TYPES[int(rng.integers(0, len(MASK_TYPES)))]
    return make_mask(kind, ctx, rng), kind


def make_mask(kind, ctx: MaskContext, rng):
    h, w = ctx.height, ctx.width
    if kind == "freeform":
        return free_form_mask(h, w, rng)
    if kind == "extension":
        return extension_mask(h, w)
    if kind == "outpainting":
        return outpainting_mask(h, w, rng)
    if kind == "instance":
        if ctx.seg is None:
            log.info("no segmentation available; falling back to free-form mask")
            return free_form_mask(h, w, rng)
        return instance_mask(ctx.seg, rng, ctx.foreground_classes)
    if kind == "class":
        if ctx.seg is None:
            log.info("no segmentation available; falling back to free-form mask")
            return free_form_mask(h, w, rng)
        return class_mask(ctx.seg, rng)
    raise ValueError(f"unknown mask type {kind!r}; expected one of {MASK_TYPES}")


def save_mask(mask, path):
    Image.fromarray((mask.astype(np.uint8) * 255)).save(path)


def load_mask(path, threshold=128):
    arr = np.asarray(Image.open(path).convert("L"))
    return (arr >= threshold).astype(np.uint8)
