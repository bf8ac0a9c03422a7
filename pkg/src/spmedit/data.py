"""Synthetic layered scenes with exact semantics, directory loaders for real
(image, annotation) pairs, and batch assembly.

The synthetic generator is the desk-scale ground truth: each class has a
fixed texture family (solid / gradient / stripes / checker) but the base
colors are drawn per scene, so the only way to edit style-consistently is to
read the colors from the known context.
"""

import os
from dataclasses import dataclass, field

import numpy as np
import torch
from PIL import Image

from .masks import DEFAULT_FOREGROUND_CLASSES, MaskContext
from .netops import resize

NUM_CLASSES = 8  # 6 background texture families + 2 foreground families

CLASS_NAMES = ("sky", "water", "grass", "sand", "rock", "forest", "box", "blob")

# display palette for label rendering (UI and CLI agree through GET /classes)
CLASS_COLORS = (
    (70, 130, 180),
    (65, 105, 225),
    (60, 179, 113),
    (222, 184, 135),
    (128, 128, 128),
    (34, 139, 34),
    (220, 60, 60),
    (238, 130, 238),
)

BACKGROUND_CLASSES = tuple(range(6))
FOREGROUND_RECT_CLASS = 6
FOREGROUND_BLOB_CLASS = 7


@dataclass
class Scene:
    image: np.ndarray                      # (H, W, 3) float32 in [-1, 1]
    seg: np.ndarray                        # (H, W) int64 class indices
    instances: list = field(default_factory=list)  # [(class_id, bool pixel mask)]

    @property
    def height(self):
        return self.image.shape[0]

    @property
    def width(self):
        return self.image.shape[1]

    def mask_context(self):
        return MaskContext(self.height, self.width, seg=self.seg,
                           foreground_classes=DEFAULT_FOREGROUND_CLASSES)


def _band_texture(class_id, h, w, y0, color_a, color_b):
    """Texture families are class-conditional; colors are per scene."""
    out = np.empty((h, w, 3), dtype=np.float32)
    if class_id == 0:      # solid
        out[:] = color_a
    elif class_id == 1:    # horizontal gradient
        t = np.linspace(0.0, 1.0, w, dtype=np.float32)[None, :, None]
        out[:] = color_a * (1 - t) + color_b * t
    elif class_id == 2:    # vertical gradient
        t = np.linspace(0.0, 1.0, h, dtype=np.float32)[:, None, None]
        out[:] = color_a * (1 - t) + color_b * t
    elif class_id == 3:    # horizontal stripes (absolute rows, 4 px each)
        rows = ((np.arange(y0, y0 + h) // 4) % 2)[:, None, None]
        out[:] = color_a * (1 - rows) + color_b * rows
    elif class_id == 4:    # vertical stripes
        cols = ((np.arange(w) // 4) % 2)[None, :, None]
        out[:] = color_a * (1 - cols) + color_b * cols
    elif class_id == 5:    # checkerboard, 8 px cells
        yy = (np.arange(y0, y0 + h) // 8)[:, None]
        xx = (np.arange(w) // 8)[None, :]
        chk = ((yy + xx) % 2)[:, :, None]
        out[:] = color_a * (1 - chk) + color_b * chk
    else:
        raise ValueError(f"no background texture for class {class_id}")
    return out


def _band_rows(rng, h, n_bands, min_rows=3):
    for _ in range(200):
        cuts = np.sort(rng.choice(np.arange(min_rows, h - min_rows + 1), size=n_bands - 1, replace=False))
        edges = np.concatenate([[0], cuts, [h]])
        if np.diff(edges).min() >= min_rows:
            return edges
    edges = np.linspace(0, h, n_bands + 1).round().astype(int)
    return edges


def _paint_shape(rng, h, w):
    kind = ("rect", "ellipse", "triangle")[int(rng.integers(0, 3))]
    side = int(rng.integers(max(4, h // 8), max(6, h // 3)))
    cy = int(rng.integers(side // 2, h - side // 2))
    cx = int(rng.integers(side // 2, w - side // 2))
    yy, xx = np.mgrid[0:h, 0:w]
    if kind == "rect":
        half_h, half_w = side // 2, max(2, int(side * rng.uniform(0.3, 0.7)))
        pix = (np.abs(yy - cy) <= half_h) & (np.abs(xx - cx) <= half_w)
        cls = FOREGROUND_RECT_CLASS
    elif kind == "ellipse":
        ry, rx = side / 2, side * rng.uniform(0.3, 0.7)
        pix = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        cls = FOREGROUND_BLOB_CLASS
    else:  # triangle pointing up
        half = side // 2
        rel_y = yy - (cy - half)
        pix = (rel_y >= 0) & (rel_y <= side) & (np.abs(xx - cx) <= rel_y / 2)
        cls = FOREGROUND_BLOB_CLASS
    return cls, pix


def synthetic_scene(rng, height=64, width=64):
    """Layered scene: 4-7 textured background bands plus 0-3 foreground shapes.

    The seg grid matches the composition exactly and instances record the
    visible pixel set of each foreground shape (later shapes overwrite earlier
    ones, so the pixel sets stay disjoint).
    """
    n_bands = int(rng.integers(4, 8))
    order = rng.permutation(len(BACKGROUND_CLASSES))
    band_classes = list(order[: min(n_bands, len(BACKGROUND_CLASSES))])
    while len(band_classes) < n_bands:
        extra = int(rng.integers(0, len(BACKGROUND_CLASSES)))
        if extra != band_classes[-1]:
            band_classes.append(extra)

    colors = {k: (rng.uniform(-0.9, 0.9, 3).astype(np.float32),
                  rng.uniform(-0.9, 0.9, 3).astype(np.float32))
              for k in range(NUM_CLASSES)}

    image = np.zeros((height, width, 3), dtype=np.float32)
    seg = np.zeros((height, width), dtype=np.int64)
    edges = _band_rows(rng, height, n_bands)
    for band, cls in enumerate(band_classes):
        y0, y1 = int(edges[band]), int(edges[band + 1])
        a, b = colors[cls]
        image[y0:y1] = _band_texture(cls, y1 - y0, width, y0, a, b)
        seg[y0:y1] = cls

    instances = []
    n_fg = int(rng.integers(0, 4))
    for _ in range(n_fg):
        cls, pix = _paint_shape(rng, height, width)
        color = rng.uniform(-0.9, 0.9, 3).astype(np.float32)
        image[pix] = color
        seg[pix] = cls
        for prev in instances:
            prev[1][pix] = False
        instances.append([cls, pix])
    instances = [(c, p) for c, p in instances if p.any()]
    return Scene(image=image, seg=seg, instances=instances)


@dataclass
class DatasetSpec:
    source: str = "synthetic"          # synthetic | directory
    root: str = None
    num_classes: int = NUM_CLASSES
    crop_size: int = 256
    max_longer_side: int = 384
    train: bool = True


class DatasetError(ValueError):
    pass


def _resize_pair(img: Image.Image, ann: Image.Image, max_longer):
    w, h = img.size
    longer = max(w, h)
    if longer > max_longer:
        scale = max_longer / longer
        nw, nh = max(1, round(w * scale)), max(1, round(h * scale))
        img = img.resize((nw, nh), Image.BILINEAR)
        ann = ann.resize((nw, nh), Image.NEAREST)
    return img, ann


def load_directory(spec: DatasetSpec, rng=None):
    """Iterate Scenes from `root/images/*.png` + `root/annotations/*.png`
    (single-channel class indices, filename-matched)."""
    img_dir = os.path.join(spec.root, "images")
    ann_dir = os.path.join(spec.root, "annotations")
    if not os.path.isdir(img_dir) or not os.path.isdir(ann_dir):
        raise DatasetError(f"{spec.root} must contain images/ and annotations/")
    names = sorted(f for f in os.listdir(img_dir) if f.lower().endswith(".png"))
    if rng is None:
        rng = np.random.default_rng(0)
    for name in names:
        ann_path = os.path.join(ann_dir, name)
        if not os.path.exists(ann_path):
            raise DatasetError(f"annotation missing for {name}")
        img = Image.open(os.path.join(img_dir, name)).convert("RGB")
        ann = Image.open(ann_path).convert("L")
        if img.size != ann.size:
            raise DatasetError(f"{name}: image size {img.size} != annotation size {ann.size}")
        img, ann = _resize_pair(img, ann, spec.max_longer_side)
        w, h = img.size
        cs = min(spec.crop_size, w, h)
        if spec.train:
            top = int(rng.integers(0, h - cs + 1))
            left = int(rng.integers(0, w - cs + 1))
        else:
            top, left = (h - cs) // 2, (w - cs) // 2
        img = img.crop((left, top, left + cs, top + cs))
        ann = ann.crop((left, top, left + cs, top + cs))
        seg = np.asarray(ann, dtype=np.int64)
        if seg.max() >= spec.num_classes:
            raise DatasetError(
                f"{name}: label {int(seg.max())} out of range for {spec.num_classes} classes"
            )
        yield Scene(image=uint8_to_float(np.asarray(img)), seg=seg)


# ---------------------------------------------------------------------------
# value mapping and PNG io

def uint8_to_float(arr):
    return (arr.astype(np.float32) / 127.5) - 1.0


def float_to_uint8(arr):
    return np.clip(np.round((arr + 1.0) * 127.5), 0, 255).astype(np.uint8)


def load_image(path):
    return uint8_to_float(np.asarray(Image.open(path).convert("RGB")))


def save_image(arr, path):
    Image.fromarray(float_to_uint8(arr)).save(path)


def load_label_map(path):
    return np.asarray(Image.open(path).convert("L"), dtype=np.int64)


def save_label_map(seg, path):
    if seg.max() > 255 or seg.min() < 0:
        raise ValueError("label maps must fit in uint8")
    Image.fromarray(seg.astype(np.uint8), mode="L").save(path)


def render_label_colors(seg):
    palette = np.asarray(CLASS_COLORS, dtype=np.uint8)
    return palette[np.clip(seg, 0, len(CLASS_COLORS) - 1)]


def materialize_dataset(out_dir, count, rng, height=64, width=64):
    """Write `count` synthetic scenes in the directory-loader layout."""
    img_dir = os.path.join(out_dir, "images")
    ann_dir = os.path.join(out_dir, "annotations")
    os.makedirs(img_dir, exist_ok=True)
    os.makedirs(ann_dir, exist_ok=True)
    for i in range(count):
        scene = synthetic_scene(rng, height, width)
        name = f"scene_{i:05d}.png"
        save_image(scene.image, os.path.join(img_dir, name))
        save_label_map(scene.seg, os.path.join(ann_dir, name))


# ---------------------------------------------------------------------------
# batch assembly

@dataclass
class Batch:
    target: torch.Tensor    # (N, 3, H, W) original images
    masked: torch.Tensor    # (N, 3, H, W) edited region zeroed
    mask: torch.Tensor      # (N, 1, H, W) binary
    layout: torch.Tensor    # (N, C_s+1, H, W) one-hot with unknown channel
    targets_s: list = None  # per-scale pyramids, coarse to fine
    masked_s: list = None
    masks_s: list = None
    layouts_s: list = None

    def size(self):
        return self.target.shape[0]


def layout_from_seg(seg, mask, num_classes):
    """One-hot layout restricted to the edited region; known pixels map to the
    reserved unknown channel (index num_classes)."""
    seg = torch.as_tensor(np.ascontiguousarray(seg), dtype=torch.long)
    mask = torch.as_tensor(np.ascontiguousarray(mask), dtype=torch.long)
    local = torch.where(mask.bool(), seg, torch.full_like(seg, num_classes))
    onehot = torch.nn.functional.one_hot(local, num_classes + 1)
    return onehot.permute(2, 0, 1).to(torch.float32)


def make_batch(scenes, mask_sampler, pyramid_cfg, rng):
    """Assemble a training batch: masked inputs, one-hot local layouts, binary
    masks, reconstruction targets, and their per-scale pyramids."""
    targets, masks, layouts = [], [], []
    num_classes = pyramid_cfg.num_classes
    for scene in scenes:
        mask = mask_sampler(scene.mask_context(), rng)
        if isinstance(mask, tuple):
            mask = mask[0]
        targets.append(torch.from_numpy(scene.image).permute(2, 0, 1))
        masks.append(torch.from_numpy(mask.astype(np.float32))[None])
        layouts.append(layout_from_seg(scene.seg, mask, num_classes))
    target = torch.stack(targets)
    mask = torch.stack(masks)
    layout = torch.stack(layouts)
    masked = target * (1.0 - mask)

    targets_s, masked_s, masks_s, layouts_s = [], [], [], []
    for n in range(1, pyramid_cfg.n_scales + 1):
        res = pyramid_cfg.scale_resolution(n)
        m_n = resize(mask, res, mode="nearest")
        targets_s.append(resize(target, res, mode="bilinear"))
        # generator inputs are re-masked after downsampling, exactly as the
        # inference path builds them (it only ever sees the masked image)
        masked_s.append(resize(masked, res, mode="bilinear") * (1.0 - m_n))
        masks_s.append(m_n)
        layouts_s.append(resize(layout, res, mode="nearest"))
    return Batch(target=target, masked=masked, mask=mask, layout=layout,
                 targets_s=targets_s, masked_s=masked_s, masks_s=masks_s, layouts_s=layouts_s)
