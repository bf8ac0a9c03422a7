"""Evaluation metrics: Frechet feature distance, pairwise perceptual distance,
mIoU with an injected segmenter, and the boundary style-consistency probe the
ablation harness scores variants with.

All feature-based metrics share one pluggable embedder (default: the frozen
fixed-seed embedder from training), so absolute values are only comparable
within a run — which is all the directional acceptance needs.
"""

from dataclasses import dataclass

import numpy as np
import torch

from .training import FeatureEmbedder, perceptual_loss


@dataclass
class FeatureStats:
    mean: np.ndarray      # (d,)
    cov: np.ndarray       # (d, d)
    n_samples: int


def pooled_features(images, embedder):
    """Final-stage features, globally average-pooled: (N, d) float64."""
    if not torch.is_tensor(images):
        images = torch.as_tensor(images, dtype=torch.float32)
    with torch.no_grad():
        feats = embedder(images)[-1].mean(dim=(2, 3))
    return feats.double().cpu().numpy()


def feature_stats(images, embedder) -> FeatureStats:
    """Sample mean and covariance of pooled embedder features."""
    feats = pooled_features(images, embedder)
    n = feats.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 samples for feature statistics, got {n}")
    mean = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False)
    return FeatureStats(mean=mean, cov=np.atleast_2d(cov), n_samples=n)


def _sqrt_psd(mat):
    sym = (mat + mat.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: FeatureStats, b: FeatureStats):
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    The matrix square root goes through an eigendecomposition of the
    symmetrized product; tiny negative eigenvalues are clipped at zero and so
    is the final value, which makes d(a, a) exactly 0.
    """
    if a.mean.shape != b.mean.shape:
        raise ValueError(f"dimension mismatch: {a.mean.shape} vs {b.mean.shape}")
    diff = a.mean - b.mean
    a_sqrt = _sqrt_psd(a.cov)
    inner = a_sqrt @ b.cov @ a_sqrt
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()
    d = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * tr_sqrt)
    return max(d, 0.0)


def perceptual_distance(a, b, embedder):
    """Staged feature distance between image batches (same contract as the
    training perceptual loss)."""
    if not torch.is_tensor(a):
        a = torch.as_tensor(a, dtype=torch.float32)
    if not torch.is_tensor(b):
        b = torch.as_tensor(b, dtype=torch.float32)
    with torch.no_grad():
        return float(perceptual_loss(a, b, embedder))


def miou(pred_seg, gt_seg, num_classes):
    """Mean over classes present in the ground truth of |intersection|/|union|."""
    pred = np.asarray(pred_seg)
    gt = np.asarray(gt_seg)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    ious = []
    for k in range(num_classes):
        gt_k = gt == k
        if not gt_k.any():
            continue
        pred_k = pred == k
        union = (gt_k | pred_k).sum()
        ious.append((gt_k & pred_k).sum() / union)
    if not ious:
        raise ValueError("ground truth contains no classes in range")
    return float(np.mean(ious))


class NearestColorSegmenter:
    """Oracle segmenter for synthetic scenes: classify each pixel by its
    nearest texture exemplar color, sampled per class from a reference
    (image, seg) pair. Exemplars (not means) keep two-tone textures such as
    stripes and checkers separable."""

    def __init__(self, reference_image, reference_seg, num_classes,
                 exemplars_per_class=48, seed=0):
        rng = np.random.default_rng(seed)
        colors, labels = [], []
        for k in range(num_classes):
            sel = np.argwhere(reference_seg == k)
            if len(sel) == 0:
                continue
            take = sel[rng.integers(0, len(sel), size=min(exemplars_per_class, len(sel)))]
            colors.append(reference_image[take[:, 0], take[:, 1]].astype(np.float64))
            labels.append(np.full(len(take), k))
        self.colors = np.concatenate(colors)
        self.labels = np.concatenate(labels)

    def segment(self, image):
        flat = np.asarray(image, dtype=np.float64).reshape(-1, 1, 3)
        dist = ((flat - self.colors[None, :, :]) ** 2).sum(axis=2)
        return self.labels[dist.argmin(axis=1)].reshape(image.shape[:2])


def _bands(mask, band_width):
    from scipy import ndimage

    mask = mask.astype(bool)
    inner = mask & ~ndimage.binary_erosion(mask, iterations=band_width, border_value=1)
    outer = ~mask & ndimage.binary_dilation(mask, iterations=band_width)
    return inner, outer


def _band_stats(image, sel):
    pix = image[sel].reshape(-1, 3)
    gray = image.mean(axis=2)
    gy, gx = np.gradient(gray)
    grad_energy = np.abs(gy[sel]).mean() + np.abs(gx[sel]).mean()
    return np.concatenate([pix.mean(axis=0), pix.std(axis=0), [grad_energy]])


def boundary_style_discrepancy(image, mask, band_width=4, seg=None):
    """Normalized stat mismatch between the edited side and the known side of
    the mask boundary: color mean/std and gradient energy, compared in bands
    of `band_width` pixels, per class region when a seg grid is given.
    """
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask)
    inner, outer = _bands(mask, band_width)
    if seg is None:
        groups = [np.ones_like(mask, dtype=bool)]
    else:
        groups = [np.asarray(seg) == k for k in np.unique(seg)]
    scores = []
    for group in groups:
        sel_in = inner & group
        sel_out = outer & group
        if not sel_in.any() or not sel_out.any():
            continue
        s_in = _band_stats(image, sel_in)
        s_out = _band_stats(image, sel_out)
        scores.append(np.mean(np.abs(s_in - s_out) / (np.abs(s_in) + np.abs(s_out) + 1e-6)))
    if not scores:
        raise ValueError("no region straddles the mask boundary")
    return float(np.mean(scores))


def write_metric_rows(rows, path):
    """Emit `metric,dataset,mask_type,value` rows (plus a header)."""
    with open(path, "w") as f:
        f.write("metric,dataset,mask_type,value\n")
        for metric, dataset, mask_type, value in rows:
            f.write(f"{metric},{dataset},{mask_type},{value:.6f}\n")


def default_embedder():
    return FeatureEmbedder()
