"""Modulation blocks: channel-wise normalization, the SPADE baseline, and the
two-stage style-preserved block (SPM).

SPADE predicts per-pixel scale/shift maps from the semantic layout alone, so
two different images with the same layout get identical parameters. SPM first
derives a context pair (gamma_c, beta_c) from the raw, non-normalized feature
maps, fuses it with two semantic pairs, and only then modulates the
normalized features — the fused parameters are image-specific.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .netops import EPS, ShapeError, check_feature_map, resize


@dataclass
class NormStats:
    mu: torch.Tensor      # (N, C, 1, 1)
    sigma: torch.Tensor   # (N, C, 1, 1), already epsilon-guarded


@dataclass
class ModulationPair:
    gamma: torch.Tensor
    beta: torch.Tensor


@dataclass
class SemanticParamQuad:
    gs1: torch.Tensor
    bs1: torch.Tensor
    gs2: torch.Tensor
    bs2: torch.Tensor


@dataclass
class ModulationConfig:
    feature_channels: int
    hidden_channels: int = 128
    kernel_size: int = 3

    def __post_init__(self):
        if self.feature_channels < 1 or self.hidden_channels < 1:
            raise ValueError("channel counts must be positive")


def channel_normalize(x):
    """Normalize each (sample, channel) slice to zero mean / unit deviation.

    Statistics are per-sample over the spatial dims (shape (N, C, 1, 1)), so
    results do not depend on batch composition. Constant slices map to zero
    via the epsilon guard. Returns (normalized, NormStats).
    """
    check_feature_map(x)
    mu = x.mean(dim=(2, 3), keepdim=True)
    sigma = x.std(dim=(2, 3), keepdim=True, unbiased=False) + EPS
    return (x - mu) / sigma, NormStats(mu=mu, sigma=sigma)


def validate_layout(onehot, mask=None):
    """Check the one-hot layout invariants; the last channel is the reserved
    unknown class covering known pixels (mask == 0)."""
    check_feature_map(onehot, "layout")
    binary = ((onehot == 0) | (onehot == 1)).all()
    if not binary:
        raise ValueError("layout must be one-hot (values 0/1)")
    if not (onehot.sum(dim=1) == 1).all():
        raise ValueError("layout must have exactly one active channel per pixel")
    if mask is not None:
        unknown = onehot[:, -1:]
        if not (unknown * mask == 0).all():
            raise ValueError("unknown channel must be 0 inside the edited region")
        if not ((1 - unknown) * (1 - mask) == 0).all():
            raise ValueError("unknown channel must be 1 outside the edited region")


class ParamHeads(nn.Module):
    """Shared 3x3 conv + ReLU followed by one zero-initialized 3x3 head per
    parameter map. Zero heads make every block start as the identity."""

    def __init__(self, in_channels, cfg: ModulationConfig, n_maps):
        super().__init__()
        k = cfg.kernel_size
        pad = k // 2
        self.in_channels = in_channels
        self.shared = nn.Conv2d(in_channels, cfg.hidden_channels, k, padding=pad)
        self.heads = nn.ModuleList(
            nn.Conv2d(cfg.hidden_channels, cfg.feature_channels, k, padding=pad) for _ in range(n_maps)
        )
        for head in self.heads:
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ShapeError(f"expected {self.in_channels} input channels, got {x.shape[1]}")
        h = F.relu(self.shared(x))
        return [head(h) for head in self.heads]


class SemanticHeads(nn.Module):
    """Parameter maps predicted from the (already feature-resolution) layout:
    one pair (gamma, beta) for SPADE, two pairs for SPM."""

    def __init__(self, layout_channels, cfg: ModulationConfig, n_pairs=1):
        super().__init__()
        if n_pairs not in (1, 2):
            raise ValueError("n_pairs must be 1 or 2")
        self.n_pairs = n_pairs
        self.net = ParamHeads(layout_channels, cfg, 2 * n_pairs)

    def forward(self, layout):
        maps = self.net(layout)
        if self.n_pairs == 1:
            return ModulationPair(gamma=maps[0], beta=maps[1])
        return SemanticParamQuad(gs1=maps[0], bs1=maps[1], gs2=maps[2], bs2=maps[3])


class ContextHead(nn.Module):
    """Context pair (gamma_c, beta_c) predicted from the raw feature maps —
    the path that bypasses normalization so per-image style survives."""

    def __init__(self, cfg: ModulationConfig):
        super().__init__()
        self.net = ParamHeads(cfg.feature_channels, cfg, 2)

    def forward(self, features):
        gamma_c, beta_c = self.net(features)
        return ModulationPair(gamma=gamma_c, beta=beta_c)


def semantic_heads(layout, module: SemanticHeads):
    return module(layout)


def context_head(features, module: ContextHead):
    return module(features)


def spm_fuse(quad: SemanticParamQuad, ctx: ModulationPair) -> ModulationPair:
    """First-stage modulation: semantic pairs modulate the context pair.

    gamma_f = (1 + gs2) * gamma_c + bs2
    beta_f  = (1 + gs1) * beta_c  + bs1
    """
    shapes = {t.shape for t in (quad.gs1, quad.bs1, quad.gs2, quad.bs2, ctx.gamma, ctx.beta)}
    if len(shapes) != 1:
        raise ShapeError(f"fuse inputs must share one shape, got {sorted(tuple(s) for s in shapes)}")
    gamma_f = (1 + quad.gs2) * ctx.gamma + quad.bs2
    beta_f = (1 + quad.gs1) * ctx.beta + quad.bs1
    return ModulationPair(gamma=gamma_f, beta=beta_f)


def _assert_param_shape(pair: ModulationPair, features):
    # the parameter maps must match the feature maps exactly, per construction
    if pair.gamma.shape != features.shape or pair.beta.shape != features.shape:
        raise ShapeError(
            f"modulation parameter shape {tuple(pair.gamma.shape)} does not match "
            f"feature shape {tuple(features.shape)}"
        )


class SPADEBlock(nn.Module):
    """Baseline block: normalize, then scale/shift with layout-only parameters."""

    def __init__(self, layout_channels, cfg: ModulationConfig):
        super().__init__()
        self.cfg = cfg
        self.semantic = SemanticHeads(layout_channels, cfg, n_pairs=1)

    def modulation_params(self, features, layout):
        layout = resize(layout, features.shape[2:], mode="nearest")
        return self.semantic(layout)

    def forward(self, features, layout):
        normalized, _ = channel_normalize(features)
        pair = self.modulation_params(features, layout)
        _assert_param_shape(pair, features)
        return (1 + pair.gamma) * normalized + pair.beta


class SPMBlock(nn.Module):
    """Two-stage block: fuse semantic and context parameters, then modulate.

    `normalized_context=True` is the "w norm" ablation — the context head is
    fed normalized features, which washes out the per-image style.
    """

    def __init__(self, layout_channels, cfg: ModulationConfig, normalized_context=False):
        super().__init__()
        self.cfg = cfg
        self.normalized_context = normalized_context
        self.semantic = SemanticHeads(layout_channels, cfg, n_pairs=2)
        self.context = ContextHead(cfg)

    def modulation_params(self, features, layout):
        layout = resize(layout, features.shape[2:], mode="nearest")
        quad = self.semantic(layout)
        if self.normalized_context:
            ctx_input, _ = channel_normalize(features)
        else:
            ctx_input = features
        ctx = self.context(ctx_input)
        return spm_fuse(quad, ctx)

    def forward(self, features, layout):
        normalized, _ = channel_normalize(features)
        pair = self.modulation_params(features, layout)
        _assert_param_shape(pair, features)
        return (1 + pair.gamma) * normalized + pair.beta


def spade_forward(features, layout, block: SPADEBlock):
    return block(features, layout)


def spm_forward(features, layout, block: SPMBlock):
    return block(features, layout)


def make_block(block_type, layout_channels, cfg: ModulationConfig):
    """Factory for the ablation switch: 'spm', 'spade', or 'wnorm'."""
    if block_type == "spm":
        return SPMBlock(layout_channels, cfg)
    if block_type == "wnorm":
        return SPMBlock(layout_channels, cfg, normalized_context=True)
    if block_type == "spade":
        return SPADEBlock(layout_channels, cfg)
    raise ValueError(f"unknown block type {block_type!r}")
