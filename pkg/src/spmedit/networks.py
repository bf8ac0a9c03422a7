"""Progressive pyramid: three U-Net generators with modulation blocks in the
decoder, three spectral-norm PatchGAN-style discriminators (4/5/6 layers of
5x5 stride-2 convs), and the input composition that chains the scales.
"""

import math
import zlib
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .modulation import ModulationConfig, make_block
from .netops import EPS, ShapeError, resize

GENERATOR_INPUT_CHANNELS = 4  # masked RGB + mask


@dataclass
class PyramidConfig:
    base_resolution: tuple = (64, 64)     # finest scale; paper scale is 256x256
    n_scales: int = 3
    base_channels: int = 12
    max_channels: int = 96
    d_base_channels: int = 12
    d_max_channels: int = 48
    modulation_hidden: int = 16
    num_classes: int = 8
    block_type: str = "spm"               # spm | spade | wnorm
    extra_spade_block: bool = False       # "w SPADE-L": one extra block per decoder stage
    progressive: bool = True              # off = only the finest generator

    def __post_init__(self):
        if isinstance(self.base_resolution, int):
            self.base_resolution = (self.base_resolution, self.base_resolution)
        self.base_resolution = tuple(self.base_resolution)

    @property
    def layout_channels(self):
        return self.num_classes + 1  # + reserved unknown class

    def scale_factor(self, n):
        return 2 ** (self.n_scales - n)

    def scale_resolution(self, n):
        h, w = self.base_resolution
        f = self.scale_factor(n)
        return (h // f, w // f)

    def encoder_depth(self, n):
        return 3 + n

    def required_divisor(self):
        # the deepest encoder must reach >= 1x1 with exact halvings
        return self.scale_factor(1) * 2 ** self.encoder_depth(1)

    def validate(self):
        div = self.required_divisor()
        for n in range(1, self.n_scales + 1):
            dv = self.scale_factor(n) * 2 ** self.encoder_depth(n)
            div = max(div, dv)
        h, w = self.base_resolution
        if h % div or w % div:
            raise ShapeError(
                f"base resolution {h}x{w} must be divisible by {div} "
                f"(scale factors times encoder halvings)"
            )


def receptive_field(layers, kernel, stride):
    """Receptive field of a stack of equal conv layers (r += (k-1)*j, j *= s)."""
    if layers < 1:
        raise ValueError("layers must be >= 1")
    r, j = 1, 1
    for _ in range(layers):
        r += (kernel - 1) * j
        j *= stride
    return r


def _channels(base, max_ch, depth):
    return [min(base * 2 ** i, max_ch) for i in range(depth + 1)]


class SNConv2d(nn.Module):
    """5x5 convolution whose kernel is divided by its power-iteration top
    singular value. The singular-vector buffers advance exactly once per
    forward in training mode and stay frozen in eval mode."""

    def __init__(self, in_channels, out_channels, kernel_size=5, stride=2, padding=2):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.weight = nn.Parameter(torch.empty(out_channels, in_channels, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.zeros(out_channels))
        nn.init.kaiming_uniform_(self.weight, a=math.sqrt(5))
        cols = in_channels * kernel_size * kernel_size
        self.register_buffer("u", F.normalize(torch.randn(out_channels), dim=0, eps=EPS))
        self.register_buffer("v", F.normalize(torch.randn(cols), dim=0, eps=EPS))

    def advance_power_iteration(self, iters=1):
        mat = self.weight.detach().reshape(self.weight.shape[0], -1)
        u, v = self.u, self.v
        for _ in range(iters):
            v = F.normalize(mat.t() @ u, dim=0, eps=EPS)
            u = F.normalize(mat @ v, dim=0, eps=EPS)
        self.u.copy_(u)
        self.v.copy_(v)

    def normalized_weight(self):
        mat = self.weight.reshape(self.weight.shape[0], -1)
        # snapshot the buffers: later in-place power-iteration updates must not
        # invalidate graphs built by earlier forwards in the same step
        sigma = torch.dot(self.u.clone(), mat @ self.v.clone())
        return self.weight / (sigma + EPS)

    def forward(self, x):
        if self.training:
            with torch.no_grad():
                self.advance_power_iteration(1)
        return F.conv2d(x, self.normalized_weight(), self.bias, stride=self.stride, padding=self.padding)


class Generator(nn.Module):
    """Encoder-decoder with skip connections for one pyramid scale.

    The encoder is plain stride-2 convs on [masked RGB, mask]; the layout
    enters only through the modulation blocks, one per decoder stage before
    each upsample, which keeps the SPM/SPADE ablation a pure block swap.
    """

    def __init__(self, cfg: PyramidConfig, scale_index):
        super().__init__()
        self.scale_index = scale_index
        self.resolution = cfg.scale_resolution(scale_index)
        self.depth = cfg.encoder_depth(scale_index)
        self.extra_block = cfg.extra_spade_block
        ch = _channels(cfg.base_channels, cfg.max_channels, self.depth)
        self.channels = ch

        self.stem = nn.Conv2d(GENERATOR_INPUT_CHANNELS, ch[0], 3, padding=1)
        self.encoder = nn.ModuleList(
            nn.Conv2d(ch[i - 1], ch[i], 3, stride=2, padding=1) for i in range(1, self.depth + 1)
        )

        mods, mods_extra, dec_convs, fuse_convs = [], [], [], []
        for i in range(self.depth, 0, -1):
            mcfg = ModulationConfig(feature_channels=ch[i], hidden_channels=cfg.modulation_hidden)
            mods.append(make_block(cfg.block_type, cfg.layout_channels, mcfg))
            dec_convs.append(nn.Conv2d(ch[i], ch[i - 1], 3, padding=1))
            if self.extra_block:
                ecfg = ModulationConfig(feature_channels=ch[i - 1], hidden_channels=cfg.modulation_hidden)
                mods_extra.append(make_block(cfg.block_type, cfg.layout_channels, ecfg))
            fuse_convs.append(nn.Conv2d(2 * ch[i - 1], ch[i - 1], 3, padding=1))
        self.mod_blocks = nn.ModuleList(mods)
        self.extra_mod_blocks = nn.ModuleList(mods_extra)
        self.dec_convs = nn.ModuleList(dec_convs)
        self.fuse_convs = nn.ModuleList(fuse_convs)
        self.to_rgb = nn.Conv2d(ch[0], 3, 3, padding=1)

    def forward(self, image, layout, mask):
        if tuple(image.shape[2:]) != self.resolution:
            raise ShapeError(
                f"generator {self.scale_index} expects {self.resolution}, got {tuple(image.shape[2:])}"
            )
        x = torch.cat([image, mask], dim=1)
        x = F.leaky_relu(self.stem(x), 0.2)
        skips = [x]
        for enc in self.encoder:
            x = F.leaky_relu(enc(x), 0.2)
            skips.append(x)

        for idx in range(self.depth):
            x = self.mod_blocks[idx](x, layout)
            x = F.leaky_relu(x, 0.2)
            x = self.dec_convs[idx](x)
            if self.extra_block:
                x = self.extra_mod_blocks[idx](x, layout)
                x = F.leaky_relu(x, 0.2)
            h, w = x.shape[2], x.shape[3]
            x = resize(x, (h * 2, w * 2), mode="nearest")
            skip = skips[self.depth - 1 - idx]
            x = torch.cat([x, skip], dim=1)
            x = F.leaky_relu(self.fuse_convs[idx](x), 0.2)
        return torch.tanh(self.to_rgb(x))


class Discriminator(nn.Module):
    """Stack of 5x5 stride-2 spectral-norm convs conditioned on the layout by
    channel concatenation; the last conv emits the 1-channel score map."""

    def __init__(self, cfg: PyramidConfig, scale_index):
        super().__init__()
        self.scale_index = scale_index
        self.resolution = cfg.scale_resolution(scale_index)
        self.n_layers = 3 + scale_index
        in_ch = 3 + cfg.layout_channels
        ch = _channels(cfg.d_base_channels, cfg.d_max_channels, self.n_layers - 1)
        convs = []
        prev = in_ch
        for i in range(self.n_layers - 1):
            convs.append(SNConv2d(prev, ch[i]))
            prev = ch[i]
        convs.append(SNConv2d(prev, 1))
        self.convs = nn.ModuleList(convs)
        rf = receptive_field(self.n_layers, 5, 2)
        side = min(self.resolution)
        if rf < 0.9 * side:
            raise ShapeError(
                f"discriminator {scale_index}: receptive field {rf} < 0.9 * input side {side}"
            )

    def forward(self, image, layout):
        if tuple(image.shape[2:]) != self.resolution:
            raise ShapeError(
                f"discriminator {self.scale_index} expects {self.resolution}, got {tuple(image.shape[2:])}"
            )
        x = torch.cat([image, layout], dim=1)
        for conv in self.convs[:-1]:
            x = F.leaky_relu(conv(x), 0.2)
        return self.convs[-1](x)


@dataclass
class PyramidState:
    cfg: PyramidConfig
    generators: nn.ModuleList
    discriminators: nn.ModuleList
    seed: int = 0
    step: int = 0
    extra: dict = field(default_factory=dict)

    def scales(self):
        if self.cfg.progressive:
            return list(range(1, self.cfg.n_scales + 1))
        return [self.cfg.n_scales]

    def generator(self, n) -> Generator:
        return self.generators[n - 1]

    def discriminator(self, n) -> Discriminator:
        return self.discriminators[n - 1]

    def train(self):
        self.generators.train()
        self.discriminators.train()
        return self

    def eval(self):
        self.generators.eval()
        self.discriminators.eval()
        return self

    def to(self, dtype):
        self.generators.to(dtype)
        self.discriminators.to(dtype)
        return self


def _name_seed(seed, name):
    return (seed * 1000003 + zlib.crc32(name.encode())) % (2 ** 63 - 1)


def seeded_init_(module: nn.Module, seed):
    """Deterministic per-parameter init: each parameter gets its own generator
    keyed on (seed, parameter name), so two variants that share layer names
    share weights bit-exactly regardless of what else they contain. Modulation
    head convs are re-zeroed afterwards (identity start)."""
    gain = math.sqrt(2.0 / (1.0 + 0.2 ** 2))  # leaky_relu(0.2) stacks
    for name, p in module.named_parameters():
        g = torch.Generator().manual_seed(_name_seed(seed, name))
        with torch.no_grad():
            if p.dim() >= 2:
                bound = gain * math.sqrt(3.0 / p[0].numel())
                p.copy_(torch.empty_like(p).uniform_(-bound, bound, generator=g))
            else:
                p.zero_()
    for name, p in module.named_parameters():
        if ".heads." in name:
            with torch.no_grad():
                p.zero_()
    for name, b in module.named_buffers():
        if name.endswith(".u") or name.endswith(".v"):
            g = torch.Generator().manual_seed(_name_seed(seed, name))
            with torch.no_grad():
                b.copy_(F.normalize(torch.randn(b.shape, generator=g), dim=0, eps=EPS))


def build_pyramid(cfg: PyramidConfig, seed=0) -> PyramidState:
    """Construct all generators and discriminators with independent, seeded
    weights; two builds with the same seed are bit-identical."""
    cfg.validate()
    generators = nn.ModuleList(Generator(cfg, n) for n in range(1, cfg.n_scales + 1))
    discriminators = nn.ModuleList(Discriminator(cfg, n) for n in range(1, cfg.n_scales + 1))
    seeded_init_(generators, seed)
    seeded_init_(discriminators, seed + 1)
    return PyramidState(cfg=cfg, generators=generators, discriminators=discriminators, seed=seed)


def _check_binary_mask(mask):
    if not ((mask == 0) | (mask == 1)).all():
        raise ValueError("mask must be binary (0/1)")


def compose_input(o_prev, image, mask):
    """Edited-region pixels from the previous output, known pixels from the
    image: o_prev * M + image * (1 - M), selected bit-exactly."""
    if o_prev.shape != image.shape:
        raise ShapeError(f"shape mismatch {tuple(o_prev.shape)} vs {tuple(image.shape)}")
    if mask.shape[0] != image.shape[0] or mask.shape[2:] != image.shape[2:]:
        raise ShapeError(f"mask shape {tuple(mask.shape)} does not match image {tuple(image.shape)}")
    _check_binary_mask(mask)
    return torch.where(mask.bool(), o_prev, image)


def generator_forward(gen: Generator, image, layout, mask):
    return gen(image, layout, mask)


def discriminator_forward(disc: Discriminator, image, layout):
    return disc(image, layout)


def build_pyramids(cfg: PyramidConfig, image, layout, mask):
    """Per-scale (image, layout, mask) lists, coarse to fine: bilinear for
    images, nearest for layouts and masks (keeps them one-hot / binary).
    Images are re-masked at each scale so the edited region stays zeroed."""
    images, layouts, masks = [], [], []
    for n in range(1, cfg.n_scales + 1):
        res = cfg.scale_resolution(n)
        m_n = resize(mask, res, mode="nearest")
        images.append(resize(image, res, mode="bilinear") * (1.0 - m_n))
        layouts.append(resize(layout, res, mode="nearest"))
        masks.append(m_n)
    return images, layouts, masks


def pyramid_forward(state: PyramidState, image, layout, mask):
    """Run the chain coarse-to-fine and return the raw output of every active
    scale. With `progressive` off only the finest generator runs, from the
    input image alone."""
    cfg = state.cfg
    if tuple(image.shape[2:]) != cfg.base_resolution:
        raise ShapeError(
            f"expected full-resolution input {cfg.base_resolution}, got {tuple(image.shape[2:])}"
        )
    images, layouts, masks = build_pyramids(cfg, image, layout, mask)
    if not cfg.progressive:
        n = cfg.n_scales
        out = state.generator(n)(images[n - 1], layouts[n - 1], masks[n - 1])
        return [out]

    outputs = []
    prev = None
    for n in range(1, cfg.n_scales + 1):
        i_n, s_n, m_n = images[n - 1], layouts[n - 1], masks[n - 1]
        if prev is None:
            gen_in = i_n
        else:
            up = resize(prev, cfg.scale_resolution(n), mode="bilinear")
            gen_in = compose_input(up, i_n, m_n)
        out = state.generator(n)(gen_in, s_n, m_n)
        outputs.append(out)
        prev = out
    return outputs


def parameter_count(module: nn.Module):
    return sum(p.numel() for p in module.parameters())
