"""Losses, the frozen perceptual embedder, and the end-to-end training loop.

Per scale the generator objective is L1 + 10.0 * perceptual + hinge
adversarial; scales are summed with equal weight. One step = one update of
all discriminators followed by one joint update of all generators.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import make_batch
from .networks import PyramidState, build_pyramids, compose_input, seeded_init_

log = logging.getLogger(__name__)

PERCEPTUAL_WEIGHT = 10.0

EMBEDDER_CHANNELS = (16, 32, 64, 64)
EMBEDDER_SEED = 2024


class FeatureEmbedder(nn.Module):
    """Frozen fixed-seed 4-stage conv feature extractor (stride-2 stages).

    A deterministic stand-in for a pretrained perceptual network: random deep
    features are a cheap but usable perceptual proxy, and the fixed seed makes
    every metric reproducible. Smooth activations keep gradient checks clean.
    """

    def __init__(self, seed=EMBEDDER_SEED, in_channels=3):
        super().__init__()
        layers = []
        prev = in_channels
        for ch in EMBEDDER_CHANNELS:
            layers.append(nn.Conv2d(prev, ch, 3, stride=2, padding=1))
            prev = ch
        self.stages = nn.ModuleList(layers)
        seeded_init_(self, seed)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    @property
    def feature_dim(self):
        return EMBEDDER_CHANNELS[-1]

    def forward(self, x):
        feats = []
        for stage in self.stages:
            x = torch.tanh(stage(x))
            feats.append(x)
        return feats


def l1_loss(pred, target):
    return (pred - target).abs().mean()


def perceptual_loss(pred, target, embedder):
    """Sum over embedder stages of mean absolute feature differences."""
    if embedder is None:
        raise ValueError("perceptual_loss requires an embedder")
    total = pred.new_zeros(())
    for fp, ft in zip(embedder(pred), embedder(target)):
        total = total + (fp - ft).abs().mean()
    return total


def hinge_d_loss(real_scores, fake_scores):
    return F.relu(1.0 - real_scores).mean() + F.relu(1.0 + fake_scores).mean()


def hinge_g_loss(fake_scores):
    return -fake_scores.mean()


@dataclass
class LossBreakdown:
    l1: float = 0.0
    perceptual: float = 0.0
    adv_g: float = 0.0
    adv_d: float = 0.0

    @property
    def total_g(self):
        return self.l1 + PERCEPTUAL_WEIGHT * self.perceptual + self.adv_g


def total_g_loss(parts):
    """Sum per-scale loss parts with equal scale weights; the returned
    breakdown keeps the summed components for logging."""
    out = LossBreakdown()
    for p in parts:
        out.l1 += p.l1
        out.perceptual += p.perceptual
        out.adv_g += p.adv_g
        out.adv_d += p.adv_d
    return out


@dataclass
class OptimConfig:
    lr_g: float = 1e-4
    lr_d: float = 4e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epochs: int = 1
    batch_size: int = 8

    def __post_init__(self):
        if self.lr_g < 0 or self.lr_d < 0:
            raise ValueError("learning rates must be non-negative")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must be in (0, 1)")


class NonFiniteLossError(RuntimeError):
    pass


def _check_finite(value, step, scale, part):
    if not torch.isfinite(value):
        raise NonFiniteLossError(
            f"non-finite {part} loss at step {step}, scale {scale}: {value.item()}"
        )


class Trainer:
    """Owns the optimizers and the frozen embedder for one PyramidState."""

    def __init__(self, state: PyramidState, opt: OptimConfig, embedder=None):
        self.state = state
        self.opt_cfg = opt
        self.embedder = embedder if embedder is not None else FeatureEmbedder()
        betas = (opt.beta1, opt.beta2)
        self.opt_g = torch.optim.Adam(state.generators.parameters(), lr=opt.lr_g, betas=betas)
        self.opt_d = torch.optim.Adam(state.discriminators.parameters(), lr=opt.lr_d, betas=betas)
        self.history = []

    def step(self, batch) -> LossBreakdown:
        breakdown = train_step(self, batch)
        self.history.append(breakdown)
        return breakdown


def _scale_tensors(state, batch):
    """Per-active-scale (target, masked, mask, layout) tuples."""
    if batch.targets_s is None:
        targets, masks, layouts = build_pyramids(state.cfg, batch.target, batch.layout, batch.mask)
        maskeds, _, _ = build_pyramids(state.cfg, batch.masked, batch.layout, batch.mask)
    else:
        targets, maskeds, masks, layouts = batch.targets_s, batch.masked_s, batch.masks_s, batch.layouts_s
    return [(n, targets[n - 1], maskeds[n - 1], masks[n - 1], layouts[n - 1]) for n in state.scales()]


def _forward_all_scales(state: PyramidState, batch):
    """Chain the generators and return per-scale composited outputs."""
    cfg = state.cfg
    per_scale = _scale_tensors(state, batch)
    outputs = []
    prev = None
    for n, target_n, masked_n, mask_n, layout_n in per_scale:
        if prev is None or not cfg.progressive:
            gen_in = masked_n
        else:
            up = torch.nn.functional.interpolate(
                prev, size=masked_n.shape[2:], mode="bilinear", align_corners=False)
            gen_in = compose_input(up, masked_n, mask_n)
        raw = state.generator(n)(gen_in, layout_n, mask_n)
        # losses and discriminators see the output pasted into the clean
        # target, so only the edited region can differ from the real image
        composited = compose_input(raw, target_n, mask_n)
        outputs.append((n, raw, composited, target_n, mask_n, layout_n))
        prev = raw
    return outputs


def train_step(trainer: Trainer, batch):
    """One discriminator update (all scales) then one generator update."""
    state = trainer.state
    state.train()
    step = state.step

    outs = _forward_all_scales(state, batch)

    # discriminator half-step on detached composites
    d_total = None
    d_parts = {}
    for n, _raw, comp, target_n, _mask_n, layout_n in outs:
        disc = state.discriminator(n)
        real = disc(target_n, layout_n)
        fake = disc(comp.detach(), layout_n)
        d_n = hinge_d_loss(real, fake)
        _check_finite(d_n, step, n, "adv_d")
        d_parts[n] = d_n
        d_total = d_n if d_total is None else d_total + d_n
    trainer.opt_d.zero_grad(set_to_none=True)
    d_total.backward()
    trainer.opt_d.step()

    d_fingerprint = _weight_fingerprint(state.discriminators)

    # generator half-step; discriminators participate but stay frozen
    parts = []
    g_total = None
    for n, _raw, comp, target_n, _mask_n, layout_n in outs:
        rec = l1_loss(comp, target_n)
        perc = perceptual_loss(comp, target_n, trainer.embedder)
        adv = hinge_g_loss(state.discriminator(n)(comp, layout_n))
        for name, val in (("l1", rec), ("perceptual", perc), ("adv_g", adv)):
            _check_finite(val, step, n, name)
        g_n = rec + PERCEPTUAL_WEIGHT * perc + adv
        parts.append(LossBreakdown(l1=rec.item(), perceptual=perc.item(),
                                   adv_g=adv.item(), adv_d=d_parts[n].item()))
        g_total = g_n if g_total is None else g_total + g_n
    trainer.opt_g.zero_grad(set_to_none=True)
    trainer.opt_d.zero_grad(set_to_none=True)  # drop grads the G loss pushed into D
    g_total.backward()
    trainer.opt_g.step()

    assert _weight_fingerprint(state.discriminators) == d_fingerprint, \
        "discriminator weights changed during the generator half-step"

    state.step += 1
    return total_g_loss(parts)


def _weight_fingerprint(module):
    with torch.no_grad():
        return float(sum(p.double().sum().item() for p in module.parameters()))


@dataclass
class TrainRun:
    steps_done: int = 0
    history: list = field(default_factory=list)


def fit(trainer: Trainer, scenes, steps, rng, mask_sampler=None, log_path=None,
        log_every=25, stop_fn=None):
    """Seed-deterministic loop: sample a batch of scenes + masks, take one
    train step, append a `step, l1, lp, adv_g, adv_d, total_g` log line."""
    from .masks import sample_mask

    if mask_sampler is None:
        mask_sampler = sample_mask
    cfg = trainer.state.cfg
    batch_size = trainer.opt_cfg.batch_size
    run = TrainRun()
    log_file = open(log_path, "a") if log_path else None
    try:
        for _ in range(steps):
            idx = rng.integers(0, len(scenes), size=min(batch_size, len(scenes)))
            batch = make_batch([scenes[i] for i in idx], mask_sampler, cfg, rng)
            breakdown = trainer.step(batch)
            run.history.append(breakdown)
            run.steps_done += 1
            if log_file and (run.steps_done % log_every == 0 or run.steps_done == steps):
                log_file.write(
                    f"{trainer.state.step}, {breakdown.l1:.6f}, {breakdown.perceptual:.6f}, "
                    f"{breakdown.adv_g:.6f}, {breakdown.adv_d:.6f}, {breakdown.total_g:.6f}\n"
                )
                log_file.flush()
            if stop_fn is not None and stop_fn(run):
                break
    finally:
        if log_file:
            log_file.close()
    return run
