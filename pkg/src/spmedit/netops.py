"""Differentiable primitives: convolution, resizing, spectral normalization,
and a finite-difference gradient checker.

Everything above this module (modulation blocks, generators, discriminators)
is built from these wrappers, so the oracle tests here anchor the whole stack.
Verification runs use float64; training runs float32.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

EPS = 1e-8


class ShapeError(ValueError):
    pass


@dataclass
class ConvSpec:
    """Plain convolution description: kernel (C_out, C_in, k_h, k_w) + bias (C_out)."""

    kernel: torch.Tensor
    bias: torch.Tensor
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kernel.dim() != 4:
            raise ShapeError(f"kernel must be 4-D (C_out, C_in, k_h, k_w), got {tuple(self.kernel.shape)}")
        if self.bias.dim() != 1 or self.bias.shape[0] != self.kernel.shape[0]:
            raise ShapeError(
                f"bias length {tuple(self.bias.shape)} does not match kernel C_out={self.kernel.shape[0]}"
            )
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ShapeError(f"padding must be >= 0, got {self.padding}")


def out_size(size, k, stride, padding):
    return (size + 2 * padding - k) // stride + 1


def check_feature_map(x, name="x"):
    if not torch.is_tensor(x) or x.dim() != 4:
        raise ShapeError(f"{name} must be a 4-D (N, C, H, W) tensor")
    if not torch.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")


def conv2d(x, spec: ConvSpec):
    """Standard zero-padded cross-correlation of a (N, C, H, W) feature map."""
    check_feature_map(x)
    c_out, c_in, kh, kw = spec.kernel.shape
    if x.shape[1] != c_in:
        raise ShapeError(f"input channels {x.shape[1]} do not match kernel C_in={c_in}")
    oh = out_size(x.shape[2], kh, spec.stride, spec.padding)
    ow = out_size(x.shape[3], kw, spec.stride, spec.padding)
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"output spatial size {oh}x{ow} < 1 for input {x.shape[2]}x{x.shape[3]}, "
            f"kernel {kh}x{kw}, stride {spec.stride}, padding {spec.padding}"
        )
    return F.conv2d(x, spec.kernel, spec.bias, stride=spec.stride, padding=spec.padding)


class PowerIterState:
    """Persistent left/right singular vectors for power iteration.

    One state object per kernel; vectors are kept unit-norm across calls.
    """

    def __init__(self, rows, cols, seed=0, dtype=torch.float32):
        g = torch.Generator().manual_seed(seed)
        self.u = F.normalize(torch.randn(rows, generator=g, dtype=dtype), dim=0, eps=EPS)
        self.v = F.normalize(torch.randn(cols, generator=g, dtype=dtype), dim=0, eps=EPS)

    def to_(self, dtype):
        self.u = self.u.to(dtype)
        self.v = self.v.to(dtype)
        return self


def _ritz_refine(mat, v):
    """One Rayleigh-Ritz step on span{v, (W^T W) v}: squares the effective
    power-iteration accuracy for near-degenerate spectra at the cost of a few
    extra matvecs. Returns refined (u, v)."""
    w1 = mat @ v
    r = mat.t() @ w1
    q = r - (r @ v) * v
    qn = q.norm()
    if qn > 1e-12:
        basis = torch.stack([v, q / qn], dim=1)           # (cols, 2)
        small = mat @ basis                               # (rows, 2)
        _, _, vh = torch.linalg.svd(small, full_matrices=False)
        v = F.normalize(basis @ vh[0], dim=0, eps=EPS)
    u = F.normalize(mat @ v, dim=0, eps=EPS)
    return u, v


def spectral_normalize(w, iters, state: PowerIterState, update=True):
    """Divide a kernel by the power-iteration estimate of its top singular value.

    `w` is viewed as a (C_out, C_in*k_h*k_w) matrix. The singular-vector state
    persists across calls and gets a Rayleigh-Ritz polish after the sweeps;
    `update=False` freezes it (used during gradient checks so finite
    differences see a fixed, differentiable map). Sigma itself stays the
    bilinear form u.Wv of the frozen vectors, so its gradient is exact.
    """
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    mat = w.reshape(w.shape[0], -1)
    u, v = state.u, state.v
    if update:
        with torch.no_grad():
            for _ in range(iters):
                v = F.normalize(mat.t() @ u, dim=0, eps=EPS)
                u = F.normalize(mat @ v, dim=0, eps=EPS)
            state.u, state.v = _ritz_refine(mat, v)
    sigma = torch.dot(state.u, mat @ state.v)
    return w / (sigma + EPS)


def resize(x, target, mode="bilinear"):
    """Resize a (N, C, H, W) tensor to `target` (H', W').

    bilinear uses the align-corners=false convention; nearest uses floor
    rounding. Both conventions are pinned so the loop oracles in the tests
    are bit-reproducible.
    """
    check_feature_map(x)
    th, tw = target
    if th < 1 or tw < 1:
        raise ShapeError(f"target size must be >= 1, got {target}")
    if (th, tw) == tuple(x.shape[2:]):
        return x
    if mode == "nearest":
        return F.interpolate(x, size=(th, tw), mode="nearest")
    if mode == "bilinear":
        return F.interpolate(x, size=(th, tw), mode="bilinear", align_corners=False)
    raise ValueError(f"unknown resize mode {mode!r}")


@dataclass
class GradCheckReport:
    max_relative_error: float
    worst_coordinate: tuple
    step_size: float


def grad_check(f, x, h=1e-5):
    """Compare the autograd gradient of a scalar function against central differences.

    Walks every coordinate of `x`, so keep inputs small. Relative error per
    coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    x = x.detach().clone().requires_grad_(True)
    y = f(x)
    if y.dim() != 0:
        raise ValueError("grad_check expects a scalar-valued function")
    if not torch.isfinite(y):
        raise ValueError("f(x) is not finite")
    (analytic,) = torch.autograd.grad(y, x)

    flat = x.detach().reshape(-1)
    worst = (0,)
    worst_err = 0.0
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + h
            f_plus = f(x.detach().reshape(x.shape)).item()
            flat[i] = orig - h
            f_minus = f(x.detach().reshape(x.shape)).item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = analytic.reshape(-1)[i].item()
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if err > worst_err:
                worst_err = err
                worst = tuple(int(t) for t in torch.unravel_index(torch.tensor(i), x.shape))
    return GradCheckReport(max_relative_error=worst_err, worst_coordinate=worst, step_size=h)
