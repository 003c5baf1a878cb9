"""
The fixed layer set the Siamese encoder is built from, on top of torch autograd.

Every op checks its output for NaN/Inf and raises NumericError, so a diverging
run stops at the first bad activation instead of producing a silent NaN loss.
Reductions (convolution is left to torch; BN statistics, GeM) accumulate in
float64 regardless of the storage dtype.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidArgumentError, NumericError

KERNEL_SIZE = 4
STRIDE = 2
LEAKY_SLOPE = 0.2
BN_MOMENTUM = 0.1
BN_EPSILON = 1e-5
GEM_CLAMP = 1e-6
INIT_STD = 0.02

ADAM_LR = 1e-5
ADAM_BETAS = (0.9, 0.999)
ADAM_EPSILON = 1e-8


def check_finite(x: torch.Tensor, op: str) -> torch.Tensor:
    if not torch.isfinite(x).all():
        raise NumericError(f"{op} produced non-finite values (shape {tuple(x.shape)})")
    return x


# ---------------------------------------------------------------------------
# Initialisation
# ---------------------------------------------------------------------------

def init_weights(
    shape: Sequence[int],
    kind: str,
    generator: torch.Generator,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """
    Draw initial values: conv kernels ~ N(0, 0.02^2), BN gamma ~ N(1, 0.02^2).
    Biases and BN beta start at zero and do not go through here.
    """
    noise = torch.randn(tuple(shape), generator=generator, dtype=torch.float64) * INIT_STD
    if kind == "conv":
        return noise.to(dtype)
    if kind == "gamma":
        return (noise + 1.0).to(dtype)
    raise InvalidArgumentError(f"unknown init kind: {kind!r} (conv|gamma)")


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

class ConvLayer(nn.Module):
    """4x4 kernel, stride 2, SAME-style zero padding."""

    def __init__(self, in_channels: int, out_channels: int, generator: torch.Generator,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        shape = (out_channels, in_channels, KERNEL_SIZE, KERNEL_SIZE)
        self.weight = nn.Parameter(init_weights(shape, "conv", generator, dtype))
        self.bias = nn.Parameter(torch.zeros(out_channels, dtype=dtype))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return conv2d(x, self)


class BatchNormLayer(nn.Module):
    def __init__(self, channels: int, generator: torch.Generator,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.channels = channels
        self.momentum = BN_MOMENTUM
        self.epsilon = BN_EPSILON
        self.gamma = nn.Parameter(init_weights((channels,), "gamma", generator, dtype))
        self.beta = nn.Parameter(torch.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", torch.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", torch.ones(channels, dtype=dtype))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return batch_norm(x, self, training=self.training)


def same_padding(size: int) -> tuple[int, int]:
    """(before, after) zero padding so a stride-2 4x4 conv yields ceil(size / 2)."""
    out = -(-size // STRIDE)
    total = max(0, (out - 1) * STRIDE + KERNEL_SIZE - size)
    before = total // 2
    return before, total - before


def conv2d(x: torch.Tensor, layer: ConvLayer) -> torch.Tensor:
    if x.dim() != 4 or x.shape[1] != layer.in_channels:
        raise InvalidArgumentError(
            f"conv2d expects B x {layer.in_channels} x H x W input, got {tuple(x.shape)}"
        )
    top, bottom = same_padding(x.shape[2])
    left, right = same_padding(x.shape[3])
    padded = F.pad(x, (left, right, top, bottom))
    out = F.conv2d(padded, layer.weight, layer.bias, stride=STRIDE)
    return check_finite(out, "conv2d")


def leaky_relu(x: torch.Tensor) -> torch.Tensor:
    # torch.where picks the identity branch at 0, so the subgradient there is 1.
    return torch.where(x >= 0, x, x * LEAKY_SLOPE)


def batch_norm(x: torch.Tensor, layer: BatchNormLayer, training: bool) -> torch.Tensor:
    """
    Per-channel normalisation over (batch, height, width).

    In training the batch statistics normalise the input and are blended into the
    running statistics with momentum 0.1; in evaluation only the running statistics
    are read.
    """
    if x.dim() != 4 or x.shape[1] != layer.channels:
        raise InvalidArgumentError(
            f"batch_norm expects B x {layer.channels} x H x W input, got {tuple(x.shape)}"
        )
    shape = (1, -1, 1, 1)
    if training:
        count = x.shape[0] * x.shape[2] * x.shape[3]
        if count < 2:
            raise InvalidArgumentError(
                "batch_norm in training mode needs at least 2 values per channel"
            )
        wide = x.to(torch.float64)
        mean = wide.mean(dim=(0, 2, 3))
        var = (wide - mean.view(shape)).pow(2).mean(dim=(0, 2, 3))
        with torch.no_grad():
            m = layer.momentum
            layer.running_mean.mul_(1.0 - m).add_(m * mean.detach().to(layer.running_mean.dtype))
            layer.running_var.mul_(1.0 - m).add_(m * var.detach().to(layer.running_var.dtype))
        normed = ((wide - mean.view(shape)) / torch.sqrt(var.view(shape) + layer.epsilon)).to(x.dtype)
    else:
        mean = layer.running_mean.view(shape)
        var = layer.running_var.view(shape)
        normed = (x - mean) / torch.sqrt(var + layer.epsilon)
    out = normed * layer.gamma.view(shape) + layer.beta.view(shape)
    return check_finite(out, "batch_norm")


def gem_pool(x: torch.Tensor, p: float) -> torch.Tensor:
    """
    Generalised-mean pooling over the spatial axes: B x D x H x W -> B x D.

    Inputs are clamped at 1e-6 first (leaky-ReLU features can be negative);
    p = 1 is average pooling and p -> inf approaches max pooling.
    """
    if p < 1:
        raise InvalidArgumentError(f"GeM exponent must be >= 1, got {p}")
    wide = x.to(torch.float64).clamp(min=GEM_CLAMP)
    # Pool relative to the channel peak; small activations at large p underflow otherwise.
    peak = wide.amax(dim=(-2, -1), keepdim=True).detach()
    pooled = peak.squeeze(-1).squeeze(-1) * (wide / peak).pow(p).mean(dim=(-2, -1)).pow(1.0 / p)
    return check_finite(pooled.to(x.dtype), "gem_pool")


def resize_bilinear(x: torch.Tensor, out_h: int, out_w: int) -> torch.Tensor:
    if out_h < 1 or out_w < 1:
        raise InvalidArgumentError(f"resize target must be positive, got {out_h}x{out_w}")
    if x.shape[-2:] == (out_h, out_w):
        return x
    return F.interpolate(x, size=(out_h, out_w), mode="bilinear", align_corners=False)


def concat_channels(xs: Sequence[torch.Tensor]) -> torch.Tensor:
    if not xs:
        raise InvalidArgumentError("concat_channels needs at least one tensor")
    ref = xs[0].shape
    for t in xs[1:]:
        if t.dim() != len(ref) or t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise InvalidArgumentError(
                f"cannot concatenate {tuple(t.shape)} with {tuple(ref)} along channels"
            )
    return torch.cat(list(xs), dim=1)


def l2_normalize(x: torch.Tensor) -> torch.Tensor:
    """Scale each row (last axis) to unit L2 norm."""
    norm = x.norm(dim=-1, keepdim=True)
    if (norm == 0).any():
        raise NumericError("cannot L2-normalise a zero vector")
    return check_finite(x / norm, "l2_normalize")


# ---------------------------------------------------------------------------
# Optimiser
# ---------------------------------------------------------------------------

def make_optimizer(params: Iterable[nn.Parameter], lr: float = ADAM_LR) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=lr, betas=ADAM_BETAS, eps=ADAM_EPSILON)


def adam_step(
    params: Sequence[nn.Parameter],
    grads: Sequence[Optional[torch.Tensor]],
    optimizer: torch.optim.Adam,
) -> None:
    """
    Apply one bias-corrected Adam update. grads[i] belongs to params[i]; a None
    gradient leaves that parameter out of this step.
    """
    if len(params) != len(grads):
        raise InvalidArgumentError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if g is None:
            p.grad = None
            continue
        if g.shape != p.shape:
            raise InvalidArgumentError(
                f"gradient shape {tuple(g.shape)} does not match parameter {tuple(p.shape)}"
            )
        check_finite(g, "adam_step gradient")
        if p.grad is not g:
            p.grad = g.detach().clone()
    optimizer.step()


def adam_step_count(optimizer: torch.optim.Adam) -> int:
    steps = [int(s["step"]) for s in optimizer.state.values() if "step" in s]
    return max(steps, default=0)


def default_generator(seed: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(int(seed))
    return gen


def finite_or_raise(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NumericError(f"{what} is not finite: {value}")
    return value
