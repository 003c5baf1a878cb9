from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import torch
import torch.nn as nn

from .autonn import (
    BatchNormLayer,
    ConvLayer,
    concat_channels,
    default_generator,
    gem_pool,
    l2_normalize,
    leaky_relu,
    resize_bilinear,
)
from .errors import InvalidArgumentError
from .geometry import subsample_grid

DEFAULT_SCHEDULE: tuple[int, ...] = (64, 128, 256, 512, 512, 512, 512)
NUM_BLOCKS = 7
UV_CHANNELS = 2

SCHEMES = ("I", "II", "rgb-baseline")


@dataclass(frozen=True)
class BranchConfig:
    channel_schedule: tuple[int, ...] = DEFAULT_SCHEDULE
    scheme: str = "I"           # I: U-V at the input only; II: also after every block
    input_channels: int = 5     # 5 = RGB + U + V, 3 = RGB only

    def __post_init__(self) -> None:
        if len(self.channel_schedule) != NUM_BLOCKS:
            raise InvalidArgumentError(
                f"channel schedule needs {NUM_BLOCKS} entries, got {len(self.channel_schedule)}"
            )
        if any(c < 1 for c in self.channel_schedule):
            raise InvalidArgumentError(f"channel counts must be positive: {self.channel_schedule}")
        if self.scheme not in ("I", "II"):
            raise InvalidArgumentError(f"scheme must be I or II, got {self.scheme!r}")
        if self.input_channels not in (3, 5):
            raise InvalidArgumentError(f"input_channels must be 3 or 5, got {self.input_channels}")
        if self.scheme == "II" and self.input_channels != 5:
            raise InvalidArgumentError("scheme II injects U-V maps and needs 5 input channels")

    @classmethod
    def from_scheme(cls, scheme: str, channel_schedule: Sequence[int] = DEFAULT_SCHEDULE) -> "BranchConfig":
        """Build from a run-config scheme name: I, II or rgb-baseline."""
        if scheme == "rgb-baseline":
            return cls(tuple(channel_schedule), "I", 3)
        return cls(tuple(channel_schedule), scheme, 5)

    @property
    def uses_uv(self) -> bool:
        return self.input_channels == 5

    @property
    def descriptor_dim(self) -> int:
        return sum(self.channel_schedule[-3:])

    def block_in_channels(self, k: int) -> int:
        """Input channels of block k (0-based)."""
        if k == 0:
            return self.input_channels
        extra = UV_CHANNELS if self.scheme == "II" else 0
        return self.channel_schedule[k - 1] + extra


class ConvBlock(nn.Module):
    """conv -> leaky-ReLU -> batch norm."""

    def __init__(self, in_channels: int, out_channels: int, generator: torch.Generator,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.conv = ConvLayer(in_channels, out_channels, generator, dtype)
        self.bn = BatchNormLayer(out_channels, generator, dtype)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.bn(leaky_relu(self.conv(x)))


class Branch(nn.Module):
    def __init__(self, cfg: BranchConfig, generator: torch.Generator,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.cfg = cfg
        self.blocks = nn.ModuleList(
            ConvBlock(cfg.block_in_channels(k), cfg.channel_schedule[k], generator, dtype)
            for k in range(NUM_BLOCKS)
        )

    def forward(self, image: torch.Tensor, uv: Optional[torch.Tensor] = None) -> list[torch.Tensor]:
        return branch_forward(self, image, uv)


def branch_forward(branch: Branch, image: torch.Tensor, uv: Optional[torch.Tensor]) -> list[torch.Tensor]:
    """
    Run one encoder branch and return the output of all seven blocks.

    image is B x 3 x H x W; uv is B x 2 x H x W (ignored by the RGB baseline).
    Each block halves the spatial size, rounding up.
    """
    cfg = branch.cfg
    if image.dim() != 4 or image.shape[1] != 3:
        raise InvalidArgumentError(f"image must be B x 3 x H x W, got {tuple(image.shape)}")
    if cfg.uses_uv:
        if uv is None:
            raise InvalidArgumentError("this branch needs a U-V map")
        if uv.shape[0] != image.shape[0] or uv.shape[1] != UV_CHANNELS or uv.shape[2:] != image.shape[2:]:
            raise InvalidArgumentError(
                f"U-V map {tuple(uv.shape)} does not match image {tuple(image.shape)}"
            )
        x = concat_channels([image, uv.to(image.dtype)])
    else:
        x = image

    outputs: list[torch.Tensor] = []
    for k, block in enumerate(branch.blocks):
        x = block(x)
        outputs.append(x)
        if cfg.scheme == "II" and k + 1 < NUM_BLOCKS:
            x = concat_channels([x, subsample_grid(uv, 2 ** (k + 1)).to(x.dtype)])
    return outputs


def aggregate_multiscale(maps: Sequence[torch.Tensor]) -> torch.Tensor:
    """
    Resize the last two block outputs up to the first map's spatial size and
    stack all three along channels.
    """
    if len(maps) != 3:
        raise InvalidArgumentError(f"multi-scale aggregation takes 3 maps, got {len(maps)}")
    h, w = maps[0].shape[-2:]
    return concat_channels([resize_bilinear(m, h, w) for m in maps])


class SiameseModel(nn.Module):
    """Two encoder branches with unshared weights, one per view."""

    def __init__(
        self,
        cfg: BranchConfig = BranchConfig(),
        gem_p: float = 3.0,
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        self.cfg = cfg
        self.gem_p = gem_p
        self.seed = seed
        generator = default_generator(seed)
        self.ground_branch = Branch(cfg, generator, dtype)
        self.satellite_branch = Branch(cfg, generator, dtype)

    def branch(self, view: str) -> Branch:
        if view == "ground":
            return self.ground_branch
        if view == "satellite":
            return self.satellite_branch
        raise InvalidArgumentError(f"unknown branch: {view!r} (ground|satellite)")

    def forward(self, image: torch.Tensor, uv: Optional[torch.Tensor], view: str) -> torch.Tensor:
        return embed(self, image, uv, view)


def embed(model: SiameseModel, image: torch.Tensor, uv: Optional[torch.Tensor], view: str) -> torch.Tensor:
    """
    Descriptor for a batch of images: blocks -> last-three aggregation -> GeM -> L2.

    Train/eval behaviour follows model.training (batch vs running BN statistics).
    Returns B x D unit-norm rows.
    """
    maps = branch_forward(model.branch(view), image, uv)
    features = aggregate_multiscale(maps[-3:])
    return l2_normalize(gem_pool(features, model.gem_p))


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def parameter_bytes(model: nn.Module) -> int:
    """Storage for all trainable scalars at 32 bits each."""
    return count_parameters(model) * 4


def model_manifest(model: SiameseModel, scheme_name: Optional[str] = None) -> dict:
    cfg = model.cfg
    if scheme_name is None:
        scheme_name = cfg.scheme if cfg.uses_uv else "rgb-baseline"
    return {
        "channel_schedule": list(cfg.channel_schedule),
        "scheme": scheme_name,
        "input_channels": cfg.input_channels,
        "gem_p": float(model.gem_p),
        "seed": int(model.seed),
        "descriptor_dim": cfg.descriptor_dim,
        "parameters": count_parameters(model),
    }


def model_from_manifest(manifest: dict, dtype: torch.dtype = torch.float32) -> SiameseModel:
    try:
        cfg = BranchConfig.from_scheme(manifest["scheme"], tuple(manifest["channel_schedule"]))
        return SiameseModel(cfg, gem_p=float(manifest["gem_p"]), seed=int(manifest["seed"]), dtype=dtype)
    except KeyError as e:
        raise InvalidArgumentError(f"model manifest is missing key {e}") from None
