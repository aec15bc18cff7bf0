"""Convolutional encoder/decoder pair shared by pretraining and fine-tuning.

The encoder lifts the input through a stem convolution, then runs
``num_levels`` stages of strided-conv downsampling followed by residual
blocks; the decoder mirrors it with residual blocks followed by
nearest-neighbor upsampling. Every layer is differentiable and the spatial
contract is ``H/2^num_levels`` at the bottleneck for any divisible input.

The decoder accepts an optional per-level refinement hook so the
fine-tuning stage can insert detail refinement before each decoder stage
without the pretraining path knowing about it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import Tensor, nn

from .errors import DataError


@dataclass(frozen=True)
class BackboneConfig:
    """Sizes for the encoder/decoder pair.

    Paper-scale preset: 4 levels, 2 encoder / 3 decoder blocks per level,
    wide channels, 512-dim latents. Desk-scale defaults stay small enough
    to train on a laptop CPU.
    """

    num_levels: int = 4
    enc_blocks: int = 2
    dec_blocks: int = 3
    base_channels: int = 32
    latent_dim: int = 64
    channel_mult: tuple[int, ...] = (1, 2, 2, 4)

    def __post_init__(self) -> None:
        if len(self.channel_mult) != self.num_levels:
            raise DataError(
                f"channel_mult has {len(self.channel_mult)} entries "
                f"for {self.num_levels} levels"
            )

    @property
    def downsample_factor(self) -> int:
        return 2 ** self.num_levels

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(self.base_channels * m for m in self.channel_mult)


def _norm(channels: int) -> nn.GroupNorm:
    for groups in (8, 4, 2, 1):
        if channels % groups == 0:
            return nn.GroupNorm(groups, channels)
    raise AssertionError("unreachable")


class ResidualBlock(nn.Module):
    """norm -> SiLU -> 3x3 conv -> norm -> SiLU -> 3x3 conv, additive skip.

    With all conv weights and biases zero the block is the identity
    (provided in/out channels match, so the skip needs no projection).
    """

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.norm1 = _norm(in_channels)
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.norm2 = _norm(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.skip = (
            nn.Conv2d(in_channels, out_channels, 1)
            if in_channels != out_channels
            else nn.Identity()
        )

    def forward(self, x: Tensor) -> Tensor:
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return self.skip(x) + h


class Downsample(nn.Module):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, stride=2, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(x)


class Upsample(nn.Module):
    """Nearest-neighbor x2 followed by a 3x3 conv (avoids checkerboarding)."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(torch.nn.functional.interpolate(x, scale_factor=2, mode="nearest"))


class Encoder(nn.Module):
    """Maps (B, 3, H, W) images to (B, latent_dim, H/2^L, W/2^L) features."""

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        widths = config.widths
        self.conv_in = nn.Conv2d(3, widths[0], 3, padding=1)
        stages = []
        prev = widths[0]
        for width in widths:
            stage = [Downsample(prev, width)]
            stage += [ResidualBlock(width, width) for _ in range(config.enc_blocks)]
            stages.append(nn.Sequential(*stage))
            prev = width
        self.stages = nn.ModuleList(stages)
        self.norm_out = _norm(prev)
        self.conv_out = nn.Conv2d(prev, config.latent_dim, 3, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != 3:
            raise DataError(f"encoder expects (B, 3, H, W), got {tuple(x.shape)}")
        factor = self.config.downsample_factor
        if x.shape[-2] % factor or x.shape[-1] % factor:
            raise DataError(
                f"input {x.shape[-2]}x{x.shape[-1]} not divisible by {factor}"
            )
        h = self.conv_in(x)
        for stage in self.stages:
            h = stage(h)
        return self.conv_out(torch.nn.functional.silu(self.norm_out(h)))


class Decoder(nn.Module):
    """Maps bottleneck features back to (B, 3, H, W) images.

    ``refiner`` is an optional callable hooked in before each decoder stage:
    ``refiner(features, level, guidance)`` with level 0 at the bottleneck.
    The raw output is unclamped; clamping happens at inference boundaries.
    """

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        widths = config.widths[::-1]  # deepest first
        self.conv_in = nn.Conv2d(config.latent_dim, widths[0], 3, padding=1)
        self.block_stages = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for i, width in enumerate(widths):
            blocks = [ResidualBlock(width, width) for _ in range(config.dec_blocks)]
            self.block_stages.append(nn.Sequential(*blocks))
            out_width = widths[i + 1] if i + 1 < len(widths) else widths[-1]
            self.upsamples.append(Upsample(width, out_width))
        self.norm_out = _norm(widths[-1])
        self.conv_out = nn.Conv2d(widths[-1], 3, 3, padding=1)

    @property
    def level_widths(self) -> tuple[int, ...]:
        """Channel width of the features entering each decoder stage."""
        return self.config.widths[::-1]

    def forward(self, z: Tensor, refiner=None, guidance: Tensor | None = None) -> Tensor:
        expected = self.config.latent_dim
        if z.ndim != 4 or z.shape[1] != expected:
            raise DataError(f"decoder expects (B, {expected}, h, w), got {tuple(z.shape)}")
        h = self.conv_in(z)
        for level, (blocks, up) in enumerate(zip(self.block_stages, self.upsamples)):
            if refiner is not None:
                h = refiner(h, level, guidance)
            h = up(blocks(h))
        return self.conv_out(torch.nn.functional.silu(self.norm_out(h)))
