"""Translation networks: a 2-1-2D generator and a PatchGAN discriminator.

The generator downsamples with 2D convolutions, runs a 1D convolutional
residual bottleneck over the time axis, and upsamples back with pixel
shuffling; gated linear units throughout. It takes two input channels
(spectrogram window + frame mask) and emits one. Inputs whose bins or
frames are not multiples of the downsampling factor are padded internally
and cropped on the way out, so output shape always equals input shape.

The discriminator scores overlapping patches, returning a spatial grid of
real/fake logits rather than one scalar.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

DOWNSAMPLE_FACTOR = 4  # two stride-2 stages


class SpecError(ValueError):
    """Network specification cannot be built."""


@dataclass
class GeneratorSpec:
    bins: int
    window_frames: int
    base_channels: int = 64
    residual_blocks: int = 6

    def validate(self) -> "GeneratorSpec":
        if self.window_frames < DOWNSAMPLE_FACTOR:
            raise SpecError(
                f"window_frames {self.window_frames} is below the downsampling factor "
                f"{DOWNSAMPLE_FACTOR}"
            )
        if self.bins < DOWNSAMPLE_FACTOR:
            raise SpecError(f"bins {self.bins} is below the downsampling factor")
        return self


@dataclass
class DiscriminatorSpec:
    bins: int
    window_frames: int
    base_channels: int = 64
    layers: int = 3

    def validate(self) -> "DiscriminatorSpec":
        if min(self.bins, self.window_frames) < 2**self.layers:
            raise SpecError(
                f"input {self.bins}x{self.window_frames} too small for {self.layers} "
                "stride-2 layers"
            )
        return self


class GLUConv2d(nn.Module):
    """Conv2d with twice the channels gated down by a GLU."""

    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, norm=True):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch * 2, kernel, stride=stride, padding=padding)
        self.norm = nn.InstanceNorm2d(out_ch * 2, affine=True) if norm else None

    def forward(self, x):
        x = self.conv(x)
        if self.norm is not None:
            x = self.norm(x)
        return nn.functional.glu(x, dim=1)


class Residual1dBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv1 = nn.Conv1d(channels, channels * 2, 3, padding=1)
        self.norm1 = nn.InstanceNorm1d(channels * 2, affine=True)
        self.conv2 = nn.Conv1d(channels, channels, 3, padding=1)
        self.norm2 = nn.InstanceNorm1d(channels, affine=True)

    def forward(self, x):
        h = nn.functional.glu(self.norm1(self.conv1(x)), dim=1)
        return x + self.norm2(self.conv2(h))


class Generator(nn.Module):
    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        spec.validate()
        self.spec = spec
        c = spec.base_channels
        pad_bins = -spec.bins % DOWNSAMPLE_FACTOR
        self._bins_down = (spec.bins + pad_bins) // DOWNSAMPLE_FACTOR

        self.head = GLUConv2d(2, c, (5, 15), padding=(2, 7), norm=False)
        self.down1 = GLUConv2d(c, 2 * c, 5, stride=2, padding=2)
        self.down2 = GLUConv2d(2 * c, 4 * c, 5, stride=2, padding=2)

        flat = 4 * c * self._bins_down
        hidden = 4 * c
        self.to_1d = nn.Sequential(nn.Conv1d(flat, hidden, 1), nn.InstanceNorm1d(hidden, affine=True))
        self.blocks = nn.Sequential(*[Residual1dBlock(hidden) for _ in range(spec.residual_blocks)])
        self.from_1d = nn.Sequential(nn.Conv1d(hidden, flat, 1), nn.InstanceNorm1d(flat, affine=True))

        self.up1 = nn.Sequential(
            nn.Conv2d(4 * c, 4 * c * 4, 5, padding=2),
            nn.PixelShuffle(2),
            nn.InstanceNorm2d(4 * c, affine=True),
            nn.GLU(dim=1),
        )
        self.up2 = nn.Sequential(
            nn.Conv2d(2 * c, 2 * c * 4, 5, padding=2),
            nn.PixelShuffle(2),
            nn.InstanceNorm2d(2 * c, affine=True),
            nn.GLU(dim=1),
        )
        self.out = nn.Conv2d(c, 1, (5, 15), padding=(2, 7))

    def forward(self, x):
        if x.dim() != 4 or x.size(1) != 2:
            raise ValueError(f"expected (batch, 2, bins, frames) input, got {tuple(x.shape)}")
        if x.size(2) != self.spec.bins:
            raise ValueError(f"network was built for {self.spec.bins} bins, got {x.size(2)}")
        bins, frames = x.shape[2], x.shape[3]
        pad_b = -bins % DOWNSAMPLE_FACTOR
        pad_f = -frames % DOWNSAMPLE_FACTOR
        if pad_b or pad_f:
            x = nn.functional.pad(x, (0, pad_f, 0, pad_b), mode="replicate")

        h = self.head(x)
        h = self.down1(h)
        h = self.down2(h)

        b, c4, fb, ft = h.shape
        h = self.to_1d(h.reshape(b, c4 * fb, ft))
        h = self.blocks(h)
        h = self.from_1d(h)
        h = h.reshape(b, c4, fb, ft)

        h = self.up1(h)
        h = self.up2(h)
        h = self.out(h)
        return h[:, :, :bins, :frames]


class PatchDiscriminator(nn.Module):
    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        spec.validate()
        self.spec = spec
        c = spec.base_channels
        stages = [GLUConv2d(1, c, 3, padding=1, norm=False)]
        ch = c
        for _ in range(spec.layers):
            stages.append(GLUConv2d(ch, min(ch * 2, 8 * c), 3, stride=2, padding=1))
            ch = min(ch * 2, 8 * c)
        self.features = nn.Sequential(*stages)
        self.patch_out = nn.Conv2d(ch, 1, (1, 3), padding=(0, 1))

    def forward(self, x):
        if x.dim() != 4 or x.size(1) != 1:
            raise ValueError(f"expected (batch, 1, bins, frames) input, got {tuple(x.shape)}")
        return self.patch_out(self.features(x))


def build_generator(spec: GeneratorSpec, seed: int | None = None) -> Generator:
    """Instantiate a generator; a fixed seed gives bit-identical parameters."""
    if seed is not None:
        torch.manual_seed(seed)
    return Generator(spec)


def build_discriminator(spec: DiscriminatorSpec, seed: int | None = None) -> PatchDiscriminator:
    if seed is not None:
        torch.manual_seed(seed)
    return PatchDiscriminator(spec)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
