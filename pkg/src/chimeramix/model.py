"""Mixing generator (encoder f, feature mixer, decoder g) and patch
discriminator.

The generator follows the resnet-style image translation layout: a 7x7 stem,
two stride-2 downsampling convolutions, residual blocks split at the mixing
point, and a mirrored upsampling path ending in tanh. Model I/O lives in
[-1, 1]; conversion from the [0, 1] storage range happens here.
"""

from __future__ import annotations

import pickle
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import CheckpointError
from .masks import MixMask

CHECKPOINT_VERSION = 1


@dataclass
class GeneratorConfig:
    n_res_blocks: int = 4
    mix_after_block: int = 2
    base_channels: int = 64
    input_size: tuple[int, int] = (64, 64)
    channels: int = 3
    upsample_mode: str = "resize"  # "resize" avoids checkerboard artifacts; "transposed" available

    def __post_init__(self):
        if not 0 <= self.mix_after_block <= self.n_res_blocks:
            raise ValueError("mix_after_block must be in [0, n_res_blocks]")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.upsample_mode not in ("resize", "transposed"):
            raise ValueError("upsample_mode must be 'resize' or 'transposed'")
        self.input_size = tuple(self.input_size)

    @property
    def feature_channels(self) -> int:
        return 4 * self.base_channels

    @property
    def feature_size(self) -> tuple[int, int]:
        return (self.input_size[0] // 4, self.input_size[1] // 4)


@dataclass
class DiscriminatorConfig:
    block_channels: tuple[int, ...] = (64, 128, 256, 512)
    kernel: int = 4
    stride: int = 1
    padding: int = 0  # valid padding: each block shrinks the map by kernel - stride
    channels: int = 3
    norm_first_block: bool = False
    leaky_slope: float = 0.2

    def __post_init__(self):
        self.block_channels = tuple(self.block_channels)


def to_model_range(images: np.ndarray | torch.Tensor) -> torch.Tensor:
    """[0, 1] HWC numpy batch (or tensor) -> [-1, 1] NCHW float tensor."""
    if isinstance(images, np.ndarray):
        t = torch.from_numpy(np.ascontiguousarray(images)).float()
        if t.ndim == 3:
            t = t.unsqueeze(0)
        t = t.permute(0, 3, 1, 2)
    else:
        t = images.float()
    return t * 2.0 - 1.0


def from_model_range(batch: torch.Tensor) -> np.ndarray:
    """[-1, 1] NCHW tensor -> [0, 1] NHWC float32 numpy batch."""
    arr = ((batch.detach() + 1.0) * 0.5).clamp(0.0, 1.0)
    return arr.permute(0, 2, 3, 1).cpu().numpy().astype(np.float32)


def init_weights(module: nn.Module) -> None:
    """Normal(0, 0.02) initialization for convolution weights."""
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.body(x)


def _upsample_block(in_ch: int, out_ch: int, mode: str) -> nn.Module:
    if mode == "transposed":
        conv = nn.Sequential(
            nn.ConvTranspose2d(in_ch, out_ch, 3, stride=2, padding=1, output_padding=1)
        )
    else:
        conv = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(in_ch, out_ch, 3, padding=1),
        )
    return nn.Sequential(conv, nn.InstanceNorm2d(out_ch), nn.ReLU(inplace=True))


class MixingGenerator(nn.Module):
    """Encoder/decoder pair split at the feature-mixing point."""

    def __init__(self, config: GeneratorConfig | None = None):
        super().__init__()
        self.config = config or GeneratorConfig()
        c = self.config
        b = c.base_channels
        self.encoder = nn.Sequential(
            nn.ReflectionPad2d(3),
            nn.Conv2d(c.channels, b, 7),
            nn.InstanceNorm2d(b),
            nn.ReLU(inplace=True),
            nn.Conv2d(b, 2 * b, 3, stride=2, padding=1),
            nn.InstanceNorm2d(2 * b),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * b, 4 * b, 3, stride=2, padding=1),
            nn.InstanceNorm2d(4 * b),
            nn.ReLU(inplace=True),
            *[ResidualBlock(4 * b) for _ in range(c.mix_after_block)],
        )
        self.decoder = nn.Sequential(
            *[ResidualBlock(4 * b) for _ in range(c.n_res_blocks - c.mix_after_block)],
            _upsample_block(4 * b, 2 * b, c.upsample_mode),
            _upsample_block(2 * b, b, c.upsample_mode),
            nn.ReflectionPad2d(3),
            nn.Conv2d(b, c.channels, 7),
            nn.Tanh(),
        )
        self.apply(init_weights)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        if h % 4 or w % 4:
            raise ValueError(
                f"spatial size {h}x{w} not divisible by 4; pre-upsample the inputs"
            )
        return self.encoder(x)

    def decode(self, e: torch.Tensor) -> torch.Tensor:
        return self.decoder(e)

    def forward(self, x1: torch.Tensor, x2: torch.Tensor, m) -> torch.Tensor:
        return self.decode(mix_features(self.encode(x1), self.encode(x2), m))


def mask_to_tensor(m, like: torch.Tensor) -> torch.Tensor:
    """MixMask / array -> boolean (1, 1, H', W') tensor on like's device."""
    if isinstance(m, MixMask):
        m = m.values
    if isinstance(m, np.ndarray):
        m = torch.from_numpy(np.ascontiguousarray(m))
    m = m.to(device=like.device)
    while m.ndim < 4:
        m = m.unsqueeze(0) if m.ndim != 3 else m.unsqueeze(1)
    return m != 0


def mix_features(e1: torch.Tensor, e2: torch.Tensor, m) -> torch.Tensor:
    """Per-location channel-wise selection: parent 1 where the mask is 1."""
    if e1.shape != e2.shape:
        raise ValueError(f"feature shapes differ: {tuple(e1.shape)} vs {tuple(e2.shape)}")
    mask = mask_to_tensor(m, e1)
    if mask.shape[-2:] != e1.shape[-2:]:
        raise ValueError(
            f"mask shape {tuple(mask.shape[-2:])} does not match features {tuple(e1.shape[-2:])}"
        )
    return torch.where(mask, e1, e2)


class PatchDiscriminator(nn.Module):
    """Convolutional patch classifier with sigmoid patch scores."""

    def __init__(self, config: DiscriminatorConfig | None = None):
        super().__init__()
        self.config = config or DiscriminatorConfig()
        c = self.config
        layers: list[nn.Module] = []
        in_ch = c.channels
        for i, out_ch in enumerate(c.block_channels):
            layers.append(nn.Conv2d(in_ch, out_ch, c.kernel, stride=c.stride, padding=c.padding))
            if i > 0 or c.norm_first_block:
                layers.append(nn.InstanceNorm2d(out_ch))
            layers.append(nn.LeakyReLU(c.leaky_slope, inplace=True))
            in_ch = out_ch
        layers.append(nn.Conv2d(in_ch, 1, 1))
        layers.append(nn.Sigmoid())
        self.body = nn.Sequential(*layers)
        self.apply(init_weights)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        shrink = len(self.config.block_channels) * (self.config.kernel - self.config.stride)
        if min(x.shape[-2:]) <= shrink:
            raise ValueError(
                f"input {tuple(x.shape[-2:])} smaller than the discriminator's "
                f"receptive field ({shrink + 1} minimum)"
            )
        return self.body(x)


def save_checkpoint(path, model: nn.Module, config, kind: str, extra: dict | None = None) -> None:
    """Write a versioned checkpoint: config echo + named parameter arrays."""
    state = {name: tensor.detach().cpu().numpy() for name, tensor in model.state_dict().items()}
    payload = {
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "config": asdict(config),
        "state": state,
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        pickle.dump(payload, fh, protocol=4)


def load_checkpoint(path, model: nn.Module, config, kind: str) -> dict:
    """Load parameters into model, rejecting config mismatch with a field diff."""
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    if payload.get("kind") != kind:
        raise CheckpointError(f"{path}: checkpoint kind '{payload.get('kind')}', expected '{kind}'")
    stored = payload["config"]
    current = asdict(config)
    diffs = [
        f"  {key}: checkpoint={stored.get(key)!r} current={current.get(key)!r}"
        for key in sorted(set(stored) | set(current))
        if _normalize(stored.get(key)) != _normalize(current.get(key))
    ]
    if diffs:
        raise CheckpointError(f"{path}: config mismatch:\n" + "\n".join(diffs))
    model.load_state_dict(
        {name: torch.from_numpy(arr.copy()) for name, arr in payload["state"].items()}
    )
    return payload["extra"]


def _normalize(value):
    return list(value) if isinstance(value, tuple) else value


def load_generator_checkpoint(path) -> MixingGenerator:
    """Reconstruct a generator from a checkpoint's own config echo."""
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if payload.get("kind") != "generator":
        raise CheckpointError(f"{path}: checkpoint kind '{payload.get('kind')}', expected 'generator'")
    config = GeneratorConfig(**payload["config"])
    model = MixingGenerator(config)
    load_checkpoint(path, model, config, "generator")
    return model


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
