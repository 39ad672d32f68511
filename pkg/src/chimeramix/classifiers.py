"""Classifier architectures for the downstream task.

WideResNet-16-8 for 32x32 datasets, ResNet-50 for larger images, and a
small residual network used in desk-scale experiments and tests.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


class _WideBasic(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int):
        super().__init__()
        self.bn1 = nn.BatchNorm2d(in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        self.shortcut = (
            nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False)
            if stride != 1 or in_ch != out_ch
            else nn.Identity()
        )

    def forward(self, x):
        out = F.relu(self.bn1(x))
        out = self.conv1(out)
        out = self.conv2(F.relu(self.bn2(out)))
        return out + self.shortcut(x)


class WideResNet(nn.Module):
    """WideResNet-depth-width; depth 16 / width 8 is the small-image default."""

    def __init__(self, class_count: int, depth: int = 16, width: int = 8, channels: int = 3):
        super().__init__()
        assert (depth - 4) % 6 == 0, "depth must be 6n + 4"
        n = (depth - 4) // 6
        widths = [16, 16 * width, 32 * width, 64 * width]
        self.conv1 = nn.Conv2d(channels, widths[0], 3, padding=1, bias=False)
        layers = []
        in_ch = widths[0]
        for stage, out_ch in enumerate(widths[1:]):
            for block in range(n):
                stride = 2 if stage > 0 and block == 0 else 1
                layers.append(_WideBasic(in_ch, out_ch, stride))
                in_ch = out_ch
        self.blocks = nn.Sequential(*layers)
        self.bn = nn.BatchNorm2d(in_ch)
        self.fc = nn.Linear(in_ch, class_count)

    def forward(self, x):
        out = self.blocks(self.conv1(x))
        out = F.relu(self.bn(out))
        out = F.adaptive_avg_pool2d(out, 1).flatten(1)
        return self.fc(out)


class TinyResNet(nn.Module):
    """Small residual network for desk-scale runs on tiny images."""

    def __init__(self, class_count: int, channels: int = 3, width: int = 16):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, width, 3, padding=1, bias=False)
        self.block1 = _WideBasic(width, width, 1)
        self.block2 = _WideBasic(width, 2 * width, 2)
        self.bn = nn.BatchNorm2d(2 * width)
        self.fc = nn.Linear(2 * width, class_count)

    def forward(self, x):
        out = self.block2(self.block1(self.conv1(x)))
        out = F.relu(self.bn(out))
        out = F.adaptive_avg_pool2d(out, 1).flatten(1)
        return self.fc(out)


def build_classifier(arch: str, class_count: int, channels: int = 3) -> nn.Module:
    """Factory: 'wrn-16-8', 'resnet-50', or 'tiny'."""
    if arch == "wrn-16-8":
        return WideResNet(class_count, 16, 8, channels)
    if arch == "resnet-50":
        from torchvision.models import resnet50

        model = resnet50(num_classes=class_count)
        if channels != 3:
            model.conv1 = nn.Conv2d(channels, 64, 7, stride=2, padding=3, bias=False)
        return model
    if arch == "tiny":
        return TinyResNet(class_count, channels)
    raise ValueError(f"unknown classifier architecture '{arch}'")
