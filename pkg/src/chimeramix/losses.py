"""Training losses: reconstruction, Laplacian-pyramid perceptual, and
least-squares adversarial terms, plus the weighted generator objective.

All functions take NCHW tensors and are differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

# 5-tap binomial blur kernel applied per axis
_BLUR_TAPS = torch.tensor([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass
class LossWeights:
    alpha_rec: float = 1000.0
    alpha_per: float = 1.0
    alpha_disc: float = 1.0

    def __post_init__(self):
        if min(self.alpha_rec, self.alpha_per, self.alpha_disc) < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass
class LaplacianPyramid:
    """Band-pass residuals followed by the final low-pass level."""

    levels: list[torch.Tensor]

    @property
    def level_count(self) -> int:
        return len(self.levels)


def _blur(x: torch.Tensor) -> torch.Tensor:
    taps = _BLUR_TAPS.to(dtype=x.dtype, device=x.device)
    kernel = torch.outer(taps, taps).expand(x.shape[1], 1, 5, 5)
    padded = F.pad(x, (2, 2, 2, 2), mode="reflect")
    return F.conv2d(padded, kernel, groups=x.shape[1])


def _downsample(x: torch.Tensor) -> torch.Tensor:
    return _blur(x)[..., ::2, ::2]


def _upsample(x: torch.Tensor, size) -> torch.Tensor:
    return _blur(F.interpolate(x, size=size, mode="nearest"))


def build_laplacian_pyramid(x: torch.Tensor, level_count: int) -> LaplacianPyramid:
    """Decompose x into level_count entries: band-pass residuals and a final
    low-pass. The decomposition telescopes back to x exactly."""
    if level_count < 1:
        raise ValueError("level_count must be >= 1")
    if min(x.shape[-2:]) < 2 ** level_count:
        raise ValueError(
            f"spatial size {tuple(x.shape[-2:])} too small for {level_count} levels"
        )
    levels = []
    current = x
    for _ in range(level_count - 1):
        coarser = _downsample(current)
        levels.append(current - _upsample(coarser, current.shape[-2:]))
        current = coarser
    levels.append(current)
    return LaplacianPyramid(levels)


def reconstruct_from_pyramid(pyramid: LaplacianPyramid) -> torch.Tensor:
    current = pyramid.levels[-1]
    for residual in reversed(pyramid.levels[:-1]):
        current = residual + _upsample(current, residual.shape[-2:])
    return current


def reconstruction_loss(
    xhat1: torch.Tensor, x1: torch.Tensor, xhat2: torch.Tensor, x2: torch.Tensor
) -> torch.Tensor:
    """Sum of per-pair mean squared errors for the two reconstruction passes."""
    if xhat1.shape != x1.shape or xhat2.shape != x2.shape:
        raise ValueError("reconstruction pairs must have matching shapes")
    return F.mse_loss(xhat1, x1) + F.mse_loss(xhat2, x2)


def perceptual_loss(
    xhat: torch.Tensor, x: torch.Tensor, level_count: int = 3, level_weight_base: float = 4.0
) -> torch.Tensor:
    """l1 distance between Laplacian pyramids, coarse levels upweighted by
    level_weight_base**j (default 4 = 2^2j)."""
    if xhat.shape != x.shape:
        raise ValueError("perceptual loss inputs must have matching shapes")
    pa = build_laplacian_pyramid(xhat, level_count)
    pb = build_laplacian_pyramid(x, level_count)
    total = xhat.new_zeros(())
    for j, (a, b) in enumerate(zip(pa.levels, pb.levels)):
        total = total + (level_weight_base ** j) * (a - b).abs().mean()
    return total


def lsgan_d_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    """Discriminator objective: real patches toward 1, fake patches toward 0."""
    return ((real_scores - 1.0) ** 2).mean() + (fake_scores ** 2).mean()


def lsgan_g_loss(fake_scores: torch.Tensor) -> torch.Tensor:
    """Generator objective: fake patches toward the real label."""
    return ((fake_scores - 1.0) ** 2).mean()


def generator_total_loss(
    l_rec: torch.Tensor, l_per: torch.Tensor, l_gdisc: torch.Tensor, w: LossWeights
) -> torch.Tensor:
    return w.alpha_rec * l_rec + w.alpha_per * l_per + w.alpha_disc * l_gdisc
