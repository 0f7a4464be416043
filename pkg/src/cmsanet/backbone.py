"""Small convolutional feature extractor with three same-resolution levels.

Two stride-2 stem convs bring the image to 1/4 resolution; three further
3x3 blocks run in sequence at that resolution and each emits one level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cmsanet import autodiff as ad
from cmsanet.autodiff import Tensor
from cmsanet.errors import DimensionError

STRIDE = 4


def _he(rng, c_out, c_in, k=3):
    std = math.sqrt(2.0 / (c_in * k * k))
    return Tensor(rng.normal(0.0, std, (c_out, c_in, k, k)), requires_grad=True)


def _zeros(n):
    return Tensor(np.zeros(n), requires_grad=True)


@dataclass
class BackboneParams:
    convs: dict[str, tuple[Tensor, Tensor]]

    @classmethod
    def init(cls, channels, rng: np.random.Generator, in_channels: int = 3) -> "BackboneParams":
        c1, c2, c3 = channels
        shapes = {
            "stem1": (c1, in_channels),
            "stem2": (c1, c1),
            "block1": (c1, c1),
            "block2": (c2, c1),
            "block3": (c3, c2),
        }
        return cls({k: (_he(rng, co, ci), _zeros(co)) for k, (co, ci) in shapes.items()})

    @property
    def channels(self) -> tuple[int, int, int]:
        return tuple(self.convs[k][0].shape[0] for k in ("block1", "block2", "block3"))

    def tensors(self) -> dict[str, Tensor]:
        out = {}
        for k, (w, b) in self.convs.items():
            out[f"{k}.w"] = w
            out[f"{k}.b"] = b
        return out


def backbone_forward(image: Tensor, params: BackboneParams) -> tuple[Tensor, Tensor, Tensor]:
    """``3 x H x W`` image -> three ``C_i x H/4 x W/4`` feature maps."""
    image = ad.as_tensor(image)
    if image.ndim != 3:
        raise DimensionError(f"image must be C x H x W, got {image.shape}")
    _, h, w = image.shape
    if h % STRIDE or w % STRIDE:
        raise DimensionError(f"image extents {h}x{w} must be divisible by {STRIDE}")
    c = params.convs
    x = ad.relu(ad.conv2d(image, *c["stem1"], stride=2))
    x = ad.relu(ad.conv2d(x, *c["stem2"], stride=2))
    v1 = ad.relu(ad.conv2d(x, *c["block1"]))
    v2 = ad.relu(ad.conv2d(v1, *c["block2"]))
    v3 = ad.relu(ad.conv2d(v2, *c["block3"]))
    return v1, v2, v3
