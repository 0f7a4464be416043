"""Segmentation head and binary cross-entropy loss."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cmsanet import autodiff as ad
from cmsanet.autodiff import Tensor
from cmsanet.errors import DimensionError

LOG_CLAMP = (1e-12, 1.0)


@dataclass
class HeadParams:
    w: Tensor  # 1 x D x 3 x 3
    b: Tensor  # 1

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator, bias: float = 0.0) -> "HeadParams":
        std = math.sqrt(1.0 / (9 * dim))
        return cls(Tensor(rng.normal(0.0, std, (1, dim, 3, 3)), requires_grad=True),
                   Tensor(np.full(1, float(bias)), requires_grad=True))

    def tensors(self) -> dict[str, Tensor]:
        return {"w": self.w, "b": self.b}


def predict_logits(F_o, params: HeadParams) -> Tensor:
    """Pre-sigmoid ``H x W`` map: 3x3 conv of the summed level outputs."""
    total = F_o[0]
    for f in F_o[1:]:
        if f.shape != total.shape:
            raise DimensionError(f"level outputs differ in shape: {total.shape} vs {f.shape}")
        total = ad.add(total, f)
    z = ad.conv2d(total, params.w, params.b)
    return ad.reshape(z, z.shape[1:])


def predict(F_o1, F_o2, F_o3, params: HeadParams) -> Tensor:
    return ad.sigmoid(predict_logits([F_o1, F_o2, F_o3], params))


def bce_loss(P: Tensor, Y) -> Tensor:
    """Mean negative log-likelihood of the binary mask ``Y`` under ``P``."""
    Y = np.asarray(getattr(Y, "data", Y), dtype=np.float64)
    if P.shape != Y.shape:
        raise DimensionError(f"prediction {P.shape} and mask {Y.shape} differ in shape")
    lo, hi = LOG_CLAMP
    pos = ad.mul(Y, ad.log(P, lo, hi))
    neg = ad.mul(1.0 - Y, ad.log(ad.sub(1.0, P), lo, hi))
    return ad.scalar_mul(ad.mean(ad.add(pos, neg)), -1.0)
