"""Gated fusion of the three per-level self-attentive feature maps.

Each level is projected to a common width ``D``; per-location memory and
reset gates (one scalar per position, shared across channels) decide how
much of the other levels flows into it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cmsanet import autodiff as ad
from cmsanet.autodiff import Tensor
from cmsanet.errors import DimensionError, UsageError

FUSION_MODES = ("gated", "self_gated", "none")
N_LEVELS = 3


@dataclass
class LevelParams:
    proj_w: Tensor  # D x C_i x 1 x 1
    proj_b: Tensor  # D
    mem_w: Tensor  # 1 x D x 1 x 1
    mem_b: Tensor  # 1
    reset_w: Tensor
    reset_b: Tensor

    def tensors(self) -> dict[str, Tensor]:
        return {"proj_w": self.proj_w, "proj_b": self.proj_b, "mem_w": self.mem_w,
                "mem_b": self.mem_b, "reset_w": self.reset_w, "reset_b": self.reset_b}


@dataclass
class FusionParams:
    levels: list[LevelParams]
    gamma: Tensor  # one ratio per source level

    @classmethod
    def init(cls, in_channels, dim: int, rng: np.random.Generator, gamma: float = 1.0) -> "FusionParams":
        if len(in_channels) != N_LEVELS:
            raise UsageError(f"fusion needs {N_LEVELS} levels, got {len(in_channels)}")
        levels = []
        for c in in_channels:
            gate_std = 1.0 / math.sqrt(dim)
            levels.append(LevelParams(
                proj_w=Tensor(rng.normal(0.0, math.sqrt(1.0 / c), (dim, c, 1, 1)), requires_grad=True),
                proj_b=Tensor(np.zeros(dim), requires_grad=True),
                mem_w=Tensor(rng.normal(0.0, gate_std, (1, dim, 1, 1)), requires_grad=True),
                mem_b=Tensor(np.zeros(1), requires_grad=True),
                reset_w=Tensor(rng.normal(0.0, gate_std, (1, dim, 1, 1)), requires_grad=True),
                reset_b=Tensor(np.zeros(1), requires_grad=True),
            ))
        return cls(levels, Tensor(np.full(N_LEVELS, float(gamma)), requires_grad=True))

    @property
    def dim(self) -> int:
        return self.levels[0].proj_w.shape[0]

    def tensors(self) -> dict[str, Tensor]:
        out = {}
        for i, lvl in enumerate(self.levels):
            out.update({f"level{i + 1}.{k}": v for k, v in lvl.tensors().items()})
        out["gamma"] = self.gamma
        return out


def project_level(Fhat: Tensor, params: FusionParams, i: int, hw: tuple[int, int] | None = None) -> Tensor:
    """1x1 projection of an ``H x W x C_i`` map to ``D x H x W``.

    ``i`` is the zero-based level index; ``hw`` optionally pins the shared extents.
    """
    if Fhat.ndim != 3:
        raise DimensionError(f"level feature must be H x W x C, got {Fhat.shape}")
    if hw is not None and Fhat.shape[:2] != tuple(hw):
        raise DimensionError(f"level {i + 1} extents {Fhat.shape[:2]} != shared extents {tuple(hw)}")
    lvl = params.levels[i]
    return ad.conv2d(ad.transpose(Fhat, (2, 0, 1)), lvl.proj_w, lvl.proj_b)


def compute_gates(X: Tensor, params: FusionParams, i: int) -> tuple[Tensor, Tensor]:
    """Memory and reset gates of level ``i``, each ``H x W`` in (0, 1)."""
    lvl = params.levels[i]
    _, h, w = X.shape
    m = ad.sigmoid(ad.reshape(ad.conv2d(X, lvl.mem_w, lvl.mem_b), (h, w)))
    r = ad.sigmoid(ad.reshape(ad.conv2d(X, lvl.reset_w, lvl.reset_b), (h, w)))
    return m, r


def fuse(X, gates, gamma: Tensor, mode: str = "gated") -> list[Tensor]:
    """Fused per-level outputs.

    ``X`` holds three ``D x H x W`` maps and ``gates`` the matching
    ``(m, r)`` pairs. In ``gated`` mode level ``i`` receives
    ``G = (1 - m_i) X_i + sum_{j != i} gamma_j m_j X_j`` and emits
    ``r_i tanh(G) + (1 - r_i) X_i``. ``self_gated`` emits ``m_i X_i``;
    ``none`` passes ``X_i`` through.
    """
    if mode not in FUSION_MODES:
        raise UsageError(f"unknown fusion mode '{mode}', expected one of {FUSION_MODES}")
    if len(X) != N_LEVELS or len(gates) != N_LEVELS:
        raise UsageError(f"fuse needs {N_LEVELS} levels")
    shape = X[0].shape
    for x in X[1:]:
        if x.shape != shape:
            raise DimensionError(f"level shapes differ: {shape} vs {x.shape}")
    if mode == "none":
        return list(X)
    if mode == "self_gated":
        return [ad.mul(m, x) for x, (m, _) in zip(X, gates)]
    gamma = ad.as_tensor(gamma)
    outs = []
    for i in range(N_LEVELS):
        m_i, r_i = gates[i]
        G = ad.mul(ad.sub(1.0, m_i), X[i])
        for j in range(N_LEVELS):
            if j == i:
                continue
            m_j = gates[j][0]
            G = ad.add(G, ad.mul(ad.take_rows(gamma, [j]), ad.mul(m_j, X[j])))
        outs.append(ad.add(ad.mul(r_i, ad.tanh(G)), ad.mul(ad.sub(1.0, r_i), X[i])))
    return outs
