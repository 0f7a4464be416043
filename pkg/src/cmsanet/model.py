"""Full referring-segmentation network assembled from the building blocks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cmsanet import autodiff as ad
from cmsanet.autodiff import Tensor
from cmsanet.backbone import BackboneParams, backbone_forward
from cmsanet.cmsa import CMSAParams, attention_matrix, cmsa_variant
from cmsanet.config import RunConfig
from cmsanet.errors import ConfigError
from cmsanet.fusion import FusionParams, compute_gates, fuse, project_level
from cmsanet.head import HeadParams, bce_loss, predict_logits
from cmsanet.multimodal import (
    SPATIAL_DIMS,
    WordEmbeddingTable,
    build_multimodal,
    embed,
    sentence_embedding,
    spatial_coords,
    truncate_tokens,
)
from cmsanet.synthdata.vocab import VOCAB_SIZE


@dataclass
class Forward:
    logits: Tensor
    P: Tensor
    features: list  # per-level MultimodalFeature


class CMSAModel:
    def __init__(self, cfg: RunConfig, vocab_size: int = VOCAB_SIZE):
        self.cfg = cfg
        rng = np.random.default_rng([cfg.seed, 0])
        widths = (cfg.c1, cfg.c2, cfg.c3)
        level_channels = [c + cfg.C_l + SPATIAL_DIMS for c in widths]
        self.backbone = BackboneParams.init(widths, rng)
        self.embedding = WordEmbeddingTable.init(vocab_size, cfg.C_l, rng)
        self.cmsa = [CMSAParams.init(c, cfg.d_k, rng) for c in level_channels]
        self.fusion = FusionParams.init(level_channels, cfg.D, rng)
        self.head = HeadParams.init(cfg.D, rng)
        self._grid_cache: dict[tuple[int, int], np.ndarray] = {}

    def parameters(self) -> dict[str, Tensor]:
        out = {f"backbone.{k}": v for k, v in self.backbone.tensors().items()}
        out["embedding.table"] = self.embedding.table
        for i, p in enumerate(self.cmsa):
            out.update({f"cmsa{i + 1}.{k}": v for k, v in p.tensors().items()})
        out.update({f"fusion.{k}": v for k, v in self.fusion.tensors().items()})
        out.update({f"head.{k}": v for k, v in self.head.tensors().items()})
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ConfigError(f"checkpoint does not fit model: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise ConfigError(f"checkpoint tensor {k} has shape {state[k].shape}, model expects {p.shape}")
            p.data = np.array(state[k], dtype=np.float64)

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()

    def _grid(self, h: int, w: int) -> np.ndarray:
        if (h, w) not in self._grid_cache:
            self._grid_cache[(h, w)] = spatial_coords(h, w)
        return self._grid_cache[(h, w)]

    def words(self, tokens) -> Tensor:
        E = embed(truncate_tokens(tokens, self.cfg.max_words), self.embedding)
        if self.cfg.sentence == "sentence":
            E = sentence_embedding(E)
        return E

    def forward(self, image, tokens) -> Forward:
        cfg = self.cfg
        V = backbone_forward(ad.as_tensor(image), self.backbone)
        E = self.words(tokens)
        _, h, w = V[0].shape
        S = self._grid(h, w)
        feats, X, gates = [], [], []
        for i, v in enumerate(V):
            mm = build_multimodal(ad.transpose(v, (1, 2, 0)), E, S)
            feats.append(mm)
            fhat = cmsa_variant(mm, self.cmsa[i], cfg.attention,
                                transpose=cfg.attn_transpose, scale=cfg.attn_scale)
            x = project_level(fhat, self.fusion, i, (h, w))
            X.append(x)
            gates.append(compute_gates(x, self.fusion, i))
        outs = fuse(X, gates, self.fusion.gamma, cfg.fusion)
        z = predict_logits(outs, self.head)
        return Forward(z, ad.sigmoid(z), feats)

    def loss(self, sample) -> Tensor:
        out = self.forward(sample.image, sample.tokens)
        return bce_loss(out.P, sample.mask)

    def predict_proba(self, sample) -> np.ndarray:
        with ad.no_grad():
            return self.forward(sample.image, sample.tokens).P.data

    def attention_maps(self, sample) -> list[np.ndarray]:
        """Dense per-level attention matrices for one sample."""
        with ad.no_grad():
            out = self.forward(sample.image, sample.tokens)
            return [attention_matrix(f, p, self.cfg.attention,
                                     transpose=self.cfg.attn_transpose, scale=self.cfg.attn_scale)
                    for f, p in zip(out.features, self.cmsa)]
