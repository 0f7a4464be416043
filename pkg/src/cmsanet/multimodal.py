"""Joint visual-linguistic-spatial feature maps.

Each (position, word) cell concatenates the L2-normalised visual vector at
the position, the L2-normalised embedding of the word, and an 8-D spatial
coordinate vector. Layout is ``N x H x W x (C_v + C_l + 8)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cmsanet import autodiff as ad
from cmsanet.autodiff import Tensor
from cmsanet.errors import DimensionError, UsageError, VocabularyError

SPATIAL_DIMS = 8
MAX_WORDS = 20


def spatial_coords(h: int, w: int) -> np.ndarray:
    """Constant ``H x W x 8`` coordinate grid with entries in [-1, 1].

    Per cell: horizontal (left edge, centre, right edge), vertical (top edge,
    centre, bottom edge), then ``1/W`` and ``1/H``.
    """
    if h < 1 or w < 1:
        raise DimensionError(f"spatial grid needs H, W >= 1, got {h}x{w}")
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    x_edges = (2.0 * xs / w - 1.0, (2.0 * xs + 1.0) / w - 1.0, 2.0 * (xs + 1.0) / w - 1.0)
    y_edges = (2.0 * ys / h - 1.0, (2.0 * ys + 1.0) / h - 1.0, 2.0 * (ys + 1.0) / h - 1.0)
    grid = np.empty((h, w, SPATIAL_DIMS))
    for i, vals in enumerate(x_edges):
        grid[:, :, i] = vals[None, :]
    for i, vals in enumerate(y_edges):
        grid[:, :, 3 + i] = vals[:, None]
    grid[:, :, 6] = 1.0 / w
    grid[:, :, 7] = 1.0 / h
    return grid


@dataclass
class WordEmbeddingTable:
    table: Tensor

    @classmethod
    def init(cls, vocab_size: int, dim: int, rng: np.random.Generator) -> "WordEmbeddingTable":
        return cls(Tensor(rng.normal(0.0, 1.0, size=(vocab_size, dim)), requires_grad=True))

    @property
    def vocab_size(self) -> int:
        return self.table.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[1]


def truncate_tokens(tokens, max_words: int = MAX_WORDS) -> list[int]:
    return list(tokens)[:max_words]


def embed(tokens, table) -> Tensor:
    """Look up one embedding row per token, giving ``N x C_l``."""
    if isinstance(table, WordEmbeddingTable):
        table = table.table
    ids = [int(t) for t in tokens]
    if not ids:
        raise UsageError("expression must contain at least one token")
    vocab = table.shape[0]
    bad = [t for t in ids if not 0 <= t < vocab]
    if bad:
        raise VocabularyError(f"token id(s) {bad} outside vocabulary of size {vocab}")
    return ad.take_rows(table, ids)


@dataclass
class MultimodalFeature:
    F: Tensor  # N x H x W x (C_v + C_l + 8)
    c_v: int
    c_l: int

    @property
    def n_words(self) -> int:
        return self.F.shape[0]

    @property
    def hw(self) -> tuple[int, int]:
        return self.F.shape[1], self.F.shape[2]

    @property
    def channels(self) -> int:
        return self.F.shape[3]


def build_multimodal(V: Tensor, E: Tensor, S: np.ndarray) -> MultimodalFeature:
    """Concatenate normalised visual, normalised word and spatial features.

    ``V`` is ``H x W x C_v``, ``E`` is ``N x C_l`` and ``S`` the ``H x W x 8`` grid.
    """
    if V.ndim != 3 or E.ndim != 2:
        raise DimensionError(f"expected V rank 3 and E rank 2, got {V.shape} and {E.shape}")
    h, w, c_v = V.shape
    S = np.asarray(getattr(S, "data", S), dtype=np.float64)
    if S.shape != (h, w, SPATIAL_DIMS):
        raise DimensionError(f"spatial grid {S.shape} does not match visual map {h}x{w}")
    n, c_l = E.shape
    v = ad.broadcast_to(ad.reshape(ad.l2_normalize(V, axis=-1), (1, h, w, c_v)), (n, h, w, c_v))
    e = ad.broadcast_to(ad.reshape(ad.l2_normalize(E, axis=-1), (n, 1, 1, c_l)), (n, h, w, c_l))
    s = Tensor(np.broadcast_to(S, (n, h, w, SPATIAL_DIMS)))
    return MultimodalFeature(ad.concat([v, e, s], axis=-1), c_v, c_l)


def sentence_embedding(E: Tensor) -> Tensor:
    """Collapse ``N x C_l`` word embeddings to their ``1 x C_l`` mean."""
    return ad.mean(E, axis=0, keepdims=True)
