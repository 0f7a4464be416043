"""Cross-modal self-attention over (position, word) cells.

Cells are flattened position-major: row ``p * N + n`` holds position
``p = row * W + col`` and word ``n``. For each cell the attention weights
over the other cells sum to one, the attended values are projected back to
the feature width, added to the cell's own feature, and the result is
averaged over words.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cmsanet import autodiff as ad
from cmsanet.autodiff import Tensor
from cmsanet.errors import DimensionError, UsageError
from cmsanet.multimodal import MultimodalFeature

ATTENTION_MODES = ("none", "word", "pixel", "word_pixel")


@dataclass
class CMSAParams:
    W_q: Tensor  # d_k x C
    W_k: Tensor
    W_v: Tensor
    W_vhat: Tensor  # C x d_k

    @classmethod
    def init(cls, channels: int, d_k: int, rng: np.random.Generator, vhat_scale: float = 1.0) -> "CMSAParams":
        if d_k < 1:
            raise UsageError(f"d_k must be >= 1, got {d_k}")
        std_in = 1.0 / math.sqrt(channels)
        std_out = vhat_scale / math.sqrt(d_k)
        return cls(
            W_q=Tensor(rng.normal(0.0, std_in, (d_k, channels)), requires_grad=True),
            W_k=Tensor(rng.normal(0.0, std_in, (d_k, channels)), requires_grad=True),
            W_v=Tensor(rng.normal(0.0, std_in, (d_k, channels)), requires_grad=True),
            W_vhat=Tensor(rng.normal(0.0, std_out, (channels, d_k)), requires_grad=True),
        )

    @property
    def d_k(self) -> int:
        return self.W_q.shape[0]

    def tensors(self) -> dict[str, Tensor]:
        return {"W_q": self.W_q, "W_k": self.W_k, "W_v": self.W_v, "W_vhat": self.W_vhat}


def _feature(F) -> Tensor:
    return F.F if isinstance(F, MultimodalFeature) else F


def flatten_cells(F) -> Tensor:
    """``N x H x W x C`` -> ``(H*W*N) x C`` in position-major order."""
    F = _feature(F)
    n, h, w, c = F.shape
    return ad.reshape(ad.transpose(F, (1, 2, 0, 3)), (h * w * n, c))


def project_qkv(F, params: CMSAParams) -> tuple[Tensor, Tensor, Tensor]:
    X = flatten_cells(F)
    if X.shape[1] != params.W_q.shape[1]:
        raise DimensionError(f"feature width {X.shape[1]} != projection input {params.W_q.shape[1]}")
    Q = ad.matmul(X, ad.transpose(params.W_q))
    K = ad.matmul(X, ad.transpose(params.W_k))
    V = ad.matmul(X, ad.transpose(params.W_v))
    return Q, K, V


def _scores(K: Tensor, Q: Tensor, scale: bool) -> Tensor:
    # raw[..., (p,n), (p',n')] = q_{p'n'} . k_{pn}
    axes = tuple(range(Q.ndim - 2)) + (Q.ndim - 1, Q.ndim - 2)
    S = ad.matmul(K, ad.transpose(Q, axes))
    if scale:
        S = ad.scalar_mul(S, 1.0 / math.sqrt(Q.shape[-1]))
    return S


def attention(Q: Tensor, K: Tensor, transpose: bool = False, scale: bool = False) -> Tensor:
    """Attention matrix over all cells.

    By default each row (fixed attending cell ``(p, n)``) is normalised over
    ``(p', n')``. ``transpose=True`` normalises columns instead.
    """
    if Q.shape[-1] != K.shape[-1]:
        raise DimensionError(f"query width {Q.shape[-1]} != key width {K.shape[-1]}")
    return ad.softmax(_scores(K, Q, scale), axis=-2 if transpose else -1)


def _attend(Q, K, V, n_words, hw, mode, transpose, scale):
    m, d = Q.shape
    if mode == "word_pixel":
        A = attention(Q, K, transpose, scale)
        return ad.matmul(A, V), A
    if mode == "word":
        # attend across words at the same position
        split = lambda t: ad.reshape(t, (hw, n_words, d))
        A = attention(split(Q), split(K), transpose, scale)
        return ad.reshape(ad.matmul(A, split(V)), (m, d)), A
    # pixel: attend across positions for the same word
    split = lambda t: ad.transpose(ad.reshape(t, (hw, n_words, d)), (1, 0, 2))
    A = attention(split(Q), split(K), transpose, scale)
    out = ad.transpose(ad.matmul(A, split(V)), (1, 0, 2))
    return ad.reshape(out, (m, d)), A


def cmsa_variant(F, params: CMSAParams, mode: str = "word_pixel", *,
                 transpose: bool = False, scale: bool = False) -> Tensor:
    """Self-attentive feature map ``H x W x C`` under an attention ablation mode.

    ``none`` skips attention entirely; ``word`` and ``pixel`` restrict the
    support to ``p' = p`` and ``n' = n`` respectively; ``word_pixel`` is the
    full joint attention.
    """
    if mode not in ATTENTION_MODES:
        raise UsageError(f"unknown attention mode '{mode}', expected one of {ATTENTION_MODES}")
    F = _feature(F)
    n, h, w, c = F.shape
    if mode == "none":
        return ad.mean(F, axis=0)
    X = flatten_cells(F)
    Q, K, V = project_qkv(F, params)
    vhat, _ = _attend(Q, K, V, n, h * w, mode, transpose, scale)
    out = ad.add(ad.matmul(vhat, ad.transpose(params.W_vhat)), X)
    return ad.mean(ad.reshape(out, (h, w, n, c)), axis=2)


def cmsa_forward(F, params: CMSAParams, **kw) -> Tensor:
    return cmsa_variant(F, params, "word_pixel", **kw)


def attention_matrix(F, params: CMSAParams, mode: str = "word_pixel", *,
                     transpose: bool = False, scale: bool = False) -> np.ndarray:
    """Dense ``(H*W*N) x (H*W*N)`` attention scores, zero outside the mode's support."""
    if mode not in ATTENTION_MODES:
        raise UsageError(f"unknown attention mode '{mode}', expected one of {ATTENTION_MODES}")
    F = _feature(F)
    n, h, w, _ = F.shape
    hw, m = h * w, h * w * n
    if mode == "none":
        return np.zeros((m, m))
    with ad.no_grad():
        Q, K, V = project_qkv(F, params)
        _, A = _attend(Q, K, V, n, hw, mode, transpose, scale)
    A = A.data
    if mode == "word_pixel":
        return A.copy()
    dense = np.zeros((m, m))
    if mode == "word":
        for p in range(hw):
            dense[p * n:(p + 1) * n, p * n:(p + 1) * n] = A[p]
    else:
        for k in range(n):
            idx = np.arange(hw) * n + k
            dense[np.ix_(idx, idx)] = A[k]
    return dense


def write_attention_csv(path, A: np.ndarray) -> None:
    """One ``row,col,score`` line per entry, flattened indices ``p * N + n``."""
    m = A.shape[0]
    rows, cols = np.divmod(np.arange(m * m), m)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("row,col,score\n")
        lines = (f"{r},{c},{s!r}\n" for r, c, s in zip(rows.tolist(), cols.tolist(), A.reshape(-1).tolist()))
        fh.writelines(lines)
