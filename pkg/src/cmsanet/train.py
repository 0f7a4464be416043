"""Mini-batch training by per-sample gradient accumulation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from cmsanet import autodiff as ad
from cmsanet.autodiff import AdamState, adam_step
from cmsanet.errors import NumericError
from cmsanet.model import CMSAModel

log = logging.getLogger(__name__)


@dataclass
class LossRecord:
    iteration: int
    loss: float
    lr: float


def batch_order(n: int, batch_size: int, iterations: int, seed: int):
    """Yield index batches, reshuffling at each pass over the data."""
    rng = np.random.default_rng([seed, 1])
    pool: list[int] = []
    for _ in range(iterations):
        while len(pool) < batch_size:
            pool.extend(rng.permutation(n).tolist())
        yield pool[:batch_size]
        del pool[:batch_size]


def train(model: CMSAModel, samples, on_step: Callable[[LossRecord], None] | None = None) -> list[LossRecord]:
    cfg = model.cfg
    params = model.parameters()
    state = AdamState(base_lr=cfg.lr, max_steps=cfg.iterations, power=cfg.power,
                      beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps,
                      weight_decay=cfg.weight_decay)
    history = []
    for it, batch in enumerate(batch_order(len(samples), cfg.batch_size, cfg.iterations, cfg.seed)):
        model.zero_grad()
        total = 0.0
        for idx in batch:
            loss = model.loss(samples[idx])
            ad.scalar_mul(loss, 1.0 / len(batch)).backward()
            total += float(loss.data)
        mean_loss = total / len(batch)
        if not math.isfinite(mean_loss):
            raise NumericError(f"non-finite loss {mean_loss} at iteration {it}")
        for name, p in params.items():
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise NumericError(f"non-finite gradient in {name} at iteration {it}")
        lr = adam_step(params, state)
        rec = LossRecord(it, mean_loss, lr)
        history.append(rec)
        if on_step is not None:
            on_step(rec)
        if it % 100 == 0:
            log.info("iter %d loss %.5f lr %.3g", it, mean_loss, lr)
    return history


def write_loss_csv(path, history) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,loss,lr\n")
        for r in history:
            fh.write(f"{r.iteration},{r.loss!r},{r.lr!r}\n")
