"""Train-and-evaluate runs shared by the command line and the ablation study."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cmsanet.autodiff import load_checkpoint, save_checkpoint
from cmsanet.cmsa import write_attention_csv
from cmsanet.config import RunConfig, load_config
from cmsanet.metrics import MetricsReport, evaluate, write_metrics_csv, write_summary
from cmsanet.model import CMSAModel
from cmsanet.synthdata import GenConfig, generate
from cmsanet.synthdata.pnm import write_pbm, write_pgm
from cmsanet.train import LossRecord, train, write_loss_csv

log = logging.getLogger(__name__)

CONFIG_NAME = "config.resolved"
CKPT_NAME = "ckpt.bin"

# Desk-scale split used by the ablation study: samples 0..499 train, 500..599 test.
TRAIN_COUNT = 500
TEST_COUNT = 100

ABLATIONS = {
    "full": {},
    "attention_none": {"attention": "none"},
    "fusion_self_gated": {"fusion": "self_gated"},
}


def gen_config(cfg: RunConfig) -> GenConfig:
    return GenConfig(H=cfg.H, W=cfg.W, n_objects_range=(cfg.n_objects_min, cfg.n_objects_max))


def split(cfg: RunConfig, train_count: int = TRAIN_COUNT, test_count: int = TEST_COUNT):
    gen = gen_config(cfg)
    return (generate(cfg.seed, train_count, gen),
            generate(cfg.seed, test_count, gen, start=train_count))


def train_run(cfg: RunConfig, samples, out) -> tuple[CMSAModel, list[LossRecord]]:
    """Train from scratch and write ``config.resolved``, ``loss.csv`` and ``ckpt.bin`` under ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / CONFIG_NAME)
    model = CMSAModel(cfg)
    history = train(model, samples)
    write_loss_csv(out / "loss.csv", history)
    save_checkpoint(out / CKPT_NAME, model.state_dict())
    return model, history


def load_model(ckpt, cfg: RunConfig | None = None) -> CMSAModel:
    """Rebuild a model from a checkpoint; the config defaults to the one stored beside it."""
    ckpt = Path(ckpt)
    if cfg is None:
        cfg = load_config(ckpt.parent / CONFIG_NAME)
    model = CMSAModel(cfg)
    model.load_state_dict(load_checkpoint(ckpt))
    return model


def write_prob_pgm(path, P: np.ndarray) -> None:
    write_pgm(path, np.rint(np.clip(P, 0.0, 1.0) * 255.0).astype(np.uint8))


def eval_run(model: CMSAModel, samples, out, write_masks: bool = True) -> MetricsReport:
    """Write ``metrics.csv``, ``summary.txt`` and per-sample probability maps under ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    thr = model.cfg.threshold
    probs = {}

    def predict(s):
        P = model.predict_proba(s)
        probs[s.id] = P
        return P

    report = evaluate(predict, samples, thr)
    write_metrics_csv(out / "metrics.csv", report)
    write_summary(out / "summary.txt", report)
    if write_masks:
        (out / "masks").mkdir(exist_ok=True)
        for sid, P in probs.items():
            write_prob_pgm(out / "masks" / f"{sid:06d}_prob.pgm", P)
            write_pbm(out / "masks" / f"{sid:06d}_mask.pbm", (P > thr).astype(np.uint8))
    return report


def dump_sample(model: CMSAModel, sample, out) -> list[Path]:
    """Probability map, thresholded mask and per-level attention matrices for one sample."""
    out = Path(out)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    (out / "attn").mkdir(parents=True, exist_ok=True)
    P = model.predict_proba(sample)
    stem = f"{sample.id:06d}"
    paths = [out / "masks" / f"{stem}_prob.pgm", out / "masks" / f"{stem}_mask.pbm"]
    write_prob_pgm(paths[0], P)
    write_pbm(paths[1], (P > model.cfg.threshold).astype(np.uint8))
    if model.cfg.attention != "none":
        for i, A in enumerate(model.attention_maps(sample), start=1):
            p = out / "attn" / f"{stem}_level{i}.csv"
            write_attention_csv(p, A)
            paths.append(p)
    return paths


@dataclass
class AblationResult:
    name: str
    report: MetricsReport
    history: list[LossRecord]


def run_ablations(cfg: RunConfig, out, names=tuple(ABLATIONS)) -> dict[str, AblationResult]:
    """Train and evaluate each named variant on the same data split."""
    train_set, test_set = split(cfg)
    out = Path(out)
    results = {}
    for name in names:
        variant = cfg.replace(**ABLATIONS[name])
        model, history = train_run(variant, train_set, out / name)
        report = eval_run(model, test_set, out / name, write_masks=False)
        log.info("%s: overall IoU %.4f", name, report.overall_iou)
        results[name] = AblationResult(name, report, history)
    with open(out / "ablations.csv", "w", encoding="utf-8") as fh:
        fh.write("variant,overall_iou,mean_iou\n")
        for r in results.values():
            fh.write(f"{r.name},{r.report.overall_iou!r},{r.report.mean_iou!r}\n")
    return results
