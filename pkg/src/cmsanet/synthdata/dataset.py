"""On-disk dataset layout.

::

    <dir>/index.jsonl      one JSON object per line:
                           {"id", "tokens", "image_path", "mask_path", "H", "W"}
    <dir>/images/<id>.ppm  P6 RGB image
    <dir>/masks/<id>.pgm   P5 mask at feature resolution, 0 or 255

Paths in the index are relative to ``<dir>``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from cmsanet.errors import ParseError, VocabularyError
from cmsanet.synthdata.generator import FEATURE_STRIDE, Sample
from cmsanet.synthdata.pnm import read_pgm, read_ppm, write_pgm, write_ppm
from cmsanet.synthdata.vocab import VOCAB_SIZE

INDEX_NAME = "index.jsonl"
FIELDS = ("id", "tokens", "image_path", "mask_path", "H", "W")


def serialize(samples, directory) -> Path:
    root = Path(directory)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    lines = []
    for s in samples:
        img_rel = f"images/{s.id:06d}.ppm"
        mask_rel = f"masks/{s.id:06d}.pgm"
        pixels = np.rint(s.image * 255.0).astype(np.uint8).transpose(1, 2, 0)
        write_ppm(root / img_rel, pixels)
        write_pgm(root / mask_rel, s.mask.astype(np.uint8) * 255)
        lines.append(json.dumps({
            "id": int(s.id), "tokens": [int(t) for t in s.tokens],
            "image_path": img_rel, "mask_path": mask_rel,
            "H": int(s.image.shape[1]), "W": int(s.image.shape[2]),
        }))
    (root / INDEX_NAME).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return root


def load(directory) -> list[Sample]:
    root = Path(directory)
    index = root / INDEX_NAME
    if not index.is_file():
        raise ParseError("dataset index not found", index)
    samples = []
    for lineno, line in enumerate(index.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", index, lineno) from None
        if not isinstance(rec, dict) or any(k not in rec for k in FIELDS):
            raise ParseError(f"record must carry fields {', '.join(FIELDS)}", index, lineno)
        tokens = rec["tokens"]
        if not isinstance(tokens, list) or not tokens or not all(isinstance(t, int) for t in tokens):
            raise ParseError("tokens must be a non-empty list of integers", index, lineno)
        bad = [t for t in tokens if not 0 <= t < VOCAB_SIZE]
        if bad:
            raise VocabularyError(f"{index}:{lineno}: token id(s) {bad} outside vocabulary of size {VOCAB_SIZE}")
        h, w = rec["H"], rec["W"]
        pixels = read_ppm(root / rec["image_path"])
        if pixels.shape != (h, w, 3):
            raise ParseError(f"image is {pixels.shape[1]}x{pixels.shape[0]}, index says {w}x{h}",
                             root / rec["image_path"])
        mask = read_pgm(root / rec["mask_path"])
        if mask.shape != (h // FEATURE_STRIDE, w // FEATURE_STRIDE):
            raise ParseError(f"mask shape {mask.shape} does not match image {h}x{w}", root / rec["mask_path"])
        samples.append(Sample(
            id=int(rec["id"]),
            image=pixels.transpose(2, 0, 1).astype(np.float64) / 255.0,
            tokens=tuple(tokens),
            mask=(mask > 0).astype(np.uint8),
        ))
    return samples
