"""Deterministic shapes-and-expressions scenes.

Sample ``i`` of a corpus depends only on ``(seed, i)``, so corpora can be
generated in index ranges and concatenated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from cmsanet.errors import GenerationError, UsageError
from cmsanet.synthdata.vocab import COLORS, RELATIONS, SHAPES, SIZES, Query, encode, parse

RGB = {
    "red": (220, 50, 50),
    "green": (50, 190, 70),
    "blue": (60, 90, 230),
    "yellow": (230, 210, 50),
}
BACKGROUND = (30, 30, 30)
SIZE_RANGE = {"small": (10, 13), "large": (18, 22)}
FEATURE_STRIDE = 4


@dataclass(frozen=True)
class SceneObject:
    shape: str
    color: str
    size_class: str
    x0: int  # top-left of the bounding box
    y0: int
    size: int

    @property
    def center(self) -> tuple[float, float]:
        return self.x0 + self.size / 2.0, self.y0 + self.size / 2.0


@dataclass
class Scene:
    H: int
    W: int
    objects: list[SceneObject]
    target: int


@dataclass
class GenConfig:
    H: int = 64
    W: int = 64
    n_objects_range: tuple[int, int] = (2, 4)
    margin: int = 4
    max_retries: int = 200


@dataclass(eq=False)
class Sample:
    id: int
    image: np.ndarray  # 3 x H x W, values k/255
    tokens: tuple[int, ...]
    mask: np.ndarray  # H/4 x W/4 uint8 in {0, 1}
    scene: Scene | None = field(default=None, repr=False)

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (self.id == other.id and self.tokens == other.tokens
                and self.image.shape == other.image.shape and self.mask.shape == other.mask.shape
                and self.image.tobytes() == other.image.tobytes()
                and self.mask.tobytes() == other.mask.tobytes())


def rasterize(obj: SceneObject, h: int, w: int) -> np.ndarray:
    """Hard-edged full-resolution mask of one object, tested at pixel centres."""
    ys, xs = np.mgrid[0:h, 0:w]
    px, py = xs + 0.5, ys + 0.5
    cx, cy = obj.center
    half = obj.size / 2.0
    if obj.shape == "square":
        return (np.abs(px - cx) <= half) & (np.abs(py - cy) <= half)
    if obj.shape == "circle":
        return (px - cx) ** 2 + (py - cy) ** 2 <= half * half
    if obj.shape == "triangle":
        top = obj.y0
        depth = py - top
        return (depth >= 0) & (depth <= obj.size) & (np.abs(px - cx) <= depth / 2.0)
    raise UsageError(f"unknown shape {obj.shape!r}")


def render(scene: Scene) -> np.ndarray:
    """``H x W x 3`` uint8 canvas."""
    img = np.empty((scene.H, scene.W, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    for obj in scene.objects:
        img[rasterize(obj, scene.H, scene.W)] = RGB[obj.color]
    return img


def downsample_mask(mask: np.ndarray, stride: int = FEATURE_STRIDE) -> np.ndarray:
    """Max-pool a full-resolution binary mask by ``stride``."""
    h, w = mask.shape
    blocks = mask.reshape(h // stride, stride, w // stride, stride)
    return blocks.any(axis=(1, 3)).astype(np.uint8)


def match(query, objects, h: int, w: int) -> list[int]:
    """Indices of the objects an expression refers to (ideally exactly one)."""
    if not isinstance(query, Query):
        query = parse(query)
    cand = [i for i, o in enumerate(objects)
            if o.shape == query.shape
            and all(o.color == c for c in query.colors)
            and all(o.size_class == s for s in query.sizes)]
    rel = query.relation
    if rel is None or not cand:
        return cand
    if rel == "above":
        return [i for i in cand if objects[i].center[1] < h / 2.0]
    if rel == "below":
        return [i for i in cand if objects[i].center[1] > h / 2.0]
    axis, sign = {"left": (0, 1), "right": (0, -1), "top": (1, 1), "bottom": (1, -1)}[rel]
    best = min(sign * objects[i].center[axis] for i in cand)
    return [i for i in cand if sign * objects[i].center[axis] == best]


def candidate_expressions(obj: SceneObject) -> list[list[str]]:
    out = []
    for size, color, rel in product((None, obj.size_class), (None, obj.color), (None,) + RELATIONS):
        words = [x for x in (size, color) if x] + [obj.shape] + ([rel] if rel else [])
        out.append(words)
    return out


def _place(rng, cfg: GenConfig, n: int) -> list[SceneObject] | None:
    objects: list[SceneObject] = []
    for _ in range(n):
        shape = SHAPES[rng.integers(len(SHAPES))]
        color = COLORS[rng.integers(len(COLORS))]
        size_class = SIZES[rng.integers(len(SIZES))]
        lo, hi = SIZE_RANGE[size_class]
        size = int(rng.integers(lo, hi + 1))
        if size > min(cfg.H, cfg.W):
            return None
        for _ in range(100):
            x0 = int(rng.integers(0, cfg.W - size + 1))
            y0 = int(rng.integers(0, cfg.H - size + 1))
            if all(x0 + size + cfg.margin <= o.x0 or o.x0 + o.size + cfg.margin <= x0
                   or y0 + size + cfg.margin <= o.y0 or o.y0 + o.size + cfg.margin <= y0
                   for o in objects):
                objects.append(SceneObject(shape, color, size_class, x0, y0, size))
                break
        else:
            return None
    return objects


def make_sample(index: int, scene: Scene, words) -> Sample:
    tokens = tuple(encode(words))
    pixels = render(scene)
    full = rasterize(scene.objects[scene.target], scene.H, scene.W)
    return Sample(
        id=index,
        image=pixels.transpose(2, 0, 1).astype(np.float64) / 255.0,
        tokens=tokens,
        mask=downsample_mask(full),
        scene=scene,
    )


def generate_one(seed: int, index: int, cfg: GenConfig) -> Sample:
    if cfg.H % FEATURE_STRIDE or cfg.W % FEATURE_STRIDE:
        raise UsageError(f"H and W must be divisible by {FEATURE_STRIDE}, got {cfg.H}x{cfg.W}")
    lo, hi = cfg.n_objects_range
    if not 1 <= lo <= hi:
        raise UsageError(f"bad n_objects_range {cfg.n_objects_range}")
    rng = np.random.default_rng([seed, index])
    for _ in range(cfg.max_retries):
        objects = _place(rng, cfg, int(rng.integers(lo, hi + 1)))
        if objects is None:
            continue
        target = int(rng.integers(len(objects)))
        unique = [words for words in candidate_expressions(objects[target])
                  if match(parse(encode(words)), objects, cfg.H, cfg.W) == [target]]
        if not unique:
            continue
        shortest = min(len(u) for u in unique)
        pool = [u for u in unique if len(u) <= shortest + 1]
        words = pool[int(rng.integers(len(pool)))]
        return make_sample(index, Scene(cfg.H, cfg.W, objects, target), words)
    raise GenerationError(
        f"sample {index}: no valid scene after {cfg.max_retries} attempts "
        f"(H={cfg.H}, W={cfg.W}, objects={cfg.n_objects_range})")


def generate(seed: int, count: int, cfg: GenConfig | None = None, start: int = 0) -> list[Sample]:
    """Samples ``start .. start + count - 1`` of the corpus for ``seed``."""
    if count < 1:
        raise UsageError(f"count must be >= 1, got {count}")
    cfg = cfg or GenConfig()
    return [generate_one(seed, i, cfg) for i in range(start, start + count)]
