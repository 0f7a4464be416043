"""Finite-difference checks over every primitive op and the assembled network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cmsanet import autodiff as ad
from cmsanet.autodiff import Tensor, check_gradients
from cmsanet.config import RunConfig
from cmsanet.model import CMSAModel
from cmsanet.synthdata import GenConfig, generate_one

PRIMITIVE_TOL = 1e-6
NETWORK_TOL = 1e-4
NETWORK_WORDS = 4


@dataclass
class CheckLine:
    group: str
    name: str
    max_rel_err: float
    checked: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def __str__(self) -> str:
        flag = "ok  " if self.passed else "FAIL"
        return f"{flag} {self.group:<10} {self.name:<28} max_rel_err={self.max_rel_err:.3e} n={self.checked}"


def _leaf(rng, shape, lo=None, hi=None, away_from_zero=0.0):
    if lo is not None:
        x = rng.uniform(lo, hi, size=shape)
    else:
        x = rng.normal(size=shape)
        x = np.where(np.abs(x) < away_from_zero, np.sign(x + 1e-300) * away_from_zero, x)
    return Tensor(x, requires_grad=True)


def primitive_cases(rng: np.random.Generator):
    """``(name, loss_fn, tensors)`` triples, one per differentiable op."""

    def dot(y, w):
        return ad.sum(ad.mul(y, w))

    cases = []

    def case(name, build, **tensors):
        w = rng.normal(size=build(**tensors).shape)
        cases.append((name, lambda: dot(build(**tensors), w), tensors))

    case("add", lambda a, b: ad.add(a, b), a=_leaf(rng, (3, 4)), b=_leaf(rng, (4,)))
    case("sub", lambda a, b: ad.sub(a, b), a=_leaf(rng, (2, 1, 3)), b=_leaf(rng, (4, 3)))
    case("mul", lambda a, b: ad.mul(a, b), a=_leaf(rng, (3, 4)), b=_leaf(rng, (3, 1)))
    case("scalar_mul", lambda a: ad.scalar_mul(a, -1.7), a=_leaf(rng, (5,)))
    case("tanh", ad.tanh, x=_leaf(rng, (3, 3)))
    case("sigmoid", ad.sigmoid, x=_leaf(rng, (3, 3)))
    case("relu", ad.relu, x=_leaf(rng, (4, 4), away_from_zero=0.05))
    case("log", lambda x: ad.log(x, 1e-12, None), x=_leaf(rng, (6,), 0.5, 2.0))
    case("reshape", lambda x: ad.reshape(x, (3, 4)), x=_leaf(rng, (2, 6)))
    case("transpose", lambda x: ad.transpose(x, (2, 0, 1)), x=_leaf(rng, (2, 3, 4)))
    case("broadcast_to", lambda x: ad.broadcast_to(x, (3, 2, 4)), x=_leaf(rng, (2, 1)))
    case("concat", lambda a, b: ad.concat([a, b], 1), a=_leaf(rng, (2, 3)), b=_leaf(rng, (2, 2)))
    case("take_rows", lambda t: ad.take_rows(t, [2, 0, 2]), t=_leaf(rng, (4, 3)))
    case("sum", lambda x: ad.sum(x, axis=1, keepdims=True), x=_leaf(rng, (3, 4)))
    case("mean", lambda x: ad.mean(x, axis=0), x=_leaf(rng, (3, 4)))
    case("matmul", ad.matmul, a=_leaf(rng, (2, 3, 4)), b=_leaf(rng, (2, 4, 5)))
    case("softmax", lambda x: ad.softmax(x, -1), x=_leaf(rng, (3, 5)))
    case("l2_normalize", lambda x: ad.l2_normalize(x, -1), x=_leaf(rng, (3, 4)))
    case("conv2d", lambda x, w, b: ad.conv2d(x, w, b),
         x=_leaf(rng, (2, 5, 4)), w=_leaf(rng, (3, 2, 3, 3)), b=_leaf(rng, (3,)))
    case("conv2d_stride2", lambda x, w: ad.conv2d(x, w, stride=2),
         x=_leaf(rng, (2, 6, 5)), w=_leaf(rng, (2, 2, 3, 3)))
    return cases


def check_primitives(seed: int = 0, h: float = 1e-5) -> list[CheckLine]:
    rng = np.random.default_rng([seed, 2])
    lines = []
    for op, loss_fn, tensors in primitive_cases(rng):
        for r in check_gradients(loss_fn, tensors, h=h):
            lines.append(CheckLine("primitive", f"{op}.{r.name}", r.max_rel_err, r.checked, PRIMITIVE_TOL))
    return lines


def network_sample(cfg: RunConfig, seed: int):
    """A generated image and mask paired with exactly ``NETWORK_WORDS`` tokens."""
    gen = GenConfig(H=cfg.H, W=cfg.W, n_objects_range=(cfg.n_objects_min, cfg.n_objects_max))
    s = generate_one(seed, 0, gen)
    tokens = (list(s.tokens) * NETWORK_WORDS)[:NETWORK_WORDS]
    s.tokens = tuple(tokens)
    return s


def check_network(cfg: RunConfig, seed: int | None = None, per_group: int = 3,
                  h: float = 1e-5) -> list[CheckLine]:
    """Check ``per_group`` random entries of every parameter tensor of the full model."""
    seed = cfg.seed if seed is None else seed
    model = CMSAModel(cfg)
    sample = network_sample(cfg, seed)
    params = model.parameters()
    # Zero-initialised biases put units fed by dead inputs exactly on a ReLU
    # kink, where central differences see half the slope. Check at a generic
    # point instead.
    jitter = np.random.default_rng([seed, 5])
    for t in params.values():
        if not t.data.any():
            t.data = jitter.normal(0.0, 0.1, size=t.shape)
    # the embedding rows actually used are the only ones with signal
    used = sorted(set(sample.tokens))
    emb_rng = np.random.default_rng([seed, 3])
    indices = {"embedding.table": [(int(emb_rng.choice(used)), int(emb_rng.integers(cfg.C_l)))
                                   for _ in range(per_group)]}
    results = check_gradients(lambda: model.loss(sample), params, h=h, samples=per_group,
                              rng=np.random.default_rng([seed, 4]), indices=indices)
    return [CheckLine("network", r.name, r.max_rel_err, r.checked, NETWORK_TOL) for r in results]
