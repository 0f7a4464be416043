"""Run configuration: ``key=value`` text files plus command-line overrides.

Defaults are scaled down for CPU runs. The full-size settings are
``C_l=1000``, ``d_k=512``, ``D=500``, ``lr=2.5e-4``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from cmsanet.cmsa import ATTENTION_MODES
from cmsanet.errors import ConfigError
from cmsanet.fusion import FUSION_MODES

SENTENCE_MODES = ("word", "sentence")


@dataclass
class RunConfig:
    seed: int = 7
    # data
    H: int = 64
    W: int = 64
    n_objects_min: int = 2
    n_objects_max: int = 4
    max_words: int = 20
    # architecture
    c1: int = 16
    c2: int = 24
    c3: int = 32
    C_l: int = 32
    d_k: int = 64
    D: int = 32
    attention: str = "word_pixel"
    fusion: str = "gated"
    sentence: str = "word"
    attn_transpose: bool = False
    attn_scale: bool = False
    # optimisation
    lr: float = 1e-3
    power: float = 0.9
    iterations: int = 2000
    weight_decay: float = 5e-4
    batch_size: int = 4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # evaluation
    threshold: float = 0.5
    # paths
    data: str = ""
    out: str = ""

    def validate(self) -> "RunConfig":
        if self.attention not in ATTENTION_MODES:
            raise ConfigError(f"attention must be one of {ATTENTION_MODES}, got {self.attention!r}")
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")
        if self.sentence not in SENTENCE_MODES:
            raise ConfigError(f"sentence must be one of {SENTENCE_MODES}, got {self.sentence!r}")
        if self.H % 4 or self.W % 4 or self.H < 4 or self.W < 4:
            raise ConfigError(f"H and W must be positive multiples of 4, got {self.H}x{self.W}")
        for name in ("c1", "c2", "c3", "C_l", "d_k", "D", "batch_size", "max_words"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.c1 <= self.c2 <= self.c3:
            raise ConfigError("backbone widths must satisfy c1 <= c2 <= c3")
        if not 1 <= self.n_objects_min <= self.n_objects_max:
            raise ConfigError("need 1 <= n_objects_min <= n_objects_max")
        if self.iterations < 0 or self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("iterations, lr and weight_decay must be non-negative")
        return self

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes).validate()

    def to_text(self) -> str:
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in fields(self))

    def write(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELDS[key].type
    kind = kind if isinstance(kind, str) else kind.__name__
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key} ({kind}): {raw!r}") from None
    return raw


def parse_overrides(pairs, source: str = "override") -> dict:
    out = {}
    for lineno, item in enumerate(pairs, start=1):
        line = item.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {item.strip()!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def load_config(path=None, overrides=()) -> RunConfig:
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_overrides(p.read_text(encoding="utf-8").splitlines(), str(p)))
    values.update(parse_overrides(overrides))
    return RunConfig(**values).validate()
