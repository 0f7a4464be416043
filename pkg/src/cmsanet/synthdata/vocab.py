"""Closed vocabulary and the expression grammar ``[attribute]* shape [relation]?``.

Attributes are colours and size classes (``small``/``large``). Relations
``left``/``right``/``top``/``bottom`` pick the extreme object, by centre, among
the objects the rest of the phrase matches; ``above``/``below`` keep objects
whose centre lies in the upper/lower half of the canvas.
"""

from __future__ import annotations

from dataclasses import dataclass

from cmsanet.errors import UsageError, VocabularyError

COLORS = ("red", "green", "blue", "yellow")
SHAPES = ("square", "circle", "triangle")
SIZES = ("small", "large")
RELATIONS = ("left", "right", "top", "bottom", "above", "below")

WORDS = COLORS + SHAPES + RELATIONS + SIZES
TOKEN_ID = {w: i for i, w in enumerate(WORDS)}
VOCAB_SIZE = len(WORDS)
MAX_EXPRESSION_LEN = 20


def encode(words) -> list[int]:
    if isinstance(words, str):
        words = words.split()
    try:
        return [TOKEN_ID[w] for w in words]
    except KeyError as exc:
        raise VocabularyError(f"unknown word {exc.args[0]!r}") from None


def decode(tokens) -> str:
    out = []
    for t in tokens:
        t = int(t)
        if not 0 <= t < VOCAB_SIZE:
            raise VocabularyError(f"token id {t} outside vocabulary of size {VOCAB_SIZE}")
        out.append(WORDS[t])
    return " ".join(out)


@dataclass(frozen=True)
class Query:
    shape: str
    colors: tuple[str, ...] = ()
    sizes: tuple[str, ...] = ()
    relation: str | None = None


def parse(tokens) -> Query:
    """Parse token ids under the grammar; raises UsageError if they do not fit it."""
    words = decode(tokens).split()
    if not 1 <= len(words) <= MAX_EXPRESSION_LEN:
        raise UsageError(f"expression length {len(words)} outside 1..{MAX_EXPRESSION_LEN}")
    shape_at = [i for i, w in enumerate(words) if w in SHAPES]
    if len(shape_at) != 1:
        raise UsageError(f"expression {' '.join(words)!r} must contain exactly one shape")
    k = shape_at[0]
    attrs, tail = words[:k], words[k + 1:]
    if any(w not in COLORS and w not in SIZES for w in attrs):
        raise UsageError(f"only colours and sizes may precede the shape in {' '.join(words)!r}")
    if len(tail) > 1 or (tail and tail[0] not in RELATIONS):
        raise UsageError(f"at most one relation may follow the shape in {' '.join(words)!r}")
    return Query(
        shape=words[k],
        colors=tuple(w for w in attrs if w in COLORS),
        sizes=tuple(w for w in attrs if w in SIZES),
        relation=tail[0] if tail else None,
    )
