"""Split reasoning traces into logically coherent slices under a token budget.

A trace is first cut into atomic segments at every delimiter (each delimiter
stays attached to the text before it, so slices concatenate back to the source).
Adjacent atoms are then merged greedily until the next atom would push the
slice over ``max_tokens`` or opens with a discourse cue such as ``"Wait"``.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Literal

from gar.errors import ConfigurationError, CorruptSlicesError, ParseError

TokenizerMode = Literal["whitespace", "byte-pair-external"]
Provenance = Literal["generated", "reference"]

DEFAULT_MAX_TOKENS = 320
DEFAULT_DELIMITERS = ("\n\n", "\n")
DEFAULT_CUE_PREFIXES = (
    "Wait",
    "But wait",
    "Alternatively",
    "However",
    "Therefore",
    "So,",
    "Since",
    "Let me",
    "Now,",
    "Next,",
)

_WORD = re.compile(r"\S+")


def count_tokens(
    text: str,
    mode: TokenizerMode = "whitespace",
    counter: Callable[[str], int] | None = None,
) -> int:
    """Count tokens in ``text``.

    ``whitespace`` counts maximal runs of non-whitespace characters.
    ``byte-pair-external`` delegates to ``counter`` (e.g. a model tokenizer).
    """
    if mode == "whitespace":
        return sum(1 for _ in _WORD.finditer(text))
    if mode == "byte-pair-external":
        if counter is None:
            raise ConfigurationError("byte-pair-external mode needs a token counter")
        return int(counter(text))
    raise ConfigurationError(f"unknown tokenizer mode {mode!r}")


@dataclass(frozen=True)
class SlicerConfig:
    max_tokens: int = DEFAULT_MAX_TOKENS
    delimiters: tuple[str, ...] = DEFAULT_DELIMITERS
    cue_prefixes: tuple[str, ...] = DEFAULT_CUE_PREFIXES
    tokenizer_mode: TokenizerMode = "whitespace"
    counter: Callable[[str], int] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ConfigurationError("max_tokens must be >= 1")
        if any(not d for d in self.delimiters):
            raise ConfigurationError("delimiters must be non-empty strings")
        if self.tokenizer_mode == "byte-pair-external" and self.counter is None:
            raise ConfigurationError("byte-pair-external mode needs a token counter")
        # tuples keep the config hashable and immutable
        object.__setattr__(self, "delimiters", tuple(self.delimiters))
        object.__setattr__(self, "cue_prefixes", tuple(self.cue_prefixes))

    def count(self, text: str) -> int:
        return count_tokens(text, self.tokenizer_mode, self.counter)


@dataclass(frozen=True)
class Slice:
    trace_id: str
    index: int
    text: str
    token_count: int
    start_char: int
    end_char: int
    provenance: Provenance = "generated"

    @property
    def ref(self) -> str:
        return f"{self.trace_id}:{self.index}"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Slice":
        try:
            return cls(
                trace_id=str(d["trace_id"]),
                index=int(d["index"]),
                text=d["text"],
                token_count=int(d["token_count"]),
                start_char=int(d["start_char"]),
                end_char=int(d["end_char"]),
                provenance=d.get("provenance", "generated"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad slice record: {exc}") from exc


def _split_keep(text: str, delimiter: str) -> list[str]:
    """Split after each occurrence of ``delimiter``, keeping it on the left piece."""
    pieces = []
    start = 0
    while True:
        hit = text.find(delimiter, start)
        if hit < 0:
            break
        end = hit + len(delimiter)
        pieces.append(text[start:end])
        start = end
    if start < len(text):
        pieces.append(text[start:])
    return pieces


def _atoms(text: str, cfg: SlicerConfig) -> list[str]:
    # every delimiter cuts, whatever the budget, so the atoms do not depend on
    # max_tokens; greedy merging over a fixed atom list is monotone in the budget
    pieces = [text]
    for delimiter in cfg.delimiters:
        pieces = [p for piece in pieces for p in _split_keep(piece, delimiter)]
    return pieces


def starts_with_cue(segment: str, cue_prefixes: Iterable[str]) -> bool:
    head = segment.strip()
    return any(head.startswith(cue) for cue in cue_prefixes)


def segment(
    trace_text: str,
    cfg: SlicerConfig | None = None,
    *,
    trace_id: str = "",
    provenance: Provenance = "generated",
) -> list[Slice]:
    """Partition ``trace_text`` into slices.

    A slice closes before an atom whose stripped text starts with a cue prefix,
    or when adding the next atom would exceed ``cfg.max_tokens``. Atoms are
    never split, so a single atom over budget becomes its own slice.
    """
    cfg = cfg or SlicerConfig()
    if not trace_text:
        return []

    spans: list[tuple[int, int]] = []
    start = end = 0
    running = 0
    for atom in _atoms(trace_text, cfg):
        atom_end = end + len(atom)
        atom_tokens = cfg.count(atom)
        if cfg.tokenizer_mode == "whitespace" and (
            end == start or trace_text[end - 1].isspace() or atom[:1].isspace()
        ):
            # whitespace counts are additive across a whitespace seam
            merged = running + atom_tokens
        else:
            merged = cfg.count(trace_text[start:atom_end])
        if end > start and (starts_with_cue(atom, cfg.cue_prefixes) or merged > cfg.max_tokens):
            spans.append((start, end))
            start = end
            merged = atom_tokens
        running = merged
        end = atom_end
    spans.append((start, end))

    return [
        Slice(
            trace_id=trace_id,
            index=i,
            text=trace_text[a:b],
            token_count=cfg.count(trace_text[a:b]),
            start_char=a,
            end_char=b,
            provenance=provenance,
        )
        for i, (a, b) in enumerate(spans)
    ]


def reassemble(slices: Iterable[Slice]) -> str:
    """Rebuild the source text; raises CorruptSlicesError on gaps or overlaps."""
    ordered = sorted(slices, key=lambda s: s.index)
    if not ordered:
        return ""
    if len({s.trace_id for s in ordered}) != 1:
        raise CorruptSlicesError("slices come from more than one trace")
    pos = 0
    for expected, s in enumerate(ordered):
        if s.index != expected:
            raise CorruptSlicesError(f"expected slice index {expected}, got {s.index}")
        if s.start_char != pos:
            raise CorruptSlicesError(
                f"slice {s.index} starts at {s.start_char}, previous ended at {pos}"
            )
        if s.end_char - s.start_char != len(s.text):
            raise CorruptSlicesError(f"slice {s.index} offsets disagree with its text")
        pos = s.end_char
    return "".join(s.text for s in ordered)
