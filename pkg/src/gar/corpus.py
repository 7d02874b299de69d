"""JSONL persistence, SFT dataset construction and balanced provenance batches."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Literal, Sequence, TypeVar

from gar.errors import EmptyBatchError, ImbalanceError, ParseError
from gar.judge import Judgment
from gar.slicer import Slice

T = TypeVar("T")
# provenance header written as the first line of every CLI output file
MANIFEST_KIND = "manifest"
Label = Literal["yes", "no"]


@dataclass
class ReasoningTrace:
    id: str
    question: str
    ground_truth_answer: str
    think_text: str
    answer_text: str
    final_correct: int | None = None
    per_token_entropies: list[float] | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    _FIELDS = (
        "id",
        "question",
        "ground_truth_answer",
        "think_text",
        "answer_text",
        "final_correct",
        "per_token_entropies",
    )

    def __post_init__(self):
        if self.per_token_entropies is not None and any(h < 0 for h in self.per_token_entropies):
            raise ValueError(f"trace {self.id}: entropies must be non-negative")

    def to_dict(self) -> dict:
        d = {name: getattr(self, name) for name in self._FIELDS}
        d.update(self.extra)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ReasoningTrace":
        missing = [k for k in ("id", "question", "ground_truth_answer") if k not in d]
        if missing:
            raise ParseError(f"trace record missing {missing}")
        known = {k: d[k] for k in cls._FIELDS if k in d}
        known.setdefault("think_text", "")
        known.setdefault("answer_text", "")
        extra = {k: v for k, v in d.items() if k not in cls._FIELDS}
        return cls(**known, extra=extra)


@dataclass(frozen=True)
class SftExample:
    slice_text: str
    label: Label
    analysis: str
    rationale: str
    source: str

    def to_dict(self) -> dict:
        return {
            "slice_text": self.slice_text,
            "label": self.label,
            "analysis": self.analysis,
            "rationale": self.rationale,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SftExample":
        if d.get("label") not in ("yes", "no"):
            raise ParseError(f"SFT label must be yes/no, got {d.get('label')!r}")
        return cls(
            slice_text=d["slice_text"],
            label=d["label"],
            analysis=d.get("analysis", ""),
            rationale=d.get("rationale", ""),
            source=d.get("source", ""),
        )

    def target_text(self, markers: tuple[str, str] = ("**YES**", "**NO**")) -> str:
        """The analysis / marker / rationale completion the discriminator is tuned on."""
        marker = markers[0] if self.label == "yes" else markers[1]
        return f"{self.analysis}\n{marker}\n{self.rationale}".strip()


@dataclass(frozen=True)
class ProvenanceBatch:
    reference_slices: tuple[Slice, ...]
    generated_slices: tuple[Slice, ...]

    def __post_init__(self):
        if len(self.reference_slices) != len(self.generated_slices):
            raise ValueError("provenance batch must be balanced")

    def records(self) -> list[dict]:
        return [s.to_dict() for s in (*self.reference_slices, *self.generated_slices)]


# --- JSONL -----------------------------------------------------------------


def dumps(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True)


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, record)`` for each non-blank line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(exc), line=lineno) from exc
            if not isinstance(record, dict):
                raise ParseError("record is not a JSON object", line=lineno)
            yield lineno, record


def read_jsonl(path: str | Path) -> list[dict]:
    return [record for _, record in iter_jsonl(path)]


def write_jsonl(records: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dumps(record) + "\n")


def _load(path: str | Path, factory: Callable[[dict], T]) -> list[T]:
    out = []
    for lineno, record in iter_jsonl(path):
        if record.get("kind") == MANIFEST_KIND:
            continue
        try:
            out.append(factory(record))
        except ParseError as exc:
            raise ParseError(str(exc), line=exc.line or lineno) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad record: {exc}", line=lineno) from exc
    return out


def load_traces(path: str | Path) -> list[ReasoningTrace]:
    traces = _load(path, ReasoningTrace.from_dict)
    seen: set[str] = set()
    for t in traces:
        if t.id in seen:
            raise ParseError(f"duplicate trace id {t.id!r}")
        seen.add(t.id)
    return traces


def load_slices(path: str | Path) -> list[Slice]:
    return _load(path, Slice.from_dict)


def load_judgments(path: str | Path) -> list[Judgment]:
    return _load(path, Judgment.from_dict)


def load_sft_examples(path: str | Path) -> list[SftExample]:
    return _load(path, SftExample.from_dict)


def store(records: Iterable[Any], path: str | Path) -> None:
    """Write dataclass records (anything with ``to_dict``) or plain dicts as JSONL."""
    write_jsonl((r if isinstance(r, dict) else r.to_dict() for r in records), path)


# --- dataset construction ---------------------------------------------------


def sft_examples_from_judgments(
    slices: Sequence[Slice], judgments: Sequence[Judgment]
) -> list[SftExample]:
    """Pair annotated judgments with their slices; judgments without a verdict are dropped."""
    by_ref = {s.ref: s for s in slices}
    out = []
    for j in judgments:
        if j.verdict is None or j.slice_ref not in by_ref:
            continue
        out.append(
            SftExample(
                slice_text=by_ref[j.slice_ref].text,
                label="yes" if j.verdict == 1 else "no",
                analysis=j.analysis,
                rationale=j.rationale,
                source=j.slice_ref,
            )
        )
    return out


def balance_labels(examples: Sequence[SftExample], rng_seed: int) -> list[SftExample]:
    """Downsample the majority label to a 1:1 ratio, then shuffle (both seeded)."""
    yes = [e for e in examples if e.label == "yes"]
    no = [e for e in examples if e.label == "no"]
    if not yes or not no:
        raise ImbalanceError(f"need both labels, got {len(yes)} yes / {len(no)} no")
    rng = random.Random(rng_seed)
    k = min(len(yes), len(no))
    picked_yes = rng.sample(yes, k) if len(yes) > k else list(yes)
    picked_no = rng.sample(no, k) if len(no) > k else list(no)
    out = picked_yes + picked_no
    rng.shuffle(out)
    return out


def mix_batch(gen: Sequence[Slice], ref_pool: Sequence[Slice], rng_seed: int) -> ProvenanceBatch:
    """Equal numbers of generated and reference slices, sampled without replacement."""
    k = min(len(gen), len(ref_pool))
    if k == 0:
        raise EmptyBatchError(
            f"cannot balance {len(gen)} generated against {len(ref_pool)} reference slices"
        )
    rng = random.Random(rng_seed)
    gen_idx = sorted(rng.sample(range(len(gen)), k))
    ref_idx = sorted(rng.sample(range(len(ref_pool)), k))
    return ProvenanceBatch(
        reference_slices=tuple(replace(ref_pool[i], provenance="reference") for i in ref_idx),
        generated_slices=tuple(replace(gen[i], provenance="generated") for i in gen_idx),
    )
