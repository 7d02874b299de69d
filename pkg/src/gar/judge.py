"""Discriminator I/O: slice-evaluation prompts, output capping, verdict parsing.

The discriminator answers in an analysis / verdict / rationale layout: a short
analysis, a bold ``**YES**`` or ``**NO**`` marker, then a brief justification.
"""

from __future__ import annotations

import logging
import re
from dataclasses import asdict, dataclass
from typing import Sequence

from gar.errors import ConfigurationError, EmptySliceError, MissingVerdictError, ParseError
from gar.slicer import Slice

log = logging.getLogger(__name__)

DEFAULT_MAX_NEW_TOKENS = 128

EVALUATOR_SYSTEM_PROMPT = (
    "You are an evaluator responsible for assessing whether a reasoning "
    "/ thinking process is reasonable, rigorous, and accurate. Based on "
    "these criteria, determine if the analysis is of high quality. First, "
    "analyze the reasoning very briefly, then respond with '**YES**' for "
    "high quality or '**NO**' if it is not. Finally, provide a brief but "
    "specific explanation for your judgment. Hint: You can first summarize "
    "the given thinking process to identify the main reasoning chain, then "
    "analyze the reasoning chain sentence by sentence."
)

REASONER_SYSTEM_PROMPT = (
    "You are a helpful AI Assistant that provides well-reasoned and "
    "detailed responses. You first think about the reasoning process as "
    "an internal monologue and then provide the user with the answer. "
    "Respond in the following format:<think>\n...\n</think>\n<answer>"
    "\n...\n</answer>"
)

PromptMessages = list[dict[str, str]]


@dataclass(frozen=True)
class JudgeConfig:
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS
    system_prompt: str = EVALUATOR_SYSTEM_PROMPT
    verdict_markers: tuple[str, str] = ("**YES**", "**NO**")
    include_question: bool = True
    # preceding slices shown as context; 0 judges each slice on its own
    context_slices: int = 0

    def __post_init__(self):
        if self.max_new_tokens < 8:
            raise ConfigurationError("max_new_tokens must be >= 8")
        yes, no = self.verdict_markers
        if not yes or not no or yes == no:
            raise ConfigurationError("verdict markers must be distinct and non-empty")
        if self.context_slices < 0:
            raise ConfigurationError("context_slices must be >= 0")
        object.__setattr__(self, "verdict_markers", (yes, no))


@dataclass
class Judgment:
    slice_ref: str
    verdict: int | None
    analysis: str
    rationale: str
    truncated: bool
    raw_text: str

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Judgment":
        try:
            verdict = d["verdict"]
            return cls(
                slice_ref=str(d["slice_ref"]),
                verdict=None if verdict is None else int(verdict),
                analysis=d.get("analysis", ""),
                rationale=d.get("rationale", ""),
                truncated=bool(d.get("truncated", False)),
                raw_text=d.get("raw_text", ""),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad judgment record: {exc}") from exc


def build_soundness_prompt(
    slice_: Slice,
    question: str | None = None,
    cfg: JudgeConfig | None = None,
    preceding: Sequence[Slice] = (),
) -> PromptMessages:
    """System + user messages asking the discriminator to judge one slice."""
    cfg = cfg or JudgeConfig()
    if not slice_.text.strip():
        raise EmptySliceError(f"slice {slice_.ref} is empty")

    parts = []
    if cfg.include_question and question:
        parts.append(f"Question:\n{question}")
    context = list(preceding)[-cfg.context_slices:] if cfg.context_slices else []
    if context:
        parts.append("Previous reasoning:\n" + "".join(s.text for s in context))
    if parts:
        parts.append(f"Reasoning to evaluate:\n{slice_.text}")
        user = "\n\n".join(parts)
    else:
        user = slice_.text
    return [
        {"role": "system", "content": cfg.system_prompt},
        {"role": "user", "content": user},
    ]


def _first_marker(response: str, markers: tuple[str, str]) -> tuple[int, int] | None:
    """(position, marker index) of the earliest marker; longer marker wins a tie."""
    best = None
    for idx, marker in enumerate(markers):
        pos = response.find(marker)
        if pos < 0:
            continue
        key = (pos, -len(marker))
        if best is None or key < best[0]:
            best = (key, idx)
    if best is None:
        return None
    return best[0][0], best[1]


def parse_verdict(
    response: str,
    cfg: JudgeConfig | None = None,
    *,
    slice_ref: str = "",
    truncated: bool = False,
) -> Judgment:
    """Parse an analysis / marker / rationale response.

    The first marker in the text decides the verdict (YES -> 1, NO -> 0);
    markers quoted later in the rationale are ignored.
    """
    cfg = cfg or JudgeConfig()
    hit = _first_marker(response, cfg.verdict_markers)
    if hit is None:
        raise MissingVerdictError("no verdict marker in response")
    pos, idx = hit
    marker = cfg.verdict_markers[idx]
    return Judgment(
        slice_ref=slice_ref,
        verdict=1 if idx == 0 else 0,
        analysis=response[:pos].strip(),
        rationale=response[pos + len(marker):].strip(),
        truncated=truncated,
        raw_text=response,
    )


_TOKEN = re.compile(r"\S+")


def truncate_response(response: str, cfg: JudgeConfig | None = None) -> tuple[str, bool]:
    """Cap ``response`` at ``cfg.max_new_tokens`` whitespace tokens.

    The cut never lands inside a verdict marker: if it would, it moves back to
    the marker's start so the marker is wholly present or wholly absent.
    """
    cfg = cfg or JudgeConfig()
    limit = cfg.max_new_tokens
    matches = list(_TOKEN.finditer(response))
    if len(matches) <= limit:
        return response, False
    # longest prefix holding `limit` tokens runs up to the next token's start
    cut = matches[limit].start()
    for marker in cfg.verdict_markers:
        pos = response.find(marker)
        while 0 <= pos < cut:
            if pos + len(marker) > cut:
                cut = pos
                break
            pos = response.find(marker, pos + 1)
    return response[:cut], True


def judge_response(
    response: str,
    cfg: JudgeConfig | None = None,
    *,
    slice_ref: str = "",
) -> Judgment:
    """Truncate then parse; a missing marker yields ``verdict=None`` instead of raising."""
    cfg = cfg or JudgeConfig()
    text, truncated = truncate_response(response, cfg)
    try:
        return parse_verdict(text, cfg, slice_ref=slice_ref, truncated=truncated)
    except MissingVerdictError:
        log.warning("no verdict marker for slice %s", slice_ref or "<unnamed>")
        return Judgment(
            slice_ref=slice_ref,
            verdict=None,
            analysis=text.strip(),
            rationale="",
            truncated=truncated,
            raw_text=text,
        )
