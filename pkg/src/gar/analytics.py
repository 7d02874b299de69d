"""Per-token entropy diagnostics: per-trace profiles and correct/wrong summaries."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from gar.errors import NoTokensError

ZERO_ENTROPY_TAU = 1e-9


@dataclass(frozen=True)
class EntropyProfile:
    trace_id: str
    mean_entropy: float
    filtered_mean_entropy: float | None
    zero_fraction: float
    correct: int
    approximate: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Stats:
    n: int
    mean: float | None = None
    p25: float | None = None
    p50: float | None = None
    p75: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def profile(
    entropies: Sequence[float],
    tau: float = ZERO_ENTROPY_TAU,
    correct: int = 0,
    *,
    trace_id: str = "",
    approximate: bool = False,
) -> EntropyProfile:
    """Mean entropy over all tokens and over tokens with H > tau."""
    if len(entropies) == 0:
        raise NoTokensError("entropy profile needs at least one token")
    values = [float(h) for h in entropies]
    if any(h < 0 for h in values):
        raise ValueError("entropies must be non-negative")
    kept = [h for h in values if h > tau]
    return EntropyProfile(
        trace_id=trace_id,
        mean_entropy=math.fsum(values) / len(values),
        filtered_mean_entropy=math.fsum(kept) / len(kept) if kept else None,
        zero_fraction=(len(values) - len(kept)) / len(values),
        correct=int(correct),
        approximate=approximate,
    )


def _stats(values: list[float]) -> Stats:
    if not values:
        return Stats(n=0)
    p25, p50, p75 = np.percentile(values, [25, 50, 75], method="linear")
    return Stats(
        n=len(values),
        mean=math.fsum(values) / len(values),
        p25=float(p25),
        p50=float(p50),
        p75=float(p75),
    )


def split_summary(profiles: Sequence[EntropyProfile], filtered: bool = False) -> dict[str, Stats]:
    """Quantiles of per-trace mean entropy, split by the correct flag.

    With ``filtered`` the zero-entropy-filtered means are summarized instead;
    traces with no token above tau are skipped.
    """
    if not profiles:
        raise ValueError("split_summary needs at least one profile")
    groups: dict[str, list[float]] = {"correct": [], "wrong": []}
    for p in profiles:
        value = p.filtered_mean_entropy if filtered else p.mean_entropy
        if value is None:
            continue
        groups["correct" if p.correct else "wrong"].append(value)
    return {name: _stats(vals) for name, vals in groups.items()}


def entropy_from_top_logprobs(top_logprobs: Sequence[float]) -> float:
    """Approximate token entropy from the top-k log-probabilities a server returns.

    The unreported tail is lumped into one outcome, so this under-estimates the
    true entropy when the tail is spread over many tokens.
    """
    probs = [math.exp(lp) for lp in top_logprobs]
    tail = max(0.0, 1.0 - math.fsum(probs))
    h = -math.fsum(p * math.log(p) for p in probs if p > 0)
    if tail > 0:
        h -= tail * math.log(tail)
    return max(h, 0.0)


def histogram_table(profiles: Sequence[EntropyProfile], bins: int = 10) -> str:
    """Plain-text histogram of per-trace mean entropy for correct vs wrong traces."""
    if not profiles:
        return "(no profiles)\n"
    values = [p.mean_entropy for p in profiles]
    lo, hi = min(values), max(values)
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    rows = ["bin_lo    bin_hi    correct  wrong"]
    counts = {c: np.histogram([p.mean_entropy for p in profiles if p.correct == c], edges)[0] for c in (1, 0)}
    for i in range(bins):
        rows.append(
            f"{edges[i]:8.4f}  {edges[i + 1]:8.4f}  {counts[1][i]:7d}  {counts[0][i]:5d}"
        )
    return "\n".join(rows) + "\n"
