"""Reward calculus for the reasoner and the discriminator.

Reasoner:      R_rea = lambda1 * R_m + lambda2 * R_s
Discriminator: R_dis = lambda3 * R_d + lambda4 * R_a

where R_m is exact match, R_s the mean binary slice verdict, R_d the GAN
log-likelihood of telling reference slices from generated ones, and R_a the
mean agreement between slice verdicts and final-answer correctness.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from gar.errors import ConfigurationError, EmptyBatchError, NoSlicesError

log = logging.getLogger(__name__)

DEFAULT_CLAMP_DELTA = 1e-4


@dataclass(frozen=True)
class RewardWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    lambda4: float = 0.5

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value >= 0:
                raise ConfigurationError(f"{name} must be non-negative, got {value}")


@dataclass(frozen=True)
class RewardBreakdown:
    exact_match: int
    slice_mean: float
    reasoner_total: float
    n_slices: int

    def to_record(self, trace_id: str) -> dict:
        return {
            "trace_id": trace_id,
            "r_m": self.exact_match,
            "r_s": self.slice_mean,
            "r_rea": self.reasoner_total,
            "n_slices": self.n_slices,
        }


@dataclass(frozen=True)
class DiscriminatorBatchReward:
    d_ref_probs: tuple[float, ...]
    d_gen_probs: tuple[float, ...]
    gan_term: float
    alignment_term: float
    total: float


_WRAPPERS = [
    re.compile(r"^\\(?:boxed|fbox)\{(.*)\}$", re.S),
    re.compile(r"^<answer>(.*)</answer>$", re.S),
    re.compile(r"^\$\$(.*)\$\$$", re.S),
    re.compile(r"^\$(.*)\$$", re.S),
    re.compile(r"^\\\((.*)\\\)$", re.S),
]
_FRAC = re.compile(r"^(-?)\\d?frac\{(-?\d+)\}\{(-?\d+)\}$")


def canonical_answer(text: str) -> str:
    s = text.strip()
    changed = True
    while changed:
        changed = False
        for pattern in _WRAPPERS:
            m = pattern.match(s)
            if m:
                s = m.group(1).strip()
                changed = True
    return s


def _as_rational(s: str) -> Fraction | None:
    m = _FRAC.match(s)
    if m:
        sign, num, den = m.groups()
        if int(den) == 0:
            return None
        value = Fraction(int(num), int(den))
        return -value if sign else value
    try:
        return Fraction(s.replace(" ", ""))
    except (ValueError, ZeroDivisionError):
        return None


def exact_match(answer_pred: str | None, answer_gt: str) -> int:
    """1 iff the canonicalized answers agree (numerically when both are rationals)."""
    if answer_pred is None:
        return 0
    pred, gt = canonical_answer(answer_pred), canonical_answer(answer_gt)
    if not pred:
        return 0
    if pred == gt:
        return 1
    a, b = _as_rational(pred), _as_rational(gt)
    return int(a is not None and b is not None and a == b)


def _mean(values: Sequence[float]) -> float:
    # fsum is exactly rounded, so the mean does not depend on input order
    return math.fsum(values) / len(values)


def slice_mean(verdicts: Sequence[int]) -> float:
    if len(verdicts) == 0:
        raise NoSlicesError("slice_mean needs at least one verdict")
    return _mean([float(v) for v in verdicts])


def reasoner_reward(rm: float, rs: float, w: RewardWeights | None = None) -> float:
    w = w or RewardWeights()
    if not 0.0 <= rs <= 1.0:
        raise ValueError(f"slice mean must lie in [0, 1], got {rs}")
    return w.lambda1 * rm + w.lambda2 * rs


def _clamped(probs: Iterable[float], delta: float) -> list[float]:
    return [min(max(float(p), delta), 1.0 - delta) for p in probs]


def gan_reward(
    d_ref: Sequence[float],
    d_gen: Sequence[float],
    clamp_delta: float = DEFAULT_CLAMP_DELTA,
) -> float:
    """Mean log D over reference slices plus mean log(1 - D) over generated ones."""
    if len(d_ref) == 0 or len(d_gen) == 0:
        raise EmptyBatchError("gan_reward needs reference and generated probabilities")
    if not 0.0 < clamp_delta < 0.5:
        raise ConfigurationError("clamp_delta must lie in (0, 0.5)")
    ref = [math.log(p) for p in _clamped(d_ref, clamp_delta)]
    gen = [math.log1p(-p) for p in _clamped(d_gen, clamp_delta)]
    return _mean(ref) + _mean(gen)


def alignment_reward(verdicts: Sequence[int], final_correct: int) -> float:
    """Fraction of slice verdicts that agree with the trace's final correctness."""
    if len(verdicts) == 0:
        raise NoSlicesError("alignment_reward needs at least one verdict")
    return sum(1 for v in verdicts if int(v) == int(final_correct)) / len(verdicts)


def discriminator_reward(rd: float, ra: float, w: RewardWeights | None = None) -> float:
    w = w or RewardWeights()
    return w.lambda3 * rd + w.lambda4 * ra


def verdicts_or_unsound(verdicts: Iterable[int | None]) -> list[int]:
    """Map missing verdicts to 0 so an unparseable judgment never rewards the reasoner."""
    out = []
    for v in verdicts:
        if v is None:
            log.info("missing verdict counted as unsound")
            out.append(0)
        else:
            out.append(int(v))
    return out


def score_trace(
    answer_pred: str | None,
    answer_gt: str,
    verdicts: Sequence[int | None],
    w: RewardWeights | None = None,
) -> RewardBreakdown:
    w = w or RewardWeights()
    clean = verdicts_or_unsound(verdicts)
    rm = exact_match(answer_pred, answer_gt)
    rs = slice_mean(clean)
    return RewardBreakdown(
        exact_match=rm,
        slice_mean=rs,
        reasoner_total=reasoner_reward(rm, rs, w),
        n_slices=len(clean),
    )


def score_discriminator_batch(
    d_ref: Sequence[float],
    d_gen: Sequence[float],
    verdicts: Sequence[int],
    final_correct: int,
    w: RewardWeights | None = None,
    clamp_delta: float = DEFAULT_CLAMP_DELTA,
) -> DiscriminatorBatchReward:
    w = w or RewardWeights()
    rd = gan_reward(d_ref, d_gen, clamp_delta)
    ra = alignment_reward(verdicts, final_correct)
    return DiscriminatorBatchReward(
        d_ref_probs=tuple(_clamped(d_ref, clamp_delta)),
        d_gen_probs=tuple(_clamped(d_gen, clamp_delta)),
        gan_term=rd,
        alignment_term=ra,
        total=discriminator_reward(rd, ra, w),
    )
