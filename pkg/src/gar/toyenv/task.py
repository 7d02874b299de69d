"""Synthetic modular arithmetic chains with an exact per-step oracle."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Literal

import numpy as np

from gar.errors import ConfigurationError, ParseError

OPERATORS = ("+", "-", "×")
OPERAND_RANGE = (1, 9)
DEFAULT_LENGTH = 6
DEFAULT_MODULUS = 97

Style = Literal["terse", "verbose"]
STYLES: tuple[Style, ...] = ("terse", "verbose")
# verbose phrasing rotates through these by step position
VERBOSE_CONNECTIVES = ("So, we compute", "Therefore, we get", "Next, we find")

_STEP = re.compile(r"(-?\d+)\s*([+\-×*x])\s*(-?\d+)\s*=\s*(-?\d+)\s*$")


def apply_op(a: int, op: str, b: int, modulus: int) -> int:
    if op == "+":
        return (a + b) % modulus
    if op in ("-", "−"):
        return (a - b) % modulus
    if op in ("×", "*", "x"):
        return (a * b) % modulus
    raise ParseError(f"unknown operator {op!r}")


@dataclass(frozen=True)
class ToyTask:
    start_value: int
    ops: tuple[tuple[str, int], ...]
    target_answer: int
    modulus: int = DEFAULT_MODULUS

    def __post_init__(self):
        if fold(self.start_value, self.ops, self.modulus) != self.target_answer:
            raise ValueError("target_answer does not match the folded ops")

    @property
    def length(self) -> int:
        return len(self.ops)

    def question(self) -> str:
        ops = ", ".join(f"{op} {c}" for op, c in self.ops)
        return f"Start from {self.start_value} and apply {ops} (mod {self.modulus}). What is the result?"


def fold(start: int, ops, modulus: int) -> int:
    v = start % modulus
    for op, c in ops:
        v = apply_op(v, op, c, modulus)
    return v


def sample_task(
    rng: np.random.Generator,
    length: int = DEFAULT_LENGTH,
    modulus: int = DEFAULT_MODULUS,
) -> ToyTask:
    """Uniform operators and operands; the target comes from the oracle fold."""
    if length < 1:
        raise ConfigurationError("task length must be >= 1")
    if modulus < 2:
        raise ConfigurationError("modulus must be >= 2")
    start = int(rng.integers(0, modulus))
    op_idx = rng.integers(0, len(OPERATORS), size=length)
    operands = rng.integers(OPERAND_RANGE[0], OPERAND_RANGE[1] + 1, size=length)
    ops = tuple((OPERATORS[int(i)], int(c)) for i, c in zip(op_idx, operands))
    return ToyTask(start, ops, fold(start, ops, modulus), modulus)


def render_step(a: int, op: str, b: int, c: int, style: Style = "terse", position: int = 0) -> str:
    """``v{i} = a op b = c`` with i = position + 1; verbose phrasing adds a connective."""
    body = f"v{position + 1} = {a} {op} {b} = {c}"
    if style == "terse":
        return body
    return f"{VERBOSE_CONNECTIVES[position % len(VERBOSE_CONNECTIVES)]} {body}"


def parse_step(step_text: str) -> tuple[int, str, int, int]:
    m = _STEP.search(step_text.strip())
    if m is None:
        raise ParseError(f"not an arithmetic step: {step_text!r}")
    a, op, b, c = m.groups()
    return int(a), op, int(b), int(c)


def oracle_step_check(step_text: str, modulus: int = DEFAULT_MODULUS) -> int:
    """1 iff the step ``a op b = c`` holds modulo ``modulus``."""
    a, op, b, c = parse_step(step_text)
    return int(c % modulus == apply_op(a, op, b, modulus))


def step_style(step_text: str) -> Style:
    head = step_text.strip()
    return "verbose" if head.startswith(VERBOSE_CONNECTIVES) else "terse"


def candidate_offsets(vocab_size: int) -> tuple[int, ...]:
    """Offsets from the correct result: 0, +1, -1, +2, -2, ..."""
    out = [0]
    k = 1
    while len(out) < vocab_size:
        out.append(k)
        if len(out) < vocab_size:
            out.append(-k)
        k += 1
    return tuple(out)
