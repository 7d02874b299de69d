"""Slice-level adversarial reward tooling: slicing, judging, rewards, GRPO and a toy trainer."""

__version__ = "0.1.0"
