"""Group-relative advantages and clipped policy-gradient updates.

Policies are anything implementing :class:`DifferentiablePolicy`: a flat
parameter vector plus per-action log-probabilities and their weighted gradient.
The update is one ascent step on

    J = mean_i [ min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i) - beta * k3_i ]

with rho_i = exp(logp_new_i - logp_old_i) and k3 the non-negative KL estimator
against the sampling policy.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Protocol, Sequence

import numpy as np

from gar.errors import ConfigurationError, GroupTooSmallError, NumericalError


class DifferentiablePolicy(Protocol):
    def get_params(self) -> np.ndarray: ...

    def set_params(self, params: np.ndarray) -> None: ...

    def logprobs(self, actions: Any) -> np.ndarray:
        """Per-action log-probabilities for one rollout's actions."""
        ...

    def grad_logprobs(self, actions: Any, coeffs: np.ndarray) -> np.ndarray:
        """sum_i coeffs[i] * d logp_i / d params, as a flat vector."""
        ...


@dataclass(frozen=True)
class LearningRateSchedule:
    """Linear warm-up followed by cosine decay down to ``floor``."""

    initial: float = 1e-6
    warmup_fraction: float = 0.1
    floor: float = 5e-7
    total_steps: int = 400

    def __call__(self, step: int) -> float:
        warmup = int(round(self.warmup_fraction * self.total_steps))
        if warmup > 0 and step < warmup:
            return self.initial * (step + 1) / warmup
        span = max(self.total_steps - warmup, 1)
        progress = min(max(step - warmup, 0) / span, 1.0)
        return self.floor + 0.5 * (self.initial - self.floor) * (1.0 + math.cos(math.pi * progress))

    @classmethod
    def constant(cls, lr: float) -> "LearningRateSchedule":
        return cls(initial=lr, warmup_fraction=0.0, floor=lr, total_steps=1)


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    clip_epsilon: float = 0.2
    std_epsilon: float = 1e-8
    kl_coeff: float = 0.0
    schedule: LearningRateSchedule = field(default_factory=LearningRateSchedule)

    def __post_init__(self):
        if self.group_size < 2:
            raise ConfigurationError("group_size must be >= 2")
        if not 0.0 < self.clip_epsilon < 1.0 and not math.isinf(self.clip_epsilon):
            raise ConfigurationError("clip_epsilon must lie in (0, 1)")
        if self.kl_coeff < 0:
            raise ConfigurationError("kl_coeff must be >= 0")


def is_degenerate(rewards: Sequence[float]) -> bool:
    return max(rewards) == min(rewards)


def group_advantages(rewards: Sequence[float], std_epsilon: float = 1e-8) -> np.ndarray:
    """Standardize rewards within a group using the population std.

    All-equal groups carry no ranking signal and get all-zero advantages.
    Centering and variance are computed in exact rational arithmetic, so a
    constant shift of the rewards leaves the advantages bitwise unchanged, and
    with ``std_epsilon == 0`` so does any positive rescaling.
    """
    if len(rewards) < 2:
        raise GroupTooSmallError(f"group needs >= 2 rewards, got {len(rewards)}")
    if not all(math.isfinite(x) for x in rewards):
        raise NumericalError("non-finite reward in group")
    r = [Fraction(float(x)) for x in rewards]
    if is_degenerate(rewards):
        return np.zeros(len(r))
    mean = sum(r) / len(r)
    centered = [x - mean for x in r]
    var = sum(c * c for c in centered) / len(r)
    if std_epsilon == 0:
        # c / std as a function of the scale-free ratio c^2 / var
        return np.array([math.copysign(math.sqrt(c * c / var), c) for c in centered])
    denom = Fraction(math.sqrt(var)) + Fraction(std_epsilon)
    return np.array([float(c / denom) for c in centered])


@dataclass
class RolloutGroup:
    question_id: str
    rewards: list[float]
    actions: list[Any]
    logprobs_old: list[np.ndarray]
    advantages: np.ndarray | None = None
    degenerate: bool = False

    def __post_init__(self):
        if len(self.rewards) < 2:
            raise GroupTooSmallError(f"group {self.question_id} has {len(self.rewards)} rollouts")
        if not len(self.rewards) == len(self.actions) == len(self.logprobs_old):
            raise ValueError("rewards, actions and logprobs_old must align")

    def compute_advantages(self, std_epsilon: float = 1e-8) -> np.ndarray:
        self.degenerate = is_degenerate(self.rewards)
        self.advantages = group_advantages(self.rewards, std_epsilon)
        return self.advantages


def clipped_surrogate(
    logp_new: float, logp_old: float, advantage: float, clip_epsilon: float
) -> float:
    ratio = math.exp(logp_new - logp_old)
    clipped = min(max(ratio, 1.0 - clip_epsilon), 1.0 + clip_epsilon)
    return min(ratio * advantage, clipped * advantage)


def surrogate_terms(
    logp_new: np.ndarray,
    logp_old: np.ndarray,
    advantages: np.ndarray,
    clip_epsilon: float,
    kl_coeff: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-action objective, its derivative w.r.t. logp_new, and the clipped mask."""
    log_ratio = logp_new - logp_old
    ratio = np.exp(log_ratio)
    clipped_ratio = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    unclipped = ratio * advantages
    clipped = clipped_ratio * advantages
    use_unclipped = unclipped <= clipped
    value = np.where(use_unclipped, unclipped, clipped)
    deriv = np.where(use_unclipped, unclipped, 0.0)
    if kl_coeff:
        inv = np.exp(-log_ratio)
        value = value - kl_coeff * (inv + log_ratio - 1.0)
        deriv = deriv - kl_coeff * (1.0 - inv)
    return value, deriv, ~use_unclipped


@dataclass(frozen=True)
class UpdateMetrics:
    mean_reward: float
    mean_advantage_abs: float
    clip_fraction: float
    grad_norm: float
    objective: float
    lr: float
    n_actions: int

    def to_dict(self) -> dict:
        return asdict(self)


def policy_gradient(
    policy: DifferentiablePolicy,
    groups: Sequence[RolloutGroup],
    cfg: GrpoConfig,
) -> tuple[np.ndarray, float, float, int]:
    """Gradient of the mean surrogate; returns (grad, objective, clip_fraction, n_actions)."""
    params = policy.get_params()
    grad = np.zeros_like(params)
    n_actions = sum(len(lp) for g in groups for lp in g.logprobs_old)
    if n_actions == 0:
        return grad, 0.0, 0.0, 0
    total = 0.0
    n_clipped = 0
    for g in groups:
        if g.advantages is None:
            raise ValueError(f"group {g.question_id} has no advantages; call compute_advantages")
        for adv, actions, lp_old in zip(g.advantages, g.actions, g.logprobs_old):
            lp_old = np.asarray(lp_old, dtype=float)
            if lp_old.size == 0:
                continue
            lp_new = policy.logprobs(actions)
            value, deriv, clipped = surrogate_terms(
                lp_new, lp_old, np.full_like(lp_old, adv), cfg.clip_epsilon, cfg.kl_coeff
            )
            total += float(value.sum())
            n_clipped += int(clipped.sum())
            if np.any(deriv):
                grad += policy.grad_logprobs(actions, deriv / n_actions)
    return grad, total / n_actions, n_clipped / n_actions, n_actions


def update_policy(
    policy: DifferentiablePolicy,
    groups: Sequence[RolloutGroup],
    cfg: GrpoConfig,
    step: int = 0,
    extra_grad: np.ndarray | None = None,
) -> UpdateMetrics:
    """One gradient-ascent step on the mean clipped surrogate.

    ``extra_grad`` is added before stepping; callers use it for objective terms
    that have an exact gradient (e.g. a discriminator's GAN term).
    """
    grad, objective, clip_fraction, n_actions = policy_gradient(policy, groups, cfg)
    if extra_grad is not None:
        grad = grad + extra_grad
    norm = float(np.linalg.norm(grad))
    if not math.isfinite(norm):
        raise NumericalError("non-finite policy gradient; update aborted")
    lr = cfg.schedule(step)
    if norm > 0.0:
        policy.set_params(policy.get_params() + lr * grad)

    rewards = [r for g in groups for r in g.rewards]
    advs = [abs(a) for g in groups for a in (g.advantages if g.advantages is not None else [])]
    return UpdateMetrics(
        mean_reward=math.fsum(rewards) / len(rewards) if rewards else 0.0,
        mean_advantage_abs=math.fsum(advs) / len(advs) if advs else 0.0,
        clip_fraction=clip_fraction,
        grad_norm=norm,
        objective=objective,
        lr=lr,
        n_actions=n_actions,
    )
