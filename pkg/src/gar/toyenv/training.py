"""Joint reasoner/discriminator training on the toy arithmetic task.

Each episode: sample a task batch, draw G rollouts per task, slice every trace,
let the discriminator judge each slice, reward the reasoner with
lambda1 * R_m + lambda2 * R_s and the discriminator with lambda3 * R_d +
lambda4 * R_a, then take one GRPO step on each policy.

Ablation modes are configurations of the same loop:

    full                 all four reward terms, both policies trained
    standard_rl          lambda2 = 0, discriminator frozen
    fixed_discriminator  discriminator frozen after its SFT stage
    no_alignment         lambda4 = 0
    no_gan               lambda3 = 0
    partial_trace        rollouts stop after max_slices slices, lambda1 = 0
    distill              partial_trace with the provenance head as judge
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Literal

import numpy as np

from gar.analytics import profile, split_summary
from gar.corpus import ReasoningTrace, SftExample, balance_labels, mix_batch
from gar.errors import ConfigurationError, NumericalError
from gar.grpo import GrpoConfig, LearningRateSchedule, RolloutGroup, update_policy
from gar.rewards import (
    RewardWeights,
    alignment_reward,
    discriminator_reward,
    exact_match,
    gan_reward,
    reasoner_reward,
    slice_mean,
)
from gar.slicer import Slice, SlicerConfig, segment
from gar.toyenv.policies import (
    CANDIDATE_TABLE,
    STYLE_TABLE,
    ToyDiscriminatorPolicy,
    ToyReasonerPolicy,
    log_softmax,
    slice_features,
)
from gar.toyenv.task import (
    OPERATORS,
    STYLES,
    ToyTask,
    apply_op,
    candidate_offsets,
    render_step,
    sample_task,
)

log = logging.getLogger(__name__)

Mode = Literal[
    "full",
    "standard_rl",
    "fixed_discriminator",
    "no_alignment",
    "no_gan",
    "partial_trace",
    "distill",
]
MODES: tuple[str, ...] = Mode.__args__  # type: ignore[attr-defined]

# max_tokens=1 puts every step line (always >= 5 tokens) in its own slice
TOY_SLICER = SlicerConfig(max_tokens=1)


@dataclass(frozen=True)
class TrainingConfig:
    mode: Mode = "full"
    episodes: int = 150
    group_size: int = 8
    tasks_per_episode: int = 8
    weights: RewardWeights = field(default_factory=RewardWeights)
    max_slices: int | None = None
    seeds: tuple[int, ...] = (0,)
    task_length: int = 6
    modulus: int = 97
    vocab_size: int = 16
    temperature: float = 1.0
    init_correct_prob: float = 0.35
    init_terse_prob: float = 0.95
    # style mix of reference (teacher) slices; 0.0 means all verbose
    reference_terse_prob: float = 0.95
    reasoner_lr: float = 20.0
    disc_lr: float = 2.5
    disc_group_size: int = 8
    disc_update_every: int = 1
    clip_epsilon: float = 0.2
    kl_coeff: float = 0.0
    clamp_delta: float = 1e-4
    sft_tasks: int = 64
    sft_steps: int = 5
    sft_lr: float = 1.0
    eval_tasks: int = 128
    eval_slices: int = 256
    accuracy_threshold: float = 0.9
    stop_at_threshold: bool = False
    # distill only
    phase1_steps: int = 60
    auc_samples: int = 200

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.group_size < 2 or self.disc_group_size < 2:
            raise ConfigurationError("group sizes must be >= 2")
        if self.episodes < 0 or self.tasks_per_episode < 1:
            raise ConfigurationError("episodes must be >= 0 and tasks_per_episode >= 1")
        if self.vocab_size < 2 or self.vocab_size > self.modulus:
            raise ConfigurationError("vocab_size must lie in [2, modulus]")
        if self.disc_update_every < 1:
            raise ConfigurationError("disc_update_every must be >= 1")
        if self.mode in ("partial_trace", "distill"):
            if self.weights.lambda1 != 0:
                raise ConfigurationError(f"{self.mode} requires lambda1 == 0")
            if self.max_slices is None:
                raise ConfigurationError(f"{self.mode} requires max_slices")
        if self.max_slices is not None and self.max_slices < 1:
            raise ConfigurationError("max_slices must be >= 1")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    @classmethod
    def for_mode(cls, mode: Mode, **overrides) -> "TrainingConfig":
        """Defaults for ``mode``; partial-trace style modes get lambda1=0, max_slices=3."""
        base: dict = {"mode": mode}
        if mode in ("partial_trace", "distill"):
            w = overrides.pop("weights", RewardWeights())
            base["weights"] = replace(w, lambda1=0.0)
            base["max_slices"] = 3
        if mode == "distill":
            base["reference_terse_prob"] = 0.0
        base.update(overrides)
        return cls(**base)

    def effective_weights(self) -> RewardWeights:
        w = self.weights
        if self.mode == "standard_rl":
            return replace(w, lambda2=0.0)
        if self.mode == "no_gan":
            return replace(w, lambda3=0.0)
        if self.mode == "no_alignment":
            return replace(w, lambda4=0.0)
        return w

    @property
    def trains_discriminator(self) -> bool:
        return self.mode not in ("standard_rl", "fixed_discriminator")

    @property
    def judge_head(self) -> str:
        return "provenance" if self.mode == "distill" else "verdict"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        d = dict(d)
        if "weights" in d and isinstance(d["weights"], dict):
            d["weights"] = RewardWeights(**d["weights"])
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


# --- rollouts -----------------------------------------------------------------


@dataclass
class ToyRollout:
    trace: ReasoningTrace
    task: ToyTask
    actions: np.ndarray  # (n, 3) rows of (table, row, column)
    logprobs: np.ndarray
    step_correct: list[int]
    entropies: list[float]


class _SamplingCache:
    """Frozen snapshot of the reasoner's distributions for one episode."""

    def __init__(self, policy: ToyReasonerPolicy):
        cand = policy.tables[CANDIDATE_TABLE] / policy.temperature
        self.cand_logp = log_softmax(cand)
        self.cand_cdf = np.cumsum(np.exp(self.cand_logp), axis=1)
        shifted = cand - cand.max(axis=1, keepdims=True)
        p = np.exp(self.cand_logp)
        self.cand_entropy = np.log(np.exp(shifted).sum(axis=1)) - (p * shifted).sum(axis=1)
        self.style_logp = log_softmax(policy.tables[STYLE_TABLE][0] / policy.temperature)
        self.style_cdf = np.cumsum(np.exp(self.style_logp))
        self.vocab = policy.vocab_size


def _draw(cdf: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cdf, u, side="right")), len(cdf) - 1)


def rollout(
    policy: ToyReasonerPolicy,
    task: ToyTask,
    rng: np.random.Generator,
    *,
    max_steps: int | None = None,
    trace_id: str = "",
    cache: _SamplingCache | None = None,
) -> ToyRollout:
    """Sample one reasoning trace: one ``a op b = c`` line per step, then the answer.

    With ``max_steps`` the trace stops after that many steps and never carries an answer.
    """
    cache = cache or _SamplingCache(policy)
    offsets = candidate_offsets(policy.vocab_size)
    n_steps = task.length if max_steps is None else min(max_steps, task.length)
    u = rng.random((n_steps, 2))
    lines, actions, logps, correct, entropies = [], [], [], [], []
    v = task.start_value
    for i in range(n_steps):
        op, c = task.ops[i]
        row = policy.row(i, op)
        k = _draw(cache.cand_cdf[row], u[i, 0])
        s = _draw(cache.style_cdf, u[i, 1])
        truth = apply_op(v, op, c, task.modulus)
        result = (truth + offsets[k]) % task.modulus
        lines.append(render_step(v, op, c, result, STYLES[s], i))
        actions.append((CANDIDATE_TABLE, row, k))
        actions.append((STYLE_TABLE, 0, s))
        logps.append(cache.cand_logp[row, k])
        logps.append(cache.style_logp[s])
        correct.append(int(result == truth))
        entropies.append(float(cache.cand_entropy[row]))
        v = result

    partial = max_steps is not None
    answer = "" if partial else str(v)
    trace = ReasoningTrace(
        id=trace_id,
        question=task.question(),
        ground_truth_answer=str(task.target_answer),
        think_text="\n".join(lines),
        answer_text=answer,
        final_correct=None if partial else exact_match(answer, str(task.target_answer)),
        per_token_entropies=entropies,
    )
    return ToyRollout(trace, task, np.array(actions, dtype=int), np.array(logps), correct, entropies)


def reference_steps(
    task: ToyTask, rng: np.random.Generator, terse_prob: float, max_steps: int | None = None
) -> list[str]:
    """Oracle-correct step lines in the reference (teacher) phrasing."""
    lines = []
    v = task.start_value
    n = task.length if max_steps is None else min(max_steps, task.length)
    for i in range(n):
        op, c = task.ops[i]
        r = apply_op(v, op, c, task.modulus)
        style = "terse" if rng.random() < terse_prob else "verbose"
        lines.append(render_step(v, op, c, r, style, i))
        v = r
    return lines


def _slices_of(lines: list[str], trace_id: str, provenance: str) -> list[Slice]:
    return segment("\n".join(lines), TOY_SLICER, trace_id=trace_id, provenance=provenance)


# --- reports ------------------------------------------------------------------


@dataclass
class TrainingReport:
    mode: str
    seed: int
    config: dict
    baseline_accuracy: float
    baseline_verdict_accuracy: float
    rows: list[dict] = field(default_factory=list)
    wall_times: list[float] = field(default_factory=list)
    entropy_summary: dict = field(default_factory=dict)
    aborted: str | None = None

    @property
    def final_accuracy(self) -> float:
        return self.rows[-1]["task_accuracy"] if self.rows else self.baseline_accuracy

    @property
    def final_verdict_accuracy(self) -> float:
        return self.rows[-1]["verdict_accuracy"] if self.rows else self.baseline_verdict_accuracy

    def episodes_to_threshold(self, threshold: float) -> int | None:
        for row in self.rows:
            if row["task_accuracy"] >= threshold:
                return row["episode"]
        return None

    @property
    def mean_wall_time(self) -> float:
        return math.fsum(self.wall_times) / len(self.wall_times) if self.wall_times else 0.0

    def summary(self, include_timing: bool = False) -> dict:
        s = {
            "kind": "summary",
            "mode": self.mode,
            "seed": self.seed,
            "episodes_run": len(self.rows),
            "baseline_accuracy": self.baseline_accuracy,
            "final_accuracy": self.final_accuracy,
            "baseline_verdict_accuracy": self.baseline_verdict_accuracy,
            "final_verdict_accuracy": self.final_verdict_accuracy,
            "episodes_to_threshold": self.episodes_to_threshold(self.config["accuracy_threshold"]),
            "entropy_summary": self.entropy_summary,
            "aborted": self.aborted,
        }
        if include_timing:
            s["mean_wall_time"] = self.mean_wall_time
        return s

    def to_records(self, include_timing: bool = False) -> list[dict]:
        """Per-episode rows plus a summary; wall times only on request (they break
        byte-identical reruns)."""
        out = []
        for i, row in enumerate(self.rows):
            r = {"kind": "episode", "mode": self.mode, "seed": self.seed, **row}
            if include_timing:
                r["wall_time"] = self.wall_times[i]
            out.append(r)
        out.append(self.summary(include_timing))
        return out


@dataclass
class EpisodeOutcome:
    rollouts: list[ToyRollout]
    slices: list[list[Slice]]
    verdicts: list[list[int]]
    reasoner_rewards: list[float]
    exact_matches: list[int]
    slice_means: list[float]
    gan_term: float | None
    disc_rewards: list[list[float]]
    metrics: dict


# --- trainer ------------------------------------------------------------------


class JointTrainer:
    """Stateful driver for one seed; ``run_episode`` performs one joint update."""

    def __init__(self, cfg: TrainingConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.weights = cfg.effective_weights()
        streams = np.random.SeedSequence(seed).spawn(7)
        (
            self.task_rng,
            self.rollout_rng,
            self.verdict_rng,
            self.disc_rng,
            self.ref_rng,
            self.eval_rng,
            self.sft_rng,
        ) = (np.random.default_rng(s) for s in streams)

        self.reasoner = ToyReasonerPolicy(
            cfg.task_length,
            cfg.vocab_size,
            init_correct_prob=cfg.init_correct_prob,
            init_terse_prob=cfg.init_terse_prob,
            temperature=cfg.temperature,
        )
        self.discriminator = ToyDiscriminatorPolicy()
        # constant rates keep episodes-to-threshold independent of the episode budget
        self.reasoner_grpo = GrpoConfig(
            group_size=cfg.group_size,
            clip_epsilon=cfg.clip_epsilon,
            kl_coeff=cfg.kl_coeff,
            schedule=LearningRateSchedule.constant(cfg.reasoner_lr),
        )
        self.disc_grpo = GrpoConfig(
            group_size=cfg.disc_group_size,
            clip_epsilon=cfg.clip_epsilon,
            kl_coeff=cfg.kl_coeff,
            schedule=LearningRateSchedule.constant(cfg.disc_lr),
        )
        self.max_steps = cfg.max_slices
        self.episode = 0
        self._build_eval_sets()
        self.sft_examples = self.sft_stage()

    # evaluation ------------------------------------------------------------

    def _build_eval_sets(self) -> None:
        cfg = self.cfg
        tasks = [sample_task(self.eval_rng, cfg.task_length, cfg.modulus) for _ in range(cfg.eval_tasks)]
        self.eval_rows = np.array(
            [[ToyReasonerPolicy.row(i, op) for i, (op, _) in enumerate(t.ops)] for t in tasks]
        )
        # balanced held-out slices: one sound and one unsound step per draw
        offsets = candidate_offsets(cfg.vocab_size)
        feats, labels = [], []
        for _ in range(cfg.eval_slices // 2):
            a = int(self.eval_rng.integers(0, cfg.modulus))
            op = OPERATORS[int(self.eval_rng.integers(0, len(OPERATORS)))]
            b = int(self.eval_rng.integers(1, 10))
            truth = apply_op(a, op, b, cfg.modulus)
            wrong = (truth + offsets[int(self.eval_rng.integers(1, len(offsets)))]) % cfg.modulus
            for result, label in ((truth, 1), (wrong, 0)):
                style = "terse" if self.eval_rng.random() < cfg.reference_terse_prob else "verbose"
                text = render_step(a, op, b, result, style, int(self.eval_rng.integers(0, 3)))
                feats.append(slice_features(text, cfg.modulus))
                labels.append(label)
        self.eval_X = np.array(feats)
        self.eval_y = np.array(labels, dtype=float)

    def task_accuracy(self) -> float:
        """Mean over held-out tasks of P(every sampled step is correct)."""
        p = self.reasoner.correct_probs()
        return float(np.prod(p[self.eval_rows], axis=1).mean())

    def verdict_accuracy(self) -> float:
        """Expected agreement of a sampled verdict with the oracle on held-out slices."""
        p = self.discriminator.verdict_prob(self.eval_X)
        return float(np.where(self.eval_y == 1, p, 1.0 - p).mean())

    # stage 1 ---------------------------------------------------------------

    def sft_stage(self) -> list[SftExample]:
        """Supervised warm-up of the verdict head on oracle-annotated, label-balanced slices."""
        cfg = self.cfg
        if cfg.sft_steps <= 0:
            return []
        examples = []
        cache = _SamplingCache(self.reasoner)
        for i in range(cfg.sft_tasks):
            task = sample_task(self.sft_rng, cfg.task_length, cfg.modulus)
            ro = rollout(self.reasoner, task, self.sft_rng, trace_id=f"sft-{i}", cache=cache)
            for s, ok in zip(segment(ro.trace.think_text, TOY_SLICER, trace_id=ro.trace.id), ro.step_correct):
                examples.append(
                    SftExample(
                        slice_text=s.text,
                        label="yes" if ok else "no",
                        analysis="Checks the modular arithmetic of this step.",
                        rationale="The result is correct." if ok else "The result is wrong.",
                        source=s.ref,
                    )
                )
        balanced = balance_labels(examples, int(self.sft_rng.integers(2**31)))
        X = np.array([slice_features(e.slice_text, cfg.modulus) for e in balanced])
        y = np.array([e.label == "yes" for e in balanced], dtype=float)
        for _ in range(cfg.sft_steps):
            d = self.discriminator
            d.set_params(d.get_params() + cfg.sft_lr * d.sft_grad(X, y))
        return balanced

    # stage 2 ---------------------------------------------------------------

    def sample_batch(self):
        """Rollouts for a fresh task batch from a frozen snapshot of the reasoner,
        sliced and featurized: ``(rollouts, slices, features)``."""
        cfg, e = self.cfg, self.episode
        cache = _SamplingCache(self.reasoner)
        tasks = [sample_task(self.task_rng, cfg.task_length, cfg.modulus) for _ in range(cfg.tasks_per_episode)]
        rollouts: list[ToyRollout] = []
        for qi, task in enumerate(tasks):
            for g in range(cfg.group_size):
                rollouts.append(
                    rollout(
                        self.reasoner,
                        task,
                        self.rollout_rng,
                        max_steps=self.max_steps,
                        trace_id=f"e{e}-q{qi}-g{g}",
                        cache=cache,
                    )
                )
        slices = [segment(ro.trace.think_text, TOY_SLICER, trace_id=ro.trace.id) for ro in rollouts]
        feats = [np.array([slice_features(s.text, cfg.modulus) for s in sl]) for sl in slices]
        return rollouts, slices, feats

    def run_episode(self) -> EpisodeOutcome:
        cfg, w = self.cfg, self.weights
        e = self.episode
        rollouts, slices, feats = self.sample_batch()

        # judge every slice with one sampled decision from the judging head
        head = cfg.judge_head
        verdicts = []
        for X in feats:
            p = _head_prob(self.discriminator, head, X)
            verdicts.append([int(x) for x in self.verdict_rng.random(len(X)) < p])

        ems, rss, rewards = [], [], []
        for ro, v in zip(rollouts, verdicts):
            rm = exact_match(ro.trace.answer_text, ro.trace.ground_truth_answer)
            rs = slice_mean(v)
            ems.append(rm)
            rss.append(rs)
            rewards.append(reasoner_reward(rm, rs, w))

        groups = []
        for qi in range(cfg.tasks_per_episode):
            idx = range(qi * cfg.group_size, (qi + 1) * cfg.group_size)
            grp = RolloutGroup(
                question_id=f"e{e}-q{qi}",
                rewards=[rewards[i] for i in idx],
                actions=[rollouts[i].actions for i in idx],
                logprobs_old=[rollouts[i].logprobs for i in idx],
            )
            grp.compute_advantages(self.reasoner_grpo.std_epsilon)
            groups.append(grp)

        # both policies score this batch from the same pre-update snapshot
        disc_groups, gan_term, disc_extra, disc_rewards = self._discriminator_batch(rollouts, slices, feats)

        r_metrics = update_policy(self.reasoner, groups, self.reasoner_grpo, step=e)
        d_metrics = None
        if disc_extra is not None:
            d_metrics = update_policy(self.discriminator, disc_groups, self.disc_grpo, step=e, extra_grad=disc_extra)

        all_entropies = [h for ro in rollouts for h in ro.entropies]
        metrics = {
            "episode": e + 1,
            "task_accuracy": self.task_accuracy(),
            "verdict_accuracy": self.verdict_accuracy(),
            "train_exact_match": math.fsum(ems) / len(ems),
            "mean_r_s": math.fsum(rss) / len(rss),
            "mean_reasoner_reward": r_metrics.mean_reward,
            "r_d": gan_term,
            "mean_step_entropy": math.fsum(all_entropies) / len(all_entropies),
            "terse_prob": float(self.reasoner.style_probs()[STYLES.index("terse")]),
            "reasoner_grad_norm": r_metrics.grad_norm,
            "disc_grad_norm": d_metrics.grad_norm if d_metrics else 0.0,
        }
        self.episode += 1
        return EpisodeOutcome(
            rollouts=rollouts,
            slices=slices,
            verdicts=verdicts,
            reasoner_rewards=rewards,
            exact_matches=ems,
            slice_means=rss,
            gan_term=gan_term,
            disc_rewards=disc_rewards,
            metrics=metrics,
        )

    def _discriminator_batch(self, rollouts, slices, feats):
        """Provenance batch (R_d, exact gradient) and verdict decision groups (R_a, GRPO)."""
        cfg, w = self.cfg, self.weights
        if not cfg.trains_discriminator or self.episode % cfg.disc_update_every:
            return [], None, None, []

        gen = [s for sl in slices for s in sl]
        gen_X = {s.ref: X[i] for sl, X in zip(slices, feats) for i, s in enumerate(sl)}
        refs: list[Slice] = []
        for qi in range(cfg.tasks_per_episode):
            task = sample_task(self.ref_rng, cfg.task_length, cfg.modulus)
            lines = reference_steps(task, self.ref_rng, cfg.reference_terse_prob, self.max_steps)
            refs.extend(_slices_of(lines, f"ref-e{self.episode}-q{qi}", "reference"))
        batch = mix_batch(gen, refs, int(self.disc_rng.integers(2**31)))
        X_ref = np.array([slice_features(s.text, cfg.modulus) for s in batch.reference_slices])
        X_gen = np.array([gen_X[s.ref] for s in batch.generated_slices])
        d = self.discriminator
        gan_term = gan_reward(d.real_prob(X_ref), d.real_prob(X_gen), cfg.clamp_delta)
        extra = w.lambda3 * d.gan_reward_grad(X_ref, X_gen, cfg.clamp_delta)

        groups, disc_rewards = [], []
        for i in self._balanced_alignment_indices(rollouts):
            ro, X = rollouts[i], feats[i]
            fc = ro.trace.final_correct
            p = d.verdict_prob(X)
            samples = (self.disc_rng.random((cfg.disc_group_size, len(X))) < p).astype(int)
            r = [discriminator_reward(gan_term, alignment_reward(sv, fc), w) for sv in samples]
            actions = [("verdict", X, sv) for sv in samples]
            grp = RolloutGroup(
                question_id=ro.trace.id,
                rewards=r,
                actions=actions,
                logprobs_old=[d.logprobs(a) for a in actions],
            )
            grp.compute_advantages(self.disc_grpo.std_epsilon)
            groups.append(grp)
            disc_rewards.append(r)
        return groups, gan_term, extra, disc_rewards

    def _balanced_alignment_indices(self, rollouts) -> list[int]:
        """Equal numbers of correct and wrong traces for the alignment groups.

        Without balancing, a weak reasoner (almost every trace wrong) drives all
        verdicts toward NO, sound steps included. Partial traces carry no final
        answer and are never used.
        """
        right = [i for i, ro in enumerate(rollouts) if ro.trace.final_correct == 1]
        wrong = [i for i, ro in enumerate(rollouts) if ro.trace.final_correct == 0]
        k = min(len(right), len(wrong))
        if k == 0:
            return []
        pick = lambda idx: sorted(self.disc_rng.choice(idx, size=k, replace=False).tolist())
        return pick(right) + pick(wrong)


def _head_prob(d: ToyDiscriminatorPolicy, head: str, X: np.ndarray) -> np.ndarray:
    return d.verdict_prob(X) if head == "verdict" else d.real_prob(X)


def _entropy_summary(outcome: EpisodeOutcome) -> dict:
    profiles = [
        profile(ro.entropies, correct=int(bool(ro.trace.final_correct)), trace_id=ro.trace.id)
        for ro in outcome.rollouts
    ]
    return {
        "all_tokens": {k: v.to_dict() for k, v in split_summary(profiles).items()},
        "nonzero_tokens": {k: v.to_dict() for k, v in split_summary(profiles, filtered=True).items()},
    }


def new_report(trainer: JointTrainer) -> TrainingReport:
    return TrainingReport(
        mode=trainer.cfg.mode,
        seed=trainer.seed,
        config=trainer.cfg.to_dict(),
        baseline_accuracy=trainer.task_accuracy(),
        baseline_verdict_accuracy=trainer.verdict_accuracy(),
    )


def run_episodes(trainer: JointTrainer, report: TrainingReport) -> TrainingReport:
    """Drive ``trainer`` for its configured episodes, appending rows to ``report``.

    A NumericalError stops the run and leaves a partial report with ``aborted`` set.
    """
    cfg = trainer.cfg
    outcome = None
    for _ in range(cfg.episodes):
        t0 = time.perf_counter()
        try:
            outcome = trainer.run_episode()
        except NumericalError as exc:
            log.error("episode %d aborted: %s", trainer.episode + 1, exc)
            report.aborted = str(exc)
            break
        report.wall_times.append(time.perf_counter() - t0)
        report.rows.append(outcome.metrics)
        if cfg.stop_at_threshold and outcome.metrics["task_accuracy"] >= cfg.accuracy_threshold:
            break
    if outcome is not None:
        report.entropy_summary = _entropy_summary(outcome)
    return report


def train_joint(cfg: TrainingConfig, seed: int | None = None) -> TrainingReport:
    """Run ``cfg.episodes`` joint episodes for one seed (default: the first in cfg.seeds)."""
    trainer = JointTrainer(cfg, cfg.seeds[0] if seed is None else seed)
    return run_episodes(trainer, new_report(trainer))


def train_partial_trace(cfg: TrainingConfig, seed: int | None = None) -> TrainingReport:
    """Joint training on truncated traces rewarded by slice verdicts alone."""
    if cfg.mode != "partial_trace":
        raise ConfigurationError("train_partial_trace needs mode='partial_trace'")
    return train_joint(cfg, seed)
