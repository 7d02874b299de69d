"""Style distillation: pull the reasoner's phrasing toward a reference style.

Phase 1 fits the provenance head to tell reference (style A, verbose) slices
from the reasoner's own (style B, terse). Phase 2 runs the partial-trace loop
with the provenance head as judge, so the slice reward is "looks like a
reference slice". Success is measured by a separate held-out style classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import roc_auc_score

from gar.errors import ConfigurationError
from gar.toyenv.policies import style_features
from gar.toyenv.task import sample_task
from gar.toyenv.training import (
    JointTrainer,
    TrainingConfig,
    TrainingReport,
    _SamplingCache,
    new_report,
    reference_steps,
    rollout,
    run_episodes,
)


@dataclass
class DistillReport:
    seed: int
    auc_before: float
    auc_after: float
    verbose_before: float
    verbose_after: float
    phase1_r_d: list[float]
    training: TrainingReport

    def to_records(self, include_timing: bool = False) -> list[dict]:
        records = self.training.to_records(include_timing)
        records.append(
            {
                "kind": "distill",
                "seed": self.seed,
                "auc_before": self.auc_before,
                "auc_after": self.auc_after,
                "verbose_before": self.verbose_before,
                "verbose_after": self.verbose_after,
                "phase1_r_d": self.phase1_r_d,
            }
        )
        return records


def style_auc(trainer: JointTrainer, eval_seed: int) -> tuple[float, float]:
    """Held-out AUC of a fresh logistic classifier on generated vs style-A slices.

    The classifier sees style markers only, so arithmetic cannot leak in. Returns
    (auc, fraction of generated slices in the verbose style).
    """
    cfg = trainer.cfg
    rng = np.random.default_rng(eval_seed)
    cache = _SamplingCache(trainer.reasoner)
    gen, ref = [], []
    while len(gen) < cfg.auc_samples:
        task = sample_task(rng, cfg.task_length, cfg.modulus)
        gen.extend(rollout(trainer.reasoner, task, rng, cache=cache).trace.think_text.split("\n"))
    while len(ref) < cfg.auc_samples:
        task = sample_task(rng, cfg.task_length, cfg.modulus)
        ref.extend(reference_steps(task, rng, cfg.reference_terse_prob))
    gen, ref = gen[: cfg.auc_samples], ref[: cfg.auc_samples]
    X = np.array([style_features(t) for t in gen + ref])
    y = np.array([0] * len(gen) + [1] * len(ref))
    order = rng.permutation(len(y))
    X, y = X[order], y[order]
    half = len(y) // 2
    clf = LogisticRegression().fit(X[:half], y[:half])
    auc = float(roc_auc_score(y[half:], clf.predict_proba(X[half:])[:, 1]))
    verbose = float(np.mean([style_features(t)[0] for t in gen]))
    return auc, verbose


def provenance_warmup(trainer: JointTrainer, steps: int) -> list[float]:
    """Phase 1: gradient ascent on the GAN term alone, reasoner frozen."""
    cfg = trainer.cfg
    d = trainer.discriminator
    trace = []
    for _ in range(steps):
        _, r_d, extra, _ = trainer._discriminator_batch(*trainer.sample_batch())
        trace.append(r_d)
        d.set_params(d.get_params() + cfg.disc_lr * extra)
    return trace


def train_distill(cfg: TrainingConfig, seed: int | None = None) -> DistillReport:
    if cfg.mode != "distill":
        raise ConfigurationError("train_distill needs mode='distill'")
    seed = cfg.seeds[0] if seed is None else seed
    trainer = JointTrainer(cfg, seed)
    eval_seed = int(np.random.SeedSequence(seed).generate_state(1)[0])
    auc_before, verbose_before = style_auc(trainer, eval_seed)
    phase1 = provenance_warmup(trainer, cfg.phase1_steps)
    report = run_episodes(trainer, new_report(trainer))
    auc_after, verbose_after = style_auc(trainer, eval_seed)
    return DistillReport(
        seed=seed,
        auc_before=auc_before,
        auc_after=auc_after,
        verbose_before=verbose_before,
        verbose_after=verbose_after,
        phase1_r_d=phase1,
        training=report,
    )
