"""Toy arithmetic-chain environment for exercising the joint training loop."""

from gar.toyenv.task import ToyTask, oracle_step_check, sample_task
from gar.toyenv.training import TrainingConfig, TrainingReport, rollout, train_joint, train_partial_trace
from gar.toyenv.distill import DistillReport, train_distill

__all__ = [
    "DistillReport",
    "ToyTask",
    "TrainingConfig",
    "TrainingReport",
    "oracle_step_check",
    "rollout",
    "sample_task",
    "train_distill",
    "train_joint",
    "train_partial_trace",
]
