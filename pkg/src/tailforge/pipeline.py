"""End-to-end driver: synthesize or load data, Phase I, selection, Phase II, evaluation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import make_pareto_longtail, split_head_tail, synth_gaussian_dataset
from .errors import TailforgeError
from .evaluate import topk1_accuracy
from .train import TrainConfig, forward, train_phase1, train_phase2

log = logging.getLogger(__name__)


class StageError(TailforgeError):
    """Wraps an error raised inside a pipeline stage, naming the stage."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class BenchSetting:
    """Synthetic long-tail benchmark; defaults are the desk-scale acceptance setting."""

    n_classes: int = 20
    n_max: int = 200
    n_min: int = 2
    alpha: float = 6.0
    feature_dim: int = 10
    class_sep: float = 3.0
    test_per_class: int = 50

    def dataset(self, seed):
        dist = make_pareto_longtail(
            self.n_classes, self.n_max, self.n_min, self.alpha, seed=seed,
            test_per_class=self.test_per_class, name="synthetic-lt",
        )
        return synth_gaussian_dataset(dist, self.feature_dim, self.class_sep, seed=seed)


@dataclass
class RunArtifacts:
    reports: list = field(default_factory=list)
    logs: dict = field(default_factory=dict)
    teachers: dict = field(default_factory=dict)
    students: dict = field(default_factory=dict)


def evaluate_model(model, dataset, strategy="", seed=None):
    test = dataset.test_indices()
    logits, _ = forward(model, dataset.flat(test))
    preds = np.argmax(logits, axis=1)
    split = split_head_tail(dataset.distribution)
    return topk1_accuracy(preds, dataset.labels[test], split, dataset.n_classes, strategy, seed)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except TailforgeError as exc:
        raise StageError(name, exc) from exc


def run_pipeline(config: TrainConfig, dataset, strategies=None, teacher=None, keep_models=False):
    """Run one seed: Phase I once, then Phase II per strategy, sharing the teacher.

    Returns a :class:`RunArtifacts` with one report per strategy.
    """
    strategies = list(strategies or [config.strategy])
    out = RunArtifacts()
    if teacher is None:
        p1_log = []
        teacher = _stage("phase1", train_phase1, dataset, config, log=p1_log)
        out.logs["phase1"] = p1_log
    embeddings = forward(teacher, dataset.flat())[1]
    for strategy in strategies:
        cfg = config.replace(strategy=strategy)
        p2_log = []
        student = _stage("phase2", train_phase2, dataset, teacher, cfg, log=p2_log, embeddings=embeddings)
        out.logs[strategy] = p2_log
        out.reports.append(_stage("eval", evaluate_model, student, dataset, strategy, config.seed))
        if keep_models:
            out.students[strategy] = student
        log.info("seed %s %-10s head %.1f tail %.1f overall %.1f", config.seed, strategy,
                 out.reports[-1].head_acc, out.reports[-1].tail_acc, out.reports[-1].overall_acc)
    if keep_models:
        out.teachers[config.seed] = teacher
    return out


def run_matrix(config: TrainConfig, strategies, seeds, bench: BenchSetting | None = None, dataset=None):
    """Every (strategy, seed) pair; a fresh synthetic dataset per seed unless ``dataset`` is given."""
    bench = bench or BenchSetting()
    reports = []
    for seed in seeds:
        data = dataset if dataset is not None else _stage("synth", bench.dataset, seed)
        reports.extend(run_pipeline(config.replace(seed=seed), data, strategies).reports)
    order = {s: i for i, s in enumerate(strategies)}
    reports.sort(key=lambda r: order[r.strategy])
    return reports
