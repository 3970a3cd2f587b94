"""Student-grouped k-fold cross-validation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .data import Dataset
from .em import fit
from .errors import ConfigError
from .inference import predict_many
from .metrics import MetricReport, report_from_pooled, resolve_metrics
from .params import ModelConfig, with_fallback

log = logging.getLogger(__name__)


@dataclass
class FoldAssignment:
    folds: dict  # student -> fold index
    k: int
    seed: Optional[int] = None

    def sizes(self):
        return np.bincount(list(self.folds.values()), minlength=self.k).tolist()

    def members(self, fold):
        return [s for s, f in self.folds.items() if f == fold]


def assign_folds(students, k: int, seed: int = 0) -> FoldAssignment:
    """Shuffle students under ``seed`` and deal them round-robin into ``k`` folds."""
    students = list(students)
    if k < 2:
        raise ConfigError(f"need at least 2 folds, got {k}")
    if k > len(students):
        raise ConfigError(f"{k} folds requested for {len(students)} students")
    order = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF])).permutation(len(students))
    return FoldAssignment({students[j]: i % k for i, j in enumerate(order)}, k, seed)


def validate_folds(assignment: FoldAssignment, students) -> None:
    """Raise ConfigError unless every student has exactly one in-range fold."""
    students = list(students)
    folds = assignment.folds
    missing = [s for s in students if s not in folds]
    if missing:
        raise ConfigError(f"{len(missing)} students have no fold (e.g. {missing[0]!r})")
    bad = {s: f for s, f in folds.items() if not 0 <= f < assignment.k}
    if bad:
        raise ConfigError(f"fold indices out of range [0, {assignment.k}): {bad}")


def crossvalidate(ds: Dataset, cfg: ModelConfig, k: int = 5, metrics=None,
                  folds: Optional[Mapping[str, FoldAssignment] | FoldAssignment] = None) -> MetricReport:
    """Fit on k-1 folds, predict the held-out fold, and score the pooled held-out predictions.

    Classes unseen during a fold's training borrow another class's
    parameters (see ``params.with_fallback``).
    """
    resolve_metrics(metrics)
    pooled = {}
    for skill, seqs in ds.skills.items():
        students = [s.student for s in seqs]
        if len(students) < k:
            log.warning("skill %r has %d students, fewer than %d folds; skipped", skill, len(students), k)
            continue
        if folds is None:
            assignment = assign_folds(students, k, cfg.seed)
        else:
            assignment = folds.get(skill) if isinstance(folds, Mapping) else folds
            if assignment is None:
                raise ConfigError(f"no fold assignment for skill {skill!r}")
            validate_folds(assignment, students)
        truth, pred = [], []
        for fold in range(assignment.k):
            test = [s for s in seqs if assignment.folds[s.student] == fold]
            if not test:
                continue
            train = ds.subset(skill, (s.student for s in seqs if assignment.folds[s.student] != fold))
            if not train.skills[skill]:
                raise ConfigError(f"skill {skill!r}: fold {fold} leaves no training students")
            result = fit(train, cfg)[skill]
            params = result.params
            if not (all(result.learn_seen) and all(result.guess_seen)):
                log.info("skill %r fold %d: classes unseen in training fall back to a seen class", skill, fold)
                params = with_fallback(params, result.learn_seen, result.guess_seen)
            for seq, tr in zip(test, predict_many(params, test)):
                keep = np.asarray(seq.mask, bool)
                truth.append(np.asarray(seq.obs, float)[keep])
                pred.append(tr.predicted_correct[keep])
        pooled[skill] = (np.concatenate(truth), np.concatenate(pred))
    return report_from_pooled(pooled, metrics)

