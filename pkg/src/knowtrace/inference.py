"""Correctness prediction and mastery estimation from fitted parameters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numba
import numpy as np

from .data import Dataset, Sequence
from .em import pack
from .errors import ConfigError
from .params import ModelParams, validate_params

MASTERY_THRESHOLD = 0.95


@dataclass
class PredictionTrace:
    predicted_correct: np.ndarray  # P(obs_t = 1 | obs_<t)
    mastery: np.ndarray  # P(L_t | obs_<=t)
    prior_mastery: np.ndarray  # P(L_t | obs_<t)
    mask: np.ndarray

    def __len__(self):
        return len(self.mastery)


@numba.njit(cache=True, nogil=True)
def _predict_flat(obs, lcs, gcs, mask, starts, prior, learns, forgets, guesses, slips,
                  pred, filt, pre):
    for s in range(len(starts) - 1):
        a = starts[s]
        b = starts[s + 1]
        p = prior
        f = prior
        for k in range(a, b):
            if k > a:
                i = lcs[k]
                p = f * (1.0 - forgets[i]) + (1.0 - f) * learns[i]
            g = gcs[k]
            pre[k] = p
            right = p * (1.0 - slips[g])
            wrong_guess = (1.0 - p) * guesses[g]
            pred[k] = right + wrong_guess
            if not mask[k]:
                f = p
            elif obs[k] == 1:
                f = right / pred[k] if pred[k] > 0.0 else p
            else:
                miss = 1.0 - pred[k]
                f = p * slips[g] / miss if miss > 0.0 else p
            filt[k] = f


def _run(p: ModelParams, packed):
    problems = validate_params(p)
    if problems:
        raise ConfigError("; ".join(problems))
    if len(packed.obs) and (packed.learn_classes.max() >= p.num_learn_classes
                            or packed.guess_classes.max() >= p.num_guess_classes):
        raise ConfigError("sequence class index exceeds the parameters' classes")
    prior, learns, forgets, guesses, slips = p.arrays()
    N = len(packed.obs)
    pred, filt, pre = np.empty(N), np.empty(N), np.empty(N)
    _predict_flat(packed.obs, packed.learn_classes, packed.guess_classes, packed.mask, packed.starts,
                  prior, learns, forgets, guesses, slips, pred, filt, pre)
    return pred, filt, pre


def predict(p: ModelParams, seq: Sequence) -> PredictionTrace:
    """Step-by-step prediction for one sequence.

    ``predicted_correct[t]`` uses only earlier responses; ``mastery[t]``
    folds in response t. Masked steps carry no evidence.
    """
    pred, filt, pre = _run(p, pack([seq], p.num_learn_classes, p.num_guess_classes))
    return PredictionTrace(pred, filt, pre, np.array(seq.mask))


def predict_many(p: ModelParams, seqs) -> list:
    seqs = list(seqs)
    packed = pack(seqs, p.num_learn_classes, p.num_guess_classes)
    pred, filt, pre = _run(p, packed)
    out = []
    for s, (a, b) in zip(seqs, zip(packed.starts[:-1], packed.starts[1:])):
        out.append(PredictionTrace(pred[a:b], filt[a:b], pre[a:b], np.array(s.mask)))
    return out


def predict_dataset(models: Mapping[str, ModelParams], ds: Dataset) -> dict:
    """skill -> list of PredictionTrace, aligned with ``ds.skills[skill]``."""
    missing = [k for k in ds.skills if k not in models]
    if missing:
        raise ConfigError(f"no fitted parameters for skills: {', '.join(map(repr, missing))}")
    return {skill: predict_many(models[skill], seqs) for skill, seqs in ds.skills.items()}


def classify_mastery(trace, threshold: float = MASTERY_THRESHOLD):
    """Flags steps with filtered mastery >= threshold.

    Accepts a PredictionTrace or a plain sequence of mastery values. Returns
    (flags, first flagged index or None).
    """
    mastery = trace.mastery if isinstance(trace, PredictionTrace) else np.asarray(trace, dtype=float)
    flags = mastery >= threshold
    hits = np.flatnonzero(flags)
    return flags, (int(hits[0]) if len(hits) else None)


def propagate_mastery(prior: float, learn: float, steps: int, forget: float = 0.0) -> float:
    """Expected mastery after ``steps`` transitions with no observations."""
    p = prior
    for _ in range(steps):
        p = p * (1.0 - forget) + (1.0 - p) * learn
    return p


def expected_mastery(prior: float, learn: float, steps: int) -> float:
    """Closed form of ``propagate_mastery`` without forgetting."""
    return 1.0 - (1.0 - prior) * (1.0 - learn) ** steps


def first_mastery_steps(traces, threshold: float = MASTERY_THRESHOLD) -> list:
    return [classify_mastery(t, threshold)[1] for t in traces]


def final_mastery(traces) -> np.ndarray:
    return np.array([t.mastery[-1] for t in traces])


def export_rows(ds: Dataset, traces: Mapping[str, list], scored_only: Optional[bool] = False):
    """Yield rows of the prediction export: skill, student, step, observed, predicted_correct, mastery, masked."""
    for skill, seqs in ds.skills.items():
        for seq, tr in zip(seqs, traces[skill]):
            for t in range(len(seq)):
                masked = not bool(seq.mask[t])
                if scored_only and masked:
                    continue
                yield (skill, seq.student, t, int(seq.obs[t]), float(tr.predicted_correct[t]),
                       float(tr.mastery[t]), int(masked))
