"""Synthetic-data experiments: parameter recovery versus data size, and worst-case mastery accuracy."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .em import fit_skill
from .inference import MASTERY_THRESHOLD, predict_many
from .metrics import mape
from .params import ModelConfig, ModelParams
from .synthetic import SyntheticSpec, find_worst_case_learn_rate, generate

# Typical algebra-skill values.
ALGEBRA = ModelParams.standard(prior=0.08, learn=0.3, guess=0.15, slip=0.05)

PARAM_FAMILIES = ("prior", "learns", "guesses", "slips")


@dataclass
class SufficiencyPoint:
    num_students: int
    length: int
    mape: dict  # family -> MAPE averaged over fits


def data_sufficiency(student_counts=(10, 25, 50, 100, 200), lengths=(10,), fits_per_point=5,
                     num_restarts=20, truth: ModelParams = ALGEBRA, seed=0):
    """MAPE of fitted parameters for each (students, length) combination.

    Fit r of every point samples with generation seed (seed, r); per-student
    streams make the smaller cohorts prefixes of the larger ones.
    """
    points = []
    for length in lengths:
        for n in student_counts:
            acc = {k: [] for k in PARAM_FAMILIES}
            for r in range(fits_per_point):
                gen_seed = int(np.random.SeedSequence([seed, r]).generate_state(1)[0])
                ds, _ = generate(SyntheticSpec(truth, n, length, seed=gen_seed))
                cfg = ModelConfig(num_restarts=num_restarts, seed=gen_seed)
                result = fit_skill(ds.skills["synthetic"], cfg)
                for k, v in mape(result.params, truth).items():
                    if k in acc:
                        acc[k].append(v)
            points.append(SufficiencyPoint(n, length, {k: float(np.mean(v)) for k, v in acc.items()}))
    return points


@dataclass
class MasteryPoint:
    length: int
    learn: float
    accuracy: float
    mean_final_mastery: float
    mastered_fraction: float


def worst_case_mastery(lengths=range(2, 31), num_students=10000, base: ModelParams = ALGEBRA,
                       threshold=MASTERY_THRESHOLD, seed=0):
    """Mastery classification accuracy at the final step of each sequence length.

    For a sequence of ``length`` responses the final step sits ``length - 1``
    transitions after the prior, so the learn rate is tuned for that many
    transitions. Classification uses the generating parameters.
    """
    points = []
    for length in lengths:
        learn = find_worst_case_learn_rate(base, length - 1)
        params = replace(base, learns=(learn,))
        ds, states = generate(SyntheticSpec(params, num_students, length, seed=seed))
        traces = predict_many(params, ds.skills["synthetic"])
        final = np.array([t.mastery[-1] for t in traces])
        truth = np.array([s[-1] for s in states["synthetic"]])
        predicted = final >= threshold
        points.append(MasteryPoint(length, learn, float(np.mean(predicted == (truth == 1))),
                                   float(final.mean()), float(truth.mean())))
    return points
