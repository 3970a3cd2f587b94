"""Sampling responses and latent mastery states from known parameters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence as Seq, Union

import numba
import numpy as np

from .data import Dataset, Sequence
from .errors import ConfigError
from .params import ModelParams, validate_params


@dataclass
class SyntheticSpec:
    """What to generate.

    ``length`` is one length for everybody or one per student. Class
    schedules, when given, hold one integer array per student.
    """

    params: ModelParams
    num_students: int
    length: Union[int, Seq[int]]
    seed: int = 0
    learn_schedule: Optional[Seq] = None
    guess_schedule: Optional[Seq] = None
    skill: str = "synthetic"

    def __post_init__(self):
        if self.num_students < 1:
            raise ConfigError("num_students must be >= 1")
        lengths = self.lengths()
        if min(lengths) < 1:
            raise ConfigError("sequence length must be >= 1")
        problems = validate_params(self.params)
        if problems:
            raise ConfigError("; ".join(problems))

    def lengths(self):
        if isinstance(self.length, (int, np.integer)):
            return [int(self.length)] * self.num_students
        lengths = [int(x) for x in self.length]
        if len(lengths) != self.num_students:
            raise ConfigError(f"{len(lengths)} lengths for {self.num_students} students")
        return lengths


def student_rng(seed: int, student: int) -> np.random.Generator:
    """Independent stream per student index; adding students never perturbs earlier ones."""
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, student]))


@numba.njit(cache=True)
def _simulate(u_state, u_obs, lcs, gcs, prior, learns, forgets, guesses, slips, states, obs):
    T = len(u_state)
    learned = u_state[0] < prior
    for t in range(T):
        if t > 0:
            i = lcs[t]
            if learned:
                learned = not (u_state[t] < forgets[i])
            else:
                learned = u_state[t] < learns[i]
        g = gcs[t]
        states[t] = 1 if learned else 0
        if learned:
            obs[t] = 0 if u_obs[t] < slips[g] else 1
        else:
            obs[t] = 1 if u_obs[t] < guesses[g] else 0


def generate(spec: SyntheticSpec):
    """Returns (Dataset, states) where ``states[skill][k]`` is student k's latent 0/1 path."""
    p = spec.params
    prior, learns, forgets, guesses, slips = p.arrays()
    seqs, paths = [], []
    for k, T in enumerate(spec.lengths()):
        rng = student_rng(spec.seed, k)
        u = rng.random((2, T))
        lc = np.zeros(T, np.int64) if spec.learn_schedule is None else np.asarray(spec.learn_schedule[k], np.int64)
        gc = np.zeros(T, np.int64) if spec.guess_schedule is None else np.asarray(spec.guess_schedule[k], np.int64)
        if len(lc) != T or len(gc) != T:
            raise ConfigError(f"student {k}: class schedule length differs from sequence length {T}")
        if lc.max() >= p.num_learn_classes or gc.max() >= p.num_guess_classes:
            raise ConfigError(f"student {k}: class schedule exceeds parameter classes")
        states = np.empty(T, np.int8)
        obs = np.empty(T, np.int8)
        _simulate(u[0], u[1], lc, gc, prior, learns, forgets, guesses, slips, states, obs)
        seqs.append(Sequence(f"s{k}", obs, lc, gc))
        paths.append(states)
    skill = spec.skill
    ds = Dataset({skill: seqs}, {skill: [f"l{i}" for i in range(p.num_learn_classes)]
                                 if p.num_learn_classes > 1 else ["default"]},
                 {skill: [f"g{j}" for j in range(p.num_guess_classes)]
                  if p.num_guess_classes > 1 else ["default"]})
    return ds, {skill: paths}


def find_worst_case_learn_rate(base: Union[ModelParams, float], steps: int, target: float = 0.5,
                               granularity: float = 0.001) -> float:
    """Grid-search the learn rate whose expected mastery after ``steps`` transitions is nearest ``target``.

    Expected mastery follows the transition dynamics alone, starting from the
    prior. Ties go to the smaller learn rate.
    """
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    prior = base.prior if isinstance(base, ModelParams) else float(base)
    forget = base.forgets[0] if isinstance(base, ModelParams) else 0.0
    n = int(round(1.0 / granularity))
    grid = np.linspace(0.0, 1.0, n + 1)
    mastery = np.full_like(grid, prior)
    for _ in range(steps):
        mastery = mastery * (1.0 - forget) + (1.0 - mastery) * grid
    return float(grid[np.argmin(np.abs(mastery - target))])
