"""Forward-backward passes, expectation accumulation and multi-restart EM."""

from __future__ import annotations

import logging
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .data import Dataset, Sequence
from .errors import ConfigError, DegenerateError, FitError
from .params import ModelConfig, ModelParams, build_transition_set, init_params, state_prior, validate_params

log = logging.getLogger(__name__)


def emission_likelihood(p: ModelParams, obs: int, guess_class: int) -> np.ndarray:
    """[P(obs | not learned), P(obs | learned)]."""
    g, s = p.guesses[guess_class], p.slips[guess_class]
    return np.array([g, 1.0 - s]) if obs == 1 else np.array([1.0 - g, s])


@dataclass
class AlphaTable:
    alpha: np.ndarray  # (T, 2) filtered state posteriors
    c: np.ndarray  # (T,) P(obs_t | obs_<t)
    loglik: float


@dataclass
class SufficientStats:
    """Expected counts gathered over one or more sequences.

    ``trans[i, a, b]``: expected transitions from state a to state b under learn class i.
    ``emit[j, a, o]``: expected observations o in state a under guess class j.
    """

    trans: np.ndarray
    emit: np.ndarray
    prior_sum: float = 0.0
    num_sequences: int = 0
    loglik: float = 0.0

    @classmethod
    def zeros(cls, m, n):
        return cls(np.zeros((m, 2, 2)), np.zeros((n, 2, 2)))

    def __add__(self, other):
        return SufficientStats(self.trans + other.trans, self.emit + other.emit,
                               self.prior_sum + other.prior_sum, self.num_sequences + other.num_sequences,
                               self.loglik + other.loglik)


@dataclass
class ExpectationTables:
    gamma: np.ndarray  # (T, 2)
    xi: np.ndarray  # (T-1, 2, 2), xi[t, a, b] = P(L_t = a, L_{t+1} = b | all obs)
    stats: SufficientStats


@dataclass
class FitResult:
    params: ModelParams
    logliks: list  # final log-likelihood per restart
    iterations: list
    converged: list
    traces: list = field(repr=False, default_factory=list)
    best_restart: int = 0
    learn_seen: tuple = ()
    guess_seen: tuple = ()


# -- per-sequence reference passes -------------------------------------------

def _check(p, seq):
    problems = validate_params(p)
    if problems:
        raise ConfigError("; ".join(problems))
    if seq.learn_classes[1:].max(initial=0) >= p.num_learn_classes or seq.guess_classes.max() >= p.num_guess_classes:
        raise ConfigError(f"student {seq.student!r}: class index exceeds parameter classes")


def _step_likelihood(p, seq, t):
    if not seq.mask[t]:
        return np.ones(2)
    return emission_likelihood(p, int(seq.obs[t]), int(seq.guess_classes[t]))


def forward(p: ModelParams, seq: Sequence) -> AlphaTable:
    """Scaled forward recursion; ``alpha[t]`` is the posterior after observing step t.

    Unscored (masked) steps contribute no evidence.
    """
    _check(p, seq)
    A = build_transition_set(p)
    T = len(seq)
    alpha = np.empty((T, 2))
    c = np.empty(T)
    pred = state_prior(p)
    for t in range(T):
        if t > 0:
            pred = A[seq.learn_classes[t]] @ alpha[t - 1]
        joint = pred * _step_likelihood(p, seq, t)
        c[t] = joint.sum()
        if not c[t] > 0:
            raise DegenerateError(f"student {seq.student!r}: observation at step {t} has zero probability", step=t)
        alpha[t] = joint / c[t]
    return AlphaTable(alpha, c, float(np.log(c).sum()))


def e_step(p: ModelParams, seq: Sequence) -> ExpectationTables:
    fw = forward(p, seq)
    A = build_transition_set(p)
    T = len(seq)
    beta = np.ones((T, 2))
    xi = np.empty((max(T - 1, 0), 2, 2))
    for t in range(T - 2, -1, -1):
        w = _step_likelihood(p, seq, t + 1) * beta[t + 1] / fw.c[t + 1]
        At = A[seq.learn_classes[t + 1]]
        beta[t] = At.T @ w
        xi[t] = fw.alpha[t][:, None] * At.T * w[None, :]
    gamma = fw.alpha * beta

    stats = SufficientStats.zeros(p.num_learn_classes, p.num_guess_classes)
    for t in range(T - 1):
        stats.trans[seq.learn_classes[t + 1]] += xi[t]
    for t in range(T):
        if seq.mask[t]:
            stats.emit[seq.guess_classes[t], :, seq.obs[t]] += gamma[t]
    stats.prior_sum = float(gamma[0, 1])
    stats.num_sequences = 1
    stats.loglik = fw.loglik
    return ExpectationTables(gamma, xi, stats)


def m_step(stats: SufficientStats, previous: ModelParams, forgets: bool = True):
    """Maximize expected complete-data log-likelihood.

    Returns (params, unvisited) where ``unvisited`` lists parameter paths that
    kept their previous value because their class had no expected visits.
    """
    if stats.num_sequences < 1:
        raise FitError("m_step needs at least one accumulated sequence")
    unvisited = []

    def ratio(num, den, prev, path):
        if den > 0:
            return min(max(num / den, 0.0), 1.0)
        unvisited.append(path)
        return prev

    learns, fgts, guesses, slips = [], [], [], []
    for i, tr in enumerate(stats.trans):
        learns.append(ratio(tr[0, 1], tr[0, 0] + tr[0, 1], previous.learns[i], f"learns[{i}]"))
        if forgets:
            fgts.append(ratio(tr[1, 0], tr[1, 0] + tr[1, 1], previous.forgets[i], f"forgets[{i}]"))
        else:
            fgts.append(0.0)
    for j, em in enumerate(stats.emit):
        guesses.append(ratio(em[0, 1], em[0, 0] + em[0, 1], previous.guesses[j], f"guesses[{j}]"))
        slips.append(ratio(em[1, 0], em[1, 0] + em[1, 1], previous.slips[j], f"slips[{j}]"))
    prior = min(max(stats.prior_sum / stats.num_sequences, 0.0), 1.0)
    return ModelParams(prior, learns, fgts, guesses, slips), unvisited


# -- fast kernel ---------------------------------------------------------------

@dataclass
class PackedSkill:
    """Concatenated per-step arrays for all sequences of one skill."""

    obs: np.ndarray
    learn_classes: np.ndarray
    guess_classes: np.ndarray
    mask: np.ndarray
    starts: np.ndarray
    m: int
    n: int

    @property
    def num_sequences(self):
        return len(self.starts) - 1

    @property
    def max_len(self):
        return int(np.diff(self.starts).max()) if self.num_sequences else 0


def pack(seqs, m, n) -> PackedSkill:
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    starts = np.zeros(len(seqs) + 1, dtype=np.int64)
    np.cumsum(lengths, out=starts[1:])
    cat = (lambda f, dt: np.concatenate([getattr(s, f) for s in seqs]).astype(dt)) if seqs else \
        (lambda f, dt: np.zeros(0, dt))
    return PackedSkill(cat("obs", np.int8), cat("learn_classes", np.int64), cat("guess_classes", np.int64),
                       cat("mask", np.bool_), starts, m, n)


@numba.njit(cache=True, nogil=True)
def _accumulate(obs, lcs, gcs, mask, starts, prior, learns, forgets, guesses, slips,
                trans, emit, alpha, cs):
    trans[:] = 0.0
    emit[:] = 0.0
    loglik = 0.0
    prior_sum = 0.0
    for s in range(len(starts) - 1):
        a = starts[s]
        T = starts[s + 1] - a
        for t in range(T):
            k = a + t
            if t == 0:
                p0 = 1.0 - prior
                p1 = prior
            else:
                i = lcs[k]
                q0 = alpha[t - 1, 0]
                q1 = alpha[t - 1, 1]
                p0 = (1.0 - learns[i]) * q0 + forgets[i] * q1
                p1 = learns[i] * q0 + (1.0 - forgets[i]) * q1
            if mask[k]:
                g = gcs[k]
                if obs[k] == 1:
                    p0 *= guesses[g]
                    p1 *= 1.0 - slips[g]
                else:
                    p0 *= 1.0 - guesses[g]
                    p1 *= slips[g]
            c = p0 + p1
            if not c > 0.0:
                return loglik, prior_sum, k
            alpha[t, 0] = p0 / c
            alpha[t, 1] = p1 / c
            cs[t] = c
            loglik += math.log(c)
        b0 = 1.0
        b1 = 1.0
        for t in range(T - 1, -1, -1):
            k = a + t
            if mask[k]:
                g = gcs[k]
                o = obs[k]
                emit[g, 0, o] += alpha[t, 0] * b0
                emit[g, 1, o] += alpha[t, 1] * b1
            if t == 0:
                prior_sum += alpha[0, 1] * b1
                break
            if mask[k]:
                g = gcs[k]
                if obs[k] == 1:
                    e0 = guesses[g]
                    e1 = 1.0 - slips[g]
                else:
                    e0 = 1.0 - guesses[g]
                    e1 = slips[g]
            else:
                e0 = 1.0
                e1 = 1.0
            w0 = e0 * b0 / cs[t]
            w1 = e1 * b1 / cs[t]
            i = lcs[k]
            a00 = 1.0 - learns[i]
            a10 = learns[i]
            a01 = forgets[i]
            a11 = 1.0 - forgets[i]
            q0 = alpha[t - 1, 0]
            q1 = alpha[t - 1, 1]
            trans[i, 0, 0] += q0 * a00 * w0
            trans[i, 0, 1] += q0 * a10 * w1
            trans[i, 1, 0] += q1 * a01 * w0
            trans[i, 1, 1] += q1 * a11 * w1
            b0 = a00 * w0 + a10 * w1
            b1 = a01 * w0 + a11 * w1
    return loglik, prior_sum, -1


class Workspace:
    def __init__(self, packed: PackedSkill):
        self.packed = packed
        self.alpha = np.empty((max(packed.max_len, 1), 2))
        self.cs = np.empty(max(packed.max_len, 1))

    def stats(self, p: ModelParams) -> SufficientStats:
        pk = self.packed
        prior, learns, forgets, guesses, slips = p.arrays()
        out = SufficientStats.zeros(pk.m, pk.n)
        loglik, prior_sum, bad = _accumulate(
            pk.obs, pk.learn_classes, pk.guess_classes, pk.mask, pk.starts,
            prior, learns, forgets, guesses, slips, out.trans, out.emit, self.alpha, self.cs)
        if bad >= 0:
            raise DegenerateError(f"observation at flat step {bad} has zero probability", step=int(bad))
        out.prior_sum = prior_sum
        out.num_sequences = pk.num_sequences
        out.loglik = loglik
        return out


def accumulate(p: ModelParams, seqs, m=None, n=None) -> SufficientStats:
    """Sufficient statistics summed over ``seqs`` in order (kernel path)."""
    m = p.num_learn_classes if m is None else m
    n = p.num_guess_classes if n is None else n
    return Workspace(pack(list(seqs), m, n)).stats(p)


def log_likelihood(p: ModelParams, ds: Dataset) -> float:
    total = 0.0
    for skill, seqs in ds.skills.items():
        if seqs:
            total += accumulate(p, seqs).loglik
    return total


# -- EM driver ---------------------------------------------------------------

def restart_rng(seed: int, skill: str, restart: int) -> np.random.Generator:
    """Generator for one restart: SeedSequence over (seed, crc32(skill), restart)."""
    key = zlib.crc32(skill.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, key, restart]))


def run_em(ws: Workspace, init: ModelParams, cfg: ModelConfig):
    """One EM run. Returns (params, trace, iterations, converged).

    ``trace[-1]`` is the log-likelihood of the returned params.
    """
    params = init
    trace = []
    converged = False
    iterations = 0
    for it in range(cfg.max_iterations):
        stats = ws.stats(params)
        trace.append(stats.loglik)
        if it > 0 and trace[-1] - trace[-2] < cfg.convergence_tol:
            converged = True
            break
        params, _ = m_step(stats, params, forgets=cfg.forgets)
        iterations += 1
        log.debug("iteration %d loglik %.6f", it, stats.loglik)
    else:
        trace.append(ws.stats(params).loglik)
    return params, trace, iterations, converged


def _check_variants(ds, skill, cfg):
    m, n = ds.num_classes(skill)
    if m > 1 and not (cfg.multilearn or cfg.multipair or cfg.multiprior):
        raise ConfigError(f"skill {skill!r} has {m} learn classes but no learn-class variant is enabled")
    if n > 1 and not cfg.multigs:
        raise ConfigError(f"skill {skill!r} has {n} guess classes but multigs is off")
    return m, n


def _restart_job(ws, skill, m, n, cfg, r):
    init = init_params(cfg, m, n, restart_rng(cfg.seed, skill, r), skill=skill)
    try:
        return run_em(ws, init, cfg)
    except DegenerateError as exc:
        log.warning("skill %r restart %d degenerate: %s", skill, r, exc)
        return None


def fit(ds: Dataset, cfg: ModelConfig) -> dict:
    """Fit every skill; returns skill -> FitResult (empty skills are skipped)."""
    jobs = []
    workspaces = {}
    for skill, seqs in ds.skills.items():
        if not seqs:
            log.warning("skill %r has no sequences; skipped", skill)
            continue
        m, n = _check_variants(ds, skill, cfg)
        workspaces[skill] = (Workspace(pack(seqs, m, n)), m, n)
        # restarts carry their own RNG, so a fresh workspace per job keeps threads independent
        jobs.extend((skill, r) for r in range(cfg.num_restarts))
    if not jobs:
        raise FitError("dataset has no sequences")

    def run(job):
        skill, r = job
        ws, m, n = workspaces[skill]
        if cfg.parallel:
            ws = Workspace(ws.packed)
        return _restart_job(ws, skill, m, n, cfg, r)

    if cfg.parallel:
        workers = cfg.threads or os.cpu_count() or 1
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(job) for job in jobs]

    results = {}
    for skill in workspaces:
        runs = [o for (s, _), o in zip(jobs, outcomes) if s == skill]
        if all(o is None for o in runs):
            raise FitError(f"skill {skill!r}: every restart hit a zero-probability observation")
        finals = [o[1][-1] if o is not None else -math.inf for o in runs]
        best = int(np.argmax(finals))
        params = runs[best][0]
        ws = workspaces[skill][0]
        stats = ws.stats(params)
        results[skill] = FitResult(
            params=params,
            logliks=finals,
            iterations=[o[2] if o is not None else 0 for o in runs],
            converged=[o[3] if o is not None else False for o in runs],
            traces=[o[1] if o is not None else [] for o in runs],
            best_restart=best,
            learn_seen=tuple(bool(v) for v in stats.trans.sum(axis=(1, 2)) > 0),
            guess_seen=tuple(bool(v) for v in stats.emit.sum(axis=(1, 2)) > 0),
        )
        log.info("skill %r: best restart %d loglik %.4f", skill, best, finals[best])
    return results


def fit_skill(seqs, cfg: ModelConfig, skill: str = "skill", m: int = 1, n: int = 1) -> FitResult:
    """Convenience wrapper fitting a bare list of sequences."""
    ds = Dataset({skill: list(seqs)}, {skill: [f"c{i}" for i in range(m)]}, {skill: [f"c{j}" for j in range(n)]})
    return fit(ds, cfg)[skill]
