"""Evaluation metrics and per-skill metric reports."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

import numpy as np

from .errors import MetricError
from .inference import predict_dataset
from .params import ModelParams

log = logging.getLogger(__name__)


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise MetricError(f"length mismatch: {pred.shape} predictions vs {truth.shape} labels")
    if pred.size == 0:
        raise MetricError("empty input")
    return pred, truth


def rmse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def accuracy(pred, truth, threshold: float = 0.5) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean((pred >= threshold) == (truth == 1)))


def auc(pred, truth) -> float:
    """Mann-Whitney AUC; tied scores earn half credit."""
    pred, truth = _pair(pred, truth)
    pos = truth == 1
    n_pos = int(pos.sum())
    n_neg = pred.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC undefined: labels contain a single class")
    values, inverse, counts = np.unique(pred, return_inverse=True, return_counts=True)
    # average 1-based rank of each distinct score
    below = np.cumsum(counts) - counts
    ranks = below + (counts + 1) / 2.0
    rank_sum = ranks[inverse][pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def mape(fit: ModelParams, truth: ModelParams) -> dict:
    """Mean absolute percentage error per parameter family.

    Entries whose true value is 0 are skipped; a family with no usable
    entries is left out of the result.
    """
    out = {}
    for name in ("prior", "learns", "guesses", "slips", "forgets"):
        f = np.atleast_1d(np.asarray(getattr(fit, name), dtype=float))
        t = np.atleast_1d(np.asarray(getattr(truth, name), dtype=float))
        if f.shape != t.shape:
            raise MetricError(f"{name}: shape {f.shape} vs {t.shape}")
        keep = t != 0
        if not keep.all():
            log.debug("mape: %d zero-valued %s entries excluded", int((~keep).sum()), name)
        if keep.any():
            out[name] = float(np.mean(np.abs(f[keep] - t[keep]) / t[keep]) * 100.0)
    return out


BUILTIN = {"rmse": rmse, "accuracy": accuracy, "auc": auc}

Metric = Union[str, Callable]


def resolve_metrics(metrics) -> list:
    """(name, fn) pairs; custom callables take (truth, predictions) like sklearn metrics."""
    if metrics is None:
        metrics = ["rmse", "accuracy", "auc"]
    if isinstance(metrics, str) or callable(metrics):
        metrics = [metrics]
    out = []
    for m in metrics:
        if isinstance(m, str):
            key = m.strip().lower()
            if key not in BUILTIN:
                raise MetricError(f"unknown metric {m!r}; available: {', '.join(sorted(BUILTIN))}")
            fn = BUILTIN[key]
            out.append((key, lambda truth, pred, fn=fn: fn(pred, truth)))
        elif callable(m):
            out.append((getattr(m, "__name__", "custom"), m))
        else:
            raise MetricError(f"metric must be a name or a callable, got {m!r}")
    return out


@dataclass
class MetricReport:
    """skill -> {metric: value}. ``overall`` pools every scored response;
    ``weighted`` averages skills by response count."""

    metrics: list
    rows: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    overall: dict = field(default_factory=dict)
    weighted: dict = field(default_factory=dict)

    def value(self, skill, metric):
        return self.rows[skill].get(metric)

    def table(self, include_overall=True) -> str:
        names = list(self.metrics)
        rows = [(skill, self.rows[skill]) for skill in self.rows]
        if include_overall and len(self.rows) > 1:
            rows.append(("(overall)", self.overall))
        skill_w = max([len("skill")] + [len(s) for s, _ in rows])
        col_w = [max(len(n), 12) for n in names]
        lines = ["skill".ljust(skill_w) + "".join(" " + n.rjust(w) for n, w in zip(names, col_w))]
        for skill, vals in rows:
            cells = [_fmt(vals.get(n)).rjust(w) for n, w in zip(names, col_w)]
            lines.append(skill.ljust(skill_w) + "".join(" " + c for c in cells))
        return "\n".join(lines) + "\n"

    def delimited(self, delimiter=",", include_overall=True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        w.writerow(["skill", "responses"] + list(self.metrics))
        for skill, vals in self.rows.items():
            w.writerow([skill, self.counts[skill]] + [_fmt(vals.get(n)) for n in self.metrics])
        if include_overall:
            w.writerow(["(overall)", sum(self.counts.values())] + [_fmt(self.overall.get(n)) for n in self.metrics])
            w.writerow(["(weighted)", sum(self.counts.values())] + [_fmt(self.weighted.get(n)) for n in self.metrics])
        return buf.getvalue()


def _fmt(v):
    return "NA" if v is None else f"{v:.5f}"


def _score(fn, name, truth, pred, where):
    try:
        value = float(fn(truth, pred))
    except MetricError as exc:
        log.warning("%s: %s unavailable (%s)", where, name, exc)
        return None
    if not math.isfinite(value):
        log.warning("%s: %s is not finite", where, name)
        return None
    return value


def report_from_pooled(pooled: Mapping[str, tuple], metrics=None) -> MetricReport:
    """Build a report from skill -> (truth, predictions) arrays of scored steps."""
    resolved = resolve_metrics(metrics)
    report = MetricReport([name for name, _ in resolved])
    for skill, (truth, pred) in pooled.items():
        report.counts[skill] = len(truth)
        if len(truth) == 0:
            report.rows[skill] = {}
            continue
        report.rows[skill] = {name: _score(fn, name, truth, pred, f"skill {skill!r}") for name, fn in resolved}
    if pooled:
        all_truth = np.concatenate([np.asarray(t, float) for t, _ in pooled.values()])
        all_pred = np.concatenate([np.asarray(p, float) for _, p in pooled.values()])
        if len(all_truth):
            report.overall = {name: _score(fn, name, all_truth, all_pred, "overall") for name, fn in resolved}
        for name, _ in resolved:
            pairs = [(report.counts[s], v[name]) for s, v in report.rows.items() if v.get(name) is not None]
            total = sum(c for c, _ in pairs)
            report.weighted[name] = sum(c * x for c, x in pairs) / total if total else None
    return report


def pool_traces(ds, traces) -> dict:
    """skill -> (truth, predictions) over unmasked steps, in sequence order."""
    out = {}
    for skill, seqs in ds.skills.items():
        truth, pred = [], []
        for seq, tr in zip(seqs, traces[skill]):
            keep = np.asarray(seq.mask, dtype=bool)
            truth.append(np.asarray(seq.obs, float)[keep])
            pred.append(np.asarray(tr.predicted_correct)[keep])
        out[skill] = (np.concatenate(truth) if truth else np.zeros(0), np.concatenate(pred) if pred else np.zeros(0))
    return out


def evaluate(models: Mapping[str, ModelParams], ds, metrics=None) -> MetricReport:
    """Predict ``ds`` with per-skill params and score unmasked steps pooled per skill."""
    resolve_metrics(metrics)  # fail fast on unknown names
    traces = predict_dataset(models, ds)
    return report_from_pooled(pool_traces(ds, traces), metrics)
