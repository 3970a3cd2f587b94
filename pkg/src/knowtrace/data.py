"""Response sequences, datasets and ingestion of delimited tutor logs."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence as Seq, Union

import numpy as np

from .errors import AlignmentError, AmbiguousColumnsError, EmptyDatasetError, SchemaError

log = logging.getLogger(__name__)

DEFAULT_LABEL = "default"
PAIR_START = "<start>"
MULTIPRIOR_LABELS = ("high_prior", "low_prior", "default")


def _frozen(values, dtype):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Sequence:
    """One student's chronologically ordered responses on one skill.

    ``learn_classes[t]`` selects the transition from step t-1 into step t;
    ``learn_classes[0]`` is never used by a transition. ``mask[t]`` is False
    for synthetic steps that must not be scored.
    """

    student: str
    obs: np.ndarray
    learn_classes: np.ndarray = None
    guess_classes: np.ndarray = None
    mask: np.ndarray = None
    items: Optional[tuple] = None

    def __post_init__(self):
        n = len(self.obs)
        set_ = object.__setattr__
        set_(self, "obs", _frozen(self.obs, np.int8))
        for name, default in (("learn_classes", 0), ("guess_classes", 0)):
            value = getattr(self, name)
            set_(self, name, _frozen(np.full(n, default) if value is None else value, np.int64))
        set_(self, "mask", _frozen(np.ones(n, dtype=bool) if self.mask is None else self.mask, bool))
        if n < 1:
            raise AlignmentError(f"student {self.student!r}: empty sequence")
        if not (len(self.learn_classes) == len(self.guess_classes) == len(self.mask) == n):
            raise AlignmentError(f"student {self.student!r}: per-step lists differ in length")
        if self.items is not None and len(self.items) != n:
            raise AlignmentError(f"student {self.student!r}: {len(self.items)} item labels for {n} steps")
        if np.any((self.obs != 0) & (self.obs != 1)):
            raise SchemaError(f"student {self.student!r}: observations must be 0 or 1")

    def __len__(self):
        return len(self.obs)

    def __eq__(self, other):
        if not isinstance(other, Sequence):
            return NotImplemented
        return (self.student == other.student and self.items == other.items
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("obs", "learn_classes", "guess_classes", "mask")))


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_dropped: int = 0
    skills: list = field(default_factory=list)

    def text(self) -> str:
        return (f"rows_read\t{self.rows_read}\nrows_dropped\t{self.rows_dropped}\n"
                f"skills_found\t{len(self.skills)}\n")


@dataclass
class Dataset:
    """Skill name -> sequences, with per-skill class dictionaries (index = class id)."""

    skills: dict = field(default_factory=dict)
    learn_labels: dict = field(default_factory=dict)
    guess_labels: dict = field(default_factory=dict)
    report: Optional[IngestReport] = None

    def __post_init__(self):
        for skill, seqs in self.skills.items():
            self.learn_labels.setdefault(skill, [DEFAULT_LABEL])
            self.guess_labels.setdefault(skill, [DEFAULT_LABEL])
            students = [s.student for s in seqs]
            if len(set(students)) != len(students):
                raise SchemaError(f"skill {skill!r}: duplicate student identifiers")
            m, n = len(self.learn_labels[skill]), len(self.guess_labels[skill])
            for s in seqs:
                if s.learn_classes.max() >= m or s.guess_classes.max() >= n or \
                        s.learn_classes.min() < 0 or s.guess_classes.min() < 0:
                    raise SchemaError(f"skill {skill!r}, student {s.student!r}: class index out of range")

    def num_classes(self, skill):
        return len(self.learn_labels[skill]), len(self.guess_labels[skill])

    def num_responses(self, skill=None, scored_only=True) -> int:
        names = self.skills if skill is None else [skill]
        total = 0
        for name in names:
            for s in self.skills[name]:
                total += int(s.mask.sum()) if scored_only else len(s)
        return total

    def subset(self, skill: str, students: Iterable[str]) -> "Dataset":
        """A single-skill dataset restricted to ``students`` (kept in original order)."""
        keep = set(students)
        return Dataset(
            {skill: [s for s in self.skills[skill] if s.student in keep]},
            {skill: list(self.learn_labels[skill])},
            {skill: list(self.guess_labels[skill])},
        )

    def only(self, skills: Iterable[str]) -> "Dataset":
        names = [k for k in self.skills if k in set(skills)]
        return Dataset({k: self.skills[k] for k in names},
                       {k: list(self.learn_labels[k]) for k in names},
                       {k: list(self.guess_labels[k]) for k in names}, self.report)


# -- column mapping ----------------------------------------------------------

Column = Union[str, int]


@dataclass(frozen=True)
class ColumnMap:
    """Where to find each field; names or zero-based positions."""

    student: Column
    skill: Column
    correct: Column
    order: Column
    learn_class: Optional[Column] = None
    guess_class: Optional[Column] = None
    item: Optional[Column] = None
    default_guess_class: Optional[str] = None
    dialect: Optional[str] = None

    def __post_init__(self):
        used = [c for c in (self.student, self.skill, self.correct, self.order) if c is not None]
        if len(used) != 4:
            raise SchemaError("column map needs student, skill, correct and order columns")
        if len(set(used)) != len(used):
            raise SchemaError(f"column map assigns one column twice: {used}")


DIALECTS = {
    "assistments": ColumnMap(student="user_id", skill="skill_name", correct="correct", order="order_id",
                             default_guess_class="template_id", dialect="assistments"),
    "cognitive_tutor": ColumnMap(student="Anon Student Id", skill="KC(Default)",
                                 correct="Correct First Attempt", order="Row", dialect="cognitive_tutor"),
}


def detect_columns(header: Seq[str]) -> Optional[ColumnMap]:
    """Match a header against the known dialects; None when nothing matches."""
    if not header:
        raise SchemaError("empty header")
    cols = set(header)
    hits = []
    for name, cmap in DIALECTS.items():
        # a single signature column is enough to flag a clash
        signature = {cmap.student, cmap.skill, cmap.correct, cmap.order}
        if cols & signature:
            hits.append((name, signature <= cols))
    if len(hits) > 1:
        raise AmbiguousColumnsError(
            "header matches several dialects: " + ", ".join(name for name, _ in hits))
    for name, complete in hits:
        if complete:
            return DIALECTS[name]
    return None


def _sniff_delimiter(path, first_line):
    ext = os.path.splitext(path)[1].lower()
    if ext in (".tsv", ".tab"):
        return "\t"
    if ext == ".csv":
        return ","
    return "\t" if first_line.count("\t") > first_line.count(",") else ","


def _parse_binary(value):
    try:
        v = float(value)
    except (TypeError, ValueError):
        return None
    if v == 1.0:
        return 1
    if v == 0.0:
        return 0
    return None


def _order_key(value, where):
    try:
        return float(value)
    except ValueError:
        raise SchemaError(f"{where}: order value {value!r} is not numeric") from None


def read_rows(path, delimiter=None):
    """Header and rows of a delimited UTF-8 file."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            first = fh.readline()
            fh.seek(0)
            delim = delimiter or _sniff_delimiter(str(path), first)
            reader = csv.reader(fh, delimiter=delim)
            header = next(reader, None)
            rows = list(reader)
    except (OSError, UnicodeDecodeError) as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if header is None:
        raise EmptyDatasetError(f"{path}: file is empty")
    return header, rows


def ingest(path, cmap: Optional[ColumnMap] = None, skills: Optional[Iterable[str]] = None,
           delimiter: Optional[str] = None) -> Dataset:
    """Build a Dataset from a response-per-row file.

    Rows are grouped by (skill, student) and stably sorted by the order
    column; rows whose correctness is not 0/1 are dropped and counted.
    """
    header, rows = read_rows(path, delimiter)
    if cmap is None:
        cmap = detect_columns(header)
        if cmap is None:
            raise SchemaError(f"{path}: no known column layout detected; supply an explicit column map")

    def position(col, what):
        if col is None:
            return None
        if isinstance(col, int):
            if not 0 <= col < len(header):
                raise SchemaError(f"{what} column position {col} out of range")
            return col
        try:
            return header.index(col)
        except ValueError:
            raise SchemaError(f"{path}: missing {what} column {col!r}") from None

    i_student = position(cmap.student, "student")
    i_skill = position(cmap.skill, "skill")
    i_correct = position(cmap.correct, "correct")
    i_order = position(cmap.order, "order")
    i_learn = position(cmap.learn_class, "learn class")
    i_guess = position(cmap.guess_class, "guess class")
    i_item = position(cmap.item, "item")
    wanted = None if skills is None else set(skills)

    report = IngestReport()
    groups: dict = {}
    learn_dicts: dict = {}
    guess_dicts: dict = {}
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        report.rows_read += 1
        if len(row) < len(header):
            report.rows_dropped += 1
            continue
        skill = row[i_skill]
        if wanted is not None and skill not in wanted:
            continue
        correct = _parse_binary(row[i_correct])
        if correct is None or skill == "":
            report.rows_dropped += 1
            continue
        ldict = learn_dicts.setdefault(skill, {})
        gdict = guess_dicts.setdefault(skill, {})
        lc = ldict.setdefault(row[i_learn], len(ldict)) if i_learn is not None else 0
        gc = gdict.setdefault(row[i_guess], len(gdict)) if i_guess is not None else 0
        item = row[i_item] if i_item is not None else None
        order = _order_key(row[i_order], f"{path}:{lineno}")
        groups.setdefault(skill, {}).setdefault(row[i_student], []).append((order, correct, lc, gc, item))

    if report.rows_dropped:
        log.info("%s: dropped %d of %d rows", path, report.rows_dropped, report.rows_read)
    if not groups:
        raise EmptyDatasetError(f"{path}: no usable rows")

    ds_skills = {}
    for skill, students in groups.items():
        seqs = []
        for student, steps in students.items():
            steps.sort(key=lambda r: r[0])  # stable: ties keep file order
            seqs.append(Sequence(
                student,
                [r[1] for r in steps],
                [r[2] for r in steps],
                [r[3] for r in steps],
                items=tuple(r[4] for r in steps) if i_item is not None else None,
            ))
        ds_skills[skill] = seqs
    report.skills = list(ds_skills)
    learn_labels = {k: (list(learn_dicts[k]) if i_learn is not None else [DEFAULT_LABEL]) for k in ds_skills}
    guess_labels = {k: (list(guess_dicts[k]) if i_guess is not None else [DEFAULT_LABEL]) for k in ds_skills}
    return Dataset(ds_skills, learn_labels, guess_labels, report)


# -- variant transforms ------------------------------------------------------

def apply_multiprior_transform(ds: Dataset) -> Dataset:
    """Prepend an unscored copy of each student's first response.

    The transition out of that dummy step uses learn class 0 after a correct
    first response and class 1 after an incorrect one; all later transitions
    use class 2.
    """
    out = {}
    for skill, seqs in ds.skills.items():
        new = []
        for s in seqs:
            first = int(s.obs[0])
            lc = np.full(len(s) + 1, 2, dtype=np.int64)
            lc[0] = 0
            lc[1] = 0 if first == 1 else 1
            new.append(Sequence(
                s.student,
                np.concatenate([[first], s.obs]),
                lc,
                np.concatenate([[s.guess_classes[0]], s.guess_classes]),
                np.concatenate([[False], s.mask]),
                None if s.items is None else (s.items[0],) + s.items,
            ))
        out[skill] = new
    return Dataset(out, {k: list(MULTIPRIOR_LABELS) for k in out},
                   {k: list(v) for k, v in ds.guess_labels.items() if k in out}, ds.report)


def derive_multipair_classes(ds: Dataset, items: Optional[Mapping] = None) -> Dataset:
    """Learn classes from consecutive item pairs.

    ``items`` maps (skill, student) to per-step item labels; when omitted the
    labels stored on each sequence are used. Class 0 is reserved for the
    sequence start.
    """
    out, labels = {}, {}
    for skill, seqs in ds.skills.items():
        pairs = {PAIR_START: 0}
        new = []
        for s in seqs:
            seq_items = s.items if items is None else items.get((skill, s.student))
            if seq_items is None:
                raise AlignmentError(f"skill {skill!r}, student {s.student!r}: no item labels")
            if len(seq_items) != len(s):
                raise AlignmentError(
                    f"skill {skill!r}, student {s.student!r}: {len(seq_items)} item labels for {len(s)} steps")
            lc = [0]
            for prev, cur in zip(seq_items[:-1], seq_items[1:]):
                lc.append(pairs.setdefault((str(prev), str(cur)), len(pairs)))
            new.append(replace(s, learn_classes=lc, items=tuple(seq_items)))
        out[skill] = new
        labels[skill] = list(pairs)
    return Dataset(out, labels, {k: list(v) for k, v in ds.guess_labels.items()}, ds.report)


def align_labels(ds: Dataset, learn_labels: Mapping, guess_labels: Mapping) -> Dataset:
    """Re-index class ids against another set of dictionaries (e.g. a fitted model's).

    Labels the target dictionaries do not know map to class 0.
    """
    out, unseen = {}, 0
    for skill, seqs in ds.skills.items():
        lmap = {lab: i for i, lab in enumerate(learn_labels[skill])}
        gmap = {lab: i for i, lab in enumerate(guess_labels[skill])}
        lsrc, gsrc = ds.learn_labels[skill], ds.guess_labels[skill]
        ltab = np.array([lmap.get(lab, -1) for lab in lsrc])
        gtab = np.array([gmap.get(lab, -1) for lab in gsrc])
        new = []
        for s in seqs:
            lc, gc = ltab[s.learn_classes], gtab[s.guess_classes]
            unseen += int((lc[1:] < 0).sum() + (gc < 0).sum())
            new.append(replace(s, learn_classes=np.maximum(lc, 0), guess_classes=np.maximum(gc, 0)))
        out[skill] = new
    if unseen:
        log.warning("%d steps carry class labels unknown to the model; using class 0", unseen)
    return Dataset(out, {k: list(learn_labels[k]) for k in out}, {k: list(guess_labels[k]) for k in out},
                   ds.report)


# -- export ------------------------------------------------------------------

def write_delimited(ds: Dataset, path, delimiter=",", learn_column="learn_class",
                    guess_column="template_id", item_column="item_id"):
    """Write ``ds`` in the response-per-row layout ``ingest`` auto-detects.

    Dummy (unscored) steps are omitted; class columns are written only when a
    skill has more than one class.
    """
    multi_learn = any(len(v) > 1 for v in ds.learn_labels.values())
    multi_guess = any(len(v) > 1 for v in ds.guess_labels.values())
    has_items = any(s.items is not None for seqs in ds.skills.values() for s in seqs)
    header = ["order_id", "user_id", "skill_name", "correct"]
    if multi_guess:
        header.append(guess_column)
    if multi_learn:
        header.append(learn_column)
    if has_items:
        header.append(item_column)
    order = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(header)
        for skill, seqs in ds.skills.items():
            llab, glab = ds.learn_labels[skill], ds.guess_labels[skill]
            for s in seqs:
                for t in range(len(s)):
                    if not s.mask[t]:
                        continue
                    order += 1
                    row = [order, s.student, skill, int(s.obs[t])]
                    if multi_guess:
                        row.append(glab[s.guess_classes[t]])
                    if multi_learn:
                        row.append(llab[s.learn_classes[t]])
                    if has_items:
                        row.append(s.items[t] if s.items is not None else "")
                    w.writerow(row)
