"""BKT parameter containers, validation, random initialization and the model document."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, ParseError

SCHEMA = "knowtrace.model/1"

# Upper bounds of the uniform initialization draws.
GUESS_SLIP_INIT_MAX = 0.5
FORGET_INIT_MAX = 0.3

# Starting values for the two virtual-prior transitions of the multiprior variant.
MULTIPRIOR_HIGH = 0.90
MULTIPRIOR_LOW = 0.15

Label = Union[str, tuple]


@dataclass(frozen=True)
class ModelParams:
    """One skill's parameters.

    ``learns``/``forgets`` are indexed by learn class, ``guesses``/``slips``
    by guess class.
    """

    prior: float
    learns: tuple
    forgets: tuple
    guesses: tuple
    slips: tuple

    def __post_init__(self):
        for name in ("learns", "forgets", "guesses", "slips"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "prior", float(self.prior))

    @property
    def num_learn_classes(self) -> int:
        return len(self.learns)

    @property
    def num_guess_classes(self) -> int:
        return len(self.guesses)

    def arrays(self):
        """(prior, learns, forgets, guesses, slips) as float64 arrays."""
        return (
            self.prior,
            np.array(self.learns, dtype=np.float64),
            np.array(self.forgets, dtype=np.float64),
            np.array(self.guesses, dtype=np.float64),
            np.array(self.slips, dtype=np.float64),
        )

    @classmethod
    def standard(cls, prior, learn, guess, slip, forget=0.0) -> "ModelParams":
        return cls(prior, (learn,), (forget,), (guess,), (slip,))


def state_prior(p: ModelParams) -> np.ndarray:
    """[P(not L0), P(L0)]."""
    return np.array([1.0 - p.prior, p.prior])


def validate_params(p: ModelParams) -> list[str]:
    """Return every invariant violation as ``"<field path>: <reason>"``; empty means ok."""
    problems = []

    def check(path, value):
        if not isinstance(value, float) or math.isnan(value) or not 0.0 <= value <= 1.0:
            problems.append(f"{path}: {value!r} outside [0, 1]")

    check("prior", p.prior)
    for name in ("learns", "forgets", "guesses", "slips"):
        for i, v in enumerate(getattr(p, name)):
            check(f"{name}[{i}]", v)
    if len(p.learns) != len(p.forgets):
        problems.append(f"forgets: length {len(p.forgets)} != learns length {len(p.learns)}")
    if len(p.guesses) != len(p.slips):
        problems.append(f"slips: length {len(p.slips)} != guesses length {len(p.guesses)}")
    if not p.learns:
        problems.append("learns: at least one learn class required")
    if not p.guesses:
        problems.append("guesses: at least one guess class required")
    return problems


def build_transition_set(p: ModelParams) -> np.ndarray:
    """Column-stochastic matrices, shape (m, 2, 2); ``A[i][to, from]``."""
    learns = np.asarray(p.learns, dtype=np.float64)
    forgets = np.asarray(p.forgets, dtype=np.float64)
    a = np.empty((len(learns), 2, 2))
    a[:, 0, 0] = 1.0 - learns
    a[:, 1, 0] = learns
    a[:, 0, 1] = forgets
    a[:, 1, 1] = 1.0 - forgets
    return a


@dataclass
class ModelConfig:
    """Variant flags and EM controls.

    ``multigs``, ``multilearn`` and ``multipair`` are either a bool or the
    name of the data column holding the class labels; ``True`` means "use the
    detected default column".
    """

    multigs: Union[bool, str] = False
    multilearn: Union[bool, str] = False
    multipair: Union[bool, str] = False
    multiprior: bool = False
    forgets: bool = False
    num_restarts: int = 20
    max_iterations: int = 100
    convergence_tol: float = 1e-3
    seed: int = 0
    parallel: bool = False
    threads: Optional[int] = None
    fixed_init: Optional[Mapping[str, ModelParams] | ModelParams] = None

    def __post_init__(self):
        if self.num_restarts < 1:
            raise ConfigError(f"num_restarts must be >= 1, got {self.num_restarts}")
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.convergence_tol > 0:
            raise ConfigError(f"convergence_tol must be positive, got {self.convergence_tol}")
        learn_sources = [n for n in ("multilearn", "multipair", "multiprior") if getattr(self, n)]
        if len(learn_sources) > 1:
            raise ConfigError(f"{' and '.join(learn_sources)} both define learn classes; pick one")
        if self.multiprior and self.fixed_init is not None:
            inits = self.fixed_init.values() if isinstance(self.fixed_init, Mapping) else [self.fixed_init]
            if any(p.prior != 0.0 for p in inits):
                raise ConfigError("multiprior fixes the prior at 0; an explicit prior initialization is not allowed")

    def variants(self) -> dict:
        return {
            "multigs": self.multigs,
            "multilearn": self.multilearn,
            "multipair": self.multipair,
            "multiprior": self.multiprior,
            "forgets": self.forgets,
        }

    def init_for(self, skill: str) -> Optional[ModelParams]:
        if self.fixed_init is None or isinstance(self.fixed_init, ModelParams):
            return self.fixed_init
        return self.fixed_init.get(skill)


def init_params(config: ModelConfig, m: int, n: int, rng: np.random.Generator,
                skill: Optional[str] = None) -> ModelParams:
    """Draw starting parameters for one EM restart.

    Draw order is prior, learns, guesses, slips, then forgets, so the
    standard model and single-class variants consume identical streams.
    """
    if m < 1 or n < 1:
        raise ConfigError(f"need at least one learn and one guess class, got m={m}, n={n}")
    fixed = config.init_for(skill)
    if fixed is not None:
        if fixed.num_learn_classes != m or fixed.num_guess_classes != n:
            raise ConfigError(
                f"fixed_init has {fixed.num_learn_classes} learn / {fixed.num_guess_classes} guess classes,"
                f" data has {m} / {n}"
            )
        return fixed
    prior = rng.random()
    learns = rng.random(m)
    guesses = rng.random(n) * GUESS_SLIP_INIT_MAX
    slips = rng.random(n) * GUESS_SLIP_INIT_MAX
    forgets = rng.random(m) * FORGET_INIT_MAX if config.forgets else np.zeros(m)
    if config.multiprior:
        prior = 0.0
        learns[:2] = (MULTIPRIOR_HIGH, MULTIPRIOR_LOW)[:m]
        forgets[:2] = 0.0
    return ModelParams(prior, learns, forgets, guesses, slips)


# -- model document ---------------------------------------------------------

@dataclass
class ModelDocument:
    """Fitted parameters for several skills plus the class dictionaries used to fit them."""

    params: dict = field(default_factory=dict)
    learn_labels: dict = field(default_factory=dict)
    guess_labels: dict = field(default_factory=dict)
    variants: dict = field(default_factory=dict)


_SKILL_FIELDS = ("prior", "learns", "forgets", "guesses", "slips", "learn_classes", "guess_classes")
_VARIANT_FIELDS = ("multigs", "multilearn", "multipair", "multiprior", "forgets")


def _label_out(label):
    return list(label) if isinstance(label, tuple) else label


def _label_in(label, where):
    if isinstance(label, list):
        if not all(isinstance(x, str) for x in label):
            raise ParseError(f"{where}: pair labels must hold strings")
        return tuple(label)
    if not isinstance(label, str):
        raise ParseError(f"{where}: label must be a string or a list of strings")
    return label


def serialize_model(doc: ModelDocument) -> str:
    skills = {}
    for skill, p in doc.params.items():
        problems = validate_params(p)
        if problems:
            raise ConfigError(f"cannot serialize skill {skill!r}: " + "; ".join(problems))
        learn_labels = doc.learn_labels.get(skill, ["default"] * p.num_learn_classes)
        guess_labels = doc.guess_labels.get(skill, ["default"] * p.num_guess_classes)
        skills[skill] = {
            "prior": p.prior,
            "learns": list(p.learns),
            "forgets": list(p.forgets),
            "guesses": list(p.guesses),
            "slips": list(p.slips),
            "learn_classes": [_label_out(x) for x in learn_labels],
            "guess_classes": [_label_out(x) for x in guess_labels],
        }
    body = {"schema": SCHEMA, "variants": {k: doc.variants.get(k, False) for k in _VARIANT_FIELDS},
            "skills": skills}
    return json.dumps(body, indent=2, allow_nan=False) + "\n"


def _strict_keys(obj, allowed, where, required=True):
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    for key in obj:
        if key not in allowed:
            raise ParseError(f"{where}: unknown field {key!r}")
    if required:
        for key in allowed:
            if key not in obj:
                raise ParseError(f"{where}: missing field {key!r}")


def _prob_list(value, where):
    if not isinstance(value, list) or not value:
        raise ParseError(f"{where}: expected a non-empty list of numbers")
    out = []
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParseError(f"{where}[{i}]: expected a number")
        out.append(float(v))
    return out


def deserialize_model(text: str) -> ModelDocument:
    if not text.strip():
        raise ParseError("empty model document")
    try:
        body = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    _strict_keys(body, ("schema", "variants", "skills"), "$")
    if body["schema"] != SCHEMA:
        raise ParseError(f"$.schema: unsupported schema {body['schema']!r}")
    _strict_keys(body["variants"], _VARIANT_FIELDS, "$.variants")
    variants = body["variants"]
    for key, val in variants.items():
        if not isinstance(val, (bool, str)):
            raise ParseError(f"$.variants.{key}: expected bool or column name")
    skills = body["skills"]
    if not isinstance(skills, dict):
        raise ParseError("$.skills: expected an object")
    doc = ModelDocument(variants=dict(variants))
    for skill, entry in skills.items():
        where = f"$.skills[{skill!r}]"
        _strict_keys(entry, _SKILL_FIELDS, where)
        prior = entry["prior"]
        if isinstance(prior, bool) or not isinstance(prior, (int, float)):
            raise ParseError(f"{where}.prior: expected a number")
        p = ModelParams(
            float(prior),
            _prob_list(entry["learns"], f"{where}.learns"),
            _prob_list(entry["forgets"], f"{where}.forgets"),
            _prob_list(entry["guesses"], f"{where}.guesses"),
            _prob_list(entry["slips"], f"{where}.slips"),
        )
        problems = validate_params(p)
        if problems:
            raise ParseError(f"{where}: " + "; ".join(problems))
        learn_labels = [_label_in(x, f"{where}.learn_classes[{i}]") for i, x in enumerate(entry["learn_classes"])]
        guess_labels = [_label_in(x, f"{where}.guess_classes[{i}]") for i, x in enumerate(entry["guess_classes"])]
        if len(learn_labels) != p.num_learn_classes or len(guess_labels) != p.num_guess_classes:
            raise ParseError(f"{where}: class label count does not match parameter count")
        doc.params[skill] = p
        doc.learn_labels[skill] = learn_labels
        doc.guess_labels[skill] = guess_labels
    return doc


def with_fallback(p: ModelParams, learn_seen: Sequence[bool], guess_seen: Sequence[bool]) -> ModelParams:
    """Replace parameters of classes never visited during fitting.

    Unseen classes copy class 0 when class 0 was seen, otherwise the first
    seen class.
    """
    def fill(values, seen):
        values = list(values)
        seen = list(seen)
        if all(seen) or not any(seen):
            return values
        src = 0 if seen[0] else seen.index(True)
        return [v if s else values[src] for v, s in zip(values, seen)]

    return replace(
        p,
        learns=tuple(fill(p.learns, learn_seen)),
        forgets=tuple(fill(p.forgets, learn_seen)),
        guesses=tuple(fill(p.guesses, guess_seen)),
        slips=tuple(fill(p.slips, guess_seen)),
    )


def param_rows(doc: ModelDocument):
    """Yield (skill, param, class, value) rows in the parameter-table layout."""
    for skill, p in doc.params.items():
        learn_labels = doc.learn_labels.get(skill, ["default"] * p.num_learn_classes)
        guess_labels = doc.guess_labels.get(skill, ["default"] * p.num_guess_classes)
        yield skill, "prior", "default", p.prior
        for name, labels in (("learns", learn_labels), ("forgets", learn_labels),
                             ("guesses", guess_labels), ("slips", guess_labels)):
            for label, value in zip(labels, getattr(p, name)):
                yield skill, name, label_text(label), value


def label_text(label) -> str:
    return "->".join(label) if isinstance(label, tuple) else str(label)


__all__ = [
    "ModelParams", "ModelConfig", "ModelDocument", "init_params", "validate_params",
    "build_transition_set", "state_prior", "serialize_model", "deserialize_model",
    "with_fallback", "param_rows", "label_text",
]
