"""High-level model object: one call each for fit, predict, evaluate and crossvalidate."""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Optional, Union

from . import crossval as _cv
from .data import (ColumnMap, Dataset, align_labels, apply_multiprior_transform, derive_multipair_classes,
                   detect_columns, ingest, read_rows)
from .em import fit as _fit
from .errors import ConfigError, SchemaError
from .inference import predict_dataset
from .metrics import MetricReport, evaluate as _evaluate
from .params import ModelConfig, ModelDocument, deserialize_model, param_rows, serialize_model

log = logging.getLogger(__name__)

_VARIANTS = ("multigs", "multilearn", "multipair", "multiprior", "forgets")


def resolve_columns(header, cfg: ModelConfig, columns: Optional[ColumnMap | dict] = None) -> ColumnMap:
    """Column map for a file: explicit map, else auto-detection, plus the class columns the variants need."""
    if isinstance(columns, dict):
        if {"student", "skill", "correct", "order"} <= set(columns):
            columns = ColumnMap(**columns)
        else:
            base = detect_columns(header)
            if base is None:
                raise SchemaError("column layout not recognised; a partial map needs auto-detection to succeed")
            columns = replace(base, **columns)
    cmap = columns or detect_columns(header)
    if cmap is None:
        raise SchemaError("no known column layout detected; pass an explicit column map")

    def pick(flag, what):
        if not flag:
            return None
        if flag is True:
            if cmap.default_guess_class is None:
                raise SchemaError(f"{what} needs a column name: this layout has no default class column")
            return cmap.default_guess_class
        return flag

    return replace(cmap,
                   guess_class=pick(cfg.multigs, "multigs") or cmap.guess_class,
                   learn_class=pick(cfg.multilearn, "multilearn") or cmap.learn_class,
                   item=pick(cfg.multipair, "multipair") or cmap.item)


def prepare(data: Union[str, Path, Dataset], cfg: ModelConfig, columns=None,
            skills: Optional[Iterable[str]] = None) -> Dataset:
    """Load (if a path) and apply the variant transforms ``cfg`` asks for."""
    if isinstance(data, Dataset):
        ds = data if skills is None else data.only(skills)
    else:
        header, _ = read_rows(data)
        ds = ingest(data, resolve_columns(header, cfg, columns), skills)
    if skills is not None and not ds.skills:
        raise SchemaError(f"none of the requested skills are present: {list(skills)}")
    if cfg.multiprior:
        ds = apply_multiprior_transform(ds)
    if cfg.multipair:
        ds = derive_multipair_classes(ds)
    return ds


class Model:
    """Fit/predict/evaluate/crossvalidate front end.

    Keyword arguments are ``ModelConfig`` fields; variant flags may also be
    given per call to ``fit`` and ``crossvalidate``.
    """

    def __init__(self, **kwargs):
        self.config = ModelConfig(**kwargs)
        self.doc: Optional[ModelDocument] = None
        self.columns = None
        self.fit_results = {}

    def _config(self, overrides) -> ModelConfig:
        unknown = set(overrides) - set(ModelConfig.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown options: {', '.join(sorted(unknown))}")
        return replace(self.config, **overrides)

    def fit(self, data=None, *, data_path=None, skills=None, columns=None, **overrides) -> "Model":
        cfg = self._config(overrides)
        ds = prepare(data if data is not None else data_path, cfg, columns, skills)
        self.fit_results = _fit(ds, cfg)
        variants = {k: getattr(cfg, k) for k in _VARIANTS}
        self.doc = ModelDocument(
            {k: r.params for k, r in self.fit_results.items()},
            {k: list(ds.learn_labels[k]) for k in self.fit_results},
            {k: list(ds.guess_labels[k]) for k in self.fit_results},
            variants,
        )
        self.config = cfg
        self.columns = columns
        return self

    def _require_fit(self):
        if self.doc is None:
            raise ConfigError("model is not fitted")

    def _variant_config(self) -> ModelConfig:
        return replace(self.config, **{k: self.doc.variants.get(k, False) for k in _VARIANTS}, fixed_init=None)

    def prepare(self, data=None, *, data_path=None, skills=None, columns=None) -> Dataset:
        """Load data the way the fitted model expects it, with class ids mapped to the model's."""
        self._require_fit()
        ds = prepare(data if data is not None else data_path, self._variant_config(),
                     columns or self.columns, skills)
        unknown = [k for k in ds.skills if k not in self.doc.params]
        if unknown:
            log.warning("no fitted parameters for skills %s; they are ignored", unknown)
            ds = ds.only(k for k in ds.skills if k in self.doc.params)
        if not ds.skills:
            raise SchemaError("data holds none of the fitted skills")
        return align_labels(ds, self.doc.learn_labels, self.doc.guess_labels)

    def predict(self, data=None, **kwargs):
        """Returns (dataset, skill -> list of PredictionTrace)."""
        ds = self.prepare(data, **kwargs)
        return ds, predict_dataset(self.doc.params, ds)

    def evaluate(self, data=None, *, metric=None, **kwargs) -> MetricReport:
        ds = self.prepare(data, **kwargs)
        return _evaluate(self.doc.params, ds, metric)

    def crossvalidate(self, data=None, *, data_path=None, skills=None, columns=None, folds=5,
                      metric=None, fold_assignment=None, **overrides) -> MetricReport:
        cfg = self._config(overrides)
        ds = prepare(data if data is not None else data_path, cfg, columns, skills)
        return _cv.crossvalidate(ds, cfg, folds, metric, fold_assignment)

    def params(self):
        """Rows of (skill, param, class, value)."""
        self._require_fit()
        return list(param_rows(self.doc))

    def save(self, path):
        self._require_fit()
        Path(path).write_text(serialize_model(self.doc), encoding="utf-8")

    @classmethod
    def load(cls, path, **kwargs) -> "Model":
        model = cls(**kwargs)
        model.doc = deserialize_model(Path(path).read_text(encoding="utf-8"))
        return model
