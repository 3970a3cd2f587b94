"""Bayesian Knowledge Tracing with EM fitting, model variants, synthetic data and cross-validation."""

from .data import ColumnMap, Dataset, Sequence, detect_columns, ingest
from .em import e_step, fit, forward, log_likelihood, m_step
from .errors import KnowTraceError
from .inference import classify_mastery, predict
from .model import Model
from .params import ModelConfig, ModelParams, deserialize_model, serialize_model

__all__ = [
    "ColumnMap", "Dataset", "KnowTraceError", "Model", "ModelConfig", "ModelParams", "Sequence",
    "classify_mastery", "deserialize_model", "detect_columns", "e_step", "fit", "forward", "ingest",
    "log_likelihood", "m_step", "predict", "serialize_model",
]

__version__ = "0.1.0"
