"""Multidomain (semantic + topological + temporal) anomaly detection
for 5G core control-plane traffic, with a deterministic synthetic
traffic and attack generator."""

__version__ = "0.1.0"

from .core_types import (
    Attribute,
    ControlMessage,
    EntityRef,
    Label,
    LabelKind,
    MessageFormatError,
    NetworkFunctionKind,
    Protocol,
    flatten_payload,
    parse_jsonl_record,
    read_jsonl,
    serialize_message,
    write_jsonl,
)
from .detector import (
    AnomalyReport,
    Metrics,
    Thresholds,
    calibrate,
    evaluate,
    score_message,
    score_stream,
)
from .pipeline import (
    PipelineConfig,
    PipelineModel,
    load_model,
    model_digest,
    save_model,
    train_pipeline,
)
from .traffic_gen import ScenarioConfig, builtin_templates, dataset_digest, generate_scenario

__all__ = [
    "Attribute",
    "AnomalyReport",
    "ControlMessage",
    "EntityRef",
    "Label",
    "LabelKind",
    "MessageFormatError",
    "Metrics",
    "NetworkFunctionKind",
    "PipelineConfig",
    "PipelineModel",
    "Protocol",
    "ScenarioConfig",
    "Thresholds",
    "builtin_templates",
    "calibrate",
    "dataset_digest",
    "evaluate",
    "flatten_payload",
    "generate_scenario",
    "load_model",
    "model_digest",
    "parse_jsonl_record",
    "read_jsonl",
    "save_model",
    "score_message",
    "score_stream",
    "serialize_message",
    "train_pipeline",
    "write_jsonl",
]
