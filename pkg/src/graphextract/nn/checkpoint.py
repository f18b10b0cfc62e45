"""Self-describing JSON checkpoint container.

Holds the model config, every parameter tensor (row-major float64, base64
of the raw bytes, so round-trips are bit-exact) and training metadata.
Surrogate checkpoints add a ``classifier`` section and a ``provenance``
block on top of the same container.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from graphextract.nn.models import ModelConfig, TrainedModel, build_model

FORMAT = "graphextract-checkpoint-v1"


def _encode_array(arr):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape),
            "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def _decode_array(obj):
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype=np.float64).reshape(obj["shape"]).copy()


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": FORMAT,
        "config": asdict(model.config),
        "params": {path: _encode_array(arr) for path, arr in model.param_items()},
        "metadata": model.metadata,
    }


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format") != FORMAT:
        raise ValueError("not a %s container" % FORMAT)
    cfg = doc["config"]
    cfg["layer_widths"] = tuple(cfg["layer_widths"])
    cfg["fanouts"] = tuple(cfg["fanouts"])
    model = build_model(ModelConfig(**cfg), seed=0)
    model.set_params({path: _decode_array(obj) for path, obj in doc["params"].items()})
    model.metadata = dict(doc.get("metadata", {}))
    return model


def save_model(model: TrainedModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model)) + "\n")
    return path


def load_model(path) -> TrainedModel:
    return model_from_dict(json.loads(Path(path).read_text()))
