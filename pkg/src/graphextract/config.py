"""Run configuration: one JSON document, schema-validated before any work.

Unknown keys are rejected with their full path; command-line flags override
file values.
"""

from __future__ import annotations

import json
from pathlib import Path


class ConfigError(ValueError):
    pass


_NUM = (int, float)

# section -> key -> expected type(s) (dict = nested section)
SCHEMA = {
    "dataset": {"path": str, "name": str},
    "split": {"target_train_fraction": _NUM, "query_fraction": _NUM,
              "test_fraction": _NUM},
    "target": {"kind": str, "embedding_size": int, "epochs": int,
               "batch_size": int, "lr": _NUM, "val_fraction": _NUM},
    "oracle": {"response_type": str, "noise_sigma": _NUM, "budget": int,
               "tsne": {"perplexity": _NUM, "iterations": int, "seed": int,
                        "learning_rate": _NUM}},
    "structure": {"initial_k": int, "edge_cutoff": _NUM, "smoothness": _NUM,
                  "connectivity": _NUM, "sparsity": _NUM, "mixing": _NUM,
                  "head_count": int, "refine_iters": int, "inner_epochs": int,
                  "head_steps": int, "inner_hidden": int, "classifier_lr": _NUM,
                  "head_lr": _NUM},
    "attack": {"scenario": str, "surrogate_kind": str, "encoder_hidden": int,
               "encoder_epochs": int, "classifier_hidden": int,
               "classifier_epochs": int, "lr": _NUM, "batch_size": int,
               "budget_fraction": _NUM},
    "grid": {"targets": list, "surrogates": list, "responses": list,
             "scenario_type": str, "repetitions": int, "seeds": list},
    "sweep": {"axis": str, "values": list, "repetitions": int,
              "target_kind": str, "surrogate_kind": str, "scenario": str},
    "out_dir": str,
    "seed": int,
}


def _check(doc, schema, path=""):
    if not isinstance(doc, dict):
        raise ConfigError("%s: expected an object" % (path or "config"))
    for key, value in doc.items():
        where = "%s.%s" % (path, key) if path else key
        if key not in schema:
            raise ConfigError("unknown config key %r" % where)
        expected = schema[key]
        if isinstance(expected, dict):
            _check(value, expected, where)
        elif expected is list:
            if not isinstance(value, list):
                raise ConfigError("%s: expected a list" % where)
        elif not isinstance(value, expected) or isinstance(value, bool):
            raise ConfigError("%s: expected %s, got %r"
                              % (where, getattr(expected, "__name__", expected), value))


def validate_config(doc: dict) -> dict:
    _check(doc, SCHEMA)
    return doc


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config file not found: %s" % p)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config is not valid JSON: %s" % exc)
    return validate_config(doc)


def section(cfg: dict, name: str) -> dict:
    return dict(cfg.get(name, {}))
