"""Published JSON Schemas for every subcommand's --json output.

These are the machine-interface contract of the CLI: ``tinyforge --json
<cmd>`` prints exactly one object on stdout that validates against
``CLI_SCHEMAS[<cmd>]`` (draft 2020-12 subset).
"""

_ESTIMATE = {
    "type": "object",
    "required": ["dsp_latency_ms", "nn_latency_ms", "total_latency_ms",
                 "ram_bytes", "flash_bytes", "dsp_ram_bytes", "nn_ram_bytes"],
    "properties": {
        "dsp_latency_ms": {"type": "number"},
        "nn_latency_ms": {"type": "number"},
        "total_latency_ms": {"type": "number"},
        "ram_bytes": {"type": "integer"},
        "flash_bytes": {"type": "integer"},
        "dsp_ram_bytes": {"type": "integer"},
        "nn_ram_bytes": {"type": "integer"},
    },
}

_STATS = {
    "type": "object",
    "required": ["total", "per_class", "per_split", "per_class_split", "duration_s"],
    "properties": {
        "total": {"type": "integer"},
        "per_class": {"type": "object", "additionalProperties": {"type": "integer"}},
        "per_split": {"type": "object", "additionalProperties": {"type": "integer"}},
        "per_class_split": {"type": "object"},
        "duration_s": {"type": "number"},
    },
}

_EVAL_REPORT = {
    "type": "object",
    "required": ["confusion", "accuracy", "per_class_f1"],
    "properties": {
        "confusion": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
        "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "per_class_f1": {"type": "array", "items": {"type": "number"}},
    },
}

_TUNER_ROW = {
    "type": "object",
    "required": ["trial_id", "dsp", "model", "dtype", "accuracy",
                 "latency_dsp_ms", "latency_nn_ms", "latency_total_ms",
                 "ram_dsp_bytes", "ram_nn_bytes", "ram_total_bytes", "flash_bytes"],
}

_CALIBRATION_RESULT = {
    "type": "object",
    "required": ["averaging_window_frames", "threshold", "suppression_frames", "far", "frr"],
    "properties": {
        "averaging_window_frames": {"type": "integer", "minimum": 1},
        "threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "suppression_frames": {"type": "integer", "minimum": 0},
        "far": {"type": "number", "minimum": 0, "maximum": 1},
        "frr": {"type": "number", "minimum": 0, "maximum": 1},
    },
}

CLI_SCHEMAS = {
    "init": {
        "type": "object",
        "required": ["project", "demo"],
        "properties": {"project": {"type": "string"}, "demo": {"type": "boolean"}},
    },
    "ingest": {
        "type": "object",
        "required": ["ingested"],
        "properties": {"ingested": {"type": "array", "items": {"type": "string"}}},
    },
    "split": {"type": "object", "required": ["stats"], "properties": {"stats": _STATS}},
    "stats": {"type": "object", "required": ["stats"], "properties": {"stats": _STATS}},
    "dsp": {
        "type": "object",
        "required": ["impulse", "feature_shape"],
        "properties": {
            "impulse": {"type": "object", "required": ["dsp", "model"]},
            "feature_shape": {"type": "array", "items": {"type": "integer"}},
        },
    },
    "train": {
        "type": "object",
        "required": ["history", "model", "reports"],
        "properties": {
            "history": {
                "type": "object",
                "required": ["loss", "val_accuracy", "lr", "best_epoch"],
            },
            "model": {"type": "string"},
            "reports": {"type": "array", "items": {"type": "string"}},
        },
    },
    "eval": {
        "type": "object",
        "required": ["report", "classes", "files"],
        "properties": {
            "report": _EVAL_REPORT,
            "classes": {"type": "array", "items": {"type": "string"}},
        },
    },
    "quantize": {
        "type": "object",
        "required": ["model", "i8_bytes", "f32_bytes"],
        "properties": {
            "model": {"type": "string"},
            "i8_bytes": {"type": "integer"},
            "f32_bytes": {"type": "integer"},
        },
    },
    "build": {
        "type": "object",
        "required": ["c", "h", "arena_bytes", "dtype"],
        "properties": {
            "c": {"type": "string"},
            "h": {"type": "string"},
            "arena_bytes": {"type": "integer", "minimum": 0},
            "dtype": {"enum": ["f32", "i8"]},
        },
    },
    "estimate": {
        "type": "object",
        "required": ["estimate", "fit", "profile"],
        "properties": {
            "estimate": _ESTIMATE,
            "fit": {
                "type": "object",
                "required": ["fits", "violations"],
                "properties": {
                    "fits": {"type": "boolean"},
                    "violations": {"type": "array", "items": {"type": "string"}},
                },
            },
            "profile": {"type": "string"},
        },
    },
    "tune": {
        "type": "object",
        "anyOf": [
            {"required": ["rows", "files"]},
            {"required": ["applied"]},
        ],
        "properties": {
            "rows": {"type": "array", "items": _TUNER_ROW},
            "files": {"type": "array", "items": {"type": "string"}},
            "applied": {"type": "object"},
        },
    },
    "calibrate": {
        "type": "object",
        "required": ["front", "ga_params", "files"],
        "properties": {
            "front": {"type": "array", "items": _CALIBRATION_RESULT},
            "ga_params": {"type": "object"},
        },
    },
    "run": {
        "type": "object",
        "required": ["probabilities", "dtype"],
        "properties": {
            "probabilities": {"type": "object", "additionalProperties": {"type": "number"}},
            "dtype": {"enum": ["f32", "i8"]},
        },
    },
}
