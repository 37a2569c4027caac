"""JSON checkpoint container of named tensors."""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from ..io import write_text_atomic
from .loss import FocalConfig
from .model import CnnLstm, ModelConfig

FORMAT = "emgshift-checkpoint"
VERSION = 1


def save_checkpoint(model: CnnLstm, path: str | Path) -> None:
    cfg = dataclasses.asdict(model.cfg)
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "config": cfg,
        "tensors": {
            k: {"shape": list(v.shape), "dtype": str(v.dtype), "values": v.ravel().tolist()}
            for k, v in model.params.items()
        },
    }
    write_text_atomic(path, json.dumps(doc))


def load_checkpoint(path: str | Path) -> CnnLstm:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path}: not a checkpoint")
    if doc.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    cfg = dict(doc["config"])
    cfg["focal"] = FocalConfig(**cfg["focal"])
    cfg["block_dropout"] = tuple(cfg["block_dropout"])
    if cfg["focal"].alpha is not None:
        cfg["focal"] = FocalConfig(cfg["focal"].gamma, tuple(cfg["focal"].alpha))
    params = {k: np.asarray(t["values"], dtype=t["dtype"]).reshape(t["shape"])
              for k, t in doc["tensors"].items()}
    return CnnLstm(ModelConfig(**cfg), params=params)
