"""JSON persistence: tensors, checkpoints, datasets.

Tensors serialize as {"shape": [...], "values": [flat row-major]}.  Floats
go through Python's repr (shortest round-trip form), so serialize ->
deserialize -> serialize is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .model import ModelConfig, ModelParams
from .sparsity import BlockMask

CHECKPOINT_VERSION = 1


def tensor_to_json(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "values": np.asarray(a).reshape(-1).tolist()}


def tensor_from_json(obj: dict) -> np.ndarray:
    values = np.asarray(obj["values"], dtype=np.float64)
    return values.reshape(obj["shape"])


@dataclass
class Checkpoint:
    config: ModelConfig
    params: ModelParams
    masks: dict[str, BlockMask]
    step: int
    version: int = CHECKPOINT_VERSION


def checkpoint_to_json(ckpt: Checkpoint) -> str:
    doc = {
        "version": ckpt.version,
        "config": asdict(ckpt.config),
        "tensors": {name: tensor_to_json(p) for name, p in ckpt.params.items()},
        "masks": {
            name: {
                "shape": list(m.bits.shape),
                "values": m.bits.reshape(-1).tolist(),
                "block_shape": list(m.block_shape),
            }
            for name, m in ckpt.masks.items()
        },
        "step": ckpt.step,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def checkpoint_from_json(text: str) -> Checkpoint:
    doc = json.loads(text)
    cfg = ModelConfig(**doc["config"])
    params = {name: tensor_from_json(t) for name, t in doc["tensors"].items()}
    masks = {
        name: BlockMask(
            np.asarray(m["values"], dtype=np.uint8).reshape(m["shape"]),
            tuple(m["block_shape"]),
        )
        for name, m in doc["masks"].items()
    }
    return Checkpoint(cfg, params, masks, int(doc["step"]), int(doc["version"]))


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    Path(path).write_text(checkpoint_to_json(ckpt))


def load_checkpoint(path: str | Path) -> Checkpoint:
    return checkpoint_from_json(Path(path).read_text())


def write_jsonl(path: str | Path, records: list[dict]) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
