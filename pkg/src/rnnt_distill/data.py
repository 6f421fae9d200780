"""Synthetic transduction task: noisy one-hot frames per label token.

Each example draws a label sequence (never blank), then emits every label
as a run of identical one-hot feature vectors plus Gaussian noise.  The
model must learn both the token identity and when to advance.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .serialization import read_jsonl, write_jsonl

SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class SynthTaskSpec:
    vocab_size: int
    min_labels: int
    max_labels: int
    min_frames_per_label: int
    max_frames_per_label: int
    noise: float
    num_examples: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if not 1 <= self.min_labels <= self.max_labels:
            raise ValueError("need 1 <= min_labels <= max_labels")
        if not 1 <= self.min_frames_per_label <= self.max_frames_per_label:
            raise ValueError("need 1 <= min_frames_per_label <= max_frames_per_label")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.num_examples < 10:
            raise ValueError("need at least 10 examples for a split")


@dataclass(frozen=True)
class Example:
    features: np.ndarray  # (T, vocab_size)
    labels: tuple[int, ...]


def synth_example(spec: SynthTaskSpec, rng: np.random.Generator) -> Example:
    n_labels = int(rng.integers(spec.min_labels, spec.max_labels + 1))
    labels = rng.integers(1, spec.vocab_size, size=n_labels)
    frames = []
    for lab in labels:
        reps = int(rng.integers(spec.min_frames_per_label, spec.max_frames_per_label + 1))
        onehot = np.zeros((reps, spec.vocab_size))
        onehot[:, lab] = 1.0
        frames.append(onehot + spec.noise * rng.standard_normal((reps, spec.vocab_size)))
    return Example(np.concatenate(frames, axis=0), tuple(int(x) for x in labels))


def synth_dataset(spec: SynthTaskSpec) -> dict[str, list[Example]]:
    """Deterministic dataset from the spec's seed, split 80/10/10."""
    rng = np.random.default_rng(spec.seed)
    examples = [synth_example(spec, rng) for _ in range(spec.num_examples)]
    n_dev = spec.num_examples // 10
    n_train = spec.num_examples - 2 * n_dev
    return {
        "train": examples[:n_train],
        "dev": examples[n_train : n_train + n_dev],
        "test": examples[n_train + n_dev :],
    }


def _example_to_record(ex: Example) -> dict:
    return {"features": ex.features.tolist(), "labels": list(ex.labels)}


def _example_from_record(rec: dict) -> Example:
    return Example(np.asarray(rec["features"], dtype=np.float64), tuple(rec["labels"]))


def gen_data(spec: SynthTaskSpec, out_dir: str | Path) -> dict[str, Path]:
    """Write train/dev/test JSONL files; byte-identical for identical specs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for split, examples in synth_dataset(spec).items():
        path = out / f"{split}.jsonl"
        write_jsonl(path, [_example_to_record(ex) for ex in examples])
        paths[split] = path
    return paths


def load_split(data_dir: str | Path, split: str) -> list[Example]:
    path = Path(data_dir) / f"{split}.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"dataset split not found: {path}")
    return [_example_from_record(rec) for rec in read_jsonl(path)]
