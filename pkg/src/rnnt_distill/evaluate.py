"""Token error rate: Levenshtein distance over decoded token sequences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .data import Example
from .model import ModelParams, decode_greedy


def levenshtein(a: Sequence[int], b: Sequence[int]) -> int:
    n, m = len(a), len(b)
    if n > m:
        a, b, n, m = b, a, m, n
    current = list(range(n + 1))
    for i in range(1, m + 1):
        previous, current = current, [i] + [0] * n
        for j in range(1, n + 1):
            add, delete = previous[j] + 1, current[j - 1] + 1
            change = previous[j - 1] + (a[j - 1] != b[i - 1])
            current[j] = min(add, delete, change)
    return current[n]


@dataclass(frozen=True)
class UtteranceResult:
    reference: tuple[int, ...]
    hypothesis: tuple[int, ...]
    edits: int


@dataclass(frozen=True)
class EvalReport:
    ter: float
    total_edits: int
    total_tokens: int
    utterances: tuple[UtteranceResult, ...]


def token_error_rate(
    references: Sequence[Sequence[int]], hypotheses: Sequence[Sequence[int]]
) -> EvalReport:
    """Corpus TER: total edit distance over total reference tokens."""
    if len(references) != len(hypotheses):
        raise ValueError("reference and hypothesis counts differ")
    utts = []
    edits = tokens = 0
    for ref, hyp in zip(references, hypotheses):
        d = levenshtein(ref, hyp)
        utts.append(UtteranceResult(tuple(ref), tuple(hyp), d))
        edits += d
        tokens += len(ref)
    ter = edits / tokens if tokens else 0.0
    return EvalReport(ter, edits, tokens, tuple(utts))


def evaluate_model(
    params: ModelParams,
    examples: Sequence[Example],
    max_symbols_per_frame: int = 4,
) -> EvalReport:
    hyps = [decode_greedy(params, ex.features, max_symbols_per_frame) for ex in examples]
    return token_error_rate([ex.labels for ex in examples], hyps)
