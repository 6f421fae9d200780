"""Side-by-side cost and value comparison of the full and coarse KL losses.

Verifies the lumping inequality (coarse <= full) on random lattices and
measures peak auxiliary allocation of each loss with tracemalloc: the
coarse loss works on 3-channel lattices, so its footprint must not move
when the vocabulary grows.
"""

from __future__ import annotations

import gc
import tracemalloc
from dataclasses import dataclass

import numpy as np

from .distill import coarse_kl_loss, full_kl_loss, memory_estimate
from .lattice import LogitLattice, TargetSequence, Vocab, coarse_grain, softmax_lattice

COARSE_PEAK_SLACK = 1.05  # coarse peaks must agree across K within 5%
FULL_GROWTH_MIN = 16.0    # full peaks must grow strongly from K=4 to K=512


@dataclass(frozen=True)
class SizeRow:
    vocab_size: int
    full_kl: float
    coarse_kl: float
    full_peak_bytes: int
    coarse_peak_bytes: int


@dataclass(frozen=True)
class KLCompareReport:
    rows: tuple[SizeRow, ...]
    property_draws: int
    property_violations: int
    mem_full_utterance: int
    mem_full_batch1024: int
    mem_coarse_utterance: int

    @property
    def coarse_peak_constant(self) -> bool:
        peaks = [r.coarse_peak_bytes for r in self.rows]
        return max(peaks) <= COARSE_PEAK_SLACK * min(peaks)

    @property
    def full_peak_grows(self) -> bool:
        first, last = self.rows[0], self.rows[-1]
        return last.full_peak_bytes >= FULL_GROWTH_MIN * first.full_peak_bytes

    @property
    def inequality_holds(self) -> bool:
        return self.property_violations == 0 and all(
            r.coarse_kl <= r.full_kl + 1e-9 for r in self.rows
        )

    @property
    def passed(self) -> bool:
        return self.inequality_holds and self.coarse_peak_constant and self.full_peak_grows


def _random_pair(rng: np.random.Generator, T: int, L: int, K: int):
    vocab = Vocab(K)
    target = TargetSequence(rng.integers(1, K, size=L), vocab)
    teacher = softmax_lattice(LogitLattice(rng.normal(scale=1.0, size=(T, L + 1, K))))
    student = softmax_lattice(LogitLattice(rng.normal(scale=1.0, size=(T, L + 1, K))))
    return target, teacher, student


def _measure_peak(fn) -> tuple[float, int]:
    gc.collect()
    tracemalloc.start()
    value = fn()
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    return value, peak


def run_klcompare(
    seed: int = 0,
    sizes: tuple[int, ...] = (4, 64, 512),
    frames: int = 50,
    labels: int = 19,
    property_draws: int = 1000,
) -> KLCompareReport:
    rng = np.random.default_rng(seed)
    rows = []
    for K in sizes:
        target, teacher, student = _random_pair(rng, frames, labels, K)
        t_coarse = coarse_grain(teacher, target)
        s_coarse = coarse_grain(student, target)
        # warm up both paths so allocator pools do not skew the first row
        full_kl_loss(teacher, student)
        coarse_kl_loss(t_coarse, s_coarse)
        full_val, full_peak = _measure_peak(lambda: full_kl_loss(teacher, student))
        coarse_val, coarse_peak = _measure_peak(lambda: coarse_kl_loss(t_coarse, s_coarse))
        rows.append(SizeRow(K, full_val, coarse_val, full_peak, coarse_peak))

    violations = 0
    prop_rng = np.random.default_rng(seed + 1)
    for _ in range(property_draws):
        K = int(prop_rng.integers(3, 8))
        L = int(prop_rng.integers(1, 4))
        T = int(prop_rng.integers(1, 6))
        target, teacher, student = _random_pair(prop_rng, T, L, K)
        full = full_kl_loss(teacher, student)
        coarse = coarse_kl_loss(coarse_grain(teacher, target), coarse_grain(student, target))
        if coarse > full + 1e-9:
            violations += 1

    return KLCompareReport(
        rows=tuple(rows),
        property_draws=property_draws,
        property_violations=violations,
        mem_full_utterance=memory_estimate(500, 100, 4000, 4, batch=1),
        mem_full_batch1024=memory_estimate(500, 100, 4000, 4, batch=1024),
        mem_coarse_utterance=memory_estimate(500, 100, 4000, 4, batch=1, mode="coarse"),
    )


def format_report(report: KLCompareReport) -> str:
    lines = ["K      full KL      coarse KL    full peak B   coarse peak B"]
    for r in report.rows:
        lines.append(
            f"{r.vocab_size:<6d} {r.full_kl:<12.6f} {r.coarse_kl:<12.6f} "
            f"{r.full_peak_bytes:<13d} {r.coarse_peak_bytes:<13d}"
        )
    lines.append(
        f"coarse <= full on {report.property_draws} random draws: "
        f"{report.property_violations} violations"
    )
    lines.append(f"coarse peak constant across K: {report.coarse_peak_constant}")
    lines.append(f"full peak grows with K: {report.full_peak_grows}")
    lines.append(
        "estimated lattice memory (T=500, U=100, K=4000, 4 B): "
        f"{report.mem_full_utterance:.1e} bytes/utterance, "
        f"{report.mem_full_batch1024:.4e} bytes at batch 1024, "
        f"{report.mem_coarse_utterance:.1e} bytes/utterance coarse"
    )
    return "\n".join(lines)
