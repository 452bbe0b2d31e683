"""ROUGE-1/2/L precision, recall, and F1 with corpus-level aggregation.

Overlap uses clipped multiset counts (min of the two sides' n-gram counts);
ROUGE-L runs a longest-common-subsequence DP over the whole summary as one
token sequence. All functions are pure.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass


def ngram_counts(tokens, n: int) -> Counter:
    """Multiset of all contiguous n-grams in `tokens`."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    tokens = list(tokens)
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_overlap(cls, overlap: float, sys_total: float, ref_total: float) -> "RougeScore":
        p = overlap / sys_total if sys_total > 0 else 0.0
        r = overlap / ref_total if ref_total > 0 else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f1)


def rouge_n(system, reference, n: int) -> RougeScore:
    sys_counts = ngram_counts(system, n)
    ref_counts = ngram_counts(reference, n)
    overlap = sum(min(c, ref_counts.get(g, 0)) for g, c in sys_counts.items())
    return RougeScore.from_overlap(overlap, sum(sys_counts.values()), sum(ref_counts.values()))


def lcs_length(x, y) -> int:
    """Longest common subsequence length via the row-rolling DP."""
    x, y = list(x), list(y)
    if not x or not y:
        return 0
    row = [0] * (len(y) + 1)
    for xi in x:
        prev = 0
        for j, yj in enumerate(y, 1):
            cur = row[j]
            row[j] = prev + 1 if xi == yj else max(row[j], row[j - 1])
            prev = cur
    return row[len(y)]


def rouge_l(system, reference) -> RougeScore:
    lcs = lcs_length(system, reference)
    return RougeScore.from_overlap(lcs, len(list(system)), len(list(reference)))


METRICS = ("rouge1", "rouge2", "rougeL")


def score_pair(system, reference) -> dict[str, RougeScore]:
    return {"rouge1": rouge_n(system, reference, 1),
            "rouge2": rouge_n(system, reference, 2),
            "rougeL": rouge_l(system, reference)}


@dataclass(frozen=True)
class RougeReport:
    """Per-pair scores plus their corpus-level arithmetic means."""
    per_pair: list
    corpus: dict

    def row(self) -> list[float]:
        """Nine percent values: F1/P/R for ROUGE-1, then 2, then L."""
        out = []
        for m in METRICS:
            s = self.corpus[m]
            out.extend([100.0 * s.f1, 100.0 * s.precision, 100.0 * s.recall])
        return out


def report(pairs) -> RougeReport:
    """Score (system, reference) token-sequence pairs and average over the corpus."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("report requires at least one (system, reference) pair")
    per_pair = [score_pair(s, r) for s, r in pairs]
    corpus = {}
    for m in METRICS:
        n = len(per_pair)
        corpus[m] = RougeScore(sum(p[m].precision for p in per_pair) / n,
                               sum(p[m].recall for p in per_pair) / n,
                               sum(p[m].f1 for p in per_pair) / n)
    return RougeReport(per_pair, corpus)


def render_table(reports: dict[str, RougeReport]) -> str:
    """Aligned text table: one row per model, nine percent columns."""
    header = (f"{'Model':<18}"
              + "".join(f"{m + '-' + c:>10}" for m in ("R1", "R2", "RL")
                        for c in ("F1", "P", "R")))
    lines = [header, "-" * len(header)]
    for name, rep in reports.items():
        lines.append(f"{name:<18}" + "".join(f"{v:>10.2f}" for v in rep.row()))
    return "\n".join(lines)


def render_csv(reports: dict[str, RougeReport]) -> str:
    lines = ["model,metric,f1,precision,recall"]
    for name, rep in reports.items():
        for m in METRICS:
            s = rep.corpus[m]
            lines.append(f"{name},{m},{100 * s.f1:.2f},{100 * s.precision:.2f},{100 * s.recall:.2f}")
    return "\n".join(lines) + "\n"
