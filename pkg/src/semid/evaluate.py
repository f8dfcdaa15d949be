"""Labeling accuracy: macro F1, class-size statistics and report formatting."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from sklearn.metrics import f1_score

from .identify import UNKNOWN, assign_label

AVERAGING_NOTE = ("macro-averaged F1 over the union of assigned and ground-truth labels, "
                  "with 'Unknown' treated as an ordinary class")


def ground_truth(name: str, trained: set[str], labels: dict[str, str] | None = None) -> str:
    """Expected label: the function's (mapped) name if it was trained, else Unknown."""
    if name not in trained:
        return UNKNOWN
    return labels.get(name, name) if labels else name


def macro_f1(assigned: list[str], truth: list[str]) -> float:
    if not assigned:
        return 0.0
    return float(f1_score(truth, assigned, average="macro", zero_division=0))


def class_size_histogram(classes: list[list[str]]) -> dict[str, int]:
    """Buckets "1".."9" and "10+"; empty buckets are omitted."""
    counts = Counter(str(len(c)) if len(c) < 10 else "10+" for c in classes)
    order = [str(i) for i in range(1, 10)] + ["10+"]
    return {k: counts[k] for k in order if counts[k]}


def geometric_mean(values: list[float]) -> float:
    if not values:
        return 0.0
    if any(v <= 0 for v in values):
        return 0.0
    return math.exp(sum(math.log(v) for v in values) / len(values))


@dataclass
class EvalReport:
    rows: list[tuple[str, str, str, str]]      # (name, variant, assigned, truth)
    f1: float
    n_classified: int
    mean_class_size: float
    histogram: dict[str, int]
    unclassifiable: list[str] = field(default_factory=list)
    seconds: float = 0.0

    def mislabeled(self) -> list[tuple[str, str, str, str]]:
        return [r for r in self.rows if r[2] != r[3]]

    def to_dict(self) -> dict:
        return {
            "averaging": AVERAGING_NOTE,
            "macro_f1": round(self.f1, 6),
            "N": self.n_classified,
            "mean_class_size": round(self.mean_class_size, 6),
            "class_size_histogram": self.histogram,
            "unclassifiable": self.unclassifiable,
            "functions": [{"name": n, "variant": v, "assigned": a, "truth": t}
                          for n, v, a, t in self.rows],
        }

    def format(self) -> str:
        lines = [f"# F1: {AVERAGING_NOTE}",
                 f"macro F1      {self.f1:.4f}",
                 f"N (classified) {self.n_classified}",
                 f"mean class size {self.mean_class_size:.3f}",
                 "class sizes   " + " ".join(f"{k}:{v}" for k, v in self.histogram.items())]
        if self.unclassifiable:
            lines.append("unclassifiable " + ", ".join(self.unclassifiable))
        wrong = self.mislabeled()
        lines.append(f"mislabeled    {len(wrong)}/{len(self.rows)}")
        for n, v, a, t in wrong:
            lines.append(f"  {n}.{v}: assigned {a}, expected {t}")
        return "\n".join(lines)


def evaluate(header: dict, records: list[dict], labels: dict[str, str] | None = None) -> EvalReport:
    """Score one labels.jsonl (header + records) against ground truth.

    ``labels`` optionally maps function names to ground-truth labels
    (``labels.tsv``); trained names are the members of the header's classes.
    """
    classes = header.get("classes", [])
    trained = {name for cls in classes for name in cls}
    rows = []
    for rec in records:
        members = rec.get("class") or []
        assigned = assign_label(rec["name"], members)
        if labels:
            assigned = labels.get(assigned, assigned) if assigned != UNKNOWN else UNKNOWN
        rows.append((rec["name"], rec.get("variant", ""), assigned,
                     ground_truth(rec["name"], trained, labels)))
    f1 = macro_f1([r[2] for r in rows], [r[3] for r in rows])
    n = sum(len(c) for c in classes)
    return EvalReport(rows, f1, n, n / len(classes) if classes else 0.0,
                      class_size_histogram(classes), list(header.get("unclassifiable", [])))
