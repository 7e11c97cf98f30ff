"""Majority-vote aggregation of annotations and weighted method scoring.

A task passes (A=1) when the sample's true class wins a strict plurality of
its collected labels: the count for the true class must strictly exceed the
count of every other option, where "I don't know" (label 0) competes like
any class and labels that were never collected simply don't vote. Per-method
accuracies p_jk (fraction of samples passing at top-k) are then combined into
a single score s_j = sum_k w_k p_jk, where w_k = (sum of the whole table) /
(K^2 * column sum k) — columns where every method does well (large k) get
down-weighted, and the weight pool includes the random baseline row.

Ranks are competition style: 1 + number of strictly greater values, ties
share a rank.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError

BASELINE_METHOD = "Random"


@dataclass(frozen=True)
class AggregateMatrix:
    A: np.ndarray                     # [N, J, K] binary
    sample_ids: tuple[str, ...]
    methods: tuple[str, ...]
    ks: tuple[int, ...]
    classes: int
    uncovered: tuple[tuple[str, str, int], ...]   # tasks with zero annotations


@dataclass(frozen=True)
class ScoreReport:
    methods: tuple[str, ...]
    ks: tuple[int, ...]
    p: np.ndarray                     # [J, K]
    w: np.ndarray                     # [K]
    s: np.ndarray                     # [J]
    column_ranks: np.ndarray          # [J, K] int
    score_ranks: np.ndarray           # [J] int
    display_scale: float              # 100 when p is fractions, 1 when percent
    uncovered: tuple[tuple[str, str, int], ...] = ()


def vote(labels, truth_class: int, classes: int) -> int:
    """Strict-plurality aggregation of one task's labels (0 = "I don't know").

    Returns 1 when truth_class strictly out-counts every other option among
    the labels actually collected; an empty label list can never pass."""
    if not 1 <= truth_class <= classes:
        raise DataError(f"truth class {truth_class} outside 1..{classes}")
    labels = [int(lab) for lab in labels]
    if not labels:
        return 0
    counts = np.zeros(classes + 1, dtype=int)
    for lab in labels:
        if not 0 <= lab <= classes:
            raise DataError(f"label {lab} outside 0..{classes}")
        counts[lab] += 1
    others = np.delete(counts, truth_class)
    return int(counts[truth_class] > others.max())


def _get(a, key):
    return a[key] if isinstance(a, dict) else getattr(a, key)


def aggregate(annotations, tasks) -> AggregateMatrix:
    """Fold raw annotations into the binary pass matrix over (sample, method, k).

    Tasks must form a complete sample x method x k grid and carry ground
    truth; annotations may be dicts or objects with task_id and label."""
    by_id = {}
    for t in tasks:
        if t.ground_truth is None:
            raise DataError(f"task {t.task_id}: ground truth required for scoring")
        if t.task_id in by_id:
            raise DataError(f"duplicate task id {t.task_id}")
        by_id[t.task_id] = t

    sample_ids, methods, ks = [], [], []
    for t in tasks:
        if t.sample_id not in sample_ids:
            sample_ids.append(t.sample_id)
        if t.method not in methods:
            methods.append(t.method)
        if t.k not in ks:
            ks.append(t.k)
    ks = sorted(ks)
    grid = {(t.sample_id, t.method, t.k) for t in tasks}
    want = {(s, m, k) for s in sample_ids for m in methods for k in ks}
    if grid != want:
        raise DataError(
            f"tasks do not form a full grid: missing {sorted(want - grid)[:5]}")

    classes = max(len(t.label_options) - 1 for t in tasks)
    if classes < 1:
        raise DataError("tasks carry no class options")

    labels: dict[str, list[int]] = {tid: [] for tid in by_id}
    for a in annotations:
        tid = str(_get(a, "task_id"))
        if tid not in by_id:
            raise DataError(f"annotation references unknown task {tid!r}")
        labels[tid].append(int(_get(a, "label")))

    N, J, K = len(sample_ids), len(methods), len(ks)
    A = np.zeros((N, J, K), dtype=np.int8)
    uncovered = []
    si = {s: i for i, s in enumerate(sample_ids)}
    mi = {m: j for j, m in enumerate(methods)}
    ki = {k: x for x, k in enumerate(ks)}
    for t in by_id.values():
        got = labels[t.task_id]
        if not got:
            uncovered.append((t.sample_id, t.method, t.k))
        A[si[t.sample_id], mi[t.method], ki[t.k]] = vote(
            got, t.ground_truth, classes)
    return AggregateMatrix(A=A, sample_ids=tuple(sample_ids),
                           methods=tuple(methods), ks=tuple(ks),
                           classes=classes, uncovered=tuple(sorted(uncovered)))


def accuracy_table(am: AggregateMatrix) -> np.ndarray:
    return am.A.mean(axis=0)


def weights(p) -> np.ndarray:
    """Column weights: total mass over K^2 times the column mass."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise DataError(f"accuracy table must be 2-D, got shape {p.shape}")
    if (p < 0).any():
        raise DataError("accuracy table has negative entries")
    col = p.sum(axis=0)
    if (col == 0).any():
        dead = [int(k) for k in np.flatnonzero(col == 0)]
        raise DataError(f"degenerate experiment: zero column sum at columns {dead}")
    K = p.shape[1]
    return p.sum() / (K * K * col)


def scores(p, w) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if p.shape[1] != w.shape[0]:
        raise DataError(f"shape mismatch: p {p.shape} vs w {w.shape}")
    return p @ w


def competition_ranks(values) -> np.ndarray:
    """1 + number of strictly greater entries; ties share a rank."""
    v = np.asarray(values, dtype=np.float64)
    return (v[None, :] > v[:, None]).sum(axis=1).astype(int) + 1


def build_report(am: AggregateMatrix, baseline_in_weights: bool = True) -> ScoreReport:
    return report_from_table(accuracy_table(am), am.methods, am.ks,
                             baseline_in_weights=baseline_in_weights,
                             uncovered=am.uncovered)


def report_from_table(p, methods, ks, baseline_in_weights: bool = True,
                      uncovered=()) -> ScoreReport:
    """Score an accuracy table directly (fractions or percent both work; the
    weight formula is scale-invariant)."""
    p = np.asarray(p, dtype=np.float64)
    methods = tuple(methods)
    ks = tuple(int(k) for k in ks)
    if p.shape != (len(methods), len(ks)):
        raise DataError(f"table shape {p.shape} != ({len(methods)}, {len(ks)})")
    if baseline_in_weights:
        w = weights(p)
    else:
        keep = [j for j, m in enumerate(methods) if m != BASELINE_METHOD]
        if len(keep) == len(methods):
            raise DataError(
                f"baseline_in_weights=False but no {BASELINE_METHOD!r} row present")
        w = weights(p[keep])
    s = scores(p, w)
    column_ranks = np.stack([competition_ranks(p[:, x])
                             for x in range(len(ks))], axis=1)
    return ScoreReport(
        methods=methods, ks=ks, p=p, w=w, s=s,
        column_ranks=column_ranks, score_ranks=competition_ranks(s),
        display_scale=100.0 if p.max() <= 1.0 else 1.0,
        uncovered=tuple(uncovered))


def format_report(report: ScoreReport) -> str:
    """Aligned text table: accuracy % with per-column rank, then the weighted
    score with overall rank."""
    scale = report.display_scale
    header = ["method"] + [f"{k} words" for k in report.ks] + ["Score"]
    rows = [header]
    for j, m in enumerate(report.methods):
        cells = [m]
        for x in range(len(report.ks)):
            cells.append(f"{report.p[j, x] * scale:.0f} ({report.column_ranks[j, x]})")
        cells.append(f"{report.s[j] * scale:.1f} ({report.score_ranks[j]})")
        rows.append(cells)
    widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
    lines = []
    for r in rows:
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                               for i, (c, w) in enumerate(zip(r, widths))))
    if report.uncovered:
        lines.append(f"flagged: {len(report.uncovered)} task(s) had no annotations")
    return "\n".join(lines)


def report_to_json(report: ScoreReport) -> dict:
    return {
        "methods": list(report.methods),
        "ks": list(report.ks),
        "p": report.p.tolist(),
        "w": report.w.tolist(),
        "s": report.s.tolist(),
        "column_ranks": report.column_ranks.tolist(),
        "score_ranks": report.score_ranks.tolist(),
        "display_scale": report.display_scale,
        "uncovered": [list(u) for u in report.uncovered],
    }


def save_report(path, report: ScoreReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_json(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_matrix(path, am: AggregateMatrix) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({
            "sample_ids": list(am.sample_ids),
            "methods": list(am.methods),
            "ks": list(am.ks),
            "classes": am.classes,
            "A": am.A.tolist(),
            "uncovered": [list(u) for u in am.uncovered],
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_matrix(path) -> AggregateMatrix:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read aggregate matrix ({exc})") from exc
    for key in ("sample_ids", "methods", "ks", "classes", "A"):
        if key not in obj:
            raise DataError(f"{path}: missing field {key!r}")
    A = np.asarray(obj["A"], dtype=np.int8)
    shape = (len(obj["sample_ids"]), len(obj["methods"]), len(obj["ks"]))
    if A.shape != shape:
        raise DataError(f"{path}: A has shape {A.shape}, expected {shape}")
    if not np.isin(A, (0, 1)).all():
        raise DataError(f"{path}: A entries must be 0 or 1")
    return AggregateMatrix(
        A=A, sample_ids=tuple(obj["sample_ids"]),
        methods=tuple(obj["methods"]), ks=tuple(int(k) for k in obj["ks"]),
        classes=int(obj["classes"]),
        uncovered=tuple((str(s), str(m), int(k))
                        for s, m, k in obj.get("uncovered", [])))
