"""Annotation task construction and the worker assignment plan.

A task shows the top-k words of one explanation for one sample: eligible
(non-punctuation) words appear either as their surface form or as a "."
placeholder, punctuation is dropped entirely, and the hidden-word count is
preserved. The assignment plan spreads each sample's method x k variants
over batches so that no worker batch ever contains two tasks of the same
sample, and every task is replicated a fixed number of times.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .saliency import top_k_words
from .textmodel import Sample

IDK_LABEL = 0          # annotation label for "I don't know"
IDK_OPTION = "I don't know"


@dataclass(frozen=True)
class Task:
    task_id: str
    sample_id: str
    method: str
    k: int
    shown_positions: tuple[int, ...]
    rendered: str
    label_options: tuple[str, ...]     # class names, then IDK_OPTION
    ground_truth: int | None = None    # server-side only; never shown to workers


@dataclass(frozen=True)
class AssignmentPlan:
    batches: tuple[tuple[str, ...], ...]
    replication: int
    batch_size: int


def task_id_for(sample_id: str, method: str, k: int) -> str:
    digest = hashlib.sha256(f"{sample_id}|{method}|{k}".encode("utf-8")).hexdigest()
    return digest[:16]


def default_class_names(classes: int) -> tuple[str, ...]:
    return tuple(f"class {c}" for c in range(1, classes + 1))


def render_task(sample: Sample, shown_positions, compact_dots: bool = False) -> str:
    """Display string: eligible words in original order, shown ones as surface
    forms and hidden ones as dots; punctuation/special tokens dropped."""
    eligible = {p for p, w in enumerate(sample.words)
                if not w.is_punctuation and not w.is_special}
    shown = set(int(p) for p in shown_positions)
    bad = shown - eligible
    if bad:
        raise DataError(
            f"sample {sample.id!r}: positions {sorted(bad)} not eligible for display")
    tokens = []
    for p in sorted(eligible):
        tokens.append(sample.words[p].surface if p in shown else ".")
    if not compact_dots:
        return " ".join(tokens)
    merged: list[str] = []
    for t in tokens:
        if t == "." and merged and set(merged[-1]) == {"."}:
            merged[-1] += "."
        else:
            merged.append(t)
    return " ".join(merged)


def build_tasks(samples, methods, ks, explanations, class_names=None,
                compact_dots: bool = False) -> list[Task]:
    """One task per (sample, method, k), in that nesting order."""
    if not samples or not methods or not ks:
        raise DataError("samples, methods and ks must be non-empty")
    if len(set(methods)) != len(methods):
        raise DataError("duplicate methods")
    ks = [int(k) for k in ks]
    if any(k < 1 for k in ks) or len(set(ks)) != len(ks):
        raise DataError("ks must be distinct positive integers")

    by_key = {}
    for e in explanations:
        key = (e.sample_id, e.method)
        if key in by_key:
            raise DataError(f"duplicate explanation for {key}")
        by_key[key] = e

    missing = [(s.id, m) for s in samples for m in methods
               if (s.id, m) not in by_key]
    if missing:
        raise DataError(f"missing explanations for {missing[:10]}"
                        + (f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""))

    classes = max(s.label for s in samples)
    for e in by_key.values():
        classes = max(classes, e.target_class, e.predicted_class)
    names = tuple(class_names) if class_names else default_class_names(classes)
    if len(names) < classes:
        raise DataError(f"{len(names)} class names for labels up to {classes}")
    options = names + (IDK_OPTION,)

    tasks = []
    for s in samples:
        for m in methods:
            expl = by_key[(s.id, m)]
            for k in ks:
                top = top_k_words(expl, k, s)
                tasks.append(Task(
                    task_id=task_id_for(s.id, m, k), sample_id=s.id, method=m,
                    k=k, shown_positions=top.positions,
                    rendered=render_task(s, top.positions, compact_dots),
                    label_options=options, ground_truth=s.label))
    return tasks


def build_assignment(tasks, replication: int = 5, batch_size: int = 100,
                     seed: int = 0) -> AssignmentPlan:
    """Latin-square spread: per replication round, each sample's variants are
    permuted over as many columns as it has variants; a column holds one task
    per sample and is chunked into batches."""
    if replication < 1:
        raise DataError("replication must be >= 1")
    if batch_size < 1:
        raise DataError("batch_size must be >= 1")
    order: list[str] = []
    variants: dict[str, list[str]] = {}
    for t in tasks:
        if t.sample_id not in variants:
            variants[t.sample_id] = []
            order.append(t.sample_id)
        variants[t.sample_id].append(t.task_id)
    counts = {len(v) for v in variants.values()}
    if len(counts) != 1:
        raise DataError(
            f"samples contribute unequal variant counts {sorted(counts)}; "
            "cannot build a balanced plan")
    V = counts.pop()
    N = len(order)
    if batch_size > N:
        raise DataError(
            f"batch_size {batch_size} exceeds sample count {N}: a batch could "
            "not avoid repeating a sample")
    seen = [tid for v in variants.values() for tid in v]
    if len(set(seen)) != len(seen):
        raise DataError("duplicate task ids in input")

    rng = np.random.default_rng(seed)
    batches: list[tuple[str, ...]] = []
    for _ in range(replication):
        perms = {s: rng.permutation(V) for s in order}
        sample_order = [order[int(i)] for i in rng.permutation(N)]
        for col in range(V):
            column = [variants[s][int(perms[s][col])] for s in sample_order]
            for start in range(0, N, batch_size):
                batches.append(tuple(column[start:start + batch_size]))
    return AssignmentPlan(batches=tuple(batches), replication=int(replication),
                          batch_size=int(batch_size))


def check_plan(plan: AssignmentPlan, tasks) -> dict:
    """Verify the plan invariants against a task list; returns summary stats."""
    sample_of = {t.task_id: t.sample_id for t in tasks}
    counts: dict[str, int] = {t.task_id: 0 for t in tasks}
    for i, batch in enumerate(plan.batches):
        if len(batch) > plan.batch_size:
            raise DataError(f"batch {i} exceeds batch_size")
        if len(set(batch)) != len(batch):
            raise DataError(f"batch {i} repeats a task")
        per_sample = [sample_of.get(tid) for tid in batch]
        if None in per_sample:
            raise DataError(f"batch {i} references an unknown task")
        if len(set(per_sample)) != len(per_sample):
            raise DataError(f"batch {i} shows the same sample twice")
        for tid in batch:
            counts[tid] += 1
    off = {tid: c for tid, c in counts.items() if c != plan.replication}
    if off:
        some = dict(list(off.items())[:5])
        raise DataError(f"tasks not replicated exactly {plan.replication} times: {some}")
    return {"batches": len(plan.batches), "tasks": len(counts),
            "annotations": sum(counts.values())}


def save_tasks(path, tasks) -> None:
    """Worker-facing dump: ground truth and raw positions stay server-side."""
    with open(path, "w", encoding="utf-8") as fh:
        for t in tasks:
            fh.write(json.dumps({
                "task_id": t.task_id, "sample_id": t.sample_id, "method": t.method,
                "k": t.k, "rendered": t.rendered,
                "label_options": list(t.label_options),
            }) + "\n")


def load_tasks(path) -> list[Task]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{ln}: invalid JSON ({exc})") from exc
            for key in ("task_id", "sample_id", "method", "k", "rendered",
                        "label_options"):
                if key not in obj:
                    raise DataError(f"{path}:{ln}: missing field {key!r}")
            out.append(Task(
                task_id=str(obj["task_id"]), sample_id=str(obj["sample_id"]),
                method=str(obj["method"]), k=int(obj["k"]),
                shown_positions=(), rendered=str(obj["rendered"]),
                label_options=tuple(obj["label_options"]), ground_truth=None))
    if not out:
        raise DataError(f"{path}: no tasks")
    return out


def save_plan(path, plan: AssignmentPlan) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"batches": [list(b) for b in plan.batches],
                   "replication": plan.replication}, fh)
        fh.write("\n")


def load_plan(path) -> AssignmentPlan:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read plan ({exc})") from exc
    if "batches" not in obj or "replication" not in obj:
        raise DataError(f"{path}: plan needs 'batches' and 'replication'")
    batches = tuple(tuple(str(t) for t in b) for b in obj["batches"])
    if not batches:
        raise DataError(f"{path}: empty plan")
    return AssignmentPlan(batches=batches, replication=int(obj["replication"]),
                          batch_size=max(len(b) for b in batches))
