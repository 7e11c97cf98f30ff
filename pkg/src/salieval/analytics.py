"""Secondary analyses over the aggregate matrix and raw explanations.

* Flip detection: a (sample, method) pair "flips" when workers recognized
  the class at some smaller k but failed at a larger one; "always correct"
  means passing at every k; everything else counts as "aided by more words"
  — including never-correct samples, which is the bookkeeping the flip/aid
  counts table uses (N = flips + always + aided), so those are flagged.
* Overlap: mean per-sample intersection of two methods' top-k word sets.
* Sufficiency / comprehensiveness: confidence drop when the model sees only
  the top-k words, or everything but them. Non-word tokens (punctuation)
  are never masked — masking operates on the same eligible-word set the
  top-k selection draws from.
* Misclassified report: raw pass counts per (method, k), no weighting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .saliency import top_k_words
from .scoring import AggregateMatrix
from .textmodel import PAD_ID, AttentionClassifier, Sample

FLIPPED = "flipped"
ALWAYS = "always-correct"
AIDED = "aided"


@dataclass(frozen=True)
class FlipReport:
    sample_ids: tuple[str, ...]
    methods: tuple[str, ...]
    category: np.ndarray          # [N, J] of FLIPPED/ALWAYS/AIDED strings
    counts: dict                  # method -> {category: count}
    flips_per_sample: np.ndarray  # [N] number of methods that flipped
    never_correct_in_aided: int   # aided pairs that never passed at any k


@dataclass(frozen=True)
class OverlapMatrix:
    methods: tuple[str, ...]
    k: int
    matrix: np.ndarray            # [J, J] percent
    short_samples: tuple[str, ...]  # samples with fewer than k eligible words


def detect_flips(am: AggregateMatrix) -> FlipReport:
    """Categorize every (sample, method) across ascending k."""
    if len(am.ks) < 2:
        raise DataError("flip detection needs at least two k values")
    order = np.argsort(am.ks)
    A = am.A[:, :, order]
    N, J = A.shape[0], A.shape[1]
    category = np.empty((N, J), dtype=object)
    never = 0
    for i in range(N):
        for j in range(J):
            row = A[i, j]
            seen_pass = np.maximum.accumulate(row)
            if bool(((seen_pass == 1) & (row == 0)).any()):
                category[i, j] = FLIPPED
            elif row.all():
                category[i, j] = ALWAYS
            else:
                category[i, j] = AIDED
                if not row.any():
                    never += 1
    counts = {}
    for j, m in enumerate(am.methods):
        col = category[:, j]
        counts[m] = {FLIPPED: int((col == FLIPPED).sum()),
                     ALWAYS: int((col == ALWAYS).sum()),
                     AIDED: int((col == AIDED).sum())}
    return FlipReport(
        sample_ids=am.sample_ids, methods=am.methods, category=category,
        counts=counts,
        flips_per_sample=(category == FLIPPED).sum(axis=1).astype(int),
        never_correct_in_aided=never)


def flip_histogram(report: FlipReport) -> np.ndarray:
    """Samples binned by how many methods they flipped under; length J+1."""
    J = len(report.methods)
    return np.bincount(report.flips_per_sample, minlength=J + 1)


def overlap_matrix(explanations, samples, k: int) -> OverlapMatrix:
    """Mean percent overlap of top-k word positions between method pairs.

    Samples with fewer than k eligible words use their eligible count as the
    denominator and are reported in `short_samples`."""
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    by_sample = {s.id: s for s in samples}
    if len(by_sample) != len(samples):
        raise DataError("duplicate sample ids")
    methods: list[str] = []
    tops: dict[str, dict[str, frozenset]] = {}
    for e in explanations:
        if e.sample_id not in by_sample:
            raise DataError(f"explanation for unknown sample {e.sample_id!r}")
        tops.setdefault(e.method, {})
        if e.sample_id in tops[e.method]:
            raise DataError(f"duplicate explanation {e.sample_id}/{e.method}")
        if e.method not in methods:
            methods.append(e.method)
        tops[e.method][e.sample_id] = frozenset(
            top_k_words(e, k, by_sample[e.sample_id]).positions)
    ids = set(by_sample)
    for m in methods:
        if set(tops[m]) != ids:
            raise DataError(f"method {m!r} does not cover the full sample set")

    short = []
    denom = {}
    for sid, s in by_sample.items():
        eligible = sum(1 for w in s.words if not w.is_punctuation and not w.is_special)
        denom[sid] = min(k, eligible)
        if eligible < k:
            short.append(sid)

    J = len(methods)
    mat = np.zeros((J, J))
    order = sorted(ids)
    for a in range(J):
        for b in range(J):
            vals = [len(tops[methods[a]][sid] & tops[methods[b]][sid]) / denom[sid]
                    for sid in order]
            mat[a, b] = 100.0 * float(np.mean(vals))
    return OverlapMatrix(methods=tuple(methods), k=int(k), matrix=mat,
                         short_samples=tuple(sorted(short)))


def _masked_ids(model, sample, explanation, k: int, keep_top: bool,
                mode: str) -> np.ndarray:
    ids = model.encode(sample)
    T = ids.size
    if k == 0:
        top = set()
    else:
        top = {p for p in top_k_words(explanation, k, sample).positions if p < T}
    eligible = {p for p, w in enumerate(sample.words[:T])
                if not w.is_punctuation and not w.is_special}
    to_mask = (eligible - top) if keep_top else (top & eligible)
    if mode == "pad":
        out = ids.copy()
        out[sorted(to_mask)] = PAD_ID
        return out
    if mode == "delete":
        keep = [p for p in range(T) if p not in to_mask]
        if not keep:
            return np.array([PAD_ID], dtype=np.int64)
        return ids[keep]
    raise DataError(f"unknown masking mode {mode!r}")


def sufficiency_comprehensiveness(model: AttentionClassifier, sample: Sample,
                                  explanation, k: int,
                                  mode: str = "pad") -> tuple[float, float]:
    """Both drops from three forward passes (full, keep-top-k, drop-top-k)."""
    if k < 0:
        raise DataError("k must be >= 0")
    full = model.forward_ids(model.encode(sample))
    t0 = full.predicted_class - 1
    base = float(full.confidence[t0])

    def conf(ids):
        return float(_softmax_conf(model, ids)[t0])

    keep = conf(_masked_ids(model, sample, explanation, k, True, mode))
    drop = conf(_masked_ids(model, sample, explanation, k, False, mode))
    return base - keep, base - drop


def _softmax_conf(model, ids):
    logits = model.infer_logits(ids)
    e = np.exp(logits - logits.max())
    return e / e.sum()


def sufficiency(model, sample, explanation, k: int, mode: str = "pad") -> float:
    return sufficiency_comprehensiveness(model, sample, explanation, k, mode)[0]


def comprehensiveness(model, sample, explanation, k: int, mode: str = "pad") -> float:
    return sufficiency_comprehensiveness(model, sample, explanation, k, mode)[1]


def misclassified_report(am: AggregateMatrix) -> dict:
    """Raw per-(method, k) counts of samples recognized correctly."""
    counts = am.A.sum(axis=0)
    return {"methods": list(am.methods), "ks": list(am.ks),
            "counts": counts.astype(int).tolist(), "samples": len(am.sample_ids)}


# -- text/CSV rendering ---------------------------------------------------

def format_flip_report(report: FlipReport) -> str:
    header = ["method", "flips", "always correct", "aided"]
    rows = [header] + [
        [m, str(report.counts[m][FLIPPED]), str(report.counts[m][ALWAYS]),
         str(report.counts[m][AIDED])]
        for m in report.methods]
    widths = [max(len(r[c]) for r in rows) for c in range(4)]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                       for i, (c, w) in enumerate(zip(r, widths))) for r in rows]
    if report.never_correct_in_aided:
        lines.append(f"note: 'aided' includes {report.never_correct_in_aided} "
                     "never-correct (sample, method) pairs")
    return "\n".join(lines)


def flip_report_to_json(report: FlipReport) -> dict:
    return {
        "methods": list(report.methods),
        "counts": report.counts,
        "flips_per_sample": {sid: int(n) for sid, n in
                             zip(report.sample_ids, report.flips_per_sample)},
        "never_correct_in_aided": report.never_correct_in_aided,
    }


def histogram_csv(report: FlipReport) -> str:
    hist = flip_histogram(report)
    lines = ["methods_flipped,samples"]
    lines += [f"{n},{int(c)}" for n, c in enumerate(hist)]
    return "\n".join(lines) + "\n"


def format_overlap(om: OverlapMatrix) -> str:
    header = [f"top-{om.k} overlap %"] + list(om.methods)
    rows = [header] + [
        [m] + [f"{om.matrix[a, b]:.0f}" for b in range(len(om.methods))]
        for a, m in enumerate(om.methods)]
    widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                       for i, (c, w) in enumerate(zip(r, widths))) for r in rows]
    if om.short_samples:
        lines.append(f"note: {len(om.short_samples)} sample(s) have fewer than "
                     f"{om.k} eligible words")
    return "\n".join(lines)


def overlap_to_json(om: OverlapMatrix) -> dict:
    return {"methods": list(om.methods), "k": om.k,
            "matrix": om.matrix.tolist(),
            "short_samples": list(om.short_samples)}


def format_misclassified(rep: dict) -> str:
    header = ["method"] + [f"{k} words" for k in rep["ks"]]
    rows = [header] + [
        [m] + [str(rep["counts"][j][x]) for x in range(len(rep["ks"]))]
        for j, m in enumerate(rep["methods"])]
    widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                               for i, (c, w) in enumerate(zip(r, widths)))
                     for r in rows)
