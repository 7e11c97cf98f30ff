"""Synthetic corpora and simulated annotators.

The generator plants class-deciding keywords into filler text; the simulated
worker is a keyword plurality voter with a noise knob. Neither models human
behavior — they exist so the whole pipeline (train, explain, build tasks,
annotate, aggregate, score, analyze) can run end to end with analytic ground
truth. The generator can also plant a minority of opposite-class keywords to
manufacture flip behavior on demand.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .analytics import FlipReport, OverlapMatrix, detect_flips, overlap_matrix
from .errors import DataError
from .saliency import Explanation, explain, register_method
from .scoring import AggregateMatrix, ScoreReport, aggregate, build_report
from .tasks import AssignmentPlan, build_assignment, build_tasks
from .textmodel import (AttentionClassifier, ClassifierConfig, Sample,
                        make_sample, select_eval_samples, train)

ORACLE_METHOD = "OracleKeyword"
register_method(ORACLE_METHOD)


def derive_seed(master: int, stage: str) -> int:
    """Stable per-stage sub-seed: sha256 over master and stage name."""
    h = hashlib.sha256(f"{int(master)}:{stage}".encode()).digest()
    return int.from_bytes(h[:8], "big")


@dataclass(frozen=True)
class CorpusSpec:
    classes: int
    keywords: tuple[tuple[str, ...], ...]   # index 0 = class 1
    filler_vocab: int = 12
    words_per_sample: tuple[int, int] = (6, 12)
    keywords_per_sample: tuple[int, int] = (1, 2)
    samples: int = 100
    seed: int = 0
    # opposite-class keywords planted per sample; always capped below the
    # true-class count so the label keeps a strict keyword plurality
    misleading_per_sample: tuple[int, int] = (0, 0)
    punctuation_rate: float = 0.0

    def __post_init__(self):
        if self.classes < 2:
            raise DataError("need at least 2 classes")
        if len(self.keywords) != self.classes:
            raise DataError("one keyword set per class required")
        seen: set[str] = set()
        for ws in self.keywords:
            if not ws:
                raise DataError("empty keyword set")
            for w in ws:
                if w in seen:
                    raise DataError(f"keyword {w!r} appears in two classes")
                seen.add(w)
        fillers = set(filler_words(self))
        clash = seen & fillers
        if clash:
            raise DataError(f"keywords collide with filler vocabulary: {sorted(clash)}")
        for name, (lo, hi) in (("words_per_sample", self.words_per_sample),
                               ("keywords_per_sample", self.keywords_per_sample),
                               ("misleading_per_sample", self.misleading_per_sample)):
            if lo > hi or lo < 0:
                raise DataError(f"bad {name} range ({lo}, {hi})")
        if self.keywords_per_sample[0] < 1:
            raise DataError("every sample needs at least one keyword")
        need = self.keywords_per_sample[1] + self.misleading_per_sample[1]
        if self.words_per_sample[0] < need:
            raise DataError(
                f"shortest sample ({self.words_per_sample[0]} words) cannot "
                f"hold {need} planted words")
        if self.samples < 1:
            raise DataError("need at least one sample")
        if not 0.0 <= self.punctuation_rate < 1.0:
            raise DataError("punctuation_rate must be in [0, 1)")
        if self.filler_vocab < 1:
            raise DataError("need a filler vocabulary")


def filler_words(spec: CorpusSpec) -> list[str]:
    return [f"word{i:03d}" for i in range(spec.filler_vocab)]


def gen_corpus(spec: CorpusSpec) -> list[Sample]:
    """Deterministic planted-keyword corpus; label = plurality keyword class."""
    rng = np.random.default_rng(spec.seed)
    fillers = filler_words(spec)
    out = []
    for i in range(spec.samples):
        c = int(rng.integers(1, spec.classes + 1))
        n_words = int(rng.integers(spec.words_per_sample[0],
                                   spec.words_per_sample[1] + 1))
        n_kw = int(rng.integers(spec.keywords_per_sample[0],
                                spec.keywords_per_sample[1] + 1))
        n_mis = int(rng.integers(spec.misleading_per_sample[0],
                                 spec.misleading_per_sample[1] + 1))
        n_mis = min(n_mis, n_kw - 1)            # keep strict plurality
        words = [str(rng.choice(fillers)) for _ in range(n_words)]
        slots = rng.choice(n_words, size=n_kw + n_mis, replace=False)
        for p in slots[:n_kw]:
            words[p] = str(rng.choice(spec.keywords[c - 1]))
        for p in slots[n_kw:]:
            other = int(rng.integers(1, spec.classes))
            other = other if other < c else other + 1
            words[p] = str(rng.choice(spec.keywords[other - 1]))
        if spec.punctuation_rate > 0:
            studded = []
            for w in words:
                studded.append(w)
                if rng.random() < spec.punctuation_rate:
                    studded.append(str(rng.choice([".", "!", ","])))
            words = studded
        out.append(make_sample(f"sim-{i:04d}", " ".join(words), c))
    return out


@dataclass(frozen=True)
class OracleConfig:
    keyword_class: dict                      # word -> 1-based class
    noise: float = 0.0                       # P(uniform random label)
    idk_when_no_keyword: bool = True

    def __post_init__(self):
        if not 0.0 <= self.noise <= 1.0:
            raise DataError("noise must be in [0, 1]")
        if not self.keyword_class:
            raise DataError("empty keyword map")
        if any(int(c) < 1 for c in self.keyword_class.values()):
            raise DataError("classes are 1-based")

    @property
    def classes(self) -> int:
        return max(int(c) for c in self.keyword_class.values())

    @classmethod
    def from_spec(cls, spec: CorpusSpec, noise: float = 0.0,
                  idk_when_no_keyword: bool = True) -> "OracleConfig":
        mapping = {w: c for c, ws in enumerate(spec.keywords, 1) for w in ws}
        return cls(keyword_class=mapping, noise=noise,
                   idk_when_no_keyword=idk_when_no_keyword)


def simulate_worker(rendered: str, oracle: OracleConfig, rng) -> int:
    """Label a rendered task the way a keyword-spotting annotator would.

    Plurality class of the visible keywords; no keyword visible means
    "I don't know" (0) or a uniform guess depending on the flag; with
    probability `noise` the answer is a uniform class regardless."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    C = oracle.classes
    if oracle.noise > 0 and rng.random() < oracle.noise:
        return int(rng.integers(1, C + 1))
    counts = Counter(oracle.keyword_class[tok] for tok in rendered.split()
                     if tok in oracle.keyword_class)
    if not counts:
        if oracle.idk_when_no_keyword:
            return 0
        return int(rng.integers(1, C + 1))
    best = max(counts.values())
    return min(c for c, n in counts.items() if n == best)   # ties: lowest class


def oracle_keyword_explanation(sample: Sample, oracle: OracleConfig) -> Explanation:
    """The injected ideal method: score 1 on the sample's own-class keywords."""
    scores = tuple(
        1.0 if oracle.keyword_class.get(w.surface) == sample.label else 0.0
        for w in sample.words)
    return Explanation(sample_id=sample.id, method=ORACLE_METHOD,
                       scores=scores, target_class=sample.label,
                       predicted_class=sample.label, confidence=1.0)


def simulate_annotations(plan: AssignmentPlan, tasks, oracle: OracleConfig,
                         seed: int = 0) -> list[dict]:
    """One synthetic worker per batch; every task labeled, timings plausible."""
    by_id = {t.task_id: t for t in tasks}
    out = []
    for b, batch in enumerate(plan.batches):
        rng = np.random.default_rng(derive_seed(seed, f"worker-{b}"))
        token = f"sim-{b:04d}"
        for tid in batch:
            if tid not in by_id:
                raise DataError(f"plan references unknown task {tid!r}")
            out.append({
                "task_id": tid,
                "worker_token": token,
                "label": int(simulate_worker(by_id[tid].rendered, oracle, rng)),
                "elapsed_ms": int(rng.integers(3000, 12000)),
            })
    return out


@dataclass
class ExperimentResult:
    corpus: list
    model: AttentionClassifier
    history: dict
    eval_samples: list
    explanations: list
    tasks: list
    plan: AssignmentPlan
    annotations: list
    matrix: AggregateMatrix
    report: ScoreReport
    flips: FlipReport | None
    overlap: OverlapMatrix


@contextmanager
def _stage(name: str):
    try:
        yield
    except DataError as e:
        raise DataError(f"stage {name}: {e}") from e


def run_experiment(spec: CorpusSpec, config: ClassifierConfig, methods, ks,
                   replication: int = 5, oracle: OracleConfig | None = None,
                   seed: int = 0, epochs: int = 5, learning_rate: float = 0.05,
                   n_eval: int | None = None, batch_size: int | None = None,
                   overlap_k: int = 10, explain_params: dict | None = None,
                   ) -> ExperimentResult:
    """Run the whole pipeline on synthetic data, no humans involved."""
    methods = list(methods)
    ks = sorted(int(k) for k in ks)
    if oracle is None:
        oracle = OracleConfig.from_spec(spec)
    explain_params = dict(explain_params or {})

    with _stage("corpus"):
        corpus = gen_corpus(spec)
    with _stage("train"):
        model, history = train(config, corpus, epochs=epochs,
                               learning_rate=learning_rate)
    with _stage("select"):
        if n_eval is None:
            eval_samples = list(corpus)
        else:
            eval_samples = select_eval_samples(
                model, corpus, n_eval, mode="correct", balanced=True,
                seed=derive_seed(seed, "select"))
    with _stage("explain"):
        explanations = []
        for m in methods:
            for s in eval_samples:
                if m == ORACLE_METHOD:
                    explanations.append(oracle_keyword_explanation(s, oracle))
                else:
                    explanations.append(explain(
                        model, s, m, seed=derive_seed(seed, "explain"),
                        **explain_params.get(m, {})))
    with _stage("tasks"):
        tasks = build_tasks(eval_samples, methods, ks, explanations)
    with _stage("plan"):
        # a batch may hold at most one task per sample, so the default cap
        # is the eval-sample count, not the task count
        bs = batch_size if batch_size is not None else min(100, len(eval_samples))
        plan = build_assignment(tasks, replication=replication,
                                batch_size=bs, seed=derive_seed(seed, "plan"))
    with _stage("annotate"):
        annotations = simulate_annotations(plan, tasks, oracle,
                                           seed=derive_seed(seed, "annotate"))
    with _stage("aggregate"):
        matrix = aggregate(annotations, tasks)
    with _stage("score"):
        report = build_report(matrix)
    with _stage("analyze"):
        flips = detect_flips(matrix) if len(ks) >= 2 else None
        overlap = overlap_matrix(explanations, eval_samples, overlap_k)
    return ExperimentResult(
        corpus=corpus, model=model, history=history, eval_samples=eval_samples,
        explanations=explanations, tasks=tasks, plan=plan,
        annotations=annotations, matrix=matrix, report=report, flips=flips,
        overlap=overlap)
