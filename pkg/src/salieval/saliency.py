"""Per-word saliency scores for the attention classifier.

Eight methods, one real score per word position (punctuation positions are
scored too; they only become ineligible when picking top-k words):

* AllAttention / LastAttention — mean attention RECEIVED at a key position,
  averaged over heads and query positions (and layers for All); a
  ``direction="emitted"`` knob switches to row means. Class-agnostic.
* VanillaGradient — L2 norm over embedding dims of d logit[target]/d emb.
* InputXGrad — signed sum over embedding dims of emb * gradient.
* IntegratedGradient — right-endpoint Riemann sum of gradients along the
  straight path from a baseline; the completeness residual is recorded in
  ``params["completeness_residual"]``.
* DeepLIFT — (x - baseline) times the rescale multipliers from
  :func:`salieval.autodiff.backward_rescale`.
* LIME — weighted ridge fit of the target-class probability on binary
  keep/drop masks over non-punctuation words; dropped words become PAD.
* Random — seeded uniform noise, the floor every method must beat.

Stochastic methods derive their stream from (seed, sample id), so a fixed
seed gives every sample its own reproducible draw.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import backward, backward_rescale, forward
from .errors import DataError
from .textmodel import PAD_ID, AttentionClassifier, Sample

METHODS = (
    "AllAttention",
    "LastAttention",
    "VanillaGradient",
    "InputXGrad",
    "IntegratedGradient",
    "DeepLIFT",
    "LIME",
    "Random",
)

# extension point: synthetic scorers (e.g. a planted-keyword oracle used to
# exercise the pipeline) register here so their Explanation records validate
_EXTRA_METHODS: set[str] = set()


def register_method(name: str) -> None:
    if not name or name in METHODS:
        raise DataError(f"cannot register method {name!r}")
    _EXTRA_METHODS.add(name)


@dataclass(frozen=True)
class Explanation:
    sample_id: str
    method: str
    scores: tuple[float, ...]     # one per word position, full sample length
    target_class: int             # 1-based; 0 = not applicable (model-free Random)
    predicted_class: int
    confidence: float             # model probability of the predicted class
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if self.method not in METHODS and self.method not in _EXTRA_METHODS:
            raise DataError(f"unknown method {self.method!r}")
        if not all(math.isfinite(s) for s in self.scores):
            raise DataError(f"{self.sample_id}/{self.method}: non-finite score")


@dataclass(frozen=True)
class TopK:
    k: int
    positions: tuple[int, ...]    # word positions, descending score


def _sample_rng(seed: int, sample_id: str) -> np.random.Generator:
    digest = hashlib.sha256(sample_id.encode("utf-8")).digest()
    return np.random.default_rng((int(seed), int.from_bytes(digest[:8], "little")))


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


class _Run:
    """One explain-mode evaluation of the model on a sample."""

    def __init__(self, model: AttentionClassifier, sample: Sample):
        self.model = model
        self.sample = sample
        self.ids = model.encode(sample)
        self.bg = model.build_graph(self.ids, "explain")
        self.emb = model.embed(self.ids)
        self.values = forward(self.bg.graph, {"emb": self.emb})
        self.logits = self.values[self.bg.logits]
        self.confidence_vec = self.values[self.bg.confidence]
        self.predicted = int(np.argmax(self.logits)) + 1

    @property
    def confidence(self) -> float:
        return float(self.confidence_vec[self.predicted - 1])

    def attention(self) -> np.ndarray:
        return np.stack([self.values[a] for a in self.bg.attention])

    def resolve_target(self, target_class) -> int:
        if target_class is None:
            return self.predicted
        t = int(target_class)
        if not 1 <= t <= self.model.config.classes:
            raise DataError(
                f"target class {t} outside 1..{self.model.config.classes}")
        return t

    def gradient(self, target: int, emb_value=None):
        """(d logit[target] / d emb, forward values), optionally at another
        input point than the sample's own embeddings."""
        vals = self.values if emb_value is None else forward(
            self.bg.graph, {"emb": emb_value})
        out = self.bg.class_outputs[target - 1]
        return backward(self.bg.graph, vals, out)["emb"], vals

    def baseline(self, spec) -> np.ndarray:
        if isinstance(spec, np.ndarray):
            if spec.shape != self.emb.shape:
                raise DataError(f"baseline shape {spec.shape} != {self.emb.shape}")
            return spec
        if spec == "zero":
            return np.zeros_like(self.emb)
        if spec == "pad":
            return self.model.embed(np.full(self.ids.size, PAD_ID, dtype=np.int64))
        raise DataError(f"unknown baseline {spec!r}")

    def finish(self, method, scores_t, target, params, seed=None) -> Explanation:
        # model length may be shorter than the sample (truncation): the
        # truncated tail keeps explicit zero scores so len(scores)==word count
        full = np.zeros(len(self.sample.words))
        full[: scores_t.size] = scores_t
        if not np.all(np.isfinite(full)):
            raise DataError(f"{self.sample.id}/{method}: non-finite scores")
        return Explanation(
            sample_id=self.sample.id, method=method,
            scores=tuple(float(s) for s in full), target_class=target,
            predicted_class=self.predicted, confidence=self.confidence,
            params=params, seed=seed)


def _reduce_attention(att: np.ndarray, last_only: bool, direction: str) -> np.ndarray:
    """[L, H, T, T] -> per-position score. received = column mean over queries,
    emitted = row mean over keys."""
    if direction not in ("received", "emitted"):
        raise DataError(f"unknown attention direction {direction!r}")
    if last_only:
        att = att[-1:]
    axes = (0, 1, 2) if direction == "received" else (0, 1, 3)
    return att.mean(axis=axes)


def explain_all_attention(model, sample, direction: str = "received") -> Explanation:
    run = _Run(model, sample)
    scores = _reduce_attention(run.attention(), False, direction)
    return run.finish("AllAttention", scores, run.predicted, {"direction": direction})


def explain_last_attention(model, sample, direction: str = "received") -> Explanation:
    run = _Run(model, sample)
    scores = _reduce_attention(run.attention(), True, direction)
    return run.finish("LastAttention", scores, run.predicted, {"direction": direction})


def explain_vanilla_gradient(model, sample, target_class=None) -> Explanation:
    run = _Run(model, sample)
    t = run.resolve_target(target_class)
    grad, _ = run.gradient(t)
    scores = np.linalg.norm(grad, axis=1)
    return run.finish("VanillaGradient", scores, t, {"reduction": "l2"})


def explain_input_x_grad(model, sample, target_class=None) -> Explanation:
    run = _Run(model, sample)
    t = run.resolve_target(target_class)
    grad, _ = run.gradient(t)
    scores = (run.emb * grad).sum(axis=1)
    return run.finish("InputXGrad", scores, t, {"reduction": "sum"})


def explain_integrated_gradient(model, sample, target_class=None, steps: int = 50,
                                baseline="zero") -> Explanation:
    if steps < 1:
        raise DataError(f"steps must be >= 1, got {steps}")
    run = _Run(model, sample)
    t = run.resolve_target(target_class)
    b = run.baseline(baseline)
    delta = run.emb - b
    total = np.zeros_like(run.emb)
    for m in range(1, steps + 1):
        grad, _ = run.gradient(t, b + (m / steps) * delta)
        total += grad
    scores = (delta * (total / steps)).sum(axis=1)
    _, ref_vals = run.gradient(t, b)
    span = float(run.logits[t - 1]) - float(ref_vals[run.bg.logits][t - 1])
    residual = abs(float(scores.sum()) - span)
    name = baseline if isinstance(baseline, str) else "custom"
    return run.finish(
        "IntegratedGradient", scores, t,
        {"steps": int(steps), "baseline": name, "completeness_residual": residual})


def explain_deeplift(model, sample, target_class=None, baseline="zero") -> Explanation:
    run = _Run(model, sample)
    t = run.resolve_target(target_class)
    b = run.baseline(baseline)
    ref_vals = forward(run.bg.graph, {"emb": b})
    out = run.bg.class_outputs[t - 1]
    mult = backward_rescale(run.bg.graph, run.values, out, ref_vals)["emb"]
    scores = ((run.emb - b) * mult).sum(axis=1)
    name = baseline if isinstance(baseline, str) else "custom"
    return run.finish("DeepLIFT", scores, t, {"baseline": name})


def explain_lime(model, sample, target_class=None, n_samples: int = 1000,
                 kernel_width: float = 0.25, ridge: float = 1.0,
                 seed: int = 0) -> Explanation:
    if n_samples < len(sample.words):
        raise DataError(
            f"LIME needs n_samples >= word count ({len(sample.words)}), got {n_samples}")
    if ridge <= 0 or kernel_width <= 0:
        raise DataError("ridge and kernel_width must be positive")
    run = _Run(model, sample)
    t = run.resolve_target(target_class)
    words = sample.words[: run.ids.size]
    eligible = [p for p, w in enumerate(words)
                if not w.is_punctuation and not w.is_special]
    n_elig = len(eligible)
    if not n_elig:
        raise DataError(f"sample {sample.id!r}: no maskable words within model length")

    rng = _sample_rng(seed, sample.id)
    masks = np.ones((n_samples, n_elig))
    for i in range(1, n_samples):           # row 0 stays the all-ones mask
        u = int(rng.integers(1, n_elig + 1))
        keep = rng.choice(n_elig, size=u, replace=False)
        masks[i] = 0.0
        masks[i, keep] = 1.0

    elig_idx = np.array(eligible)
    y = np.empty(n_samples)
    for i in range(n_samples):
        mids = run.ids.copy()
        mids[elig_idx[masks[i] == 0.0]] = PAD_ID
        y[i] = _softmax(model.infer_logits(mids))[t - 1]

    # kernel weight from cosine distance to the all-ones mask
    kept = masks.sum(axis=1)
    cos = np.sqrt(kept / n_elig)
    weights = np.exp(-((1.0 - cos) ** 2) / kernel_width ** 2)

    # ridge on the mask features with an unpenalized intercept column
    X = np.hstack([masks, np.ones((n_samples, 1))])
    penalty = np.diag(np.append(np.full(n_elig, ridge), 0.0))
    A = X.T @ (X * weights[:, None]) + penalty
    coef = np.linalg.solve(A, X.T @ (weights * y))

    scores = np.zeros(run.ids.size)
    scores[elig_idx] = coef[:n_elig]
    return run.finish(
        "LIME", scores, t,
        {"n_samples": int(n_samples), "kernel_width": float(kernel_width),
         "ridge": float(ridge)}, seed=seed)


def explain_random(sample, seed: int = 0, model=None) -> Explanation:
    """Uniform(0,1) noise per word. With a model the prediction fields are
    filled in; without one they carry the 0 / 0.0 'not applicable' sentinels."""
    rng = _sample_rng(seed, sample.id)
    scores = tuple(float(s) for s in rng.uniform(size=len(sample.words)))
    if model is None:
        return Explanation(sample_id=sample.id, method="Random", scores=scores,
                           target_class=0, predicted_class=0, confidence=0.0,
                           params={}, seed=seed)
    run = _Run(model, sample)
    return Explanation(sample_id=sample.id, method="Random", scores=scores,
                       target_class=run.predicted, predicted_class=run.predicted,
                       confidence=run.confidence, params={}, seed=seed)


_DISPATCH = {
    "AllAttention": explain_all_attention,
    "LastAttention": explain_last_attention,
    "VanillaGradient": explain_vanilla_gradient,
    "InputXGrad": explain_input_x_grad,
    "IntegratedGradient": explain_integrated_gradient,
    "DeepLIFT": explain_deeplift,
    "LIME": explain_lime,
}


def explain(model, sample, method: str, target_class=None, seed: int = 0,
            **params) -> Explanation:
    """Uniform front door: dispatch a method by name."""
    if method == "Random":
        return explain_random(sample, seed=seed, model=model)
    if method not in _DISPATCH:
        raise DataError(f"unknown method {method!r}")
    fn = _DISPATCH[method]
    if method in ("AllAttention", "LastAttention"):
        return fn(model, sample, **params)
    if method == "LIME":
        return fn(model, sample, target_class=target_class, seed=seed, **params)
    return fn(model, sample, target_class=target_class, **params)


def top_k_words(explanation: Explanation, k: int, sample: Sample) -> TopK:
    """Positions of the k highest signed scores among non-punctuation,
    non-special words; ties break toward the lower position; fewer eligible
    words than k shortens the list."""
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if len(explanation.scores) != len(sample.words):
        raise DataError(
            f"sample {sample.id!r}: {len(explanation.scores)} scores for "
            f"{len(sample.words)} words")
    eligible = np.array([p for p, w in enumerate(sample.words)
                         if not w.is_punctuation and not w.is_special], dtype=int)
    scores = np.asarray(explanation.scores)[eligible]
    order = np.argsort(-scores, kind="stable")       # ties keep position order
    return TopK(k=int(k), positions=tuple(int(p) for p in eligible[order[:k]]))


def save_explanations(path, explanations) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in explanations:
            fh.write(json.dumps({
                "sample_id": e.sample_id, "method": e.method,
                "target_class": e.target_class, "scores": list(e.scores),
                "predicted_class": e.predicted_class,
                "confidence": e.confidence, "params": e.params, "seed": e.seed,
            }) + "\n")


def load_explanations(path) -> list[Explanation]:
    """Read the explanation JSON-lines dump (also the ingestion format for
    externally produced explanations)."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{ln}: invalid JSON ({exc})") from exc
            for key in ("sample_id", "method", "target_class", "scores",
                        "predicted_class", "confidence"):
                if key not in obj:
                    raise DataError(f"{path}:{ln}: missing field {key!r}")
            if not isinstance(obj["scores"], list):
                raise DataError(f"{path}:{ln}: scores must be a list")
            try:
                out.append(Explanation(
                    sample_id=str(obj["sample_id"]), method=obj["method"],
                    scores=tuple(float(s) for s in obj["scores"]),
                    target_class=int(obj["target_class"]),
                    predicted_class=int(obj["predicted_class"]),
                    confidence=float(obj["confidence"]),
                    params=obj.get("params") or {}, seed=obj.get("seed")))
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}:{ln}: {exc}") from exc
    return out
