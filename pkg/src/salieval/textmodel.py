"""Tokenizer, vocabulary, and a small trainable self-attention classifier.

The classifier is a toy transformer encoder: word + position embeddings,
``layers`` blocks of multi-head self-attention plus a relu feed-forward
(residual connections, no layer norm, no biases — the op set of
:mod:`salieval.autodiff` is deliberately small), mean pooling over non-PAD
positions, and a linear class head. One word is one token; punctuation is
fed to the model and only ignored at display time.

Graphs are built per sample in two modes: ``train`` exposes every parameter
as a leaf so the optimizer can take gradients, ``explain`` freezes the
parameters as constants and exposes a single ``emb`` leaf holding the
combined word+position embeddings — the tensor every saliency method
differentiates against or perturbs.
"""

from __future__ import annotations

import dataclasses
import json
import string
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .autodiff import Graph, backward, forward
from .errors import DataError, GraphError

PAD_ID = 0
UNK_ID = 1
CHECKPOINT_VERSION = 1
_MASK_VALUE = -1e9
_PUNCT = set(string.punctuation)


@dataclass(frozen=True)
class WordRecord:
    surface: str
    is_punctuation: bool = False
    is_special: bool = False


@dataclass(frozen=True)
class Sample:
    id: str
    text: str
    words: tuple[WordRecord, ...]
    label: int                      # 1-based class index
    split: str = "train"            # train | eval | misclassified-eval

    def __post_init__(self):
        if self.label < 1:
            raise DataError(f"sample {self.id!r}: label must be >= 1, got {self.label}")
        if not any(not w.is_punctuation and not w.is_special for w in self.words):
            raise DataError(f"sample {self.id!r}: needs at least one plain word")


def tokenize(text: str) -> tuple[WordRecord, ...]:
    """Lowercased whitespace split; all-punctuation tokens are flagged."""
    if not text or not text.strip():
        raise DataError("cannot tokenize empty text")
    words = []
    for tok in text.lower().split():
        words.append(WordRecord(tok, is_punctuation=all(ch in _PUNCT for ch in tok)))
    return tuple(words)


def make_sample(sample_id: str, text: str, label: int, split: str = "train") -> Sample:
    return Sample(id=str(sample_id), text=text, words=tokenize(text), label=int(label),
                  split=split)


def load_corpus(path) -> list[Sample]:
    """Read JSON-lines of {"id", "text", "label"} with 1-based labels."""
    samples, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{ln}: invalid JSON ({exc})") from exc
            for key in ("id", "text", "label"):
                if key not in obj:
                    raise DataError(f"{path}:{ln}: missing field {key!r}")
            if not isinstance(obj["label"], int):
                raise DataError(f"{path}:{ln}: label must be an integer")
            if obj["id"] in seen:
                raise DataError(f"{path}:{ln}: duplicate sample id {obj['id']!r}")
            seen.add(obj["id"])
            samples.append(make_sample(obj["id"], obj["text"], obj["label"]))
    if not samples:
        raise DataError(f"{path}: empty corpus")
    return samples


def save_corpus(path, samples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps({"id": s.id, "text": s.text, "label": s.label}) + "\n")


class Vocab:
    """word -> id map with reserved PAD=0 and UNK=1."""

    def __init__(self, words):
        self.words = list(words)
        self._ids = {}
        for i, w in enumerate(self.words):
            if w in self._ids:
                raise DataError(f"duplicate vocab word {w!r}")
            self._ids[w] = i + 2

    @classmethod
    def build(cls, samples, max_size: int = 30000) -> "Vocab":
        if max_size < 3:
            raise DataError("vocab max_size must leave room beyond PAD/UNK")
        counts = Counter(w.surface for s in samples for w in s.words)
        ranked = sorted(counts, key=lambda w: (-counts[w], w))
        return cls(ranked[: max_size - 2])

    def __len__(self):
        return len(self.words) + 2

    def id_of(self, word: str) -> int:
        return self._ids.get(word, UNK_ID)

    def encode(self, words) -> np.ndarray:
        return np.array([self.id_of(w.surface) for w in words], dtype=np.int64)


@dataclass(frozen=True)
class ClassifierConfig:
    classes: int
    embed_dim: int = 64
    layers: int = 2
    heads: int = 4
    max_len: int = 256
    pooling: str = "mean"
    wordpiece_aggregation: str = "sum"   # hook for future subword tokenizers
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise DataError("need at least 2 classes")
        if self.layers < 1 or self.heads < 1:
            raise DataError("layers and heads must be >= 1")
        if self.embed_dim % self.heads:
            raise DataError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.max_len < 1:
            raise DataError("max_len must be >= 1")
        if self.pooling != "mean":
            raise DataError(f"unsupported pooling {self.pooling!r}")
        if self.wordpiece_aggregation != "sum":
            raise DataError(
                f"unsupported wordpiece_aggregation {self.wordpiece_aggregation!r}")


@dataclass(frozen=True)
class ModelOutput:
    logits: np.ndarray            # [C]
    confidence: np.ndarray        # softmax(logits), [C]
    attention: np.ndarray         # [L, H, T, T]
    input_embeddings: np.ndarray  # [T, d]
    predicted_class: int          # 1-based; argmax ties -> lowest index


@dataclass
class BuiltGraph:
    """A per-sample computation graph plus the node handles consumers need."""
    graph: Graph
    length: int
    emb: int | None               # explain-mode input leaf
    attention: list[int]          # softmax node per layer, each [H, T, T]
    logits: int
    confidence: int
    class_outputs: list[int]      # scalar node per class (pre-softmax logit)
    loss: int | None = None


class AttentionClassifier:
    """Toy multi-head self-attention text classifier (see module docstring)."""

    def __init__(self, config: ClassifierConfig, vocab: Vocab, params=None):
        self.config = config
        self.vocab = vocab
        self.params = params if params is not None else self._init_params()

    def _init_params(self):
        cfg = self.config
        d, dff = cfg.embed_dim, 2 * cfg.embed_dim
        rng = np.random.default_rng(cfg.seed)
        p = {
            "word_emb": rng.normal(0.0, 0.1, size=(len(self.vocab), d)),
            "pos_emb": rng.normal(0.0, 0.1, size=(cfg.max_len, d)),
            "w_cls": rng.normal(0.0, d ** -0.5, size=(d, cfg.classes)),
        }
        for l in range(cfg.layers):
            for n in ("wq", "wk", "wv", "wo"):
                p[f"l{l}_{n}"] = rng.normal(0.0, d ** -0.5, size=(d, d))
            p[f"l{l}_ff1"] = rng.normal(0.0, d ** -0.5, size=(d, dff))
            p[f"l{l}_ff2"] = rng.normal(0.0, dff ** -0.5, size=(dff, d))
        return p

    # -- encoding ---------------------------------------------------------

    def encode(self, sample: Sample) -> np.ndarray:
        """Token ids for a sample, truncated to max_len."""
        if not sample.words:
            raise DataError(f"sample {sample.id!r}: no tokens")
        return self.vocab.encode(sample.words)[: self.config.max_len]

    def embed(self, ids: np.ndarray) -> np.ndarray:
        """Combined word+position embeddings for a token-id sequence."""
        ids = self._check_ids(ids)
        return self.params["word_emb"][ids] + self.params["pos_emb"][: ids.size]

    def _check_ids(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size == 0:
            raise DataError("token ids must be a non-empty 1-D sequence")
        if ids.size > self.config.max_len:
            raise DataError(f"sequence length {ids.size} exceeds max_len")
        if ids.min() < 0 or ids.max() >= len(self.vocab):
            raise DataError("token id out of vocabulary range")
        return ids

    # -- graph construction ----------------------------------------------

    def build_graph(self, ids, mode: str = "explain", label: int | None = None) -> BuiltGraph:
        """Build the per-sample graph. mode='train' exposes parameter leaves
        (requires a 1-based label for the loss); mode='explain' freezes the
        parameters and exposes the 'emb' leaf instead."""
        if mode not in ("train", "explain"):
            raise DataError(f"unknown graph mode {mode!r}")
        ids = self._check_ids(ids)
        cfg = self.config
        T, d, H = int(ids.size), cfg.embed_dim, cfg.heads
        dh = d // H
        g = Graph()

        if mode == "train":
            def param(name):
                return g.leaf(name, self.params[name].shape)
            word_rows = g.gather(param("word_emb"), ids)
            pos_rows = g.gather(param("pos_emb"), np.arange(T))
            x = g.add(word_rows, pos_rows)
            emb_node = None
        else:
            def param(name):
                return g.const(self.params[name])
            x = emb_node = g.leaf("emb", (T, d))

        nonpad = ids != PAD_ID
        mask_node = None
        if not nonpad.all():
            row = np.where(nonpad, 0.0, _MASK_VALUE)
            mask_node = g.const(np.broadcast_to(row, (H, T, T)).copy())

        att_nodes = []
        for l in range(cfg.layers):
            def split_heads(node):
                return g.transpose(g.reshape(node, (T, H, dh)), (1, 0, 2))
            qh = split_heads(g.matmul(x, param(f"l{l}_wq")))
            kh = split_heads(g.matmul(x, param(f"l{l}_wk")))
            vh = split_heads(g.matmul(x, param(f"l{l}_wv")))
            scores = g.scale(g.matmul(qh, g.transpose(kh, (0, 2, 1))), dh ** -0.5)
            if mask_node is not None:
                scores = g.add(scores, mask_node)
            att = g.softmax(scores)
            att_nodes.append(att)
            merged = g.reshape(g.transpose(g.matmul(att, vh), (1, 0, 2)), (T, d))
            x = g.add(x, g.matmul(merged, param(f"l{l}_wo")))
            ff = g.matmul(g.relu(g.matmul(x, param(f"l{l}_ff1"))), param(f"l{l}_ff2"))
            x = g.add(x, ff)

        count = int(nonpad.sum())
        if count:
            pool_w = (nonpad / count).reshape(1, T)
        else:
            pool_w = np.full((1, T), 1.0 / T)   # degenerate all-PAD input
        pooled = g.matmul(g.const(pool_w), x)
        logits = g.reshape(g.matmul(pooled, param("w_cls")), (cfg.classes,))
        confidence = g.softmax(logits)
        class_outputs = [g.pick(logits, c, cfg.classes) for c in range(cfg.classes)]

        loss = None
        if mode == "train":
            if label is None or not 1 <= label <= cfg.classes:
                raise DataError(f"train graph needs a label in 1..{cfg.classes}")
            loss = g.cross_entropy(logits, label - 1)
        return BuiltGraph(graph=g, length=T, emb=emb_node, attention=att_nodes,
                          logits=logits, confidence=confidence,
                          class_outputs=class_outputs, loss=loss)

    # -- inference --------------------------------------------------------

    def forward_ids(self, ids) -> ModelOutput:
        bg = self.build_graph(ids, "explain")
        emb = self.embed(ids)
        vals = forward(bg.graph, {"emb": emb})
        logits = vals[bg.logits]
        return ModelOutput(
            logits=logits,
            confidence=vals[bg.confidence],
            attention=np.stack([vals[a] for a in bg.attention]),
            input_embeddings=emb,
            predicted_class=int(np.argmax(logits)) + 1,
        )

    def forward_full(self, sample: Sample) -> ModelOutput:
        return self.forward_ids(self.encode(sample))

    def infer_logits(self, ids) -> np.ndarray:
        """Graph-free forward returning only logits. Hot path for mask-based
        perturbation methods; cross-checked against forward_ids in tests."""
        ids = self._check_ids(ids)
        cfg, p = self.config, self.params
        T, d, H = int(ids.size), cfg.embed_dim, cfg.heads
        dh = d // H
        x = p["word_emb"][ids] + p["pos_emb"][:T]
        nonpad = ids != PAD_ID
        mask = np.where(nonpad, 0.0, _MASK_VALUE)
        for l in range(cfg.layers):
            qh = (x @ p[f"l{l}_wq"]).reshape(T, H, dh).transpose(1, 0, 2)
            kh = (x @ p[f"l{l}_wk"]).reshape(T, H, dh).transpose(1, 0, 2)
            vh = (x @ p[f"l{l}_wv"]).reshape(T, H, dh).transpose(1, 0, 2)
            scores = qh @ kh.transpose(0, 2, 1) * dh ** -0.5 + mask[None, None, :]
            att = _kernels.softmax_rows(
                np.ascontiguousarray(scores.reshape(-1, T))).reshape(H, T, T)
            merged = (att @ vh).transpose(1, 0, 2).reshape(T, d)
            x = x + merged @ p[f"l{l}_wo"]
            x = x + np.maximum(x @ p[f"l{l}_ff1"], 0.0) @ p[f"l{l}_ff2"]
        count = int(nonpad.sum())
        pool = nonpad / count if count else np.full(T, 1.0 / T)
        return pool @ x @ p["w_cls"]

    def predict(self, sample: Sample) -> int:
        return self.forward_full(sample).predicted_class

    # -- training ---------------------------------------------------------

    def fit(self, train_samples, val_samples=(), epochs: int = 5,
            learning_rate: float = 0.05) -> dict:
        """Plain SGD, batch size 1, fixed learning rate, seeded shuffling."""
        if not train_samples:
            raise DataError("empty training corpus")
        for s in list(train_samples) + list(val_samples):
            if s.label > self.config.classes:
                raise DataError(
                    f"sample {s.id!r}: label {s.label} exceeds {self.config.classes} classes")
        rng = np.random.default_rng(self.config.seed + 1)
        history = {"train_acc": [], "val_acc": []}
        for _ in range(int(epochs)):
            for i in rng.permutation(len(train_samples)):
                s = train_samples[int(i)]
                ids = self.encode(s)
                bg = self.build_graph(ids, "train", label=s.label)
                vals = forward(bg.graph, self.params)
                grads = backward(bg.graph, vals, bg.loss)
                for name, grad in grads.items():
                    self.params[name] -= learning_rate * grad
            history["train_acc"].append(evaluate(self, train_samples))
            if val_samples:
                history["val_acc"].append(evaluate(self, val_samples))
        return history

    # -- persistence ------------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "config": dataclasses.asdict(self.config),
            "vocab_words": self.vocab.words,
        }
        np.savez(path, __meta__=np.array(json.dumps(meta)), **self.params)

    @classmethod
    def load(cls, path) -> "AttentionClassifier":
        try:
            with np.load(path, allow_pickle=False) as npz:
                if "__meta__" not in npz:
                    raise DataError(f"{path}: not a model checkpoint (missing meta)")
                meta = json.loads(str(npz["__meta__"][()]))
                if meta.get("version") != CHECKPOINT_VERSION:
                    raise DataError(
                        f"{path}: unsupported checkpoint version {meta.get('version')!r}")
                params = {k: npz[k] for k in npz.files if k != "__meta__"}
        except OSError as exc:
            raise DataError(f"{path}: cannot read checkpoint ({exc})") from exc
        config = ClassifierConfig(**meta["config"])
        return cls(config, Vocab(meta["vocab_words"]), params=params)


def train(config: ClassifierConfig, corpus, epochs: int = 5,
          learning_rate: float = 0.05, val_samples=(),
          vocab_size: int = 30000) -> tuple[AttentionClassifier, dict]:
    """Build a vocab from the corpus, fit a fresh classifier, return both the
    model and its per-epoch accuracy history."""
    vocab = Vocab.build(corpus, max_size=vocab_size)
    model = AttentionClassifier(config, vocab)
    history = model.fit(corpus, val_samples, epochs=epochs, learning_rate=learning_rate)
    return model, history


def evaluate(model: AttentionClassifier, samples) -> float:
    if not samples:
        raise DataError("cannot evaluate on an empty sample list")
    hits = sum(model.predict(s) == s.label for s in samples)
    return hits / len(samples)


def select_eval_samples(model: AttentionClassifier, corpus, n: int,
                        mode: str = "correct", balanced: bool = True,
                        seed: int = 0) -> list[Sample]:
    """Pick n samples the model classifies correctly (or incorrectly), optionally
    balanced across true classes; deterministic for a given seed."""
    if mode not in ("correct", "misclassified"):
        raise DataError(f"unknown selection mode {mode!r}")
    C = model.config.classes
    want_correct = mode == "correct"
    split_name = "eval" if want_correct else "misclassified-eval"
    pools: dict[int, list[Sample]] = {c: [] for c in range(1, C + 1)}
    for s in corpus:
        if (model.predict(s) == s.label) == want_correct:
            pools[s.label].append(s)
    rng = np.random.default_rng(seed)
    chosen: list[Sample] = []
    if balanced:
        if n % C:
            raise DataError(f"cannot balance {n} samples across {C} classes")
        per = n // C
        short = {c: len(p) for c, p in pools.items() if len(p) < per}
        if short:
            raise DataError(f"not enough {mode} samples per class (need {per}, have {short})")
        for c in range(1, C + 1):
            idx = rng.choice(len(pools[c]), size=per, replace=False)
            chosen.extend(pools[c][int(i)] for i in np.sort(idx))
    else:
        flat = [s for c in range(1, C + 1) for s in pools[c]]
        if len(flat) < n:
            raise DataError(f"not enough {mode} samples (need {n}, have {len(flat)})")
        idx = rng.choice(len(flat), size=n, replace=False)
        chosen.extend(flat[int(i)] for i in np.sort(idx))
    return [dataclasses.replace(s, split=split_name) for s in chosen]
