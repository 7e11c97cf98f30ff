"""Command-line driver for the whole evaluation pipeline.

Each subcommand covers one stage and reads/writes well-known files in the
output directory, so the stages can be run piecemeal or replayed; `simulate`
runs everything end to end on a synthetic corpus. All randomness derives
from one root seed with per-stage sub-seeds, making every command idempotent:
identical inputs and seeds produce byte-identical outputs.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np
import yaml

from . import analytics, scoring
from .errors import DataError
from .saliency import METHODS, explain, load_explanations, save_explanations
from .service import AnnotationStore, audit_agreement
from .simulation import (ORACLE_METHOD, CorpusSpec, OracleConfig, derive_seed,
                         gen_corpus, oracle_keyword_explanation, run_experiment)
from .tasks import (build_assignment, build_tasks, load_plan, load_tasks,
                    save_plan, save_tasks)
from .textmodel import (AttentionClassifier, ClassifierConfig, load_corpus,
                        save_corpus, select_eval_samples, train)

F_CORPUS = "corpus.jsonl"
F_MODEL = "model.npz"
F_HISTORY = "history.json"
F_EVAL = "eval_samples.jsonl"
F_EXPL = "explanations.jsonl"
F_TASKS = "tasks.jsonl"
F_PLAN = "plan.json"
F_ANNOT = "annotations.jsonl"
F_MATRIX = "matrix.json"
F_SCORE = "score"
F_FLIPS = "flips"
F_HIST = "flip_histogram.csv"
F_OVERLAP = "overlap"
F_MISC = "misclassified"
F_SUFFCOMP = "suffcomp"
F_AUDIT = "audit.json"
F_STORE = "store.jsonl"
F_REPORT = "report.txt"

DEFAULT_KS = (5, 10, 20, 30, 40)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


@dataclasses.dataclass
class ExperimentConfig:
    out: str
    seed: int
    corpus_path: str | None
    synthetic: CorpusSpec | None
    model: ClassifierConfig
    methods: tuple[str, ...]
    ks: tuple[int, ...]
    replication: int
    batch_size: int
    epochs: int
    learning_rate: float
    eval_n: int | None
    eval_mode: str
    oracle_noise: float
    oracle_idk: bool
    explain_params: dict
    compact_dots: bool
    mask_mode: str
    service: dict

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)


def _field(cfg: dict, name: str, default, kind):
    value = cfg.get(name, default)
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise DataError(f"config field {name!r}: {exc}") from exc


def load_config(path: str, out_override=None, seed_override=None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise DataError(f"config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise DataError(f"config file {path}: invalid YAML ({exc})") from exc
    if not isinstance(raw, dict):
        raise DataError(f"config file {path}: top level must be a mapping")

    ks = tuple(int(k) for k in raw.get("ks", DEFAULT_KS))
    if not ks or any(b <= a for a, b in zip(ks, ks[1:])):
        raise DataError("config field 'ks': must be strictly increasing")
    methods = tuple(str(m) for m in raw.get("methods", METHODS))
    if not methods:
        raise DataError("config field 'methods': must be nonempty")
    legal = set(METHODS) | {ORACLE_METHOD}
    unknown = [m for m in methods if m not in legal]
    if unknown:
        raise DataError(f"config field 'methods': unknown {unknown}")
    if len(set(methods)) != len(methods):
        raise DataError("config field 'methods': duplicates")

    corpus_path = raw.get("corpus")
    synthetic = None
    if "synthetic" in raw:
        syn = dict(raw["synthetic"])
        if "keywords" in syn:
            syn["keywords"] = tuple(tuple(str(w) for w in ws)
                                    for ws in syn["keywords"])
        for rng_field in ("words_per_sample", "keywords_per_sample",
                          "misleading_per_sample"):
            if rng_field in syn:
                syn[rng_field] = tuple(int(x) for x in syn[rng_field])
        try:
            synthetic = CorpusSpec(**syn)
        except TypeError as exc:
            raise DataError(f"config field 'synthetic': {exc}") from exc
    if (corpus_path is None) == (synthetic is None):
        raise DataError("config needs exactly one of 'corpus' or 'synthetic'")

    if "model" not in raw:
        raise DataError("config field 'model': required")
    try:
        model = ClassifierConfig(**raw["model"])
    except TypeError as exc:
        raise DataError(f"config field 'model': {exc}") from exc

    eval_cfg = raw.get("eval", {}) or {}
    oracle_cfg = raw.get("oracle", {}) or {}
    noise = float(oracle_cfg.get("noise", 0.0))
    if not 0.0 <= noise <= 1.0:
        raise DataError("config field 'oracle.noise': must be in [0, 1]")
    mask_mode = str(raw.get("mask_mode", "pad"))
    if mask_mode not in ("pad", "delete"):
        raise DataError("config field 'mask_mode': must be 'pad' or 'delete'")

    cfg = ExperimentConfig(
        out=str(out_override or raw.get("out", "out")),
        seed=int(seed_override if seed_override is not None
                 else raw.get("seed", 0)),
        corpus_path=None if corpus_path is None else str(corpus_path),
        synthetic=synthetic,
        model=model,
        methods=methods,
        ks=ks,
        replication=_field(raw, "replication", 5, int),
        batch_size=_field(raw, "batch_size", 100, int),
        epochs=_field(raw, "epochs", 5, int),
        learning_rate=_field(raw, "learning_rate", 0.05, float),
        eval_n=None if eval_cfg.get("n") is None else int(eval_cfg["n"]),
        eval_mode=str(eval_cfg.get("mode", "correct")),
        oracle_noise=noise,
        oracle_idk=bool(oracle_cfg.get("idk_when_no_keyword", True)),
        explain_params={str(m): dict(p) for m, p in
                        (raw.get("explain_params") or {}).items()},
        compact_dots=bool(raw.get("compact_dots", False)),
        mask_mode=mask_mode,
        service=dict(raw.get("service") or {}),
    )
    if cfg.replication < 1:
        raise DataError("config field 'replication': must be >= 1")
    if cfg.batch_size < 1:
        raise DataError("config field 'batch_size': must be >= 1")
    if cfg.epochs < 1:
        raise DataError("config field 'epochs': must be >= 1")
    return cfg


def _require(path: str, produced_by: str) -> str:
    if not os.path.exists(path):
        raise DataError(f"missing {path} — run `salieval {produced_by}` first")
    return path


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")


def _ensure_out(cfg: ExperimentConfig) -> None:
    os.makedirs(cfg.out, exist_ok=True)


def _load_model(cfg) -> AttentionClassifier:
    return AttentionClassifier.load(_require(cfg.path(F_MODEL), "train"))


def _load_pipeline_corpus(cfg):
    if cfg.synthetic is not None:
        return load_corpus(_require(cfg.path(F_CORPUS), "train"))
    return load_corpus(_require(cfg.corpus_path, "train (check 'corpus' path)"))


def _load_eval(cfg):
    return load_corpus(_require(cfg.path(F_EVAL), "explain"))


def _load_expl(cfg):
    return load_explanations(_require(cfg.path(F_EXPL), "explain"))


def _rebuild_tasks(cfg, samples=None, explanations=None):
    """Server-side task set, ground truth included (the on-disk task file is
    worker-facing and deliberately omits it)."""
    samples = samples if samples is not None else _load_eval(cfg)
    explanations = explanations if explanations is not None else _load_expl(cfg)
    methods = [m for m in cfg.methods if any(e.method == m for e in explanations)]
    if not methods:
        raise DataError("no configured method has explanations on file")
    return build_tasks(samples, methods, cfg.ks, explanations,
                       compact_dots=cfg.compact_dots)


def _oracle(cfg) -> OracleConfig:
    if cfg.synthetic is None:
        raise DataError("simulation needs a 'synthetic' corpus spec "
                        "(the keyword oracle has no keyword map otherwise)")
    return OracleConfig.from_spec(cfg.synthetic, noise=cfg.oracle_noise,
                                  idk_when_no_keyword=cfg.oracle_idk)


# -- commands -------------------------------------------------------------

def cmd_train(cfg: ExperimentConfig, args) -> int:
    _ensure_out(cfg)
    if cfg.synthetic is not None:
        corpus = gen_corpus(cfg.synthetic)
    else:
        corpus = load_corpus(_require(cfg.corpus_path, "train (check 'corpus' path)"))
    save_corpus(cfg.path(F_CORPUS), corpus)
    model, history = train(cfg.model, corpus, epochs=cfg.epochs,
                           learning_rate=cfg.learning_rate)
    model.save(cfg.path(F_MODEL))
    _write_json(cfg.path(F_HISTORY), history)
    print(f"trained on {len(corpus)} samples, {cfg.epochs} epochs, "
          f"final train accuracy {history['train_acc'][-1]:.3f}")
    return 0


def cmd_explain(cfg: ExperimentConfig, args) -> int:
    _ensure_out(cfg)
    model = _load_model(cfg)
    corpus = _load_pipeline_corpus(cfg)
    if cfg.eval_n is None:
        eval_samples = list(corpus)
    else:
        eval_samples = select_eval_samples(
            model, corpus, cfg.eval_n, mode=cfg.eval_mode, balanced=True,
            seed=derive_seed(cfg.seed, "select"))
    save_corpus(cfg.path(F_EVAL), eval_samples)

    methods = [args.method] if getattr(args, "method", None) else list(cfg.methods)
    bad = [m for m in methods if m not in METHODS and m != ORACLE_METHOD]
    if bad:
        raise DataError(f"cannot explain with {bad}: not a known method")
    params = {m: dict(cfg.explain_params.get(m, {})) for m in methods}
    if getattr(args, "steps", None) is not None:
        params.setdefault("IntegratedGradient", {})["steps"] = args.steps
    if getattr(args, "lime_samples", None) is not None:
        params.setdefault("LIME", {})["n_samples"] = args.lime_samples

    explanations = []
    for m in methods:
        for s in eval_samples:
            if m == ORACLE_METHOD:
                explanations.append(oracle_keyword_explanation(s, _oracle(cfg)))
            else:
                explanations.append(explain(model, s, m,
                                            seed=derive_seed(cfg.seed, "explain"),
                                            **params.get(m, {})))
    save_explanations(cfg.path(F_EXPL), explanations)
    print(f"explained {len(eval_samples)} samples x {len(methods)} methods")
    return 0


def cmd_overlap(cfg: ExperimentConfig, args) -> int:
    _ensure_out(cfg)
    om = analytics.overlap_matrix(_load_expl(cfg), _load_eval(cfg), args.k)
    _write_json(cfg.path(F_OVERLAP + ".json"), analytics.overlap_to_json(om))
    text = analytics.format_overlap(om)
    _write_text(cfg.path(F_OVERLAP + ".txt"), text)
    print(text)
    return 0


def cmd_gen_tasks(cfg: ExperimentConfig, args) -> int:
    _ensure_out(cfg)
    tasks = _rebuild_tasks(cfg)
    save_tasks(cfg.path(F_TASKS), tasks)
    print(f"wrote {len(tasks)} tasks")
    return 0


def cmd_plan(cfg: ExperimentConfig, args) -> int:
    _ensure_out(cfg)
    tasks = load_tasks(_require(cfg.path(F_TASKS), "gen-tasks"))
    plan = build_assignment(tasks, replication=cfg.replication,
                            batch_size=min(cfg.batch_size,
                                           len({t.sample_id for t in tasks})),
                            seed=derive_seed(cfg.seed, "plan"))
    save_plan(cfg.path(F_PLAN), plan)
    print(f"{len(plan.batches)} batches of {plan.batch_size}, "
          f"replication {plan.replication}")
    return 0


def cmd_serve(cfg: ExperimentConfig, args) -> int:
    from .service import serve
    token = (args.admin_token or cfg.service.get("admin_token")
             or os.environ.get("SALIEVAL_ADMIN_TOKEN"))
    if not token:
        raise DataError("no admin token: set service.admin_token, "
                        "--admin-token, or SALIEVAL_ADMIN_TOKEN")
    serve(_require(cfg.path(F_PLAN), "plan"),
          _require(cfg.path(F_TASKS), "gen-tasks"),
          cfg.path(F_STORE), token,
          host=args.host or cfg.service.get("host", "127.0.0.1"),
          port=int(args.port or cfg.service.get("port", 8000)))
    return 0


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    _ensure_out(cfg)
    if cfg.synthetic is None:
        raise DataError("simulate needs a 'synthetic' corpus spec")
    result = run_experiment(
        cfg.synthetic, cfg.model, cfg.methods, cfg.ks,
        replication=cfg.replication, oracle=_oracle(cfg), seed=cfg.seed,
        epochs=cfg.epochs, learning_rate=cfg.learning_rate,
        n_eval=cfg.eval_n, batch_size=min(cfg.batch_size, cfg.synthetic.samples),
        overlap_k=args.overlap_k, explain_params=cfg.explain_params)

    save_corpus(cfg.path(F_CORPUS), result.corpus)
    result.model.save(cfg.path(F_MODEL))
    _write_json(cfg.path(F_HISTORY), result.history)
    save_corpus(cfg.path(F_EVAL), result.eval_samples)
    save_explanations(cfg.path(F_EXPL), result.explanations)
    save_tasks(cfg.path(F_TASKS), result.tasks)
    save_plan(cfg.path(F_PLAN), result.plan)
    with open(cfg.path(F_ANNOT), "w", encoding="utf-8") as fh:
        for a in result.annotations:
            fh.write(json.dumps(a, sort_keys=True) + "\n")
    scoring.save_matrix(cfg.path(F_MATRIX), result.matrix)
    _write_score(cfg, result.report)
    if result.flips is not None:
        _write_flips(cfg, result.flips)
    _write_json(cfg.path(F_OVERLAP + ".json"),
                analytics.overlap_to_json(result.overlap))
    _write_text(cfg.path(F_OVERLAP + ".txt"),
                analytics.format_overlap(result.overlap))
    _write_misclassified(cfg, result.matrix)
    _bundle_report(cfg)
    print(scoring.format_report(result.report))
    return 0


def _parse_annotation_lines(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{ln}: invalid JSON ({exc})") from exc
            for key in ("task_id", "label"):
                if key not in obj:
                    raise DataError(f"{path}:{ln}: missing field {key!r}")
            if obj.get("rejected"):
                continue                      # service export, unfiltered form
            out.append(obj)
    return out


def cmd_aggregate(cfg: ExperimentConfig, args) -> int:
    _ensure_out(cfg)
    annotations = _parse_annotation_lines(
        _require(cfg.path(F_ANNOT), "simulate (or export)"))
    am = scoring.aggregate(annotations, _rebuild_tasks(cfg))
    scoring.save_matrix(cfg.path(F_MATRIX), am)
    print(f"aggregated {len(annotations)} annotations into "
          f"{am.A.shape[0]}x{am.A.shape[1]}x{am.A.shape[2]} outcomes; "
          f"{len(am.uncovered)} uncovered")
    return 0


def _load_am(cfg):
    return scoring.load_matrix(_require(cfg.path(F_MATRIX), "aggregate"))


def _write_score(cfg, report) -> None:
    scoring.save_report(cfg.path(F_SCORE + ".json"), report)
    _write_text(cfg.path(F_SCORE + ".txt"), scoring.format_report(report))


def cmd_score(cfg: ExperimentConfig, args) -> int:
    _ensure_out(cfg)
    report = scoring.build_report(_load_am(cfg),
                                  baseline_in_weights=not args.exclude_baseline)
    _write_score(cfg, report)
    print(scoring.format_report(report))
    return 0


def _write_flips(cfg, rep) -> None:
    _write_json(cfg.path(F_FLIPS + ".json"), analytics.flip_report_to_json(rep))
    _write_text(cfg.path(F_FLIPS + ".txt"), analytics.format_flip_report(rep))
    _write_text(cfg.path(F_HIST), analytics.histogram_csv(rep))


def cmd_flips(cfg: ExperimentConfig, args) -> int:
    _ensure_out(cfg)
    rep = analytics.detect_flips(_load_am(cfg))
    _write_flips(cfg, rep)
    print(analytics.format_flip_report(rep))
    return 0


def _write_misclassified(cfg, am) -> None:
    rep = analytics.misclassified_report(am)
    _write_json(cfg.path(F_MISC + ".json"), rep)
    _write_text(cfg.path(F_MISC + ".txt"), analytics.format_misclassified(rep))


def cmd_suffcomp(cfg: ExperimentConfig, args) -> int:
    _ensure_out(cfg)
    model = _load_model(cfg)
    samples = {s.id: s for s in _load_eval(cfg)}
    explanations = _load_expl(cfg)
    methods = [m for m in cfg.methods if any(e.method == m for e in explanations)]
    by_ms = {(e.method, e.sample_id): e for e in explanations}
    suff = np.zeros((len(methods), len(cfg.ks)))
    comp = np.zeros_like(suff)
    for j, m in enumerate(methods):
        for x, k in enumerate(cfg.ks):
            su, co = [], []
            for sid, s in samples.items():
                e = by_ms.get((m, sid))
                if e is None:
                    raise DataError(f"no {m} explanation for sample {sid}")
                a, b = analytics.sufficiency_comprehensiveness(
                    model, s, e, k, mode=cfg.mask_mode)
                su.append(a)
                co.append(b)
            suff[j, x] = float(np.mean(su))
            comp[j, x] = float(np.mean(co))
    obj = {"methods": methods, "ks": list(cfg.ks), "mask_mode": cfg.mask_mode,
           "sufficiency": suff.tolist(), "comprehensiveness": comp.tolist()}
    _write_json(cfg.path(F_SUFFCOMP + ".json"), obj)
    lines = [f"mean confidence drops over {len(samples)} samples "
             f"({cfg.mask_mode} masking)"]
    for title, table in (("sufficiency (keep top-k)", suff),
                         ("comprehensiveness (drop top-k)", comp)):
        lines.append(title)
        header = ["method"] + [f"k={k}" for k in cfg.ks]
        rows = [header] + [[m] + [f"{table[j, x]:+.3f}"
                                  for x in range(len(cfg.ks))]
                           for j, m in enumerate(methods)]
        widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
        lines += ["  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                            for i, (c, w) in enumerate(zip(r, widths)))
                  for r in rows]
    _write_text(cfg.path(F_SUFFCOMP + ".txt"), "\n".join(lines))
    print("\n".join(lines))
    return 0


def cmd_audit(cfg: ExperimentConfig, args) -> int:
    _ensure_out(cfg)
    am = _load_am(cfg)
    tasks = _rebuild_tasks(cfg)
    si = {s: i for i, s in enumerate(am.sample_ids)}
    mi = {m: j for j, m in enumerate(am.methods)}
    ki = {k: x for x, k in enumerate(am.ks)}
    crowd, truth = {}, {}
    for t in tasks:
        if t.sample_id in si and t.method in mi and t.k in ki:
            crowd[t.task_id] = int(am.A[si[t.sample_id], mi[t.method], ki[t.k]])
            truth[t.task_id] = t.ground_truth
    expert = {}
    with open(_require(args.expert, "audit (provide --expert FILE)"),
              encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            expert[str(obj["task_id"])] = int(obj["label"])
    out = audit_agreement(crowd, expert, truth)
    _write_json(cfg.path(F_AUDIT), out)
    print(f"agreement {out['agreement']:.3f} over {out['compared']} tasks"
          + (f", {len(out['skipped'])} without expert labels"
             if out["skipped"] else ""))
    return 0


def cmd_export(cfg: ExperimentConfig, args) -> int:
    _ensure_out(cfg)
    plan = load_plan(_require(cfg.path(F_PLAN), "plan"))
    tasks = load_tasks(_require(cfg.path(F_TASKS), "gen-tasks"))
    store = AnnotationStore(plan, tasks,
                            log_path=_require(cfg.path(F_STORE), "serve"))
    try:
        text = store.export(accepted_only=not args.all)
    finally:
        store.close()
    with open(cfg.path(F_ANNOT), "w", encoding="utf-8") as fh:
        fh.write(text)
    print(f"exported {len(text.splitlines())} annotations")
    return 0


def cmd_report(cfg: ExperimentConfig, args) -> int:
    _ensure_out(cfg)
    am = _load_am(cfg)
    _write_score(cfg, scoring.build_report(am))
    if len(am.ks) >= 2:
        _write_flips(cfg, analytics.detect_flips(am))
    om = analytics.overlap_matrix(_load_expl(cfg), _load_eval(cfg), args.overlap_k)
    _write_json(cfg.path(F_OVERLAP + ".json"), analytics.overlap_to_json(om))
    _write_text(cfg.path(F_OVERLAP + ".txt"), analytics.format_overlap(om))
    _write_misclassified(cfg, am)
    _bundle_report(cfg)
    print(f"report written to {cfg.path(F_REPORT)}")
    return 0


def _bundle_report(cfg) -> None:
    sections = []
    for title, name in (("METHOD SCORES", F_SCORE + ".txt"),
                        ("TOP-K OVERLAP", F_OVERLAP + ".txt"),
                        ("FLIPS / AIDS", F_FLIPS + ".txt"),
                        ("RAW PASS COUNTS", F_MISC + ".txt")):
        path = cfg.path(name)
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                sections.append(f"== {title} ==\n{fh.read().rstrip()}\n")
    _write_text(cfg.path(F_REPORT), "\n".join(sections))


COMMANDS = {
    "train": cmd_train,
    "explain": cmd_explain,
    "overlap": cmd_overlap,
    "gen-tasks": cmd_gen_tasks,
    "plan": cmd_plan,
    "serve": cmd_serve,
    "simulate": cmd_simulate,
    "aggregate": cmd_aggregate,
    "score": cmd_score,
    "flips": cmd_flips,
    "suffcomp": cmd_suffcomp,
    "audit": cmd_audit,
    "export": cmd_export,
    "report": cmd_report,
}


def build_parser() -> _Parser:
    parser = _Parser(prog="salieval",
                     description="crowd evaluation pipeline for word-saliency "
                                 "explanations")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", "-c", default="experiment.yaml",
                       help="experiment config file (YAML)")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None,
                       help="root seed override")

    for name in COMMANDS:
        p = sub.add_parser(name)
        common(p)
        if name == "explain":
            p.add_argument("--method", default=None,
                           help="explain with a single method only")
            p.add_argument("--steps", type=int, default=None,
                           help="IntegratedGradient steps")
            p.add_argument("--lime-samples", type=int, default=None,
                           help="LIME perturbation count")
        if name in ("overlap",):
            p.add_argument("--k", type=int, default=10)
        if name in ("simulate", "report"):
            p.add_argument("--overlap-k", type=int, default=10)
        if name == "score":
            p.add_argument("--exclude-baseline", action="store_true",
                           help="drop the Random row from the difficulty "
                                "weight column sums")
        if name == "audit":
            p.add_argument("--expert", required=True,
                           help="expert labels JSONL "
                                '({"task_id": ..., "label": ...})')
        if name == "export":
            p.add_argument("--all", action="store_true",
                           help="include annotations of rejected sessions")
        if name == "serve":
            p.add_argument("--host", default=None)
            p.add_argument("--port", type=int, default=None)
            p.add_argument("--admin-token", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, out_override=args.out,
                          seed_override=args.seed)
        return COMMANDS[args.command](cfg, args)
    except DataError as exc:
        print(f"salieval: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
