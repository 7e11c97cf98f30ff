"""HTTP annotation service: batches out, labels in, quality filters, audit.

State lives in an append-only JSONL event log; the in-memory view is rebuilt
by replaying it, so a crashed process resumes where it stopped. All writes
are serialized through one lock; rejection is a status flip plus a logged
decision, never a deletion, and a rejected session's batch goes back into
the queue for a replacement worker.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone

from pydantic import BaseModel

from .errors import DataError
from .tasks import AssignmentPlan, Task

ACTIVE = "active"
COMPLETE = "complete"
REJECTED = "rejected"

VIEW_FIELDS = ("task_id", "rendered", "label_options")


class Refused(DataError):
    """Business-rule refusal; maps to HTTP 409."""


class Unknown(DataError):
    """Missing resource; maps to HTTP 404."""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class Session:
    session_id: str
    worker_token: str
    batch: int
    cursor: int = 0
    started_at: str = ""
    finished_at: str | None = None
    status: str = ACTIVE


@dataclass(frozen=True)
class Annotation:
    task_id: str
    worker_token: str
    label: int
    elapsed_ms: int
    submitted_at: str


@dataclass(frozen=True)
class QualityRule:
    # "completed the tasks within an extremely short period" — judged on the
    # client-reported per-task timings, which is all the log has
    min_total_duration_s: float = 120.0
    reject_all_same_label: bool = True

    def __post_init__(self):
        if self.min_total_duration_s <= 0:
            raise DataError("min_total_duration_s must be positive")


def task_view(task: Task) -> dict:
    """What a worker is allowed to see: no truth, no method, no k."""
    return {"task_id": task.task_id, "rendered": task.rendered,
            "label_options": list(task.label_options)}


class AnnotationStore:
    """Single-writer annotation log bound to one plan."""

    def __init__(self, plan: AssignmentPlan, tasks, log_path=None):
        self._lock = threading.Lock()
        self.plan = plan
        self.tasks = {t.task_id: t for t in tasks}
        if len(self.tasks) != len(tasks):
            raise DataError("duplicate task ids")
        for b, batch in enumerate(plan.batches):
            for tid in batch:
                if tid not in self.tasks:
                    raise DataError(f"plan batch {b} references unknown task {tid!r}")
        self.sessions: dict[str, Session] = {}
        self.by_worker: dict[str, str] = {}
        self.annotations: dict[tuple[str, str], Annotation] = {}
        self.session_order: dict[str, list[tuple[str, int]]] = {}
        self._free = list(range(len(plan.batches)))   # ascending batch queue
        self._log_path = log_path
        self._log = None
        if log_path is not None:
            self._replay(log_path)
            self._log = open(log_path, "a", encoding="utf-8")

    # -- persistence ------------------------------------------------------

    def _append(self, event: dict) -> None:
        if self._log is not None:
            self._log.write(json.dumps(event, sort_keys=True) + "\n")
            self._log.flush()

    def _replay(self, path) -> None:
        try:
            fh = open(path, encoding="utf-8")
        except FileNotFoundError:
            return
        with fh:
            for ln, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    ev = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{ln}: corrupt event ({exc})") from exc
                kind = ev.get("event")
                if kind == "open":
                    self._apply_open(ev["session_id"], ev["worker_token"],
                                     int(ev["batch"]), ev["at"])
                elif kind == "submit":
                    self._apply_submit(ev["session_id"], ev["task_id"],
                                       int(ev["label"]), int(ev["elapsed_ms"]),
                                       ev["at"])
                elif kind == "reject":
                    self._apply_reject(ev["session_id"], ev["reason"])
                else:
                    raise DataError(f"{path}:{ln}: unknown event {kind!r}")

    # -- state transitions (call with lock held or during replay) ---------

    def _apply_open(self, session_id, worker_token, batch, at) -> Session:
        s = Session(session_id=session_id, worker_token=worker_token,
                    batch=batch, started_at=at)
        self.sessions[session_id] = s
        self.by_worker[worker_token] = session_id
        self.session_order[session_id] = []
        self._free.remove(batch)
        return s

    def _apply_submit(self, session_id, task_id, label, elapsed_ms, at) -> None:
        s = self.sessions[session_id]
        a = Annotation(task_id=task_id, worker_token=s.worker_token,
                       label=label, elapsed_ms=elapsed_ms, submitted_at=at)
        self.annotations[(task_id, s.worker_token)] = a
        self.session_order[session_id].append((task_id, label))
        s.cursor += 1
        if s.cursor == len(self.plan.batches[s.batch]):
            s.status = COMPLETE
            s.finished_at = at

    def _apply_reject(self, session_id, reason) -> None:
        s = self.sessions[session_id]
        s.status = REJECTED
        if s.batch not in self._free:
            self._free.append(s.batch)
            self._free.sort()

    # -- operations -------------------------------------------------------

    def open_session(self, worker_token: str) -> Session:
        worker_token = str(worker_token).strip()
        if not worker_token:
            raise Refused("empty worker token")
        with self._lock:
            if worker_token in self.by_worker:
                raise Refused("already participated")
            if not self._free:
                raise Refused("experiment full")
            batch = self._free[0]
            sid = uuid.uuid4().hex
            at = _now()
            self._append({"event": "open", "session_id": sid,
                          "worker_token": worker_token, "batch": batch,
                          "at": at})
            return self._apply_open(sid, worker_token, batch, at)

    def _session(self, session_id: str) -> Session:
        s = self.sessions.get(session_id)
        if s is None:
            raise Unknown(f"unknown session {session_id!r}")
        return s

    def next_task(self, session_id: str) -> Task | None:
        """The session's current task, or None when the batch is finished."""
        with self._lock:
            s = self._session(session_id)
            if s.status == REJECTED:
                raise Refused("session was rejected")
            batch = self.plan.batches[s.batch]
            if s.cursor >= len(batch):
                return None
            return self.tasks[batch[s.cursor]]

    def submit(self, session_id: str, task_id: str, label: int,
               elapsed_ms: int) -> Session:
        with self._lock:
            s = self._session(session_id)
            if s.status == REJECTED:
                raise Refused("session was rejected")
            if task_id not in self.tasks:
                raise Unknown(f"unknown task {task_id!r}")
            label = int(label)
            elapsed_ms = int(elapsed_ms)
            if elapsed_ms < 0:
                raise Refused("elapsed_ms must be >= 0")
            classes = len(self.tasks[task_id].label_options) - 1
            if not 0 <= label <= classes:
                raise Refused(f"label {label} outside 0..{classes}")
            prior = self.annotations.get((task_id, s.worker_token))
            if prior is not None:
                if prior.label == label and prior.elapsed_ms == elapsed_ms:
                    return s                      # idempotent retry
                raise Refused("task already answered with a different label")
            batch = self.plan.batches[s.batch]
            if s.cursor >= len(batch):
                raise Refused("batch already complete")
            if batch[s.cursor] != task_id:
                raise Refused("tasks must be answered in order")
            at = _now()
            self._append({"event": "submit", "session_id": session_id,
                          "task_id": task_id, "label": label,
                          "elapsed_ms": elapsed_ms, "at": at})
            self._apply_submit(session_id, task_id, label, elapsed_ms, at)
            return s

    def filter_sessions(self, rule: QualityRule) -> dict:
        """Apply quality rules to complete sessions; re-queue rejected batches."""
        with self._lock:
            accepted, rejected = [], []
            for s in self.sessions.values():
                if s.status == REJECTED:
                    rejected.append({"session_id": s.session_id,
                                     "reason": "previously rejected"})
                    continue
                if s.status != COMPLETE:
                    continue
                reason = self._judge(s, rule)
                if reason is None:
                    accepted.append(s.session_id)
                    continue
                self._append({"event": "reject", "session_id": s.session_id,
                              "reason": reason, "at": _now()})
                self._apply_reject(s.session_id, reason)
                rejected.append({"session_id": s.session_id, "reason": reason})
            return {"accepted": accepted, "rejected": rejected}

    def _judge(self, s: Session, rule: QualityRule) -> str | None:
        pairs = self.session_order[s.session_id]
        total_ms = sum(self.annotations[(tid, s.worker_token)].elapsed_ms
                       for tid, _ in pairs)
        if total_ms < rule.min_total_duration_s * 1000:
            return (f"completed in {total_ms / 1000:.1f}s, "
                    f"under {rule.min_total_duration_s:.0f}s")
        if rule.reject_all_same_label and len(pairs) > 1:
            labels = {label for _, label in pairs}
            if len(labels) == 1:
                return f"all {len(pairs)} answers used label {labels.pop()}"
        return None

    def export(self, accepted_only: bool = False) -> str:
        """JSON-lines dump, stable (task_id, worker_token) order."""
        with self._lock:
            rejected_workers = {s.worker_token for s in self.sessions.values()
                                if s.status == REJECTED}
            lines = []
            for (tid, tok) in sorted(self.annotations):
                a = self.annotations[(tid, tok)]
                if accepted_only and tok in rejected_workers:
                    continue
                rec = {"task_id": a.task_id, "worker_token": a.worker_token,
                       "label": a.label, "elapsed_ms": a.elapsed_ms,
                       "submitted_at": a.submitted_at}
                if not accepted_only:
                    rec["rejected"] = tok in rejected_workers
                lines.append(json.dumps(rec, sort_keys=True))
            return "\n".join(lines) + ("\n" if lines else "")

    def progress(self) -> dict:
        with self._lock:
            rejected_workers = {s.worker_token for s in self.sessions.values()
                                if s.status == REJECTED}
            accepted = sum(1 for (tid, tok) in self.annotations
                           if tok not in rejected_workers)
            return {
                "tasks_total": len(self.tasks),
                "annotations_accepted": accepted,
                "sessions_active": sum(1 for s in self.sessions.values()
                                       if s.status == ACTIVE),
            }

    def close(self) -> None:
        if self._log is not None:
            self._log.close()
            self._log = None


def parse_export(text: str) -> list[dict]:
    out = []
    for ln, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"export line {ln}: invalid JSON ({exc})") from exc
    return out


def audit_agreement(aggregated_outcomes: dict, expert_labels: dict,
                    ground_truth: dict) -> dict:
    """Fraction of audited tasks where the expert's pass/fail outcome matches
    the crowd's aggregated outcome. Tasks without an expert label are skipped
    and reported."""
    compared = matches = 0
    skipped = []
    for tid, crowd in aggregated_outcomes.items():
        if tid not in expert_labels:
            skipped.append(tid)
            continue
        if tid not in ground_truth:
            raise DataError(f"no ground truth for audited task {tid!r}")
        expert = int(int(expert_labels[tid]) == int(ground_truth[tid]))
        matches += int(expert == int(crowd))
        compared += 1
    if compared == 0:
        raise DataError("no tasks with both crowd and expert outcomes")
    return {"agreement": matches / compared, "compared": compared,
            "skipped": sorted(skipped)}


# -- HTTP layer -----------------------------------------------------------

class OpenBody(BaseModel):
    worker_token: str


class SubmitBody(BaseModel):
    session_id: str
    task_id: str
    label: int
    elapsed_ms: int


class FilterBody(BaseModel):
    min_total_duration_s: float = 120.0
    reject_all_same_label: bool = True


def create_app(store: AnnotationStore, admin_token: str):
    from fastapi import FastAPI, Header, HTTPException
    from fastapi.responses import PlainTextResponse

    if not admin_token:
        raise DataError("admin token must be non-empty")

    app = FastAPI(title="salieval annotation service")

    def _http(exc: DataError):
        status = 404 if isinstance(exc, Unknown) else 409
        return HTTPException(status_code=status, detail=str(exc))

    def _admin(token):
        if token != admin_token:
            raise HTTPException(status_code=401, detail="bad admin token")

    @app.post("/api/sessions")
    def open_session(body: OpenBody):
        try:
            s = store.open_session(body.worker_token)
        except DataError as exc:
            raise _http(exc) from exc
        return {"session_id": s.session_id,
                "batch_size": len(store.plan.batches[s.batch])}

    @app.get("/api/sessions/{session_id}/next")
    def next_task(session_id: str):
        try:
            task = store.next_task(session_id)
        except DataError as exc:
            raise _http(exc) from exc
        if task is None:
            return {"done": True}
        return task_view(task)

    @app.post("/api/annotations")
    def submit(body: SubmitBody):
        try:
            store.submit(body.session_id, body.task_id, body.label,
                         body.elapsed_ms)
        except DataError as exc:
            raise _http(exc) from exc
        return {"ok": True}

    @app.get("/api/admin/progress")
    def progress(x_admin_token: str | None = Header(default=None)):
        _admin(x_admin_token)
        return store.progress()

    @app.get("/api/admin/export")
    def export(accepted_only: bool = False,
               x_admin_token: str | None = Header(default=None)):
        _admin(x_admin_token)
        return PlainTextResponse(store.export(accepted_only=accepted_only),
                                 media_type="application/jsonl")

    @app.post("/api/admin/filter")
    def run_filter(body: FilterBody,
                   x_admin_token: str | None = Header(default=None)):
        _admin(x_admin_token)
        try:
            rule = QualityRule(min_total_duration_s=body.min_total_duration_s,
                               reject_all_same_label=body.reject_all_same_label)
        except DataError as exc:
            raise _http(exc) from exc
        return store.filter_sessions(rule)

    return app


def serve(plan_path, tasks_path, store_path, admin_token: str,
          host: str = "127.0.0.1", port: int = 8000):
    """Load plan and tasks from disk and run the service until killed."""
    import uvicorn

    from .tasks import load_plan, load_tasks
    store = AnnotationStore(load_plan(plan_path), load_tasks(tasks_path),
                            log_path=store_path)
    app = create_app(store, admin_token)
    uvicorn.run(app, host=host, port=port, log_level="warning")
