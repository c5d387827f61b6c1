"""Minute-cadence decision-support service.

Sessions replay a stored case (or run live), advance one minute per tick, and
emit prediction frames. Replay feature assembly goes through exactly the same
pipeline code as offline preprocessing, so a no-override replay reproduces the
offline predicted sets minute for minute.

What-if overrides never mutate the source case: vitals/static deltas are
merged into the context view at tick time; injected events join (and
suppressed events leave) the process context while ground truth stays intact.
"""

from __future__ import annotations

import itertools
import json
import queue
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles

from .dataset import load_corpus
from .domain import ActivityEvent, CaseLog, DynamicContextRecord, StaticContext
from .features import (
    Sample,
    assemble_features,
    carry_forward_vitals,
    label_vector,
    minute_features,
)
from .harness import export_timeline
from .metrics import EvalReport, ThresholdVector, decide
from .training import CheckpointBundle, load_checkpoint

STATIC_FIELDS = ("age", "gcs", "ais", "heart_rate", "systolic_bp", "injury_type")
VITALS_FIELDS = (
    "heart_rate",
    "respiratory_rate",
    "systolic_bp",
    "diastolic_bp",
    "oxygen_saturation",
    "fio2",
)


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


class EndOfCase(ServiceError):
    def __init__(self):
        super().__init__(409, "end-of-case")


@dataclass
class LoadedModel:
    model_id: str
    bundle: CheckpointBundle
    thresholds: ThresholdVector


@dataclass
class SessionState:
    session_id: str
    mode: str  # "replay" | "live"
    model_id: str
    case: CaseLog | None
    static: StaticContext
    minute: int = 0
    closed: bool = False
    live_events: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    overrides: dict = field(default_factory=dict)
    subscribers: list = field(default_factory=list)
    lock: threading.RLock = field(default_factory=threading.RLock)

    _oid_counter: itertools.count = field(default_factory=lambda: itertools.count(1))

    def next_override_id(self) -> str:
        return f"ov{next(self._oid_counter)}"


class DecisionService:
    """Owns the corpus, loaded models, and live sessions."""

    def __init__(self, corpus_dir, checkpoint=None, thresholds=None, report=None):
        self.manifest, cases = load_corpus(corpus_dir)
        self.cases = {c.case_id: c for c in cases}
        self.models: dict[str, LoadedModel] = {}
        self.sessions: dict[str, SessionState] = {}
        self.report: EvalReport | None = None
        self._lock = threading.RLock()
        self._sid_counter = itertools.count(1)
        if checkpoint is not None:
            self.load_model(checkpoint, thresholds, model_id="default")
        if report is not None:
            with open(report) as fh:
                self.report = EvalReport.from_dict(json.load(fh))

    # -- models ------------------------------------------------------------

    def load_model(self, checkpoint_path, thresholds_path, model_id=None) -> str:
        if thresholds_path is None:
            raise ServiceError(400, "thresholds file is required to serve a model")
        bundle = load_checkpoint(
            checkpoint_path, expected_catalog_hash=self.manifest.catalog.content_hash()
        )
        with open(thresholds_path) as fh:
            doc = json.load(fh)
        thresholds = ThresholdVector.from_dict(doc)
        if len(thresholds.thresholds) != self.manifest.catalog.n:
            raise ServiceError(400, "thresholds length does not match the catalog")
        with self._lock:
            model_id = model_id or f"model{len(self.models) + 1}"
            self.models[model_id] = LoadedModel(model_id, bundle, thresholds)
        return model_id

    def _model(self, model_id: str) -> LoadedModel:
        model = self.models.get(model_id)
        if model is None:
            raise ServiceError(404, f"unknown model {model_id!r}")
        return model

    # -- sessions ------------------------------------------------------------

    def create_session(self, mode: str, model_id: str, case_id=None, static=None) -> str:
        if mode not in ("replay", "live"):
            raise ServiceError(400, f"unknown session mode {mode!r}")
        self._model(model_id)
        if mode == "replay":
            case = self.cases.get(case_id)
            if case is None:
                raise ServiceError(404, f"unknown case {case_id!r}")
            static_ctx = case.static
        else:
            case = None
            fields = {k: v for k, v in (static or {}).items() if k in STATIC_FIELDS}
            static_ctx = StaticContext(**fields)
        with self._lock:
            sid = f"s{next(self._sid_counter)}"
            self.sessions[sid] = SessionState(
                session_id=sid, mode=mode, model_id=model_id, case=case, static=static_ctx
            )
        return sid

    def _session(self, sid: str) -> SessionState:
        session = self.sessions.get(sid)
        if session is None or session.closed:
            raise ServiceError(404, f"unknown session {sid!r}")
        return session

    def close_session(self, sid: str) -> None:
        session = self._session(sid)
        with session.lock:
            session.closed = True
            for q in session.subscribers:
                q.put(None)
            session.subscribers.clear()

    # -- overrides and live events --------------------------------------------

    def apply_override(self, sid: str, doc: dict) -> str:
        session = self._session(sid)
        kind = doc.get("kind")
        if kind in ("vitals", "static"):
            allowed = VITALS_FIELDS if kind == "vitals" else STATIC_FIELDS
            fields = doc.get("fields") or {}
            unknown = [f for f in fields if f not in allowed]
            if unknown or not fields:
                raise ServiceError(400, f"bad {kind} override fields: {unknown or 'empty'}")
        elif kind in ("inject_event", "suppress_event"):
            if self.manifest.catalog.label_index(doc.get("activity", "")) is None:
                raise ServiceError(400, f"unknown activity {doc.get('activity')!r}")
            if kind == "inject_event":
                start, end = doc.get("start_s"), doc.get("end_s")
                if not isinstance(start, int) or not isinstance(end, int) or not 0 <= start <= end:
                    raise ServiceError(400, "inject_event needs integer 0 <= start_s <= end_s")
        else:
            raise ServiceError(400, f"unknown override kind {kind!r}")
        with session.lock:
            oid = session.next_override_id()
            session.overrides[oid] = doc
        return oid

    def remove_override(self, sid: str, oid: str) -> None:
        session = self._session(sid)
        with session.lock:
            if oid not in session.overrides:
                raise ServiceError(404, f"unknown override {oid!r}")
            del session.overrides[oid]

    def record_event(self, sid: str, activity: str, start_s: int, end_s: int) -> None:
        session = self._session(sid)
        if session.mode != "replay":
            idx = self.manifest.catalog.label_index(activity)
            if idx is None:
                raise ServiceError(400, f"unknown activity {activity!r}")
            if not 0 <= start_s <= end_s:
                raise ServiceError(400, "need 0 <= start_s <= end_s")
            with session.lock:
                session.live_events.append(ActivityEvent(idx, start_s, end_s))
        else:
            raise ServiceError(400, "replay sessions are read-only; use overrides")

    # -- context assembly ------------------------------------------------------

    def _context_view(self, session: SessionState, cutoff_s: int):
        """Static, vitals, and process events with overrides applied."""
        static = session.static
        base_vitals = list(session.case.vitals) if session.case else []
        events = list(session.case.events) if session.case else list(session.live_events)

        vitals_fields = {}
        for doc in session.overrides.values():
            kind = doc["kind"]
            if kind == "static":
                fields = {
                    k: v for k, v in doc["fields"].items() if k in STATIC_FIELDS
                }
                static = replace(static, **fields)
            elif kind == "vitals":
                vitals_fields.update(
                    {k: v for k, v in doc["fields"].items() if k in VITALS_FIELDS}
                )
            elif kind == "inject_event":
                idx = self.manifest.catalog.label_index(doc["activity"])
                events.append(ActivityEvent(idx, doc["start_s"], doc["end_s"]))
            elif kind == "suppress_event":
                idx = self.manifest.catalog.label_index(doc["activity"])
                start = doc.get("start_s")
                events = [
                    ev
                    for ev in events
                    if not (ev.label_id == idx and (start is None or ev.start_s == start))
                ]
        vitals = base_vitals
        if vitals_fields:
            # the override becomes a synthetic "latest" record at the cutoff,
            # carrying forward whatever fields it does not set
            latest = None
            for rec in base_vitals:
                if rec.t_s <= cutoff_s:
                    latest = rec
            if latest is None:
                latest = DynamicContextRecord(t_s=cutoff_s)
            merged = replace(latest, t_s=cutoff_s, **vitals_fields)
            vitals = sorted(base_vitals + [merged], key=lambda r: r.t_s)
        return static, vitals, events

    # -- ticking ------------------------------------------------------------

    def tick(self, sid: str) -> dict:
        session = self._session(sid)
        model = self._model(session.model_id)
        bundle = model.bundle
        with session.lock:
            t = session.minute
            if session.mode == "replay" and t >= session.case.n_minutes:
                raise EndOfCase()
            cutoff = 60 * t
            static, vitals, events = self._context_view(session, cutoff)
            case_key = session.case.case_id if session.case else session.session_id
            blocks = minute_features(
                case_key,
                static,
                vitals,
                events,
                t,
                self.manifest,
                bundle.stats,
                bundle.k,
                bundle.preproc_seed,
            )
            sample = Sample(case_id=case_key, minute_index=t, label=None, **blocks)
            batch = assemble_features([sample], bundle.mask)
            probs = bundle.model.forward(batch)[0]
            preds = decide(probs[None, :], model.thresholds.thresholds)[0]
            labels = self.manifest.catalog.labels
            carried = carry_forward_vitals(vitals, cutoff)
            frame = {
                "minute": t,
                "probabilities": [float(p) for p in probs],
                "thresholds": [float(x) for x in model.thresholds.thresholds],
                "predicted": [labels[i] for i in range(len(labels)) if preds[i]],
                "context": {
                    "last_k": [labels[i - 1] for i in blocks["last_k_ids"] if i > 0],
                    "vitals": None
                    if carried is None
                    else {f: getattr(carried, f) for f in VITALS_FIELDS},
                    "static": {f: getattr(static, f) for f in STATIC_FIELDS},
                },
            }
            if session.mode == "replay":
                truth = label_vector(session.case.events, t, self.manifest.catalog.n)
                frame["true"] = [labels[i] for i in range(len(labels)) if truth[i]]
                frame["correctness"] = {
                    labels[i]: (
                        "TP" if preds[i] and truth[i]
                        else "FP" if preds[i]
                        else "FN" if truth[i]
                        else "TN"
                    )
                    for i in range(len(labels))
                }
            session.minute = t + 1
            session.frames.append(frame)
            for q in session.subscribers:
                q.put(frame)
        return frame

    def frames(self, sid: str) -> list[dict]:
        session = self._session(sid)
        with session.lock:
            return list(session.frames)

    def subscribe(self, sid: str):
        """Snapshot existing frames and a queue for everything after them."""
        session = self._session(sid)
        q: queue.Queue = queue.Queue()
        with session.lock:
            snapshot = list(session.frames)
            session.subscribers.append(q)
        return snapshot, q

    def unsubscribe(self, sid: str, q) -> None:
        session = self.sessions.get(sid)
        if session is None:
            return
        with session.lock:
            if q in session.subscribers:
                session.subscribers.remove(q)

    # -- reports ------------------------------------------------------------

    def timeline(self, case_id: str, cutoff: float, model_id: str) -> dict:
        case = self.cases.get(case_id)
        if case is None:
            raise ServiceError(404, f"unknown case {case_id!r}")
        if self.report is None:
            raise ServiceError(400, "no evaluation report loaded; start with --report")
        model = self._model(model_id)
        return export_timeline(
            case,
            self.manifest,
            model.bundle.stats,
            model.bundle.k,
            model.bundle.preproc_seed,
            model.bundle.model,
            model.bundle.mask,
            model.thresholds,
            self.report,
            cutoff,
        )


def create_app(service: DecisionService, ui_dir=None) -> FastAPI:
    app = FastAPI(title="minutecast", docs_url=None, redoc_url=None)

    def guard(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ServiceError as exc:
            raise HTTPException(status_code=exc.status, detail=exc.message) from exc

    @app.get("/catalog")
    def get_catalog():
        return {
            "labels": list(service.manifest.catalog.labels),
            "vocabularies": {k: list(v) for k, v in service.manifest.vocabularies.items()},
        }

    @app.get("/cases")
    def get_cases():
        return [
            {"case_id": c.case_id, "duration_s": c.duration_s, "minutes": c.n_minutes}
            for c in sorted(service.cases.values(), key=lambda c: c.case_id)
        ]

    @app.get("/models")
    def get_models():
        return [{"model_id": m.model_id, "mask": m.bundle.config["mask"]} for m in service.models.values()]

    @app.post("/models")
    def post_models(body: dict):
        model_id = guard(
            service.load_model,
            body.get("checkpoint"),
            body.get("thresholds"),
            body.get("model_id"),
        )
        return {"model_id": model_id}

    @app.post("/sessions")
    def post_sessions(body: dict):
        sid = guard(
            service.create_session,
            body.get("mode", "replay"),
            body.get("model_id", "default"),
            body.get("case_id"),
            body.get("static"),
        )
        return {"session_id": sid}

    @app.delete("/sessions/{sid}")
    def delete_session(sid: str):
        guard(service.close_session, sid)
        return {"closed": sid}

    @app.post("/sessions/{sid}/tick")
    def post_tick(sid: str):
        return guard(service.tick, sid)

    @app.post("/sessions/{sid}/overrides")
    def post_override(sid: str, body: dict):
        oid = guard(service.apply_override, sid, body)
        return {"override_id": oid}

    @app.delete("/sessions/{sid}/overrides/{oid}")
    def delete_override(sid: str, oid: str):
        guard(service.remove_override, sid, oid)
        return {"removed": oid}

    @app.post("/sessions/{sid}/events")
    def post_event(sid: str, body: dict):
        guard(
            service.record_event,
            sid,
            body.get("activity", ""),
            int(body.get("start_s", -1)),
            int(body.get("end_s", -1)),
        )
        return {"recorded": True}

    @app.get("/sessions/{sid}/frames")
    def get_frames(sid: str):
        return guard(service.frames, sid)

    @app.get("/sessions/{sid}/stream")
    def get_stream(sid: str, follow: bool = True, max_frames: int | None = None):
        """Server-push frame stream: already-emitted frames first, then (when
        following) each new frame exactly once, in minute order. Keepalive
        comments let disconnects propagate to the generator."""
        snapshot, q = guard(service.subscribe, sid)

        def gen():
            sent = 0

            def done():
                return max_frames is not None and sent >= max_frames

            try:
                for frame in snapshot:
                    if done():
                        return
                    yield _sse(frame)
                    sent += 1
                while follow and not done():
                    session = service.sessions.get(sid)
                    try:
                        item = q.get(timeout=0.5)
                    except queue.Empty:
                        if session is None or session.closed:
                            break
                        yield ": keepalive\n\n"
                        continue
                    if item is None:
                        break
                    yield _sse(item)
                    sent += 1
                yield "event: end\ndata: {}\n\n"
            finally:
                service.unsubscribe(sid, q)

        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.get("/reports/eval")
    def get_eval_report():
        if service.report is None:
            raise HTTPException(status_code=400, detail="no evaluation report loaded")
        return service.report.to_dict()

    @app.get("/reports/timeline/{case_id}")
    def get_timeline(case_id: str, cutoff: float = 0.5, model_id: str = "default"):
        return guard(service.timeline, case_id, cutoff, model_id)

    if ui_dir is not None and Path(ui_dir).exists():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app


def _sse(frame: dict) -> str:
    return f"event: frame\ndata: {json.dumps(frame)}\n\n"
