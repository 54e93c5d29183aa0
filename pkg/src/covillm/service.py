"""HTTP service exposing the operator loop: scene -> localize -> classify ->
plan -> execute, with one JSON snapshot file per session.

Sessions are re-read from disk on every request and re-written (atomically,
write-temp-then-rename) after every mutation, so the process can die and
restart between any two calls without changing behavior.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from . import __version__
from .backends import make_backend
from .board import BoardConfig, load_board
from .classify import (AmbiguousDescriptorError, AssociationResult,
                       ClassificationParseError, associate,
                       parse_classification)
from .executor import (ExecutionEvent, WorkcellComponent, WorkcellState,
                       execute_step)
from .filters import FilterParams
from .frames import FrameError, frame_from_bytes, frame_to_bytes
from .geometry import GeometryContext, load_transform_config
from .localize import (Candidate, LocalizationParams, SurfaceNotFound,
                       localize)
from .planner import (AssemblyPlan, BackendTransportError,
                      InstructionRequest, PlanningFailed, PlannerError,
                      parse_plan_response, plan_deterministic, plan_llm)
from .synth import SceneError, SceneSpec, synthesize_frame

PHASES = ["created", "localized", "classified", "planned", "executing",
          "done", "failed"]


@dataclass
class ServiceConfig:
    data_dir: Path
    geo: GeometryContext
    board: BoardConfig
    fp: FilterParams = field(default_factory=FilterParams)
    lp: LocalizationParams = field(default_factory=LocalizationParams)
    backend_kind: str = "oracle"
    backend_base_url: str = ""
    backend_model: str = ""
    backend_timeout_s: float = 60.0
    synth_seed: int = 0
    static_dir: Path | None = None

    @classmethod
    def from_file(cls, path) -> "ServiceConfig":
        with open(path) as fh:
            d = json.load(fh)
        base = Path(path).resolve().parent
        geo = (load_transform_config(base / d["transform_file"])
               if "transform_file" in d else GeometryContext.default())
        board = (load_board(base / d["board_file"])
                 if "board_file" in d else BoardConfig.default())
        return cls(
            data_dir=base / d.get("data_dir", "data"),
            geo=geo, board=board,
            backend_kind=d.get("backend", {}).get("kind", "oracle"),
            backend_base_url=d.get("backend", {}).get("base_url", ""),
            backend_model=d.get("backend", {}).get("model", ""),
            backend_timeout_s=d.get("backend", {}).get("timeout_s", 60.0),
            static_dir=(base / d["static_dir"]) if "static_dir" in d else None,
        )


class Session:
    """In-memory mirror of one snapshot file."""

    def __init__(self, sid: str):
        self.id = sid
        self.phase = "created"
        self.scene: SceneSpec | None = None
        self.frame_bytes: bytes | None = None
        self.candidates: list[Candidate] = []
        self.d_s: float | None = None
        self.classification_text: str | None = None
        self.assoc: AssociationResult | None = None
        self.assoc_error: dict | None = None
        self.plan: AssemblyPlan | None = None
        self.workcell: WorkcellState | None = None
        self.events: list[ExecutionEvent] = []

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "phase": self.phase,
            "scene": self.scene.to_dict() if self.scene else None,
            "candidates": [c.to_dict() for c in self.candidates],
            "d_s": self.d_s,
            "classification_text": self.classification_text,
            "assoc": self.assoc.to_dict() if self.assoc else None,
            "assoc_error": self.assoc_error,
            "plan": (dict(self.plan.to_dict(),
                          provenance=self.plan.provenance,
                          latency_ms=self.plan.latency_ms)
                     if self.plan else None),
            "workcell": self.workcell.to_dict() if self.workcell else None,
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: dict, board: BoardConfig) -> "Session":
        s = cls(d["id"])
        s.phase = d["phase"]
        s.scene = SceneSpec.from_dict(d["scene"]) if d["scene"] else None
        s.candidates = [Candidate.from_dict(c) for c in d["candidates"]]
        s.d_s = d["d_s"]
        s.classification_text = d["classification_text"]
        s.assoc = AssociationResult.from_dict(d["assoc"]) if d["assoc"] else None
        s.assoc_error = d.get("assoc_error")
        if d["plan"]:
            plan = parse_plan_response(
                json.dumps({"subtasks": d["plan"]["subtasks"]}), board,
                provenance=d["plan"]["provenance"])
            plan.latency_ms = d["plan"]["latency_ms"]
            s.plan = plan
        s.workcell = (WorkcellState.from_dict(d["workcell"])
                      if d["workcell"] else None)
        s.events = [ExecutionEvent.from_dict(e) for e in d["events"]]
        return s


class SessionStore:
    """Disk-backed store; every mutation lands on disk before the response."""

    def __init__(self, data_dir: Path, board: BoardConfig):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.board = board
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def lock(self, sid: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(sid, threading.Lock())

    def _snap_path(self, sid: str) -> Path:
        return self.data_dir / f"{sid}.json"

    def _frame_path(self, sid: str) -> Path:
        return self.data_dir / f"{sid}.cvlm"

    def exists(self, sid: str) -> bool:
        return self._snap_path(sid).exists()

    def load(self, sid: str) -> Session:
        with open(self._snap_path(sid)) as fh:
            sess = Session.from_dict(json.load(fh), self.board)
        fp = self._frame_path(sid)
        if fp.exists():
            sess.frame_bytes = fp.read_bytes()
        return sess

    def save(self, sess: Session) -> None:
        if sess.frame_bytes is not None:
            fp = self._frame_path(sess.id)
            if not fp.exists():
                tmp = fp.with_suffix(".cvlm.tmp")
                tmp.write_bytes(sess.frame_bytes)
                os.replace(tmp, fp)
        path = self._snap_path(sess.id)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(sess.to_dict(), sort_keys=True))
        os.replace(tmp, path)


def _error(status: int, code: str, message: str, detail=None) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"code": code, "message": message,
                                 "detail": detail})


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="covillm", version=__version__)
    store = SessionStore(config.data_dir, config.board)
    app.state.store = store
    app.state.config = config

    def with_session(sid: str):
        if not store.exists(sid):
            return None
        return store.load(sid)

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/v1/sessions", status_code=201)
    async def create_session(request: Request):
        body = await request.body()
        ctype = request.headers.get("content-type", "")
        sess = Session(uuid.uuid4().hex)
        if ctype.startswith("application/json"):
            try:
                sess.scene = SceneSpec.from_json(body.decode())
            except (json.JSONDecodeError, SceneError, KeyError,
                    UnicodeDecodeError) as exc:
                return _error(400, "bad_scene", f"malformed scene: {exc}")
            try:
                frame = synthesize_frame(sess.scene, config.geo.intrinsics,
                                         config.synth_seed)
            except SceneError as exc:
                return _error(400, "bad_scene", str(exc))
            sess.frame_bytes = frame_to_bytes(frame)
        else:
            try:
                frame_from_bytes(body)
            except FrameError as exc:
                return _error(400, "bad_frame", f"bad frame header: {exc}")
            sess.frame_bytes = bytes(body)
        store.save(sess)
        return {"id": sess.id, "phase": sess.phase}

    @app.get("/v1/sessions/{sid}")
    def get_state(sid: str):
        sess = with_session(sid)
        if sess is None:
            return _error(404, "not_found", f"unknown session {sid!r}")
        return sess.to_dict()

    @app.get("/v1/sessions/{sid}/frame")
    def get_frame(sid: str):
        sess = with_session(sid)
        if sess is None:
            return _error(404, "not_found", f"unknown session {sid!r}")
        return Response(content=sess.frame_bytes,
                        media_type="application/octet-stream")

    @app.post("/v1/sessions/{sid}/localize")
    def localize_session(sid: str):
        with store.lock(sid):
            sess = with_session(sid)
            if sess is None:
                return _error(404, "not_found", f"unknown session {sid!r}")
            if sess.phase not in ("created", "localized"):
                return _error(409, "bad_phase",
                              f"cannot localize in phase {sess.phase!r}")
            if sess.phase == "localized":  # idempotent repeat
                return {"candidates": [c.to_dict() for c in sess.candidates],
                        "d_s": sess.d_s}
            frame = frame_from_bytes(sess.frame_bytes)
            try:
                cands, d_s = localize([frame], config.fp, config.lp)
            except SurfaceNotFound as exc:
                return _error(422, "surface_not_found", str(exc))
            sess.candidates, sess.d_s = cands, d_s
            sess.phase = "localized"
            store.save(sess)
            return {"candidates": [c.to_dict() for c in cands], "d_s": d_s}

    @app.post("/v1/sessions/{sid}/classify")
    async def classify_session(sid: str, request: Request):
        text = (await request.body()).decode()
        with store.lock(sid):
            sess = with_session(sid)
            if sess is None:
                return _error(404, "not_found", f"unknown session {sid!r}")
            if sess.phase not in ("localized", "classified"):
                return _error(409, "bad_phase",
                              f"cannot classify in phase {sess.phase!r}")
            try:
                stmts = parse_classification(text)
            except ClassificationParseError as exc:
                return _error(400, "parse_error", str(exc),
                              detail={"line_no": exc.line_no, "line": exc.line})
            frame = frame_from_bytes(sess.frame_bytes)
            region = config.lp.roi_for(frame)
            sess.classification_text = text  # last write wins
            try:
                sess.assoc = associate(stmts, sess.candidates, region)
                sess.assoc_error = None
            except AmbiguousDescriptorError as exc:
                sess.assoc = None
                sess.assoc_error = {"code": "ambiguous", "message": str(exc),
                                    "candidate_ids": exc.candidate_ids}
            sess.phase = "classified"
            store.save(sess)
            if sess.assoc_error:
                return {"assoc": None, "error": sess.assoc_error}
            return {"assoc": sess.assoc.to_dict(), "error": None}

    @app.post("/v1/sessions/{sid}/plan")
    async def plan_session(sid: str, request: Request):
        try:
            body = await request.json()
            req = InstructionRequest(instruction=body["instruction"],
                                     mode=body.get("mode", "deterministic"))
        except (ValueError, KeyError) as exc:
            return _error(400, "bad_request", f"malformed plan request: {exc}")
        with store.lock(sid):
            sess = with_session(sid)
            if sess is None:
                return _error(404, "not_found", f"unknown session {sid!r}")
            if sess.phase not in ("classified", "planned"):
                return _error(409, "bad_phase",
                              f"cannot plan in phase {sess.phase!r}")
            if sess.assoc is None:
                return _error(422, "no_association",
                              "classification did not produce bindings")
            frame = frame_from_bytes(sess.frame_bytes)
            region = config.lp.roi_for(frame)
            try:
                if req.mode == "deterministic":
                    plan = plan_deterministic(req, sess.assoc, sess.candidates,
                                              config.geo, config.board)
                    plan.latency_ms = 0.0
                else:
                    backend = make_backend(
                        config.backend_kind, board=config.board,
                        base_url=config.backend_base_url,
                        model=config.backend_model,
                        api_key=os.environ.get("COVILLM_API_KEY", ""),
                        timeout_s=config.backend_timeout_s)
                    plan = plan_llm(req, sess.candidates,
                                    sess.classification_text or "",
                                    config.board, backend, config.geo, region)
            except (PlannerError, PlanningFailed) as exc:
                return _error(422, "planner_error", str(exc))
            except BackendTransportError as exc:
                return _error(502, "backend_unreachable", str(exc))
            except ValueError as exc:
                return _error(422, "backend_config", str(exc))
            sess.plan = plan
            sess.workcell = _fresh_workcell(sess, config)
            sess.events = []
            sess.phase = "planned"
            store.save(sess)
            return {"plan": plan.to_dict(), "provenance": plan.provenance,
                    "latency_ms": plan.latency_ms}

    def _fresh_workcell(sess: Session, config: ServiceConfig) -> WorkcellState:
        comps = []
        label_of = {}
        if sess.assoc:
            label_of = {cid: stmt.label for stmt, cid in sess.assoc.bindings}
        for c in sess.candidates:
            comps.append(WorkcellComponent(
                id=c.id, position=config.geo.candidate_base_point(c),
                label=label_of.get(c.id)))
        return WorkcellState.fresh(comps, config.board,
                                   home_pose=config.geo.t_be)

    def _step_once(sess: Session) -> tuple[list[ExecutionEvent], str]:
        """Execute the next subtask; returns its events and the new phase."""
        subtask = sess.plan.subtasks[sess.workcell.cursor]
        state, events = execute_step(sess.workcell, subtask)
        sess.workcell = state
        sess.events.extend(events)
        if events and events[-1].kind == "error":
            sess.phase = "failed"
        elif state.cursor >= sess.plan.n:
            sess.phase = "done"
        else:
            sess.phase = "executing"
        return events, sess.phase

    @app.post("/v1/sessions/{sid}/step")
    def step_session(sid: str):
        with store.lock(sid):
            sess = with_session(sid)
            if sess is None:
                return _error(404, "not_found", f"unknown session {sid!r}")
            if sess.phase == "done":
                return _error(409, "plan_complete", "plan complete")
            if sess.phase not in ("planned", "executing"):
                return _error(409, "bad_phase",
                              f"cannot step in phase {sess.phase!r}")
            events, phase = _step_once(sess)
            store.save(sess)
            return {"events": [e.to_dict() for e in events], "phase": phase}

    @app.get("/v1/sessions/{sid}/events")
    def stream_events(sid: str, request: Request):
        """Server-sent events: replays the stored log (honoring Last-Event-ID
        or ?after=) and then runs the remaining plan steps to completion."""
        sess0 = with_session(sid)
        if sess0 is None:
            return _error(404, "not_found", f"unknown session {sid!r}")
        after = request.headers.get("last-event-id",
                                    request.query_params.get("after", ""))
        try:
            start_idx = int(after) + 1
        except ValueError:
            start_idx = 0

        def gen():
            with store.lock(sid):
                sess = store.load(sid)
                idx = 0
                for evt in sess.events:
                    if idx >= start_idx:
                        yield _sse(idx, evt.kind, evt.to_dict())
                    idx += 1
                while sess.phase in ("planned", "executing"):
                    events, phase = _step_once(sess)
                    store.save(sess)
                    for evt in events:
                        if idx >= start_idx:
                            yield _sse(idx, evt.kind, evt.to_dict())
                        idx += 1
                yield _sse(idx, "phase", {"phase": sess.phase})

        return StreamingResponse(gen(), media_type="text/event-stream")

    def _sse(idx: int, event: str, data: dict) -> str:
        return f"id: {idx}\nevent: {event}\ndata: {json.dumps(data, sort_keys=True)}\n\n"

    if config.static_dir and Path(config.static_dir).is_dir():
        app.mount("/", StaticFiles(directory=config.static_dir, html=True),
                  name="console")

    return app
