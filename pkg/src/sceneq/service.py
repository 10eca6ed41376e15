"""HTTP API hosting interactive UDF selection for the labeling UI.

One selection session is active at a time; the pipeline runs on a worker
thread and parks whenever the selection state machine awaits a label,
which arrives via POST. Session state lives server-side, so reconnecting
clients just re-fetch the pending sample.
"""

from __future__ import annotations

import base64
import io
import threading
from dataclasses import dataclass, field, replace
from typing import Optional

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .errors import LabelerError, PixelsUnavailableError
from .orchestrator import Engine, PipelineConfig, QueryResult
from .selection import SelectionSession


@dataclass
class HttpSession:
    id: str
    nl_text: str
    state: str = "working"   # working | awaiting_label | done | failed
    selection: Optional[SelectionSession] = None
    result: Optional[QueryResult] = None
    error: str = ""
    cond: threading.Condition = field(default_factory=threading.Condition)
    weights_history: list[dict] = field(default_factory=list)

    def snapshot_weights(self):
        if self.selection is None:
            return
        report = self.selection.report.to_record()
        self.weights_history = report["iterations"]


def _patch_b64(unit) -> Optional[str]:
    try:
        from PIL import Image

        patch = unit.patch(overlay=(unit.arity == 2))
        buf = io.BytesIO()
        Image.fromarray(patch).save(buf, format="PNG")
        return base64.b64encode(buf.getvalue()).decode()
    except PixelsUnavailableError:
        return None


def _unit_metadata(unit) -> dict:
    meta = {
        "vid": unit.vid, "fid": unit.fid,
        "width": unit.width, "height": unit.height,
        "o0": {"oid": unit.o0.oid, "oname": unit.o0.oname,
               "bbox": list(unit.o0.bbox),
               "anames": sorted(unit.o0.anames)},
    }
    if unit.o1 is not None:
        meta["o1"] = {"oid": unit.o1.oid, "oname": unit.o1.oname,
                      "bbox": list(unit.o1.bbox),
                      "anames": sorted(unit.o1.anames)}
        meta["o0_o1_rnames"] = sorted(unit.o0_o1_rnames)
        meta["o1_o0_rnames"] = sorted(unit.o1_o0_rnames)
    return meta


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="sceneq")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    sessions: dict[str, HttpSession] = {}
    lock = threading.Lock()
    counter = {"n": 0}

    def active_session() -> Optional[HttpSession]:
        for s in sessions.values():
            if s.state in ("working", "awaiting_label"):
                return s
        return None

    @app.get("/api/status")
    def status():
        active = active_session()
        return {"status": "ok",
                "videos": len(engine.db.vids),
                "udfs": engine.registry.names(),
                "active_session": active.id if active else None}

    @app.post("/api/query")
    def start_query(body: dict):
        text = body.get("text", "")
        if not text:
            return JSONResponse({"error": "missing query text"},
                                status_code=400)
        with lock:
            if active_session() is not None:
                return JSONResponse(
                    {"error": "another session is active"}, status_code=409)
            counter["n"] += 1
            session = HttpSession(id=f"s{counter['n']}", nl_text=text)
            sessions[session.id] = session
        overrides = body.get("overrides", {})
        base_config = engine.config
        config = base_config
        if "budget" in overrides:
            config = replace(config, selection=replace(
                config.selection, b=int(overrides["budget"])))
        if "seed" in overrides:
            config = replace(config, seed=int(overrides["seed"]),
                             selection=replace(config.selection,
                                               seed=int(overrides["seed"])))
        interactive = overrides.get("labeler",
                                    base_config.labeler) == "interactive"
        engine.config = config

        def driver(selection: SelectionSession):
            with session.cond:
                session.selection = selection
                session.state = ("awaiting_label" if not selection.done
                                 else "working")
                session.cond.notify_all()
            with session.cond:
                while not selection.done:
                    session.cond.wait(0.25)
                session.snapshot_weights()
                session.state = "working"

        def worker():
            engine.session_driver = driver if interactive else None
            try:
                result = engine.run_query(text)
                with session.cond:
                    session.result = result
                    session.state = "done"
                    session.cond.notify_all()
            except Exception as exc:
                with session.cond:
                    session.error = str(exc)
                    session.state = "failed"
                    session.cond.notify_all()
            finally:
                engine.session_driver = None
                engine.config = base_config  # overrides are per-session

        threading.Thread(target=worker, daemon=True).start()
        return {"session_id": session.id}

    @app.get("/api/session/{sid}/sample")
    def sample(sid: str):
        session = sessions.get(sid)
        if session is None:
            return {"state": "none"}
        with session.cond:
            if session.state != "awaiting_label" or \
                    session.selection is None or session.selection.pending is None:
                return {"state": session.state,
                        "error": session.error or None}
            unit = session.selection.pending
            selection = session.selection
            return {
                "state": "awaiting_label",
                "unit": list(unit.uid),
                "phase": selection.phase,
                "budget": selection.config.b,
                "budget_used": selection.report.budget_used,
                "image": _patch_b64(unit),
                "metadata": _unit_metadata(unit),
                "concept": selection.signature.render(),
                "description": selection.signature.description,
            }

    @app.post("/api/session/{sid}/label")
    def label(sid: str, body: dict):
        session = sessions.get(sid)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        with session.cond:
            selection = session.selection
            if session.state != "awaiting_label" or selection is None or \
                    selection.pending is None:
                return JSONResponse({"error": "no pending sample"},
                                    status_code=409)
            uid = tuple(body.get("unit", ()))
            try:
                if body.get("skip"):
                    selection.skip(uid if uid else None)
                else:
                    selection.provide_label(uid, bool(body["label"]))
            except LabelerError as exc:
                return JSONResponse({"error": str(exc)}, status_code=409)
            except KeyError:
                return JSONResponse({"error": "missing 'label' field"},
                                    status_code=400)
            session.snapshot_weights()
            if selection.done:
                session.state = "working"
            session.cond.notify_all()
            return {"ok": True,
                    "budget_used": selection.report.budget_used,
                    "done": selection.done}

    @app.get("/api/session/{sid}/candidates")
    def candidates(sid: str):
        session = sessions.get(sid)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        with session.cond:
            labels = []
            weights = []
            if session.selection is not None:
                labels = list(session.selection.report.candidate_labels)
                weights = list(session.selection.weights)
            return {"candidates": labels, "weights": weights,
                    "history": session.weights_history}

    @app.get("/api/session/{sid}/result")
    def result(sid: str):
        session = sessions.get(sid)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        with session.cond:
            if session.state == "done":
                return {"state": "done",
                        "result": session.result.to_record()}
            if session.state == "failed":
                return {"state": "failed", "error": session.error}
            return {"state": session.state}

    return app


def serve(config: PipelineConfig, port: int = 8230, host: str = "127.0.0.1"):
    """Blocking server entry point used by the CLI."""
    import uvicorn

    engine = Engine(config)
    app = create_app(engine)
    uvicorn.run(app, host=host, port=port, log_level="warning")
