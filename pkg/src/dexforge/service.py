"""HTTP facade over retargeting sessions (consumed by the browser GUI).

Routes (JSON in/out):

    POST /session                    open: {recording, hand, profile?, max_iters?}
    GET  /session/{id}/state         render payload (see session.render_state)
    PUT  /session/{id}/offset        {"offset": [tx,ty,tz,roll,pitch,yaw]}
    POST /session/{id}/frame         {"delta": n}
    POST /session/{id}/solve-all     {}
    POST /session/{id}/profile       {"store": path}

Sessions are single-writer: concurrent mutations of one session return 409.
Mutation responses embed the fresh state payload so clients never need a
follow-up GET.  Solver blow-ups surface as 422 with the session state intact.
"""

from __future__ import annotations

import threading
from dataclasses import replace
from pathlib import Path

from fastapi import Body, FastAPI
from fastapi.responses import JSONResponse

from .errors import DexforgeError, SessionConflict, SingularUpdate
from .retarget import IkConfig
from .session import INTERACTIVE_CONFIG, Session, open_session


class SessionManager:
    def __init__(self) -> None:
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def add(self, session: Session) -> None:
        with self._registry_lock:
            self._sessions[session.id] = session
            self._locks[session.id] = threading.Lock()

    def get(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise KeyError(session_id) from None

    def lock(self, session_id: str) -> threading.Lock:
        return self._locks[session_id]

    def ids(self) -> list[str]:
        return list(self._sessions)

    def close(self, session_id: str) -> None:
        with self._registry_lock:
            del self._sessions[session_id]
            del self._locks[session_id]


def create_app(ui_dir=None) -> FastAPI:
    app = FastAPI(title="dexforge retargeting service")
    manager = SessionManager()
    app.state.manager = manager

    def _fail(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": message})

    @app.exception_handler(KeyError)
    async def _unknown_session(_, exc: KeyError):
        return _fail(404, f"unknown session {exc.args[0]!r}")

    @app.exception_handler(SessionConflict)
    async def _busy(_, exc: SessionConflict):
        return _fail(409, str(exc))

    @app.exception_handler(SingularUpdate)
    async def _solver(_, exc: SingularUpdate):
        return _fail(422, f"solver error: {exc}")

    @app.exception_handler(DexforgeError)
    async def _domain(_, exc: DexforgeError):
        return _fail(400, str(exc))

    def _mutate(session_id: str):
        """Non-blocking acquire; a busy session means a concurrent operator."""
        lock = manager.lock(session_id)
        if not lock.acquire(blocking=False):
            raise SessionConflict(f"session {session_id} is processing another request")
        return lock

    @app.post("/session")
    def open_(payload: dict = Body(...)):
        for key in ("recording", "hand"):
            if key not in payload:
                return _fail(400, f"missing required field '{key}'")
        config = INTERACTIVE_CONFIG
        if "max_iters" in payload:
            config = replace(config, max_iters=int(payload["max_iters"]))
        session = open_session(
            payload["recording"], payload["hand"], payload.get("profile"), config
        )
        manager.add(session)
        return {"session_id": session.id, "state": session.render_state()}

    @app.get("/session/{session_id}/state")
    def state(session_id: str):
        return manager.get(session_id).render_state()

    @app.put("/session/{session_id}/offset")
    def set_offset(session_id: str, payload: dict = Body(...)):
        session = manager.get(session_id)
        if "offset" not in payload:
            return _fail(400, "missing required field 'offset'")
        lock = _mutate(session_id)
        try:
            session.set_offset(payload["offset"])
        finally:
            lock.release()
        return {"state": session.render_state()}

    @app.post("/session/{session_id}/frame")
    def step_frame(session_id: str, payload: dict = Body(...)):
        session = manager.get(session_id)
        lock = _mutate(session_id)
        try:
            session.step_frame(int(payload.get("delta", 0)))
        finally:
            lock.release()
        return {"state": session.render_state()}

    @app.post("/session/{session_id}/solve-all")
    def solve_all(session_id: str):
        session = manager.get(session_id)
        lock = _mutate(session_id)
        try:
            summary = session.solve_all()
        finally:
            lock.release()
        return {"summary": summary, "state": session.render_state()}

    @app.post("/session/{session_id}/profile")
    def save_profile(session_id: str, payload: dict = Body(...)):
        session = manager.get(session_id)
        if "store" not in payload:
            return _fail(400, "missing required field 'store'")
        lock = _mutate(session_id)
        try:
            profile = session.save_profile(payload["store"])
        finally:
            lock.release()
        path = Path(payload["store"])
        if path.suffix != ".json":
            path = path / f"{profile.dataset_id}__{profile.hand_id}.json"
        return {"profile": profile.to_json(), "path": str(path)}

    @app.delete("/session/{session_id}")
    def close(session_id: str):
        manager.get(session_id)  # 404 before trying to lock
        lock = _mutate(session_id)
        try:
            manager.close(session_id)
        finally:
            lock.release()
        return {"closed": session_id}

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
