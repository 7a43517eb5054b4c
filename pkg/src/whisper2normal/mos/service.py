"""HTTP API for the listening test: sessions, clip audio, ratings, results.

JSON over HTTP, consumed by the browser client. Evaluators only ever see
neutral clip ids. The results endpoint is for the operator; when a results
token is configured it must be presented as a query parameter.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel, Field

from .store import NotFoundError, RatingStore, SessionError


class SessionRequest(BaseModel):
    evaluator_id: str = Field(min_length=1, max_length=128)


class RatingRequest(BaseModel):
    session_id: str
    clip_id: str
    score: int = Field(ge=1, le=5)


def create_app(
    store: RatingStore,
    clips_per_session: int = 6,
    fixed_clips: bool = False,
    results_token: Optional[str] = None,
) -> FastAPI:
    app = FastAPI(title="listening test service")

    @app.exception_handler(SessionError)
    async def _session_error(request, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(NotFoundError)
    async def _not_found(request, exc):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.post("/sessions")
    def create_session(req: SessionRequest):
        session = store.create_session(req.evaluator_id, clips_per_session, fixed_clips)
        return {
            "session_id": session.session_id,
            "clip_count": len(session.clip_ids),
        }

    @app.get("/sessions/{session_id}/clips")
    def session_clips(session_id: str):
        session = store.get_session(session_id)
        return [
            {
                "clip_id": cid,
                "audio_url": f"/clips/{cid}/audio",
                "completed": session.completed[cid],
            }
            for cid in session.clip_ids
        ]

    @app.get("/clips/{clip_id}/audio")
    def clip_audio(clip_id: str):
        path = store.clip_path(clip_id)
        if not Path(path).exists():
            raise HTTPException(status_code=404, detail=f"audio file missing for {clip_id}")
        return FileResponse(path, media_type="audio/wav", filename=f"{clip_id}.wav")

    @app.post("/ratings")
    def submit_rating(req: RatingRequest):
        rating = store.submit_rating(req.session_id, req.clip_id, req.score, time.time())
        session = store.get_session(req.session_id)
        return {
            "acknowledged": True,
            "session_id": rating.session_id,
            "clip_id": rating.clip_id,
            "score": rating.score,
            "session_complete": all(session.completed.values()),
        }

    @app.get("/results")
    def results(token: Optional[str] = Query(default=None)):
        if results_token is not None and token != results_token:
            raise HTTPException(status_code=403, detail="results token required")
        return store.summary()

    return app
