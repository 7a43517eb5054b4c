"""Durable storage for listening sessions and ratings.

Append-only JSONL logs, fsynced before every ack, so an ack'd rating
survives a crash. Resubmitting a (session, clip) rating overwrites the
effective value while the log keeps both lines as the audit trail. Clips
get neutral numeric ids; the id-to-file mapping stays server-side so
evaluators cannot infer which configuration produced a clip.
"""

from __future__ import annotations

import json
import os
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np


class SessionError(ValueError):
    pass


class NotFoundError(KeyError):
    pass


@dataclass
class ListeningSession:
    session_id: str
    evaluator_id: str
    clip_ids: list[str]  # fixed order, randomized once at creation
    completed: dict[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        for cid in self.clip_ids:
            self.completed.setdefault(cid, False)


@dataclass
class Rating:
    session_id: str
    clip_id: str
    score: int
    timestamp: float


@dataclass
class MosResult:
    mean: Optional[float]
    count: int


class RatingStore:
    """File-backed session/rating store; replays its logs on startup."""

    def __init__(self, data_dir: str | Path, seed: int = 0):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._sessions_path = self.data_dir / "sessions.jsonl"
        self._ratings_path = self.data_dir / "ratings.jsonl"
        self._clips_path = self.data_dir / "clips.json"
        self.rng = np.random.default_rng(seed)
        self.sessions: dict[str, ListeningSession] = {}
        self.ratings: dict[tuple[str, str], Rating] = {}  # last write wins
        self.audit: list[Rating] = []
        self.clips: dict[str, str] = {}  # clip_id -> audio path
        self._fixed_draw: Optional[list[str]] = None
        self._replay()

    # -- persistence ------------------------------------------------------

    def _replay(self) -> None:
        if self._clips_path.exists():
            self.clips = json.loads(self._clips_path.read_text(encoding="utf-8"))
        if self._sessions_path.exists():
            for line in self._sessions_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    row = json.loads(line)
                    s = ListeningSession(
                        session_id=row["session_id"],
                        evaluator_id=row["evaluator_id"],
                        clip_ids=row["clip_ids"],
                    )
                    self.sessions[s.session_id] = s
        if self._ratings_path.exists():
            for line in self._ratings_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    row = json.loads(line)
                    self._apply_rating(Rating(**row))

    def _append(self, path: Path, row: dict) -> None:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- clips -------------------------------------------------------------

    def register_clips(self, audio_paths: list[str | Path]) -> list[str]:
        """Assign neutral ids to a clip pool and persist the mapping."""
        if not audio_paths:
            raise SessionError("clip pool is empty")
        self.clips = {
            f"clip_{i:04d}": str(p) for i, p in enumerate(sorted(str(p) for p in audio_paths))
        }
        self._clips_path.write_text(json.dumps(self.clips, indent=2), encoding="utf-8")
        return list(self.clips)

    def clip_path(self, clip_id: str) -> str:
        if clip_id not in self.clips:
            raise NotFoundError(f"unknown clip {clip_id!r}")
        return self.clips[clip_id]

    # -- sessions ----------------------------------------------------------

    def create_session(
        self, evaluator_id: str, clips_per_session: int, fixed_clips: bool = False
    ) -> ListeningSession:
        """Draw a random clip subset without replacement, in random order."""
        pool = list(self.clips)
        if not pool:
            raise SessionError("clip pool is empty")
        if clips_per_session > len(pool):
            raise SessionError(
                f"clips_per_session {clips_per_session} exceeds pool size {len(pool)}"
            )
        if fixed_clips:
            if self._fixed_draw is None or len(self._fixed_draw) != clips_per_session:
                self._fixed_draw = [
                    pool[i] for i in self.rng.choice(len(pool), clips_per_session, replace=False)
                ]
            chosen = list(self._fixed_draw)
        else:
            chosen = [
                pool[i] for i in self.rng.choice(len(pool), clips_per_session, replace=False)
            ]
        session = ListeningSession(
            session_id=uuid.uuid4().hex, evaluator_id=evaluator_id, clip_ids=chosen
        )
        self.sessions[session.session_id] = session
        self._append(
            self._sessions_path,
            {
                "session_id": session.session_id,
                "evaluator_id": session.evaluator_id,
                "clip_ids": session.clip_ids,
            },
        )
        return session

    def get_session(self, session_id: str) -> ListeningSession:
        if session_id not in self.sessions:
            raise NotFoundError(f"unknown session {session_id!r}")
        return self.sessions[session_id]

    # -- ratings -----------------------------------------------------------

    def _apply_rating(self, rating: Rating) -> None:
        self.audit.append(rating)
        self.ratings[(rating.session_id, rating.clip_id)] = rating
        session = self.sessions.get(rating.session_id)
        if session is not None and rating.clip_id in session.completed:
            session.completed[rating.clip_id] = True

    def submit_rating(self, session_id: str, clip_id: str, score: int, timestamp: float) -> Rating:
        """Validate, persist durably, then ack by returning the rating."""
        if not isinstance(score, int) or not 1 <= score <= 5:
            raise SessionError(f"score must be an integer in 1..5, got {score!r}")
        session = self.get_session(session_id)
        if clip_id not in session.clip_ids:
            raise NotFoundError(f"clip {clip_id!r} is not part of session {session_id!r}")
        rating = Rating(session_id=session_id, clip_id=clip_id, score=score, timestamp=timestamp)
        self._append(
            self._ratings_path,
            {
                "session_id": session_id,
                "clip_id": clip_id,
                "score": score,
                "timestamp": timestamp,
            },
        )
        self._apply_rating(rating)
        return rating

    # -- aggregation --------------------------------------------------------

    def compute_mos(self, scope: str = "overall", clip_id: Optional[str] = None) -> MosResult:
        """Arithmetic mean of effective ratings; explicit no-data result."""
        if scope == "overall":
            scores = [r.score for r in self.ratings.values()]
        elif scope == "per_clip":
            if clip_id is None:
                raise SessionError("per_clip scope needs a clip_id")
            scores = [r.score for r in self.ratings.values() if r.clip_id == clip_id]
        else:
            raise SessionError(f"unknown scope {scope!r}")
        if not scores:
            return MosResult(mean=None, count=0)
        return MosResult(mean=sum(scores) / len(scores), count=len(scores))

    def summary(self) -> dict:
        overall = self.compute_mos("overall")
        per_clip = {}
        for cid in self.clips:
            res = self.compute_mos("per_clip", cid)
            if res.count:
                per_clip[cid] = {"mos": res.mean, "count": res.count}
        return {
            "overall_mos": overall.mean,
            "rating_count": overall.count,
            "session_count": len(self.sessions),
            "per_clip": per_clip,
        }
