from datetime import datetime
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from app.models.records import EvalRecord


class RunRequest(BaseModel):
    env: str = "lqr2d"
    algo: str = "ddpgpp"
    seed: int = 0
    steps: int = 30_000
    eval_every: int = 5_000
    eval_episodes: int = 10
    overrides: Dict[str, Any] = Field(default_factory=dict)


class RunResponse(BaseModel):
    run_id: str
    status: str = "queued"
    out_dir: str
    created_at: str = Field(default_factory=lambda: datetime.now().isoformat())
    monitor_url: Optional[str] = None


class RunStatus(BaseModel):
    run_id: str
    status: str
    progress: int
    env: str
    algo: str
    seed: int
    out_dir: str
    created_at: Optional[str] = None
    started_at: Optional[str] = None
    completed_at: Optional[str] = None
    duration_seconds: Optional[float] = None
    latest: Optional[EvalRecord] = None
    error: Optional[str] = None


class RunRecords(BaseModel):
    run_id: str
    records: List[EvalRecord]
