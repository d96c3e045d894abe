import logging
import uuid
from datetime import datetime
from typing import List

from fastapi import APIRouter, BackgroundTasks, HTTPException

from app.core.config import settings
from app.core.errors import ConfigError
from app.db.registry import registry
from app.models.run import RunRecords, RunRequest, RunResponse, RunStatus
from app.services.run_service import (expected_records, launch_run,
                                      progress_of, read_records,
                                      run_config_from_request)

router = APIRouter()
logger = logging.getLogger("api-endpoints")


def _status_from_doc(doc) -> RunStatus:
    records = read_records(doc["outDir"])
    return RunStatus(
        run_id=doc["runId"],
        status=doc.get("status", "unknown"),
        progress=progress_of(doc),
        env=doc["env"],
        algo=doc["algo"],
        seed=doc["seed"],
        out_dir=doc["outDir"],
        created_at=doc.get("createdAt"),
        started_at=doc.get("startedAt"),
        completed_at=doc.get("completedAt"),
        duration_seconds=doc.get("durationSeconds"),
        latest=records[-1] if records else None,
        error=doc.get("error"),
    )


@router.post("/runs", response_model=RunResponse)
async def create_run(request: RunRequest, background_tasks: BackgroundTasks):
    run_id = str(uuid.uuid4())
    out_dir = settings.resolve_output(run_id, root=settings.OUTPUT_ROOT or "runs")
    try:
        cfg = run_config_from_request(request, out_dir)
    except ConfigError as e:
        logger.error(f"Rejected run request: {str(e)}")
        raise HTTPException(status_code=422, detail=str(e))

    registry.create(run_id, {
        "runId": run_id,
        "env": cfg.env,
        "algo": cfg.algo,
        "seed": cfg.seed,
        "outDir": str(out_dir),
        "status": "queued",
        "expectedRecords": expected_records(cfg),
        "recordsWritten": 0,
        "createdAt": datetime.now().isoformat(),
    })
    background_tasks.add_task(launch_run, run_id, cfg)

    return RunResponse(
        run_id=run_id,
        status="queued",
        out_dir=str(out_dir),
        monitor_url=f"/api/v1/runs/{run_id}/status",
    )


@router.get("/runs", response_model=List[RunStatus])
async def list_runs(limit: int = 10):
    return [_status_from_doc(doc) for doc in registry.list(limit)]


@router.get("/runs/{run_id}/status", response_model=RunStatus)
async def get_run_status(run_id: str):
    """
    Run status with progress and the latest evaluation record
    """
    doc = registry.get(run_id)
    if doc is None:
        raise HTTPException(status_code=404, detail="Run not found")
    return _status_from_doc(doc)


@router.get("/runs/{run_id}/records", response_model=RunRecords)
async def get_run_records(run_id: str):
    doc = registry.get(run_id)
    if doc is None:
        raise HTTPException(status_code=404, detail="Run not found")
    return RunRecords(run_id=run_id, records=read_records(doc["outDir"]))
