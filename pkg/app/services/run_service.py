import logging
from datetime import datetime
from pathlib import Path
from typing import List

import pandas as pd

from app.core.errors import DdpgError
from app.db.registry import registry
from app.models.config import RunConfig
from app.models.records import CSV_COLUMNS, EvalRecord
from app.models.run import RunRequest
from app.services import harness

logger = logging.getLogger("run-service")


def run_config_from_request(request: RunRequest, out_dir: Path) -> RunConfig:
    values = dict(request.overrides)
    values.update(
        env=request.env,
        algo=request.algo,
        seed=request.seed,
        total_env_steps=request.steps,
        eval_every=request.eval_every,
        eval_episodes=request.eval_episodes,
        out_dir=str(out_dir),
    )
    return harness.build_run_config(values)


def read_records(out_dir) -> List[EvalRecord]:
    path = Path(out_dir) / harness.PROGRESS_FILE
    if not path.exists():
        return []
    frame = pd.read_csv(path)
    if list(frame.columns) != list(CSV_COLUMNS):
        logger.warning(f"Unexpected columns in {path}: {list(frame.columns)}")
        return []
    return [
        EvalRecord(**{k: int(v) if k == "env_steps" else float(v) for k, v in row.items()})
        for row in frame.to_dict(orient="records")
    ]


def expected_records(cfg: RunConfig) -> int:
    return cfg.total_env_steps // cfg.eval_every


def progress_of(doc) -> int:
    status = doc.get("status")
    if status == "completed":
        return 100
    if status == "failed":
        return -1
    expected = doc.get("expectedRecords") or 0
    if status != "training" or expected == 0:
        return 0
    return min(99, int(100 * doc.get("recordsWritten", 0) / expected))


def launch_run(run_id: str, cfg: RunConfig):
    """Background task: train one run and keep its registry document current."""
    start_time = datetime.now()
    logger.info(f"Starting run {run_id}: {cfg.algo} on {cfg.env}, seed {cfg.seed}")
    registry.update(run_id, {"status": "training", "startedAt": start_time.isoformat()})

    def on_record(record: EvalRecord):
        doc = registry.get(run_id) or {}
        registry.update(run_id, {"recordsWritten": doc.get("recordsWritten", 0) + 1})

    try:
        harness.train(cfg, out=Path(cfg.out_dir), progress_callback=on_record)
        registry.update(run_id, {
            "status": "completed",
            "completedAt": datetime.now().isoformat(),
            "durationSeconds": (datetime.now() - start_time).total_seconds(),
        })
        logger.info(f"Run {run_id} completed")
    except DdpgError as e:
        error_msg = f"Run failed: {str(e)}"
        logger.error(error_msg)
        registry.update(run_id, {
            "status": "failed",
            "error": error_msg,
            "failedAt": datetime.now().isoformat(),
            "durationSeconds": (datetime.now() - start_time).total_seconds(),
        })
    except Exception as e:
        logger.exception(f"Unhandled error in run {run_id}: {str(e)}")
        registry.update(run_id, {
            "status": "failed",
            "error": f"Unhandled run error: {str(e)}",
            "failedAt": datetime.now().isoformat(),
            "durationSeconds": (datetime.now() - start_time).total_seconds(),
        })
