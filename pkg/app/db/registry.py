import logging
import threading
from copy import deepcopy
from typing import Any, Dict, List, Optional

logger = logging.getLogger("registry")


class RunRegistry:
    """In-process store of run documents keyed by run id."""

    def __init__(self):
        self._runs: Dict[str, Dict[str, Any]] = {}
        self._lock = threading.Lock()

    def create(self, run_id: str, data: Dict[str, Any]) -> None:
        with self._lock:
            if run_id in self._runs:
                raise KeyError(f"run {run_id} already exists")
            self._runs[run_id] = dict(data)

    def update(self, run_id: str, data: Dict[str, Any]) -> None:
        with self._lock:
            self._runs[run_id].update(data)

    def get(self, run_id: str) -> Optional[Dict[str, Any]]:
        with self._lock:
            doc = self._runs.get(run_id)
            return deepcopy(doc) if doc is not None else None

    def list(self, limit: int = 10) -> List[Dict[str, Any]]:
        with self._lock:
            docs = sorted(self._runs.values(), key=lambda d: d.get("createdAt", ""), reverse=True)
            return [deepcopy(d) for d in docs[:limit]]

    def clear(self) -> None:
        with self._lock:
            self._runs.clear()


registry = RunRegistry()
