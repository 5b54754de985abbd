"""Thread-backed job registry for long-running train/eval work."""

from __future__ import annotations

import threading

from ..config import ConfigError
from ..nn import ContractError
from .schemas import ErrorBody, JobInfo


def error_kind(exc: Exception) -> str:
    if isinstance(exc, (ConfigError, ContractError)):
        return "config"
    if isinstance(exc, OSError):
        return "io"
    return "run"


class Job:
    def __init__(self, job_id: str, kind: str):
        self.job_id = job_id
        self.kind = kind
        self.state = "pending"
        self.result = None
        self.error = None
        self.thread = None

    def info(self) -> JobInfo:
        return JobInfo(job_id=self.job_id, kind=self.kind, state=self.state,
                       result=self.result, error=self.error)


class JobRegistry:
    def __init__(self):
        self._jobs = {}
        self._lock = threading.Lock()
        self._count = 0

    def submit(self, kind: str, fn) -> Job:
        with self._lock:
            self._count += 1
            job = Job(f"{kind}-{self._count:04d}", kind)
            self._jobs[job.job_id] = job

        def run():
            job.state = "running"
            try:
                job.result = fn()
                job.state = "done"
            except Exception as e:  # noqa: BLE001 - reported to the client
                job.error = ErrorBody(kind=error_kind(e), message=str(e))
                job.state = "error"

        job.thread = threading.Thread(target=run, daemon=True)
        job.thread.start()
        return job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def wait(self, job_id: str, timeout: float | None = None) -> Job:
        job = self.get(job_id)
        if job is not None and job.thread is not None:
            job.thread.join(timeout)
        return job
