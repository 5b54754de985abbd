"""HTTP service wrapping training, evaluation, and diagnostics."""

from .app import create_app
from .jobs import Job, JobRegistry, error_kind
from .runner import resolve_request, run_eval, run_train

__all__ = ["create_app", "Job", "JobRegistry", "error_kind",
           "resolve_request", "run_eval", "run_train"]
