"""Request/response bodies for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class TrainRequest(BaseModel):
    config_path: str | None = None
    overrides: dict = Field(default_factory=dict)  # dotted key -> value


class EvalRequest(BaseModel):
    checkpoint: str | None = None   # None evaluates the random baseline
    populations: list = Field(default_factory=lambda: [8])
    seeds: list = Field(default_factory=lambda: [0])
    episodes: int = 4
    scenario_dir: str = "scenarios"
    out_csv: str | None = None
    batch: int = 8
    train_tag: str | None = None


class GradcheckRequest(BaseModel):
    suites: list | None = None
    tolerance: float = 1e-5


class PlotRequest(BaseModel):
    log_path: str
    out_dir: str = "plots"
    trajectory: str | None = None   # trajectory CSV to render instead


class ErrorBody(BaseModel):
    kind: str        # config | io | run
    message: str


class JobInfo(BaseModel):
    job_id: str
    kind: str
    state: str       # pending | running | done | error
    result: dict | None = None
    error: ErrorBody | None = None
