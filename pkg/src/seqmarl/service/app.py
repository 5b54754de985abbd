"""FastAPI application exposing the training and evaluation pipelines."""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from ..config import ConfigError
from ..nn import ContractError
from .jobs import JobRegistry, error_kind
from .runner import resolve_request, run_eval, run_train
from .schemas import (EvalRequest, GradcheckRequest, JobInfo, PlotRequest,
                      TrainRequest)

_STATUS = {"config": 400, "io": 404, "run": 500}


def _error_response(exc: Exception) -> JSONResponse:
    kind = error_kind(exc)
    return JSONResponse(status_code=_STATUS[kind],
                        content={"error": {"kind": kind, "message": str(exc)}})


def create_app() -> FastAPI:
    app = FastAPI(title="seqmarl")
    jobs = JobRegistry()
    app.state.jobs = jobs

    @app.exception_handler(ConfigError)
    async def _config_err(request, exc):
        return _error_response(exc)

    @app.exception_handler(ContractError)
    async def _contract_err(request, exc):
        return _error_response(exc)

    @app.exception_handler(OSError)
    async def _io_err(request, exc):
        return _error_response(exc)

    @app.get("/health")
    async def health():
        return {"status": "ok", "service": "seqmarl"}

    @app.post("/train", response_model=JobInfo)
    async def train(req: TrainRequest):
        # config errors surface before the job starts, so bad requests fail
        # fast instead of parking an error in the registry
        resolved = resolve_request(req.config_path, req.overrides)
        job = jobs.submit("train", lambda: run_train(resolved))
        return job.info()

    @app.post("/eval", response_model=JobInfo)
    async def eval_(req: EvalRequest):
        job = jobs.submit("eval", lambda: run_eval(
            req.checkpoint, req.populations, req.seeds, req.episodes,
            req.scenario_dir, out_csv=req.out_csv, batch=req.batch,
            train_tag=req.train_tag))
        return job.info()

    @app.get("/jobs/{job_id}", response_model=JobInfo)
    async def job_info(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            return JSONResponse(status_code=404, content={
                "error": {"kind": "io", "message": f"unknown job {job_id!r}"}})
        return job.info()

    @app.post("/gradcheck")
    async def gradcheck(req: GradcheckRequest):
        from ..diagnostics import SUITES, format_gradcheck, run_gradcheck

        names = req.suites
        if names:
            unknown = sorted(set(names) - set(SUITES))
            if unknown:
                raise ConfigError(f"unknown gradcheck suites: {unknown}")
        results = run_gradcheck(names, tolerance=req.tolerance)
        return {
            "passed": all(r.passed for r in results),
            "report": format_gradcheck(results),
            "suites": [{"name": r.name, "max_rel_err": r.max_rel_err,
                        "passed": r.passed, "worst_param": r.worst()}
                       for r in results],
        }

    @app.post("/oracle")
    async def oracle():
        from ..diagnostics import oracle_report

        return {"report": oracle_report()}

    @app.post("/plot")
    async def plot(req: PlotRequest):
        from ..eval.plots import plot_log, plot_trajectory

        if req.trajectory:
            import os

            os.makedirs(req.out_dir, exist_ok=True)
            out = plot_trajectory(req.trajectory, os.path.join(
                req.out_dir, "trajectory.png"))
            return {"written": [out]}
        return {"written": plot_log(req.log_path, req.out_dir)}

    return app
