"""Command-line client for the service: train, eval, gradcheck, oracle, plot.

Every command talks HTTP. By default the service app is mounted in-process
(no socket); --server points the same client at a remote instance. Exit
codes: 0 success, 1 run/criterion failure, 2 config error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys
import time

import httpx

EXIT_OK, EXIT_RUN, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

_KIND_EXIT = {"config": EXIT_CONFIG, "io": EXIT_IO, "run": EXIT_RUN}
_STATUS_EXIT = {400: EXIT_CONFIG, 404: EXIT_IO, 422: EXIT_CONFIG}


class ServiceClient:
    """Synchronous facade over a remote server or the in-process ASGI app."""

    def __init__(self, server: str | None = None):
        self.server = server
        if server is None:
            from .service import create_app

            self._app = create_app()

    def request(self, method: str, path: str, body: dict | None = None) -> tuple:
        if self.server is not None:
            with httpx.Client(base_url=self.server, timeout=None) as client:
                r = client.request(method, path, json=body)
                return r.status_code, r.json()

        async def go():
            transport = httpx.ASGITransport(app=self._app)
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://service.local",
                                         timeout=None) as client:
                r = await client.request(method, path, json=body)
                return r.status_code, r.json()

        return asyncio.run(go())

    def wait_job(self, job_id: str, poll_s: float = 0.5) -> tuple:
        if self.server is None:
            # same process: join the worker thread instead of poll-spinning
            self._app.state.jobs.wait(job_id)
            job = self._app.state.jobs.get(job_id)
            return 200, json.loads(job.info().model_dump_json())
        while True:
            status, body = self.request("GET", f"/jobs/{job_id}")
            if status != 200 or body.get("state") in ("done", "error"):
                return status, body
            time.sleep(poll_s)


def _fail(status: int, body: dict) -> int:
    err = (body or {}).get("error", {})
    kind = err.get("kind", "run")
    print(f"error ({kind}): {err.get('message', body)}", file=sys.stderr)
    return _KIND_EXIT.get(kind, _STATUS_EXIT.get(status, EXIT_RUN))


def _job_command(client: ServiceClient, path: str, body: dict) -> tuple:
    """Submits a job and blocks until it finishes; returns (exit, result)."""
    status, resp = client.request("POST", path, body)
    if status != 200:
        return _fail(status, resp), None
    status, info = client.wait_job(resp["job_id"])
    if status != 200:
        return _fail(status, info), None
    if info["state"] == "error":
        err = info["error"]
        print(f"error ({err['kind']}): {err['message']}", file=sys.stderr)
        return _KIND_EXIT.get(err["kind"], EXIT_RUN), None
    return EXIT_OK, info["result"]


def _parse_overrides(args) -> dict:
    overrides = {}
    sugar = (
        ("env", "env.kind"), ("seed", "run.seed"), ("updates", "train.updates"),
        ("value_mode", "model.value_mode"), ("log_dir", "run.log_dir"),
        ("tag", "run.tag"), ("workers", "run.workers"),
    )
    for attr, key in sugar:
        val = getattr(args, attr, None)
        if val is not None:
            overrides[key] = str(val)
    if overrides.get("env.kind") == "matrix_game":
        overrides["env.kind"] = "matrix"
    for item in args.set or []:
        if "=" not in item:
            print(f"error (config): --set expects key=value, got {item!r}",
                  file=sys.stderr)
            raise SystemExit(EXIT_CONFIG)
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    if "run.log_dir" not in overrides and args.config is None \
            and os.environ.get("SEQMARL_LOG_DIR"):
        overrides["run.log_dir"] = os.environ["SEQMARL_LOG_DIR"]
    return overrides


def cmd_train(args) -> int:
    client = ServiceClient(args.server)
    if args.config is not None and not os.path.exists(args.config):
        print(f"error (config): config file not found: {args.config}",
              file=sys.stderr)
        return EXIT_CONFIG
    body = {"config_path": args.config, "overrides": _parse_overrides(args)}
    code, result = _job_command(client, "/train", body)
    if code == EXIT_OK:
        print(json.dumps(result, indent=2))
    return code


def cmd_eval(args) -> int:
    client = ServiceClient(args.server)
    body = {
        "checkpoint": None if args.random else args.checkpoint,
        "populations": [int(x) for x in args.populations.split(",")],
        "seeds": [int(x) for x in args.seeds.split(",")],
        "episodes": args.episodes,
        "scenario_dir": args.scenario_dir,
        "out_csv": args.out,
        "batch": args.batch,
        "train_tag": args.tag,
    }
    if body["checkpoint"] is None and not args.random:
        print("error (config): pass --checkpoint PATH or --random",
              file=sys.stderr)
        return EXIT_CONFIG
    code, result = _job_command(client, "/eval", body)
    if code == EXIT_OK:
        print(result["table"])
        if result.get("csv"):
            print(f"csv: {result['csv']}")
    return code


def cmd_gradcheck(args) -> int:
    client = ServiceClient(args.server)
    body = {"tolerance": args.tolerance}
    if args.suites:
        body["suites"] = args.suites.split(",")
    status, resp = client.request("POST", "/gradcheck", body)
    if status != 200:
        return _fail(status, resp)
    print(resp["report"])
    return EXIT_OK if resp["passed"] else EXIT_RUN


def cmd_oracle(args) -> int:
    client = ServiceClient(args.server)
    status, resp = client.request("POST", "/oracle", {})
    if status != 200:
        return _fail(status, resp)
    print(resp["report"])
    return EXIT_OK


def cmd_plot(args) -> int:
    client = ServiceClient(args.server)
    body = {"log_path": args.log or "", "out_dir": args.out_dir,
            "trajectory": args.trajectory}
    if not args.log and not args.trajectory:
        print("error (config): pass --log PATH or --trajectory CSV",
              file=sys.stderr)
        return EXIT_CONFIG
    status, resp = client.request("POST", "/plot", body)
    if status != 200:
        return _fail(status, resp)
    for path in resp["written"]:
        print(path)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seqmarl")
    p.add_argument("--server", default=None,
                   help="base URL of a running service; default runs in-process")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run a training job")
    t.add_argument("--config", default=None, help="key=value config file")
    t.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    t.add_argument("--env", default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--updates", type=int, default=None)
    t.add_argument("--value-mode", dest="value_mode", default=None,
                   choices=("srsv", "srsv_no_pi", "joint_encoder"))
    t.add_argument("--log-dir", dest="log_dir", default=None)
    t.add_argument("--tag", default=None)
    t.add_argument("--workers", type=int, default=None)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="population-transfer evaluation")
    e.add_argument("--checkpoint", default=None)
    e.add_argument("--random", action="store_true",
                   help="evaluate the uniform-random baseline instead")
    e.add_argument("--populations", default="8")
    e.add_argument("--seeds", default="0")
    e.add_argument("--episodes", type=int, default=4)
    e.add_argument("--scenario-dir", dest="scenario_dir", default="scenarios")
    e.add_argument("--out", default=None, help="write the report CSV here")
    e.add_argument("--batch", type=int, default=8)
    e.add_argument("--tag", default=None)
    e.set_defaults(fn=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    g.add_argument("--suites", default=None, help="comma-separated subset")
    g.add_argument("--tolerance", type=float, default=1e-5)
    g.set_defaults(fn=cmd_gradcheck)

    o = sub.add_parser("oracle", help="print matrix-game enumeration oracles")
    o.set_defaults(fn=cmd_oracle)

    pl = sub.add_parser("plot", help="render training logs or trajectories")
    pl.add_argument("--log", default=None)
    pl.add_argument("--out-dir", dest="out_dir", default="plots")
    pl.add_argument("--trajectory", default=None)
    pl.set_defaults(fn=cmd_plot)

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8351)
    s.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit as e:
        return int(e.code or 0)
    except KeyboardInterrupt:
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
