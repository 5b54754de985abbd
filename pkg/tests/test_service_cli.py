"""HTTP service endpoints and the thin CLI client, including exit codes."""

import csv
import json
import os
import socket
import threading
import time

import pytest
from fastapi.testclient import TestClient

from seqmarl.cli import main
from seqmarl.service import create_app

FAST_MODEL = ["--set", "model.embed_dim=16", "--set", "model.n_heads=2",
              "--set", "model.n_blocks_encoder=1",
              "--set", "model.n_blocks_decoder=1"]


@pytest.fixture()
def app():
    return create_app()


@pytest.fixture()
def client(app):
    return TestClient(app)


def finish(app, client, job_id):
    app.state.jobs.wait(job_id)
    resp = client.get(f"/jobs/{job_id}")
    assert resp.status_code == 200
    return resp.json()


# ---- service ----


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200 and r.json()["status"] == "ok"


def test_train_job_zero_updates_writes_checkpoint(app, client, tmp_path):
    overrides = {"train.updates": "0", "run.log_dir": str(tmp_path),
                 "model.embed_dim": "16", "model.n_heads": "2",
                 "model.n_blocks_encoder": "1", "model.n_blocks_decoder": "1"}
    r = client.post("/train", json={"overrides": overrides})
    assert r.status_code == 200
    body = r.json()
    assert body["kind"] == "train" and body["state"] in ("pending", "running")
    info = finish(app, client, body["job_id"])
    assert info["state"] == "done"
    result = info["result"]
    assert result["updates"] == 0 and os.path.exists(result["checkpoint"])
    assert result["tag"] == "matrix_srsv_s0"


def test_train_rejects_unknown_key_before_submitting(client):
    r = client.post("/train", json={"overrides": {"no.such.key": "1"}})
    assert r.status_code == 400
    assert r.json()["error"]["kind"] == "config"


def test_train_env_fault_surfaces_as_job_error(app, client, tmp_path):
    overrides = {"env.matrix.n_agents": "9", "run.log_dir": str(tmp_path)}
    r = client.post("/train", json={"overrides": overrides})
    assert r.status_code == 200  # resolves fine; env construction fails in-job
    info = finish(app, client, r.json()["job_id"])
    assert info["state"] == "error"
    assert info["error"]["kind"] == "config"


def test_unknown_job_is_404(client):
    r = client.get("/jobs/nope")
    assert r.status_code == 404 and r.json()["error"]["kind"] == "io"


def test_eval_random_baseline_job(app, client, tmp_path):
    out = str(tmp_path / "transfer.csv")
    r = client.post("/eval", json={"checkpoint": None, "populations": [4],
                                   "seeds": [0], "episodes": 1, "out_csv": out})
    info = finish(app, client, r.json()["job_id"])
    assert info["state"] == "done"
    assert info["result"]["csv"] == out and os.path.exists(out)
    assert "reach_ratio" in info["result"]["table"]


def test_eval_missing_checkpoint_is_io_error(app, client):
    r = client.post("/eval", json={"checkpoint": "nowhere.bin",
                                   "populations": [4], "seeds": [0],
                                   "episodes": 1})
    info = finish(app, client, r.json()["job_id"])
    assert info["state"] == "error" and info["error"]["kind"] == "io"


def test_gradcheck_endpoint(client):
    r = client.post("/gradcheck", json={"suites": ["linear", "layernorm"]})
    assert r.status_code == 200
    body = r.json()
    assert body["passed"] is True
    assert {s["name"] for s in body["suites"]} == {"linear", "layernorm"}
    assert all(s["max_rel_err"] < 1e-5 for s in body["suites"])
    r = client.post("/gradcheck", json={"suites": ["bogus"]})
    assert r.status_code == 400 and r.json()["error"]["kind"] == "config"


def test_oracle_endpoint(client):
    r = client.post("/oracle")
    assert r.status_code == 200
    assert "xor" in r.json()["report"] and "optimal" in r.json()["report"]


def test_plot_endpoint(client, tmp_path):
    log = tmp_path / "c.jsonl"
    with open(log, "w") as fh:
        for u in range(3):
            fh.write(json.dumps({"update": u + 1, "timestep": 10 * (u + 1),
                                 "mean_return": float(u)}) + "\n")
    r = client.post("/plot", json={"log_path": str(log),
                                   "out_dir": str(tmp_path / "png")})
    assert r.status_code == 200
    assert all(os.path.exists(p) for p in r.json()["written"])
    r = client.post("/plot", json={"log_path": str(tmp_path / "absent.jsonl"),
                                   "out_dir": str(tmp_path)})
    assert r.status_code == 404 and r.json()["error"]["kind"] == "io"


# ---- CLI (in-process service transport) ----


def test_cli_train_and_artifacts(tmp_path, capsys):
    code = main(["train", "--env", "matrix", "--updates", "2", "--seed", "1",
                 "--log-dir", str(tmp_path), "--tag", "smoke",
                 "--set", "train.episodes_per_update=4"] + FAST_MODEL)
    assert code == 0
    result = json.loads(capsys.readouterr().out)
    assert result["updates"] == 2 and result["tag"] == "smoke"
    assert os.path.exists(result["checkpoint"])
    lines = [json.loads(l) for l in open(result["log_path"])]
    assert [l["update"] for l in lines] == [1, 2]


def test_cli_train_exit_codes(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "none.cfg")]) == 2
    assert "error (config)" in capsys.readouterr().err
    assert main(["train", "--set", "malformed"]) == 2
    assert main(["train", "--set", "no.such=1"]) == 2
    assert "error (config)" in capsys.readouterr().err


def test_cli_train_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("train.updates = 1\ntrain.episodes_per_update = 4\n"
                   f"run.log_dir = {tmp_path}\n"
                   "model.embed_dim = 16\nmodel.n_heads = 2\n"
                   "model.n_blocks_encoder = 1\nmodel.n_blocks_decoder = 1\n")
    code = main(["train", "--config", str(cfg), "--updates", "0"])
    assert code == 0
    result = json.loads(capsys.readouterr().out)
    assert result["updates"] == 0  # CLI override beats the file


def test_cli_eval_random_and_errors(tmp_path, capsys):
    out = str(tmp_path / "t.csv")
    code = main(["eval", "--random", "--populations", "4", "--seeds", "0",
                 "--episodes", "1", "--out", out])
    captured = capsys.readouterr()
    assert code == 0 and "reach_ratio" in captured.out
    rows = list(csv.DictReader(open(out)))
    assert {r["metric"] for r in rows} == {"reach_ratio", "dead_ratio",
                                           "win_rate", "avg_step_reward"}

    assert main(["eval", "--populations", "4"]) == 2       # neither source given
    capsys.readouterr()
    assert main(["eval", "--checkpoint", "missing.bin"]) == 3
    assert "error (io)" in capsys.readouterr().err


def test_cli_eval_checkpoint_from_train(tmp_path, capsys):
    code = main(["train", "--env", "dubins", "--updates", "0",
                 "--log-dir", str(tmp_path),
                 "--set", "env.dubins.n_agents=2",
                 "--set", "env.dubins.n_obstacles=0"] + FAST_MODEL)
    assert code == 0
    ckpt = json.loads(capsys.readouterr().out)["checkpoint"]
    code = main(["eval", "--checkpoint", ckpt, "--populations", "4",
                 "--seeds", "0", "--episodes", "1"])
    captured = capsys.readouterr()
    assert code == 0
    assert "4 | reach_ratio" in captured.out.replace("  ", " ")


def test_cli_gradcheck_exit_codes(capsys):
    assert main(["gradcheck", "--suites", "linear"]) == 0
    assert capsys.readouterr().out.strip().endswith("ok")
    assert main(["gradcheck", "--suites", "linear", "--tolerance", "1e-16"]) == 1
    assert "FAIL" in capsys.readouterr().out
    assert main(["gradcheck", "--suites", "bogus"]) == 2


def test_cli_oracle(capsys):
    assert main(["oracle"]) == 0
    out = capsys.readouterr().out
    assert "coordination" in out and "xor" in out


def test_cli_plot(tmp_path, capsys):
    assert main(["plot", "--out-dir", str(tmp_path)]) == 2
    capsys.readouterr()
    assert main(["plot", "--log", str(tmp_path / "nope.jsonl"),
                 "--out-dir", str(tmp_path)]) == 3
    capsys.readouterr()
    log = tmp_path / "c.jsonl"
    with open(log, "w") as fh:
        fh.write(json.dumps({"update": 1, "timestep": 5, "mean_return": 0.5})
                 + "\n")
    assert main(["plot", "--log", str(log), "--out-dir", str(tmp_path)]) == 0
    assert any(p.endswith(".png") for p in
               capsys.readouterr().out.splitlines())


# ---- CLI against a live socket server ----


@pytest.mark.slow
def test_cli_remote_server(capsys):
    import uvicorn

    port = None
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    config = uvicorn.Config(create_app(), host="127.0.0.1", port=port,
                            log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    try:
        for _ in range(100):
            if server.started:
                break
            time.sleep(0.05)
        assert server.started, "uvicorn did not start"
        assert main(["--server", f"http://127.0.0.1:{port}", "oracle"]) == 0
        assert "optimal" in capsys.readouterr().out
    finally:
        server.should_exit = True
        thread.join(timeout=5)
