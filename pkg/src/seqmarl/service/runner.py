"""Server-side pipelines: resolved config in, artifact paths and metrics out."""

from __future__ import annotations

import os

from ..config import (ConfigError, env_spec, model_kwargs, parse_config_file,
                      resolve, train_config)
from ..envs import env_from_spec
from ..model import ModelConfig, SeqModel
from ..rl.trainer import Trainer


def resolve_request(config_path: str | None, overrides: dict) -> dict:
    file_values = parse_config_file(config_path) if config_path else None
    return resolve(file_values, {k: str(v) for k, v in overrides.items()})


def run_train(resolved: dict) -> dict:
    spec = env_spec(resolved)

    def factory():
        return env_from_spec(spec)

    probe = factory()
    mc = ModelConfig(obs_dim=probe.obs_dim, action_space=probe.action_space,
                     **model_kwargs(resolved))
    seed = resolved["run.seed"]
    model = SeqModel(mc, seed=seed)
    tc = train_config(resolved)

    tag = resolved["run.tag"] or f"{spec['kind']}_{mc.value_mode}_s{seed}"
    log_dir = resolved["run.log_dir"]
    os.makedirs(log_dir, exist_ok=True)
    log_path = os.path.join(log_dir, f"{tag}.jsonl")
    if os.path.exists(log_path):
        os.remove(log_path)  # reruns must not append to stale logs
        for side in (log_path + ".time",):
            if os.path.exists(side):
                os.remove(side)
    ckpt_dir = os.path.join(log_dir, f"{tag}_ckpt")

    trainer = Trainer(factory, model, tc, seed=seed, log_path=log_path,
                      workers=resolved["run.workers"])
    records = trainer.train(checkpoint_dir=ckpt_dir,
                            checkpoint_every=resolved["run.checkpoint_every"])
    out = {
        "tag": tag,
        "log_path": log_path,
        "checkpoint": os.path.join(ckpt_dir, "ckpt_final.bin"),
        "updates": len(records),
        "timesteps": records[-1]["timestep"] if records else 0,
    }
    if records:
        out["final"] = {k: records[-1][k] for k in
                        ("mean_return", "value_loss", "entropy")}
    return out


def run_eval(checkpoint, populations, seeds, episodes, scenario_dir,
             out_csv=None, batch=8, train_tag=None) -> dict:
    from ..eval import transfer_eval

    if checkpoint is not None and not os.path.exists(str(checkpoint)):
        raise FileNotFoundError(f"checkpoint not found: {checkpoint}")
    if not populations:
        raise ConfigError("populations list is empty")
    report = transfer_eval(checkpoint, populations, seeds, episodes,
                           scenario_dir=scenario_dir, batch=batch,
                           train_tag=train_tag)
    rows = report.rows()
    out = {"table": report.table(), "rows": rows, "train_tag": report.train_tag}
    if out_csv:
        report.to_csv(out_csv)
        out["csv"] = out_csv
    return out
