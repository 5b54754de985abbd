"""Training-efficiency accounting: steps and wallclock to reach thresholds."""

from __future__ import annotations

import json

from ..nn import ContractError

SMOOTH_WINDOW = 10  # trailing mean over evaluation points

NOT_REACHED = "-"


def load_log(path):
    """Reads a JSONL training log, joining per-update wallclock from the
    sidecar `<path>.time` when present."""
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    try:
        with open(str(path) + ".time") as fh:
            times = {}
            for line in fh:
                line = line.strip()
                if line:
                    d = json.loads(line)
                    times[d["update"]] = d["wallclock_s"]
        for r in records:
            if r.get("update") in times:
                r["wallclock_s"] = times[r["update"]]
    except FileNotFoundError:
        pass
    return records


def srt_att(records: list, thresholds: list, metric: str = "mean_return",
            reference: float = 1.0) -> list:
    """First timestep (SRT) and wallclock (ATT) where the smoothed metric
    crosses each threshold fraction of `reference`.

    The metric is smoothed by a trailing mean over the last SMOOTH_WINDOW
    records. Rows carry the NOT_REACHED marker when a threshold is never
    crossed; threshold 0 trivially crosses at the first record.
    """
    if not records:
        raise ContractError("empty training log")
    values, rows = [], []
    smoothed = []
    for r in records:
        if metric not in r:
            raise ContractError(f"log record lacks metric {metric!r}")
        values.append(float(r[metric]))
        lo = max(0, len(values) - SMOOTH_WINDOW)
        smoothed.append(sum(values[lo:]) / (len(values) - lo))
    for thr in thresholds:
        hit = None
        if thr == 0:
            hit = 0
        else:
            for i, s in enumerate(smoothed):
                if s >= thr * reference:
                    hit = i
                    break
        if hit is None:
            rows.append({"threshold": thr, "timestep": NOT_REACHED,
                         "wallclock_s": NOT_REACHED})
        else:
            rec = records[hit]
            rows.append({"threshold": thr,
                         "timestep": rec.get("timestep", NOT_REACHED),
                         "wallclock_s": rec.get("wallclock_s", NOT_REACHED)})
    return rows


def aulc(records: list, metric: str = "mean_return") -> float:
    """Area under the learning curve (trapezoid over timesteps), a scalar
    training-efficiency summary for ablation comparisons."""
    if not records:
        raise ContractError("empty training log")
    if len(records) == 1:
        return float(records[0][metric])
    area, span = 0.0, 0.0
    for a, b in zip(records, records[1:]):
        dt = float(b["timestep"] - a["timestep"])
        area += 0.5 * (float(a[metric]) + float(b[metric])) * dt
        span += dt
    if span <= 0:
        raise ContractError("timesteps are not increasing")
    return area / span
