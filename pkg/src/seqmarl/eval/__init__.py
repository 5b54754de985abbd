"""Evaluation suite: episode metrics, training-efficiency accounting,
population transfer, and plotting."""

from .metrics import (EpisodeResult, MetricRecord, METRIC_FNS, avg_step_reward,
                      dead_ratio, reach_ratio, win_rate)
from .rollout import (reach_ratio_from_trajectory, run_episodes,
                      write_trajectory)
from .srt import NOT_REACHED, SMOOTH_WINDOW, aulc, load_log, srt_att
from .transfer import (DEFAULT_METRICS, TransferReport, scenario_path,
                       transfer_eval)

__all__ = [
    "EpisodeResult", "MetricRecord", "METRIC_FNS", "avg_step_reward",
    "dead_ratio", "reach_ratio", "win_rate", "reach_ratio_from_trajectory",
    "run_episodes", "write_trajectory", "NOT_REACHED", "SMOOTH_WINDOW",
    "aulc", "load_log", "srt_att", "DEFAULT_METRICS", "TransferReport",
    "scenario_path", "transfer_eval",
]
