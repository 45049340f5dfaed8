from .config import RunConfig, build_run_config, load_run_config, write_run_config
from .loop import (
    METRIC_FIELDS,
    EvalResult,
    HistoryQueues,
    TrainResult,
    evaluate,
    evaluate_agent,
    random_baseline,
    read_metrics,
    rollout,
    train,
)
from .tools import (
    AblationResult,
    VerifyReport,
    ablate,
    encoder_params,
    final_window,
    moving_average,
    params_table,
    verify,
)

__all__ = [
    "METRIC_FIELDS", "AblationResult", "EvalResult", "HistoryQueues", "RunConfig",
    "TrainResult", "VerifyReport", "ablate", "build_run_config", "encoder_params",
    "evaluate", "evaluate_agent", "final_window", "load_run_config", "moving_average",
    "params_table", "random_baseline", "read_metrics", "rollout", "train", "verify",
    "write_run_config",
]
