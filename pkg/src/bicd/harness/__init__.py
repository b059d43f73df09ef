"""Training, evaluation, ablations and reporting."""

from bicd.harness.config import TrainConfig
from bicd.harness.dump import DUMP_TAGS, dump_representations, parse_tags
from bicd.harness.evaluate import Metrics, evaluate, infer_split, refine_offsets
from bicd.harness.metrics import auroc, mse_per_sample
from bicd.harness.report import ablation_table, run_experiment, summarize, write_json
from bicd.harness.train import TrainResult, train

__all__ = [
    "DUMP_TAGS",
    "Metrics",
    "TrainConfig",
    "TrainResult",
    "ablation_table",
    "auroc",
    "dump_representations",
    "evaluate",
    "infer_split",
    "mse_per_sample",
    "parse_tags",
    "refine_offsets",
    "run_experiment",
    "summarize",
    "train",
    "write_json",
]
