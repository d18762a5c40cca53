"""Formal speculative-machine semantics and the noninterference checker."""

from branchreplay.hwsem.checker import (
    HniCounterexample,
    HniVerdict,
    adversary_project,
    check_hni,
    make_hw_config,
    run_projected,
)
from branchreplay.hwsem.components import DirectionPredictor, LruSet, Scheduler
from branchreplay.hwsem.machine import (
    PREDICTOR,
    REPLAY,
    HwConfig,
    HwParams,
    hw_run,
    hw_step,
)

__all__ = [
    "PREDICTOR",
    "REPLAY",
    "DirectionPredictor",
    "HniCounterexample",
    "HniVerdict",
    "HwConfig",
    "HwParams",
    "LruSet",
    "Scheduler",
    "adversary_project",
    "check_hni",
    "hw_run",
    "hw_step",
    "make_hw_config",
    "run_projected",
]
