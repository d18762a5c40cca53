"""Replay unit and cycle-level pipeline simulator."""

from branchreplay.btusim.btu import (
    BtuEntry,
    BtuState,
    Miss,
    Redirect,
    Stall,
    replay_outcomes,
)
from branchreplay.btusim.pipeline import (
    PREDICTOR,
    REPLAY,
    PipelineConfig,
    SimResult,
    SimStats,
    StreamEntry,
    build_stream,
    simulate,
    stream_from_log,
)


def btu_lookup(state: BtuState, branch_pc: int):
    """Serve the next speculative outcome for a branch."""
    return state.lookup(branch_pc)


def btu_commit(state: BtuState, branch_pc: int) -> None:
    """Retire the branch's oldest in-flight outcome."""
    state.commit(branch_pc)


def btu_squash(state: BtuState, branch_pcs) -> int:
    """Undo all in-flight lookups of the given branches."""
    return state.squash(branch_pcs)


def btu_evict_and_fill(state: BtuState, record) -> BtuEntry:
    """Install a record, spilling the slot occupant's checkpoint."""
    return state.fill(record)


__all__ = [
    "PREDICTOR",
    "REPLAY",
    "BtuEntry",
    "BtuState",
    "Miss",
    "PipelineConfig",
    "Redirect",
    "SimResult",
    "SimStats",
    "Stall",
    "StreamEntry",
    "btu_commit",
    "btu_evict_and_fill",
    "btu_lookup",
    "btu_squash",
    "build_stream",
    "replay_outcomes",
    "simulate",
    "stream_from_log",
]
