"""Bounded hardware-noninterference checking.

The property under test: for two initial states whose architectural
observation traces (the software contract) are equal, the adversary's view
of the machine must be equal at every step. The adversary sees
microarchitectural metadata (buffer occupancy and resolution markers,
cache and trace-cache LRU state, and, under the predictor variant, the
predictor counters) but never architectural values.

check_hni enumerates secret assignments, runs the machine once per
assignment recording a per-step projection digest, and compares all pairs.
A mismatch is re-executed with full projections to pin down the first
diverging step.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from branchreplay.hwsem.machine import (
    PREDICTOR,
    REPLAY,
    HwConfig,
    HwParams,
    hw_run,
)
from branchreplay.uasm.exec import (
    InputSpec,
    contract_trace,
    crypto_cf_trace,
    make_state,
)
from branchreplay.uasm.parser import Program


def adversary_project(config: HwConfig, include_scheduler: bool = False) -> tuple:
    """The adversary-visible slice of one configuration."""
    proj = (
        tuple(e.resolved for e in config.buf),
        config.cs.state(),
        config.tc.state(),
    )
    if config.variant == PREDICTOR:
        proj = proj + (config.predictor.state(),)
    if include_scheduler:
        proj = proj + (config.sc.state(),)
    return proj


def _digest(proj: tuple) -> bytes:
    return hashlib.sha256(repr(proj).encode()).digest()


def make_hw_config(
    program: Program,
    inputs: InputSpec,
    variant: str,
    params: HwParams | None = None,
    budget: int = 1_000_000,
) -> HwConfig:
    """Build the initial machine configuration for one input assignment.

    The replay variant records the architectural tagged-control-flow trace
    first; that trace is what the hardware replays.
    """
    state = make_state(program, inputs)
    cf = ()
    if variant == REPLAY:
        cf = crypto_cf_trace(program, make_state(program, inputs), budget)
    return HwConfig(program, state.regs, state.mem, variant, cf, params)


def run_projected(
    program: Program,
    inputs: InputSpec,
    variant: str,
    params: HwParams | None = None,
    budget: int = 200_000,
    include_scheduler: bool = False,
    full: bool = False,
) -> tuple[list, HwConfig]:
    """Run the machine, returning per-step projections.

    Returns (projections, final_config); projections are sha256 digests
    unless full=True, in which case the raw tuples are kept.
    """
    config = make_hw_config(program, inputs, variant, params)
    out: list = []
    if full:
        observer = lambda c: out.append(adversary_project(c, include_scheduler))
    else:
        observer = lambda c: out.append(
            _digest(adversary_project(c, include_scheduler))
        )
    hw_run(config, budget, observer)
    return out, config


@dataclass(frozen=True)
class HniCounterexample:
    inputs_a: InputSpec
    inputs_b: InputSpec
    step: int
    projection_a: tuple | None
    projection_b: tuple | None

    def describe(self) -> str:
        lines = [
            f"projection divergence at step {self.step}:",
            f"  secrets A: mem={self.inputs_a.mem}",
            f"  secrets B: mem={self.inputs_b.mem}",
            f"  view A: {self.projection_a}",
            f"  view B: {self.projection_b}",
        ]
        pa, pb = self.projection_a, self.projection_b
        if pa is not None and pb is not None:
            parts = ("buffer markers", "cache", "trace cache", "predictor",
                     "scheduler")
            for name, a, b in zip(parts, pa, pb):
                if a != b:
                    lines.append(f"  first differing component: {name}: {a} vs {b}")
                    break
        return "\n".join(lines)


@dataclass(frozen=True)
class HniVerdict:
    passed: bool
    pairs_checked: int
    pairs_skipped: int  # pairs whose contract traces differ (premise fails)
    counterexample: HniCounterexample | None = None

    def describe(self) -> str:
        if self.passed:
            return (
                f"hardware noninterference holds on {self.pairs_checked} "
                f"secret pairs ({self.pairs_skipped} skipped: unequal contracts)"
            )
        return (
            f"hardware noninterference FAILS "
            f"({self.pairs_checked} pairs checked)\n"
            + self.counterexample.describe()
        )


def check_hni(
    program: Program,
    assignments: list[InputSpec],
    variant: str,
    params: HwParams | None = None,
    budget: int = 200_000,
    include_scheduler: bool = False,
) -> HniVerdict:
    """Pairwise bounded noninterference over the given input assignments.

    Pairs whose architectural observation traces differ are skipped (the
    property's premise requires equal software contracts). On the first
    projection mismatch the offending pair is re-run with full projections
    and reported.
    """
    # One run per assignment; each run collapses to (contract, view key)
    # where the view key hashes the whole projection sequence. Two runs
    # agree on every step iff their keys agree, so the pairwise check
    # reduces to per-contract-group key equality (linear, not quadratic).
    runs = []
    for inp in assignments:
        contract = contract_trace(program, make_state(program, inp))
        digests, _ = run_projected(
            program, inp, variant, params, budget, include_scheduler
        )
        key = hashlib.sha256(b"".join(digests)).digest()
        runs.append((inp, contract, key))

    groups: dict[tuple, list[int]] = {}
    for idx, (_, contract, _) in enumerate(runs):
        groups.setdefault(contract, []).append(idx)

    total_same = sum(len(g) * (len(g) - 1) // 2 for g in groups.values())
    skipped = len(runs) * (len(runs) - 1) // 2 - total_same

    checked = 0
    for members in groups.values():
        first = runs[members[0]]
        for j, idx in enumerate(members[1:], start=1):
            checked += j  # this run pairs with every earlier group member
            if runs[idx][2] == first[2]:
                continue
            # violation: re-run the offending pair for the diverging step
            inp_a, inp_b = first[0], runs[idx][0]
            full_a, _ = run_projected(
                program, inp_a, variant, params, budget,
                include_scheduler, full=True,
            )
            full_b, _ = run_projected(
                program, inp_b, variant, params, budget,
                include_scheduler, full=True,
            )
            step = 0
            for step, (pa, pb) in enumerate(zip(full_a, full_b)):
                if pa != pb:
                    break
            else:
                step = min(len(full_a), len(full_b))
            pa = full_a[step] if step < len(full_a) else None
            pb = full_b[step] if step < len(full_b) else None
            return HniVerdict(
                False, checked, skipped,
                HniCounterexample(inp_a, inp_b, step, pa, pb),
            )
    return HniVerdict(True, total_same, skipped)
