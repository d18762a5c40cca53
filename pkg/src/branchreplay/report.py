"""Size accounting and human-readable reports for compressed traces.

The reported k-mers size of a branch is the run-collapsed k-trace length
plus the pattern count: one stored element per run of equal symbols plus
one store row per pattern, which is what the packed record actually
holds. The compression rate divides the vanilla element count by that.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from branchreplay.compression import expanded_outcome_count
from branchreplay.core.types import (
    BranchRecord,
    KmersRepresentation,
    TraceBundle,
    VanillaElement,
    VanillaTrace,
)
from branchreplay.tracegen import BranchClass, ClassifiedBranch


def collapsed_len(k_trace) -> int:
    """Number of runs of equal symbols."""
    runs = 0
    prev = object()
    for sym in k_trace:
        if sym != prev:
            runs += 1
            prev = sym
    return runs


def kmers_size(rep: KmersRepresentation) -> int:
    return collapsed_len(rep.k_trace) + len(rep.pattern_set)


def compression_rate(vanilla: VanillaTrace, rep: KmersRepresentation) -> float:
    return len(vanilla.elements) / kmers_size(rep)


@dataclass(frozen=True)
class BranchRow:
    branch_pc: int
    klass: str
    outcomes: int | None       # dynamic branch outcomes
    vanilla_len: int | None    # vanilla elements
    dna_len: int | None        # symbols before pattern extraction
    k_len: int | None          # k-trace symbols
    patterns: int | None
    elements: int | None       # packed trace elements, EOT excluded
    size: int | None           # kmers size as defined above
    rate: float | None

    def to_dict(self) -> dict:
        return {
            "branch_pc": self.branch_pc,
            "class": self.klass,
            "outcomes": self.outcomes,
            "vanilla_len": self.vanilla_len,
            "dna_len": self.dna_len,
            "k_len": self.k_len,
            "patterns": self.patterns,
            "elements": self.elements,
            "size": self.size,
            "rate": self.rate,
        }


def classified_rows(classified: list[ClassifiedBranch]) -> list[BranchRow]:
    from branchreplay.compression import to_trace_elements

    rows = []
    for c in classified:
        outcomes = (
            sum(el.count for el in c.vanilla.elements)
            if c.vanilla is not None
            else None
        )
        if c.rep is None:
            rows.append(
                BranchRow(
                    c.branch_pc, c.klass.value, outcomes,
                    len(c.vanilla.elements) if c.vanilla else None,
                    None, None, None, None, None, None,
                )
            )
            continue
        _, elements = to_trace_elements(c.rep)
        size = kmers_size(c.rep)
        rows.append(
            BranchRow(
                c.branch_pc,
                c.klass.value,
                outcomes,
                len(c.vanilla.elements),
                len(expand_dna(c.rep)),
                len(c.rep.k_trace),
                len(c.rep.pattern_set),
                len(elements) - 1,
                size,
                compression_rate(c.vanilla, c.rep),
            )
        )
    return rows


def expand_dna(rep: KmersRepresentation) -> list[int]:
    from branchreplay.compression import expand_symbols

    return expand_symbols(rep)


@dataclass(frozen=True)
class ReportSummary:
    branches: int
    traced: int
    stream_loops: int
    single_target: int
    short_trace: int
    multi_target: int
    total_vanilla: int
    total_size: int
    mean_rate: float | None

    def to_dict(self) -> dict:
        return {
            "branches": self.branches,
            "traced": self.traced,
            "stream_loops": self.stream_loops,
            "single_target": self.single_target,
            "short_trace": self.short_trace,
            "multi_target": self.multi_target,
            "total_vanilla": self.total_vanilla,
            "total_size": self.total_size,
            "mean_rate": self.mean_rate,
        }


def summarize(rows: list[BranchRow]) -> ReportSummary:
    """Aggregate over compressible branches (single-target branches carry
    no trace, stream loops are untraced; both are counted but excluded
    from the size and rate totals)."""
    by_class = {
        k.value: sum(1 for r in rows if r.klass == k.value) for k in BranchClass
    }
    sized = [r for r in rows if r.size is not None]
    total_vanilla = sum(r.vanilla_len for r in sized)
    total_size = sum(r.size for r in sized)
    rates = [r.rate for r in sized]
    return ReportSummary(
        branches=len(rows),
        traced=len(rows) - by_class[BranchClass.STREAM_LOOP.value],
        stream_loops=by_class[BranchClass.STREAM_LOOP.value],
        single_target=by_class[BranchClass.SINGLE_TARGET.value],
        short_trace=by_class[BranchClass.SHORT_TRACE.value],
        multi_target=by_class[BranchClass.MULTI_TARGET.value],
        total_vanilla=total_vanilla,
        total_size=total_size,
        mean_rate=(sum(rates) / len(rates)) if rates else None,
    )


def format_report(rows: list[BranchRow], summary: ReportSummary) -> str:
    def cell(v, width, fmt="{}"):
        s = "-" if v is None else fmt.format(v)
        return s.rjust(width)

    header = (
        f"{'branch':>8} {'class':<14} {'outcomes':>8} {'vanilla':>8} "
        f"{'k-len':>6} {'pats':>5} {'elems':>6} {'size':>5} {'rate':>7}"
    )
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.branch_pc:#8x} {r.klass:<14} {cell(r.outcomes, 8)} "
            f"{cell(r.vanilla_len, 8)} {cell(r.k_len, 6)} {cell(r.patterns, 5)} "
            f"{cell(r.elements, 6)} {cell(r.size, 5)} "
            f"{cell(r.rate, 7, '{:.2f}')}"
        )
    lines.append("-" * len(header))
    lines.append(
        f"branches={summary.branches} traced={summary.traced} "
        f"stream={summary.stream_loops} single={summary.single_target} "
        f"short={summary.short_trace} multi={summary.multi_target}"
    )
    if summary.mean_rate is not None:
        lines.append(
            f"total vanilla={summary.total_vanilla} "
            f"total size={summary.total_size} "
            f"mean rate={summary.mean_rate:.2f}"
        )
    return "\n".join(lines) + "\n"


def report_json(rows: list[BranchRow], summary: ReportSummary) -> str:
    return json.dumps(
        {"branches": [r.to_dict() for r in rows], "summary": summary.to_dict()},
        indent=2,
    )


# -- reconstruction from packed records ---------------------------------------

def reconstruct_vanilla(record: BranchRecord) -> VanillaTrace | None:
    """Expand a packed record back into its vanilla trace.

    Adjacent equal-target runs are re-merged, undoing both the 255-cap
    splits and the big-count factoring. Single-target records carry no
    trace and return None.
    """
    if record.hint.single_target:
        return None
    runs: list[VanillaElement] = []

    def push(target: int, count: int) -> None:
        if runs and runs[-1].target_pc == target:
            runs[-1] = VanillaElement(target, runs[-1].count + count)
        else:
            runs.append(VanillaElement(target, count))

    for el in record.elements:
        if el.eot:
            break
        slice_ = record.store[el.pattern_index: el.pattern_index + el.pattern_size]
        for _ in range(el.trace_counter):
            for pe in slice_:
                push(record.branch_pc + pe.target_offset, pe.reps)
    return VanillaTrace(record.branch_pc, tuple(runs))


def bundle_rows(bundle: TraceBundle) -> list[BranchRow]:
    """Rows computed from the packed bundle alone (no source traces)."""
    rows = []
    for rec in bundle.records:
        if rec.hint.single_target:
            rows.append(
                BranchRow(
                    rec.branch_pc, BranchClass.SINGLE_TARGET.value,
                    None, None, None, None, None, None, None, None,
                )
            )
            continue
        klass = (
            BranchClass.SHORT_TRACE
            if rec.hint.short_trace
            else BranchClass.MULTI_TARGET
        )
        vanilla = reconstruct_vanilla(rec)
        n_elems = len(rec.elements) - 1
        rows.append(
            BranchRow(
                rec.branch_pc,
                klass.value,
                expanded_outcome_count(rec.elements, rec.store),
                len(vanilla.elements),
                None,
                None,
                None,
                n_elems,
                None,
                None,
            )
        )
    return rows
