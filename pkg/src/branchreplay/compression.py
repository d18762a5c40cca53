"""Branch-trace compression: raw -> vanilla -> symbol string -> k-mers.

The final stage repeatedly finds the substring (k-mer) whose non-overlapping
occurrences cover the largest fraction of the sequence and replaces it with a
fresh symbol, recording the substitution as a pattern. Iteration stops when
the sequence stops shrinking, no candidate repeats, or the pattern budget
(16, matching the hardware pattern-index field) is spent.

Candidate rules:
  * a k-mer must occur at least twice (non-overlapping, greedy left-to-right);
  * its fully expanded length must not exceed max_k;
  * k-mers of a single repeated symbol are not candidates: runs are already
    carried by the trace-level repeat counter, so substituting them spends
    pattern slots without shrinking the stored form.

Ties on coverage prefer the shorter k-mer, then the lexicographically
smaller one, making the whole pipeline deterministic.
"""

from __future__ import annotations

from collections.abc import Sequence

from branchreplay.core.codec import compact_pattern_store, split_overflow
from branchreplay.core.types import (
    COUNTER_MAX,
    EOT,
    REPS_MAX,
    DnaSequence,
    KmersRepresentation,
    Pattern,
    PatternElement,
    RawTrace,
    TraceElement,
    VanillaElement,
    VanillaTrace,
)
from branchreplay.errors import (
    CounterOverflow,
    DanglingSymbol,
    EmptyTrace,
    KTooLarge,
)

MAX_K = 16


# -- stage 1: run-length encoding ----------------------------------------------

def to_vanilla(raw: RawTrace) -> VanillaTrace:
    """Collapse consecutive repeats of one target into (target, count) runs.

    Runs are maximal, so adjacent elements always differ in target.
    """
    if not raw.targets:
        raise EmptyTrace(f"branch {raw.branch_pc:#x} has no outcomes")
    elements: list[VanillaElement] = []
    cur = raw.targets[0]
    count = 1
    for t in raw.targets[1:]:
        if t == cur:
            count += 1
        else:
            elements.append(VanillaElement(cur, count))
            cur, count = t, 1
    elements.append(VanillaElement(cur, count))
    return VanillaTrace(raw.branch_pc, tuple(elements))


# -- stage 2: symbol alphabet ---------------------------------------------------

def to_dna(vanilla: VanillaTrace) -> DnaSequence:
    """Map each distinct (target, count) run to a dense integer symbol.

    Symbols are numbered by first appearance, so the encoding is canonical
    for a given trace.
    """
    mapping: dict[VanillaElement, int] = {}
    symbols: list[int] = []
    for el in vanilla.elements:
        sym = mapping.get(el)
        if sym is None:
            sym = len(mapping)
            mapping[el] = sym
        symbols.append(sym)
    symbol_map = {sym: el for el, sym in mapping.items()}
    return DnaSequence(vanilla.branch_pc, tuple(symbols), symbol_map)


# -- stage 3: k-mer substitution -------------------------------------------------

def count_kmers(seq: Sequence[int], k: int) -> dict[tuple[int, ...], int]:
    """Count non-overlapping occurrences of every k-mer in seq.

    Counting is greedy left-to-right per k-mer: an occurrence is counted
    only if it starts at or after the end of the previous counted one.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(seq):
        raise KTooLarge(f"k={k} exceeds sequence length {len(seq)}")
    counts: dict[tuple[int, ...], int] = {}
    next_free: dict[tuple[int, ...], int] = {}
    for i in range(len(seq) - k + 1):
        kmer = tuple(seq[i:i + k])
        if i >= next_free.get(kmer, 0):
            counts[kmer] = counts.get(kmer, 0) + 1
            next_free[kmer] = i + k
    return counts


def _replace_nonoverlapping(
    seq: list[int], kmer: tuple[int, ...], letter: int
) -> list[int]:
    """Greedy left-to-right substitution of kmer by letter."""
    out: list[int] = []
    k = len(kmer)
    i = 0
    n = len(seq)
    while i < n:
        if i + k <= n and tuple(seq[i:i + k]) == kmer:
            out.append(letter)
            i += k
        else:
            out.append(seq[i])
            i += 1
    return out


def kmers_compress(dna: DnaSequence, max_k: int = MAX_K) -> KmersRepresentation:
    """Iterated best-coverage substitution over the symbol string.

    Every selected k-mer becomes a Pattern; the pattern budget equals max_k.
    A sequence of length <= 1 is returned unchanged.
    """
    seq = list(dna.symbols)
    patterns: list[Pattern] = []
    if len(seq) <= 1:
        return KmersRepresentation(
            dna.branch_pc, tuple(seq), (), dict(dna.symbol_map)
        )

    # expanded length of each symbol, for the max_k pattern-size cap
    exp_len: dict[int, int] = {s: 1 for s in dna.symbol_map}
    next_letter = max(dna.symbol_map, default=-1) + 1

    current_len = float("inf")
    while len(seq) < current_len and len(patterns) < max_k:
        current_len = len(seq)
        # candidate -> non-overlapping frequency, accumulated across all k
        candidates: dict[tuple[int, ...], int] = {}
        top_k = min(max_k, len(seq) // 2)
        for k in range(2, top_k + 1):
            for kmer, freq in count_kmers(seq, k).items():
                if freq < 2:
                    continue
                first = kmer[0]
                if all(s == first for s in kmer):
                    continue  # runs are the trace counter's job
                if sum(exp_len[s] for s in kmer) > max_k:
                    continue
                candidates[kmer] = freq
        if not candidates:
            break
        # max coverage k*freq/len; ties: shorter k-mer, then lexicographic
        best = min(
            candidates.items(),
            key=lambda item: (-len(item[0]) * item[1], len(item[0]), item[0]),
        )[0]
        letter = next_letter
        next_letter += 1
        patterns.append(Pattern(letter, best))
        exp_len[letter] = sum(exp_len[s] for s in best)
        seq = _replace_nonoverlapping(seq, best, letter)

    return KmersRepresentation(
        dna.branch_pc, tuple(seq), tuple(patterns), dict(dna.symbol_map)
    )


def compress(raw: RawTrace, max_k: int = MAX_K) -> KmersRepresentation:
    """Full pipeline: raw outcomes to k-mers representation."""
    return kmers_compress(to_dna(to_vanilla(raw)), max_k=max_k)


# -- expansion / decompression ---------------------------------------------------

def expand_symbols(rep: KmersRepresentation) -> list[int]:
    """Flatten the k-trace back to base symbols by unfolding every pattern."""
    bodies = {p.id: p.body for p in rep.pattern_set}
    out: list[int] = []
    stack: list[int] = []
    for sym in reversed(rep.k_trace):
        stack.append(sym)
    while stack:
        sym = stack.pop()
        body = bodies.get(sym)
        if body is None:
            out.append(sym)
        else:
            stack.extend(reversed(body))
    return out


def decompress(rep: KmersRepresentation) -> VanillaTrace:
    """Invert the pipeline back to the vanilla trace.

    Raises DanglingSymbol if the k-trace or a pattern body references a
    symbol that is neither a base symbol nor a pattern.
    """
    elements = []
    for sym in expand_symbols(rep):
        el = rep.symbol_map.get(sym)
        if el is None:
            raise DanglingSymbol(f"symbol {sym} has no definition")
        elements.append(el)
    return VanillaTrace(rep.branch_pc, tuple(elements))


# -- lowering to hardware trace elements ------------------------------------------

def _base_expansion(rep: KmersRepresentation, sym: int) -> list[VanillaElement]:
    """Expand one symbol to its base (target, count) runs."""
    bodies = {p.id: p.body for p in rep.pattern_set}
    out: list[VanillaElement] = []
    stack = [sym]
    while stack:
        s = stack.pop()
        body = bodies.get(s)
        if body is None:
            el = rep.symbol_map.get(s)
            if el is None:
                raise DanglingSymbol(f"symbol {s} has no definition")
            out.append(el)
        else:
            stack.extend(reversed(body))
    return out


def _pattern_elements_for(
    runs: list[VanillaElement], branch_pc: int
) -> tuple[tuple[PatternElement, ...], int]:
    """Lower base runs into store elements; returns (elements, outcome total)."""
    elems: list[PatternElement] = []
    total = 0
    for run in runs:
        elems.extend(split_overflow(run.target_pc - branch_pc, run.count))
        total += run.count
    if total > COUNTER_MAX:
        raise CounterOverflow(
            f"pattern expands to {total} outcomes, counter holds {COUNTER_MAX}"
        )
    return tuple(elems), total


def to_trace_elements(
    rep: KmersRepresentation,
) -> tuple[tuple[PatternElement, ...], tuple[TraceElement, ...]]:
    """Lower a compressed trace to a shared pattern store plus trace elements.

    Each run of equal symbols in the k-trace becomes one trace element whose
    trace_counter is the run length. A base symbol whose repeat count
    exceeds 255 is factored through the trace counter: full-255 chunks
    become one element repeated via trace_counter (sliced to the 16-bit
    counter limit), the remainder a second element. The element list ends
    with the end-of-trace marker.

    Raises CapacityExceeded if the compacted store outgrows 16 elements and
    CounterOverflow if any counter outgrows 16 bits.
    """
    branch_pc = rep.branch_pc
    pattern_ids = {p.id for p in rep.pattern_set}

    # (pattern element tuple, pattern_counter, trace_counter) per element
    specs: list[tuple[tuple[PatternElement, ...], int, int]] = []

    def emit_base(el: VanillaElement, repeats: int) -> None:
        offset = el.target_pc - branch_pc
        if el.count <= REPS_MAX:
            if repeats > COUNTER_MAX:
                raise CounterOverflow(f"run of {repeats} exceeds trace counter")
            specs.append(
                ((PatternElement(offset, el.count),), el.count, repeats)
            )
            return
        # factor big counts: q full-255 passes plus a remainder pass
        full, rem = divmod(el.count, REPS_MAX)
        for _ in range(repeats):
            chunk = full
            while chunk > 0:
                take = min(chunk, COUNTER_MAX)
                specs.append(
                    ((PatternElement(offset, REPS_MAX),), REPS_MAX, take)
                )
                chunk -= take
            if rem:
                specs.append(((PatternElement(offset, rem),), rem, 1))

    # walk runs of equal symbols in the k-trace
    i = 0
    k_trace = rep.k_trace
    while i < len(k_trace):
        sym = k_trace[i]
        j = i
        while j < len(k_trace) and k_trace[j] == sym:
            j += 1
        run_len = j - i
        if sym in pattern_ids:
            if run_len > COUNTER_MAX:
                raise CounterOverflow(f"run of {run_len} exceeds trace counter")
            elems, total = _pattern_elements_for(
                _base_expansion(rep, sym), branch_pc
            )
            specs.append((elems, total, run_len))
        else:
            el = rep.symbol_map.get(sym)
            if el is None:
                raise DanglingSymbol(f"symbol {sym} has no definition")
            emit_base(el, run_len)
        i = j

    store, index_map = compact_pattern_store([s[0] for s in specs])
    elements = [
        TraceElement(
            pattern_index=index_map[pat][0],
            pattern_size=index_map[pat][1],
            pattern_counter=pcount,
            trace_counter=tcount,
        )
        for pat, pcount, tcount in specs
    ]
    elements.append(EOT)
    return store, tuple(elements)


def expanded_outcome_count(elements: Sequence[TraceElement], store) -> int:
    """Total dynamic outcomes one full pass of the element list replays."""
    total = 0
    for el in elements:
        if el.eot:
            continue
        reps = sum(
            store[el.pattern_index + i].reps for i in range(el.pattern_size)
        )
        total += reps * (el.trace_counter - 1) + el.pattern_counter
    return total
