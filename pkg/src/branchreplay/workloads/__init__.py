"""Bundled workload programs and synthetic trace generators.

The .uasm files are the fixed corpus; the gen_* functions build parametric
programs (eviction pressure, multi-target tables) and synthetic raw traces
(block-repeat workloads for compression-bound checks).
"""

from __future__ import annotations

from importlib import resources

from branchreplay.core.types import RawTrace
from branchreplay.uasm.exec import InputSpec
from branchreplay.uasm.parser import Program, parse_program

FIXED = ("toy_aes2", "decrypt_loop", "stream_cipher", "spectre_v1")


def load_source(name: str) -> str:
    """Source text of a bundled .uasm workload."""
    return (
        resources.files("branchreplay.workloads")
        .joinpath(f"{name}.uasm")
        .read_text()
    )


def load_workload(name: str) -> Program:
    return parse_program(load_source(name))


def gen_many_branches(n_loops: int = 17, rounds: int = 3) -> Program:
    """A round-robin of n_loops counted loops, rounds times over.

    With n_loops >= 17 the branch sites outnumber the 16 replay-unit
    entries, forcing evictions and spilled-checkpoint resumes every round.
    Trip counts cycle through 2..5 so traces differ across loops.
    """
    lines = [
        "# generated: round-robin loops for replay-unit eviction pressure",
        ".reg r k c done",
    ]
    body = ["        r <- 0", "ROUND:"]
    for b in range(n_loops):
        trips = 2 + (b % 4)
        body += [
            f"        k <- 0",
            f"L{b}:    k <- k + 1",
            f"        c <- k < {trips}",
            f"        done <- c == 0",
            f"        beqz done, L{b}",
        ]
    body += [
        "        r <- r + 1",
        f"        c <- r < {rounds}",
        "        done <- c == 0",
        "        beqz done, ROUND",
        "END:    ret",
    ]
    lines.append(".crypto ROUND END")
    lines += body
    return parse_program("\n".join(lines) + "\n")


def gen_table_branch(
    runs: tuple[int, ...] = (1, 2, 1, 3, 2, 4, 1, 5, 3, 1, 2, 6, 1, 3, 4, 2, 5, 1),
    table_base: int = 64,
) -> tuple[Program, InputSpec, InputSpec]:
    """A data-directed branch over a public bit table with the given run
    lengths. Irregular runs keep the trace long (multi-target class).

    Returns (program, input_a, input_b); the table is identical in both
    inputs (it is a constant of the workload), so the branch is traced.
    """
    bits: list[int] = []
    for idx, run in enumerate(runs):
        bits.extend([idx % 2] * run)
    n = len(bits)
    src = f"""\
# generated: table-directed branch with irregular run lengths
.reg i b c done acc
.crypto LOOP END
        i <- 0
LOOP:   load b, i + {table_base}
        acc <- acc + b
        beqz b, ZERO
        acc <- acc * 3
ZERO:   i <- i + 1
        c <- i < {n}
        done <- c == 0
        beqz done, LOOP
END:    ret
"""
    table = {table_base + i: bit for i, bit in enumerate(bits)}
    inp_a = InputSpec(mem={**table, 63: 1})
    inp_b = InputSpec(mem={**table, 63: 2})
    return parse_program(src), inp_a, inp_b


def gadget_inputs() -> InputSpec:
    """Public base memory for the bounds-check-bypass workload: the index
    list {0, 1, 8}, the bound, and the public table. The secret at mem[16]
    is left to the caller (see .secret in the source)."""
    return InputSpec(mem={0: 0, 1: 1, 2: 8, 4: 2, 8: 4, 9: 5})


def bn_raw_trace(block_size: int, n: int, branch_pc: int = 0) -> RawTrace:
    """Block-repeat workload: a block of block_size distinct targets
    repeated n times."""
    if not 2 <= block_size <= 8:
        raise ValueError("block_size must be in [2, 8]")
    block = [100 + 4 * i for i in range(block_size)]
    return RawTrace(branch_pc, tuple(block * n))


def corpus() -> dict[str, tuple[Program, InputSpec, InputSpec]]:
    """Every traceable workload with its two trace-generation inputs."""
    aes = load_workload("toy_aes2")
    aes_keys = {16 + i: (0x1234 + 17 * i) for i in range(6)}
    dec = load_workload("decrypt_loop")
    dec_secrets = {8 + i: (0xBEEF + i) for i in range(4)}
    stream = load_workload("stream_cipher")
    stream_key = {8 + i: (0xACE + 3 * i) for i in range(4)}
    table_prog, table_a, table_b = gen_table_branch()
    return {
        "toy_aes2": (
            aes,
            InputSpec(mem={0: 5, 1: 9, **aes_keys}),
            InputSpec(mem={0: 7, 1: 2, **aes_keys}),
        ),
        "decrypt_loop": (
            dec,
            InputSpec(mem={4: 0x55AA, **dec_secrets}),
            InputSpec(mem={4: 0x1001, **dec_secrets}),
        ),
        "stream_cipher": (
            stream,
            InputSpec(mem={0: 4, **stream_key}),
            InputSpec(mem={0: 9, **stream_key}),
        ),
        "many_branches": (gen_many_branches(), InputSpec(), InputSpec()),
        "table_branch": (table_prog, table_a, table_b),
    }
