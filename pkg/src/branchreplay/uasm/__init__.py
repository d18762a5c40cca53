"""Toy ISA: parser, architectural executor, and contract traces."""

from branchreplay.uasm.exec import (
    ArchState,
    CtVerdict,
    InputSpec,
    Obs,
    contract_trace,
    crypto_cf_trace,
    ct_check,
    eval_expr,
    is_terminal,
    make_state,
    run_program,
    secret_assignments,
    secret_cells_of,
    step_arch,
)
from branchreplay.uasm.parser import Instr, Program, parse_program

__all__ = [
    "ArchState",
    "CtVerdict",
    "InputSpec",
    "Instr",
    "Obs",
    "Program",
    "contract_trace",
    "crypto_cf_trace",
    "ct_check",
    "eval_expr",
    "is_terminal",
    "make_state",
    "parse_program",
    "run_program",
    "secret_assignments",
    "secret_cells_of",
    "step_arch",
]
