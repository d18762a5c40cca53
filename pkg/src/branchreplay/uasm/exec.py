"""Executor and observation traces for the toy ISA.

Values are unsigned 64-bit integers with wrap-around; comparisons are
unsigned and yield 0/1; division and modulo by zero yield 0; shift amounts
use the low 6 bits. Calls push the return address on a dedicated shadow
stack; `ret` on an empty stack jumps to the terminal address (program exit).

The observation trace exposes everything a microarchitecture may leak
through: resolved control flow and memory addresses. Register assignments
produce no observation.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

from branchreplay.errors import (
    InvalidAddress,
    StepBudgetExceeded,
    UndefinedRegister,
)
from branchreplay.uasm.parser import Instr, Program

MASK = (1 << 64) - 1
DEFAULT_BUDGET = 1_000_000


@dataclass
class ArchState:
    """Architectural state: registers (pc included), memory, shadow stack."""

    regs: dict[str, int]
    mem: dict[int, int]
    stack: tuple[int, ...] = ()

    def copy(self) -> "ArchState":
        return ArchState(dict(self.regs), dict(self.mem), self.stack)


@dataclass(frozen=True)
class InputSpec:
    """Initial memory/register overlay for a run."""

    mem: dict[int, int] = field(default_factory=dict)
    regs: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Obs:
    """One architectural observation.

    kind: 'pc' (conditional resolved), 'call', 'ret', 'load', 'store'.
    value: resolved next pc for control flow, address for memory.
    tagged: instruction carried the constant-time tag.
    """

    kind: str
    value: int
    tagged: bool


def make_state(program: Program, inputs: InputSpec | None = None) -> ArchState:
    """Fresh state: declared registers zeroed, pc = 0, overlay applied."""
    regs = {name: 0 for name in program.registers}
    regs["pc"] = 0
    mem: dict[int, int] = {}
    if inputs:
        for name, value in inputs.regs.items():
            if name not in program.registers:
                raise UndefinedRegister(f"input sets undeclared register {name!r}")
            regs[name] = value & MASK
        for addr, value in inputs.mem.items():
            mem[int(addr)] = value & MASK
    return ArchState(regs, mem)


def eval_expr(expr: tuple, regs: dict[str, int]) -> int:
    """Evaluate an expression AST against a register file."""
    op = expr[0]
    if op == "int":
        return expr[1] & MASK
    if op == "reg":
        name = expr[1]
        if name not in regs:
            raise UndefinedRegister(f"register {name!r} not declared")
        return regs[name]
    if op == "un":
        v = eval_expr(expr[2], regs)
        kind = expr[1]
        if kind == "-":
            return (-v) & MASK
        if kind == "~":
            return (~v) & MASK
        return 1 if v == 0 else 0  # !
    # binary
    kind = expr[1]
    a = eval_expr(expr[2], regs)
    b = eval_expr(expr[3], regs)
    if kind == "+":
        return (a + b) & MASK
    if kind == "-":
        return (a - b) & MASK
    if kind == "*":
        return (a * b) & MASK
    if kind in ("/", "//"):
        return (a // b) & MASK if b else 0
    if kind == "%":
        return (a % b) & MASK if b else 0
    if kind == "&":
        return a & b
    if kind == "|":
        return a | b
    if kind == "^":
        return a ^ b
    if kind == "<<":
        return (a << (b & 63)) & MASK
    if kind == ">>":
        return a >> (b & 63)
    if kind == "==":
        return 1 if a == b else 0
    if kind == "!=":
        return 1 if a != b else 0
    if kind == "<":
        return 1 if a < b else 0
    if kind == "<=":
        return 1 if a <= b else 0
    if kind == ">":
        return 1 if a > b else 0
    if kind == ">=":
        return 1 if a >= b else 0
    raise ValueError(f"unknown operator {kind!r}")


def is_terminal(program: Program, state: ArchState) -> bool:
    return state.regs["pc"] == program.terminal


def _check_pc(program: Program, pc: int) -> None:
    if not 0 <= pc <= program.terminal:
        raise InvalidAddress(f"pc {pc} outside [0, {program.terminal}]")


def _execute(
    program: Program, regs: dict[str, int], mem: dict[int, int], stack: list[int]
) -> Obs | None:
    """Execute one instruction in place; returns its observation."""
    pc = regs["pc"]
    _check_pc(program, pc)
    if pc == program.terminal:
        return None
    instr = program.instructions[pc]
    op = instr.op
    if op == "assign":
        regs[instr.reg] = eval_expr(instr.expr, regs)
        regs["pc"] = pc + 1
        return None
    if op == "load":
        addr = eval_expr(instr.expr, regs)
        regs[instr.reg] = mem.get(addr, 0)
        regs["pc"] = pc + 1
        return Obs("load", addr, instr.tag)
    if op == "store":
        addr = eval_expr(instr.expr, regs)
        if instr.reg not in regs:
            raise UndefinedRegister(f"register {instr.reg!r} not declared")
        mem[addr] = regs[instr.reg]
        regs["pc"] = pc + 1
        return Obs("store", addr, instr.tag)
    if op == "beqz":
        cond = regs.get(instr.reg)
        if cond is None:
            raise UndefinedRegister(f"register {instr.reg!r} not declared")
        nxt = instr.target if cond == 0 else pc + 1
        _check_pc(program, nxt)
        regs["pc"] = nxt
        return Obs("pc", nxt, instr.tag)
    if op == "call":
        stack.append(pc + 1)
        _check_pc(program, instr.target)
        regs["pc"] = instr.target
        return Obs("call", instr.target, instr.tag)
    if op == "ret":
        nxt = stack.pop() if stack else program.terminal
        _check_pc(program, nxt)
        regs["pc"] = nxt
        return Obs("ret", nxt, instr.tag)
    raise ValueError(f"unknown op {op!r}")


def step_arch(program: Program, state: ArchState) -> tuple[ArchState, Obs | None]:
    """One architectural step. Pure: the input state is not modified."""
    regs = dict(state.regs)
    mem = dict(state.mem)
    stack = list(state.stack)
    obs = _execute(program, regs, mem, stack)
    return ArchState(regs, mem, tuple(stack)), obs


def run_program(
    program: Program,
    state: ArchState,
    budget: int = DEFAULT_BUDGET,
    on_step: Callable[[int, Instr, int, Obs | None], None] | None = None,
) -> ArchState:
    """Run to the terminal address, mutating a copy of `state`.

    on_step, if given, sees (pc, instruction, next_pc, observation) for
    every executed instruction. Raises StepBudgetExceeded past `budget`.
    """
    regs = dict(state.regs)
    mem = dict(state.mem)
    stack = list(state.stack)
    instrs = program.instructions
    terminal = program.terminal
    for _ in range(budget):
        pc = regs["pc"]
        if pc == terminal:
            return ArchState(regs, mem, tuple(stack))
        obs = _execute(program, regs, mem, stack)
        if on_step is not None:
            on_step(pc, instrs[pc], regs["pc"], obs)
    if regs["pc"] == terminal:
        return ArchState(regs, mem, tuple(stack))
    raise StepBudgetExceeded(f"no termination within {budget} steps")


def contract_trace(
    program: Program, state: ArchState, budget: int = DEFAULT_BUDGET
) -> tuple[Obs, ...]:
    """All observations of a run, in execution order."""
    out: list[Obs] = []

    def collect(pc, instr, nxt, obs):
        if obs is not None:
            out.append(obs)

    run_program(program, state, budget, collect)
    return tuple(out)


def crypto_cf_trace(
    program: Program, state: ArchState, budget: int = DEFAULT_BUDGET
) -> tuple[Obs, ...]:
    """Only the tagged control-flow observations: the replay contract."""
    return tuple(
        o for o in contract_trace(program, state, budget)
        if o.tagged and o.kind in ("pc", "call", "ret")
    )


@dataclass(frozen=True)
class CtVerdict:
    """Outcome of a constant-time contract check."""

    passed: bool
    public_index: int | None = None
    secret_pair: tuple[dict, dict] | None = None
    diff_index: int | None = None
    obs_pair: tuple[Obs | None, Obs | None] | None = None

    def describe(self) -> str:
        if self.passed:
            return "constant-time contract holds on the checked domain"
        a, b = self.obs_pair
        return (
            f"public input #{self.public_index}: secrets {self.secret_pair[0]} vs "
            f"{self.secret_pair[1]} diverge at observation {self.diff_index}: "
            f"{a} vs {b}"
        )


def secret_assignments(
    cells: Sequence[int], values: Sequence[int]
) -> list[dict[int, int]]:
    """Every assignment of `values` to `cells` (cartesian product)."""
    return [
        dict(zip(cells, combo))
        for combo in itertools.product(values, repeat=len(cells))
    ]


def ct_check(
    program: Program,
    public_inputs: Sequence[InputSpec],
    secret_cells: Sequence[int],
    secret_values: Sequence[int],
    budget: int = DEFAULT_BUDGET,
) -> CtVerdict:
    """Check that observation traces are independent of secret memory.

    For each public input, runs the program under every assignment of
    secret_values to secret_cells and compares the full observation trace
    to the first assignment's trace (equality is transitive, so all-pairs
    equality follows).
    """
    assignments = secret_assignments(secret_cells, secret_values)
    for pi, pub in enumerate(public_inputs):
        reference: tuple[Obs, ...] | None = None
        ref_assign: dict[int, int] | None = None
        for assign in assignments:
            merged = InputSpec(mem={**pub.mem, **assign}, regs=dict(pub.regs))
            trace = contract_trace(program, make_state(program, merged), budget)
            if reference is None:
                reference, ref_assign = trace, assign
                continue
            if trace != reference:
                idx = _first_diff(reference, trace)
                pair = (
                    reference[idx] if idx < len(reference) else None,
                    trace[idx] if idx < len(trace) else None,
                )
                return CtVerdict(False, pi, (ref_assign, assign), idx, pair)
    return CtVerdict(True)


def _first_diff(a: Sequence, b: Sequence) -> int:
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return i
    return min(len(a), len(b))


def secret_cells_of(program: Program) -> tuple[int, ...]:
    """The declared .secret memory cells, empty if none declared."""
    if program.secret is None:
        return ()
    lo, hi = program.secret
    return tuple(range(lo, hi + 1))
