"""Small-step speculative machine with observable microarchitecture.

One machine configuration holds the architectural state (memory, registers,
shadow stack, committed pc), a reorder buffer of in-flight instructions, an
instruction cache and a trace cache (both LRU metadata only), a data cache
shared with instructions (one cache, `cs`), the phase scheduler, and, for
the replay variant, a cursor into the branch's recorded control-flow trace.

Each step performs the scheduler's current phase:

  commit   retire up to commit_width resolved entries from the buffer head
           (stores write memory, calls and returns move the shadow stack)
  execute  resolve every entry that was ready at the start of the phase,
           oldest first; a discovered misprediction squashes all younger
           entries at that point (work already done stays done; that is
           the transient leak under study)
  fetch    up to fetch_width instructions through the cache; tagged
           branches consume the recorded trace (replay variant),
           conditionals are predicted (predictor variant), and everything
           else speculates only on fully resolved state. Fetch runs ahead
           of resolution; that gap is where transient execution lives.

Two variants:
  replay      tagged control flow is steered by the recorded trace; untagged
              branches stall until the buffer is fully resolved. Squash-free
              by construction.
  predictor   conditionals are predicted with two-bit counters and squash on
              misprediction; calls are static; returns stall.
"""

from __future__ import annotations

from dataclasses import dataclass

from branchreplay.errors import StepBudgetExceeded, TraceExhausted
from branchreplay.hwsem.components import DirectionPredictor, LruSet, Scheduler
from branchreplay.uasm.exec import Obs, eval_expr
from branchreplay.uasm.parser import Instr, Program

REPLAY = "replay"
PREDICTOR = "predictor"

_BRANCH_OPS = ("beqz", "call", "ret")


def _expr_regs(expr: tuple | None) -> frozenset[str]:
    if expr is None:
        return frozenset()
    kind = expr[0]
    if kind == "int":
        return frozenset()
    if kind == "reg":
        return frozenset((expr[1],))
    if kind == "un":
        return _expr_regs(expr[2])
    return _expr_regs(expr[2]) | _expr_regs(expr[3])


class _BufEntry:
    """One reorder-buffer entry."""

    __slots__ = (
        "addr", "instr", "resolved", "value", "store_addr", "store_val",
        "next_pc", "predicted", "pred_next",
    )

    def __init__(self, addr: int, instr: Instr):
        self.addr = addr
        self.instr = instr
        self.resolved = False
        self.value: int | None = None
        self.store_addr: int | None = None
        self.store_val: int | None = None
        self.next_pc: int | None = None
        self.predicted = False
        self.pred_next: int | None = None


@dataclass
class HwParams:
    """Machine shape: capacities and variant knobs.

    fetch_width > 1 is what lets fetch outrun an unresolved branch's
    dependency chain; at width 1 every branch resolves before its shadow
    is even fetched and no transient window exists.
    """

    buf_capacity: int = 16
    cache_capacity: int = 64
    trace_cache_capacity: int = 16
    predictor: str = "twobit"
    fetch_width: int = 4
    commit_width: int = 4


class HwConfig:
    """One machine configuration (the omega of the step relation)."""

    def __init__(
        self,
        program: Program,
        regs: dict[str, int],
        mem: dict[int, int],
        variant: str,
        cf_trace: tuple[Obs, ...] = (),
        params: HwParams | None = None,
    ):
        if variant not in (REPLAY, PREDICTOR):
            raise ValueError(f"unknown variant {variant!r}")
        self.program = program
        self.variant = variant
        self.params = params or HwParams()
        self.mem = dict(mem)
        self.regs = dict(regs)
        self.stack: tuple[int, ...] = ()
        self.buf: list[_BufEntry] = []
        self.cs = LruSet(self.params.cache_capacity)
        self.tc = LruSet(self.params.trace_cache_capacity)
        self.sc = Scheduler()
        self.predictor = DirectionPredictor(self.params.predictor)
        self.cf = cf_trace
        self.C = 0
        self.fetch_pc = regs.get("pc", 0)
        self.squashes = 0
        self.tagged_squashes = 0
        self.steps = 0

    # -- views -----------------------------------------------------------------

    @property
    def halted(self) -> bool:
        terminal = self.program.terminal
        return (not self.buf and self.fetch_pc == terminal
                and self.regs["pc"] == terminal)

    def _latest_writer(self, upto: int, reg: str) -> _BufEntry | None:
        for k in range(upto - 1, -1, -1):
            e = self.buf[k]
            if e.instr.op in ("assign", "load") and e.instr.reg == reg:
                return e
        return None

    def _reg_view(self, upto: int, reg: str) -> int:
        w = self._latest_writer(upto, reg)
        if w is not None:
            return w.value
        return self.regs.get(reg, 0)

    def _deps_resolved(self, upto: int, regs: frozenset[str]) -> bool:
        for r in regs:
            w = self._latest_writer(upto, r)
            if w is not None and not w.resolved:
                return False
        return True

    def _stack_view(self) -> tuple[int, ...]:
        """Shadow stack as seen past all (resolved) in-flight entries."""
        stack = list(self.stack)
        for e in self.buf:
            if e.instr.op == "call":
                stack.append(e.addr + 1)
            elif e.instr.op == "ret" and stack:
                stack.pop()
        return tuple(stack)

    def examine(self) -> str:
        """'R' if every buffered entry is resolved (empty counts), else 'UR'."""
        return "R" if all(e.resolved for e in self.buf) else "UR"

    # -- one step ---------------------------------------------------------------

    def step(self) -> None:
        phase = self.sc.next()
        if phase == "commit":
            self._phase_commit()
        elif phase == "execute":
            self._phase_execute()
        else:
            self._phase_fetch()
        self.sc.update(self.buf)
        self.steps += 1

    # -- commit ------------------------------------------------------------------

    def _phase_commit(self) -> None:
        for _ in range(self.params.commit_width):
            if not self.buf or not self.buf[0].resolved:
                return
            e = self.buf.pop(0)
            op = e.instr.op
            if op in ("assign", "load"):
                self.regs[e.instr.reg] = e.value
            elif op == "store":
                self.mem[e.store_addr] = e.store_val
            elif op == "call":
                self.stack = self.stack + (e.addr + 1,)
            elif op == "ret":
                self.stack = self.stack[:-1] if self.stack else ()
            self.regs["pc"] = e.next_pc

    # -- execute -----------------------------------------------------------------

    def _ready(self, k: int) -> bool:
        e = self.buf[k]
        if e.resolved:
            return False
        op = e.instr.op
        if op == "assign":
            return self._deps_resolved(k, _expr_regs(e.instr.expr))
        if op == "load":
            if not self._deps_resolved(k, _expr_regs(e.instr.expr)):
                return False
            # no memory dataflow speculation: all older stores must be resolved
            return all(
                x.resolved for x in self.buf[:k] if x.instr.op == "store"
            )
        if op == "store":
            if not self._deps_resolved(k, _expr_regs(e.instr.expr)):
                return False
            w = self._latest_writer(k, e.instr.reg)
            return w is None or w.resolved
        if op == "beqz" and e.predicted:
            w = self._latest_writer(k, e.instr.reg)
            return w is None or w.resolved
        return False

    def _eval(self, k: int, expr: tuple) -> int:
        regs = {r: self._reg_view(k, r) for r in _expr_regs(expr)}
        return eval_expr(expr, regs)

    def _phase_execute(self) -> None:
        ready = [k for k in range(len(self.buf)) if self._ready(k)]
        for k in ready:
            if k >= len(self.buf):
                break  # squashed by an older mispredicted branch this phase
            e = self.buf[k]
            op = e.instr.op
            if op == "assign":
                e.value = self._eval(k, e.instr.expr)
                e.resolved = True
            elif op == "load":
                addr = self._eval(k, e.instr.expr)
                self.cs.update(addr)
                value = None
                for x in reversed(self.buf[:k]):
                    if x.instr.op == "store" and x.store_addr == addr:
                        value = x.store_val
                        break
                e.value = self.mem.get(addr, 0) if value is None else value
                e.resolved = True
            elif op == "store":
                e.store_addr = self._eval(k, e.instr.expr)
                e.store_val = self._reg_view(k, e.instr.reg)
                self.cs.update(e.store_addr)
                e.resolved = True
            elif op == "beqz":
                cond = self._reg_view(k, e.instr.reg)
                actual = e.instr.target if cond == 0 else e.addr + 1
                self.predictor.update(e.addr, actual != e.addr + 1)
                e.resolved = True
                e.next_pc = actual
                if actual != e.pred_next:
                    del self.buf[k + 1:]
                    self.fetch_pc = actual
                    self.squashes += 1
                    if e.instr.tag:
                        self.tagged_squashes += 1
                    break
        return

    # -- fetch --------------------------------------------------------------------

    def _phase_fetch(self) -> None:
        for _ in range(self.params.fetch_width):
            if not self._fetch_one():
                return

    def _fetch_one(self) -> bool:
        """Fetch a single instruction; False ends the phase (stall/miss)."""
        i = self.fetch_pc
        if i == self.program.terminal or len(self.buf) >= self.params.buf_capacity:
            return False
        if not self.cs.access(i):
            self.cs.update(i)  # instruction-cache fill; retry next phase
            return False
        self.cs.update(i)
        instr = self.program.instructions[i]
        op = instr.op
        if op not in _BRANCH_OPS:
            e = _BufEntry(i, instr)
            e.next_pc = i + 1
            self.buf.append(e)
            self.fetch_pc = i + 1
            return True

        if self.variant == REPLAY and instr.tag:
            if not self.tc.access(i):
                self.tc.update(i)  # trace-cache fill; retry next phase
                return False
            self.tc.update(i)
            if self.C >= len(self.cf):
                raise TraceExhausted(
                    f"branch at {i} fetched beyond the recorded trace"
                )
            target = self.cf[self.C].value
            self.C += 1
            e = _BufEntry(i, instr)
            e.resolved = True
            e.next_pc = target
            self.buf.append(e)
            self.fetch_pc = target
            return True

        if self.variant == PREDICTOR and op == "beqz":
            taken = self.predictor.predict_taken(i)
            pred = instr.target if taken else i + 1
            e = _BufEntry(i, instr)
            e.predicted = True
            e.pred_next = pred
            self.buf.append(e)
            self.fetch_pc = pred
            return True

        if op == "call":
            # static target; the stack push happens at commit
            e = _BufEntry(i, instr)
            e.resolved = True
            e.next_pc = instr.target
            self.buf.append(e)
            self.fetch_pc = instr.target
            return True

        # untagged beqz (replay) or any ret: only resolved state may steer
        if self.examine() == "UR":
            return False
        if op == "beqz":
            cond = self._reg_view(len(self.buf), instr.reg)
            target = instr.target if cond == 0 else i + 1
        else:  # ret
            stack = self._stack_view()
            target = stack[-1] if stack else self.program.terminal
        e = _BufEntry(i, instr)
        e.resolved = True
        e.next_pc = target
        self.buf.append(e)
        self.fetch_pc = target
        return True


def hw_step(config: HwConfig) -> HwConfig:
    """One phase step. Mutates and returns the same object."""
    config.step()
    return config


def hw_run(
    config: HwConfig,
    budget: int = 200_000,
    observer=None,
) -> HwConfig:
    """Run to the halt configuration.

    `observer`, if given, is called with the config after every step (and
    once on the initial configuration). Raises StepBudgetExceeded if the
    machine does not halt within `budget` steps.
    """
    if observer is not None:
        observer(config)
    for _ in range(budget):
        if config.halted:
            return config
        config.step()
        if observer is not None:
            observer(config)
    if config.halted:
        return config
    raise StepBudgetExceeded(f"machine did not halt within {budget} steps")
