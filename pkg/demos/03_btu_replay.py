"""Drive the branch trace unit by hand, one lookup and commit at a time.

Shows the three-counter sliding window over the golden two-pattern trace,
a misspeculation squash restoring the window, and the direct-mapped
slot machinery spilling and resuming a branch under capacity pressure.
"""

from branchreplay.btusim import BtuEntry, BtuState, Miss, Redirect, Stall
from branchreplay.compression import compress, to_trace_elements
from branchreplay.core import BranchRecord, HintInfo, RawTrace

PC = 0x100
A, B, C = 0x110, 0x120, 0x130


def record_for(raw):
    store, elements = to_trace_elements(compress(raw))
    hint = HintInfo(single_target=False, field12=0, short_trace=len(elements) <= 16)
    return BranchRecord(raw.branch_pc, hint, store, elements)


raw = RawTrace(PC, tuple([A] * 2 + [B] * 5 + [A] * 2 + [B] * 5 + [C] * 3))
entry = BtuEntry(record_for(raw))

print("replaying the golden trace (17 outcomes) out of the compressed form:")
print(f"window at start: {entry.window_view()}")

served = []
for i in range(len(raw.targets)):
    out = entry.lookup()
    assert isinstance(out, Redirect)
    served.append(out.target_pc)
print(f"17 speculative lookups serve: {' '.join(f'{t:#x}' for t in served)}")
assert tuple(served) == raw.targets
print(f"window after lookups (drained): {entry.window_view()}")
assert isinstance(entry.lookup(), Stall)
print("18th lookup stalls: nothing speculative left before a commit retires")

# misspeculation: roll back the last 5 lookups, the counters rewind exactly
entry.squash(5)
print(f"\nafter squashing 5 outcomes: {entry.window_view()}")
for _ in range(5):
    entry.lookup()
print("re-serving them yields the same targets (replay is deterministic)")

# retire everything; the window wraps through the terminator and is
# immediately ready for the next invocation of the same branch
for _ in range(len(raw.targets)):
    entry.commit()
print(f"\nwindow after 17 commits (wrapped): {entry.window_view()}")
again = [entry.lookup().target_pc for _ in range(4)]
print(f"next call of the branch replays from the top: "
      f"{' '.join(f'{t:#x}' for t in again)}")

# capacity: two branches whose addresses collide in the 16-slot table
state = BtuState()
first = RawTrace(0x10, (0x40,) * 3 + (0x50,) * 2)
second = RawTrace(0x20, (0x60,) * 4)  # 0x10 % 16 == 0x20 % 16
state.fill(record_for(first))
print(f"\nbranch {first.branch_pc:#x} installed; looking up {second.branch_pc:#x}:")
print(f"  {state.lookup(0x20)}")
state.lookup(0x10)
state.commit(0x10)
state.fill(record_for(second))  # spills 0x10 mid-trace, checkpoint saved
print(f"filled {second.branch_pc:#x} over it (one outcome of {first.branch_pc:#x} "
      "already committed, checkpoint spilled)")
assert isinstance(state.lookup(0x10), Miss)
state.fill(record_for(first))  # resumes from the spilled checkpoint
resumed = [state.lookup(0x10).target_pc for _ in range(4)]
print(f"refill resumes {first.branch_pc:#x} where it left off: "
      f"{' '.join(f'{t:#x}' for t in resumed)}")
assert tuple(resumed) == first.targets[1:]
print(f"stats: {state.stats}")
