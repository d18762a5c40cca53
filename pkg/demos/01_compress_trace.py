"""Walk a single branch trace through every compression stage.

The running example is a branch that alternates between two targets in a
2-then-5 rhythm twice, then takes a third target three times. Each stage
prints what it produced, ending with the packed hardware form and the
identity check.
"""

from branchreplay.compression import (
    compress,
    decompress,
    kmers_compress,
    to_dna,
    to_trace_elements,
    to_vanilla,
)
from branchreplay.core import RawTrace
from branchreplay.report import compression_rate, kmers_size
from branchreplay.workloads import bn_raw_trace

PC = 0x100
A, B, C = 0x110, 0x120, 0x130

raw = RawTrace(PC, tuple([A] * 2 + [B] * 5 + [A] * 2 + [B] * 5 + [C] * 3))
print(f"raw trace of branch {PC:#x}: {len(raw.targets)} dynamic targets")
print("  " + " ".join(f"{t:#x}" for t in raw.targets))

vanilla = to_vanilla(raw)
print(f"\nrun-length stage: {len(vanilla.elements)} (target, count) runs")
for el in vanilla.elements:
    print(f"  jump to {el.target_pc:#x} x{el.count}")

dna = to_dna(vanilla)
print(f"\nsymbol stage: alphabet of {len(dna.symbol_map)} distinct runs")
print(f"  string: {dna.symbols}")

rep = kmers_compress(dna)
print(f"\npattern stage: {len(rep.pattern_set)} repeated pattern(s) found")
for pat in rep.pattern_set:
    print(f"  symbol {pat.id} := {pat.body}")
print(f"  residual string: {rep.k_trace}")
print(f"  compressed size: {kmers_size(rep)} "
      f"(rate x{compression_rate(vanilla, rep):.1f})")

store, elements = to_trace_elements(rep)
print(f"\nhardware form: {len(store)} pattern-store entries, "
      f"{len(elements)} trace elements (incl. terminator)")
for pe in store:
    print(f"  store: offset {pe.target_offset:+#x} x{pe.reps}")
for te in elements:
    if te.eot:
        print("  element: end-of-trace")
    else:
        print(f"  element: store[{te.pattern_index}:"
              f"{te.pattern_index + te.pattern_size}] "
              f"pattern_counter={te.pattern_counter} "
              f"trace_counter={te.trace_counter}")

assert decompress(rep).expand() == raw.targets
print("\ndecompress(compress(raw)) reproduces the raw trace exactly")

# the same machinery on a highly regular block-power trace
big = bn_raw_trace(4, 1_000)
big_rep = compress(big)
rate = compression_rate(to_vanilla(big), big_rep)
print(f"\nblock of 4 targets repeated 1000 times: {len(big.targets)} outcomes "
      f"compress at rate x{rate:.0f}")
