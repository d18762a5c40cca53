"""Record a workload's branches from two runs and ship them as a bundle.

Runs the table-lookup workload twice with different inputs, classifies
every branch in its crypto region, prints the per-branch report, then
encodes the resulting bundle to bytes and decodes it back.
"""

from branchreplay.core import decode_bundle, encode_bundle
from branchreplay.report import classified_rows, format_report, summarize
from branchreplay.tracegen import classify_program, generate_traces
from branchreplay.workloads import corpus

program, run_a, run_b = corpus()["table_branch"]
lo, hi = program.crypto
print(f"workload: table_branch, crypto region [{lo:#x}, {hi:#x}]")
print(f"inputs differ at mem[63]: {run_a.mem.get(63)} vs {run_b.mem.get(63)}\n")

classified = classify_program(program, run_a, run_b)
rows = classified_rows(classified)
print(format_report(rows, summarize(rows)))

bundle = generate_traces(program, run_a, run_b)
print(f"\nbundle: {len(bundle.records)} records, digest {bundle.program_hash[:16]}...")
for rec in bundle.records:
    kind = "single-target" if rec.hint.single_target else "traced"
    print(f"  {rec.branch_pc:#6x} {kind:<14} hint field {rec.hint.field12:+d} "
          f"store {len(rec.store)} elements {len(rec.elements)}")

blob = encode_bundle(bundle)
print(f"\nencoded: {len(blob)} bytes")
print("  " + blob[:24].hex(" "))

assert decode_bundle(blob) == bundle
print("decode(encode(bundle)) == bundle")

# the same classification from different inputs must agree; the recorder
# refuses to bundle a branch whose trace is input-dependent
again = generate_traces(program, run_b, run_a)
assert again == bundle
print("recording with the runs swapped produces a byte-identical bundle")
