"""Command-line front end.

Subcommands:
    trace-gen  run a workload on two inputs and write a replay bundle
    stats      per-branch compression table (from a workload or a bundle)
    simulate   pipeline timing, replay or predictor mode
    check-ni   bounded hardware-noninterference check
    run-seq    plain sequential run; optional branch log and ct check

Workload arguments accept a builtin name or a path to a .uasm file.
Input files are JSON: {"memory": {"0": 4}, "registers": {"x": 1}};
keys parse with int(key, 0) so hex strings work.

Exit codes: 0 success, 1 failed verdict, 2 error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from branchreplay.core.codec import decode_bundle, encode_bundle
from branchreplay.errors import BranchReplayError
from branchreplay.hwsem.checker import check_hni
from branchreplay.hwsem.machine import HwParams
from branchreplay.btusim.pipeline import (
    PipelineConfig,
    build_stream,
    simulate,
)
from branchreplay.report import (
    bundle_rows,
    classified_rows,
    format_report,
    report_json,
    summarize,
)
from branchreplay.tracegen import (
    classify_program,
    emit_branch_log,
    format_branch_log,
    generate_traces,
)
from branchreplay.uasm.exec import (
    InputSpec,
    ct_check,
    make_state,
    run_program,
    secret_assignments,
    secret_cells_of,
)
from branchreplay.uasm.parser import Program, parse_program
from branchreplay import workloads


def _load_input(path: str | None) -> InputSpec | None:
    if path is None:
        return None
    data = json.loads(Path(path).read_text())
    mem = {int(k, 0): int(v) for k, v in data.get("memory", {}).items()}
    regs = {k: int(v) for k, v in data.get("registers", {}).items()}
    return InputSpec(mem=mem, regs=regs)


def _resolve_workload(
    name: str,
) -> tuple[Program, InputSpec | None, InputSpec | None]:
    """Builtin name -> (program, default input pair); file path otherwise."""
    try:
        entries = workloads.corpus()
    except Exception:
        entries = {}
    if name in entries:
        return entries[name]
    if name in workloads.FIXED:
        program = workloads.load_workload(name)
        if name == "spectre_v1":
            base = workloads.gadget_inputs()
            return program, base, base
        return program, None, None
    path = Path(name)
    if not path.exists():
        raise BranchReplayError(
            f"unknown workload {name!r}; builtins: "
            + ", ".join(sorted(set(entries) | set(workloads.FIXED)))
        )
    return parse_program(path.read_text()), None, None


def _emit_json(path: str | None, payload) -> None:
    if path:
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def _kv(**pairs) -> None:
    for key, value in pairs.items():
        print(f"{key}={value}")


def _cmd_trace_gen(args) -> int:
    program, d1, d2 = _resolve_workload(args.workload)
    inp1 = _load_input(args.input1) or d1 or InputSpec()
    inp2 = _load_input(args.input2) or d2 or InputSpec()
    bundle = generate_traces(program, inp1, inp2, budget=args.budget)
    blob = encode_bundle(bundle)
    if args.out:
        Path(args.out).write_bytes(blob)
    singles = sum(1 for r in bundle.records if r.hint.single_target)
    _kv(
        records=len(bundle.records),
        single_target=singles,
        traced=len(bundle.records) - singles,
        bytes=len(blob),
        digest=bundle.program_hash,
        crypto_lo=hex(bundle.crypto_lo),
        crypto_hi=hex(bundle.crypto_hi),
        out=args.out or "-",
    )
    _emit_json(
        args.json,
        {
            "records": len(bundle.records),
            "single_target": singles,
            "bytes": len(blob),
            "digest": bundle.program_hash,
        },
    )
    return 0


def _cmd_stats(args) -> int:
    if args.bundle:
        bundle = decode_bundle(Path(args.bundle).read_bytes())
        rows = bundle_rows(bundle)
    else:
        if not args.workload:
            raise BranchReplayError("stats needs a workload or --bundle")
        program, d1, d2 = _resolve_workload(args.workload)
        inp1 = _load_input(args.input1) or d1 or InputSpec()
        inp2 = _load_input(args.input2) or d2 or InputSpec()
        classified = classify_program(program, inp1, inp2, budget=args.budget)
        rows = classified_rows(classified)
    summary = summarize(rows)
    print(format_report(rows, summary), end="")
    if args.json:
        Path(args.json).write_text(report_json(rows, summary) + "\n")
    return 0


def _apply_config(cfg, path: str | None, overrides: dict):
    """Layer: defaults < --config file < explicit flags."""
    if path:
        for key, value in json.loads(Path(path).read_text()).items():
            if not hasattr(cfg, key):
                raise BranchReplayError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def _cmd_simulate(args) -> int:
    program, d1, d2 = _resolve_workload(args.workload)
    inp = _load_input(args.input) or d1 or InputSpec()
    if args.bundle:
        bundle = decode_bundle(Path(args.bundle).read_bytes())
    else:
        inp2 = d2 or inp
        bundle = (
            generate_traces(program, d1 or inp, inp2, budget=args.budget)
            if program.crypto is not None
            else None
        )
    config = _apply_config(
        PipelineConfig(),
        args.config,
        {
            "fetch_width": args.fetch_width,
            "rob_size": args.rob_size,
            "resolve_latency": args.resolve_latency,
            "fill_latency": args.fill_latency,
            "predictor": args.predictor,
            "squash_injection_rate": args.squash_rate,
            "squash_seed": args.seed,
            "cycle_budget": args.budget,
            "warm_btu": (False if args.cold_btu else None),
        },
    )
    stream = build_stream(program, inp, budget=max(args.budget, 1_000_000))
    result = simulate(stream, bundle, config, args.mode, program=program)
    _kv(mode=args.mode, instructions=len(stream), **result.stats.to_dict())
    _emit_json(
        args.json,
        {"mode": args.mode, "instructions": len(stream),
         "stats": result.stats.to_dict()},
    )
    return 0


def _parse_values(text: str) -> tuple[int, ...]:
    return tuple(int(v, 0) for v in text.split(","))


def _cmd_check_ni(args) -> int:
    program, d1, _ = _resolve_workload(args.workload)
    base = _load_input(args.input) or d1 or InputSpec()
    cells = secret_cells_of(program)
    if not cells:
        raise BranchReplayError(
            f"workload {args.workload!r} declares no secret cells"
        )
    values = _parse_values(args.secret_values)
    assignments = [
        InputSpec(mem={**base.mem, **assign}, regs=base.regs)
        for assign in secret_assignments(cells, values)
    ]
    params = HwParams(
        buf_capacity=args.buf,
        cache_capacity=args.cache,
        trace_cache_capacity=args.trace_cache,
        predictor=args.predictor,
    )
    verdict = check_hni(
        program,
        assignments,
        args.mode,
        params,
        budget=args.budget,
        include_scheduler=args.include_scheduler,
    )
    print(verdict.describe())
    _kv(
        passed=verdict.passed,
        pairs_checked=verdict.pairs_checked,
        pairs_skipped=verdict.pairs_skipped,
        assignments=len(assignments),
    )
    _emit_json(
        args.json,
        {
            "passed": verdict.passed,
            "pairs_checked": verdict.pairs_checked,
            "pairs_skipped": verdict.pairs_skipped,
            "counterexample": (
                None
                if verdict.counterexample is None
                else verdict.counterexample.describe()
            ),
        },
    )
    return 0 if verdict.passed else 1


def _cmd_run_seq(args) -> int:
    program, d1, _ = _resolve_workload(args.workload)
    inp = _load_input(args.input) or d1 or InputSpec()
    steps = 0

    def count(pc, instr, nxt, obs):
        nonlocal steps
        steps += 1

    final = run_program(program, make_state(program, inp), args.budget, count)
    log = emit_branch_log(program, make_state(program, inp), args.budget)
    if args.log:
        Path(args.log).write_text(format_branch_log(log))
    _kv(steps=steps, branches=len(log), final_pc=final.regs["pc"])
    payload = {"steps": steps, "branches": len(log),
               "final_pc": final.regs["pc"]}
    code = 0
    if args.ct:
        cells = secret_cells_of(program)
        if not cells:
            raise BranchReplayError("--ct needs a .secret declaration")
        verdict = ct_check(
            program, [inp], cells, _parse_values(args.secret_values),
            budget=args.budget,
        )
        _kv(ct_passed=verdict.passed)
        if not verdict.passed:
            print(verdict.describe())
            code = 1
        payload["ct_passed"] = verdict.passed
    _emit_json(args.json, payload)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="branchreplay",
        description="record-and-replay toolkit for constant-time kernels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--budget", type=int, default=1_000_000,
                       help="step/cycle budget")
        p.add_argument("--json", help="write machine-readable results here")

    p = sub.add_parser("trace-gen", help="build a replay bundle")
    p.add_argument("workload")
    p.add_argument("--input1", help="JSON input file, first run")
    p.add_argument("--input2", help="JSON input file, second run")
    p.add_argument("--out", help="bundle output path")
    common(p)
    p.set_defaults(func=_cmd_trace_gen)

    p = sub.add_parser("stats", help="per-branch compression table")
    p.add_argument("workload", nargs="?")
    p.add_argument("--bundle", help="read a packed bundle instead")
    p.add_argument("--input1")
    p.add_argument("--input2")
    common(p)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("simulate", help="pipeline timing run")
    p.add_argument("workload")
    p.add_argument("--mode", choices=["replay", "predictor"], default="replay")
    p.add_argument("--bundle", help="use this packed bundle")
    p.add_argument("--input", help="JSON input file")
    p.add_argument("--config", help="JSON file of pipeline parameters")
    p.add_argument("--fetch-width", type=int)
    p.add_argument("--rob-size", type=int)
    p.add_argument("--resolve-latency", type=int)
    p.add_argument("--fill-latency", type=int)
    p.add_argument("--predictor", choices=["twobit", "always-taken"])
    p.add_argument("--squash-rate", type=float,
                   help="random squash injection probability per cycle")
    p.add_argument("--seed", type=int, help="squash injection seed")
    p.add_argument("--cold-btu", action="store_true",
                   help="start with an empty replay unit")
    common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("check-ni", help="bounded noninterference check")
    p.add_argument("workload")
    p.add_argument("--mode", choices=["replay", "predictor"],
                   default="replay")
    p.add_argument("--input", help="JSON base (public) input")
    p.add_argument("--secret-values", default="0,1",
                   help="comma-separated values tried in each secret cell")
    p.add_argument("--buf", type=int, default=16, help="reorder buffer size")
    p.add_argument("--cache", type=int, default=64, help="cache capacity")
    p.add_argument("--trace-cache", type=int, default=16)
    p.add_argument("--predictor", choices=["twobit", "always-taken"],
                   default="twobit")
    p.add_argument("--include-scheduler", action="store_true",
                   help="count the scheduler phase as adversary-visible")
    common(p)
    p.set_defaults(func=_cmd_check_ni)

    p = sub.add_parser("run-seq", help="plain sequential execution")
    p.add_argument("workload")
    p.add_argument("--input", help="JSON input file")
    p.add_argument("--log", help="write the branch log here")
    p.add_argument("--ct", action="store_true",
                   help="also check observation-trace secret independence")
    p.add_argument("--secret-values", default="0,1")
    common(p)
    p.set_defaults(func=_cmd_run_seq)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BranchReplayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
