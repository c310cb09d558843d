"""Batch command-line front end.

Subcommands: run (fuzz campaign), cov (render a coverage record), repro
(replay a crash artifact), validate (check a program or harness), bench
(list or export bundled benchmarks).

Exit codes: 0 success or no findings; 1 findings present (run) or finding
reproduced (repro); 2 usage or validation error; 3 campaign-fatal error or
non-reproducing artifact.  Setting SIMT_FORGE_TRACE=1 streams one event
line per memory access and control-flow edge to stderr during run/repro.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
from pathlib import Path

from . import bench as benchmod
from .campaign import (
    CampaignConfig,
    CampaignFatalError,
    DigestMismatchError,
    ManifestError,
    fuzz_loop,
    load_harness,
    replay,
)
from .coverage import rec_to_rows, render_text, rows_report
from .executor import TraceHooks
from .kernel_ir import SirSyntaxError, parse_program, validate
from .mutation import MutationError

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_FATAL = 3


def _trace_hooks() -> TraceHooks | None:
    if os.environ.get("SIMT_FORGE_TRACE") == "1":
        return TraceHooks(sys.stderr)
    return None


def _parse_stop(values: list[str], cfg_kwargs: dict) -> None:
    for v in values:
        if v == "first-finding":
            cfg_kwargs["stop_on_first_finding"] = True
        elif v == "iters":
            pass                     # the iteration limit always applies
        elif v.startswith("wall:"):
            cfg_kwargs["max_wall_seconds"] = float(v[5:])
        else:
            raise ValueError(f"unknown stop condition {v!r}")


def cmd_run(args) -> int:
    try:
        manifest = load_harness(args.harness)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    kwargs = dict(master_seed=args.seed, iterations=args.iters,
                  workers=args.workers, mode=args.mode,
                  out_dir=Path(args.out), diff_readback=args.diff_check,
                  hooks=_trace_hooks())
    try:
        _parse_stop(args.stop_on or [], kwargs)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.stop_bug_class:
        kwargs["stop_bug_class"] = args.stop_bug_class
    try:
        summary = fuzz_loop(manifest, CampaignConfig(**kwargs))
    except CampaignFatalError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_FATAL
    sys.stdout.write(summary.to_rec())
    if len(summary.findings):
        sys.stdout.write(summary.findings.render_text())
        return EXIT_FINDINGS
    return EXIT_OK


def cmd_cov(args) -> int:
    rec = Path(args.dir) / "coverage.rec"
    if not rec.is_file():
        print(f"error: {rec} not found", file=sys.stderr)
        return EXIT_USAGE
    try:
        rows = rec_to_rows(rec.read_text())
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = rows_report(rows)
    if args.format == "rec":
        from .coverage import report_to_rec
        sys.stdout.write(report_to_rec(report))
    else:
        sys.stdout.write(render_text(report))
    return EXIT_OK


def cmd_repro(args) -> int:
    try:
        result = replay(Path(args.artifact), hooks=_trace_hooks())
    except (ManifestError, DigestMismatchError, MutationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if result.reproduced:
        print(result.report.to_line())
        return EXIT_FINDINGS
    got = result.report.to_line() if result.report else "no finding"
    print(f"did not reproduce: expected dedupe={result.expected_dedupe} "
          f"class={result.expected_class}; got {got}")
    return EXIT_FATAL


def cmd_validate(args) -> int:
    if args.harness:
        try:
            manifest = load_harness(args.harness)
        except ManifestError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        kernels = ", ".join(sorted(manifest.program.kernels))
        print(f"ok: harness {args.harness} (program {manifest.program_digest}, "
              f"kernels: {kernels})")
        return EXIT_OK
    if not args.program:
        print("error: validate needs --program or --harness", file=sys.stderr)
        return EXIT_USAGE
    try:
        text = Path(args.program).read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        program = parse_program(text)
    except SirSyntaxError as exc:
        print(f"{args.program}:{exc.line}: {exc.reason}", file=sys.stderr)
        return EXIT_USAGE
    diags = validate(program)
    for d in diags:
        where = f"{d.kernel}" if d.iid < 0 else f"{d.kernel}@{d.iid}"
        print(f"{args.program}: {where}: {d.code}: {d.message}")
    if diags:
        return EXIT_USAGE
    for k in program.kernels.values():
        print(f"ok: kernel {k.name}: {len(k.params)} params, "
              f"{len(k.blocks)} blocks, {len(k.edges)} static edges")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.action == "list":
        for entry in benchmod.list_benchmarks():
            variants = ",".join(v.bug_class for v in entry.variants())
            print(f"{entry.name}  variants: {variants}")
        return EXIT_OK
    # export NAME DIR
    if not args.name or not args.dest:
        print("error: bench export needs NAME and DIR", file=sys.stderr)
        return EXIT_USAGE
    try:
        entry = benchmod.get_benchmark(args.name)
    except benchmod.BenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    dest = Path(args.dest) / entry.name
    shutil.copytree(entry.root, dest, dirs_exist_ok=True)
    print(f"exported {entry.name} to {dest}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simt-forge",
                                description="SIMT kernel fuzzing sandbox")
    sub = p.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run a fuzz campaign over a harness")
    runp.add_argument("--harness", required=True)
    runp.add_argument("--out", required=True)
    runp.add_argument("--iters", type=int, default=1000)
    runp.add_argument("--seed", type=int, default=1)
    runp.add_argument("--workers", type=int, default=1)
    runp.add_argument("--mode", choices=("amortized", "reinit"), default="amortized")
    runp.add_argument("--stop-on", action="append", metavar="COND",
                      help="first-finding | iters | wall:SECS (repeatable)")
    runp.add_argument("--stop-bug-class", metavar="CLASS")
    runp.add_argument("--diff-check", action="store_true")
    runp.set_defaults(func=cmd_run)

    covp = sub.add_parser("cov", help="render a campaign coverage record")
    covp.add_argument("--dir", required=True)
    covp.add_argument("--format", choices=("text", "rec"), default="text")
    covp.set_defaults(func=cmd_cov)

    repp = sub.add_parser("repro", help="replay a recorded crash artifact")
    repp.add_argument("--artifact", required=True)
    repp.set_defaults(func=cmd_repro)

    valp = sub.add_parser("validate", help="validate a program or harness")
    valp.add_argument("--program")
    valp.add_argument("--harness")
    valp.set_defaults(func=cmd_validate)

    benp = sub.add_parser("bench", help="list or export bundled benchmarks")
    benp.add_argument("action", choices=("list", "export"))
    benp.add_argument("name", nargs="?")
    benp.add_argument("dest", nargs="?")
    benp.set_defaults(func=cmd_bench)

    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
