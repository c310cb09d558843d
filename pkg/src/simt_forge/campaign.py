"""Harness manifests, phase execution, and the coverage-guided fuzzing loop.

A harness manifest (.man) binds a kernel program to three host-op phases:

  INIT     one-time setup: allocations and bulk copies that do not depend on
           the mutated input,
  COMPUTE  the per-input work: kernel launches (argument buffers are
           materialized from the test case right before the launch) and
           optional differential readbacks,
  TERM     teardown: frees for everything INIT allocated.

The fuzz loop exploits that split: INIT runs once, a snapshot pins the
post-INIT state, and every iteration restores the snapshot, mutates a parent
from the corpus, and runs COMPUTE.  The baseline mode ("reinit") instead
rebuilds everything per iteration: re-parse the program (standing in for
per-run JIT setup), fresh image, INIT, COMPUTE, TERM.  The ratio between the
two is the amortization win.

Scheduling favors recently admitted corpus entries (higher weight inside the
admission window) over seeds and older entries.  Findings stop the launch
that raised them but not the campaign; each unique finding writes one crash
artifact that replays standalone.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coverage import CoverageMap, build_report, new_edges_since, render_text, report_to_rec
from .device_memory import DeviceMemoryImage, InvalidFreeError, MemConfig
from .executor import ArgValue, ExecHooks, ExecOutcome, ExecStatus, LaunchConfig, launch
from .kernel_ir import MemSpace, Program, ScalarType, parse_program, print_program, validate
from .mutation import (ArgSpec, ArrayValue, FloatValue, IntValue, MutationConfig,
                       MutationSchedule, TestCase, argspec_digest, mutate_testcase,
                       parse_testcase, seed_testcase, serialize_testcase)
from .rng import Stream
from .sanitizer import BugClass, BugReport, FindingsLog, invalid_free_report

INIT = "init"
COMPUTE = "compute"
TERM = "term"

_PACK_F = struct.Struct("<f")
_PACK_I = struct.Struct("<i")


class ManifestError(Exception):
    pass


class ManifestSyntaxError(ManifestError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownKernelRefError(ManifestError):
    pass


class DanglingFreeError(ManifestError):
    pass


class ArgArityError(ManifestError):
    pass


class DigestMismatchError(Exception):
    pass


class CampaignFatalError(Exception):
    pass


@dataclass
class HostOp:
    kind: str                  # alloc | copy_in | copy_out | free | launch | sync
    line: int
    name: str = ""             # alloc/copy/free target name
    space: MemSpace | None = None
    size: int = 0
    source: tuple[str, str] = ("", "")   # copy_in payload: (form, literal)
    arg_ref: int = -1          # copy_out arg:<k>
    kernel: str = ""
    grid: int = 0
    block: int = 0
    bindings: tuple = ()       # ("arg", k) | ("buf", name) | ("lit_i32", v) | ("lit_f32", v)


@dataclass
class HarnessManifest:
    path: Path
    program_path: Path
    program_text: str          # canonical program text (re-parsed by reinit mode)
    program: Program
    argspecs: list[ArgSpec]
    phases: dict[str, list[HostOp]]
    normalized: str            # canonical manifest text; digest input
    digest: str

    @property
    def program_digest(self) -> str:
        return self.program.digest

    def seed(self, rng_seed: int = 0) -> TestCase:
        return seed_testcase(self.argspecs, rng_seed)

    def portable_text(self, program_rel: str) -> str:
        """Loadable manifest text referencing the program at program_rel."""
        lines = self.normalized.splitlines()
        lines[0] = f"program {program_rel}"
        return "\n".join(lines) + "\n"


def _parse_argspec(toks: list[str], lineno: int) -> ArgSpec:
    if len(toks) < 2:
        raise ManifestSyntaxError(lineno, "argspec needs a name and a type")
    name, ty = toks[0], toks[1]
    kv: dict[str, str] = {}
    flags: set[str] = set()
    rest = toks[2:]
    if ty == "ptr":
        if len(rest) < 2:
            raise ManifestSyntaxError(lineno, "ptr argspec needs a space and element type")
        try:
            space = MemSpace(rest[0])
        except ValueError:
            raise ManifestSyntaxError(lineno, f"unknown space {rest[0]!r}") from None
        elem = rest[1]
        if elem not in ("i32", "f32"):
            raise ManifestSyntaxError(lineno, f"unknown element type {elem!r}")
        rest = rest[2:]
    for tok in rest:
        if "=" in tok:
            k, _, v = tok.partition("=")
            kv[k] = v
        else:
            flags.add(tok)
    fixed = "fixed" in flags
    try:
        if ty == "i32":
            return ArgSpec(name, ScalarType.I32, seed_int=int(kv.get("seed", "0"), 0),
                           lo=int(kv.get("lo", str(-(1 << 31))), 0),
                           hi=int(kv.get("hi", str((1 << 31) - 1)), 0), fixed=fixed)
        if ty == "f32":
            return ArgSpec(name, ScalarType.F32, seed_float=float(kv.get("seed", "0")),
                           flo=float(kv.get("flo", "-1000")),
                           fhi=float(kv.get("fhi", "1000")), fixed=fixed)
        if ty == "ptr":
            count = int(kv["count"], 0)
            extents = tuple(int(t) for t in kv["extents"].split("x")) \
                if "extents" in kv else (count,)
            seed = kv.get("seed", "zeros")
            seed_fill, seed_hex, seed_float, seed_int = "zeros", "", 0.0, 0
            if seed == "zeros" or seed == "seq":
                seed_fill = seed
            elif seed.startswith("const:"):
                seed_fill = "const"
                if elem == "f32":
                    seed_float = float(seed[6:])
                else:
                    seed_int = int(seed[6:], 0)
            elif seed.startswith("hex:"):
                seed_fill, seed_hex = "hex", seed[4:]
            else:
                raise ManifestSyntaxError(lineno, f"unknown array seed {seed!r}")
            ext_n = 1
            for e in extents:
                ext_n *= e
            if ext_n != count:
                raise ManifestSyntaxError(lineno, "extents do not multiply to count")
            return ArgSpec(name, ScalarType.PTR, elem=elem, count=count,
                           extents=extents, space=space, seed_fill=seed_fill,
                           seed_hex=seed_hex, seed_float=seed_float, seed_int=seed_int,
                           flo=float(kv.get("flo", "-1000")),
                           fhi=float(kv.get("fhi", "1000")),
                           lo=int(kv.get("lo", str(-(1 << 31))), 0),
                           hi=int(kv.get("hi", str((1 << 31) - 1)), 0), fixed=fixed)
    except (KeyError, ValueError) as exc:
        raise ManifestSyntaxError(lineno, f"bad argspec: {exc}") from None
    raise ManifestSyntaxError(lineno, f"unknown argspec type {ty!r}")


def _parse_binding(tok: str, lineno: int) -> tuple:
    form, _, rest = tok.partition(":")
    if form == "arg":
        return ("arg", int(rest))
    if form == "buf":
        return ("buf", rest)
    if form == "lit":
        ty, _, lit = rest.partition(":")
        if ty == "i32":
            return ("lit_i32", int(lit, 0))
        if ty == "f32":
            return ("lit_f32", float(lit))
    raise ManifestSyntaxError(lineno, f"bad launch binding {tok!r}")


def _parse_host_op(line: str, lineno: int) -> HostOp:
    toks = line.split()
    kind = toks[0]
    if kind == "alloc":
        if len(toks) != 4:
            raise ManifestSyntaxError(lineno, "alloc <name> <space> <bytes>")
        try:
            space = MemSpace(toks[2])
        except ValueError:
            raise ManifestSyntaxError(lineno, f"unknown space {toks[2]!r}") from None
        return HostOp("alloc", lineno, name=toks[1], space=space, size=int(toks[3], 0))
    if kind == "copy_in":
        if len(toks) != 3:
            raise ManifestSyntaxError(lineno, "copy_in <name> <source>")
        form, _, payload = toks[2].partition(":")
        if form not in ("zeros", "seq32", "hex", "arg"):
            raise ManifestSyntaxError(lineno, f"unknown copy_in source {toks[2]!r}")
        return HostOp("copy_in", lineno, name=toks[1], source=(form, payload))
    if kind == "copy_out":
        if len(toks) == 2 and toks[1].startswith("arg:"):
            return HostOp("copy_out", lineno, arg_ref=int(toks[1][4:]))
        if len(toks) == 3:
            return HostOp("copy_out", lineno, name=toks[1], size=int(toks[2], 0))
        raise ManifestSyntaxError(lineno, "copy_out arg:<k> | copy_out <name> <len>")
    if kind == "free":
        if len(toks) != 2:
            raise ManifestSyntaxError(lineno, "free <name>")
        return HostOp("free", lineno, name=toks[1])
    if kind == "launch":
        kv = {}
        if len(toks) < 2:
            raise ManifestSyntaxError(lineno, "launch <kernel> grid=<n> block=<n> args=...")
        for tok in toks[2:]:
            k, _, v = tok.partition("=")
            kv[k] = v
        try:
            bindings = tuple(_parse_binding(b, lineno) for b in kv.get("args", "").split(",")) \
                if kv.get("args") else ()
            return HostOp("launch", lineno, kernel=toks[1], grid=int(kv["grid"]),
                          block=int(kv["block"]), bindings=bindings)
        except (KeyError, ValueError) as exc:
            raise ManifestSyntaxError(lineno, f"bad launch: {exc}") from None
    if kind == "sync":
        return HostOp("sync", lineno)
    raise ManifestSyntaxError(lineno, f"unknown host op {kind!r}")


def load_harness(path) -> HarnessManifest:
    """Parse and statically validate a harness manifest."""
    path = Path(path)
    try:
        raw = path.read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest: {exc}") from exc
    program_rel: str | None = None
    argspecs: list[ArgSpec] = []
    phases: dict[str, list[HostOp]] = {INIT: [], COMPUTE: [], TERM: []}
    section: str | None = None
    norm_lines: list[str] = []
    for lineno, rawline in enumerate(raw.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        norm_lines.append(line)
        if line.endswith(":") and line[:-1] in phases:
            section = line[:-1]
            continue
        toks = line.split()
        if toks[0] == "program":
            if len(toks) != 2:
                raise ManifestSyntaxError(lineno, "program <path>")
            program_rel = toks[1]
            norm_lines.pop()    # the path is a location detail; the normalized
            continue            # form pins the program by content digest instead
        if toks[0] == "argspec":
            if section is not None:
                raise ManifestSyntaxError(lineno, "argspec must appear before phases")
            argspecs.append(_parse_argspec(toks[1:], lineno))
            continue
        if section is None:
            raise ManifestSyntaxError(lineno, f"{toks[0]!r} outside any phase section")
        phases[section].append(_parse_host_op(line, lineno))

    if program_rel is None:
        raise ManifestSyntaxError(0, "manifest names no program")
    program_path = (path.parent / program_rel).resolve()
    try:
        source = program_path.read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read program: {exc}") from exc
    program = parse_program(source)
    diags = validate(program)
    if diags:
        raise ManifestError(f"program has {len(diags)} diagnostics; first: {diags[0]}")
    names = {s.name for s in argspecs}
    if len(names) != len(argspecs):
        raise ManifestSyntaxError(0, "duplicate argspec names")

    _validate_semantics(program, argspecs, phases)
    normalized = "\n".join([f"program sha256:{program.digest}"] + norm_lines) + "\n"
    digest = hashlib.sha256(normalized.encode()).hexdigest()[:16]
    return HarnessManifest(path, program_path, print_program(program), program,
                           argspecs, phases, normalized, digest)


def _validate_semantics(program: Program, argspecs: list[ArgSpec],
                        phases: dict[str, list[HostOp]]) -> None:
    arity = len(argspecs)
    referenced: set[int] = set()

    def check_arg(k: int, op: HostOp):
        if not 0 <= k < arity:
            raise ArgArityError(f"line {op.line}: arg:{k} outside argspec arity {arity}")
        referenced.add(k)

    init_allocs = {op.name for op in phases[INIT] if op.kind == "alloc"}
    seen: dict[str, set[str]] = {INIT: set(init_allocs)}
    seen[COMPUTE] = set(init_allocs) | {op.name for op in phases[COMPUTE]
                                        if op.kind == "alloc"}
    seen[TERM] = set(seen[COMPUTE])
    for phase, ops in phases.items():
        live: set[str] = set()
        for op in ops:
            if op.kind == "alloc":
                live.add(op.name)
            elif op.kind in ("copy_in", "copy_out", "free") and op.name:
                if op.name not in seen[phase]:
                    if op.kind == "free":
                        raise DanglingFreeError(
                            f"line {op.line}: free of never-allocated {op.name!r}")
                    raise ManifestSyntaxError(op.line, f"unknown buffer {op.name!r}")
            if op.kind == "copy_in" and op.source[0] == "arg":
                check_arg(int(op.source[1]), op)
            if op.kind == "copy_out" and op.arg_ref >= 0:
                check_arg(op.arg_ref, op)
            if op.kind == "launch":
                kernel = program.kernels.get(op.kernel)
                if kernel is None:
                    raise UnknownKernelRefError(
                        f"line {op.line}: kernel {op.kernel!r} not in program")
                if len(op.bindings) != len(kernel.params):
                    raise ArgArityError(
                        f"line {op.line}: {op.kernel} takes {len(kernel.params)} "
                        f"params, {len(op.bindings)} bindings given")
                if op.grid < 1 or op.block < 1:
                    raise ManifestSyntaxError(op.line, "grid and block must be >= 1")
                for binding, param in zip(op.bindings, kernel.params):
                    form = binding[0]
                    if form == "arg":
                        check_arg(binding[1], op)
                        spec = argspecs[binding[1]]
                        if spec.kind != param.type:
                            raise ArgArityError(
                                f"line {op.line}: arg:{binding[1]} is "
                                f"{spec.kind.value}, param {param.name!r} wants "
                                f"{param.type.value}")
                    elif form == "buf":
                        if param.type != ScalarType.PTR:
                            raise ArgArityError(
                                f"line {op.line}: buf binding on non-pointer param "
                                f"{param.name!r}")
                        if binding[1] not in seen[phase]:
                            raise ManifestSyntaxError(
                                op.line, f"unknown buffer {binding[1]!r}")
                    elif form == "lit_i32" and param.type != ScalarType.I32:
                        raise ArgArityError(
                            f"line {op.line}: i32 literal on {param.type.value} param")
                    elif form == "lit_f32" and param.type != ScalarType.F32:
                        raise ArgArityError(
                            f"line {op.line}: f32 literal on {param.type.value} param")

    if not any(op.kind == "launch" for op in phases[COMPUTE]):
        raise ManifestSyntaxError(0, "compute phase has no launch")
    term_frees = {op.name for op in phases[TERM] if op.kind == "free"}
    missing = init_allocs - term_frees
    if missing:
        raise ManifestSyntaxError(0, f"term does not free: {sorted(missing)}")
    stray = term_frees - init_allocs
    if stray:
        raise DanglingFreeError(f"term frees non-init buffers: {sorted(stray)}")
    unused = set(range(arity)) - referenced
    if unused:
        raise ArgArityError(f"argspecs never referenced: {sorted(unused)}")


# -- phase execution ------------------------------------------------------------------


@dataclass
class PhaseOutcome:
    status: str                          # ok | finding | budget
    report: BugReport | None = None
    retired: int = 0
    launches: int = 0
    readouts: dict[str, bytes] = field(default_factory=dict)


def _scalar_bytes(value) -> bytes:
    if isinstance(value, IntValue):
        return _PACK_I.pack(value.value)
    if isinstance(value, FloatValue):
        return struct.pack("<I", value.bits)
    return value.data


class PhaseRunner:
    """Executes manifest phases against one image, materializing array
    arguments per launch and funneling every transfer through the sanitizer."""

    def __init__(self, manifest: HarnessManifest, image: DeviceMemoryImage, *,
                 sanitize: bool = True, hooks: ExecHooks | None = None,
                 instruction_budget: int = 1_000_000, diff_readback: bool = False):
        self.manifest = manifest
        self.image = image
        self.sanitize = sanitize
        self.hooks = hooks
        self.budget = instruction_budget
        self.diff_readback = diff_readback
        self.named: dict[str, tuple[int, int]] = {}
        self._baseline_named: dict[str, tuple[int, int]] | None = None
        self.materialized: dict[int, tuple[int, int, int]] = {}  # arg -> (addr, id, len)

    def mark_baseline(self) -> None:
        self._baseline_named = dict(self.named)

    def reset_to_baseline(self) -> None:
        if self._baseline_named is None:
            raise CampaignFatalError("reset before baseline was marked")
        self.named = dict(self._baseline_named)
        self.materialized = {}

    # argument materialization ------------------------------------------------

    def _materialize(self, k: int, value: ArrayValue):
        size = value.size_override if value.size_override is not None else len(value.data)
        if size <= 0:
            addr, aid = self.image.alloc_empty(value.space, label=f"arg{k}")
            payload = b""
        else:
            addr, aid = self.image.alloc(value.space, size, label=f"arg{k}")
            payload = value.data[:size]
        report = self.image.copy_in(addr, payload) if payload else None
        self.materialized[k] = (addr, aid, len(value.data))
        return addr, aid, report

    def _bind_launch(self, op: HostOp, tc: TestCase, iteration: int):
        kernel = self.manifest.program.kernels[op.kernel]
        args: list[ArgValue] = []
        for binding, param in zip(op.bindings, kernel.params):
            form = binding[0]
            if form == "lit_i32":
                args.append(ArgValue(ScalarType.I32, binding[1]))
            elif form == "lit_f32":
                args.append(ArgValue(ScalarType.F32, binding[1]))
            elif form == "buf":
                addr, aid = self.named[binding[1]]
                args.append(ArgValue(ScalarType.PTR, addr, aid))
            else:
                k = binding[1]
                value = tc.args[k]
                if isinstance(value, ArrayValue):
                    if k in self.materialized:
                        addr, aid, _ = self.materialized[k]
                    else:
                        addr, aid, report = self._materialize(k, value)
                        if report is not None:
                            return None, report
                    args.append(ArgValue(ScalarType.PTR, addr + value.base_offset, aid))
                elif isinstance(value, IntValue):
                    args.append(ArgValue(ScalarType.I32, value.value))
                else:
                    args.append(ArgValue(ScalarType.F32, value.value))
        return args, None

    # phase loop -----------------------------------------------------------------

    def run_phase(self, phase: str, tc: TestCase, *, coverage: CoverageMap | None = None,
                  iteration: int = -1) -> PhaseOutcome:
        out = PhaseOutcome("ok")
        image = self.image
        image.iteration = iteration
        if phase == COMPUTE:
            self.materialized = {}
        for op in self.manifest.phases[phase]:
            kind = op.kind
            if kind == "sync":
                continue
            if kind == "alloc":
                addr_id = image.alloc(op.space, op.size, label=op.name)
                self.named[op.name] = addr_id
            elif kind == "copy_in":
                addr, _ = self.named[op.name]
                form, payload = op.source
                if form == "zeros":
                    data = bytes(int(payload, 0))
                elif form == "seq32":
                    n = int(payload, 0)
                    data = np.arange(n, dtype="<u4").tobytes()
                elif form == "hex":
                    data = bytes.fromhex(payload)
                else:
                    data = _scalar_bytes(tc.args[int(payload)])
                report = image.copy_in(addr, data)
                if report is not None:
                    report.iteration = iteration
                    out.status, out.report = "finding", report
                    return out
            elif kind == "copy_out":
                if op.arg_ref >= 0:
                    if phase == COMPUTE and not self.diff_readback:
                        continue
                    if op.arg_ref not in self.materialized:
                        continue  # launch never ran (earlier stop)
                    addr, _aid, length = self.materialized[op.arg_ref]
                    data, report = image.copy_out(addr, length)
                    key = f"arg{op.arg_ref}"
                else:
                    addr, _ = self.named[op.name]
                    data, report = image.copy_out(addr, op.size)
                    key = op.name
                if report is not None:
                    report.iteration = iteration
                    out.status, out.report = "finding", report
                    return out
                out.readouts[key] = data
            elif kind == "free":
                addr, _ = self.named[op.name]
                try:
                    image.free(addr)
                except InvalidFreeError as exc:
                    if phase == TERM and exc.reason == "allocation already freed":
                        continue  # freed during compute; teardown is idempotent
                    report = invalid_free_report(image, addr, exc.reason,
                                                 iteration=iteration)
                    out.status, out.report = "finding", report
                    return out
            elif kind == "launch":
                args, report = self._bind_launch(op, tc, iteration)
                if report is not None:
                    report.iteration = iteration
                    out.status, out.report = "finding", report
                    return out
                cfg = LaunchConfig(op.kernel, op.grid, op.block, args, self.budget)
                result: ExecOutcome = launch(self.manifest.program, image, cfg,
                                             coverage=coverage, hooks=self.hooks,
                                             sanitize=self.sanitize, iteration=iteration)
                out.retired += result.retired
                out.launches += 1
                if result.status == ExecStatus.SANITIZER_STOP:
                    out.status, out.report = "finding", result.report
                    return out
                if result.status == ExecStatus.BUDGET_EXHAUSTED:
                    out.status = "budget"
                    return out
        return out


# -- corpus and scheduling ----------------------------------------------------------


@dataclass
class CorpusEntry:
    tc: TestCase
    admitted_iteration: int
    is_seed: bool


@dataclass
class Corpus:
    entries: list[CorpusEntry] = field(default_factory=list)

    def add_seed(self, tc: TestCase) -> None:
        self.entries.append(CorpusEntry(tc, 0, True))

    def admit(self, tc: TestCase, iteration: int) -> None:
        self.entries.append(CorpusEntry(tc, iteration, False))

    @property
    def seeds(self) -> int:
        return sum(1 for e in self.entries if e.is_seed)

    @property
    def interesting(self) -> int:
        return sum(1 for e in self.entries if not e.is_seed)


def schedule_next(corpus: Corpus, rng: Stream, current_iteration: int, *,
                  window: int = 256, recent_weight: float = 4.0) -> TestCase:
    """Weighted parent pick: entries admitted within the window weigh
    recent_weight, everything else weighs 1."""
    entries = corpus.entries
    if not entries:
        raise CampaignFatalError("empty corpus")
    weights = [recent_weight if (not e.is_seed and
                                 current_iteration - e.admitted_iteration <= window)
               else 1.0 for e in entries]
    return rng.weighted_choice(entries, weights).tc


# -- campaign -----------------------------------------------------------------------


@dataclass
class CampaignConfig:
    master_seed: int = 1
    iterations: int = 1000
    workers: int = 1
    mode: str = "amortized"              # amortized | reinit
    out_dir: Path | None = None
    stop_on_first_finding: bool = False
    stop_bug_class: BugClass | str | None = None
    max_wall_seconds: float | None = None
    instruction_budget: int = 1_000_000
    mem_config: MemConfig = field(default_factory=MemConfig)
    mutation: MutationConfig = field(default_factory=MutationConfig)
    admission_window: int = 256
    recent_weight: float = 4.0
    diff_readback: bool = False
    hooks: ExecHooks | None = None


@dataclass
class CampaignSummary:
    master_seed: int
    iterations_requested: int
    iterations_executed: int
    workers: int
    mode: str
    program_digest: str
    manifest_digest: str
    argspec_digest: str
    findings: FindingsLog
    coverage: CoverageMap
    corpus: Corpus
    stop_reason: str
    init_runs: int
    compute_runs: int
    term_runs: int
    wall_seconds: float
    out_dir: Path | None

    @property
    def execs_per_second(self) -> float:
        if self.wall_seconds <= 0:
            return 0.0
        return self.compute_runs / self.wall_seconds

    def to_rec(self) -> str:
        lines = [
            "summary v1",
            f"master_seed={self.master_seed} workers={self.workers} mode={self.mode}",
            f"iterations_requested={self.iterations_requested} "
            f"iterations_executed={self.iterations_executed}",
            f"program={self.program_digest} manifest={self.manifest_digest} "
            f"argspec={self.argspec_digest}",
            f"findings_unique={len(self.findings)} findings_total={self.findings.total}",
            f"corpus_seeds={self.corpus.seeds} corpus_interesting={self.corpus.interesting}",
            f"init_runs={self.init_runs} compute_runs={self.compute_runs} "
            f"term_runs={self.term_runs}",
            f"stop={self.stop_reason}",
        ]
        return "\n".join(lines) + "\n"


def _worker_ranges(total: int, workers: int) -> list[range]:
    base = total // workers
    rem = total % workers
    ranges = []
    start = 1
    for w in range(workers):
        count = base + (1 if w < rem else 0)
        ranges.append(range(start, start + count))
        start += count
    return ranges


def fuzz_loop(manifest: HarnessManifest, config: CampaignConfig) -> CampaignSummary:
    """Run a campaign; returns the summary (and writes artifacts when out_dir set)."""
    if config.mode not in ("amortized", "reinit"):
        raise CampaignFatalError(f"unknown mode {config.mode!r}")
    if config.workers < 1 or config.iterations < 1:
        raise CampaignFatalError("workers and iterations must be >= 1")
    out_dir = Path(config.out_dir) if config.out_dir is not None else None
    if out_dir is not None:
        (out_dir / "corpus").mkdir(parents=True, exist_ok=True)
        (out_dir / "crashes").mkdir(parents=True, exist_ok=True)
        (out_dir / "program.sir").write_text(manifest.program_text)
        (out_dir / "harness.man").write_text(manifest.portable_text("program.sir"))

    specs = manifest.argspecs
    findings = FindingsLog()
    global_cov = CoverageMap.for_program(manifest.program)
    corpus = Corpus()
    seed_tc = manifest.seed(config.master_seed)
    corpus.add_seed(seed_tc)
    if out_dir is not None:
        _write_corpus_entry(out_dir, seed_tc, specs)

    stop_reason = "iterations"
    executed = 0
    init_runs = compute_runs = term_runs = 0
    t_start = time.perf_counter()
    deadline = t_start + config.max_wall_seconds if config.max_wall_seconds else None

    try:
        for w, iter_range in enumerate(_worker_ranges(config.iterations, config.workers)):
            if stop_reason != "iterations":
                break
            worker_stream = Stream(config.master_seed, 1000 + w)
            schedule = MutationSchedule(config.mutation)
            if config.mode == "amortized":
                image = DeviceMemoryImage(config.mem_config,
                                          rng=Stream(config.master_seed, 2000 + w))
                runner = PhaseRunner(manifest, image, hooks=config.hooks,
                                     instruction_budget=config.instruction_budget,
                                     diff_readback=config.diff_readback)
                init_out = runner.run_phase(INIT, seed_tc, iteration=0)
                init_runs += 1
                if init_out.status != "ok":
                    raise CampaignFatalError(
                        f"init phase failed on the seed input: {init_out.status}")
                runner.mark_baseline()
                snap = image.snapshot()

                for it in iter_range:
                    if deadline is not None and time.perf_counter() > deadline:
                        stop_reason = "wall_clock"
                        break
                    image.restore(snap)
                    runner.reset_to_baseline()
                    # the very first iteration evaluates the recorded seed
                    # input itself; mutation starts from iteration 2
                    if it == 1:
                        child = seed_tc
                    else:
                        parent = schedule_next(corpus, worker_stream, it,
                                               window=config.admission_window,
                                               recent_weight=config.recent_weight)
                        child = mutate_testcase(parent, specs, schedule, worker_stream)
                    delta = global_cov.fresh()
                    out = runner.run_phase(COMPUTE, child, coverage=delta, iteration=it)
                    compute_runs += 1
                    executed += 1
                    stop = _absorb_iteration(out, child, specs, corpus, findings,
                                             global_cov, delta, it, out_dir, manifest,
                                             config, is_seed=it == 1)
                    if stop:
                        stop_reason = stop
                        break
                image.restore(snap)
                runner.reset_to_baseline()
                term_out = runner.run_phase(TERM, seed_tc, iteration=-1)
                term_runs += 1
                if term_out.report is not None:
                    _register_finding(findings, term_out.report, seed_tc, specs,
                                      out_dir, manifest)
            else:
                for it in iter_range:
                    if deadline is not None and time.perf_counter() > deadline:
                        stop_reason = "wall_clock"
                        break
                    # the comparison baseline repeats the whole device setup
                    # every iteration: fresh image, full INIT, and a TERM
                    image = DeviceMemoryImage(config.mem_config,
                                              rng=Stream(config.master_seed, 2000 + w))
                    runner = PhaseRunner(manifest, image, hooks=config.hooks,
                                         instruction_budget=config.instruction_budget,
                                         diff_readback=config.diff_readback)
                    init_out = runner.run_phase(INIT, seed_tc, iteration=it)
                    init_runs += 1
                    if init_out.status != "ok":
                        raise CampaignFatalError(
                            f"init phase failed on the seed input: {init_out.status}")
                    if it == 1:
                        child = seed_tc
                    else:
                        parent = schedule_next(corpus, worker_stream, it,
                                               window=config.admission_window,
                                               recent_weight=config.recent_weight)
                        child = mutate_testcase(parent, specs, schedule, worker_stream)
                    delta = global_cov.fresh()
                    out = runner.run_phase(COMPUTE, child, coverage=delta, iteration=it)
                    compute_runs += 1
                    executed += 1
                    stop = _absorb_iteration(out, child, specs, corpus, findings,
                                             global_cov, delta, it, out_dir, manifest,
                                             config, is_seed=it == 1)
                    term_out = runner.run_phase(TERM, seed_tc, iteration=it)
                    term_runs += 1
                    if term_out.report is not None:
                        _register_finding(findings, term_out.report, child, specs,
                                          out_dir, manifest)
                    if stop:
                        stop_reason = stop
                        break
    except CampaignFatalError:
        if out_dir is not None:
            (out_dir / "FAILED").write_text("campaign fatal\n")
        raise

    wall = time.perf_counter() - t_start
    summary = CampaignSummary(
        config.master_seed, config.iterations, executed, config.workers, config.mode,
        manifest.program_digest, manifest.digest, argspec_digest(specs), findings,
        global_cov, corpus, stop_reason, init_runs, compute_runs, term_runs, wall,
        out_dir)
    if out_dir is not None:
        report = build_report(global_cov)
        (out_dir / "coverage.txt").write_text(render_text(report))
        (out_dir / "coverage.rec").write_text(report_to_rec(report))
        (out_dir / "findings.txt").write_text(findings.render_text())
        (out_dir / "summary.rec").write_text(summary.to_rec())
        (out_dir / "timing.rec").write_text(
            f"timing v1\nwall_seconds={wall:.6f} "
            f"execs_per_second={summary.execs_per_second:.2f}\n")
    return summary


def _absorb_iteration(out: PhaseOutcome, child: TestCase, specs, corpus: Corpus,
                      findings: FindingsLog, global_cov: CoverageMap,
                      delta: CoverageMap, iteration: int, out_dir: Path | None,
                      manifest: HarnessManifest, config: CampaignConfig,
                      is_seed: bool = False) -> str | None:
    fresh = new_edges_since(delta, global_cov)
    global_cov.merge_from(delta)
    if out.report is not None:
        out.report.iteration = iteration
        _register_finding(findings, out.report, child, specs, out_dir, manifest)
        if config.stop_on_first_finding:
            return "first_finding"
        want = config.stop_bug_class
        if want is not None:
            want = want.value if isinstance(want, BugClass) else str(want)
            if out.report.bug_class.value == want:
                return f"bug_class:{want}"
    elif fresh and not is_seed:
        corpus.admit(child, iteration)
        if out_dir is not None:
            _write_corpus_entry(out_dir, child, specs)
    return None


def _write_corpus_entry(out_dir: Path, tc: TestCase, specs) -> None:
    (out_dir / "corpus" / f"{tc.id}.tc").write_text(serialize_testcase(tc, specs))


def _register_finding(findings: FindingsLog, report: BugReport, tc: TestCase,
                      specs, out_dir: Path | None, manifest: HarnessManifest) -> bool:
    is_new = findings.add(report)
    if is_new and out_dir is not None:
        extra = [
            f"crash class={report.bug_class.value} dedupe={report.dedupe_key} "
            f"kernel={report.kernel} iid={report.iid} addr=0x{report.address:x} "
            f"width={report.width} iteration={report.iteration}",
            f"origin harness=../harness.man program={manifest.program_digest} "
            f"manifest={manifest.digest}",
        ]
        text = serialize_testcase(tc, specs, extra=extra)
        (out_dir / "crashes" / f"{report.dedupe_key}.tc").write_text(text)
    return is_new


# -- one-shot execution and replay ----------------------------------------------------


def execute_once(manifest: HarnessManifest, tc: TestCase, *,
                 mem_config: MemConfig | None = None, sanitize: bool = True,
                 instruction_budget: int = 1_000_000, diff_readback: bool = False,
                 hooks: ExecHooks | None = None, coverage: CoverageMap | None = None,
                 image_seed: int = 1, run_term: bool = False):
    """INIT with the seed input, COMPUTE with tc (optionally TERM); returns
    (compute outcome, image)."""
    image = DeviceMemoryImage(mem_config or MemConfig(), rng=Stream(image_seed, 2000))
    runner = PhaseRunner(manifest, image, sanitize=sanitize, hooks=hooks,
                         instruction_budget=instruction_budget,
                         diff_readback=diff_readback)
    seed_tc = manifest.seed(image_seed)
    init_out = runner.run_phase(INIT, seed_tc, iteration=0)
    if init_out.status != "ok":
        raise CampaignFatalError(f"init phase failed: {init_out.status}")
    runner.mark_baseline()
    out = runner.run_phase(COMPUTE, tc, coverage=coverage, iteration=0)
    if run_term and out.status == "ok":
        runner.run_phase(TERM, seed_tc, iteration=-1)
    return out, image


@dataclass
class ReplayResult:
    reproduced: bool
    expected_dedupe: str
    expected_class: str
    report: BugReport | None


def replay(artifact_path, *, hooks: ExecHooks | None = None) -> ReplayResult:
    """Re-execute a crash artifact against its recorded harness and compare
    the finding's dedupe key."""
    artifact_path = Path(artifact_path)
    text = artifact_path.read_text()
    tc, extra = parse_testcase(text)
    if "crash" not in extra or "origin" not in extra:
        raise ManifestError("artifact has no crash/origin records")
    crash_kv = dict(tok.split("=", 1) for tok in extra["crash"].split()[1:])
    origin_kv = dict(tok.split("=", 1) for tok in extra["origin"].split()[1:])
    manifest = load_harness((artifact_path.parent / origin_kv["harness"]).resolve())
    if manifest.program_digest != origin_kv["program"]:
        raise DigestMismatchError(
            f"program digest {manifest.program_digest} != recorded "
            f"{origin_kv['program']}")
    if manifest.digest != origin_kv["manifest"]:
        raise DigestMismatchError(
            f"manifest digest {manifest.digest} != recorded {origin_kv['manifest']}")
    parse_testcase(text, manifest.argspecs)  # re-check against the argspec digest
    out, _image = execute_once(manifest, tc, hooks=hooks)
    report = out.report
    reproduced = report is not None and report.dedupe_key == crash_kv["dedupe"]
    return ReplayResult(reproduced, crash_kv["dedupe"], crash_kv["class"], report)
