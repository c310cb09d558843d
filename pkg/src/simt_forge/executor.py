"""Deterministic SIMT kernel execution.

Launches run block-major, thread-major: every thread of block 0 runs to
completion before block 1 starts, and each thread is interpreted sequentially.
No warp scheduling or interleaving is modeled, so a launch is a pure function
of (program, image, launch config) and replays bit-identically.

Per instruction the interpreter:
  * wraps i32 arithmetic to two's complement,
  * rounds every f32 result (and f32 immediate) to binary32 -- addition,
    subtraction, and multiplication of binary32 values computed in double
    precision round-trip exactly, so results match native f32 hardware,
  * propagates pointer provenance tags through mov/add/sub,
  * routes every ld/st through the sanitizer and the optional hook surface,
  * reports block-to-block transitions to the coverage map.

The first finding stops the whole launch (first-bug-stop); a per-thread
retired-instruction budget bounds runaway control flow.
"""

from __future__ import annotations

import ctypes
import math
import struct
from dataclasses import dataclass, field
from enum import Enum

from .coverage import CoverageMap
from .device_memory import DeviceMemoryImage
from .kernel_ir import KernelDef, MemSpace, Opcode, Program, ScalarType
from .sanitizer import BugReport, check_access

_I32_MIN = -(1 << 31)
_U32 = 0xFFFFFFFF
_PACK_F = struct.Struct("<f")
_PACK_I = struct.Struct("<i")
_PACK_Q = struct.Struct("<Q")
_PACK_H = struct.Struct("<H")


def f32(x: float) -> float:
    """Round a python float to the nearest binary32 value (inf on overflow)."""
    return ctypes.c_float(x).value


def wrap_i32(v: int) -> int:
    return ((v + (1 << 31)) & _U32) + _I32_MIN


def cvt_f32_to_i32(v: float) -> int:
    """Round-to-nearest-even, NaN to 0, clamped to the i32 range."""
    if math.isnan(v):
        return 0
    if v >= 2147483647.0:
        return 2147483647
    if v <= -2147483648.0:
        return -2147483648
    f = math.floor(v)
    frac = v - f
    if frac > 0.5:
        f += 1
    elif frac == 0.5 and f & 1:
        f += 1
    return int(f)


class ExecStatus(Enum):
    COMPLETED = "COMPLETED"
    SANITIZER_STOP = "SANITIZER_STOP"
    BUDGET_EXHAUSTED = "BUDGET_EXHAUSTED"


class LaunchError(Exception):
    pass


class UnknownKernelError(LaunchError):
    pass


class LaunchArityError(LaunchError):
    pass


@dataclass
class ArgValue:
    type: ScalarType
    value: int | float
    prov: int | None = None  # alloc_id tag for PTR args


@dataclass
class LaunchConfig:
    kernel: str
    grid_dim: int
    block_dim: int
    args: list[ArgValue]
    instruction_budget: int = 1_000_000


@dataclass
class ExecOutcome:
    status: ExecStatus
    report: BugReport | None
    retired: int
    threads_completed: int


class ExecHooks:
    """Instrumentation surface; override what you need."""

    def on_mem_access(self, kernel: str, iid: int, ctaid: int, tid: int,
                      space: MemSpace, addr: int, width: int, is_store: bool) -> None:
        pass

    def on_control_flow(self, kernel: str, ctaid: int, tid: int,
                        src_block: int, dst_block: int) -> None:
        pass


class TraceHooks(ExecHooks):
    """Event-stream instrumentation: one 'EV mem ...' / 'EV cf ...' line per event."""

    def __init__(self, sink):
        self.sink = sink  # any object with a write(str) method

    def on_mem_access(self, kernel, iid, ctaid, tid, space, addr, width, is_store):
        self.sink.write(f"EV mem kernel={kernel} iid={iid} ctaid={ctaid} tid={tid} "
                        f"space={space.value} addr=0x{addr:x} width={width} "
                        f"store={int(is_store)}\n")

    def on_control_flow(self, kernel, ctaid, tid, src_block, dst_block):
        self.sink.write(f"EV cf kernel={kernel} ctaid={ctaid} tid={tid} "
                        f"src={src_block} dst={dst_block}\n")


@dataclass
class ThreadCtx:
    kernel: KernelDef
    ctaid: int
    tid: int
    nctaid: int
    ntid: int
    pc: int = 0
    retired: int = 0
    done: bool = False
    r: list[int] = field(default_factory=list)
    f: list[float] = field(default_factory=list)
    p: list[bool] = field(default_factory=list)
    a: list[int] = field(default_factory=list)
    aprov: list[int | None] = field(default_factory=list)


def read_special(ctx: ThreadCtx, name: str) -> int:
    if name == "tid":
        return ctx.tid
    if name == "ntid":
        return ctx.ntid
    if name == "ctaid":
        return ctx.ctaid
    if name == "nctaid":
        return ctx.nctaid
    raise ValueError(f"unknown special register {name!r}")


def bind_args(kernel: KernelDef, args: list[ArgValue]) -> tuple:
    """Check arity/types and return per-class preload lists (r, f, a, aprov)."""
    if len(args) != len(kernel.params):
        raise LaunchArityError(
            f"{kernel.name} expects {len(kernel.params)} args, got {len(args)}")
    pre_r: list[int] = []
    pre_f: list[float] = []
    pre_a: list[int] = []
    pre_prov: list[int | None] = []
    for param, arg in zip(kernel.params, args):
        if arg.type != param.type:
            raise LaunchArityError(
                f"{kernel.name} param {param.name!r} is {param.type.value}, "
                f"got {arg.type.value}")
        if param.type == ScalarType.I32:
            pre_r.append(wrap_i32(int(arg.value)))
        elif param.type == ScalarType.F32:
            pre_f.append(f32(float(arg.value)))
        else:
            pre_a.append(int(arg.value))
            pre_prov.append(arg.prov)
    return pre_r, pre_f, pre_a, pre_prov


def make_thread(kernel: KernelDef, ctaid: int, tid: int, nctaid: int, ntid: int,
                preload: tuple) -> ThreadCtx:
    n = kernel.register_count
    ctx = ThreadCtx(kernel, ctaid, tid, nctaid, ntid,
                    r=[0] * n, f=[0.0] * n, p=[False] * n, a=[0] * n,
                    aprov=[None] * n)
    pre_r, pre_f, pre_a, pre_prov = preload
    ctx.r[:len(pre_r)] = pre_r
    ctx.f[:len(pre_f)] = pre_f
    ctx.a[:len(pre_a)] = pre_a
    ctx.aprov[:len(pre_prov)] = pre_prov
    return ctx


_CONTINUE = 0
_EXITED = 1
_STOPPED = 2


def _exec_one(ctx: ThreadCtx, image: DeviceMemoryImage, coverage: CoverageMap | None,
              hooks: ExecHooks | None, sanitize: bool, iteration: int):
    """Run one instruction; returns (_CONTINUE|_EXITED|_STOPPED, report)."""
    kernel = ctx.kernel
    instrs = kernel.instructions
    ins = instrs[ctx.pc]
    op = ins.opcode
    ctx.retired += 1

    if op == Opcode.EXIT:
        ctx.done = True
        return _EXITED, None

    if op == Opcode.BRA:
        if ins.pred is None:
            taken = True
        else:
            taken = ctx.p[ins.pred[1]] != ins.pred_negate
        npc = ins.target_iid if taken else ctx.pc + 1
        src_b = ins.block
        dst_b = instrs[npc].block
        if coverage is not None:
            coverage.record_edge(kernel.name, src_b, dst_b)
        if hooks is not None:
            hooks.on_control_flow(kernel.name, ctx.ctaid, ctx.tid, src_b, dst_b)
        ctx.pc = npc
        return _CONTINUE, None

    if op in (Opcode.LD, Opcode.ST):
        base, off = ins.addr
        bidx = base[1]
        addr = ctx.a[bidx] + off
        width = ins.width
        is_store = op == Opcode.ST
        if hooks is not None:
            hooks.on_mem_access(kernel.name, ins.iid, ctx.ctaid, ctx.tid,
                                ins.space, addr, width, is_store)
        if sanitize:
            report = check_access(image, addr, width, ins.space, ctx.aprov[bidx],
                                  kernel=kernel.name, iid=ins.iid, ctaid=ctx.ctaid,
                                  tid=ctx.tid, is_store=is_store, iteration=iteration)
            if report is not None:
                return _STOPPED, report
        kind = ins.mem_kind
        if is_store:
            src = ins.srcs[0]
            if kind == "f32":
                v = ctx.f[src[1]] if isinstance(src, tuple) else f32(float(src))
                raw = _PACK_F.pack(v)
            elif kind == "b32":
                v = ctx.r[src[1]] if isinstance(src, tuple) else wrap_i32(int(src))
                raw = _PACK_I.pack(v)
            elif kind == "b64":
                raw = _PACK_Q.pack(ctx.a[src[1]] & 0xFFFFFFFFFFFFFFFF)
            elif kind == "b16":
                v = ctx.r[src[1]] if isinstance(src, tuple) else int(src)
                raw = _PACK_H.pack(v & 0xFFFF)
            else:  # b8
                v = ctx.r[src[1]] if isinstance(src, tuple) else int(src)
                raw = bytes([v & 0xFF])
            image.write_raw(addr, raw)
        else:
            raw = image.read_raw(addr, width)
            didx = ins.dst[1]
            if kind == "f32":
                ctx.f[didx] = _PACK_F.unpack(raw)[0]
            elif kind == "b32":
                ctx.r[didx] = _PACK_I.unpack(raw)[0]
            elif kind == "b64":
                ctx.a[didx] = _PACK_Q.unpack(raw)[0]
                ctx.aprov[didx] = None
            elif kind == "b16":
                ctx.r[didx] = _PACK_H.unpack(raw)[0]
            else:
                ctx.r[didx] = raw[0]
    elif op == Opcode.MOV:
        dcls, didx = ins.dst
        src = ins.srcs[0]
        if dcls == "r":
            ctx.r[didx] = ctx.r[src[1]] if isinstance(src, tuple) else wrap_i32(int(src))
        elif dcls == "f":
            ctx.f[didx] = ctx.f[src[1]] if isinstance(src, tuple) else f32(float(src))
        elif dcls == "a":
            if isinstance(src, tuple):
                ctx.a[didx] = ctx.a[src[1]]
                ctx.aprov[didx] = ctx.aprov[src[1]]
            else:
                ctx.a[didx] = int(src)
                ctx.aprov[didx] = None
        else:
            ctx.p[didx] = ctx.p[src[1]]
    elif op in (Opcode.ADD, Opcode.SUB, Opcode.MUL):
        dcls, didx = ins.dst
        s1, s2 = ins.srcs
        if dcls == "a":
            delta = ctx.r[s2[1]] if isinstance(s2, tuple) else int(s2)
            base_val = ctx.a[s1[1]]
            ctx.a[didx] = base_val + delta if op == Opcode.ADD else base_val - delta
            ctx.aprov[didx] = ctx.aprov[s1[1]]
        else:
            v1 = ctx.r[s1[1]] if isinstance(s1, tuple) else int(s1)
            v2 = ctx.r[s2[1]] if isinstance(s2, tuple) else int(s2)
            if op == Opcode.ADD:
                v = v1 + v2
            elif op == Opcode.SUB:
                v = v1 - v2
            else:
                v = v1 * v2
            ctx.r[didx] = ((v + (1 << 31)) & _U32) + _I32_MIN
    elif op in (Opcode.FADD, Opcode.FSUB, Opcode.FMUL):
        didx = ins.dst[1]
        s1, s2 = ins.srcs
        v1 = ctx.f[s1[1]] if isinstance(s1, tuple) else f32(float(s1))
        v2 = ctx.f[s2[1]] if isinstance(s2, tuple) else f32(float(s2))
        if op == Opcode.FADD:
            v = v1 + v2
        elif op == Opcode.FSUB:
            v = v1 - v2
        else:
            v = v1 * v2
        ctx.f[didx] = ctypes.c_float(v).value
    elif op == Opcode.SETP:
        s1, s2 = ins.srcs
        if (isinstance(s1, tuple) and s1[0] == "f") or isinstance(s1, float) or \
           (isinstance(s2, tuple) and s2[0] == "f") or isinstance(s2, float):
            v1 = ctx.f[s1[1]] if isinstance(s1, tuple) else f32(float(s1))
            v2 = ctx.f[s2[1]] if isinstance(s2, tuple) else f32(float(s2))
        else:
            v1 = ctx.r[s1[1]] if isinstance(s1, tuple) else int(s1)
            v2 = ctx.r[s2[1]] if isinstance(s2, tuple) else int(s2)
        cmp = ins.cmp
        if cmp == "eq":
            res = v1 == v2
        elif cmp == "ne":
            res = v1 != v2
        elif cmp == "lt":
            res = v1 < v2
        elif cmp == "le":
            res = v1 <= v2
        elif cmp == "gt":
            res = v1 > v2
        else:
            res = v1 >= v2
        ctx.p[ins.dst[1]] = res
    elif op == Opcode.CVT:
        dty, _sty = ins.cvt
        src = ins.srcs[0]
        if dty == ScalarType.F32:
            v = ctx.r[src[1]] if isinstance(src, tuple) else int(src)
            ctx.f[ins.dst[1]] = f32(float(v))
        else:
            v = ctx.f[src[1]] if isinstance(src, tuple) else float(src)
            ctx.r[ins.dst[1]] = cvt_f32_to_i32(v)
    elif op == Opcode.SREG:
        ctx.r[ins.dst[1]] = read_special(ctx, ins.sreg)
    else:  # pragma: no cover - parser admits no other opcodes
        raise AssertionError(op)

    npc = ctx.pc + 1
    nb = instrs[npc].block
    cur_b = ins.block
    if nb != cur_b:
        if coverage is not None:
            coverage.record_edge(kernel.name, cur_b, nb)
        if hooks is not None:
            hooks.on_control_flow(kernel.name, ctx.ctaid, ctx.tid, cur_b, nb)
    ctx.pc = npc
    return _CONTINUE, None


def step(ctx: ThreadCtx, image: DeviceMemoryImage, *, coverage: CoverageMap | None = None,
         hooks: ExecHooks | None = None, sanitize: bool = True, iteration: int = -1):
    """Single-instruction execution; returns (status, report) with status one of
    "continue", "exited", "stopped"."""
    if ctx.done:
        return "exited", None
    code, report = _exec_one(ctx, image, coverage, hooks, sanitize, iteration)
    return ("continue", "exited", "stopped")[code], report


def launch(program: Program, image: DeviceMemoryImage, config: LaunchConfig, *,
           coverage: CoverageMap | None = None, hooks: ExecHooks | None = None,
           sanitize: bool = True, iteration: int = -1) -> ExecOutcome:
    """Run one kernel launch to completion, first finding, or budget exhaustion."""
    kernel = program.kernels.get(config.kernel)
    if kernel is None:
        raise UnknownKernelError(f"no kernel named {config.kernel!r}")
    if config.grid_dim < 1 or config.block_dim < 1:
        raise LaunchError("grid and block dimensions must be >= 1")
    preload = bind_args(kernel, config.args)
    if coverage is not None:
        coverage.record_launch(kernel.name)
    budget = config.instruction_budget
    total_retired = 0
    threads_completed = 0
    for ctaid in range(config.grid_dim):
        for tid in range(config.block_dim):
            ctx = make_thread(kernel, ctaid, tid, config.grid_dim, config.block_dim,
                              preload)
            while True:
                code, report = _exec_one(ctx, image, coverage, hooks, sanitize, iteration)
                if code == _CONTINUE:
                    if ctx.retired >= budget:
                        total_retired += ctx.retired
                        return ExecOutcome(ExecStatus.BUDGET_EXHAUSTED, None,
                                           total_retired, threads_completed)
                    continue
                if code == _EXITED:
                    total_retired += ctx.retired
                    threads_completed += 1
                    break
                total_retired += ctx.retired
                return ExecOutcome(ExecStatus.SANITIZER_STOP, report,
                                   total_retired, threads_completed)
    return ExecOutcome(ExecStatus.COMPLETED, None, total_retired, threads_completed)
