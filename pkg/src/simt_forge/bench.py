"""Bundled benchmark kernels, their harnesses, seeded-bug variants, and scalar
reference implementations.

Eleven vector/reduction kernels ship under benchmarks/<name>/ with a harness
manifest each.  Every benchmark also carries variant directories seeding one
bug class apiece:

  spatial_oob         the harness trusts the length argument; a trigger file
                      pins the boundary value that overruns the buffer
  temporal_uaf        variant kernel + harness: a flag-guarded read of a
                      workspace the compute phase freed
  space_mismatch      trigger swaps an array's placement space under an
                      unchanged kernel
  provenance_escape   trigger biases an array pointer so accesses land in a
                      neighboring live allocation

A trigger file is a short mutation trace; applying it to the harness seed
produces the triggering test case deterministically.

Reference results replicate the executor's arithmetic exactly: one binary32
rounding per operation, threads combined in launch order.  They are the
ground truth for differential checks, so they are written as plain scalar
loops with no vectorization shortcuts.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .campaign import COMPUTE, HarnessManifest, load_harness
from .executor import f32
from .mutation import ArrayValue, IntValue, MutationOp, TestCase, apply_trace

BENCHMARK_NAMES = ("amax", "amin", "asum", "axpy", "copy", "dot", "nrm2",
                   "rot", "rotm", "scal", "swap")
VARIANT_CLASSES = ("spatial_oob", "temporal_uaf", "space_mismatch",
                   "provenance_escape")

_PACK_F = struct.Struct("<f")
_PACK_I = struct.Struct("<i")


class BenchError(Exception):
    pass


def benchmarks_root() -> Path:
    return Path(resources.files("simt_forge") / "benchmarks")


@dataclass(frozen=True)
class VariantSpec:
    benchmark: str
    bug_class: str
    root: Path

    @property
    def harness_path(self) -> Path:
        own = self.root / "harness.man"
        if own.exists():
            return own
        return self.root.parent.parent / "harness.man"

    @property
    def trigger_path(self) -> Path:
        return self.root / "trigger.rec"


@dataclass(frozen=True)
class BenchmarkEntry:
    name: str
    root: Path

    @property
    def harness_path(self) -> Path:
        return self.root / "harness.man"

    def load(self) -> HarnessManifest:
        return load_harness(self.harness_path)

    def variants(self) -> list[VariantSpec]:
        vdir = self.root / "variants"
        if not vdir.is_dir():
            return []
        out = []
        for cls in VARIANT_CLASSES:
            if (vdir / cls).is_dir():
                out.append(VariantSpec(self.name, cls, vdir / cls))
        return out

    def variant(self, bug_class: str) -> VariantSpec:
        for v in self.variants():
            if v.bug_class == bug_class:
                return v
        raise BenchError(f"{self.name} has no {bug_class} variant")


def list_benchmarks() -> list[BenchmarkEntry]:
    root = benchmarks_root()
    out = []
    for name in BENCHMARK_NAMES:
        bdir = root / name
        if not bdir.is_dir():
            raise BenchError(f"bundled benchmark {name!r} is missing")
        out.append(BenchmarkEntry(name, bdir))
    return out


def get_benchmark(name: str) -> BenchmarkEntry:
    if name not in BENCHMARK_NAMES:
        raise BenchError(f"unknown benchmark {name!r}")
    return BenchmarkEntry(name, benchmarks_root() / name)


def load_trigger(variant: VariantSpec) -> tuple[str, tuple[MutationOp, ...]]:
    """Parse a trigger file; returns (expected bug class, mutation ops)."""
    lines = [l.strip() for l in variant.trigger_path.read_text().splitlines()
             if l.strip() and not l.startswith("#")]
    if not lines or lines[0] != "trigger v1":
        raise BenchError(f"{variant.trigger_path}: not a trigger record")
    expected = ""
    ops = []
    for line in lines[1:]:
        if line.startswith("class="):
            expected = line[6:]
        elif line.startswith("mut "):
            ops.append(MutationOp.decode(line))
        else:
            raise BenchError(f"{variant.trigger_path}: bad line {line!r}")
    if not expected or not ops:
        raise BenchError(f"{variant.trigger_path}: incomplete trigger")
    return expected, tuple(ops)


def build_trigger_testcase(manifest: HarnessManifest,
                           ops: tuple[MutationOp, ...]) -> TestCase:
    return apply_trace(manifest.seed(0), ops)


def launch_geometry(manifest: HarnessManifest) -> tuple[int, int]:
    for op in manifest.phases[COMPUTE]:
        if op.kind == "launch":
            return op.grid, op.block
    raise BenchError("harness has no launch")


def output_args(manifest: HarnessManifest) -> list[int]:
    return [op.arg_ref for op in manifest.phases[COMPUTE]
            if op.kind == "copy_out" and op.arg_ref >= 0]


# -- scalar references ----------------------------------------------------------------


def _floats(v: ArrayValue) -> list[float]:
    return [_PACK_F.unpack_from(v.data, i * 4)[0] for i in range(len(v.data) // 4)]


def _pack_floats(vals: list[float]) -> bytes:
    return b"".join(_PACK_F.pack(v) for v in vals)


def _indices(t: int, total: int, n: int):
    i = t
    while i < n:
        yield i
        i += total


def _abs_f32(v: float) -> float:
    return f32(0.0 - v) if v < 0.0 else v


def _ref_amax(args, T):
    x = _floats(args[0])
    out = _PACK_I.unpack(args[1].data)[0]
    n = args[2].value
    for t in range(T):
        best_idx = -1
        best_val = 0.0
        for i in _indices(t, T, n):
            v = _abs_f32(x[i])
            if best_idx == -1 or v > best_val:
                best_val = v
                best_idx = i
        if best_idx == -1:
            continue
        if out == -1:
            out = best_idx
        else:
            gv = _abs_f32(x[out])
            if best_val > gv or (not best_val < gv and best_idx < out):
                out = best_idx
    return {1: _PACK_I.pack(out)}


def _ref_amin(args, T):
    x = _floats(args[0])
    out = _PACK_I.unpack(args[1].data)[0]
    n = args[2].value
    for t in range(T):
        best_idx = -1
        best_val = 0.0
        for i in _indices(t, T, n):
            v = _abs_f32(x[i])
            if best_idx == -1 or v < best_val:
                best_val = v
                best_idx = i
        if best_idx == -1:
            continue
        if out == -1:
            out = best_idx
        else:
            gv = _abs_f32(x[out])
            if best_val < gv or (not best_val > gv and best_idx < out):
                out = best_idx
    return {1: _PACK_I.pack(out)}


def _ref_asum(args, T):
    x = _floats(args[0])
    out = _floats(args[1])[0]
    n = args[2].value
    for t in range(T):
        partial = 0.0
        for i in _indices(t, T, n):
            partial = f32(partial + _abs_f32(x[i]))
        out = f32(out + partial)
    return {1: _PACK_F.pack(out)}


def _ref_axpy(args, T):
    a = args[0].value
    x = _floats(args[1])
    y = _floats(args[2])
    n = args[3].value
    for t in range(T):
        for i in _indices(t, T, n):
            y[i] = f32(f32(a * x[i]) + y[i])
    return {2: _pack_floats(y)}


def _ref_copy(args, T):
    x = _floats(args[0])
    y = _floats(args[1])
    n = args[2].value
    for t in range(T):
        for i in _indices(t, T, n):
            y[i] = x[i]
    return {1: _pack_floats(y)}


def _ref_dot(args, T):
    x = _floats(args[0])
    y = _floats(args[1])
    out = _floats(args[2])[0]
    n = args[3].value
    for t in range(T):
        partial = 0.0
        for i in _indices(t, T, n):
            partial = f32(partial + f32(x[i] * y[i]))
        out = f32(out + partial)
    return {2: _PACK_F.pack(out)}


def _ref_nrm2(args, T):
    x = _floats(args[0])
    out = _floats(args[1])[0]
    n = args[2].value
    for t in range(T):
        partial = 0.0
        for i in _indices(t, T, n):
            partial = f32(partial + f32(x[i] * x[i]))
        out = f32(out + partial)
    return {1: _PACK_F.pack(out)}


def _ref_rot(args, T):
    x = _floats(args[0])
    y = _floats(args[1])
    c = args[2].value
    s = args[3].value
    n = args[4].value
    for t in range(T):
        for i in _indices(t, T, n):
            xv, yv = x[i], y[i]
            x[i] = f32(f32(c * xv) + f32(s * yv))
            y[i] = f32(f32(c * yv) - f32(s * xv))
    return {0: _pack_floats(x), 1: _pack_floats(y)}


def _ref_rotm(args, T):
    x = _floats(args[0])
    y = _floats(args[1])
    flag = args[2].value
    h11, h12, h21, h22 = (args[k].value for k in (3, 4, 5, 6))
    n = args[7].value
    for t in range(T):
        for i in _indices(t, T, n):
            xv, yv = x[i], y[i]
            if flag == -1:
                x[i] = f32(f32(h11 * xv) + f32(h12 * yv))
                y[i] = f32(f32(h21 * xv) + f32(h22 * yv))
            elif flag == 0:
                x[i] = f32(xv + f32(h12 * yv))
                y[i] = f32(f32(h21 * xv) + yv)
            elif flag == 1:
                x[i] = f32(f32(h11 * xv) + yv)
                y[i] = f32(f32(h22 * yv) - xv)
    return {0: _pack_floats(x), 1: _pack_floats(y)}


def _ref_scal(args, T):
    a = args[0].value
    x = _floats(args[1])
    n = args[2].value
    for t in range(T):
        for i in _indices(t, T, n):
            x[i] = f32(a * x[i])
    return {1: _pack_floats(x)}


def _ref_swap(args, T):
    x = _floats(args[0])
    y = _floats(args[1])
    n = args[2].value
    for t in range(T):
        for i in _indices(t, T, n):
            x[i], y[i] = y[i], x[i]
    return {0: _pack_floats(x), 1: _pack_floats(y)}


_REFERENCES = {
    "amax": _ref_amax, "amin": _ref_amin, "asum": _ref_asum, "axpy": _ref_axpy,
    "copy": _ref_copy, "dot": _ref_dot, "nrm2": _ref_nrm2, "rot": _ref_rot,
    "rotm": _ref_rotm, "scal": _ref_scal, "swap": _ref_swap,
}


def reference_result(name: str, tc: TestCase, *, grid: int, block: int) -> dict[int, bytes]:
    """Expected output-buffer bytes per output arg index for a valid input."""
    ref = _REFERENCES.get(name)
    if ref is None:
        raise BenchError(f"no reference for {name!r}")
    args = list(tc.args)
    for a in args:
        if isinstance(a, IntValue):
            if not -(1 << 31) <= a.value < (1 << 31):
                raise BenchError("reference inputs must be valid-domain")
    n_holder = [a for a in args if isinstance(a, IntValue)]
    if n_holder:
        counts = [a.count for a in args
                  if isinstance(a, ArrayValue) and a.count > 1]
        if counts and n_holder[-1].value > min(counts):
            raise BenchError("reference inputs must satisfy n <= element count")
    return ref(args, grid * block)
