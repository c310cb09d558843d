"""Type-aware, trace-replayable input mutation.

Test cases are typed argument vectors (i32 scalars, f32 scalars, arrays with a
placement descriptor).  Every mutation is a MutationOp carrying fully explicit
parameters, so applying a recorded trace to the recorded parent reproduces a
child bit-for-bit without consulting any RNG.

Two op populations share the draw (40% type-aware, 60% generic byte-level):

  type-aware   int_boundary (zero / max-positive / min-negative),
               float_sign, float_exponent, float_mantissa, float_arith,
               array_extreme, array_dim, array_empty, ptr_space, ptr_offset
  generic      int_byte (bit flips / small arithmetic),
               float_byte, array_elem (byte-level op on one element)

Float bit ops touch only their declared bit region (sign bit 31, exponent
bits 23..30, mantissa bits 0..22); float_arith is the one value-space op and
is exempt from that closure.

A MutationSchedule makes boundary-value coverage a guarantee rather than a
probability: the first three mutations of every integer argument are forced
to the zero / max / min boundaries in rotation.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace

from .kernel_ir import MemSpace, ScalarType
from .rng import Stream

I32_MAX = (1 << 31) - 1
I32_MIN = -(1 << 31)
F32_MAX_BITS = 0x7F7FFFFF   # largest finite binary32
F32_MIN_BITS = 0xFF7FFFFF   # most negative finite binary32

_PACK_F = struct.Struct("<f")
_PACK_I = struct.Struct("<i")

_ELEM_SIZE = {"i32": 4, "f32": 4}

TYPE_AWARE_KINDS = frozenset({
    "int_boundary", "float_sign", "float_exponent", "float_mantissa",
    "float_arith", "array_extreme", "array_dim", "array_empty",
    "ptr_space", "ptr_offset",
})
GENERIC_KINDS = frozenset({"int_byte", "float_byte", "array_elem"})

TYPE_AWARE_WEIGHT = 0.4     # probability mass for the type-aware population
_BOUNDARY_CYCLE = ("zero", "max", "min")

# value-space deltas for float_arith, stored as f32 bit patterns
_ARITH_DELTAS = (1.0, -1.0, 0.5, 2.0, 1024.0, 0.001)


class MutationError(Exception):
    pass


# -- typed values ---------------------------------------------------------------


@dataclass(frozen=True)
class IntValue:
    value: int

    def __post_init__(self):
        object.__setattr__(self, "value", ((self.value - I32_MIN) & 0xFFFFFFFF) + I32_MIN)


@dataclass(frozen=True)
class FloatValue:
    bits: int  # u32 bit pattern

    def __post_init__(self):
        object.__setattr__(self, "bits", self.bits & 0xFFFFFFFF)

    @classmethod
    def from_float(cls, v: float) -> "FloatValue":
        return cls(struct.unpack("<I", _PACK_F.pack(_clamp_f32(v)))[0])

    @property
    def value(self) -> float:
        return _PACK_F.unpack(struct.pack("<I", self.bits))[0]


@dataclass(frozen=True)
class ArrayValue:
    data: bytes
    elem: str                       # "i32" | "f32"
    extents: tuple[int, ...]
    space: MemSpace                 # placement
    base_offset: int = 0            # placement: pointer bias in bytes
    size_override: int | None = None  # placement: alloc size override

    @property
    def count(self) -> int:
        n = 1
        for e in self.extents:
            n *= e
        return n

    def element_bits(self, index: int) -> int:
        off = index * 4
        return struct.unpack_from("<I", self.data, off)[0]

    def with_element_bits(self, index: int, bits: int) -> "ArrayValue":
        buf = bytearray(self.data)
        struct.pack_into("<I", buf, index * 4, bits & 0xFFFFFFFF)
        return replace(self, data=bytes(buf))


TypedValue = IntValue | FloatValue | ArrayValue


def _clamp_f32(v: float) -> float:
    import ctypes
    return ctypes.c_float(v).value


# -- argument specs ---------------------------------------------------------------


@dataclass(frozen=True)
class ArgSpec:
    """Declared shape, placement, seed, and valid domain of one argument."""
    name: str
    kind: ScalarType
    elem: str = "f32"                  # array element type
    count: int = 0                     # array element count
    extents: tuple[int, ...] = ()
    space: MemSpace = MemSpace.GLOBAL
    seed_int: int = 0
    seed_float: float = 0.0
    seed_fill: str = "zeros"           # zeros | seq | const | hex
    seed_hex: str = ""
    lo: int = I32_MIN                  # valid i32 domain
    hi: int = I32_MAX
    flo: float = -1000.0               # valid f32 domain
    fhi: float = 1000.0
    fixed: bool = False                # excluded from mutation

    def canonical(self) -> str:
        if self.kind == ScalarType.I32:
            return (f"{self.name} i32 seed={self.seed_int} lo={self.lo} hi={self.hi} "
                    f"fixed={int(self.fixed)}")
        if self.kind == ScalarType.F32:
            return (f"{self.name} f32 seed={self.seed_float!r} flo={self.flo!r} "
                    f"fhi={self.fhi!r} fixed={int(self.fixed)}")
        ext = "x".join(str(e) for e in self.extents)
        return (f"{self.name} ptr {self.space.value} {self.elem} count={self.count} "
                f"extents={ext} fill={self.seed_fill} hex={self.seed_hex} "
                f"flo={self.flo!r} fhi={self.fhi!r} fixed={int(self.fixed)}")


def argspec_digest(specs: list[ArgSpec]) -> str:
    text = "\n".join(s.canonical() for s in specs)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def seed_value(spec: ArgSpec) -> TypedValue:
    if spec.kind == ScalarType.I32:
        return IntValue(spec.seed_int)
    if spec.kind == ScalarType.F32:
        return FloatValue.from_float(spec.seed_float)
    n = spec.count
    if spec.seed_fill == "hex":
        data = bytes.fromhex(spec.seed_hex)
        if len(data) != n * 4:
            raise MutationError(f"{spec.name}: hex seed length does not match count")
    elif spec.seed_fill == "seq":
        if spec.elem == "f32":
            data = b"".join(_PACK_F.pack(_clamp_f32(float(i))) for i in range(n))
        else:
            data = b"".join(_PACK_I.pack(i) for i in range(n))
    elif spec.seed_fill == "const":
        if spec.elem == "f32":
            data = _PACK_F.pack(_clamp_f32(spec.seed_float)) * n
        else:
            data = _PACK_I.pack(spec.seed_int) * n
    else:  # zeros
        data = bytes(n * 4)
    return ArrayValue(data, spec.elem, spec.extents or (n,), spec.space)


# -- test cases --------------------------------------------------------------------


@dataclass(frozen=True)
class MutationOp:
    kind: str
    arg: int
    params: tuple[tuple[str, str], ...] = ()  # sorted (key, value) pairs

    def param(self, key: str, default: str | None = None) -> str:
        for k, v in self.params:
            if k == key:
                return v
        if default is None:
            raise MutationError(f"{self.kind}: missing param {key!r}")
        return default

    def encode(self) -> str:
        parts = [f"mut {self.kind} arg={self.arg}"]
        parts.extend(f"{k}={v}" for k, v in self.params)
        return " ".join(parts)

    @classmethod
    def make(cls, kind: str, arg: int, **params) -> "MutationOp":
        return cls(kind, arg, tuple(sorted((k, str(v)) for k, v in params.items())))

    @classmethod
    def decode(cls, line: str) -> "MutationOp":
        toks = line.split()
        if len(toks) < 3 or toks[0] != "mut":
            raise MutationError(f"bad mutation line: {line!r}")
        kind = toks[1]
        if kind not in TYPE_AWARE_KINDS and kind not in GENERIC_KINDS:
            raise MutationError(f"unknown mutation kind {kind!r}")
        kv = {}
        for tok in toks[2:]:
            k, _, v = tok.partition("=")
            kv[k] = v
        arg = int(kv.pop("arg"))
        return cls(kind, arg, tuple(sorted(kv.items())))

    @property
    def type_aware(self) -> bool:
        return self.kind in TYPE_AWARE_KINDS


@dataclass(frozen=True)
class TestCase:
    args: tuple[TypedValue, ...]
    rng_seed: int
    parent_id: str | None = None
    trace: tuple[MutationOp, ...] = ()
    _id: str = field(default="", compare=False)

    @property
    def id(self) -> str:
        if not self._id:
            body = serialize_testcase(self, with_id=False)
            object.__setattr__(self, "_id",
                               hashlib.sha256(body.encode()).hexdigest()[:40])
        return self._id


def seed_testcase(specs: list[ArgSpec], rng_seed: int = 0) -> TestCase:
    return TestCase(tuple(seed_value(s) for s in specs), rng_seed)


# -- single-value mutation operators -------------------------------------------------


def mutate_int(v: IntValue, op: MutationOp) -> IntValue:
    if op.kind == "int_boundary":
        which = op.param("which")
        if which == "zero":
            return IntValue(0)
        if which == "max":
            return IntValue(I32_MAX)
        if which == "min":
            return IntValue(I32_MIN)
        raise MutationError(f"bad boundary {which!r}")
    if op.kind == "int_byte":
        mode = op.param("mode")
        if mode == "flip":
            byte = int(op.param("byte"))
            mask = int(op.param("mask"))
            # python ints XOR like infinite two's complement; IntValue wraps to i32
            return IntValue(v.value ^ ((mask & 0xFF) << (8 * byte)))
        if mode == "add":
            return IntValue(v.value + int(op.param("delta")))
        raise MutationError(f"bad int_byte mode {mode!r}")
    raise MutationError(f"{op.kind} does not apply to i32")


def _float_bits_op(bits: int, op: MutationOp) -> int:
    if op.kind == "float_sign":
        return bits ^ 0x80000000
    if op.kind == "float_exponent":
        pattern = op.param("pattern")
        if pattern == "ones":
            return bits | 0x7F800000
        if pattern == "zeros":
            return bits & ~0x7F800000 & 0xFFFFFFFF
        if pattern == "bit":
            return bits ^ (1 << (23 + int(op.param("bit"))))
        raise MutationError(f"bad exponent pattern {pattern!r}")
    if op.kind == "float_mantissa":
        mask = int(op.param("mask"), 0) & 0x007FFFFF
        if not mask:
            raise MutationError("float_mantissa needs a nonzero mask")
        return bits ^ mask
    if op.kind == "float_byte":
        byte = int(op.param("byte"))
        mask = int(op.param("mask"))
        return bits ^ ((mask & 0xFF) << (8 * byte))
    if op.kind == "float_arith":
        delta = _PACK_F.unpack(struct.pack("<I", int(op.param("delta_bits"), 0)))[0]
        cur = _PACK_F.unpack(struct.pack("<I", bits))[0]
        return struct.unpack("<I", _PACK_F.pack(_clamp_f32(cur + delta)))[0]
    raise MutationError(f"{op.kind} does not apply to f32")


def mutate_float(v: FloatValue, op: MutationOp) -> FloatValue:
    return FloatValue(_float_bits_op(v.bits, op))


def _int_bits_op(bits: int, op: MutationOp) -> int:
    signed = bits - (1 << 32) if bits & 0x80000000 else bits
    return mutate_int(IntValue(signed), op).value & 0xFFFFFFFF


def mutate_array(v: ArrayValue, op: MutationOp) -> ArrayValue:
    if op.kind == "array_extreme":
        pattern = op.param("pattern")
        if v.elem == "f32":
            bits = {"zero": 0, "max": F32_MAX_BITS, "min": F32_MIN_BITS}[pattern]
        else:
            bits = {"zero": 0, "max": I32_MAX, "min": 1 << 31}[pattern]
        return replace(v, data=struct.pack("<I", bits) * v.count)
    if op.kind == "array_dim":
        ext_text = op.param("extents")
        extents = tuple(int(t) for t in ext_text.split("x")) if ext_text != "0" else (0,)
        n = 1
        for e in extents:
            n *= e
        want = n * 4
        data = v.data[:want] if want <= len(v.data) else v.data + bytes(want - len(v.data))
        return replace(v, data=data, extents=extents)
    if op.kind == "array_empty":
        return replace(v, data=b"", extents=(0,))
    if op.kind == "ptr_space":
        return replace(v, space=MemSpace(op.param("target")))
    if op.kind == "ptr_offset":
        delta = int(op.param("delta"))
        limit = 2 * max(len(v.data), 4)
        delta = max(-limit, min(limit, delta))
        return replace(v, base_offset=v.base_offset + delta)
    if op.kind == "array_elem":
        index = int(op.param("index"))
        if not 0 <= index < v.count:
            raise MutationError(f"array_elem index {index} out of range")
        inner = MutationOp(op.param("inner"), op.arg,
                           tuple((k[6:], val) for k, val in op.params
                                 if k.startswith("inner_")))
        bits = v.element_bits(index)
        if v.elem == "f32":
            bits = _float_bits_op(bits, inner)
        else:
            bits = _int_bits_op(bits, inner)
        return v.with_element_bits(index, bits)
    raise MutationError(f"{op.kind} does not apply to arrays")


def apply_op(value: TypedValue, op: MutationOp) -> TypedValue:
    if isinstance(value, IntValue):
        return mutate_int(value, op)
    if isinstance(value, FloatValue):
        return mutate_float(value, op)
    return mutate_array(value, op)


# -- op generation ---------------------------------------------------------------


class MutationSchedule:
    """Per-argument rotation state guaranteeing boundary-value inclusion."""

    def __init__(self, config: "MutationConfig | None" = None):
        self.config = config or MutationConfig()
        self._int_counts: dict[int, int] = {}

    def next_int_op(self, arg: int, rng: Stream) -> MutationOp:
        count = self._int_counts.get(arg, 0)
        self._int_counts[arg] = count + 1
        if count < len(_BOUNDARY_CYCLE):
            return MutationOp.make("int_boundary", arg, which=_BOUNDARY_CYCLE[count])
        if rng.random() < TYPE_AWARE_WEIGHT:
            return MutationOp.make("int_boundary", arg,
                                   which=rng.choice(_BOUNDARY_CYCLE))
        return _gen_int_byte(arg, rng)


@dataclass(frozen=True)
class MutationConfig:
    granule: int = 4
    redzone: int = 32
    max_ops: int = 3


def _gen_int_byte(arg: int, rng: Stream) -> MutationOp:
    if rng.random() < 0.5:
        return MutationOp.make("int_byte", arg, mode="flip",
                               byte=rng.integers(0, 4), mask=rng.integers(1, 256))
    return MutationOp.make("int_byte", arg, mode="add",
                           delta=rng.choice([-16, -4, -2, -1, 1, 2, 4, 16]))


def _gen_float_op(arg: int, rng: Stream) -> MutationOp:
    if rng.random() < TYPE_AWARE_WEIGHT:
        pick = rng.integers(0, 4)
        if pick == 0:
            return MutationOp.make("float_sign", arg)
        if pick == 1:
            pattern = rng.choice(["ones", "zeros", "bit"])
            if pattern == "bit":
                return MutationOp.make("float_exponent", arg, pattern="bit",
                                       bit=rng.integers(0, 8))
            return MutationOp.make("float_exponent", arg, pattern=pattern)
        if pick == 2:
            return MutationOp.make("float_mantissa", arg,
                                   mask=hex(rng.integers(1, 1 << 23)))
        delta = rng.choice(_ARITH_DELTAS)
        return MutationOp.make("float_arith", arg,
                               delta_bits=hex(struct.unpack("<I", _PACK_F.pack(delta))[0]))
    return MutationOp.make("float_byte", arg, byte=rng.integers(0, 4),
                           mask=rng.integers(1, 256))


def _offset_palette(size: int, cfg: MutationConfig) -> list[int]:
    """Structured pointer biases: granule steps, redzone widths, and whole-slot
    strides, so neighboring payloads and poisoned gaps are actually reachable."""
    g, rz = cfg.granule, cfg.redzone
    size = max(size, g)
    magnitudes = {g, 2 * g, rz, rz + g, 2 * rz, 2 * rz + g, 2 * rz - g,
                  size, size + 2 * rz, size + rz, 2 * size}
    limit = 2 * size
    out = []
    for m in sorted(magnitudes):
        if 0 < m <= limit:
            out.append(m)
            out.append(-m)
    return out or [g, -g]


def _gen_array_op(arg: int, v: ArrayValue, rng: Stream, cfg: MutationConfig) -> MutationOp:
    spaces = [s.value for s in MemSpace if s != v.space]
    if v.count == 0:
        pick = rng.integers(0, 3)
        if pick == 0:
            return MutationOp.make("array_dim", arg, extents="4")
        if pick == 1:
            return MutationOp.make("ptr_space", arg, target=rng.choice(spaces))
        return MutationOp.make("ptr_offset", arg,
                               delta=rng.choice(_offset_palette(len(v.data), cfg)))
    if rng.random() < TYPE_AWARE_WEIGHT:
        pick = rng.integers(0, 5)
        if pick == 0:
            return MutationOp.make("array_extreme", arg,
                                   pattern=rng.choice(["zero", "max", "min"]))
        if pick == 1:
            return MutationOp.make("array_dim", arg,
                                   extents=_gen_extents(v, rng))
        if pick == 2:
            return MutationOp.make("array_empty", arg)
        if pick == 3:
            return MutationOp.make("ptr_space", arg, target=rng.choice(spaces))
        return MutationOp.make("ptr_offset", arg,
                               delta=rng.choice(_offset_palette(len(v.data), cfg)))
    index = rng.integers(0, v.count)
    if v.elem == "f32":
        inner = _gen_float_op(arg, rng)
        while inner.kind == "float_arith":  # keep element path pure bit-level
            inner = _gen_float_op(arg, rng)
    else:
        inner = _gen_int_byte(arg, rng)
    params = {"index": index, "inner": inner.kind}
    params.update({f"inner_{k}": val for k, val in inner.params})
    return MutationOp.make("array_elem", arg, **params)


def _gen_extents(v: ArrayValue, rng: Stream) -> str:
    n = v.count
    options = []
    if n >= 2:
        options.append(str(n // 2))             # shrink
        options.append(f"{n}x2")                # grow, doubles the bytes
        if n % 2 == 0:
            options.append(f"2x{n // 2}")       # reshape, same bytes
    else:
        options.append(str(n * 2 + 2))
    return rng.choice(options)


def generate_op(arg: int, value: TypedValue, schedule: MutationSchedule,
                rng: Stream) -> MutationOp:
    if isinstance(value, IntValue):
        return schedule.next_int_op(arg, rng)
    if isinstance(value, FloatValue):
        return _gen_float_op(arg, rng)
    return _gen_array_op(arg, value, rng, schedule.config)


def mutate_testcase(tc: TestCase, specs: list[ArgSpec], schedule: MutationSchedule,
                    rng: Stream) -> TestCase:
    """Derive a child: 1..max_ops ops over distinct mutable args, trace recorded."""
    mutable = [i for i, s in enumerate(specs) if not s.fixed]
    if not mutable:
        raise MutationError("no mutable arguments")
    cap = min(schedule.config.max_ops, len(mutable))
    n_ops = 1 + rng.geometric_small(0.5, cap - 1)
    picked: list[int] = []
    pool = list(mutable)
    for _ in range(n_ops):
        idx = pool.pop(rng.integers(0, len(pool)))
        picked.append(idx)
    args = list(tc.args)
    ops = []
    for arg in picked:
        op = generate_op(arg, args[arg], schedule, rng)
        args[arg] = apply_op(args[arg], op)
        ops.append(op)
    return TestCase(tuple(args), rng.u64(), tc.id, tuple(ops))


def apply_trace(parent: TestCase, trace: tuple[MutationOp, ...],
                rng_seed: int = 0) -> TestCase:
    """Replay a recorded trace; no randomness is consulted."""
    args = list(parent.args)
    for op in trace:
        args[op.arg] = apply_op(args[op.arg], op)
    return TestCase(tuple(args), rng_seed, parent.id, tuple(trace))


# -- valid-domain sampling ------------------------------------------------------------


def sample_valid_testcase(specs: list[ArgSpec], rng: Stream) -> TestCase:
    """Uniform draw from every argument's declared valid domain; used for
    soundness and differential sweeps, never for fuzzing."""
    args: list[TypedValue] = []
    for spec in specs:
        if spec.kind == ScalarType.I32:
            args.append(IntValue(rng.integers(spec.lo, spec.hi + 1)))
        elif spec.kind == ScalarType.F32:
            span = spec.fhi - spec.flo
            args.append(FloatValue.from_float(spec.flo + rng.random() * span))
        else:
            if spec.elem == "f32":
                span = spec.fhi - spec.flo
                data = b"".join(
                    _PACK_F.pack(_clamp_f32(spec.flo + rng.random() * span))
                    for _ in range(spec.count))
            else:
                data = b"".join(_PACK_I.pack(rng.integers(spec.lo, spec.hi + 1))
                                for _ in range(spec.count))
            args.append(ArrayValue(data, spec.elem, spec.extents or (spec.count,),
                                   spec.space))
    return TestCase(tuple(args), rng.u64())


# -- serialization ---------------------------------------------------------------------


def _fmt_arg(i: int, v: TypedValue) -> str:
    if isinstance(v, IntValue):
        return f"arg{i} i32 value={v.value}"
    if isinstance(v, FloatValue):
        return f"arg{i} f32 bits=0x{v.bits:08x}"
    ext = "x".join(str(e) for e in v.extents)
    override = "-" if v.size_override is None else str(v.size_override)
    return (f"arg{i} array elem={v.elem} space={v.space.value} extents={ext} "
            f"offset={v.base_offset} override={override} data={v.data.hex() or '-'}")


def serialize_testcase(tc: TestCase, specs: list[ArgSpec] | None = None,
                       with_id: bool = True, extra: list[str] | None = None) -> str:
    lines = ["simt-forge-testcase v1"]
    if with_id:
        lines.append(f"id={tc.id}")
    if specs is not None:
        lines.append(f"argspec={argspec_digest(specs)}")
    lines.append(f"rng_seed={tc.rng_seed}")
    lines.append(f"parent={tc.parent_id or '-'}")
    for op in tc.trace:
        lines.append(op.encode())
    for i, v in enumerate(tc.args):
        lines.append(_fmt_arg(i, v))
    if extra:
        lines.extend(extra)
    lines.append("end")
    return "\n".join(lines) + "\n"


def parse_testcase(text: str, specs: list[ArgSpec] | None = None) -> tuple[TestCase, dict]:
    """Parse a testcase file; returns (testcase, extra-record dict).  When specs
    are supplied the embedded argspec digest must match."""
    lines = [l.rstrip("\n") for l in text.splitlines() if l.strip()]
    if not lines or lines[0] != "simt-forge-testcase v1":
        raise MutationError("not a testcase record")
    meta: dict[str, str] = {}
    trace: list[MutationOp] = []
    args: dict[int, TypedValue] = {}
    extra: dict[str, str] = {}
    for line in lines[1:]:
        if line == "end":
            break
        if line.startswith("mut "):
            trace.append(MutationOp.decode(line))
            continue
        head, _, rest = line.partition(" ")
        if head.startswith("arg") and head[3:].isdigit():
            idx = int(head[3:])
            kind, _, kvtext = rest.partition(" ")
            kv = dict(tok.split("=", 1) for tok in kvtext.split())
            if kind == "i32":
                args[idx] = IntValue(int(kv["value"]))
            elif kind == "f32":
                args[idx] = FloatValue(int(kv["bits"], 0))
            else:
                data = b"" if kv["data"] == "-" else bytes.fromhex(kv["data"])
                extents = tuple(int(t) for t in kv["extents"].split("x")) \
                    if kv["extents"] else (0,)
                override = None if kv["override"] == "-" else int(kv["override"])
                args[idx] = ArrayValue(data, kv["elem"], extents,
                                       MemSpace(kv["space"]), int(kv["offset"]),
                                       override)
            continue
        key, _, value = line.partition("=")
        if key in ("id", "argspec", "rng_seed", "parent"):
            meta[key] = value
        else:
            extra[line.split()[0]] = line
    if specs is not None and "argspec" in meta:
        if meta["argspec"] != argspec_digest(specs):
            raise MutationError("testcase argspec digest does not match the harness")
    ordered = tuple(args[i] for i in sorted(args))
    if len(ordered) != (max(args) + 1 if args else 0):
        raise MutationError("argument indices are not dense")
    parent = meta.get("parent", "-")
    tc = TestCase(ordered, int(meta.get("rng_seed", "0")),
                  None if parent == "-" else parent, tuple(trace))
    if "id" in meta and meta["id"] != tc.id:
        raise MutationError("testcase id does not match its content")
    return tc, extra
