"""Textual SIMT kernel IR: parsing, validation, CFG construction, canonical printing.

A program is a sequence of kernels.  Each kernel names its parameters
(i32, f32, or space-annotated pointers), declares a register budget shared by
all register classes, and carries a flat instruction list.  Registers come in
four classes: %rN (i32), %fN (f32), %pN (predicate), %aN (pointer/address).
Labels prefix instructions and are branch targets.  `#` starts a comment.

The parser is total: any input either yields a Program or raises
SirSyntaxError with a line number.  Basic blocks and static edges are derived
once at parse time and are the ground truth the coverage map validates
dynamic edges against.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum, IntEnum


class ScalarType(Enum):
    I32 = "i32"
    F32 = "f32"
    PTR = "ptr"


class MemSpace(Enum):
    GLOBAL = "global"
    SHARED = "shared"
    LOCAL = "local"


class Opcode(IntEnum):
    MOV = 0
    ADD = 1
    SUB = 2
    MUL = 3
    FADD = 4
    FSUB = 5
    FMUL = 6
    SETP = 7
    BRA = 8
    LD = 9
    ST = 10
    CVT = 11
    SREG = 12
    EXIT = 13


CMP_OPS = ("eq", "ne", "lt", "le", "gt", "ge")
SREG_NAMES = ("tid", "ntid", "ctaid", "nctaid")
MEM_KINDS = {"b8": 1, "b16": 2, "b32": 4, "b64": 8, "f32": 4}

# Register operands are ('r'|'f'|'p'|'a', index) tuples; immediates are plain
# python int (i32 contexts) or float (f32 contexts) values.
Reg = tuple


class SirSyntaxError(Exception):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.reason = message


class DuplicateKernelError(SirSyntaxError):
    pass


class UnresolvedLabelError(SirSyntaxError):
    pass


@dataclass
class Param:
    name: str
    type: ScalarType
    space: MemSpace | None = None  # required for PTR, None otherwise


@dataclass
class Instruction:
    iid: int
    opcode: Opcode
    line: int = 0
    dst: Reg | None = None
    srcs: tuple = ()
    cmp: str | None = None              # SETP comparison
    pred: Reg | None = None             # BRA predicate register
    pred_negate: bool = False
    target: str | None = None           # BRA label
    target_iid: int = -1                # resolved instruction id
    space: MemSpace | None = None       # LD/ST space
    mem_kind: str | None = None         # LD/ST payload kind
    width: int = 0                      # LD/ST byte width
    addr: tuple | None = None           # (Reg, signed byte offset)
    sreg: str | None = None
    cvt: tuple | None = None            # (dst scalar type, src scalar type)
    block: int = -1                     # owning basic block, set by build_cfg


@dataclass
class BasicBlock:
    bid: int
    start: int  # first iid, inclusive
    end: int    # last iid, inclusive


@dataclass
class KernelDef:
    name: str
    params: list[Param]
    register_count: int
    instructions: list[Instruction]
    labels: dict[str, int] = field(default_factory=dict)
    blocks: list[BasicBlock] = field(default_factory=list)
    edges: set[tuple[int, int]] = field(default_factory=set)
    line: int = 0

    def block_of(self, iid: int) -> int:
        return self.instructions[iid].block


@dataclass
class Program:
    kernels: dict[str, KernelDef]
    digest: str = ""


@dataclass
class Diagnostic:
    kernel: str
    iid: int  # -1 for kernel-level diagnostics
    code: str
    message: str


_HEADER_RE = re.compile(r"^kernel\s+([A-Za-z_]\w*)\s*\((.*)\)\s*regs\s*=\s*(\d+)$")
_LABEL_RE = re.compile(r"^([A-Za-z_]\w*):\s*(.*)$")
_REG_RE = re.compile(r"^%([rfpa])(\d+)$")
_ADDR_RE = re.compile(r"^\[\s*(%a\d+)\s*(?:([+-])\s*(\d+))?\s*\]$")
_INT_RE = re.compile(r"^[+-]?(0x[0-9a-fA-F]+|\d+)$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.\d*([eE][+-]?\d+)?|\d+[eE][+-]?\d+|\.\d+([eE][+-]?\d+)?|inf|nan)$")


def _parse_reg(tok: str, line: int) -> Reg:
    m = _REG_RE.match(tok)
    if not m:
        raise SirSyntaxError(line, f"expected register, got {tok!r}")
    return (m.group(1), int(m.group(2)))


def _parse_operand(tok: str, line: int):
    """Register tuple, int immediate, or float immediate."""
    if tok.startswith("%"):
        return _parse_reg(tok, line)
    if _INT_RE.match(tok):
        return int(tok, 0)
    if _FLOAT_RE.match(tok):
        return float(tok)
    raise SirSyntaxError(line, f"bad operand {tok!r}")


def _split_operands(rest: str) -> list[str]:
    return [t.strip() for t in rest.split(",")] if rest.strip() else []


def _parse_param(tok: str, line: int) -> Param:
    if ":" not in tok:
        raise SirSyntaxError(line, f"parameter {tok!r} missing type")
    name, _, ty = tok.partition(":")
    name = name.strip()
    ty = ty.strip()
    if not re.match(r"^[A-Za-z_]\w*$", name):
        raise SirSyntaxError(line, f"bad parameter name {name!r}")
    if ty == "i32":
        return Param(name, ScalarType.I32)
    if ty == "f32":
        return Param(name, ScalarType.F32)
    if ty == "ptr":
        return Param(name, ScalarType.PTR, None)  # validate() flags the missing space
    if ty.startswith("ptr."):
        space = ty[4:]
        try:
            return Param(name, ScalarType.PTR, MemSpace(space))
        except ValueError:
            raise SirSyntaxError(line, f"unknown pointer space {space!r}") from None
    raise SirSyntaxError(line, f"unknown parameter type {ty!r}")


def _parse_instruction(iid: int, text: str, line: int) -> Instruction:
    parts = text.split(None, 1)
    mnemonic = parts[0]
    rest = parts[1] if len(parts) > 1 else ""
    root, *suffix = mnemonic.split(".")
    ops = _split_operands(rest)

    def need(n: int):
        if len(ops) != n:
            raise SirSyntaxError(line, f"{mnemonic} expects {n} operand(s), got {len(ops)}")

    if root == "mov":
        need(2)
        return Instruction(iid, Opcode.MOV, line, dst=_parse_reg(ops[0], line),
                           srcs=(_parse_operand(ops[1], line),))
    if root in ("add", "sub", "mul", "fadd", "fsub", "fmul"):
        need(3)
        opc = {"add": Opcode.ADD, "sub": Opcode.SUB, "mul": Opcode.MUL,
               "fadd": Opcode.FADD, "fsub": Opcode.FSUB, "fmul": Opcode.FMUL}[root]
        return Instruction(iid, opc, line, dst=_parse_reg(ops[0], line),
                           srcs=(_parse_operand(ops[1], line), _parse_operand(ops[2], line)))
    if root == "setp":
        if len(suffix) != 1 or suffix[0] not in CMP_OPS:
            raise SirSyntaxError(line, f"setp needs a comparison suffix from {CMP_OPS}")
        need(3)
        return Instruction(iid, Opcode.SETP, line, dst=_parse_reg(ops[0], line),
                           srcs=(_parse_operand(ops[1], line), _parse_operand(ops[2], line)),
                           cmp=suffix[0])
    if root == "bra":
        if suffix:
            raise SirSyntaxError(line, "bra takes no suffix")
        if len(ops) == 1:
            return Instruction(iid, Opcode.BRA, line, target=ops[0])
        if len(ops) == 2:
            ptok = ops[0]
            negate = ptok.startswith("!")
            if negate:
                ptok = ptok[1:]
            pred = _parse_reg(ptok, line)
            return Instruction(iid, Opcode.BRA, line, pred=pred, pred_negate=negate,
                               target=ops[1])
        raise SirSyntaxError(line, "bra expects [pred,] label")
    if root in ("ld", "st"):
        if len(suffix) != 2:
            raise SirSyntaxError(line, f"{root} needs .space.kind suffixes")
        try:
            space = MemSpace(suffix[0])
        except ValueError:
            raise SirSyntaxError(line, f"unknown memory space {suffix[0]!r}") from None
        kind = suffix[1]
        if kind not in MEM_KINDS:
            raise SirSyntaxError(line, f"unknown memory kind {kind!r}")
        need(2)
        if root == "ld":
            reg_tok, addr_tok = ops[0], ops[1]
        else:
            addr_tok, reg_tok = ops[0], ops[1]
        m = _ADDR_RE.match(addr_tok)
        if not m:
            raise SirSyntaxError(line, f"bad address expression {addr_tok!r}")
        base = _parse_reg(m.group(1), line)
        off = int(m.group(3)) if m.group(3) else 0
        if m.group(2) == "-":
            off = -off
        return Instruction(iid, Opcode.LD if root == "ld" else Opcode.ST, line,
                           dst=_parse_reg(reg_tok, line) if root == "ld" else None,
                           srcs=() if root == "ld" else (_parse_operand(reg_tok, line),),
                           space=space, mem_kind=kind, width=MEM_KINDS[kind],
                           addr=(base, off))
    if root == "cvt":
        if len(suffix) != 2:
            raise SirSyntaxError(line, "cvt needs .dsttype.srctype suffixes")
        try:
            dty, sty = ScalarType(suffix[0]), ScalarType(suffix[1])
        except ValueError:
            raise SirSyntaxError(line, f"unknown cvt types {mnemonic!r}") from None
        need(2)
        return Instruction(iid, Opcode.CVT, line, dst=_parse_reg(ops[0], line),
                           srcs=(_parse_operand(ops[1], line),), cvt=(dty, sty))
    if root == "sreg":
        need(2)
        if ops[1] not in SREG_NAMES:
            raise SirSyntaxError(line, f"unknown special register {ops[1]!r}")
        return Instruction(iid, Opcode.SREG, line, dst=_parse_reg(ops[0], line), sreg=ops[1])
    if root == "exit":
        need(0)
        return Instruction(iid, Opcode.EXIT, line)
    raise SirSyntaxError(line, f"unknown opcode {root!r}")


def parse_program(text: str) -> Program:
    """Parse source text into a Program with CFGs built; raises SirSyntaxError."""
    kernels: dict[str, KernelDef] = {}
    current: KernelDef | None = None
    pending_labels: list[tuple[str, int]] = []  # (label, line)
    pending_bras: list[Instruction] = []

    def finish_kernel():
        nonlocal current, pending_labels, pending_bras
        if current is None:
            return
        if pending_labels:
            lbl, lline = pending_labels[0]
            raise SirSyntaxError(lline, f"label {lbl!r} not followed by an instruction")
        if not current.instructions:
            raise SirSyntaxError(current.line, f"kernel {current.name!r} has no instructions")
        last = current.instructions[-1]
        if not (last.opcode == Opcode.EXIT or (last.opcode == Opcode.BRA and last.pred is None)):
            raise SirSyntaxError(last.line, "kernel body must end with exit or an unconditional bra")
        for ins in pending_bras:
            if ins.target not in current.labels:
                raise UnresolvedLabelError(ins.line, f"undefined label {ins.target!r}")
            ins.target_iid = current.labels[ins.target]
        current.blocks, current.edges = build_cfg(current)
        kernels[current.name] = current
        current = None
        pending_bras = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _HEADER_RE.match(line)
        if m:
            finish_kernel()
            name, params_text, regs = m.group(1), m.group(2), int(m.group(3))
            if name in kernels:
                raise DuplicateKernelError(lineno, f"duplicate kernel {name!r}")
            params = []
            if params_text.strip():
                params = [_parse_param(tok.strip(), lineno) for tok in params_text.split(",")]
            seen = set()
            for p in params:
                if p.name in seen:
                    raise SirSyntaxError(lineno, f"duplicate parameter {p.name!r}")
                seen.add(p.name)
            current = KernelDef(name, params, regs, [], {}, line=lineno)
            continue
        if current is None:
            raise SirSyntaxError(lineno, "instruction outside of any kernel")
        # peel label prefixes (a line may be only a label)
        while True:
            lm = _LABEL_RE.match(line)
            if not lm:
                break
            label = lm.group(1)
            if label in current.labels or any(l == label for l, _ in pending_labels):
                raise SirSyntaxError(lineno, f"duplicate label {label!r}")
            pending_labels.append((label, lineno))
            line = lm.group(2).strip()
            if not line:
                break
        if not line:
            continue
        iid = len(current.instructions)
        ins = _parse_instruction(iid, line, lineno)
        for label, _ in pending_labels:
            current.labels[label] = iid
        pending_labels = []
        current.instructions.append(ins)
        if ins.opcode == Opcode.BRA:
            pending_bras.append(ins)

    finish_kernel()
    if not kernels:
        raise SirSyntaxError(0, "no kernels in program")
    prog = Program(kernels)
    prog.digest = program_digest(prog)
    return prog


def build_cfg(kernel: KernelDef) -> tuple[list[BasicBlock], set[tuple[int, int]]]:
    """Partition instructions into basic blocks and derive the static edge set.

    Leaders: instruction 0, every branch target, every instruction following a
    BRA or an EXIT.  Edges: branch-taken edges and fallthrough edges; EXIT
    terminates its block with no successors.
    """
    instrs = kernel.instructions
    n = len(instrs)
    leaders = {0}
    for ins in instrs:
        if ins.opcode == Opcode.BRA:
            leaders.add(ins.target_iid)
            if ins.iid + 1 < n:
                leaders.add(ins.iid + 1)
        elif ins.opcode == Opcode.EXIT:
            if ins.iid + 1 < n:
                leaders.add(ins.iid + 1)
    starts = sorted(leaders)
    blocks: list[BasicBlock] = []
    for bid, start in enumerate(starts):
        end = (starts[bid + 1] - 1) if bid + 1 < len(starts) else n - 1
        blocks.append(BasicBlock(bid, start, end))
        for iid in range(start, end + 1):
            instrs[iid].block = bid
    bid_of = {b.start: b.bid for b in blocks}
    edges: set[tuple[int, int]] = set()
    for b in blocks:
        term = instrs[b.end]
        if term.opcode == Opcode.EXIT:
            continue
        if term.opcode == Opcode.BRA:
            edges.add((b.bid, bid_of[term.target_iid]))
            if term.pred is not None and b.end + 1 < n:
                edges.add((b.bid, bid_of[b.end + 1]))
        elif b.end + 1 < n:
            edges.add((b.bid, bid_of[b.end + 1]))
    return blocks, edges


# -- validation ----------------------------------------------------------------

_KIND_REG_CLASS = {"f32": "f", "b8": "r", "b16": "r", "b32": "r", "b64": "a"}


def _operand_class(op) -> str:
    """'r'/'f'/'p'/'a' for registers, 'i' for int imm, 'F' for float imm."""
    if isinstance(op, tuple):
        return op[0]
    return "i" if isinstance(op, int) else "F"


def validate(program: Program) -> list[Diagnostic]:
    """Type and well-formedness checks beyond syntax; empty list means clean."""
    diags: list[Diagnostic] = []

    for kname, k in program.kernels.items():
        def diag(iid: int, code: str, msg: str):
            diags.append(Diagnostic(kname, iid, code, msg))

        for p in k.params:
            if p.type == ScalarType.PTR and p.space is None:
                diag(-1, "MissingSpaceAnnotation",
                     f"pointer parameter {p.name!r} needs a space annotation")
        by_class = {"r": 0, "f": 0, "a": 0}
        for p in k.params:
            cls = {"i32": "r", "f32": "f", "ptr": "a"}[p.type.value]
            by_class[cls] += 1
        for cls, cnt in by_class.items():
            if cnt > k.register_count:
                diag(-1, "RegisterOutOfRange",
                     f"{cnt} {cls}-class parameters exceed regs={k.register_count}")

        for ins in k.instructions:
            regs = []
            if ins.dst is not None:
                regs.append(ins.dst)
            regs.extend(op for op in ins.srcs if isinstance(op, tuple))
            if ins.pred is not None:
                regs.append(ins.pred)
            if ins.addr is not None:
                regs.append(ins.addr[0])
            for cls, idx in regs:
                if idx >= k.register_count:
                    diag(ins.iid, "RegisterOutOfRange",
                         f"%{cls}{idx} exceeds regs={k.register_count}")

            op = ins.opcode
            if op == Opcode.MOV:
                dcls = ins.dst[0]
                scls = _operand_class(ins.srcs[0])
                ok = (dcls == "r" and scls in ("r", "i")) or \
                     (dcls == "f" and scls in ("f", "F")) or \
                     (dcls == "a" and scls in ("a", "i")) or \
                     (dcls == "p" and scls == "p")
                if not ok:
                    diag(ins.iid, "TypeMismatch", f"mov %{dcls} from {scls!r} operand")
            elif op in (Opcode.ADD, Opcode.SUB, Opcode.MUL):
                dcls = ins.dst[0]
                c1, c2 = (_operand_class(s) for s in ins.srcs)
                if dcls == "a" and op != Opcode.MUL:
                    if not (c1 == "a" and c2 in ("r", "i")):
                        diag(ins.iid, "TypeMismatch",
                             "pointer add/sub needs pointer first operand and i32 second")
                elif dcls == "r":
                    if not (c1 in ("r", "i") and c2 in ("r", "i")):
                        diag(ins.iid, "TypeMismatch", "integer arithmetic on non-i32 operand")
                else:
                    diag(ins.iid, "TypeMismatch", f"{op.name.lower()} cannot target %{dcls}")
            elif op in (Opcode.FADD, Opcode.FSUB, Opcode.FMUL):
                dcls = ins.dst[0]
                c1, c2 = (_operand_class(s) for s in ins.srcs)
                if dcls != "f" or c1 not in ("f", "F") or c2 not in ("f", "F"):
                    diag(ins.iid, "TypeMismatch", "float arithmetic needs f32 operands")
            elif op == Opcode.SETP:
                if ins.dst[0] != "p":
                    diag(ins.iid, "TypeMismatch", "setp destination must be a predicate")
                c1, c2 = (_operand_class(s) for s in ins.srcs)
                int_ok = c1 in ("r", "i") and c2 in ("r", "i")
                flt_ok = c1 in ("f", "F") and c2 in ("f", "F")
                if not (int_ok or flt_ok):
                    diag(ins.iid, "TypeMismatch", "setp operands must both be i32 or both f32")
            elif op == Opcode.BRA:
                if ins.pred is not None and ins.pred[0] != "p":
                    diag(ins.iid, "TypeMismatch", "bra predicate must be a %p register")
            elif op in (Opcode.LD, Opcode.ST):
                want = _KIND_REG_CLASS[ins.mem_kind]
                if ins.addr[0][0] != "a":
                    diag(ins.iid, "TypeMismatch", "memory address base must be a %a register")
                if op == Opcode.LD:
                    if ins.dst[0] != want:
                        diag(ins.iid, "TypeMismatch",
                             f"ld.{ins.mem_kind} destination must be %{want}")
                else:
                    scls = _operand_class(ins.srcs[0])
                    ok = (want == "r" and scls in ("r", "i")) or \
                         (want == "f" and scls in ("f", "F")) or \
                         (want == "a" and scls == "a")
                    if not ok:
                        diag(ins.iid, "TypeMismatch",
                             f"st.{ins.mem_kind} source must be %{want}-compatible")
            elif op == Opcode.CVT:
                dty, sty = ins.cvt
                pair_ok = (dty, sty) in ((ScalarType.F32, ScalarType.I32),
                                         (ScalarType.I32, ScalarType.F32))
                if not pair_ok:
                    diag(ins.iid, "TypeMismatch", "cvt supports f32<->i32 only")
                else:
                    want_d = "f" if dty == ScalarType.F32 else "r"
                    want_s = "r" if sty == ScalarType.I32 else "f"
                    if ins.dst[0] != want_d or _operand_class(ins.srcs[0]) != want_s:
                        diag(ins.iid, "TypeMismatch", "cvt register classes do not match suffixes")
            elif op == Opcode.SREG:
                if ins.dst[0] != "r":
                    diag(ins.iid, "TypeMismatch", "sreg destination must be %r")
    return diags


# -- canonical printing ----------------------------------------------------------


def _fmt_operand(op) -> str:
    if isinstance(op, tuple):
        return f"%{op[0]}{op[1]}"
    if isinstance(op, int):
        return str(op)
    return repr(op)  # shortest roundtrip-safe float text


def _fmt_instruction(ins: Instruction) -> str:
    op = ins.opcode
    if op == Opcode.MOV:
        return f"mov {_fmt_operand(ins.dst)}, {_fmt_operand(ins.srcs[0])}"
    if op in (Opcode.ADD, Opcode.SUB, Opcode.MUL, Opcode.FADD, Opcode.FSUB, Opcode.FMUL):
        name = op.name.lower()
        return f"{name} {_fmt_operand(ins.dst)}, {_fmt_operand(ins.srcs[0])}, {_fmt_operand(ins.srcs[1])}"
    if op == Opcode.SETP:
        return f"setp.{ins.cmp} {_fmt_operand(ins.dst)}, {_fmt_operand(ins.srcs[0])}, {_fmt_operand(ins.srcs[1])}"
    if op == Opcode.BRA:
        if ins.pred is None:
            return f"bra {ins.target}"
        bang = "!" if ins.pred_negate else ""
        return f"bra {bang}{_fmt_operand(ins.pred)}, {ins.target}"
    if op in (Opcode.LD, Opcode.ST):
        base, off = ins.addr
        if off:
            sign = "+" if off > 0 else "-"
            atxt = f"[{_fmt_operand(base)}{sign}{abs(off)}]"
        else:
            atxt = f"[{_fmt_operand(base)}]"
        if op == Opcode.LD:
            return f"ld.{ins.space.value}.{ins.mem_kind} {_fmt_operand(ins.dst)}, {atxt}"
        return f"st.{ins.space.value}.{ins.mem_kind} {atxt}, {_fmt_operand(ins.srcs[0])}"
    if op == Opcode.CVT:
        dty, sty = ins.cvt
        return f"cvt.{dty.value}.{sty.value} {_fmt_operand(ins.dst)}, {_fmt_operand(ins.srcs[0])}"
    if op == Opcode.SREG:
        return f"sreg {_fmt_operand(ins.dst)}, {ins.sreg}"
    if op == Opcode.EXIT:
        return "exit"
    raise AssertionError(op)


def _fmt_param(p: Param) -> str:
    if p.type == ScalarType.PTR:
        space = p.space.value if p.space else "?"
        return f"{p.name}:ptr.{space}"
    return f"{p.name}:{p.type.value}"


def print_program(program: Program) -> str:
    """Canonical text form; parse(print(p)) is a fixed point."""
    out = []
    for k in program.kernels.values():
        params = ", ".join(_fmt_param(p) for p in k.params)
        out.append(f"kernel {k.name}({params}) regs={k.register_count}")
        labels_at: dict[int, list[str]] = {}
        for label, iid in k.labels.items():
            labels_at.setdefault(iid, []).append(label)
        for ins in k.instructions:
            for label in sorted(labels_at.get(ins.iid, ())):
                out.append(f"{label}:")
            out.append(f"  {_fmt_instruction(ins)}")
        out.append("")
    return "\n".join(out)


def program_digest(program: Program) -> str:
    """Content digest over the canonical text, stable across formatting edits."""
    return hashlib.sha256(print_program(program).encode()).hexdigest()[:16]


def kernel_signature(k: KernelDef) -> tuple:
    """Structural identity used by roundtrip tests: ids, operands, blocks, edges."""
    ins_sig = tuple(
        (i.iid, i.opcode, i.dst, i.srcs, i.cmp, i.pred, i.pred_negate, i.target_iid,
         i.space, i.mem_kind, i.width, i.addr, i.sreg, i.cvt, i.block)
        for i in k.instructions)
    blk_sig = tuple((b.bid, b.start, b.end) for b in k.blocks)
    par_sig = tuple((p.name, p.type, p.space) for p in k.params)
    return (k.name, par_sig, k.register_count, ins_sig, blk_sig, frozenset(k.edges))
