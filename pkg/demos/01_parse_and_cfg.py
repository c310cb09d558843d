"""Parse a kernel, inspect its control-flow graph, and run static checks.

Programs are plain text: one or more kernels, each a list of instructions.
The parser splits every kernel into basic blocks and derives the static edge
set that coverage tracking is keyed on.
"""

from simt_forge.kernel_ir import parse_program, print_program, validate

SOURCE = """\
kernel clamp_scale(s:f32, x:ptr.global, n:i32) regs=8
  sreg %r1, tid
  setp.ge %p0, %r1, %r0
  bra %p0, done
  mul %r2, %r1, 4
  add %a1, %a0, %r2
  ld.global.f32 %f1, [%a1]
  fmul %f1, %f1, %f0
  setp.lt %p1, %f1, 0.0
  bra !%p1, store
  mov %f1, 0.0
store:
  st.global.f32 [%a1], %f1
done:
  exit
"""


def main():
    program = parse_program(SOURCE)
    kernel = program.kernels["clamp_scale"]

    print(f"program digest : {program.digest}")
    print(f"kernel         : {kernel.name}")
    print(f"params         : {[(p.name, p.type.name) for p in kernel.params]}")
    print(f"basic blocks   : {len(kernel.blocks)}")
    for block in kernel.blocks:
        ins = kernel.instructions[block.start:block.end + 1]
        ops = " ".join(i.opcode.name for i in ins)
        print(f"  block {block.bid}: instructions {block.start}..{block.end}: {ops}")
    print(f"static edges   : {sorted(kernel.edges)}")

    assert not validate(program), "demo source must be statically clean"

    print("\nstatic checks on a broken variant:")
    broken = SOURCE.replace("fmul %f1, %f1, %f0", "fmul %f1, %f1, %r0")
    for diag in validate(parse_program(broken)):
        where = diag.kernel if diag.iid < 0 else f"{diag.kernel}@{diag.iid}"
        print(f"  {where}: {diag.code}: {diag.message}")

    print("\ncanonical round trip (print -> parse -> print is a fixed point):")
    rendered = print_program(program)
    assert print_program(parse_program(rendered)) == rendered
    print(rendered)


if __name__ == "__main__":
    main()
