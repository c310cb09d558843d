"""Collect edge coverage across launches and render the block-coverage table.

Coverage is recorded per control-flow edge against each kernel's static edge
set.  Block coverage is derived from hit edges, percentages use half-up
rounding to two decimals, and the suite-level summary line is the geometric
mean over kernels with nonzero coverage.
"""

import struct

from simt_forge.coverage import (
    CoverageMap,
    build_report,
    new_edges_since,
    render_text,
)
from simt_forge.device_memory import DeviceMemoryImage, MemSpace
from simt_forge.executor import ArgValue, LaunchConfig, launch
from simt_forge.kernel_ir import ScalarType, parse_program

SOURCE = """\
kernel relu(x:ptr.global, n:i32) regs=8
  sreg %r1, tid
  setp.ge %p0, %r1, %r0
  bra %p0, done
  mul %r2, %r1, 4
  add %a1, %a0, %r2
  ld.global.f32 %f0, [%a1]
  setp.lt %p1, %f0, 0.0
  bra !%p1, done
  mov %f0, 0.0
  st.global.f32 [%a1], %f0
done:
  exit

kernel touch(x:ptr.global) regs=4
  ld.global.f32 %f0, [%a0]
  exit
"""


def run(program, image, cov, buf, values, threads):
    image.copy_in(buf, struct.pack(f"<{len(values)}f", *values))
    out = launch(program, image, LaunchConfig(
        "relu", 1, threads,
        [ArgValue(ScalarType.PTR, buf), ArgValue(ScalarType.I32, len(values))]),
        coverage=cov)
    assert out.report is None
    return cov


def main():
    program = parse_program(SOURCE)
    image = DeviceMemoryImage()
    buf, _ = image.alloc(MemSpace.GLOBAL, 16)
    cov = CoverageMap.for_program(program)

    print("launch 1: all positive inputs (negative branch never taken)")
    before = cov.fresh()
    run(program, image, cov, buf, [1.0, 2.0, 3.0, 4.0], threads=4)
    print(f"  new edges: {sorted(new_edges_since(cov, before))}")

    print("launch 2: a negative input lights up the clamp path")
    before = cov.fresh()
    before.merge_from(cov)
    run(program, image, cov, buf, [1.0, -2.0, 3.0, 4.0], threads=4)
    print(f"  new edges: {sorted(new_edges_since(cov, before))}")

    print("launch 3: extra thread takes the early-exit guard")
    before = cov.fresh()
    before.merge_from(cov)
    run(program, image, cov, buf, [1.0, -2.0, 3.0, 4.0], threads=5)
    print(f"  new edges: {sorted(new_edges_since(cov, before))}")

    print("\nper-kernel table ('touch' was never launched, so it is excluded")
    print("from the geometric mean and footnoted):\n")
    print(render_text(build_report(cov)))


if __name__ == "__main__":
    main()
