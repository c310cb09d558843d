"""Trigger each bug class on a small device image and read the reports.

Every 4-byte granule of simulated memory carries a shadow state; loads and
stores are classified against it (plus the allocation registry) before they
touch payload bytes.  The first finding stops the launch, and a findings log
deduplicates repeats by bug site.
"""

import struct

from simt_forge.device_memory import DeviceMemoryImage, InvalidFreeError, MemConfig
from simt_forge.executor import ArgValue, LaunchConfig, launch
from simt_forge.kernel_ir import MemSpace, ScalarType, parse_program
from simt_forge.sanitizer import FindingsLog, check_access, invalid_free_report

READER = """\
kernel reader(src:ptr.global, n:i32) regs=8
  sreg %r1, tid
  mul %r2, %r1, 4
  add %a1, %a0, %r2
  ld.global.f32 %f0, [%a1]
  exit
"""

SHARED_READER = """\
kernel sh_reader(src:ptr.shared) regs=4
  ld.shared.f32 %f0, [%a0]
  exit
"""


def show(tag, report):
    print(f"  {tag}: {report.to_line()}")


def main():
    cfg = MemConfig(global_size=65536, shared_size=4096, local_size=4096,
                    granule=4, redzone=16, quarantine_global=4096)
    image = DeviceMemoryImage(cfg)
    program = parse_program(READER)
    log = FindingsLog()

    print("linear overrun (8 floats allocated, 9 threads read):")
    buf, buf_id = image.alloc(MemSpace.GLOBAL, 32, label="buf")
    image.copy_in(buf, struct.pack("<8f", *range(8)))
    out = launch(program, image, LaunchConfig(
        "reader", 1, 9, [ArgValue(ScalarType.PTR, buf, prov=buf_id),
                         ArgValue(ScalarType.I32, 9)]))
    log.add(out.report)
    show("SPATIAL_OOB ", out.report)

    print("\nread through a freed (quarantined) buffer:")
    stale, stale_id = image.alloc(MemSpace.GLOBAL, 32, label="stale")
    image.free(stale)
    out = launch(program, image, LaunchConfig(
        "reader", 1, 1, [ArgValue(ScalarType.PTR, stale, prov=stale_id),
                         ArgValue(ScalarType.I32, 1)]))
    log.add(out.report)
    show("TEMPORAL_UAF", out.report)

    print("\nshared-space instruction aimed at a global allocation:")
    sh_program = parse_program(SHARED_READER)
    out = launch(sh_program, image, LaunchConfig(
        "sh_reader", 1, 1, [ArgValue(ScalarType.PTR, buf, prov=buf_id)]))
    log.add(out.report)
    show("SPACE_MISMATCH", out.report)

    print("\npointer biased past its own allocation into a live neighbor:")
    a, a_id = image.alloc(MemSpace.GLOBAL, 32, label="mine")
    b, _ = image.alloc(MemSpace.GLOBAL, 32, label="neighbor")
    # the address is inside the live neighbor, but its provenance tag says it
    # was derived from "mine": addressable shadow is not enough to pass
    out = launch(program, image, LaunchConfig(
        "reader", 1, 1, [ArgValue(ScalarType.PTR, b, prov=a_id),
                         ArgValue(ScalarType.I32, 1)]))
    log.add(out.report)
    show("PROVENANCE_ESCAPE", out.report)
    print(f"  (report pins the source allocation, alloc_id={out.report.alloc_id})")

    print("\nhost-side copy probe and an invalid free:")
    wild = check_access(image, image.addr_of(MemSpace.GLOBAL, 60000), 4,
                        MemSpace.GLOBAL, None, kernel="HOST", iid=-1)
    log.add(wild)
    show("WILD_ACCESS ", wild)
    try:
        image.free(buf + 4)
    except InvalidFreeError as exc:
        report = invalid_free_report(image, buf + 4, exc.reason)
        log.add(report)
        show("INVALID_FREE", report)

    print("\ndeduplicated findings log:")
    print(log.render_text())


if __name__ == "__main__":
    main()
