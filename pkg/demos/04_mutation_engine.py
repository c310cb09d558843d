"""Walk the typed mutation engine: seeds, schedules, operators, and replay.

Arguments are declared once (type, shape, seed, valid domain); the engine
derives the seed test case, walks integer boundaries first, then draws
weighted random operators.  Every test case carries its full mutation trace,
so any input can be re-derived from the seed alone.
"""

import struct

from simt_forge.kernel_ir import MemSpace, ScalarType
from simt_forge.mutation import (
    GENERIC_KINDS,
    TYPE_AWARE_KINDS,
    ArgSpec,
    MutationSchedule,
    apply_trace,
    mutate_testcase,
    parse_testcase,
    seed_testcase,
    serialize_testcase,
)
from simt_forge.rng import Stream

SPECS = [
    ArgSpec("scale", ScalarType.F32, seed_float=1.5, flo=-8.0, fhi=8.0),
    ArgSpec("data", ScalarType.PTR, elem="f32", count=4, seed_fill="seq",
            flo=-100.0, fhi=100.0, space=MemSpace.GLOBAL),
    ArgSpec("n", ScalarType.I32, seed_int=4, lo=0, hi=4),
]


def fmt(v):
    if hasattr(v, "data"):
        vals = struct.unpack(f"<{len(v.data) // 4}f", v.data)
        return f"{v.space.value}[{', '.join(f'{x:g}' for x in vals)}] " \
               f"offset={v.base_offset}"
    if hasattr(v, "bits"):
        return f"{v.value:g} (bits 0x{v.bits:08X})"
    return str(v.value)


def show(tag, tc):
    print(f"  {tag}")
    for spec, val in zip(SPECS, tc.args):
        print(f"    {spec.name:<5} = {fmt(val)}")


def main():
    print(f"type-aware operators : {', '.join(sorted(TYPE_AWARE_KINDS))}")
    print(f"generic operators    : {', '.join(sorted(GENERIC_KINDS))}\n")

    seed = seed_testcase(SPECS, rng_seed=0)
    show("seed test case:", seed)

    print("\nfive derivation steps (each child records its ops vs its parent):")
    sched = MutationSchedule()
    rng = Stream(42, 0)
    tc, lineage = seed, []
    for step in range(1, 6):
        tc = mutate_testcase(tc, SPECS, sched, rng)
        lineage.extend(tc.trace)
        print(f"  step {step}: " + "; ".join(op.encode() for op in tc.trace))
    show("after 5 steps:", tc)

    print("\nthe flattened lineage replays from the seed with no randomness:")
    replayed = apply_trace(seed, tuple(lineage), tc.rng_seed)
    assert replayed.args == tc.args
    print(f"  {len(lineage)} ops reproduce every argument bit-for-bit")

    print("\nserialized record (content-addressed, tamper-evident):")
    text = serialize_testcase(tc)
    print("  " + "\n  ".join(text.splitlines()))
    back, extras = parse_testcase(text, specs=SPECS)
    assert back.args == tc.args
    print(f"  parsed back: {len(back.trace)} trace ops, extras={extras}")


if __name__ == "__main__":
    main()
