"""Run a coverage-guided campaign end to end, then replay the crash artifact.

A harness manifest splits host work into three phases: INIT runs once and is
snapshotted, COMPUTE re-runs per iteration on restored state with mutated
arguments, TERM runs once at the end.  The campaign stops as soon as the
requested bug class shows up, writes a self-contained artifact per unique
finding, and every artifact replays deterministically.
"""

import tempfile
from pathlib import Path

from simt_forge.bench import get_benchmark
from simt_forge.campaign import CampaignConfig, fuzz_loop, load_harness, replay
from simt_forge.sanitizer import BugClass


def main():
    entry = get_benchmark("dot")
    manifest = load_harness(entry.harness_path)
    print(f"harness : {entry.harness_path.name} for benchmark {entry.name!r}")
    print(f"program : {manifest.program_digest} "
          f"(kernels: {', '.join(manifest.program.kernels)})")
    print(f"args    : {', '.join(s.name for s in manifest.argspecs)}\n")

    out_dir = Path(tempfile.mkdtemp(prefix="simt-forge-demo-")) / "campaign"
    summary = fuzz_loop(manifest, CampaignConfig(
        master_seed=11, iterations=10_000,
        stop_bug_class=BugClass.SPATIAL_OOB, out_dir=out_dir))

    print("campaign summary:")
    print("  " + summary.to_rec().replace("\n", "\n  ").rstrip())
    print("\nfindings (deduplicated by bug site):")
    print("  " + summary.findings.render_text().replace("\n", "\n  ").rstrip())

    print("\nINIT ran once for "
          f"{summary.compute_runs} compute iterations "
          f"(init_runs={summary.init_runs}, term_runs={summary.term_runs})")

    report = summary.findings.first_of_class(BugClass.SPATIAL_OOB)
    artifact = out_dir / "crashes" / f"{report.dedupe_key}.tc"
    print(f"\nreplaying {artifact.name}:")
    result = replay(artifact)
    print(f"  reproduced        : {result.reproduced}")
    print(f"  expected dedupe   : {result.expected_dedupe}")
    print(f"  replayed finding  : {result.report.to_line()}")

    print(f"\ncampaign directory tree ({out_dir}):")
    for p in sorted(out_dir.rglob("*")):
        print(f"  {p.relative_to(out_dir)}")


if __name__ == "__main__":
    main()
