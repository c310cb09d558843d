"""Harness manifests, phase execution, the fuzz loop, and crash replay."""

import hashlib
import struct
from pathlib import Path

import pytest

from simt_forge.bench import get_benchmark
from simt_forge.campaign import (
    COMPUTE,
    INIT,
    TERM,
    ArgArityError,
    CampaignConfig,
    CampaignFatalError,
    Corpus,
    DanglingFreeError,
    DeviceMemoryImage,
    DigestMismatchError,
    ManifestError,
    ManifestSyntaxError,
    PhaseRunner,
    UnknownKernelRefError,
    execute_once,
    fuzz_loop,
    load_harness,
    replay,
    schedule_next,
)
from simt_forge.campaign import _worker_ranges
from simt_forge.kernel_ir import ScalarType
from simt_forge.mutation import MutationOp, apply_trace, parse_testcase
from simt_forge.rng import Stream
from simt_forge.sanitizer import BugClass


ARITH_KERNEL = """\
kernel calc(a:f32, n:i32, out:ptr.global) regs=8
  sreg %r1, tid
  add %r1, %r1, %r0
  cvt.f32.i32 %f1, %r1
  fmul %f1, %f1, %f0
  st.global.f32 [%a0], %f1
  exit
"""

# stores only to a fixed in-bounds slot, so no mutated input can fault it
ARITH_HARNESS = """\
program calc.sir

argspec a f32 seed=1.5 flo=-8 fhi=8
argspec n i32 seed=3 lo=0 hi=100
argspec out ptr global f32 count=1 seed=const:0 flo=-1 fhi=1 fixed

init:
  alloc scratch global 64
  copy_in scratch zeros:64
compute:
  launch calc grid=1 block=1 args=arg:0,arg:1,arg:2
  copy_out arg:2
term:
  free scratch
"""


def write_harness(tmp_path, kernel_text=ARITH_KERNEL, harness_text=ARITH_HARNESS,
                  kernel_name="calc.sir", harness_name="harness.man"):
    (tmp_path / kernel_name).write_text(kernel_text)
    path = tmp_path / harness_name
    path.write_text(harness_text)
    return path


def bundled(name):
    return load_harness(get_benchmark(name).root / "harness.man")


# -- manifest loading --------------------------------------------------------


def test_bundled_axpy_manifest_shape():
    m = bundled("axpy")
    launches = [op for op in m.phases[COMPUTE] if op.kind == "launch"]
    assert len(launches) == 1
    kinds = [s.kind for s in m.argspecs]
    assert kinds == [ScalarType.F32, ScalarType.PTR, ScalarType.PTR, ScalarType.I32]
    assert [s.name for s in m.argspecs] == ["a", "x", "y", "n"]


def test_manifest_digest_anchored_to_program_content(tmp_path):
    m1 = bundled("axpy")
    src = get_benchmark("axpy").root
    # copy under a different program file name; digests must not move
    (tmp_path / "renamed.sir").write_text((src / "kernel.sir").read_text())
    (tmp_path / "h.man").write_text(
        (src / "harness.man").read_text().replace("program kernel.sir",
                                                  "program renamed.sir"))
    m2 = load_harness(tmp_path / "h.man")
    assert m2.program_digest == m1.program_digest
    assert m2.digest == m1.digest


def test_portable_text_reloads_identically(tmp_path):
    m1 = bundled("axpy")
    (tmp_path / "program.sir").write_text(m1.program_text)
    (tmp_path / "h.man").write_text(m1.portable_text("program.sir"))
    m2 = load_harness(tmp_path / "h.man")
    assert m2.digest == m1.digest


def test_dangling_free_rejected(tmp_path):
    bad = ARITH_HARNESS.replace("  free scratch", "  free scratch\n  free ghost")
    path = write_harness(tmp_path, harness_text=bad)
    with pytest.raises(DanglingFreeError):
        load_harness(path)


def test_empty_compute_rejected(tmp_path):
    bad = ARITH_HARNESS.replace(
        "  launch calc grid=1 block=1 args=arg:0,arg:1,arg:2\n  copy_out arg:2\n",
        "  copy_out arg:2\n")
    path = write_harness(tmp_path, harness_text=bad)
    with pytest.raises(ManifestSyntaxError):
        load_harness(path)


def test_launch_arity_mismatch_rejected(tmp_path):
    bad = ARITH_HARNESS.replace("args=arg:0,arg:1,arg:2", "args=arg:0,arg:1")
    path = write_harness(tmp_path, harness_text=bad)
    with pytest.raises(ArgArityError):
        load_harness(path)


def test_unknown_kernel_rejected(tmp_path):
    bad = ARITH_HARNESS.replace("launch calc", "launch nosuch")
    path = write_harness(tmp_path, harness_text=bad)
    with pytest.raises(UnknownKernelRefError):
        load_harness(path)


def test_missing_program_file(tmp_path):
    path = tmp_path / "h.man"
    path.write_text(ARITH_HARNESS)
    with pytest.raises(ManifestError):
        load_harness(path)


def test_seed_testcase_matches_argspecs(tmp_path):
    m = load_harness(write_harness(tmp_path))
    tc = m.seed(1)
    assert tc.args[0].value == 1.5
    assert tc.args[1].value == 3
    assert tc.args[2].count == 1


# -- phase execution ---------------------------------------------------------


def test_init_stages_declared_allocations(tmp_path):
    m = load_harness(write_harness(tmp_path))
    image = DeviceMemoryImage()
    runner = PhaseRunner(m, image)
    out = runner.run_phase(INIT, m.seed(1), iteration=0)
    assert out.status == "ok"
    assert [r.label for r in image.live_allocations()] == ["scratch"]
    data, _ = image.copy_out(image.live_allocations()[0].base, 64)
    assert data == bytes(64)


def test_bundled_init_allocation_count():
    m = bundled("axpy")
    image = DeviceMemoryImage()
    runner = PhaseRunner(m, image)
    assert runner.run_phase(INIT, m.seed(1), iteration=0).status == "ok"
    labels = {r.label for r in image.live_allocations()}
    assert labels == {"ws", "lut"}


def test_compute_with_overflow_testcase_reports_spatial():
    m = bundled("axpy")
    seed = m.seed(1)
    oob = apply_trace(seed, (MutationOp.make("int_boundary", 3, which="max"),))
    out, _ = execute_once(m, oob)
    assert out.status == "finding"
    assert out.report.bug_class == BugClass.SPATIAL_OOB


def test_term_releases_everything(tmp_path):
    m = load_harness(write_harness(tmp_path))
    image = DeviceMemoryImage()
    runner = PhaseRunner(m, image)
    seed = m.seed(1)
    assert runner.run_phase(INIT, seed, iteration=0).status == "ok"
    runner.mark_baseline()
    snap = image.snapshot()
    assert runner.run_phase(COMPUTE, seed, iteration=1).status == "ok"
    # the loop always rolls back per-iteration materializations before teardown
    image.restore(snap)
    runner.reset_to_baseline()
    assert runner.run_phase(TERM, seed, iteration=-1).status == "ok"
    assert image.live_allocations() == []


def test_compute_readouts_returned(tmp_path):
    m = load_harness(write_harness(tmp_path))
    seed = m.seed(1)
    out, _ = execute_once(m, seed, diff_readback=True)
    assert out.status == "ok"
    # tid 0 plus n=3 scaled by a=1.5
    assert struct.unpack("<f", out.readouts["arg2"])[0] == 4.5


# -- fuzz loop ---------------------------------------------------------------


def test_clean_harness_runs_all_iterations(tmp_path):
    m = load_harness(write_harness(tmp_path))
    summary = fuzz_loop(m, CampaignConfig(master_seed=3, iterations=100))
    assert summary.iterations_executed == 100
    assert summary.init_runs == 1
    assert summary.compute_runs == 100
    assert summary.term_runs == 1
    assert len(summary.findings) == 0
    assert summary.stop_reason == "iterations"


def test_first_finding_stop_and_artifact_replay(tmp_path):
    m = bundled("axpy")
    out_dir = tmp_path / "run"
    cfg = CampaignConfig(master_seed=7, iterations=5000,
                         stop_on_first_finding=True, out_dir=out_dir)
    summary = fuzz_loop(m, cfg)
    assert summary.stop_reason == "first_finding"
    assert summary.iterations_executed <= 5000
    assert len(summary.findings) == 1
    report = summary.findings.reports()[0]
    artifact = out_dir / "crashes" / f"{report.dedupe_key}.tc"
    assert artifact.exists()
    result = replay(artifact)
    assert result.reproduced
    assert result.report.dedupe_key == report.dedupe_key
    assert result.report.bug_class == report.bug_class


def test_same_seed_runs_are_byte_identical(tmp_path):
    m = bundled("dot")
    trees = []
    for name in ("a", "b"):
        out_dir = tmp_path / name
        fuzz_loop(m, CampaignConfig(master_seed=11, iterations=150,
                                    out_dir=out_dir))
        digest = {}
        for f in sorted(out_dir.rglob("*")):
            if f.is_file() and f.name != "timing.rec":
                digest[f.relative_to(out_dir)] = hashlib.sha256(
                    f.read_bytes()).hexdigest()
        trees.append(digest)
    assert trees[0] == trees[1]
    assert len(trees[0]) > 5


def test_amortized_and_reinit_find_the_same_bugs():
    m = bundled("scal")
    finding_keys = []
    for mode in ("amortized", "reinit"):
        summary = fuzz_loop(m, CampaignConfig(master_seed=5, iterations=60,
                                              mode=mode))
        finding_keys.append([r.dedupe_key for r in summary.findings.reports()])
        assert summary.compute_runs == 60
    assert finding_keys[0] == finding_keys[1]


def test_reinit_counts_init_per_iteration():
    m = bundled("scal")
    summary = fuzz_loop(m, CampaignConfig(master_seed=5, iterations=20,
                                          mode="reinit"))
    assert summary.init_runs == 20
    assert summary.term_runs == 20


def test_stop_bug_class():
    m = bundled("axpy")
    cfg = CampaignConfig(master_seed=7, iterations=5000,
                         stop_bug_class=BugClass.SPATIAL_OOB)
    summary = fuzz_loop(m, cfg)
    assert summary.stop_reason == "bug_class:SPATIAL_OOB"
    assert BugClass.SPATIAL_OOB in summary.findings.classes()


def test_wall_clock_stop():
    m = bundled("copy")
    cfg = CampaignConfig(master_seed=2, iterations=10**9, max_wall_seconds=0.5)
    summary = fuzz_loop(m, cfg)
    assert summary.stop_reason == "wall_clock"
    assert summary.iterations_executed < 10**9


def test_invalid_config_rejected(tmp_path):
    m = load_harness(write_harness(tmp_path))
    with pytest.raises(CampaignFatalError):
        fuzz_loop(m, CampaignConfig(iterations=0))
    with pytest.raises(CampaignFatalError):
        fuzz_loop(m, CampaignConfig(mode="warp"))


def test_state_isolation_under_restore(tmp_path):
    """After each restore the image must be bit-identical to the post-
    initialization snapshot."""
    m = bundled("rot")
    image = DeviceMemoryImage()
    runner = PhaseRunner(m, image)
    seed = m.seed(1)
    assert runner.run_phase(INIT, seed, iteration=0).status == "ok"
    runner.mark_baseline()
    snap = image.snapshot()
    baseline = snap.to_bytes()
    rng = Stream(3, 77)
    from simt_forge.mutation import MutationSchedule, mutate_testcase
    sched = MutationSchedule()
    tc = seed
    for it in range(1, 8):
        tc = mutate_testcase(tc, m.argspecs, sched, rng)
        runner.run_phase(COMPUTE, tc, iteration=it)
        image.restore(snap)
        runner.reset_to_baseline()
        assert image.snapshot().to_bytes() == baseline


def test_summary_rec_round_trip_fields(tmp_path):
    m = load_harness(write_harness(tmp_path))
    summary = fuzz_loop(m, CampaignConfig(master_seed=1, iterations=5))
    rec = summary.to_rec()
    assert "summary v1" in rec
    assert "iterations_executed=5" in rec
    assert f"manifest={m.digest}" in rec
    assert f"argspec={summary.argspec_digest}" in rec


# -- corpus scheduling -------------------------------------------------------


def seed_corpus(n=3):
    m = bundled("axpy")
    corpus = Corpus()
    for i in range(n):
        corpus.add_seed(m.seed(i))
    return corpus


def test_scheduler_with_only_seeds_picks_seeds():
    corpus = seed_corpus()
    rng = Stream(5, 0)
    seen_ids = {schedule_next(corpus, rng, current_iteration=i).id
                for i in range(20)}
    assert seen_ids <= {e.tc.id for e in corpus.entries}


def test_scheduler_sequence_is_deterministic():
    picks1 = [schedule_next(seed_corpus(), Stream(5, 0), i).id for i in range(30)]
    picks2 = [schedule_next(seed_corpus(), Stream(5, 0), i).id for i in range(30)]
    assert picks1 == picks2


def test_fresh_admission_weighted_into_next_picks():
    corpus = seed_corpus(3)
    m = bundled("axpy")
    fresh = apply_trace(m.seed(9), (MutationOp.make("int_boundary", 3,
                                                    which="zero"),))
    corpus.admit(fresh, iteration=50)
    rng = Stream(5, 0)
    picks = [schedule_next(corpus, rng, current_iteration=51).id
             for _ in range(100)]
    count = sum(1 for p in picks if p == fresh.id)
    assert count > 0
    # 4x weight over 3 unit-weight seeds: expected share 4/7 of 100 picks
    assert count > 25


def test_scheduler_empty_corpus_fatal():
    with pytest.raises(CampaignFatalError):
        schedule_next(Corpus(), Stream(1, 0), 0)


def test_worker_ranges_partition_iterations():
    for total, workers in ((10, 1), (10, 3), (7, 7), (5, 8)):
        ranges = _worker_ranges(total, workers)
        flat = [i for r in ranges for i in r]
        assert flat == list(range(1, total + 1))


def test_multi_worker_summary_counts():
    m = bundled("scal")
    summary = fuzz_loop(m, CampaignConfig(master_seed=4, iterations=30,
                                          workers=3))
    assert summary.iterations_executed == 30
    assert summary.compute_runs == 30
    assert summary.init_runs == 3
    assert summary.term_runs == 3


# -- replay ------------------------------------------------------------------


@pytest.fixture
def crash_artifact(tmp_path):
    m = bundled("axpy")
    out_dir = tmp_path / "camp"
    summary = fuzz_loop(m, CampaignConfig(master_seed=7, iterations=4000,
                                          stop_bug_class=BugClass.SPATIAL_OOB,
                                          out_dir=out_dir))
    report = summary.findings.first_of_class(BugClass.SPATIAL_OOB)
    return out_dir / "crashes" / f"{report.dedupe_key}.tc", report


def test_replay_reproduces_class_and_key(crash_artifact):
    path, report = crash_artifact
    result = replay(path)
    assert result.reproduced
    assert result.report.bug_class == report.bug_class
    assert result.report.dedupe_key == report.dedupe_key


def test_replay_detects_modified_program(crash_artifact):
    path, _ = crash_artifact
    program = path.parent.parent / "program.sir"
    program.write_text(program.read_text().replace("fadd", "fsub", 1))
    with pytest.raises(DigestMismatchError):
        replay(path)


def test_replay_reports_non_reproduction(crash_artifact):
    path, report = crash_artifact
    text = path.read_text()
    tampered = path.parent / "tampered.tc"
    tampered.write_text(text.replace(f"dedupe={report.dedupe_key}",
                                     "dedupe=0000000000000000"))
    result = replay(tampered)
    assert not result.reproduced
    assert result.expected_dedupe == "0000000000000000"


def test_crash_artifact_embeds_origin_and_trace(crash_artifact):
    path, report = crash_artifact
    tc, extra = parse_testcase(path.read_text())
    assert tc.trace, "discovering testcase must carry its mutation trace"
    assert "origin" in extra and "crash" in extra
    assert report.dedupe_key in extra["crash"]
