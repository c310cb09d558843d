"""Command-line front end: subcommands, output shapes, and exit codes."""

import pytest

from simt_forge import cli
from simt_forge.bench import get_benchmark
from simt_forge.campaign import CampaignConfig, fuzz_loop, load_harness
from simt_forge.sanitizer import BugClass

CALC_PROGRAM = """\
kernel calc(a:f32, n:i32, out:ptr.global) regs=8
  sreg %r1, tid
  add %r1, %r1, %r0
  cvt.f32.i32 %f1, %r1
  fmul %f1, %f1, %f0
  st.global.f32 [%a0], %f1
  exit
"""

CALC_HARNESS = """\
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

# verified block-coverage counters for the bundled suite; GeoMean 25.98
TABLE = [
    ("amax", 95, 47), ("amin", 106, 47), ("asum", 14, 9), ("axpy", 30, 7),
    ("copy", 35, 6), ("dot", 57, 23), ("nrm2", 340, 177), ("rot", 81, 10),
    ("rotm", 132, 12), ("scal", 19, 4), ("swap", 77, 10),
]


@pytest.fixture
def calc_harness(tmp_path):
    (tmp_path / "calc.sir").write_text(CALC_PROGRAM)
    h = tmp_path / "harness.man"
    h.write_text(CALC_HARNESS)
    return h


@pytest.fixture(scope="module")
def crash_artifact(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("camp")
    m = load_harness(get_benchmark("axpy").harness_path)
    summary = fuzz_loop(m, CampaignConfig(master_seed=7, iterations=4000,
                                          stop_bug_class=BugClass.SPATIAL_OOB,
                                          out_dir=out_dir))
    report = summary.findings.first_of_class(BugClass.SPATIAL_OOB)
    return out_dir / "crashes" / f"{report.dedupe_key}.tc"


def write_cov_rec(tmp_path, rows):
    lines = ["coverage v1"]
    for name, blocks, hit in rows:
        lines.append(f"cov kernel={name} blocks={blocks} hit={hit} "
                     f"pct=0.00 edges=0 static_edges=0")
    (tmp_path / "coverage.rec").write_text("\n".join(lines) + "\n")
    return tmp_path


# -- run ------------------------------------------------------------------------


def test_run_clean_harness_exits_zero(calc_harness, tmp_path, capsys):
    out = tmp_path / "out"
    rc = cli.main(["run", "--harness", str(calc_harness), "--out", str(out),
                   "--iters", "40", "--seed", "3"])
    assert rc == 0
    text = capsys.readouterr().out
    assert text.startswith("summary v1")
    assert "findings_unique=0" in text
    assert "stop=iterations" in text
    assert not list((out / "crashes").iterdir())


def test_run_with_findings_exits_one(tmp_path, capsys):
    out = tmp_path / "out"
    rc = cli.main(["run", "--harness", str(get_benchmark("axpy").harness_path),
                   "--out", str(out), "--iters", "4000", "--seed", "7",
                   "--stop-on", "first-finding"])
    assert rc == 1
    text = capsys.readouterr().out
    assert "stop=first_finding" in text
    assert "unique=" in text
    assert list((out / "crashes").glob("*.tc"))


def test_run_rejects_unknown_stop_condition(calc_harness, tmp_path, capsys):
    rc = cli.main(["run", "--harness", str(calc_harness),
                   "--out", str(tmp_path / "o"), "--stop-on", "bogus"])
    assert rc == 2
    assert "unknown stop condition" in capsys.readouterr().err


def test_run_missing_harness_is_usage_error(tmp_path, capsys):
    rc = cli.main(["run", "--harness", str(tmp_path / "nope.man"),
                   "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_run_zero_iterations_is_fatal(calc_harness, tmp_path, capsys):
    rc = cli.main(["run", "--harness", str(calc_harness),
                   "--out", str(tmp_path / "o"), "--iters", "0"])
    assert rc == 3
    assert "fatal:" in capsys.readouterr().err


def test_run_requires_harness_flag(tmp_path):
    with pytest.raises(SystemExit) as info:
        cli.main(["run", "--out", str(tmp_path / "o")])
    assert info.value.code == 2


# -- cov ------------------------------------------------------------------------


def test_cov_renders_suite_table(tmp_path, capsys):
    d = write_cov_rec(tmp_path, TABLE)
    assert cli.main(["cov", "--dir", str(d)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1].split()[:3] == ["amax", "95", "47"]
    assert "49.47" in lines[1]
    assert lines[-1].split()[0] == "GeoMean"
    assert "25.98" in lines[-1]


def test_cov_single_kernel_percent(tmp_path, capsys):
    d = write_cov_rec(tmp_path, [("asum", 14, 9)])
    assert cli.main(["cov", "--dir", str(d)]) == 0
    assert "64.29" in capsys.readouterr().out


def test_cov_zero_hit_kernel_footnoted(tmp_path, capsys):
    d = write_cov_rec(tmp_path, [("cold", 5, 0)])
    assert cli.main(["cov", "--dir", str(d)]) == 0
    text = capsys.readouterr().out
    assert not any(l.startswith("GeoMean") for l in text.splitlines())
    assert "zero-coverage kernels excluded" in text
    assert "cold" in text.splitlines()[-1]


def test_cov_rec_format_reserializes(tmp_path, capsys):
    d = write_cov_rec(tmp_path, [("asum", 14, 9)])
    assert cli.main(["cov", "--dir", str(d), "--format", "rec"]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0] == "coverage v1"
    assert "pct=64.29" in text


def test_cov_missing_record(tmp_path, capsys):
    rc = cli.main(["cov", "--dir", str(tmp_path)])
    assert rc == 2
    assert "not found" in capsys.readouterr().err


def test_cov_garbage_record(tmp_path, capsys):
    (tmp_path / "coverage.rec").write_text("nonsense\n")
    rc = cli.main(["cov", "--dir", str(tmp_path)])
    assert rc == 2
    assert "not a coverage record" in capsys.readouterr().err


# -- repro ----------------------------------------------------------------------


def test_repro_reproduced_exits_one(crash_artifact, capsys):
    rc = cli.main(["repro", "--artifact", str(crash_artifact)])
    assert rc == 1
    text = capsys.readouterr().out
    assert "SPATIAL_OOB" in text
    assert "did not reproduce" not in text


def test_repro_missing_artifact(tmp_path, capsys):
    rc = cli.main(["repro", "--artifact", str(tmp_path / "none.tc")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_repro_tampered_expectation_exits_three(crash_artifact, capsys):
    text = crash_artifact.read_text()
    key = crash_artifact.stem
    # artifacts resolve the campaign's program/harness relative to themselves
    tampered = crash_artifact.parent / "tampered.tc"
    tampered.write_text(text.replace(f"dedupe={key}", "dedupe=0000000000000000"))
    rc = cli.main(["repro", "--artifact", str(tampered)])
    assert rc == 3
    assert "did not reproduce" in capsys.readouterr().out


# -- validate -------------------------------------------------------------------


def test_validate_program_ok(calc_harness, capsys):
    rc = cli.main(["validate", "--program", str(calc_harness.parent / "calc.sir")])
    assert rc == 0
    assert "ok: kernel calc: 3 params" in capsys.readouterr().out


def test_validate_harness_ok(calc_harness, capsys):
    rc = cli.main(["validate", "--harness", str(calc_harness)])
    assert rc == 0
    text = capsys.readouterr().out
    assert text.startswith("ok: harness")
    assert "kernels: calc" in text


def test_validate_syntax_error_is_line_anchored(tmp_path, capsys):
    bad = tmp_path / "bad.sir"
    bad.write_text("mov %r0, 1\n")
    rc = cli.main(["validate", "--program", str(bad)])
    assert rc == 2
    assert capsys.readouterr().err.startswith(f"{bad}:1:")


def test_validate_reports_diagnostics(tmp_path, capsys):
    bad = tmp_path / "mix.sir"
    bad.write_text("kernel mix(a:f32) regs=4\n  add %r1, %f0, 1\n  exit\n")
    rc = cli.main(["validate", "--program", str(bad)])
    assert rc == 2
    assert "mix@" in capsys.readouterr().out


def test_validate_without_inputs(capsys):
    rc = cli.main(["validate"])
    assert rc == 2
    assert "needs --program or --harness" in capsys.readouterr().err


# -- bench ----------------------------------------------------------------------


def test_bench_list_names_all_bundles(capsys):
    assert cli.main(["bench", "list"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 11
    assert lines[0].startswith("amax ")
    for line in lines:
        assert ("variants: spatial_oob,temporal_uaf,space_mismatch,"
                "provenance_escape") in line


def test_bench_export_copies_bundle(tmp_path, capsys):
    rc = cli.main(["bench", "export", "axpy", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "axpy" / "harness.man").is_file()
    assert (tmp_path / "axpy" / "kernel.sir").is_file()
    assert (tmp_path / "axpy" / "variants" / "temporal_uaf" / "trigger.rec").is_file()


def test_bench_export_needs_name_and_dest(capsys):
    assert cli.main(["bench", "export"]) == 2
    assert "needs NAME and DIR" in capsys.readouterr().err


def test_bench_export_unknown_name(tmp_path, capsys):
    assert cli.main(["bench", "export", "gemm", str(tmp_path)]) == 2
    assert "unknown benchmark" in capsys.readouterr().err


# -- trace streaming --------------------------------------------------------------


def test_trace_env_streams_events(calc_harness, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SIMT_FORGE_TRACE", "1")
    rc = cli.main(["run", "--harness", str(calc_harness),
                   "--out", str(tmp_path / "o"), "--iters", "2", "--seed", "1"])
    assert rc == 0
    err = capsys.readouterr().err
    assert any(l.startswith("EV mem ") for l in err.splitlines())


def test_trace_env_off_by_default(calc_harness, tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("SIMT_FORGE_TRACE", raising=False)
    cli.main(["run", "--harness", str(calc_harness),
              "--out", str(tmp_path / "o"), "--iters", "2", "--seed", "1"])
    assert "EV mem" not in capsys.readouterr().err
