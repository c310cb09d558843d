"""Edge counters, percentage arithmetic, and report serialization."""

from decimal import Decimal

import pytest
from hypothesis import given, settings, strategies as st

from simt_forge.coverage import (
    CoverageMap,
    CoverageMergeError,
    CoverageRow,
    PhantomEdgeError,
    build_report,
    coverage_percent,
    geometric_mean,
    merge,
    new_edges_since,
    rec_to_rows,
    render_text,
    report_to_rec,
    rows_report,
)
from simt_forge.kernel_ir import parse_program


BRANCHY = """\
kernel b(p:i32) regs=4
  setp.eq %p0, %r0, 0
  bra %p0, done
  mov %r1, 1
done:
  exit
"""


@pytest.fixture
def cov():
    return CoverageMap.for_program(parse_program(BRANCHY))


def test_fresh_map_single_edge(cov):
    cov.record_launch("b")
    cov.record_edge("b", 0, 1)
    assert cov.hit_edge_count("b") == 1
    assert len(cov.hit_blocks("b")) >= 2


def test_repeated_edge_counts_once_for_coverage(cov):
    cov.record_launch("b")
    cov.record_edge("b", 0, 1)
    cov.record_edge("b", 0, 1)
    assert cov.hit_edge_count("b") == 1
    assert cov.edge_counts["b"][(0, 1)] == 2


def test_phantom_edge_rejected(cov):
    cov.record_launch("b")
    with pytest.raises(PhantomEdgeError):
        cov.record_edge("b", 0, 9)


def test_hit_blocks_are_entry_plus_edge_endpoints(cov):
    cov.record_launch("b")
    assert cov.hit_blocks("b") == {0}
    cov.record_edge("b", 0, 2)
    assert cov.hit_blocks("b") == {0, 2}
    cov.record_edge("b", 0, 1)
    cov.record_edge("b", 1, 2)
    assert cov.hit_blocks("b") == {0, 1, 2}


def test_merge_unions_disjoint_edges(cov):
    other = cov.fresh()
    cov.record_launch("b")
    cov.record_edge("b", 0, 1)
    other.record_launch("b")
    other.record_edge("b", 0, 2)
    merged = merge(cov, other)
    assert merged.hit_edge_count("b") == 2
    assert merged.edge_counts["b"][(0, 1)] == 1


def test_merge_requires_same_program():
    a = CoverageMap.for_program(parse_program(BRANCHY))
    b = CoverageMap.for_program(parse_program(BRANCHY.replace("mov %r1, 1",
                                                              "mov %r1, 2")))
    with pytest.raises(CoverageMergeError):
        merge(a, b)


def test_new_edges_since():
    base = CoverageMap.for_program(parse_program(BRANCHY))
    cur = base.fresh()
    assert new_edges_since(cur, base) == set()
    cur.record_launch("b")
    cur.record_edge("b", 0, 1)
    assert new_edges_since(cur, base) == {("b", 0, 1)}
    base2 = cur.fresh()
    assert new_edges_since(cur, base2) == {("b", 0, 1)}
    base2.record_edge("b", 0, 1)
    assert new_edges_since(cur, base2) == set()


# reference per-kernel block totals and the percentages they must yield
TABLE_ROWS = [
    ("amax", 47, 95, 49.47),
    ("amin", 47, 106, 44.34),
    ("asum", 9, 14, 64.29),
    ("axpy", 7, 30, 23.33),
    ("copy", 6, 35, 17.14),
    ("dot", 23, 57, 40.35),
    ("nrm2", 177, 340, 52.06),
    ("rot", 10, 81, 12.35),
    ("rotm", 12, 132, 9.09),
    ("scal", 4, 19, 21.05),
    ("swap", 10, 77, 12.99),
]
TABLE_GEOMEAN = 25.98


@pytest.mark.parametrize("name,hit,total,expect",
                         TABLE_ROWS, ids=[r[0] for r in TABLE_ROWS])
def test_percent_reference_rows(name, hit, total, expect):
    assert coverage_percent(hit, total) == expect


def test_percent_zero_and_full():
    assert coverage_percent(0, 17) == 0.0
    assert coverage_percent(17, 17) == 100.0


def test_percent_rounds_half_up():
    # 0.125 -> 12.50, and a tie at the third decimal rounds away from zero
    assert coverage_percent(1, 8) == 12.5
    assert coverage_percent(1, 16) == 6.25
    assert coverage_percent(49, 800) == 6.13


def test_geomean_reference_value():
    values = [r[3] for r in TABLE_ROWS]
    assert geometric_mean(values) == TABLE_GEOMEAN


def test_geomean_singleton_and_pair():
    assert geometric_mean([42.5]) == 42.5
    assert geometric_mean([4.0, 25.0]) == 10.0
    with pytest.raises(ValueError):
        geometric_mean([])
    with pytest.raises(ValueError):
        geometric_mean([0.0, 5.0])


@given(st.integers(0, 10_000), st.integers(1, 10_000))
@settings(max_examples=300, deadline=None)
def test_percent_matches_decimal_reference(hit, total):
    hit = min(hit, total)
    got = coverage_percent(hit, total)
    want = float((Decimal(100) * Decimal(hit) / Decimal(total))
                 .quantize(Decimal("0.01"), rounding="ROUND_HALF_UP"))
    assert got == want
    assert 0.0 <= got <= 100.0


def test_rows_report_render_and_rec_roundtrip():
    rows = [CoverageRow(name, total, hit, coverage_percent(hit, total), 0, 0)
            for name, hit, total, _ in TABLE_ROWS]
    report = rows_report(rows)
    text = render_text(report)
    assert "25.98" in text.splitlines()[-1]
    for _, _, _, expect in TABLE_ROWS:
        assert f"{expect:.2f}" in text
    rec = report_to_rec(report)
    back = rows_report(rec_to_rows(rec))
    assert report_to_rec(back) == rec
    assert back.geomean == TABLE_GEOMEAN


def test_empty_report_has_footnote():
    report = rows_report([])
    text = render_text(report)
    assert report.rows == []
    assert "no kernels" in text.lower() or "geomean" not in text.lower()


def test_build_report_from_live_map(cov):
    cov.record_launch("b")
    cov.record_edge("b", 0, 1)
    cov.record_edge("b", 1, 2)
    report = build_report(cov)
    assert len(report.rows) == 1
    row = report.rows[0]
    assert (row.kernel, row.total_blocks, row.hit_blocks) == ("b", 3, 3)
    assert row.percent == 100.0
    assert row.hit_edges == 2
    assert row.total_edges == 3


def test_fresh_map_shares_static_not_counts(cov):
    cov.record_launch("b")
    cov.record_edge("b", 0, 1)
    f = cov.fresh()
    assert f.hit_edge_count("b") == 0
    f.record_launch("b")
    f.record_edge("b", 0, 2)
    assert cov.hit_edge_count("b") == 1
