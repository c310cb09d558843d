"""Edge coverage accounting and reporting.

A CoverageMap holds per-kernel dynamic edge counters validated against the
static CFG: recording an edge outside the static set raises PhantomEdgeError,
which turns executor/CFG drift into a loud failure instead of silent garbage.
Hit basic blocks are derived, not stored: the entry block (once the kernel has
launched) plus every endpoint of a hit edge.

Percentages use decimal round-half-up to two places and the summary row is
the geometric mean of the rounded per-kernel percentages, so rendered tables
are reproducible to the digit.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from math import exp, log

_U64_MAX = (1 << 64) - 1


class PhantomEdgeError(Exception):
    def __init__(self, kernel: str, edge: tuple[int, int]):
        super().__init__(f"kernel {kernel!r}: dynamic edge {edge} is not in the static CFG")
        self.kernel = kernel
        self.edge = edge


class CoverageMergeError(Exception):
    pass


@dataclass
class KernelStatic:
    total_blocks: int
    static_edges: frozenset[tuple[int, int]]


class CoverageMap:
    """Dynamic coverage for one program (identified by digest)."""

    def __init__(self, program_digest: str, static: dict[str, KernelStatic]):
        self.program_digest = program_digest
        self.static = static
        self.edge_counts: dict[str, dict[tuple[int, int], int]] = {k: {} for k in static}
        self.entered: dict[str, bool] = {k: False for k in static}

    @classmethod
    def for_program(cls, program) -> "CoverageMap":
        static = {name: KernelStatic(len(k.blocks), frozenset(k.edges))
                  for name, k in program.kernels.items()}
        return cls(program.digest, static)

    def fresh(self) -> "CoverageMap":
        """Empty map sharing this map's static side; cheap per-iteration delta."""
        return CoverageMap(self.program_digest, self.static)

    def record_launch(self, kernel: str) -> None:
        self.entered[kernel] = True

    def record_edge(self, kernel: str, src: int, dst: int, count: int = 1) -> None:
        counts = self.edge_counts[kernel]
        edge = (src, dst)
        cur = counts.get(edge)
        if cur is None:
            if edge not in self.static[kernel].static_edges:
                raise PhantomEdgeError(kernel, edge)
            counts[edge] = min(count, _U64_MAX)
        else:
            counts[edge] = min(cur + count, _U64_MAX)

    def hit_blocks(self, kernel: str) -> set[int]:
        hit: set[int] = set()
        if self.entered[kernel]:
            hit.add(0)
        for src, dst in self.edge_counts[kernel]:
            hit.add(src)
            hit.add(dst)
        return hit

    def hit_edge_count(self, kernel: str) -> int:
        return len(self.edge_counts[kernel])

    def merge_from(self, other: "CoverageMap") -> None:
        if other.program_digest != self.program_digest:
            raise CoverageMergeError("coverage maps describe different programs")
        for kernel, counts in other.edge_counts.items():
            mine = self.edge_counts[kernel]
            for edge, count in counts.items():
                cur = mine.get(edge, 0)
                mine[edge] = min(cur + count, _U64_MAX)
            if other.entered[kernel]:
                self.entered[kernel] = True


def merge(a: CoverageMap, b: CoverageMap) -> CoverageMap:
    """Commutative, saturating union of two maps over the same program."""
    out = a.fresh()
    out.merge_from(a)
    out.merge_from(b)
    return out


def new_edges_since(current: CoverageMap, baseline: CoverageMap) -> set[tuple[str, int, int]]:
    """Edges hit in current that the baseline has never seen."""
    fresh: set[tuple[str, int, int]] = set()
    for kernel, counts in current.edge_counts.items():
        base = baseline.edge_counts[kernel]
        for edge in counts:
            if edge not in base:
                fresh.add((kernel, edge[0], edge[1]))
    return fresh


# -- arithmetic -----------------------------------------------------------------

_CENT = Decimal("0.01")


def coverage_percent(hit: int, total: int) -> float:
    """100*hit/total rounded half-up to two decimals."""
    if total <= 0:
        raise ValueError("total must be positive")
    if hit < 0 or hit > total:
        raise ValueError("hit must be within [0, total]")
    pct = (Decimal(hit) * 100 / Decimal(total)).quantize(_CENT, rounding=ROUND_HALF_UP)
    return float(pct)


def geometric_mean(values: list[float]) -> float:
    """exp(mean(ln v)) rounded half-up to two decimals; values must be positive."""
    if not values:
        raise ValueError("geometric mean of an empty list")
    for v in values:
        if v <= 0:
            raise ValueError(f"geometric mean requires positive values, got {v}")
    gm = exp(sum(log(v) for v in values) / len(values))
    return float(Decimal(repr(gm)).quantize(_CENT, rounding=ROUND_HALF_UP))


# -- reporting ------------------------------------------------------------------


@dataclass
class CoverageRow:
    kernel: str
    total_blocks: int
    hit_blocks: int
    percent: float
    hit_edges: int
    total_edges: int  # static edge count; extra column beyond the hit counters


@dataclass
class CoverageReport:
    rows: list[CoverageRow]
    geomean: float | None      # over rows with positive coverage
    excluded: list[str]        # zero-coverage kernels left out of the mean


def build_report(cov: CoverageMap) -> CoverageReport:
    rows = []
    for kernel in sorted(cov.static):
        st = cov.static[kernel]
        hit = len(cov.hit_blocks(kernel))
        rows.append(CoverageRow(kernel, st.total_blocks, hit,
                                coverage_percent(hit, st.total_blocks),
                                cov.hit_edge_count(kernel), len(st.static_edges)))
    included = [r.percent for r in rows if r.percent > 0]
    excluded = [r.kernel for r in rows if r.percent <= 0]
    gm = geometric_mean(included) if included else None
    return CoverageReport(rows, gm, excluded)


def rows_report(rows: list[CoverageRow]) -> CoverageReport:
    """Report over externally supplied rows (e.g. parsed from coverage.rec)."""
    included = [r.percent for r in rows if r.percent > 0]
    excluded = [r.kernel for r in rows if r.percent <= 0]
    gm = geometric_mean(included) if included else None
    return CoverageReport(list(rows), gm, excluded)


def render_text(report: CoverageReport) -> str:
    name_w = max([len(r.kernel) for r in report.rows] + [len("kernel")])
    lines = [f"{'kernel':<{name_w}}  {'blocks':>6}  {'hit':>5}  {'cov%':>6}  "
             f"{'edges':>5}  {'s-edges':>7}"]
    for r in report.rows:
        lines.append(f"{r.kernel:<{name_w}}  {r.total_blocks:>6}  {r.hit_blocks:>5}  "
                     f"{r.percent:>6.2f}  {r.hit_edges:>5}  {r.total_edges:>7}")
    if report.geomean is not None:
        lines.append(f"{'GeoMean':<{name_w}}  {'':>6}  {'':>5}  {report.geomean:>6.2f}")
    if report.excluded:
        lines.append(f"# zero-coverage kernels excluded from GeoMean: "
                     f"{', '.join(report.excluded)}")
    return "\n".join(lines) + "\n"


def report_to_rec(report: CoverageReport) -> str:
    lines = ["coverage v1"]
    for r in report.rows:
        lines.append(f"cov kernel={r.kernel} blocks={r.total_blocks} hit={r.hit_blocks} "
                     f"pct={r.percent:.2f} edges={r.hit_edges} static_edges={r.total_edges}")
    return "\n".join(lines) + "\n"


def rec_to_rows(text: str) -> list[CoverageRow]:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines or lines[0] != "coverage v1":
        raise ValueError("not a coverage record")
    rows = []
    for line in lines[1:]:
        if not line.startswith("cov "):
            raise ValueError(f"bad coverage record line: {line!r}")
        kv = dict(tok.split("=", 1) for tok in line[4:].split())
        blocks = int(kv["blocks"])
        hit = int(kv["hit"])
        # recompute instead of trusting the stored column, so rendering a rec
        # always exercises the same arithmetic as building a fresh report
        rows.append(CoverageRow(kv["kernel"], blocks, hit,
                                coverage_percent(hit, blocks), int(kv["edges"]),
                                int(kv["static_edges"])))
    return rows
