"""Memory-safety checking over the shadow map, allocation registry, and pointer
provenance.

Every kernel load/store and every host copy funnels through check_access,
which classifies violations in a fixed order so each bug class has an
unambiguous meaning:

1. address resolves to a payload in a different space than the instruction
   declared        -> SPACE_MISMATCH
2. address resolves to a freed, still-quarantined payload -> TEMPORAL_UAF
3. shadow marks a redzone byte or a granule's non-addressable tail
                   -> SPATIAL_OOB
4. the pointer carries a provenance tag and the access escapes that
   allocation's payload (checked even when the shadow is clean, which is what
   catches silent cross-allocation reads)  -> PROVENANCE_ESCAPE
5. address resolves nowhere and the shadow is unallocated -> WILD_ACCESS

Frees of anything that is not the live base of an allocation are
INVALID_FREE.  Findings deduplicate on (class, kernel, instruction,
allocation site), so one root cause reported from many threads or iterations
collapses to a single entry.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

from .device_memory import (
    FREED,
    SHADOW_ADDRESSABLE,
    SHADOW_FREED,
    SHADOW_REDZONE,
    SHADOW_UNALLOCATED,
    SPACE_BASE,
    DeviceMemoryImage,
)
from .kernel_ir import MemSpace

HOST = "<host>"  # kernel name used for host-side copy/free events


class BugClass(Enum):
    SPATIAL_OOB = "SPATIAL_OOB"
    TEMPORAL_UAF = "TEMPORAL_UAF"
    SPACE_MISMATCH = "SPACE_MISMATCH"
    PROVENANCE_ESCAPE = "PROVENANCE_ESCAPE"
    WILD_ACCESS = "WILD_ACCESS"
    INVALID_FREE = "INVALID_FREE"


@dataclass
class BugReport:
    bug_class: BugClass
    kernel: str
    iid: int                    # -1 for host events
    ctaid: int
    tid: int
    address: int
    width: int
    is_store: bool
    declared_space: MemSpace | None
    mechanism: str              # "shadow" | "registry" | "provenance"
    shadow_code: int | None
    provenance: int | None      # tag on the accessing pointer, if any
    alloc_id: int | None        # attributed allocation
    alloc_label: str
    alloc_base: int
    alloc_size: int
    alloc_state: str
    iteration: int = -1
    dedupe_key: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.dedupe_key:
            site = self.alloc_label if self.alloc_id is not None else "unmapped"
            raw = f"{self.bug_class.value}|{self.kernel}|{self.iid}|{site}"
            self.dedupe_key = hashlib.sha256(raw.encode()).hexdigest()[:16]

    def to_line(self) -> str:
        sp = self.declared_space.value if self.declared_space else "-"
        return (f"finding class={self.bug_class.value} dedupe={self.dedupe_key} "
                f"kernel={self.kernel} iid={self.iid} ctaid={self.ctaid} tid={self.tid} "
                f"addr=0x{self.address:x} width={self.width} store={int(self.is_store)} "
                f"space={sp} mech={self.mechanism} "
                f"shadow={'-' if self.shadow_code is None else f'0x{self.shadow_code:02x}'} "
                f"prov={'-' if self.provenance is None else self.provenance} "
                f"alloc={'-' if self.alloc_id is None else self.alloc_id} "
                f"label={self.alloc_label or '-'} base=0x{self.alloc_base:x} "
                f"size={self.alloc_size} state={self.alloc_state or '-'} "
                f"iteration={self.iteration}")


def _alloc_fields(rec) -> dict:
    if rec is None:
        return dict(alloc_id=None, alloc_label="", alloc_base=0, alloc_size=0, alloc_state="")
    return dict(alloc_id=rec.alloc_id, alloc_label=rec.label, alloc_base=rec.base,
                alloc_size=rec.size, alloc_state=rec.state)


def _scan_shadow(image: DeviceMemoryImage, addr: int, width: int):
    """First shadow violation in [addr, addr+width), or None.

    Returns (kind, granule_addr, code) with kind in {"spatial", "freed", "wild"}.
    """
    g = image.config.granule
    loc = image.locate(addr)
    end = addr + width
    if loc is None:
        return ("wild", addr, SHADOW_UNALLOCATED)
    sp, off = loc
    shadow = image.shadow[sp]
    limit = len(shadow)
    space_base = SPACE_BASE[sp]
    gi = off // g
    gi_end = (off + width - 1) // g + 1
    # bulk copies scan many granules; an all-addressable span needs no per-
    # granule classification and count() runs at C speed
    if gi_end <= limit and shadow.count(SHADOW_ADDRESSABLE, gi, gi_end) == gi_end - gi:
        return None
    while True:
        gstart = gi * g
        if space_base + gstart >= end:
            return None
        if gi >= limit:
            return ("wild", space_base + gstart, SHADOW_UNALLOCATED)
        code = shadow[gi]
        if code != SHADOW_ADDRESSABLE:
            gaddr = space_base + gstart
            if code == SHADOW_REDZONE:
                return ("spatial", gaddr, code)
            if code == SHADOW_FREED:
                return ("freed", gaddr, code)
            if code == SHADOW_UNALLOCATED:
                return ("wild", gaddr, code)
            # partial granule: bytes [gstart, gstart+code) are addressable
            first = max(addr - space_base, gstart)
            last = min(end - space_base, gstart + g)
            if first - gstart >= code or last - gstart > code:
                return ("spatial", gaddr, code)
        gi += 1


def check_access(image: DeviceMemoryImage, addr: int, width: int,
                 declared_space: MemSpace, provenance: int | None, *,
                 kernel: str, iid: int, ctaid: int = -1, tid: int = -1,
                 is_store: bool = False, iteration: int = -1) -> BugReport | None:
    """Classify one memory access; None means the access is allowed."""
    rec = image.resolve_payload(addr)

    if rec is not None and rec.space != declared_space:
        return BugReport(BugClass.SPACE_MISMATCH, kernel, iid, ctaid, tid, addr, width,
                         is_store, declared_space, "registry", None, provenance,
                         iteration=iteration, **_alloc_fields(rec))

    if rec is not None and rec.state == FREED:
        return BugReport(BugClass.TEMPORAL_UAF, kernel, iid, ctaid, tid, addr, width,
                         is_store, declared_space, "shadow", SHADOW_FREED, provenance,
                         iteration=iteration, **_alloc_fields(rec))

    violation = _scan_shadow(image, addr, width)
    if violation is not None and violation[0] == "spatial":
        site = rec if rec is not None else image.resolve_slot(violation[1])
        return BugReport(BugClass.SPATIAL_OOB, kernel, iid, ctaid, tid, addr, width,
                         is_store, declared_space, "shadow", violation[2], provenance,
                         iteration=iteration, **_alloc_fields(site))
    if violation is not None and violation[0] == "freed":
        site = image.resolve_slot(violation[1])
        return BugReport(BugClass.TEMPORAL_UAF, kernel, iid, ctaid, tid, addr, width,
                         is_store, declared_space, "shadow", violation[2], provenance,
                         iteration=iteration, **_alloc_fields(site))

    if provenance is not None:
        tag_rec = image.record(provenance)
        if tag_rec is not None and not (tag_rec.base <= addr and
                                        addr + width <= tag_rec.base + tag_rec.size):
            return BugReport(BugClass.PROVENANCE_ESCAPE, kernel, iid, ctaid, tid, addr,
                             width, is_store, declared_space, "provenance",
                             violation[2] if violation else None, provenance,
                             iteration=iteration, **_alloc_fields(tag_rec))

    if violation is not None:  # only "wild" reaches here
        return BugReport(BugClass.WILD_ACCESS, kernel, iid, ctaid, tid, addr, width,
                         is_store, declared_space, "shadow", violation[2], provenance,
                         iteration=iteration, **_alloc_fields(None))
    return None


def check_host_access(image: DeviceMemoryImage, addr: int, width: int, *,
                      is_store: bool, iteration: int = -1) -> BugReport | None:
    """Host copies declare the space the address lands in, so only spatial,
    temporal, and wild violations apply to them."""
    space = image.space_of(addr) or MemSpace.GLOBAL
    return check_access(image, addr, width, space, None, kernel=HOST, iid=-1,
                        is_store=is_store, iteration=iteration)


def invalid_free_report(image: DeviceMemoryImage, addr: int, reason: str, *,
                        kernel: str = HOST, iteration: int = -1) -> BugReport:
    rec = image.resolve_payload(addr) or image.resolve_slot(addr)
    rep = BugReport(BugClass.INVALID_FREE, kernel, -1, -1, -1, addr, 0, False,
                    image.space_of(addr), "registry", None, None,
                    iteration=iteration, **_alloc_fields(rec))
    return rep


class FindingsLog:
    """Campaign-wide deduplicated findings, ordered by first sighting."""

    def __init__(self):
        self._order: list[str] = []
        self._first: dict[str, BugReport] = {}
        self._counts: dict[str, int] = {}

    def add(self, report: BugReport) -> bool:
        """Record a finding; True when its dedupe key is new."""
        key = report.dedupe_key
        if key in self._first:
            self._counts[key] += 1
            return False
        self._order.append(key)
        self._first[key] = report
        self._counts[key] = 1
        return True

    def __len__(self) -> int:
        return len(self._order)

    @property
    def total(self) -> int:
        return sum(self._counts.values())

    def reports(self) -> list[BugReport]:
        return [self._first[k] for k in self._order]

    def count(self, key: str) -> int:
        return self._counts.get(key, 0)

    def classes(self) -> set[BugClass]:
        return {r.bug_class for r in self._first.values()}

    def first_of_class(self, bug_class: BugClass) -> BugReport | None:
        for key in self._order:
            if self._first[key].bug_class == bug_class:
                return self._first[key]
        return None

    def render_text(self) -> str:
        lines = [f"unique={len(self._order)} total={self.total}"]
        for key in self._order:
            lines.append(self._first[key].to_line() + f" hits={self._counts[key]}")
        return "\n".join(lines) + "\n"
