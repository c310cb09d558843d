"""Simulated device memory: three address spaces, shadow metadata, quarantine,
and snapshot/restore.

Layout.  GLOBAL, SHARED, and LOCAL each occupy a disjoint range of the flat
simulated address space.  SHARED and LOCAL can be split into independent
scopes (per-block / per-thread); offsets within a space are scope-relative.

Every allocation owns a slot: [left redzone | payload (granule-aligned) |
right redzone].  Shadow memory keeps one code byte per granule of every
space: 0 means fully addressable, 1..granule-1 means only that prefix of the
granule is addressable, and the poison codes mark redzones, freed-and-
quarantined payloads, and unallocated ground.

Freed allocations sit in a per-space FIFO quarantine (byte-budgeted) so that
stale pointers keep faulting as use-after-free instead of landing in recycled
slots; eviction returns the slot to a size-keyed free list for reuse.

Snapshots capture the complete observable state (payload bytes, shadow,
allocation registry, cursors, free lists, quarantine, attached RNG position)
and serialize to a stable byte format.  Restoring to the most recent snapshot
reverts only dirtied chunks, which is what makes per-iteration state reset
cheap enough to amortize setup across a fuzzing campaign.
"""

from __future__ import annotations

import struct
from bisect import bisect_right, insort
from dataclasses import dataclass, replace

from .kernel_ir import MemSpace

SHADOW_ADDRESSABLE = 0x00
SHADOW_REDZONE = 0xFA
SHADOW_FREED = 0xFD
SHADOW_UNALLOCATED = 0xFF

LIVE = "LIVE"
FREED = "FREED"

SPACE_BASE = {
    MemSpace.GLOBAL: 0x1000_0000,
    MemSpace.SHARED: 0x2000_0000,
    MemSpace.LOCAL: 0x3000_0000,
}
_SPACES = (MemSpace.GLOBAL, MemSpace.SHARED, MemSpace.LOCAL)
_SPACE_ID = {s: i for i, s in enumerate(_SPACES)}

_CHUNK = 256  # dirty-tracking granularity in bytes

_SNAP_MAGIC = b"SFSNAP01"


class MemoryError_(Exception):
    """Base for allocator errors (kept distinct from builtin MemoryError)."""


class ZeroSizeAllocError(MemoryError_):
    pass


class OutOfSpaceError(MemoryError_):
    pass


class InvalidFreeError(MemoryError_):
    def __init__(self, addr: int, reason: str):
        super().__init__(f"invalid free of 0x{addr:x}: {reason}")
        self.addr = addr
        self.reason = reason


class SnapshotMismatchError(MemoryError_):
    pass


@dataclass(frozen=True)
class MemConfig:
    global_size: int = 16 * 1024 * 1024
    shared_size: int = 48 * 1024      # per scope
    local_size: int = 16 * 1024       # per scope
    shared_scopes: int = 1
    local_scopes: int = 1
    granule: int = 4
    redzone: int = 32
    quarantine_global: int = 1024 * 1024
    quarantine_shared: int = 0
    quarantine_local: int = 0

    def __post_init__(self):
        if self.granule < 1:
            raise ValueError("granule must be >= 1")
        if self.redzone <= 0 or self.redzone % self.granule:
            raise ValueError("redzone must be a positive multiple of the granule")
        for size in (self.global_size, self.shared_size, self.local_size):
            if size <= 0 or size % self.granule:
                raise ValueError("space sizes must be positive multiples of the granule")

    def scopes(self, space: MemSpace) -> int:
        if space == MemSpace.SHARED:
            return self.shared_scopes
        if space == MemSpace.LOCAL:
            return self.local_scopes
        return 1

    def scope_size(self, space: MemSpace) -> int:
        if space == MemSpace.SHARED:
            return self.shared_size
        if space == MemSpace.LOCAL:
            return self.local_size
        return self.global_size

    def total_size(self, space: MemSpace) -> int:
        return self.scope_size(space) * self.scopes(space)

    def quarantine_capacity(self, space: MemSpace) -> int:
        if space == MemSpace.SHARED:
            return self.quarantine_shared
        if space == MemSpace.LOCAL:
            return self.quarantine_local
        return self.quarantine_global


@dataclass
class AllocationRecord:
    alloc_id: int
    space: MemSpace
    scope: int
    base: int          # absolute address of payload start
    size: int          # requested payload bytes
    state: str         # LIVE | FREED
    label: str
    slot_start: int    # absolute, includes left redzone
    slot_end: int      # absolute, exclusive, includes right redzone
    birth_iteration: int
    death_iteration: int = -1

    @property
    def payload_end(self) -> int:
        return self.base + self.size


@dataclass
class Snapshot:
    """Full observable state of an image at a point in time."""
    token: int                      # identity for dirty-chunk fast restore; not serialized
    config: MemConfig
    mem: dict[MemSpace, bytes]
    shadow: dict[MemSpace, bytes]
    records: dict[int, AllocationRecord]
    cursors: dict[tuple[MemSpace, int], int]
    free_lists: dict[tuple[MemSpace, int, int], list[int]]
    quarantine: list[int]
    quarantine_bytes: dict[MemSpace, int]
    iteration: int
    rng_state: bytes | None

    def to_bytes(self) -> bytes:
        out = [_SNAP_MAGIC]
        c = self.config
        out.append(struct.pack("<6Q2I", c.global_size, c.shared_size, c.local_size,
                               c.quarantine_global, c.quarantine_shared, c.quarantine_local,
                               c.granule, c.redzone))
        out.append(struct.pack("<2I", c.shared_scopes, c.local_scopes))
        for sp in _SPACES:
            out.append(struct.pack("<Q", len(self.mem[sp])))
            out.append(self.mem[sp])
            out.append(struct.pack("<Q", len(self.shadow[sp])))
            out.append(self.shadow[sp])
        out.append(struct.pack("<I", len(self.cursors)))
        for (sp, scope), cur in sorted(self.cursors.items(), key=lambda kv: (_SPACE_ID[kv[0][0]], kv[0][1])):
            out.append(struct.pack("<BIQ", _SPACE_ID[sp], scope, cur))
        flat = sorted(self.free_lists.items(), key=lambda kv: (_SPACE_ID[kv[0][0]], kv[0][1], kv[0][2]))
        out.append(struct.pack("<I", len(flat)))
        for (sp, scope, slot), starts in flat:
            out.append(struct.pack("<BIQI", _SPACE_ID[sp], scope, slot, len(starts)))
            out.append(struct.pack(f"<{len(starts)}Q", *starts))
        out.append(struct.pack("<I", len(self.records)))
        for rid in sorted(self.records):
            r = self.records[rid]
            lbl = r.label.encode()
            out.append(struct.pack("<QBIQQB", r.alloc_id, _SPACE_ID[r.space], r.scope,
                                   r.base, r.size, 1 if r.state == LIVE else 0))
            out.append(struct.pack("<QQqqH", r.slot_start, r.slot_end,
                                   r.birth_iteration, r.death_iteration, len(lbl)))
            out.append(lbl)
        out.append(struct.pack("<I", len(self.quarantine)))
        if self.quarantine:
            out.append(struct.pack(f"<{len(self.quarantine)}Q", *self.quarantine))
        out.append(struct.pack("<3Q", *(self.quarantine_bytes[sp] for sp in _SPACES)))
        out.append(struct.pack("<q", self.iteration))
        if self.rng_state is None:
            out.append(struct.pack("<H", 0))
        else:
            out.append(struct.pack("<H", len(self.rng_state)))
            out.append(self.rng_state)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Snapshot":
        if blob[:8] != _SNAP_MAGIC:
            raise SnapshotMismatchError("bad snapshot magic")
        off = 8

        def take(fmt):
            nonlocal off
            n = struct.calcsize(fmt)
            vals = struct.unpack_from(fmt, blob, off)
            off += n
            return vals

        gs, ss, ls, qg, qs, ql, gran, rz = take("<6Q2I")
        sscopes, lscopes = take("<2I")
        config = MemConfig(gs, ss, ls, sscopes, lscopes, gran, rz, qg, qs, ql)
        mem = {}
        shadow = {}
        for sp in _SPACES:
            (n,) = take("<Q")
            mem[sp] = blob[off:off + n]; off += n
            (n,) = take("<Q")
            shadow[sp] = blob[off:off + n]; off += n
        cursors = {}
        (nc,) = take("<I")
        for _ in range(nc):
            spid, scope, cur = take("<BIQ")
            cursors[(_SPACES[spid], scope)] = cur
        free_lists = {}
        (nf,) = take("<I")
        for _ in range(nf):
            spid, scope, slot, count = take("<BIQI")
            starts = list(take(f"<{count}Q")) if count else []
            free_lists[(_SPACES[spid], scope, slot)] = starts
        records = {}
        (nr,) = take("<I")
        for _ in range(nr):
            rid, spid, scope, base, size, live = take("<QBIQQB")
            slot_start, slot_end, birth, death, lbl_len = take("<QQqqH")
            label = blob[off:off + lbl_len].decode(); off += lbl_len
            records[rid] = AllocationRecord(rid, _SPACES[spid], scope, base, size,
                                            LIVE if live else FREED, label,
                                            slot_start, slot_end, birth, death)
        (nq,) = take("<I")
        quarantine = list(take(f"<{nq}Q")) if nq else []
        qb = take("<3Q")
        quarantine_bytes = {sp: qb[i] for i, sp in enumerate(_SPACES)}
        (iteration,) = take("<q")
        (rl,) = take("<H")
        rng_state = blob[off:off + rl] if rl else None
        off += rl
        return cls(0, config, mem, shadow, records, cursors, free_lists,
                   quarantine, quarantine_bytes, iteration, rng_state)


def _align_up(n: int, a: int) -> int:
    return (n + a - 1) // a * a


class DeviceMemoryImage:
    """Mutable memory state for one simulated device."""

    def __init__(self, config: MemConfig | None = None, rng=None):
        self.config = config or MemConfig()
        self.rng = rng  # optional attached Stream; its position rides along in snapshots
        self.iteration = -1
        self.mem: dict[MemSpace, bytearray] = {}
        self.shadow: dict[MemSpace, bytearray] = {}
        self.cursors: dict[tuple[MemSpace, int], int] = {}
        for sp in _SPACES:
            total = self.config.total_size(sp)
            self.mem[sp] = bytearray(total)
            self.shadow[sp] = bytearray([SHADOW_UNALLOCATED]) * (total // self.config.granule)
            for scope in range(self.config.scopes(sp)):
                self.cursors[(sp, scope)] = scope * self.config.scope_size(sp)
        self.records: dict[int, AllocationRecord] = {}
        self._by_base: dict[MemSpace, list[tuple[int, int]]] = {sp: [] for sp in _SPACES}
        self.free_lists: dict[tuple[MemSpace, int, int], list[int]] = {}
        self.quarantine: list[int] = []
        self.quarantine_bytes: dict[MemSpace, int] = {sp: 0 for sp in _SPACES}
        self._next_alloc_id = 1  # campaign-scoped; deliberately outside snapshot state
        self._baseline_token: int | None = None
        self._token_counter = 0
        self._dirty_mem: dict[MemSpace, set[int]] = {sp: set() for sp in _SPACES}
        self._dirty_shadow: dict[MemSpace, set[int]] = {sp: set() for sp in _SPACES}

    # -- address arithmetic ----------------------------------------------------

    def space_of(self, addr: int) -> MemSpace | None:
        for sp in _SPACES:
            base = SPACE_BASE[sp]
            if base <= addr < base + self.config.total_size(sp):
                return sp
        return None

    def locate(self, addr: int) -> tuple[MemSpace, int] | None:
        sp = self.space_of(addr)
        if sp is None:
            return None
        return sp, addr - SPACE_BASE[sp]

    def addr_of(self, space: MemSpace, offset: int, scope: int = 0) -> int:
        return SPACE_BASE[space] + scope * self.config.scope_size(space) + offset

    def shadow_code(self, addr: int) -> int:
        loc = self.locate(addr)
        if loc is None:
            return SHADOW_UNALLOCATED
        sp, off = loc
        return self.shadow[sp][off // self.config.granule]

    # -- dirty tracking ----------------------------------------------------------

    def _mark_mem(self, sp: MemSpace, off: int, length: int):
        if length <= 0:
            return
        d = self._dirty_mem[sp]
        d.update(range(off // _CHUNK, (off + length - 1) // _CHUNK + 1))

    def _mark_shadow(self, sp: MemSpace, gfirst: int, gcount: int):
        if gcount <= 0:
            return
        d = self._dirty_shadow[sp]
        d.update(range(gfirst // _CHUNK, (gfirst + gcount - 1) // _CHUNK + 1))

    # -- raw byte access (no sanitization) ----------------------------------------

    def read_raw(self, addr: int, length: int) -> bytes:
        loc = self.locate(addr)
        if loc is None:
            raise ValueError(f"address 0x{addr:x} outside all spaces")
        sp, off = loc
        return bytes(self.mem[sp][off:off + length])

    def write_raw(self, addr: int, data: bytes) -> None:
        loc = self.locate(addr)
        if loc is None:
            raise ValueError(f"address 0x{addr:x} outside all spaces")
        sp, off = loc
        self.mem[sp][off:off + len(data)] = data
        self._mark_mem(sp, off, len(data))

    # -- shadow helpers ------------------------------------------------------------

    def _set_shadow(self, sp: MemSpace, goff: int, gcount: int, code: int):
        self.shadow[sp][goff:goff + gcount] = bytes([code]) * gcount
        self._mark_shadow(sp, goff, gcount)

    def _poison_slot(self, rec: AllocationRecord, payload_code: int | None):
        """Rewrite the shadow for a record's slot. payload_code None restores
        addressable/partial coding for a live payload."""
        g = self.config.granule
        sp = rec.space
        sbase = SPACE_BASE[sp]
        slot_goff = (rec.slot_start - sbase) // g
        base_goff = (rec.base - sbase) // g
        pay_gend = (_align_up(rec.base + rec.size, g) - sbase) // g
        slot_gend = (rec.slot_end - sbase) // g
        self._set_shadow(sp, slot_goff, base_goff - slot_goff, SHADOW_REDZONE)
        if payload_code is None:
            full = rec.size // g
            self._set_shadow(sp, base_goff, full, SHADOW_ADDRESSABLE)
            tail = rec.size % g
            if tail:
                self._set_shadow(sp, base_goff + full, 1, tail)
        else:
            self._set_shadow(sp, base_goff, pay_gend - base_goff, payload_code)
        self._set_shadow(sp, pay_gend, slot_gend - pay_gend, SHADOW_REDZONE)

    def recompute_shadow(self) -> dict[MemSpace, bytearray]:
        """Rebuild shadow from the registry alone; oracle for coherence tests."""
        g = self.config.granule
        fresh = {sp: bytearray([SHADOW_UNALLOCATED]) * (self.config.total_size(sp) // g)
                 for sp in _SPACES}
        resident = set(self.quarantine)
        for rec in self.records.values():
            if rec.state == LIVE or rec.alloc_id in resident:
                sp = rec.space
                sbase = SPACE_BASE[sp]
                slot_goff = (rec.slot_start - sbase) // g
                base_goff = (rec.base - sbase) // g
                pay_gend = (_align_up(rec.base + rec.size, g) - sbase) // g
                slot_gend = (rec.slot_end - sbase) // g
                arr = fresh[sp]
                arr[slot_goff:base_goff] = bytes([SHADOW_REDZONE]) * (base_goff - slot_goff)
                if rec.state == LIVE:
                    full = rec.size // g
                    arr[base_goff:base_goff + full] = bytes(full)
                    tail = rec.size % g
                    if tail:
                        arr[base_goff + full] = tail
                else:
                    arr[base_goff:pay_gend] = bytes([SHADOW_FREED]) * (pay_gend - base_goff)
                arr[pay_gend:slot_gend] = bytes([SHADOW_REDZONE]) * (slot_gend - pay_gend)
        return fresh

    # -- allocation -----------------------------------------------------------------

    def alloc(self, space: MemSpace, size: int, scope: int = 0, label: str = "") -> tuple[int, int]:
        """Allocate payload bytes; returns (payload address, alloc_id)."""
        if size <= 0:
            raise ZeroSizeAllocError(f"allocation size must be positive, got {size}")
        return self._alloc_common(space, size, scope, label)

    def alloc_empty(self, space: MemSpace, scope: int = 0, label: str = "") -> tuple[int, int]:
        """Zero-payload slot (two fused redzones); any access at its base faults."""
        return self._alloc_common(space, 0, scope, label)

    def _alloc_common(self, space: MemSpace, size: int, scope: int, label: str) -> tuple[int, int]:
        cfg = self.config
        if not 0 <= scope < cfg.scopes(space):
            raise ValueError(f"scope {scope} out of range for {space.value}")
        slot_size = cfg.redzone + _align_up(size, cfg.granule) + cfg.redzone
        key = (space, scope, slot_size)
        bucket = self.free_lists.get(key)
        if bucket:
            slot_off = bucket.pop(0)  # lowest address first: deterministic FIFO reuse
            if not bucket:
                del self.free_lists[key]
        else:
            cur = self.cursors[(space, scope)]
            scope_end = (scope + 1) * cfg.scope_size(space)
            if cur + slot_size > scope_end:
                raise OutOfSpaceError(
                    f"{space.value} scope {scope}: need {slot_size} bytes, "
                    f"{scope_end - cur} remain")
            slot_off = cur
            self.cursors[(space, scope)] = cur + slot_size
        sbase = SPACE_BASE[space]
        slot_start = sbase + slot_off
        base = slot_start + cfg.redzone
        rec = AllocationRecord(self._next_alloc_id, space, scope, base, size, LIVE,
                               label, slot_start, slot_start + slot_size, self.iteration)
        self._next_alloc_id += 1
        self.records[rec.alloc_id] = rec
        insort(self._by_base[space], (base, rec.alloc_id))
        self._poison_slot(rec, None)
        if size:
            off = base - sbase
            self.mem[space][off:off + size] = bytes(size)
            self._mark_mem(space, off, size)
        return base, rec.alloc_id

    def free(self, addr: int) -> int:
        """Free the allocation whose payload starts at addr; returns its alloc_id."""
        sp = self.space_of(addr)
        if sp is None:
            raise InvalidFreeError(addr, "address outside all spaces")
        rows = self._by_base[sp]
        i = bisect_right(rows, (addr, 1 << 62)) - 1
        if i < 0 or rows[i][0] != addr:
            raise InvalidFreeError(addr, "not the base of any resident allocation")
        rec = self.records[rows[i][1]]
        if rec.state == FREED:
            raise InvalidFreeError(addr, "allocation already freed")
        rec.state = FREED
        rec.death_iteration = self.iteration
        self._poison_slot(rec, SHADOW_FREED)
        self.quarantine.append(rec.alloc_id)
        self.quarantine_bytes[sp] += rec.slot_end - rec.slot_start
        cap = self.config.quarantine_capacity(sp)
        while self.quarantine_bytes_for(sp) > cap:
            self._evict_one(sp)
        return rec.alloc_id

    def quarantine_bytes_for(self, space: MemSpace) -> int:
        return self.quarantine_bytes[space]

    def _evict_one(self, space: MemSpace):
        for qi, rid in enumerate(self.quarantine):
            rec = self.records[rid]
            if rec.space == space:
                del self.quarantine[qi]
                break
        else:
            raise AssertionError("quarantine accounting out of sync")
        g = self.config.granule
        sbase = SPACE_BASE[space]
        slot_goff = (rec.slot_start - sbase) // g
        slot_gend = (rec.slot_end - sbase) // g
        self._set_shadow(space, slot_goff, slot_gend - slot_goff, SHADOW_UNALLOCATED)
        rows = self._by_base[space]
        i = bisect_right(rows, (rec.base, 1 << 62)) - 1
        assert rows[i] == (rec.base, rec.alloc_id)
        del rows[i]
        slot_size = rec.slot_end - rec.slot_start
        key = (space, rec.scope, slot_size)
        insort(self.free_lists.setdefault(key, []), rec.slot_start - sbase)
        self.quarantine_bytes[space] -= slot_size

    # -- lookup -----------------------------------------------------------------------

    def resolve_payload(self, addr: int) -> AllocationRecord | None:
        """Record whose payload contains addr (LIVE or quarantined), else None."""
        sp = self.space_of(addr)
        if sp is None:
            return None
        rows = self._by_base[sp]
        i = bisect_right(rows, (addr, 1 << 62)) - 1
        if i < 0:
            return None
        rec = self.records[rows[i][1]]
        if rec.base <= addr < rec.base + rec.size:
            return rec
        return None

    def resolve_slot(self, addr: int) -> AllocationRecord | None:
        """Record whose slot (redzones included) contains addr, else None."""
        sp = self.space_of(addr)
        if sp is None:
            return None
        rows = self._by_base[sp]
        i = bisect_right(rows, (addr, 1 << 62)) - 1
        for j in (i, i + 1):
            if 0 <= j < len(rows):
                rec = self.records[rows[j][1]]
                if rec.slot_start <= addr < rec.slot_end:
                    return rec
        return None

    def record(self, alloc_id: int) -> AllocationRecord | None:
        return self.records.get(alloc_id)

    def live_allocations(self) -> list[AllocationRecord]:
        return [r for r in self.records.values() if r.state == LIVE]

    # -- sanitized host transfers --------------------------------------------------

    def copy_in(self, addr: int, data: bytes):
        """Host-to-device copy through the access checker; returns a finding or None.
        The transfer is suppressed when a finding fires."""
        from .sanitizer import check_host_access
        if not data:
            return None
        report = check_host_access(self, addr, len(data), is_store=True)
        if report is not None:
            return report
        self.write_raw(addr, bytes(data))
        return None

    def copy_out(self, addr: int, length: int):
        """Device-to-host copy through the access checker; returns (bytes|None, finding|None)."""
        from .sanitizer import check_host_access
        if length == 0:
            return b"", None
        report = check_host_access(self, addr, length, is_store=False)
        if report is not None:
            return None, report
        return self.read_raw(addr, length), None

    # -- snapshot / restore -----------------------------------------------------------

    def snapshot(self) -> Snapshot:
        """Capture observable state; the image itself is unchanged (bookkeeping aside)."""
        self._token_counter += 1
        token = self._token_counter
        snap = Snapshot(
            token=token,
            config=self.config,
            mem={sp: bytes(self.mem[sp]) for sp in _SPACES},
            shadow={sp: bytes(self.shadow[sp]) for sp in _SPACES},
            records={rid: replace(r) for rid, r in self.records.items()},
            cursors=dict(self.cursors),
            free_lists={k: list(v) for k, v in self.free_lists.items()},
            quarantine=list(self.quarantine),
            quarantine_bytes=dict(self.quarantine_bytes),
            iteration=self.iteration,
            rng_state=self.rng.state_bytes() if self.rng is not None else None,
        )
        self._baseline_token = token
        for sp in _SPACES:
            self._dirty_mem[sp].clear()
            self._dirty_shadow[sp].clear()
        return snap

    def restore(self, snap: Snapshot) -> None:
        """Return the image to a snapshot's state.  Fast path: when the snapshot
        is the current baseline, only chunks dirtied since it was taken are
        copied back."""
        if snap.config != self.config:
            raise SnapshotMismatchError("snapshot taken under a different memory config")
        if snap.token and snap.token == self._baseline_token:
            for sp in _SPACES:
                src = snap.mem[sp]
                dst = self.mem[sp]
                for ci in self._dirty_mem[sp]:
                    lo = ci * _CHUNK
                    hi = lo + _CHUNK
                    dst[lo:hi] = src[lo:hi]
                self._dirty_mem[sp].clear()
                ssrc = snap.shadow[sp]
                sdst = self.shadow[sp]
                for ci in self._dirty_shadow[sp]:
                    lo = ci * _CHUNK
                    hi = lo + _CHUNK
                    sdst[lo:hi] = ssrc[lo:hi]
                self._dirty_shadow[sp].clear()
        else:
            for sp in _SPACES:
                self.mem[sp][:] = snap.mem[sp]
                self.shadow[sp][:] = snap.shadow[sp]
                self._dirty_mem[sp].clear()
                self._dirty_shadow[sp].clear()
            self._baseline_token = snap.token if snap.token else None
        self.records = {rid: replace(r) for rid, r in snap.records.items()}
        resident = set(snap.quarantine)
        by_base: dict[MemSpace, list[tuple[int, int]]] = {sp: [] for sp in _SPACES}
        for rec in self.records.values():
            if rec.state == LIVE or rec.alloc_id in resident:
                by_base[rec.space].append((rec.base, rec.alloc_id))
        for sp in _SPACES:
            by_base[sp].sort()
        self._by_base = by_base
        self.cursors = dict(snap.cursors)
        self.free_lists = {k: list(v) for k, v in snap.free_lists.items()}
        self.quarantine = list(snap.quarantine)
        self.quarantine_bytes = dict(snap.quarantine_bytes)
        self.iteration = snap.iteration
        if snap.rng_state is not None and self.rng is not None:
            self.rng.set_state_bytes(snap.rng_state)
