"""NVDIMM model: cache data region, in-line tag array, pinned region.

The NVDIMM is DDR4-timed persistent DRAM.  It holds three things:

  * the cache data region, one MoS page per set, tracked as fingerprints;
  * the tag array, stored logically as a flat map but charged as part of
    the cache-line fetch (tag+ECC ride along with each line, so a lookup
    costs one burst, not two);
  * the pinned region at the top of the module, invisible to the request
    stream: SQ/CQ rings, PRP clone pool, MSI table and the wait queue of
    deferred memory requests.

Every byte of it survives power failure: snapshot() captures the full
content and restore() brings it back bit-identically.  Ring slots store
plain dict records so snapshots are cheap structural copies.
"""

from dataclasses import dataclass

from .interconnect import MASTER_CONTROLLER, ddr4_transfer_ps


@dataclass
class TagEntry:
    tag: int = 0
    valid: bool = False
    dirty: bool = False
    busy: bool = False

    def check(self):
        # busy and dirty both imply a resident page
        assert not self.busy or self.valid
        assert not self.dirty or self.valid

    def copy(self):
        return TagEntry(self.tag, self.valid, self.dirty, self.busy)


class PinnedRegion:
    """Persistent home of the NVMe data structures.

    Layout order is fixed as SQ, CQ, PRP pool, MSI table, wait queue; the
    byte budget against pinned_bytes is validated at config time.
    """

    def __init__(self, queue_depth, prp_slots):
        self.depth = queue_depth
        self.sq = [None] * queue_depth          # dict command records
        self.cq = [None] * queue_depth          # dict completion records
        self.sq_head = 0
        self.sq_tail = 0
        self.cq_head = 0
        self.cq_tail = 0
        self.prp_pool = [None] * prp_slots      # page fingerprint per clone
        self.prp_free = [True] * prp_slots
        self.msi_table = []                     # pending (cid, vector) pairs
        self.wait_queue = []                    # (req_id, kind, addr, size, t)

    def sq_occupancy(self):
        return (self.sq_tail - self.sq_head) % self.depth

    def sq_full(self):
        return (self.sq_tail + 1) % self.depth == self.sq_head

    def alloc_prp_slot(self):
        for i, free in enumerate(self.prp_free):
            if free:
                self.prp_free[i] = False
                return i
        return None

    def free_prp_slot(self, idx):
        assert not self.prp_free[idx]
        self.prp_free[idx] = True
        self.prp_pool[idx] = None

    def snapshot(self):
        return {
            "sq": [dict(r) if r else None for r in self.sq],
            "cq": [dict(r) if r else None for r in self.cq],
            "ptrs": (self.sq_head, self.sq_tail, self.cq_head, self.cq_tail),
            "prp_pool": list(self.prp_pool),
            "prp_free": list(self.prp_free),
            "msi_table": list(self.msi_table),
            "wait_queue": list(self.wait_queue),
        }

    def restore(self, snap):
        self.sq = [dict(r) if r else None for r in snap["sq"]]
        self.cq = [dict(r) if r else None for r in snap["cq"]]
        (self.sq_head, self.sq_tail, self.cq_head, self.cq_tail) = snap["ptrs"]
        self.prp_pool = list(snap["prp_pool"])
        self.prp_free = list(snap["prp_free"])
        self.msi_table = list(snap["msi_table"])
        self.wait_queue = list(snap["wait_queue"])


class Nvdimm:
    def __init__(self, cfg, bus):
        self.cfg = cfg
        self.bus = bus
        self.timing = bus.timing
        self.tag_array = {}      # set index -> TagEntry
        self.data = {}           # set index -> page fingerprint
        self.pinned = PinnedRegion(cfg.nvme.queue_depth, cfg.nvme.prp_pool_slots)
        self.beats_transferred = 0
        # optional hazard audit: (set, start, end, who) for set writes
        self.set_access_log = None

    def entry(self, set_index):
        e = self.tag_array.get(set_index)
        if e is None:
            e = TagEntry()
            self.tag_array[set_index] = e
        return e

    # -- timed line access ------------------------------------------------
    def line_cost_ps(self, fetch_bytes):
        return ddr4_transfer_ps(fetch_bytes, self.timing)

    def read_line(self, now, set_index, fetch_bytes):
        """Fetch tag entry + data for one set.  Returns (entry, fp, start, end)."""
        start, end = self.bus.transfer(now, fetch_bytes, MASTER_CONTROLLER)
        self.beats_transferred += -(-fetch_bytes // 64)
        return self.entry(set_index), self.data.get(set_index, 0), start, end

    def write_line(self, now, set_index, entry, fp, fetch_bytes):
        """Write tag entry + data for one set in a single transaction."""
        start, end = self.bus.transfer(now, fetch_bytes, MASTER_CONTROLLER)
        self.beats_transferred += -(-fetch_bytes // 64)
        entry.check()
        self.tag_array[set_index] = entry
        if fp is not None:
            self.data[set_index] = fp
        if self.set_access_log is not None:
            self.set_access_log.append((set_index, start, end, "controller"))
        return start, end

    def install_page(self, set_index, fp):
        """Content landing via DMA; the bus time is charged by the caller."""
        self.data[set_index] = fp

    # -- persistence -------------------------------------------------------
    def persist_snapshot(self):
        return {
            "tags": {s: e.copy() for s, e in self.tag_array.items()},
            "data": dict(self.data),
            "pinned": self.pinned.snapshot(),
        }

    def restore_snapshot(self, snap):
        self.tag_array = {s: e.copy() for s, e in snap["tags"].items()}
        self.data = dict(snap["data"])
        self.pinned.restore(snap["pinned"])
