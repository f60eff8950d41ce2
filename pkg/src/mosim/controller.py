"""Cache controller for the unified memory space.

Serves MMU requests from the direct-mapped NVDIMM cache and orchestrates
miss handling against the flash device.  Hazard avoidance follows three
rules:

  * a set with an in-flight fill carries busy=1 in its tag entry; requests
    that land on a busy set park in the wait queue (no load bypass), which
    excludes the set from eviction and makes redundant evictions
    impossible;
  * a dirty victim is cloned into the PRP pool before its eviction is
    submitted, and the eviction command's PRP points at the clone, so
    device DMA never races the cache logic on a live set;
  * the wait queue preserves per-set arrival order; when a fill lands,
    waiters for that set are re-driven through serve() in order until one
    of them re-opens the set.

Stores allocate on miss (fill, then merge) and dirty the set without
flash traffic on hits.  A fill always moves a whole page.
"""

from dataclasses import dataclass, field

from .addressing import fold_store, store_token
from .errors import PrpPoolExhausted
from .nvme import OP_READ, OP_WRITE

LOAD = "load"
STORE = "store"

TXN_ISSUED = "issued"
TXN_WAITING = "waiting"
TXN_FILLING = "filling"
TXN_DONE = "done"


@dataclass
class MemoryRequest:
    req_id: int
    kind: str                # load | store
    addr: int
    size: int
    tick: int = 0
    # runtime accounting, owned by the machine
    admit_time: int = -1
    complete_time: int = -1
    hit: bool = False
    waited: bool = False
    segments: dict = field(default_factory=dict)

    def charge(self, cls, ps):
        if ps:
            self.segments[cls] = self.segments.get(cls, 0) + ps


@dataclass
class MissTransaction:
    req: MemoryRequest
    set_index: int
    frame: int
    tag: int
    victim_dirty: bool = False
    victim_tag: int = None
    evict_cid: int = None
    fill_cid: int = None
    prp_slot: int = None
    state: str = TXN_ISSUED


class CacheController:
    def __init__(self, sim, cfg, nvdimm, engine, machine):
        self.sim = sim
        self.cfg = cfg
        self.mos = cfg.mos
        self.nvdimm = nvdimm
        self.engine = engine
        self.machine = machine
        self.by_fill = {}         # fill cid -> txn
        self.by_evict = {}        # evict cid -> txn
        self.clone_stalled = []   # txns waiting for a free PRP slot
        self.prp_exhaustion_events = 0
        self.hits = 0
        self.misses = 0
        # audit trail for hazard invariants, enabled with cfg.audit
        self.audit = cfg.audit
        self.inflight_evicts = set()   # (set_index, tag)
        self.evict_overlap_violations = 0

    def busy_transactions(self):
        return len(self.by_fill) + len(self.by_evict)

    def set_mode(self, mode):
        self.engine.set_mode(mode)

    # -- request entry ---------------------------------------------------------
    def serve(self, req, now):
        parts = self._decompose(req)
        set_index, tag = parts
        fetch = 64 + req.size if req.kind == LOAD else 64
        entry, fp, s, e = self.nvdimm.read_line(now, set_index, fetch)
        req.charge("nvdimm", e - s)
        if entry.busy:
            # parked until the in-flight transfer on this set completes
            req.waited = True
            self.nvdimm.pinned.wait_queue.append(
                (req.req_id, req.kind, req.addr, req.size, now))
            self.machine.park_request(req)
            return
        if entry.valid and entry.tag == tag:
            self._serve_hit(req, set_index, entry, fp, e)
        else:
            self._record_outcome(req, hit=False)
            self.open_miss(req, set_index, tag, entry, fp, e)

    def _serve_hit(self, req, set_index, entry, fp, t):
        self._record_outcome(req, hit=True)
        if req.kind == LOAD:
            self.machine.note_load_value(req, fp)
            self.machine.complete_request(req, t)
            return
        token = store_token(req.req_id, req.addr, req.size)
        offset = req.addr % self.mos.page_size_bytes
        new_fp = fold_store(fp, offset, req.size, token)
        entry.dirty = True
        s, e = self.nvdimm.write_line(t, set_index, entry, new_fp, 64 + req.size)
        req.charge("nvdimm", e - s)
        self.machine.complete_request(req, e)

    # -- miss path ---------------------------------------------------------------
    def open_miss(self, req, set_index, tag, entry, victim_fp, now):
        frame = self.mos.frame_of_tag_set(tag, set_index)
        txn = MissTransaction(req, set_index, frame, tag,
                              victim_dirty=entry.valid and entry.dirty)
        if entry.valid:
            entry.busy = True
        else:
            # cold set: reserve it under the new tag right away
            entry.tag = tag
            entry.valid = True
            entry.dirty = False
            entry.busy = True
        s, e = self.nvdimm.write_line(now, set_index, entry, None, 64)
        req.charge("nvdimm", e - s)
        if txn.victim_dirty:
            self._clone_and_submit(txn, victim_fp, e)
        else:
            self._submit_fill(txn, e)

    def _clone_and_submit(self, txn, victim_fp, now):
        slot = self.nvdimm.pinned.alloc_prp_slot()
        if slot is None:
            # undersized pool: the transaction stalls until a slot frees
            self.prp_exhaustion_events += 1
            if not self.nvdimm.pinned.prp_free:
                raise PrpPoolExhausted("PRP pool has zero slots")
            self.clone_stalled.append((txn, victim_fp))
            txn.state = TXN_WAITING
            return
        txn.prp_slot = slot
        txn.victim_tag = self.nvdimm.entry(txn.set_index).tag
        page = self.mos.page_size_bytes
        # page copy into the pinned pool: one read burst plus one write burst
        s, e = self.nvdimm.bus.transfer(now, page)
        s2, e2 = self.nvdimm.bus.transfer(e, page)
        self.nvdimm.beats_transferred += 2 * -(-page // 64)
        txn.req.charge("nvdimm", (e - s) + (e2 - s2))
        self.nvdimm.pinned.prp_pool[slot] = victim_fp
        victim_frame = self.mos.frame_of_tag_set(txn.victim_tag, txn.set_index)
        evict = self.engine.compose(OP_WRITE, ("prp", slot), victim_frame)
        txn.evict_cid = evict.cid
        self.by_evict[evict.cid] = txn
        if self.audit:
            key = (txn.set_index, txn.victim_tag)
            if key in self.inflight_evicts:
                self.evict_overlap_violations += 1
            self.inflight_evicts.add(key)
        self.engine.submit(evict, e2)
        self._submit_fill(txn, e2)

    def _submit_fill(self, txn, now):
        fill = self.engine.compose(OP_READ, ("set", txn.set_index), txn.frame)
        txn.fill_cid = fill.cid
        txn.state = TXN_FILLING
        self.by_fill[fill.cid] = txn
        self.engine.submit(fill, now)

    def resume_clone_stalled(self, now):
        while self.clone_stalled and any(self.nvdimm.pinned.prp_free):
            txn, victim_fp = self.clone_stalled.pop(0)
            txn.state = TXN_ISSUED
            self._clone_and_submit(txn, victim_fp, now)

    # -- completions ----------------------------------------------------------------
    def on_command_complete(self, cmd, now):
        if cmd.cid in self.by_fill:
            self.on_fill_complete(self.by_fill.pop(cmd.cid), now)
        elif cmd.cid in self.by_evict:
            self.on_evict_complete(self.by_evict.pop(cmd.cid), now)
        else:
            self.machine.on_unowned_complete(cmd, now)

    def on_fill_complete(self, txn, now):
        req = txn.req
        set_index = txn.set_index
        fp = self.machine.take_fill_data(txn.fill_cid)
        self.nvdimm.install_page(set_index, fp)
        entry = self.nvdimm.entry(set_index)
        entry.tag = txn.tag
        entry.valid = True
        entry.dirty = False
        entry.busy = False
        s, e = self.nvdimm.write_line(now, set_index, entry, None, 64)
        req.charge("nvdimm", e - s)
        if req.kind == STORE:
            token = store_token(req.req_id, req.addr, req.size)
            offset = req.addr % self.mos.page_size_bytes
            merged = fold_store(fp, offset, req.size, token)
            entry.dirty = True
            s2, e2 = self.nvdimm.write_line(e, set_index, entry, merged,
                                            64 + req.size)
            req.charge("nvdimm", e2 - s2)
            done = e2
        else:
            s2, e2 = self.nvdimm.read_line(e, set_index, 64 + req.size)[2:]
            req.charge("nvdimm", e2 - s2)
            self.machine.note_load_value(req, fp)
            done = e2
        txn.state = TXN_DONE
        self.machine.complete_request(req, done)
        self._drain_waiters(set_index, done)

    def on_evict_complete(self, txn, now):
        if self.audit:
            self.inflight_evicts.discard((txn.set_index, txn.victim_tag))
        if txn.prp_slot is not None:
            self.nvdimm.pinned.free_prp_slot(txn.prp_slot)
            txn.prp_slot = None
        self.resume_clone_stalled(now)

    # -- wait queue -----------------------------------------------------------------
    def _drain_waiters(self, set_index, now):
        """Re-drive waiters whose set just cleared, preserving arrival order."""
        wq = self.nvdimm.pinned.wait_queue
        while True:
            if self.nvdimm.entry(set_index).busy:
                return
            pick = None
            for i, item in enumerate(wq):
                _rid, _kind, addr, _size, _t = item
                if self._set_of(addr) == set_index:
                    pick = i
                    break
            if pick is None:
                return
            item = wq.pop(pick)
            req = self.machine.unpark_request(item[0])
            self.serve(req, now)

    def _set_of(self, addr):
        return self.mos.frame_of(addr) % self.mos.num_sets

    def _decompose(self, req):
        frame = self.mos.frame_of(req.addr)
        return frame % self.mos.num_sets, frame // self.mos.num_sets

    def _record_outcome(self, req, hit):
        req.hit = hit
        if hit:
            self.hits += 1
        else:
            self.misses += 1
        self.machine.note_outcome(req, hit)
