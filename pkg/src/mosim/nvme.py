"""Hardware NVMe queue engine.

Commands are composed in 64-byte records, enqueued in the submission ring
that lives in the pinned NVDIMM region, and announced to the device by a
doorbell.  Each SQ slot carries a journal tag: set to 1 when the command
is sent to the device, cleared when its completion interrupt is
processed.  Slots are therefore not recycled at device fetch but at
completion, so that a power-up scan of the SQ region finds exactly the
commands that were in flight.  The device keeps its own volatile fetch
cursor and begins commands in FIFO submission order; completions may
arrive out of order.

Persist mode gates submission to a single outstanding command and sets
FUA on writes; extend mode submits as long as the ring has room.
"""

from dataclasses import dataclass

from .config import MODE_PERSIST
from .errors import CidExhausted, ModeChangeWhileBusy, QueueFull, UnknownCid
from .interconnect import MASTER_CONTROLLER

OP_READ = "read"
OP_WRITE = "write"


@dataclass
class NvmeCommand:
    cid: int
    opcode: str
    lba: int                 # MoS frame number
    prp: tuple               # ("set", index) or ("prp", slot)
    length_bytes: int
    fua: bool = False
    journal_tag: int = 0

    def to_record(self):
        return {"cid": self.cid, "opcode": self.opcode, "lba": self.lba,
                "prp": self.prp, "length": self.length_bytes,
                "fua": int(self.fua), "journal_tag": self.journal_tag}

    @staticmethod
    def from_record(rec):
        return NvmeCommand(rec["cid"], rec["opcode"], rec["lba"],
                           tuple(rec["prp"]), rec["length"],
                           bool(rec["fua"]), rec["journal_tag"])


class NvmeEngine:
    def __init__(self, sim, cfg, nvdimm, on_doorbell, on_complete,
                 transport=None):
        self.sim = sim
        self.cfg = cfg
        self.nvdimm = nvdimm
        self.pinned = nvdimm.pinned
        self.bus = nvdimm.bus
        self.on_doorbell = on_doorbell      # fn(now) -> device fetch
        self.on_complete = on_complete      # fn(cmd, now) -> controller
        # datapath-specific command announcement (register interface);
        # None means a plain doorbell write
        self.transport = transport
        self.mode = cfg.mode
        depth = cfg.nvme.queue_depth
        # 16-bit command id space, recycled LIFO, independent of ring depth
        self._next_cid = 0
        self._free_cids = []
        self._live_cids = set()
        self.outstanding = {}               # cid -> (command, slot index)
        self.slot_done = [True] * depth
        self.pending = []                   # commands gated by mode or ring
        self.device_cursor = 0              # volatile; lost on power failure
        self.submitted = 0
        self.completed = 0
        self.composed = 0
        self.max_outstanding = 0

    # -- command composition --------------------------------------------------
    def _alloc_cid(self):
        if self._free_cids:
            cid = self._free_cids.pop()
        elif self._next_cid < 65536:
            cid = self._next_cid
            self._next_cid += 1
        else:
            raise CidExhausted("all 65536 command ids in flight")
        self._live_cids.add(cid)
        return cid

    def _release_cid(self, cid):
        self._live_cids.discard(cid)
        self._free_cids.append(cid)

    def compose(self, opcode, prp, lba):
        cid = self._alloc_cid()
        fua = opcode == OP_WRITE and self.mode == MODE_PERSIST
        self.composed += 1
        return NvmeCommand(cid, opcode, lba, prp,
                           self.cfg.mos.page_size_bytes, fua)

    # -- submission ------------------------------------------------------------
    def submit(self, cmd, now):
        """Queue-aware submit: defers on mode gate or ring-full and retries
        as completions drain.  FIFO against already-deferred commands."""
        if self.pending or self._gated() or self.pinned.sq_full():
            self.pending.append(cmd)
            return
        self._do_submit(cmd, now)

    def submit_strict(self, cmd, now):
        """Contract-checking variant used by direct callers."""
        if self.pinned.sq_full():
            raise QueueFull("submission ring full")
        if self._gated():
            self.pending.append(cmd)
            return
        self._do_submit(cmd, now)

    def _gated(self):
        return self.mode == MODE_PERSIST and len(self.outstanding) >= 1

    def _do_submit(self, cmd, now):
        slot = self.pinned.sq_tail
        cmd.journal_tag = 1
        rec = cmd.to_record()
        self.pinned.sq[slot] = rec
        self.slot_done[slot] = False
        self.pinned.sq_tail = (slot + 1) % self.pinned.depth
        self.outstanding[cmd.cid] = (cmd, slot)
        self.submitted += 1
        self.max_outstanding = max(self.max_outstanding, len(self.outstanding))
        # persist the 64B entry, then announce it to the device
        _s, e = self.bus.transfer(now, 64, MASTER_CONTROLLER)
        self.nvdimm.beats_transferred += 1
        if self.transport is not None:
            ring_at = self.transport(e, cmd)
        else:
            ring_at = e + self.cfg.nvme.doorbell_ps
        self.sim.schedule(ring_at, "nvme.doorbell", self.on_doorbell, ring_at)
        return e

    def device_fetch(self):
        """Device pulls new SQ entries in FIFO order (volatile cursor)."""
        out = []
        while self.device_cursor != self.pinned.sq_tail:
            rec = self.pinned.sq[self.device_cursor]
            out.append(NvmeCommand.from_record(rec))
            self.device_cursor = (self.device_cursor + 1) % self.pinned.depth
        return out

    # -- completion --------------------------------------------------------------
    def post_cqe(self, cmd, now, charge_bus=True):
        """Device-side CQ entry write; returns the completion-record time.
        charge_bus=False when the entry already rode a locked DMA window."""
        self.pinned.cq[self.pinned.cq_tail] = {"cid": cmd.cid}
        self.pinned.cq_tail = (self.pinned.cq_tail + 1) % self.pinned.depth
        self.nvdimm.beats_transferred += 1
        if not charge_bus:
            return now
        _s, e = self.bus.transfer(now, 64, MASTER_CONTROLLER)
        return e

    def on_msi(self, cid, now):
        """Interrupt handler: sync CQ, clear the journal tag, notify owner."""
        if cid not in self.outstanding:
            raise UnknownCid("completion for unknown cid %d" % cid)
        cmd, slot = self.outstanding.pop(cid)
        rec = self.pinned.sq[slot]
        rec["journal_tag"] = 0
        cmd.journal_tag = 0
        self.slot_done[slot] = True
        self._advance_sq_head()
        self.pinned.cq_head = self.pinned.cq_tail
        self.completed += 1
        self._release_cid(cid)
        # journal-tag bookkeeping is one more 64B pinned write
        self.bus.transfer(now, 64, MASTER_CONTROLLER)
        self.nvdimm.beats_transferred += 1
        self.on_complete(cmd, now)
        self._drain_pending(now)

    def _advance_sq_head(self):
        p = self.pinned
        while p.sq_head != p.sq_tail and self.slot_done[p.sq_head]:
            p.sq_head = (p.sq_head + 1) % p.depth

    def _drain_pending(self, now):
        while self.pending and not self._gated() and not self.pinned.sq_full():
            self._do_submit(self.pending.pop(0), now)

    # -- mode ------------------------------------------------------------------
    def set_mode(self, mode):
        if self.outstanding or self.pending:
            raise ModeChangeWhileBusy("%d commands in flight"
                                      % (len(self.outstanding) + len(self.pending)))
        self.mode = mode

    # -- power-failure recovery ---------------------------------------------------
    def scan_journal(self):
        """SQ slots with journal tag still set, in ring (submission) order."""
        p = self.pinned
        out = []
        idx = p.sq_head
        for _ in range(p.depth):
            rec = p.sq[idx]
            if rec is not None and rec["journal_tag"] == 1:
                out.append(dict(rec))
            idx = (idx + 1) % p.depth
        return out

    def recover(self, now):
        """Power-up scan: re-enqueue every journal-tagged command into fresh
        rings and resubmit it.  Returns the reissued commands."""
        pending = self.scan_journal()
        # consistency: the journal covers at least every command the device
        # has not posted a completion for; a crash between CQ post and MSI
        # processing legally leaves extra tags, replayed idempotently
        offset_gap = (self.pinned.sq_tail - self.pinned.cq_tail) % self.pinned.depth
        assert len(pending) >= offset_gap, \
            "SQ/CQ tail offsets disagree with journal tags"
        p = self.pinned
        p.sq = [None] * p.depth
        p.cq = [None] * p.depth
        p.sq_head = p.sq_tail = p.cq_head = p.cq_tail = 0
        self.slot_done = [True] * p.depth
        self.device_cursor = 0
        reissued = []
        for rec in pending:
            cmd = NvmeCommand.from_record(rec)
            cmd.journal_tag = 0
            # replays keep their pre-crash command ids
            self._live_cids.add(cmd.cid)
            self._next_cid = max(self._next_cid, cmd.cid + 1)
            self.submit(cmd, now)
            reissued.append(cmd)
        return reissued
