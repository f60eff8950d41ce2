"""Ultra-low-latency flash device: HIL parsing/striping, FTL mapping,
FIL channel/die timing, and the optional internal DRAM buffer.

Timing model
------------
A command passes a serial HIL stage (fixed per-command firmware cost,
FIFO, so commands begin in submission order), is split per 4 KiB flash
page and then striped: with channel_stripe=2 each flash-page unit becomes
two half-page transfers on two distinct channels, halving the per-unit
DMA time.  Reads occupy the die for the array time and then the channel
for the DMA; writes occupy the channel first and then the die for the
program.  Channels and dies are serial resources with greedy FIFO
reservation, which keeps the device deterministic without internal events.

Content and crash semantics
---------------------------
Page content (64-bit fingerprints, one per MoS frame) commits atomically
when a write command completes; in-flight commands are discarded by a
power failure and re-driven by journal replay.  On the PCIe datapath the
internal DRAM buffer absorbs non-FUA writes (acknowledged at insert,
destaged in background) and is flushed to flash by supercapacitors when
power fails.  Commands targeting the same frame are serialized at
admission so a fill for a frame whose eviction is still in flight always
observes the evicted data.
"""

from dataclasses import dataclass, field

from .errors import CapacityExhausted


@dataclass
class SubRequest:
    parent_cid: int
    channel: int
    die: int
    ppn: tuple
    nbytes: int
    start: int = 0
    end: int = 0


@dataclass
class ReadPlan:
    cid: int
    frame: int
    t_admit: int
    t_done: int
    subs: list
    buffer_hit: bool


@dataclass
class WritePlan:
    cid: int
    frame: int
    fp: int
    t_admit: int
    t_ack: int
    t_durable: int
    buffered: bool
    subs: list
    ppns: list = field(default_factory=list)
    acked: bool = False
    serial: int = -1          # unique; command ids recycle, plans must not


class Ftl:
    """Page-level LBA->PPN map with a round-robin (channel, die) allocator.

    Out-of-place updates recycle invalidated slots immediately; garbage
    collection and wear leveling are not modelled, so CapacityExhausted
    only fires when live data exceeds the device.
    """

    def __init__(self, geom, total_flash_pages):
        self.geom = geom
        pairs = geom.channels * geom.dies_per_channel
        self.slots_per_pair = max(1, total_flash_pages // pairs)
        self.mapping = {}                     # lpn -> (channel, die, slot)
        self._next_fresh = {}                 # pair -> next unused slot
        self._freed = {}                      # pair -> [slot]
        self._cursor = 0
        self._pairs = pairs

    def _pair_cd(self, pair):
        return pair % self.geom.channels, pair // self.geom.channels

    def _alloc_from(self, pair):
        freed = self._freed.get(pair)
        if freed:
            return freed.pop()
        nxt = self._next_fresh.get(pair, 0)
        if nxt < self.slots_per_pair:
            self._next_fresh[pair] = nxt + 1
            return nxt
        return None

    def allocate(self, lpn):
        """Next free ppn, round-robin across (channel, die)."""
        for probe in range(self._pairs):
            pair = (self._cursor + probe) % self._pairs
            slot = self._alloc_from(pair)
            if slot is not None:
                self._cursor = (pair + 1) % self._pairs
                ch, die = self._pair_cd(pair)
                return (ch, die, slot)
        raise CapacityExhausted("no free flash pages for lpn %d" % lpn)

    def commit(self, lpn, ppn):
        old = self.mapping.get(lpn)
        self.mapping[lpn] = ppn
        if old is not None:
            self.release(old)

    def release(self, ppn):
        """Return an unmapped physical page to its pool."""
        pair = ppn[1] * self.geom.channels + ppn[0]
        self._freed.setdefault(pair, []).append(ppn[2])

    def translate(self, lpn):
        """Resident mapping, or a deterministic placement for cold reads."""
        ppn = self.mapping.get(lpn)
        if ppn is not None:
            return ppn
        ch = lpn % self.geom.channels
        die = (lpn // self.geom.channels) % self.geom.dies_per_channel
        return (ch, die, -1)

    def rebuild_free_pools(self):
        """Recompute allocator state from the committed mapping (power-up)."""
        used = {}
        for ch, die, slot in self.mapping.values():
            used.setdefault(die * self.geom.channels + ch, set()).add(slot)
        self._next_fresh = {}
        self._freed = {}
        for pair, slots in used.items():
            top = max(slots) + 1
            self._next_fresh[pair] = top
            self._freed[pair] = [s for s in range(top) if s not in slots]
        self._cursor = 0


class InternalBuffer:
    """SSD-internal DRAM in front of the channels (PCIe datapath only)."""

    def __init__(self, capacity_pages):
        self.capacity = max(1, capacity_pages)
        self.resident = {}   # frame -> {"fp": int, "dirty": bool}
        self.accesses = 0

    def lookup(self, frame):
        ent = self.resident.get(frame)
        if ent is not None:
            self.accesses += 1
            # refresh LRU position
            self.resident[frame] = self.resident.pop(frame)
        return ent

    def insert(self, frame, fp, dirty):
        self.accesses += 1
        if frame in self.resident:
            self.resident.pop(frame)
        elif len(self.resident) >= self.capacity:
            self._evict_one()
        self.resident[frame] = {"fp": fp, "dirty": dirty}

    def mark_clean(self, frame, fp):
        ent = self.resident.get(frame)
        if ent is not None and ent["fp"] == fp:
            ent["dirty"] = False

    def _evict_one(self):
        for frame, ent in self.resident.items():
            if not ent["dirty"]:
                del self.resident[frame]
                return
        # all dirty: drop the oldest; its destage commit is already planned
        self.resident.pop(next(iter(self.resident)))

    def dirty_frames(self):
        return [(f, e["fp"]) for f, e in self.resident.items() if e["dirty"]]


class UllFlash:
    def __init__(self, cfg):
        self.cfg = cfg
        self.geom = cfg.flash
        g = self.geom
        self.page_size = cfg.mos.page_size_bytes
        total_flash_pages = cfg.mos.flash_bytes // g.flash_page_bytes
        self.ftl = Ftl(g, total_flash_pages)
        self.content = {}                    # frame -> committed fingerprint
        self.buffer = (InternalBuffer(g.buffer_capacity_bytes // self.page_size)
                       if cfg.buffer_enabled else None)
        self.channel_free = [0] * g.channels
        self.die_free = [[0] * g.dies_per_channel for _ in range(g.channels)]
        self.hil_free = 0
        # frame -> completion time of the last admitted command touching it
        self.conflict_until = {}
        # plan serial -> WritePlan awaiting durability commit
        self.pending_commits = {}
        self._plan_seq = 0
        # frame -> serial of the newest committed write: destages of
        # successive versions may finish out of order, newest must win
        self.committed_serial = {}
        self.page_reads = 0
        self.page_programs = 0
        self.record_subs = bool(cfg.audit)
        self.sub_log = []

    # -- HIL ----------------------------------------------------------------
    def hil_admit(self, t_avail):
        """Serial firmware stage; enforces begin-in-submission-order."""
        start = max(t_avail, self.hil_free)
        end = start + self.geom.hil_ps
        self.hil_free = end
        return start, end

    def split_units(self, frame, length):
        """Flash-page units covering [frame*page, +length), as (lpn, bytes)."""
        fpb = self.geom.flash_page_bytes
        base = frame * self.page_size
        units = []
        off = 0
        while off < length:
            nbytes = min(fpb - (base + off) % fpb, length - off)
            units.append(((base + off) // fpb, nbytes))
            off += nbytes
        return units

    def hil_split(self, cid, frame, length, for_write, t_hint=0):
        """Stripe every flash-page unit across channels; with stripe=2 the
        two halves land on two distinct channels."""
        subs = []
        for lpn, nbytes in self.split_units(frame, length):
            ppn = self.ftl.allocate(lpn) if for_write else self.ftl.translate(lpn)
            ch, die, _slot = ppn
            if self.geom.channel_stripe == 2:
                half = nbytes // 2
                subs.append(SubRequest(cid, ch, die, ppn, half))
                subs.append(SubRequest(cid, (ch + 1) % self.geom.channels, die,
                                       ppn, nbytes - half))
            else:
                subs.append(SubRequest(cid, ch, die, ppn, nbytes))
        return subs

    # -- FIL ----------------------------------------------------------------
    def _serve_read_sub(self, sub, t_from):
        g = self.geom
        arr_start = max(t_from, self.die_free[sub.channel][sub.die])
        arr_end = arr_start + g.read_ps
        self.die_free[sub.channel][sub.die] = arr_end
        dma_start = max(arr_end, self.channel_free[sub.channel])
        dma_end = dma_start + sub.nbytes * g.channel_ps_per_byte
        self.channel_free[sub.channel] = dma_end
        sub.start, sub.end = arr_start, dma_end
        if self.record_subs:
            self.sub_log.append(("r", sub.channel, sub.die, arr_start, arr_end,
                                 dma_start, dma_end))
        return dma_end

    def _serve_write_sub(self, sub, t_from):
        g = self.geom
        dma_start = max(t_from, self.channel_free[sub.channel])
        dma_end = dma_start + sub.nbytes * g.channel_ps_per_byte
        self.channel_free[sub.channel] = dma_end
        prog_start = max(dma_end, self.die_free[sub.channel][sub.die])
        prog_end = prog_start + g.program_ps
        self.die_free[sub.channel][sub.die] = prog_end
        sub.start, sub.end = dma_start, prog_end
        if self.record_subs:
            self.sub_log.append(("w", sub.channel, sub.die, dma_start, dma_end,
                                 prog_start, prog_end))
        return prog_end

    def _admit(self, frame, t_ready):
        return max(t_ready, self.conflict_until.get(frame, 0))

    def plan_read(self, cid, frame, length, t_ready):
        """Reserve resources for a read; content is captured at t_done."""
        t_admit = self._admit(frame, t_ready)
        if self.buffer is not None and self.buffer.lookup(frame) is not None:
            t_done = t_admit + length * self.geom.buffer_ps_per_byte
            plan = ReadPlan(cid, frame, t_admit, t_done, [], True)
        else:
            subs = self.hil_split(cid, frame, length, for_write=False)
            t_done = t_admit
            for sub in subs:
                t_done = max(t_done, self._serve_read_sub(sub, t_admit))
            self.page_reads += len(self.split_units(frame, length))
            plan = ReadPlan(cid, frame, t_admit, t_done, subs, False)
        self.conflict_until[frame] = plan.t_done
        return plan

    def finish_read(self, plan):
        """Called at plan.t_done; resolves content after every conflicting
        commit event has been applied."""
        fp = self.read_content(plan.frame)
        if (self.buffer is not None and not plan.buffer_hit
                and plan.frame not in self.buffer.resident):
            # cache the read, but never clobber a resident (possibly
            # dirty, destage-pending) entry
            self.buffer.insert(plan.frame, fp, dirty=False)
        return fp

    def plan_write(self, cid, frame, fp, length, t_data, fua):
        """Reserve resources for a write arriving in full at t_data."""
        t_admit = self._admit(frame, t_data)
        buffered = self.buffer is not None and not fua
        if buffered:
            t_ack = t_admit + length * self.geom.buffer_ps_per_byte
            # destage immediately in background
            subs = self.hil_split(cid, frame, length, for_write=True)
            t_durable = t_ack
            for sub in subs:
                t_durable = max(t_durable, self._serve_write_sub(sub, t_ack))
            conflict_end = t_ack   # buffer makes content visible at ack
        else:
            subs = self.hil_split(cid, frame, length, for_write=True)
            t_durable = t_admit
            for sub in subs:
                t_durable = max(t_durable, self._serve_write_sub(sub, t_admit))
            t_ack = t_durable
            conflict_end = t_durable
        self.page_programs += len(self.split_units(frame, length))
        plan = WritePlan(cid, frame, fp, t_admit, t_ack, t_durable, buffered, subs)
        plan.ppns = sorted({(s.ppn, u[0]) for s, u in
                            zip(subs[:: self.geom.channel_stripe],
                                self.split_units(frame, length))})
        self.conflict_until[frame] = max(conflict_end,
                                         self.conflict_until.get(frame, 0))
        plan.serial = self._plan_seq
        self._plan_seq += 1
        self.pending_commits[plan.serial] = plan
        return plan

    def apply_write_ack(self, plan):
        """At t_ack: buffered data becomes visible in the internal DRAM."""
        plan.acked = True
        if plan.buffered:
            self.buffer.insert(plan.frame, plan.fp, dirty=True)

    def apply_write_commit(self, plan):
        """At t_durable: page content and mapping commit atomically.  A
        stale version (older serial finishing after a newer one) only
        releases its pages."""
        if plan.serial > self.committed_serial.get(plan.frame, -1):
            self.committed_serial[plan.frame] = plan.serial
            self.content[plan.frame] = plan.fp
            for ppn, lpn in plan.ppns:
                self.ftl.commit(lpn, ppn)
        else:
            for ppn, _lpn in plan.ppns:
                self.ftl.release(ppn)
        if self.buffer is not None:
            if plan.buffered:
                self.buffer.mark_clean(plan.frame, plan.fp)
            elif plan.frame in self.buffer.resident:
                # bypassing write still supersedes a read-cached copy
                self.buffer.resident[plan.frame] = {"fp": plan.fp,
                                                    "dirty": False}
        self.pending_commits.pop(plan.serial, None)

    def read_content(self, frame):
        if self.buffer is not None:
            ent = self.buffer.lookup(frame)
            if ent is not None:
                return ent["fp"]
        return self.content.get(frame, 0)

    # -- power failure -------------------------------------------------------
    def crash_image(self):
        """Committed state after a power failure: supercapacitors flush every
        acknowledged-but-not-yet-durable buffered write; everything else in
        flight is discarded.  The flush honors version order: a pending plan
        older than the committed version of its frame is stale (its newer
        sibling destaged out of order) and must not rewind the page."""
        content = dict(self.content)
        mapping = dict(self.ftl.mapping)
        if self.buffer is not None:
            newest = dict(self.committed_serial)
            for plan in self.pending_commits.values():   # serial order
                if (plan.buffered and plan.acked
                        and plan.serial > newest.get(plan.frame, -1)):
                    newest[plan.frame] = plan.serial
                    content[plan.frame] = plan.fp
                    for ppn, lpn in plan.ppns:
                        mapping[lpn] = ppn
        return {"content": content, "mapping": mapping}

    def restore_image(self, image):
        self.content = dict(image["content"])
        self.ftl.mapping = dict(image["mapping"])
        self.ftl.rebuild_free_pools()
        self.channel_free = [0] * self.geom.channels
        self.die_free = [[0] * self.geom.dies_per_channel
                         for _ in range(self.geom.channels)]
        self.hil_free = 0
        self.conflict_until = {}
        self.pending_commits = {}
        self.committed_serial = {}
        if self.buffer is not None:
            self.buffer = InternalBuffer(self.buffer.capacity)
