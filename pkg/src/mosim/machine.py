"""One simulated system instance: engine, devices, datapath, driver.

The machine owns the event loop and sequences the datapath legs that the
device models expose as reservations:

  fill  (flash read):  doorbell -> HIL -> die/channel subs -> [baseline:
        PCIe then DDR4 page DMA | advanced: one locked DDR4 window for
        page + CQ entry] -> completion interrupt -> install -> retry
  evict (flash write): doorbell -> HIL -> [baseline: DDR4 then PCIe page
        DMA | advanced: locked DDR4 window] -> buffer insert (ack) or
        programs -> completion interrupt

The request driver keeps up to `window` trace requests in flight,
standing in for the cores' outstanding-miss capacity; a request is
admitted once its trace tick has passed and a slot is free.  Per-request
latency runs from admission to the completion notification.

Power failures are taken between events: a crash image is the NVDIMM
snapshot plus the flash state after the supercapacitor flush, everything
volatile (device backlog, in-flight DMA, pending events) is discarded.
A machine restored from an image replays journal-tagged commands and
cleans up stale busy bits, orphaned clones and the wait queue.
"""

from .config import DATAPATH_ADVANCED
from .controller import CacheController, MemoryRequest
from .errors import SimulationError
from .flash import UllFlash
from .interconnect import (MASTER_CONTROLLER, Ddr4Bus, PcieBus,
                           ddr4_transfer_ps, pcie_transfer_ps,
                           register_command_ps)
from .metrics import MetricsReport
from .nvdimm import Nvdimm, TagEntry
from .nvme import OP_READ, NvmeEngine
from .simcore import Simulator


class Machine:
    def __init__(self, cfg, label=None, record_log=False):
        self.cfg = cfg
        self.sim = Simulator(record_log=record_log)
        self.bus = Ddr4Bus(cfg.ddr4, record_intervals=cfg.audit)
        # variant: flash payload moves on its own DDR4 channel
        self.flash_bus = (Ddr4Bus(cfg.ddr4, record_intervals=cfg.audit)
                          if cfg.dedicated_flash_channel else self.bus)
        self.pcie = PcieBus(cfg.pcie, record_intervals=cfg.audit)
        self.nvdimm = Nvdimm(cfg, self.bus)
        self.flash = UllFlash(cfg)
        self.advanced = cfg.datapath == DATAPATH_ADVANCED
        self.engine = NvmeEngine(self.sim, cfg, self.nvdimm,
                                 self._on_doorbell, self._on_cmd_complete,
                                 transport=(self._send_register_command
                                            if self.advanced else None))
        self.controller = CacheController(self.sim, cfg, self.nvdimm,
                                          self.engine, self)
        self.report = MetricsReport(label or cfg.label)
        self.page = cfg.mos.page_size_bytes
        # driver
        self.requests = []
        self._next_req = 0
        self._in_flight = 0
        self._parked = {}
        self._fill_data = {}
        self._first_admit = None
        self._last_ack = 0
        self.outcome_log = []          # (req_id, hit) in resolution order
        self.oracle = None
        self.recovery_mode = False
        self.recovered_fill_installs = 0
        self._bench = None
        # hook for commands submitted outside the cache controller
        self.on_external_complete = None
        # per-set write intervals for the DMA/cache-write overlap audit
        self.set_write_log = [] if cfg.audit else None
        if cfg.audit:
            self.nvdimm.set_access_log = self.set_write_log

    # ------------------------------------------------------------------ driver
    def load_trace(self, records):
        """records: iterable of (tick, kind, addr, size); fresh request
        objects are created so a trace can be replayed across machines."""
        self.requests = [MemoryRequest(i, kind, addr, size, tick)
                         for i, (tick, kind, addr, size) in enumerate(records)]
        for req in self.requests:
            first = req.addr // self.page
            last = (req.addr + req.size - 1) // self.page
            if first != last:
                raise SimulationError("request %d spans a page boundary"
                                      % req.req_id)

    def start_trace(self):
        if self.requests:
            start = self.requests[0].tick
            self.sim.schedule(start, "driver.start", self._issue_more, start)

    def run_trace(self):
        self.start_trace()
        self.sim.run_all()
        if self._in_flight or self._next_req != len(self.requests):
            raise SimulationError("trace did not drain: %d in flight"
                                  % self._in_flight)
        self.finalize_report()
        return self.report

    def _issue_more(self, now):
        now = max(now, self.sim.now)
        while (self._next_req < len(self.requests)
               and self._in_flight < self.cfg.driver.window):
            req = self.requests[self._next_req]
            if req.tick > now:
                self.sim.schedule(req.tick, "driver.issue",
                                  self._issue_more, req.tick)
                return
            self._next_req += 1
            self._in_flight += 1
            req.admit_time = now
            if self._first_admit is None:
                self._first_admit = now
            self.controller.serve(req, now)

    def park_request(self, req):
        self._parked[req.req_id] = req

    def unpark_request(self, req_id):
        return self._parked.pop(req_id)

    def note_outcome(self, req, hit):
        self.outcome_log.append((req.req_id, hit))

    def note_load_value(self, req, fp):
        req.load_fp = fp

    def complete_request(self, req, t):
        req.complete_time = t
        self._last_ack = max(self._last_ack, t)
        self._in_flight -= 1
        self.report.add_request(req)
        if self.oracle is not None:
            self.oracle.on_ack(req)
        # admission runs as its own event so freshly admitted requests can
        # never cut ahead of waiters parked on a just-cleared set
        self.sim.schedule(t, "driver.next", self._issue_more, t)

    def finalize_report(self):
        span = 0
        if self._first_admit is not None:
            span = max(1, self._last_ack - self._first_admit)
        self.report.makespan_ps = span
        counters = {
            "nvdimm_beats": self.nvdimm.beats_transferred,
            "flash_page_reads": self.flash.page_reads,
            "flash_page_programs": self.flash.page_programs,
            "buffer_accesses": (self.flash.buffer.accesses
                                if self.flash.buffer else 0),
            "commands": self.engine.composed,
        }
        self.report.apply_energy(self.cfg.energy, counters, span,
                                 self.cfg.buffer_enabled)

    # ---------------------------------------------------------------- datapath
    def _send_register_command(self, now, cmd):
        """64B command pushed over the DDR4 register interface; the device
        parses it from its data-buffer registers at the end of the burst."""
        _s, e = self.bus.send_register_command(now)
        self._charge_fill(cmd.cid, "interface",
                          register_command_ps(self.cfg.ddr4))
        return e

    def _on_doorbell(self, now):
        now = self.sim.now
        for cmd in self.engine.device_fetch():
            self._start_device_command(cmd, now)

    def _start_device_command(self, cmd, now):
        hs, he = self.flash.hil_admit(now)
        if cmd.opcode == OP_READ:
            plan = self.flash.plan_read(cmd.cid, cmd.lba, cmd.length_bytes, he)
            self._charge_fill(cmd.cid, "flash_array",
                              (he - hs) + (plan.t_done - plan.t_admit))
            self.sim.schedule(plan.t_done, "flash.read_done",
                              self._device_read_done, cmd, plan)
        else:
            self._start_device_write(cmd, hs, he)

    def _source_fp(self, cmd):
        kind, idx = cmd.prp
        if kind == "prp":
            fp = self.nvdimm.pinned.prp_pool[idx]
        else:
            fp = self.nvdimm.data.get(idx, 0)
        return fp if fp is not None else 0

    def _start_device_write(self, cmd, hs, he):
        fp = self._source_fp(cmd)
        n = cmd.length_bytes
        if self.advanced:
            dur = ddr4_transfer_ps(n, self.cfg.ddr4)
            ls, le = self.flash_bus.reserve(he, dur, "nvme", n)
            self._lock_window(ls, le)
            t_data = le
        else:
            ds, de = self.bus.transfer(he, n, MASTER_CONTROLLER)
            ps, pe = self.pcie.transfer(de, n)
            t_data = pe
        plan = self.flash.plan_write(cmd.cid, cmd.lba, fp, n, t_data, cmd.fua)
        self.sim.schedule(plan.t_ack, "flash.write_acked",
                          self._write_acked, cmd, plan)
        if plan.t_durable > plan.t_ack:
            self.sim.schedule(plan.t_durable, "flash.write_durable",
                              self.flash.apply_write_commit, plan)

    def _device_read_done(self, cmd, plan):
        now = self.sim.now
        fp = self.flash.finish_read(plan)
        self._fill_data[cmd.cid] = fp
        n = cmd.length_bytes
        if self.advanced:
            # page DMA plus the CQ entry inside one lock window
            dur = ddr4_transfer_ps(n, self.cfg.ddr4) + ddr4_transfer_ps(64, self.cfg.ddr4)
            ls, le = self.flash_bus.reserve(now, dur, "nvme", n + 64)
            self._lock_window(ls, le)
            self._charge_fill(cmd.cid, "interface", dur)
            self._note_set_write(cmd, ls, le)
            end = self.engine.post_cqe(cmd, le, charge_bus=False)
        else:
            p1, p2 = self.pcie.transfer(now, n)
            d1, d2 = self.bus.transfer(p2, n, MASTER_CONTROLLER)
            self._charge_fill(cmd.cid, "interface",
                              pcie_transfer_ps(n, self.cfg.pcie)
                              + ddr4_transfer_ps(n, self.cfg.ddr4))
            self._note_set_write(cmd, d1, d2)
            end = self.engine.post_cqe(cmd, d2, charge_bus=True)
        self._charge_fill(cmd.cid, "nvdimm", ddr4_transfer_ps(64, self.cfg.ddr4))
        self.sim.schedule(end + self.cfg.nvme.msi_ps, "nvme.msi",
                          self._msi, cmd.cid)

    def _write_acked(self, cmd, plan):
        now = self.sim.now
        self.flash.apply_write_ack(plan)
        if plan.t_durable == plan.t_ack:
            self.flash.apply_write_commit(plan)
        if self.advanced:
            dur = ddr4_transfer_ps(64, self.cfg.ddr4)
            ls, le = self.flash_bus.reserve(now, dur, "nvme", 64)
            self._lock_window(ls, le)
            end = self.engine.post_cqe(cmd, le, charge_bus=False)
        else:
            end = self.engine.post_cqe(cmd, now, charge_bus=True)
        self.sim.schedule(end + self.cfg.nvme.msi_ps, "nvme.msi",
                          self._msi, cmd.cid)

    def _msi(self, cid):
        self.engine.on_msi(cid, self.sim.now)

    def _lock_window(self, start, end):
        self.sim.schedule(start, "bus.grant", self.flash_bus.grant_lock, start)
        self.sim.schedule(end, "bus.release", self.flash_bus.release_lock, end)

    def _charge_fill(self, cid, cls, ps):
        txn = self.controller.by_fill.get(cid)
        if txn is not None:
            txn.req.charge(cls, ps)

    def _note_set_write(self, cmd, start, end):
        if self.set_write_log is not None and cmd.prp[0] == "set":
            self.set_write_log.append((cmd.prp[1], start, end, "nvme-dma"))

    def take_fill_data(self, cid):
        return self._fill_data.pop(cid)

    # ------------------------------------------------------------- completions
    def _on_cmd_complete(self, cmd, now):
        if self.recovery_mode:
            self._recovery_complete(cmd, now)
        elif self._bench is not None:
            self._bench_complete(cmd, now)
        else:
            self.controller.on_command_complete(cmd, now)

    def on_unowned_complete(self, cmd, now):
        if self.on_external_complete is not None:
            self.on_external_complete(cmd, now)
            return
        raise SimulationError("completion for unowned command %d" % cmd.cid)

    # --------------------------------------------------------- device benchmark
    def run_device_benchmark(self, queue_depth, count, length=None):
        """Closed-loop sequential-read benchmark against the bare device;
        returns bytes/s measured at the completion interrupt."""
        if queue_depth >= self.cfg.nvme.queue_depth:
            raise SimulationError("benchmark depth must be < ring depth")
        n = length or self.page
        self._bench = {"next": 0, "count": count, "done": 0, "last": 0,
                       "length": n}
        for _ in range(min(queue_depth, count)):
            self._bench_submit(0)
        self.sim.run_all()
        bench = self._bench
        self._bench = None
        if bench["last"] == 0:
            return 0.0
        return bench["done"] * n * 1e12 / bench["last"]

    def _bench_submit(self, now):
        b = self._bench
        frame = b["next"]
        b["next"] += 1
        cmd = self.engine.compose(OP_READ, ("set", 0), frame)
        cmd.length_bytes = b["length"]
        self.engine.submit(cmd, now)

    def _bench_complete(self, cmd, now):
        b = self._bench
        self._fill_data.pop(cmd.cid, None)
        b["done"] += 1
        b["last"] = max(b["last"], now)
        if b["next"] < b["count"]:
            self._bench_submit(now)

    # ------------------------------------------------------------ power failure
    def crash_image(self):
        """Everything that survives a power failure at this instant."""
        img = {"time": self.sim.now,
               "nvdimm": self.nvdimm.persist_snapshot(),
               "flash": self.flash.crash_image()}
        if self.oracle is not None:
            img["oracle"] = self.oracle.snapshot()
        return img

    @classmethod
    def from_image(cls, cfg, image, label=None):
        m = cls(cfg, label=label)
        m.nvdimm.restore_snapshot(image["nvdimm"])
        m.flash.restore_image(image["flash"])
        return m

    def recover(self):
        """Journal-tag replay after restoration; returns reissued commands."""
        self.recovery_mode = True
        reissued = self.engine.recover(self.sim.now)
        self.sim.run_all()
        self._recovery_cleanup()
        self.recovery_mode = False
        return reissued

    def _recovery_complete(self, cmd, now):
        if cmd.opcode == OP_READ:
            kind, set_index = cmd.prp
            assert kind == "set"
            assert cmd.lba % self.cfg.mos.num_sets == set_index
            fp = self._fill_data.pop(cmd.cid)
            self.nvdimm.install_page(set_index, fp)
            entry = TagEntry(tag=cmd.lba // self.cfg.mos.num_sets,
                             valid=True, dirty=False, busy=False)
            self.nvdimm.write_line(now, set_index, entry, None, 64)
            self.recovered_fill_installs += 1
        else:
            kind, slot = cmd.prp
            if kind == "prp" and not self.nvdimm.pinned.prp_free[slot]:
                self.nvdimm.pinned.free_prp_slot(slot)

    def _recovery_cleanup(self):
        # interrupted transactions leave stale busy bits and clones behind;
        # their requests were never acknowledged, so drop the bookkeeping
        for entry in self.nvdimm.tag_array.values():
            entry.busy = False
        for slot, free in enumerate(self.nvdimm.pinned.prp_free):
            if not free:
                self.nvdimm.pinned.free_prp_slot(slot)
        self.nvdimm.pinned.wait_queue.clear()
        self.nvdimm.pinned.msi_table.clear()

    # ------------------------------------------------------------------ queries
    def mos_view(self, frame):
        """Content of one frame as the MMU would read it (cache over flash)."""
        set_index = frame % self.cfg.mos.num_sets
        entry = self.nvdimm.tag_array.get(set_index)
        if (entry is not None and entry.valid
                and entry.tag == frame // self.cfg.mos.num_sets):
            return self.nvdimm.data.get(set_index, 0)
        return self.flash.content.get(frame, 0)

    def cached_frames(self):
        out = {}
        for set_index, entry in self.nvdimm.tag_array.items():
            if entry.valid:
                frame = self.cfg.mos.frame_of_tag_set(entry.tag, set_index)
                out[frame] = self.nvdimm.data.get(set_index, 0)
        return out
