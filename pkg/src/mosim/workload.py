"""Trace ingestion, synthetic workload generation, mmap comparator.

Trace format: one record per line, `<tick> <L|S> <0xADDR> <size>`, ticks
in picoseconds, sorted by tick.  Records are validated and split at page
boundaries on ingest, so downstream modules never see a straddling
request.  Serialization is canonical and round-trips bit-exactly.

The mmap comparator is an analytic model of the software path it
replaces: page faults cost a configurable 15..20 us of kernel work plus
a 4 KiB device read over the full interface, handled serially; resident
pages cost one DRAM access.  It shares the metrics report format so the
two platforms compare directly.
"""

import random

from .controller import LOAD, STORE
from .errors import ParseError, UnsortedTrace
from .interconnect import ddr4_transfer_ps, pcie_transfer_ps
from .metrics import MetricsReport

OS_PAGE = 4096

_OPS = {"L": LOAD, "S": STORE}
_OP_LETTER = {LOAD: "L", STORE: "S"}


def split_page_straddle(tick, kind, addr, size, page_size):
    """Yield (tick, kind, addr, size) pieces that respect page boundaries."""
    while size > 0:
        room = page_size - (addr % page_size)
        piece = min(room, size)
        yield (tick, kind, addr, piece)
        addr += piece
        size -= piece


def parse_trace(path, cfg):
    """Parse and validate a trace file into page-split request tuples."""
    records = []
    last_tick = -1
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ParseError("cannot open trace: %s" % exc)
    with fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = text.split()
            if len(fields) != 4:
                raise ParseError("expected 4 fields, got %d" % len(fields), line_no)
            tick_s, op_s, addr_s, size_s = fields
            try:
                tick = int(tick_s)
            except ValueError:
                raise ParseError("bad tick %r" % tick_s, line_no)
            if op_s not in _OPS:
                raise ParseError("bad op %r (want L or S)" % op_s, line_no)
            if not addr_s.lower().startswith("0x"):
                raise ParseError("address %r must be hex" % addr_s, line_no)
            try:
                addr = int(addr_s, 16)
            except ValueError:
                raise ParseError("bad address %r" % addr_s, line_no)
            try:
                size = int(size_s)
            except ValueError:
                raise ParseError("bad size %r" % size_s, line_no)
            if size < 1:
                raise ParseError("size must be >= 1", line_no)
            if tick < 0:
                raise ParseError("tick must be >= 0", line_no)
            if addr + size > cfg.mos.flash_bytes:
                raise ParseError("address 0x%X+%d outside flash capacity"
                                 % (addr, size), line_no)
            if tick < last_tick:
                raise UnsortedTrace("line %d: tick %d < %d" % (line_no, tick, last_tick))
            last_tick = tick
            records.extend(split_page_straddle(tick, _OPS[op_s], addr, size,
                                               cfg.mos.page_size_bytes))
    return records


def write_trace(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for tick, kind, addr, size in records:
            fh.write("%d %s 0x%X %d\n" % (tick, _OP_LETTER[kind], addr, size))


GENERATOR_KINDS = ("seqRd", "rndRd", "seqWr", "rndWr", "mixed")


def generate(kind, footprint_bytes, count, seed, access_size=4096,
             tick_step=0, store_ratio=0.3):
    """Deterministic synthetic trace.  Sequential kinds stride by the
    access size and wrap at the footprint; random kinds draw uniform
    access-aligned addresses inside it."""
    if kind not in GENERATOR_KINDS:
        raise ValueError("unknown workload kind %r" % kind)
    if footprint_bytes < access_size:
        raise ValueError("footprint smaller than one access")
    rng = random.Random(seed)
    slots = footprint_bytes // access_size
    records = []
    tick = 0
    for i in range(count):
        if kind in ("seqRd", "seqWr"):
            addr = (i % slots) * access_size
        else:
            addr = rng.randrange(slots) * access_size
        if kind == "mixed":
            op = STORE if rng.random() < store_ratio else LOAD
        else:
            op = STORE if kind.endswith("Wr") else LOAD
        records.append((tick, op, addr, access_size))
        tick += tick_step
    return records


def distinct_page_trace(cfg, count, seed, kind=LOAD, access_size=4096):
    """count accesses, each to a different MoS page: a 100%-miss stream."""
    rng = random.Random(seed)
    page = cfg.mos.page_size_bytes
    frames = rng.sample(range(cfg.mos.flash_bytes // page), count)
    return [(0, kind, frame * page, access_size) for frame in frames]


def mmap_baseline(records, cfg, overhead_us=None):
    """Analytic software-path comparator over the same trace."""
    overhead_us = cfg.mmap_overhead_us if overhead_us is None else overhead_us
    if not 0 <= overhead_us <= 1000:
        raise ValueError("mmap overhead out of range")
    overhead_ps = int(overhead_us * 1_000_000)
    g = cfg.flash
    # cold 4 KiB device read, idle-device closed form
    unit = OS_PAGE // g.channel_stripe
    device_ps = g.hil_ps + g.read_ps + unit * g.channel_ps_per_byte
    transfer_ps = (pcie_transfer_ps(OS_PAGE, cfg.pcie)
                   + ddr4_transfer_ps(OS_PAGE, cfg.ddr4))
    dram_ps = ddr4_transfer_ps(64, cfg.ddr4)
    capacity = cfg.mos.nvdimm_bytes // OS_PAGE
    resident = {}
    report = MetricsReport("mmap")
    clock = 0
    faults = 0
    page_reads = 0
    beats = 0
    for _tick, kind, addr, size in records:
        os_page = addr // OS_PAGE
        hit = os_page in resident
        if hit:
            lat = {"nvdimm": ddr4_transfer_ps(max(size, 64), cfg.ddr4)}
            beats += -(-max(size, 64) // 64)
        else:
            if len(resident) >= capacity:
                resident.pop(next(iter(resident)))
            resident[os_page] = True
            faults += 1
            page_reads += 1
            beats += OS_PAGE // 64
            lat = {"software": overhead_ps, "flash_array": device_ps,
                   "interface": transfer_ps, "nvdimm": dram_ps}
        total = sum(lat.values())
        report.add_request(_AnalyticRequest(size, lat, clock, clock + total, hit))
        clock += total
    report.makespan_ps = max(1, clock)
    counters = {"nvdimm_beats": beats, "flash_page_reads": page_reads,
                "flash_page_programs": 0, "buffer_accesses": page_reads,
                "commands": faults}
    report.apply_energy(cfg.energy, counters, report.makespan_ps,
                        buffer_enabled=True)
    report.faults = faults
    return report


class _AnalyticRequest:
    def __init__(self, size, segments, admit, complete, hit):
        self.size = size
        self.segments = segments
        self.admit_time = admit
        self.complete_time = complete
        self.hit = hit
