"""Simulation configuration: defaults, validation, YAML load/save.

The config file is a YAML document with one block per hardware model
(mos, ddr4, pcie, flash, nvme, driver, energy) plus the platform
selectors `datapath` (baseline | advanced), `mode` (persist | extend) and
`platform` (mos | mmap).  Every timing knob is stored internally in
integer picoseconds.

Energy numbers are placeholders marked `assumed` -- absolute joules are
not calibrated against hardware, only relative comparisons are meaningful.
"""

import yaml

from .addressing import MIB, MosConfig
from .errors import ConfigError

PS_PER_NS = 1000
PS_PER_US = 1000 * 1000

DATAPATH_BASELINE = "baseline"
DATAPATH_ADVANCED = "advanced"
MODE_PERSIST = "persist"
MODE_EXTEND = "extend"
PLATFORM_MOS = "mos"
PLATFORM_MMAP = "mmap"


class Ddr4Timing:
    """DDR4-2400-class defaults; only the 20 GB/s channel cap is a published
    figure, CAS latency and burst beat are declared assumptions."""

    def __init__(self, tcl_ps=14_000, tburst_ps=3_330,
                 peak_bw_bytes_per_s=20_000_000_000, bus_cycle_ps=833):
        if min(tcl_ps, tburst_ps, peak_bw_bytes_per_s, bus_cycle_ps) <= 0:
            raise ConfigError("ddr4 timing values must be positive")
        self.tcl_ps = tcl_ps
        self.tburst_ps = tburst_ps
        self.peak_bw_bytes_per_s = peak_bw_bytes_per_s
        self.bus_cycle_ps = bus_cycle_ps


class PcieLink:
    """Gen3 x4 link: 4 GB/s payload rate plus a fixed per-TLP overhead
    approximating transaction/data-link/physical layer costs."""

    def __init__(self, lanes=4, bytes_per_s=4_000_000_000, tlp_payload=4096,
                 per_tlp_overhead_ns=200):
        if min(lanes, bytes_per_s, tlp_payload) <= 0 or per_tlp_overhead_ns < 0:
            raise ConfigError("pcie link values must be positive")
        self.lanes = lanes
        self.bytes_per_s = bytes_per_s
        self.tlp_payload = tlp_payload
        self.per_tlp_overhead_ps = per_tlp_overhead_ns * PS_PER_NS
        self.ps_per_byte = 10**12 // bytes_per_s


class FlashGeometry:
    """Channel/die layout and Z-NAND-class latencies (3 us read, 100 us
    program).  hil_ns is the serial per-command firmware cost; the default
    reconciles the 3 us array read with the ~8 us device-level latency a
    real ultra-low-latency drive shows at low queue depth."""

    def __init__(self, channels=16, dies_per_channel=4, planes_per_die=2,
                 flash_page_bytes=4096, channel_stripe=2, read_us=3,
                 program_us=100, channel_mb_per_s=800, hil_ns=2500,
                 buffer_capacity_bytes=512 * MIB, buffer_ps_per_byte=80):
        if channel_stripe not in (1, 2):
            raise ConfigError("channel_stripe must be 1 or 2")
        if min(channels, dies_per_channel, planes_per_die, flash_page_bytes,
               read_us, program_us, channel_mb_per_s) <= 0:
            raise ConfigError("flash geometry values must be positive")
        if channel_stripe == 2 and channels < 2:
            raise ConfigError("striping across two channels needs >= 2 channels")
        self.channels = channels
        self.dies_per_channel = dies_per_channel
        self.planes_per_die = planes_per_die
        self.flash_page_bytes = flash_page_bytes
        self.channel_stripe = channel_stripe
        self.read_ps = read_us * PS_PER_US
        self.program_ps = program_us * PS_PER_US
        self.channel_ps_per_byte = 10**12 // (channel_mb_per_s * 1_000_000)
        self.hil_ps = hil_ns * PS_PER_NS
        self.buffer_capacity_bytes = buffer_capacity_bytes
        self.buffer_ps_per_byte = buffer_ps_per_byte


class NvmeParams:
    def __init__(self, queue_depth=16, prp_pool_slots=None, msi_ns=0,
                 doorbell_ns=0):
        if not 2 <= queue_depth <= 65536:
            raise ConfigError("queue_depth must be in [2, 65536]")
        self.queue_depth = queue_depth
        # every in-flight command may hold one clone plus one fill target
        self.prp_pool_slots = (2 * queue_depth if prp_pool_slots is None
                               else prp_pool_slots)
        if self.prp_pool_slots < 1:
            raise ConfigError("prp_pool_slots must be >= 1")
        self.msi_ps = msi_ns * PS_PER_NS
        self.doorbell_ps = doorbell_ns * PS_PER_NS


class DriverParams:
    """window = maximum memory requests kept in flight by the request
    source, standing in for the cores' outstanding-miss capacity."""

    def __init__(self, window=4):
        if window < 1:
            raise ConfigError("driver window must be >= 1")
        self.window = window


class EnergyModel:
    """Per-event energy parameters in pJ; all values assumed, not measured."""

    def __init__(self, nvdimm_pj_per_64b=10_000, flash_read_pj_per_page=8_000_000,
                 flash_program_pj_per_page=35_000_000, buffer_pj_per_page=500_000,
                 controller_pj_per_cmd=10_000, nvdimm_idle_mw=300,
                 flash_idle_mw=1700, buffer_idle_mw=350):
        vals = [nvdimm_pj_per_64b, flash_read_pj_per_page,
                flash_program_pj_per_page, buffer_pj_per_page,
                controller_pj_per_cmd, nvdimm_idle_mw, flash_idle_mw,
                buffer_idle_mw]
        if any(v < 0 for v in vals):
            raise ConfigError("energy parameters must be non-negative")
        self.nvdimm_pj_per_64b = nvdimm_pj_per_64b
        self.flash_read_pj_per_page = flash_read_pj_per_page
        self.flash_program_pj_per_page = flash_program_pj_per_page
        self.buffer_pj_per_page = buffer_pj_per_page
        self.controller_pj_per_cmd = controller_pj_per_cmd
        self.nvdimm_idle_mw = nvdimm_idle_mw
        self.flash_idle_mw = flash_idle_mw
        self.buffer_idle_mw = buffer_idle_mw


class SimConfig:
    """Everything one simulation instance needs, fully validated."""

    def __init__(self, mos=None, ddr4=None, pcie=None, flash=None, nvme=None,
                 driver=None, energy=None, datapath=DATAPATH_BASELINE,
                 mode=MODE_EXTEND, platform=PLATFORM_MOS,
                 mmap_overhead_us=17.5, dedicated_flash_channel=False,
                 audit=False):
        self.mos = mos or MosConfig()
        self.ddr4 = ddr4 or Ddr4Timing()
        self.pcie = pcie or PcieLink()
        self.flash = flash or FlashGeometry()
        self.nvme = nvme or NvmeParams()
        self.driver = driver or DriverParams()
        self.energy = energy or EnergyModel()
        if datapath not in (DATAPATH_BASELINE, DATAPATH_ADVANCED):
            raise ConfigError("datapath must be baseline or advanced")
        if mode not in (MODE_PERSIST, MODE_EXTEND):
            raise ConfigError("mode must be persist or extend")
        if platform not in (PLATFORM_MOS, PLATFORM_MMAP):
            raise ConfigError("platform must be mos or mmap")
        self.datapath = datapath
        self.mode = mode
        self.platform = platform
        self.mmap_overhead_us = float(mmap_overhead_us)
        # advanced variant flag: flash data moves on its own channel instead
        # of sharing the NVDIMM channel
        self.dedicated_flash_channel = bool(dedicated_flash_channel)
        self.audit = bool(audit)
        self._check_pinned_budget()

    # internal DRAM buffer exists only on the PCIe-attached datapath
    @property
    def buffer_enabled(self):
        return self.datapath == DATAPATH_BASELINE

    @property
    def label(self):
        if self.platform == PLATFORM_MMAP:
            return "mmap"
        return "mos-%s-%s" % (self.datapath, self.mode)

    def _check_pinned_budget(self):
        d = self.nvme.queue_depth
        pinned_needed = (d * 64 + d * 16
                         + self.nvme.prp_pool_slots * self.mos.page_size_bytes
                         + d * 16 + 4096)
        if pinned_needed > self.mos.pinned_bytes:
            raise ConfigError(
                "pinned region (%d B) cannot hold rings, PRP pool and wait "
                "queue (%d B needed)" % (self.mos.pinned_bytes, pinned_needed))

    def copy_with(self, **overrides):
        base = dict(mos=self.mos, ddr4=self.ddr4, pcie=self.pcie,
                    flash=self.flash, nvme=self.nvme, driver=self.driver,
                    energy=self.energy, datapath=self.datapath,
                    mode=self.mode, platform=self.platform,
                    mmap_overhead_us=self.mmap_overhead_us,
                    dedicated_flash_channel=self.dedicated_flash_channel,
                    audit=self.audit)
        base.update(overrides)
        return SimConfig(**base)


_SECTION_CLASSES = {
    "mos": (MosConfig, "mos"),
    "ddr4": (Ddr4Timing, "ddr4"),
    "pcie": (PcieLink, "pcie"),
    "flash": (FlashGeometry, "flash"),
    "nvme": (NvmeParams, "nvme"),
    "driver": (DriverParams, "driver"),
    "energy": (EnergyModel, "energy"),
}

_TOP_KEYS = ("datapath", "mode", "platform", "mmap_overhead_us",
             "dedicated_flash_channel", "audit")


def config_from_dict(doc):
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    kwargs = {}
    for key, value in doc.items():
        if key in _SECTION_CLASSES:
            cls, name = _SECTION_CLASSES[key]
            if not isinstance(value, dict):
                raise ConfigError("section %r must be a mapping" % key)
            try:
                kwargs[name] = cls(**value)
            except TypeError as exc:
                raise ConfigError("section %r: %s" % (key, exc)) from exc
        elif key in _TOP_KEYS:
            kwargs[key] = value
        else:
            raise ConfigError("unknown config key %r" % key)
    return SimConfig(**kwargs)


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return config_from_dict(doc)


DEFAULT_CONFIG_YAML = """\
# Memory-over-storage simulator configuration.  All sizes in bytes,
# latencies in the units named by each key.
datapath: baseline        # baseline (PCIe-attached flash) | advanced (shared DDR4)
mode: extend              # persist (FUA + single outstanding) | extend (parallel)
platform: mos             # mos | mmap (analytic comparator)
mmap_overhead_us: 17.5    # per-page-fault software cost, 15..20
mos:
  page_size_bytes: 131072
  nvdimm_bytes: 8589934592
  pinned_bytes: 536870912
  flash_bytes: 800000000000
ddr4:
  tcl_ps: 14000           # assumed: DDR4-2400-class CAS
  tburst_ps: 3330         # assumed: per 64B beat
  peak_bw_bytes_per_s: 20000000000
  bus_cycle_ps: 833       # assumed: 1.2 GHz command clock
pcie:
  lanes: 4
  bytes_per_s: 4000000000
  tlp_payload: 4096
  per_tlp_overhead_ns: 200   # assumed
flash:
  channels: 16               # assumed
  dies_per_channel: 4        # assumed
  planes_per_die: 2
  flash_page_bytes: 4096
  channel_stripe: 2
  read_us: 3
  program_us: 100
  channel_mb_per_s: 800      # assumed
  hil_ns: 2500               # assumed: serial firmware cost per command
  buffer_capacity_bytes: 536870912
  buffer_ps_per_byte: 80     # assumed
nvme:
  queue_depth: 16
  msi_ns: 0
  doorbell_ns: 0
driver:
  window: 4
energy:                      # assumed: placeholders, relative use only
  nvdimm_pj_per_64b: 10000
  flash_read_pj_per_page: 8000000
  flash_program_pj_per_page: 35000000
  buffer_pj_per_page: 500000
  controller_pj_per_cmd: 10000
  nvdimm_idle_mw: 300
  flash_idle_mw: 1700
  buffer_idle_mw: 350
"""


def write_default_config(path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(DEFAULT_CONFIG_YAML)
