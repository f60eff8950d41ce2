"""Transaction-level timing for the two datapaths.

Closed forms:
  pcie_transfer_ps(nbytes) = ceil(nbytes / tlp_payload) * per_tlp_overhead
                             + nbytes * ps_per_byte
  ddr4_transfer_ps(nbytes) = tCL + ceil(nbytes / 64) * tBURST

Both the DDR4 channel and the PCIe link are modelled as single serial
resources with FIFO reservation: a caller asks for an interval and gets
(start, end) with start = max(now, resource free).  On the advanced
datapath the flash controller may master the DDR4 bus; mastership is
arbitrated by a single-bit lock register that the cache controller grants
and the flash-side controller releases.  Register-interface commands
occupy the bus for exactly 10 cycles: 1 deselect + 1 write command +
8 burst beats.
"""

from .errors import BusLocked, DoubleGrant, ReleaseWithoutOwnership

MASTER_CONTROLLER = "controller"
MASTER_NVME = "nvme"

REGISTER_COMMAND_CYCLES = 10  # deselect + write command + 8-beat 64B burst


def pcie_transfer_ps(nbytes, link):
    if nbytes <= 0:
        return 0
    tlps = -(-nbytes // link.tlp_payload)
    return tlps * link.per_tlp_overhead_ps + nbytes * link.ps_per_byte


def ddr4_transfer_ps(nbytes, timing):
    beats = -(-nbytes // 64)
    return timing.tcl_ps + beats * timing.tburst_ps


def register_command_ps(timing):
    return REGISTER_COMMAND_CYCLES * timing.bus_cycle_ps


class SerialResource:
    """One-at-a-time resource handing out FIFO time reservations."""

    def __init__(self, name, record_intervals=False):
        self.name = name
        self.free_at = 0
        self.record_intervals = record_intervals
        self.intervals = []  # (start, end, master, nbytes)

    def reserve(self, now, duration, master="", nbytes=0):
        start = max(now, self.free_at)
        end = start + duration
        self.free_at = end
        if self.record_intervals and duration > 0:
            self.intervals.append((start, end, master, nbytes))
        return start, end

    def reset(self):
        self.free_at = 0
        self.intervals = []


class Ddr4Bus(SerialResource):
    """Shared DDR4 channel carrying cache-line traffic, register commands
    and (advanced datapath) flash-side DMA inside lock windows."""

    def __init__(self, timing, record_intervals=False):
        super().__init__("ddr4", record_intervals)
        self.timing = timing
        self.lock = 0
        self.lock_owner = None
        self.grants = 0
        self.releases = 0
        self.lock_windows = []  # (grant_time, release_time) when recording

    def transfer(self, now, nbytes, master=MASTER_CONTROLLER):
        """Queue-based transfer; returns (start, end)."""
        return self.reserve(now, ddr4_transfer_ps(nbytes, self.timing),
                            master, nbytes)

    def try_transfer(self, now, nbytes, master=MASTER_CONTROLLER):
        """Strict variant: refuses while the other master holds the lock."""
        if self.lock and master != MASTER_NVME:
            raise BusLocked("bus mastered by flash-side controller")
        if not self.lock and master == MASTER_NVME:
            raise BusLocked("flash-side controller has no grant")
        return self.transfer(now, nbytes, master)

    def send_register_command(self, now):
        """64B command pushed to the device registers; 10 bus cycles."""
        return self.reserve(now, register_command_ps(self.timing),
                            MASTER_CONTROLLER, 64)

    def grant_lock(self, at):
        if self.lock:
            raise DoubleGrant("lock already granted")
        self.lock = 1
        self.lock_owner = MASTER_NVME
        self.grants += 1
        self._last_grant = at

    def release_lock(self, at, owner=MASTER_NVME):
        if not self.lock:
            raise ReleaseWithoutOwnership("lock not held")
        if owner != self.lock_owner:
            raise ReleaseWithoutOwnership("release by non-owner %r" % owner)
        self.lock = 0
        self.lock_owner = None
        self.releases += 1
        if self.record_intervals:
            self.lock_windows.append((self._last_grant, at))

    def locked_transfer(self, now, nbytes, extra_ps=0):
        """Reserve a flash-mastered DMA window; lock toggling is driven by
        the machine via events at the returned (start, end)."""
        return self.reserve(now, ddr4_transfer_ps(nbytes, self.timing) + extra_ps,
                            MASTER_NVME, nbytes)


class PcieBus(SerialResource):
    def __init__(self, link, record_intervals=False):
        super().__init__("pcie", record_intervals)
        self.link = link

    def transfer(self, now, nbytes, master=""):
        return self.reserve(now, pcie_transfer_ps(nbytes, self.link),
                            master, nbytes)


def overlapping_intervals(intervals):
    """Return pairs of overlapping (start, end, master, *) entries from
    different masters; empty list means mutual exclusion held."""
    out = []
    order = sorted(intervals)
    for a, b in zip(order, order[1:]):
        if b[0] < a[1] and a[2] != b[2]:
            out.append((a, b))
    return out
