"""Memory-over-storage address space: geometry and address decomposition.

The unified byte-addressable space is backed by flash and fronted by a
direct-mapped NVDIMM cache whose unit is one MoS page (128 KiB by
default).  An address splits into (tag, index, offset) with plain integer
arithmetic: the set count is not required to be a power of two, so index
uses modulo rather than bit slicing and no NVDIMM capacity is wasted.

Page contents are tracked as 64-bit fingerprints instead of raw bytes so
that an 800 GB space fits in host memory; every consistency check in the
simulator and its oracles compares fingerprints.
"""

from typing import NamedTuple

from .errors import AddressOutOfRange, ConfigError, PartsOutOfRange

KIB = 1024
MIB = 1024 * 1024
GIB = 1024 * 1024 * 1024


class AddressParts(NamedTuple):
    tag: int
    index: int
    offset: int


class MosConfig:
    """Geometry of the unified memory space.

    num_sets is derived: floor((nvdimm - pinned) / page_size).  Any
    remainder below one page is discarded.
    """

    def __init__(self, page_size_bytes=128 * KIB, nvdimm_bytes=8 * GIB,
                 pinned_bytes=512 * MIB, flash_bytes=800 * 10**9):
        if page_size_bytes <= 0 or page_size_bytes & (page_size_bytes - 1):
            raise ConfigError("page_size_bytes must be a positive power of two")
        if pinned_bytes >= nvdimm_bytes:
            raise ConfigError("pinned_bytes must be smaller than nvdimm_bytes")
        if flash_bytes < nvdimm_bytes:
            raise ConfigError("flash_bytes must be at least nvdimm_bytes")
        self.page_size_bytes = page_size_bytes
        self.nvdimm_bytes = nvdimm_bytes
        self.pinned_bytes = pinned_bytes
        self.flash_bytes = flash_bytes
        self.num_sets = (nvdimm_bytes - pinned_bytes) // page_size_bytes
        if self.num_sets < 1:
            raise ConfigError("cache region smaller than one page")
        self.num_frames = flash_bytes // page_size_bytes

    def frame_of(self, addr):
        return addr // self.page_size_bytes

    def set_of_frame(self, frame):
        return frame % self.num_sets

    def tag_of_frame(self, frame):
        return frame // self.num_sets

    def frame_of_tag_set(self, tag, index):
        return tag * self.num_sets + index


def decompose(addr, cfg):
    """Split a byte address into (tag, index, offset)."""
    if addr < 0 or addr >= cfg.flash_bytes:
        raise AddressOutOfRange("address 0x%X outside flash capacity" % addr)
    offset = addr % cfg.page_size_bytes
    frame = addr // cfg.page_size_bytes
    return AddressParts(tag=frame // cfg.num_sets,
                        index=frame % cfg.num_sets,
                        offset=offset)


def recompose(parts, cfg):
    """Exact inverse of decompose."""
    tag, index, offset = parts
    if tag < 0 or index < 0 or offset < 0:
        raise PartsOutOfRange("negative field")
    if index >= cfg.num_sets:
        raise PartsOutOfRange("index %d >= num_sets %d" % (index, cfg.num_sets))
    if offset >= cfg.page_size_bytes:
        raise PartsOutOfRange("offset %d >= page size" % offset)
    addr = (tag * cfg.num_sets + index) * cfg.page_size_bytes + offset
    if addr >= cfg.flash_bytes:
        raise PartsOutOfRange("recomposed address 0x%X outside flash capacity" % addr)
    return addr


_MIX = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def mix64(x):
    """splitmix64 finalizer; stable across platforms and runs."""
    x = (x + _MIX) & _MASK
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK
    x ^= x >> 31
    return x


def store_token(req_id, addr, size):
    """Synthetic payload identity for a store; a pure function of the request."""
    return mix64(mix64(req_id) ^ mix64(addr) ^ size)


def fold_store(page_fp, offset, size, token):
    """Fold one store into a page fingerprint.  Order-sensitive by design."""
    return mix64(page_fp ^ mix64(offset * 131 + size) ^ token)


ZERO_PAGE_FP = 0
