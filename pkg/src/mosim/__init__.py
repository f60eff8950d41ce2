"""mosim: trace-driven simulator of a memory-over-storage controller.

An NVDIMM acts as a direct-mapped, inclusive, write-back cache in front
of an ultra-low-latency flash device; the controller drives the flash
over NVMe rings held in pinned persistent memory, with journal-tag crash
recovery, hazard avoidance (busy bits, PRP cloning, a wait queue) and a
choice of PCIe-attached (baseline) or shared-DDR4 (advanced) datapaths.
"""

from .addressing import AddressParts, MosConfig, decompose, recompose
from .config import SimConfig, config_from_dict, load_config
from .machine import Machine
from .metrics import MetricsReport
from .runner import run_comparison, run_platform

__all__ = [
    "AddressParts", "MosConfig", "decompose", "recompose",
    "SimConfig", "config_from_dict", "load_config",
    "Machine", "MetricsReport", "run_comparison", "run_platform",
]

__version__ = "0.1.0"
