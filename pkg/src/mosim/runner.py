"""Top-level run entry points shared by the CLI and the test suite."""

from concurrent.futures import ThreadPoolExecutor

from .config import (DATAPATH_ADVANCED, DATAPATH_BASELINE, MODE_EXTEND,
                     MODE_PERSIST, PLATFORM_MOS, PLATFORM_MMAP)
from .machine import Machine
from .workload import mmap_baseline, split_page_straddle


def run_platform(cfg, records, label=None, record_log=False):
    """One full simulation (or the analytic comparator) over a trace."""
    page = cfg.mos.page_size_bytes
    records = [piece for rec in records
               for piece in split_page_straddle(*rec, page)]
    if cfg.platform == PLATFORM_MMAP:
        return mmap_baseline(records, cfg)
    machine = Machine(cfg, label=label, record_log=record_log)
    machine.load_trace(records)
    return machine.run_trace()


COMPARE_MATRIX = [
    (DATAPATH_BASELINE, MODE_PERSIST),
    (DATAPATH_BASELINE, MODE_EXTEND),
    (DATAPATH_ADVANCED, MODE_PERSIST),
    (DATAPATH_ADVANCED, MODE_EXTEND),
]


def run_comparison(cfg, records, workers=1):
    """All four controller platforms plus the mmap comparator over one
    trace.  Instances are independent; aggregation order is fixed."""
    configs = [cfg.copy_with(platform=PLATFORM_MOS, datapath=dp, mode=m)
               for dp, m in COMPARE_MATRIX]
    configs.append(cfg.copy_with(platform=PLATFORM_MMAP))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(lambda c: run_platform(c, records), configs))
    else:
        reports = [run_platform(c, records) for c in configs]
    return reports
