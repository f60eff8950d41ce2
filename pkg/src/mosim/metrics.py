"""Latency-class accounting and energy model evaluation.

Every completed request carries named latency segments from its critical
path; whatever is not covered by a named segment is queueing, so the
five classes always sum to the measured end-to-end latency exactly:

  nvdimm       cache-line and pinned-region DDR transactions
  flash_array  device residency: firmware stage, die arrays, channel DMA
  interface    payload movement between device and NVDIMM (PCIe / DDR4
               legs) plus register-interface command transfers
  queueing     every wait: bus/link contention, ring or mode gating,
               wait-queue time, device backlog
  software     per-fault OS cost (mmap comparator only)

Energy is additive over counted events plus idle power times makespan;
absolute values are assumed placeholders, only comparisons are meaningful.
"""

import csv

CLASSES = ("nvdimm", "flash_array", "interface", "queueing", "software")

REPORT_COLUMNS = [
    "label", "requests", "hits", "misses", "hit_rate",
    "total_latency_ps", "amat_ps",
    "lat_nvdimm_ps", "lat_flash_array_ps", "lat_interface_ps",
    "lat_queueing_ps", "lat_software_ps",
    "makespan_ps", "throughput_rps", "throughput_bytes_per_s",
    "energy_nvdimm_pj", "energy_flash_pj", "energy_buffer_pj",
    "energy_controller_pj", "energy_total_pj",
]


class MetricsReport:
    def __init__(self, label):
        self.label = label
        self.requests = 0
        self.hits = 0
        self.misses = 0
        self.total_latency_ps = 0
        self.class_ps = {c: 0 for c in CLASSES}
        self.total_bytes = 0
        self.makespan_ps = 0
        self.energy_pj = {"nvdimm": 0, "flash": 0, "buffer": 0, "controller": 0}
        self.residual_error_ps = 0   # must stay 0: conservation check

    def add_request(self, req):
        total = req.complete_time - req.admit_time
        named = sum(req.segments.values())
        queueing = total - named
        # named segments can never exceed the end-to-end time
        if queueing < 0:
            self.residual_error_ps += -queueing
            queueing = 0
        self.requests += 1
        self.hits += 1 if req.hit else 0
        self.misses += 0 if req.hit else 1
        self.total_latency_ps += total
        self.total_bytes += req.size
        for cls, ps in req.segments.items():
            self.class_ps[cls] += ps
        self.class_ps["queueing"] += queueing

    @property
    def hit_rate(self):
        return self.hits / self.requests if self.requests else 0.0

    @property
    def amat_ps(self):
        return self.total_latency_ps // self.requests if self.requests else 0

    @property
    def throughput_rps(self):
        if not self.makespan_ps:
            return 0.0
        return self.requests * 1e12 / self.makespan_ps

    @property
    def throughput_bytes_per_s(self):
        if not self.makespan_ps:
            return 0.0
        return self.total_bytes * 1e12 / self.makespan_ps

    def conservation_holds(self):
        return (sum(self.class_ps.values()) == self.total_latency_ps
                and self.residual_error_ps == 0)

    def apply_energy(self, energy, counters, makespan_ps, buffer_enabled):
        """counters: dict with nvdimm_beats, flash_page_reads,
        flash_page_programs, buffer_accesses, commands."""
        idle = lambda mw: (mw * makespan_ps) // 1000   # mW * ps -> pJ
        self.energy_pj["nvdimm"] = (counters["nvdimm_beats"] * energy.nvdimm_pj_per_64b
                                    + idle(energy.nvdimm_idle_mw))
        self.energy_pj["flash"] = (counters["flash_page_reads"] * energy.flash_read_pj_per_page
                                   + counters["flash_page_programs"] * energy.flash_program_pj_per_page
                                   + idle(energy.flash_idle_mw))
        self.energy_pj["buffer"] = ((counters["buffer_accesses"] * energy.buffer_pj_per_page
                                     + idle(energy.buffer_idle_mw))
                                    if buffer_enabled else 0)
        self.energy_pj["controller"] = counters["commands"] * energy.controller_pj_per_cmd

    @property
    def energy_total_pj(self):
        return sum(self.energy_pj.values())

    def to_row(self):
        return [
            self.label, self.requests, self.hits, self.misses,
            "%.6f" % self.hit_rate,
            self.total_latency_ps, self.amat_ps,
            self.class_ps["nvdimm"], self.class_ps["flash_array"],
            self.class_ps["interface"], self.class_ps["queueing"],
            self.class_ps["software"],
            self.makespan_ps,
            "%.3f" % self.throughput_rps,
            "%.3f" % self.throughput_bytes_per_s,
            self.energy_pj["nvdimm"], self.energy_pj["flash"],
            self.energy_pj["buffer"], self.energy_pj["controller"],
            self.energy_total_pj,
        ]

    def summary_text(self):
        lines = [
            "platform: %s" % self.label,
            "requests: %d (hits %d, misses %d, hit rate %.4f)"
            % (self.requests, self.hits, self.misses, self.hit_rate),
            "amat: %.3f us   total stall: %.3f us"
            % (self.amat_ps / 1e6, self.total_latency_ps / 1e6),
            "breakdown (us): " + "  ".join(
                "%s=%.3f" % (c, self.class_ps[c] / 1e6) for c in CLASSES),
            "makespan: %.3f us   throughput: %.1f req/s, %.1f MB/s"
            % (self.makespan_ps / 1e6, self.throughput_rps,
               self.throughput_bytes_per_s / 1e6),
            "energy (uJ): " + "  ".join(
                "%s=%.3f" % (k, v / 1e6) for k, v in self.energy_pj.items()),
        ]
        return "\n".join(lines)


def write_reports_csv(reports, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for rep in reports:
            w.writerow(rep.to_row())


def read_reports_csv(path):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
