"""Report rendering: delimited tables plus matplotlib figures.

Two CSV bundles feed the figures and round-trip losslessly:

  breakdown.csv   long format, one row per (platform, latency class)
  summary.csv     wide format, one row per platform (metrics columns)

Figures are written next to the CSVs as PNG: a stacked latency breakdown,
an average-access-time bar chart and a throughput bar chart.
"""

import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import CLASSES, write_reports_csv

BREAKDOWN_COLUMNS = ["platform", "latency_class", "ps"]

CLASS_COLORS = {
    "nvdimm": "#4878d0",
    "flash_array": "#ee854a",
    "interface": "#6acc64",
    "queueing": "#d65f5f",
    "software": "#956cb4",
}


def write_breakdown_csv(reports, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(BREAKDOWN_COLUMNS)
        for rep in reports:
            for cls in CLASSES:
                w.writerow([rep.label, cls, rep.class_ps[cls]])


def read_breakdown_csv(path):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if rows and rows[0] == BREAKDOWN_COLUMNS:
        rows = rows[1:]
    return [(label, cls, int(ps)) for label, cls, ps in rows]


def write_crash_csv(verdicts, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["boundary", "injection_time_ps", "acked_stores",
                    "replayed_cids", "acked_preserved", "spurious_data", "ok"])
        for v in verdicts:
            w.writerow([v.boundary, v.injection_time, v.acked_stores,
                        ";".join(str(c) for c in v.replayed_cids),
                        int(v.acknowledged_writes_preserved),
                        int(v.spurious_data), int(v.ok)])


def render_breakdown_figure(reports, path):
    labels = [rep.label for rep in reports]
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(labels)), 4))
    bottoms = [0.0] * len(reports)
    for cls in CLASSES:
        vals = [rep.class_ps[cls] / 1e6 for rep in reports]
        ax.bar(labels, vals, bottom=bottoms, label=cls,
               color=CLASS_COLORS[cls])
        bottoms = [b + v for b, v in zip(bottoms, vals)]
    ax.set_ylabel("total memory stall (us)")
    ax.set_title("Memory access delay breakdown")
    ax.legend(fontsize=8)
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_amat_figure(reports, path):
    labels = [rep.label for rep in reports]
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(labels)), 4))
    ax.bar(labels, [rep.amat_ps / 1e6 for rep in reports], color="#4878d0")
    ax.set_ylabel("average access time (us)")
    ax.set_title("AMAT per platform")
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_throughput_figure(reports, path):
    labels = [rep.label for rep in reports]
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(labels)), 4))
    ax.bar(labels, [rep.throughput_rps for rep in reports], color="#6acc64")
    ax.set_ylabel("requests / s")
    ax.set_title("Throughput per platform")
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def emit_report_bundle(reports, out_dir):
    """CSV tables plus rendered figures; returns the file map."""
    os.makedirs(out_dir, exist_ok=True)
    files = {
        "summary": os.path.join(out_dir, "summary.csv"),
        "breakdown": os.path.join(out_dir, "breakdown.csv"),
        "fig_breakdown": os.path.join(out_dir, "breakdown.png"),
        "fig_amat": os.path.join(out_dir, "amat.png"),
        "fig_throughput": os.path.join(out_dir, "throughput.png"),
    }
    write_reports_csv(reports, files["summary"])
    write_breakdown_csv(reports, files["breakdown"])
    render_breakdown_figure(reports, files["fig_breakdown"])
    render_amat_figure(reports, files["fig_amat"])
    render_throughput_figure(reports, files["fig_throughput"])
    return files
