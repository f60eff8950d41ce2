import os

from mosim.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARSE, main

TOY_YAML = """\
mos:
  page_size_bytes: 4096
  nvdimm_bytes: 458752
  pinned_bytes: 196608
  flash_bytes: 2000000000
nvme:
  queue_depth: 8
  prp_pool_slots: 16
"""


def write_toy_config(tmp_path):
    p = tmp_path / "toy.yaml"
    p.write_text(TOY_YAML)
    return str(p)


def test_generate_then_simulate_bundle(tmp_path, capsys):
    cfgp = write_toy_config(tmp_path)
    trace = str(tmp_path / "w.trace")
    out = str(tmp_path / "out")
    assert main(["--config", cfgp, "--trace", trace, "--out", out, "--seed", "3",
                 "generate", "--kind", "mixed", "--footprint", "1048576",
                 "--count", "200"]) == EXIT_OK
    assert os.path.exists(trace)
    assert main(["--config", cfgp, "--trace", trace, "--out", out,
                 "simulate"]) == EXIT_OK
    for name in ("summary.csv", "breakdown.csv", "breakdown.png",
                 "amat.png", "throughput.png"):
        assert os.path.exists(os.path.join(out, name)), name
    text = capsys.readouterr().out
    assert "platform: mos-baseline-extend" in text


def test_compare_emits_five_platform_rows(tmp_path):
    cfgp = write_toy_config(tmp_path)
    trace = str(tmp_path / "w.trace")
    out = str(tmp_path / "cmp")
    main(["--config", cfgp, "--trace", trace, "--seed", "5",
          "generate", "--kind", "rndRd", "--footprint", "2097152",
          "--count", "60"])
    assert main(["--config", cfgp, "--trace", trace, "--out", out,
                 "compare"]) == EXIT_OK
    rows = open(os.path.join(out, "summary.csv")).read().splitlines()
    labels = [r.split(",")[0] for r in rows[1:]]
    assert labels == ["mos-baseline-persist", "mos-baseline-extend",
                      "mos-advanced-persist", "mos-advanced-extend", "mmap"]


def test_crash_sweep_writes_verdict_rows(tmp_path):
    cfgp = write_toy_config(tmp_path)
    trace = str(tmp_path / "w.trace")
    out = str(tmp_path / "sweep")
    main(["--config", cfgp, "--trace", trace, "--seed", "7",
          "generate", "--kind", "mixed", "--footprint", "262144",
          "--count", "15"])
    assert main(["--config", cfgp, "--trace", trace, "--out", out,
                 "crash-sweep"]) == EXIT_OK
    rows = open(os.path.join(out, "crash_sweep.csv")).read().splitlines()
    assert rows[0].startswith("boundary,")
    assert len(rows) > 20
    assert all(r.endswith(",1") for r in rows[1:])      # every verdict ok


def test_emit_plots_roundtrip(tmp_path):
    cfgp = write_toy_config(tmp_path)
    trace = str(tmp_path / "w.trace")
    out = str(tmp_path / "out")
    plots = str(tmp_path / "plots")
    main(["--config", cfgp, "--trace", trace, "--seed", "3",
          "generate", "--kind", "seqRd", "--footprint", "1048576",
          "--count", "50"])
    main(["--config", cfgp, "--trace", trace, "--out", out, "simulate"])
    assert main(["--out", plots, "emit-plots", "--from-dir", out]) == EXIT_OK
    assert os.path.exists(os.path.join(plots, "breakdown.png"))


def test_parse_error_exit_code(tmp_path):
    cfgp = write_toy_config(tmp_path)
    bad = tmp_path / "bad.trace"
    bad.write_text("0 L nothex 8\n")
    assert main(["--config", cfgp, "--trace", str(bad), "simulate"]) == EXIT_PARSE


def test_config_error_exit_code(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("mode: warp\n")
    trace = tmp_path / "t.trace"
    trace.write_text("0 L 0x0 8\n")
    assert main(["--config", str(p), "--trace", str(trace), "simulate"]) == EXIT_CONFIG


def test_write_config_subcommand(tmp_path):
    out = str(tmp_path / "cfg")
    assert main(["--out", out, "write-config"]) == EXIT_OK
    assert os.path.exists(os.path.join(out, "config.yaml"))


def test_simulate_csv_is_deterministic(tmp_path):
    cfgp = write_toy_config(tmp_path)
    trace = str(tmp_path / "w.trace")
    main(["--config", cfgp, "--trace", trace, "--seed", "11",
          "generate", "--kind", "mixed", "--footprint", "1048576",
          "--count", "150"])
    outs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert main(["--config", cfgp, "--trace", trace, "--out", out,
                     "simulate"]) == EXIT_OK
        outs.append(open(os.path.join(out, "summary.csv"), "rb").read())
    assert outs[0] == outs[1]


def test_missing_trace_file_is_a_clean_parse_error(tmp_path):
    cfgp = write_toy_config(tmp_path)
    assert main(["--config", cfgp, "--trace", str(tmp_path / "nope.trace"),
                 "simulate"]) == EXIT_PARSE
