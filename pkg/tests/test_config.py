import pytest

from mosim.config import (DEFAULT_CONFIG_YAML, SimConfig, config_from_dict,
                          load_config, write_default_config)
from mosim.errors import ConfigError


def test_defaults_match_documented_geometry():
    cfg = SimConfig()
    assert cfg.mos.page_size_bytes == 131072
    assert cfg.mos.nvdimm_bytes == 8 << 30
    assert cfg.mos.pinned_bytes == 512 << 20
    assert cfg.mos.flash_bytes == 800 * 10**9
    assert cfg.mos.num_sets == 61440
    assert cfg.flash.read_ps == 3_000_000
    assert cfg.flash.program_ps == 100_000_000
    assert cfg.flash.channel_ps_per_byte == 1250
    assert cfg.pcie.ps_per_byte == 250
    assert cfg.nvme.queue_depth == 16
    assert cfg.nvme.prp_pool_slots == 32
    assert cfg.datapath == "baseline"
    assert cfg.mode == "extend"


def test_default_yaml_loads_to_defaults(tmp_path):
    p = tmp_path / "config.yaml"
    write_default_config(str(p))
    cfg = load_config(str(p))
    ref = SimConfig()
    assert cfg.mos.num_sets == ref.mos.num_sets
    assert cfg.flash.hil_ps == ref.flash.hil_ps
    assert cfg.label == ref.label


def test_platform_label():
    assert SimConfig().label == "mos-baseline-extend"
    assert SimConfig(datapath="advanced", mode="persist").label == "mos-advanced-persist"
    assert SimConfig(platform="mmap").label == "mmap"


def test_buffer_only_on_baseline():
    assert SimConfig(datapath="baseline").buffer_enabled
    assert not SimConfig(datapath="advanced").buffer_enabled


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"typo": {}})


def test_bad_section_values_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"flash": {"channel_stripe": 3}})
    with pytest.raises(ConfigError):
        config_from_dict({"nvme": {"queue_depth": 1}})
    with pytest.raises(ConfigError):
        config_from_dict({"mode": "turbo"})
    with pytest.raises(ConfigError):
        config_from_dict({"flash": {"no_such_knob": 1}})


def test_pinned_budget_enforced():
    # PRP pool alone would outgrow the pinned region
    with pytest.raises(ConfigError):
        config_from_dict({"nvme": {"queue_depth": 8192}})


def test_copy_with_overrides():
    cfg = SimConfig()
    other = cfg.copy_with(datapath="advanced", mode="persist")
    assert other.datapath == "advanced" and other.mode == "persist"
    assert cfg.datapath == "baseline"
    assert other.mos is cfg.mos


def test_yaml_text_is_parseable():
    import yaml
    doc = yaml.safe_load(DEFAULT_CONFIG_YAML)
    cfg = config_from_dict(doc)
    assert cfg.mos.num_sets == 61440
