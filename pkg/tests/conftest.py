import pytest

from mosim.config import MosConfig, NvmeParams, SimConfig


def toy_mos(num_sets=64, page=4096, flash_bytes=2_000_000_000):
    pinned = 48 * page
    return MosConfig(page_size_bytes=page,
                     nvdimm_bytes=num_sets * page + pinned,
                     pinned_bytes=pinned,
                     flash_bytes=flash_bytes)


def toy_config(num_sets=64, page=4096, depth=8, **kw):
    kw.setdefault("nvme", NvmeParams(queue_depth=depth, prp_pool_slots=2 * depth))
    return SimConfig(mos=toy_mos(num_sets=num_sets, page=page), **kw)


@pytest.fixture
def cfg_small():
    return toy_config()


@pytest.fixture
def cfg_default():
    return SimConfig()
