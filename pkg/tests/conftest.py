"""Shared fixtures: instances, contexts, and session-scoped Monte Carlo pools."""

from __future__ import annotations

import numpy as np
import pytest

from freewalk.core import Word, compile_kernel
from freewalk.genfun import build_context, renewal_increment_law
from freewalk.instances import instance_k3_k3, instance_path_k3
from freewalk.simulator import BlockPool, register_kernel, simulate_pool

POOL_SEED_A = 101
POOL_SEED_B = 102


@pytest.fixture(scope="session")
def instance_a():
    cfg = instance_k3_k3()
    register_kernel(cfg)
    return cfg


@pytest.fixture(scope="session")
def instance_b():
    cfg = instance_path_k3()
    register_kernel(cfg)
    return cfg


@pytest.fixture(scope="session")
def kernel_a(instance_a):
    return compile_kernel(instance_a)


@pytest.fixture(scope="session")
def kernel_b(instance_b):
    return compile_kernel(instance_b)


@pytest.fixture(scope="session")
def ctx_a(instance_a):
    return build_context(instance_a)


@pytest.fixture(scope="session")
def ctx_b(instance_b):
    return build_context(instance_b)


@pytest.fixture(scope="session")
def law_a(instance_a):
    return renewal_increment_law(instance_a)


@pytest.fixture(scope="session")
def law_b(instance_b):
    return renewal_increment_law(instance_b)


# long per-walk windows keep the censoring bias (which decays with the
# usable horizon) well below one standard error of the pooled estimates
POOL_N = 6400
POOL_WALKS = 120


@pytest.fixture(scope="session")
def pool_a(instance_a, ctx_a):
    pool, stats = simulate_pool(instance_a, ctx_a, POOL_N, POOL_WALKS, POOL_SEED_A)
    return pool, stats


@pytest.fixture(scope="session")
def pool_b(instance_b, ctx_b):
    pool, stats = simulate_pool(instance_b, ctx_b, POOL_N, POOL_WALKS, POOL_SEED_B)
    return pool, stats


def word(*letters) -> Word:
    """Shorthand: word(('a', 1), ('c', 2)) or word(1, 'a', 2, 'c')."""
    if letters and isinstance(letters[0], tuple):
        return Word(tuple((f, v) for v, f in letters))
    pairs = tuple(zip(letters[0::2], letters[1::2]))
    return Word(tuple((int(f), str(v)) for f, v in pairs))


def make_pool(walks: list[list[tuple]], n: int = 10_000, buffer: int = 0) -> BlockPool:
    """Synthetic block pool from per-walk ``(delta_t, d_dist, d_ent)`` triples."""
    walk_idx, block_idx, dts, dds, des = [], [], [], [], []
    t0s, taus, nbs = [], [], []
    for w, blocks in enumerate(walks):
        t0s.append(2 + w % 9)  # spread so tail fits have a usable range
        taus.append(1)
        nbs.append(len(blocks))
        for j, blk in enumerate(blocks, start=1):
            dt, dd, de = blk
            walk_idx.append(w)
            block_idx.append(j)
            dts.append(dt)
            dds.append(dd)
            des.append(de)
    m = len(walks)
    k = len(dts)
    return BlockPool(
        config_digest="synthetic",
        buffer=buffer,
        n=n,
        walk=np.array(walk_idx, dtype=np.int64),
        index=np.array(block_idx, dtype=np.int64),
        delta_t=np.array(dts, dtype=np.int64),
        d_dist=np.array(dds, dtype=float),
        d_ent=np.array(des, dtype=float),
        w_first=np.zeros(k, dtype=np.int16),
        w_second=np.zeros(k, dtype=np.int16),
        d_at=np.zeros(k),
        tau=np.array(taus, dtype=np.int8),
        t0_time=np.array(t0s, dtype=np.int64),
        t0_dist=np.ones(m),
        n_blocks=np.array(nbs, dtype=np.int64),
        censored=np.zeros(m, dtype=np.int64),
    )
