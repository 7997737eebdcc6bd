"""Trajectory sampling, retrospective exit-time detection, renewal decomposition.

Sampling is driven by counter-based Philox streams keyed by
``(master_seed, stream_id)``: every walk owns its stream and consumes exactly
one uniform per step through cumulative-probability inversion, so scalar and
vectorized simulation produce bit-identical walks and results do not depend
on scheduling or worker count.

Exit times are detected retrospectively.  Writing ``c_t`` for the common
prefix length of consecutive states, the level-k candidate exit time is the
first ``m`` with ``||X_m|| = k`` and ``min(c_m, ..., c_{N-1}) >= k``; it is
confirmed only when it falls a buffer ``B`` before the horizon.  A confirmed
level-k word is by construction a prefix of every later state, so the final
stack of a batch walk carries all renewal words, which is what lets the
batch decomposition avoid storing intermediate states.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .core import (
    POP,
    PUSH,
    REPLACE,
    CompiledKernel,
    FreewalkError,
    Word,
    WalkConfig,
    common_prefix_length,
    compile_kernel,
    concat,
    in_cone,
)
from .genfun import GenFunContext, dL_word

DEFAULT_BUFFER = 500

# stream purposes keep seed spaces of different experiment roles disjoint
PURPOSE_MAIN = 0
PURPOSE_CALIBRATION = 1
PURPOSE_HIT_MC = 2
PURPOSE_GRID = 3
PURPOSE_POOL = 4
PURPOSE_DIAG = 5

_MASK64 = (1 << 64) - 1


class NoConfirmedExit(FreewalkError):
    """No exit time could be confirmed within the censored horizon."""


def stream_id(purpose: int, index: int) -> int:
    return (purpose << 32) | index


def stream_uniforms(
    master_seed: int, stream: int, n: int, out: Optional[np.ndarray] = None
) -> np.ndarray:
    """The uniform variates of one walk stream (Philox, 128-bit key)."""
    key = ((master_seed & _MASK64) << 64) | (stream & _MASK64)
    gen = np.random.Generator(np.random.Philox(key=key))
    if out is None:
        return gen.random(n)
    gen.random(out=out)
    return out


@dataclass
class Trajectory:
    """A fully materialized walk ``X_0 .. X_n`` (desk scale only).

    Large experiments use :func:`simulate_batch`, which keeps only the
    per-step actions and the final stack; this object exists for tests,
    diagnostics and the word-level decomposition path.
    """

    seed: int
    stream: int
    config_digest: str
    states: tuple[Word, ...]

    def __len__(self) -> int:
        return len(self.states) - 1

    @property
    def lengths(self) -> list[int]:
        return [len(w) for w in self.states]


def sample_trajectory(
    cfg: WalkConfig, n: int, seed: int, stream: int = 0
) -> Trajectory:
    """Sample ``n`` steps from the one-step law; bit-reproducible per seed."""
    kernel = compile_kernel(cfg)
    register_kernel(cfg)
    u = stream_uniforms(seed, stream, n)
    cum, act, let = kernel.cum, kernel.act, kernel.let
    codes: list[int] = []
    state = 0
    states = [Word()]
    for t in range(n):
        x = u[t]
        row = cum[state]
        j = 0
        while x >= row[j]:
            j += 1
        a = act[state, j]
        if a == PUSH:
            state = int(let[state, j])
            codes.append(state)
        elif a == REPLACE:
            state = int(let[state, j])
            codes[-1] = state
        else:
            codes.pop()
            state = codes[-1] if codes else 0
        states.append(kernel.decode(codes))
    return Trajectory(
        seed=seed, stream=stream, config_digest=cfg.digest(), states=tuple(states)
    )


class ExitTime(NamedTuple):
    k: int
    time: int
    confirmed: bool


def _exit_candidates(lengths: np.ndarray, cps: np.ndarray) -> list[tuple[int, int]]:
    """Candidate exit times ``(k, e_k)`` for ``k = 1 .. ||X_N||`` from profiles.

    ``lengths`` has ``N + 1`` entries and ``cps`` the ``N`` common prefix
    lengths of consecutive states.  Candidates exist for every level up to
    the final length because the last visit to each level is stable.
    """
    n = len(cps)
    final_len = int(lengths[-1])
    if final_len == 0:
        return []
    if n == 0:
        return []
    suffix_min = np.minimum.accumulate(cps[::-1])[::-1]
    stable = np.nonzero(lengths[:-1] <= suffix_min)[0]
    out: list[tuple[int, int]] = []
    next_k = 1
    for m in stable:
        if lengths[m] == next_k:
            out.append((next_k, int(m)))
            next_k += 1
    if next_k == final_len:
        out.append((next_k, n))
        next_k += 1
    if next_k != final_len + 1:
        raise AssertionError(
            f"exit detection inconsistency: found {next_k - 1} of {final_len} levels"
        )
    return out


def detect_exit_times(traj: Trajectory, buffer: int = DEFAULT_BUFFER) -> list[ExitTime]:
    """All candidate exit times with confirmation flags.

    A candidate is confirmed when it falls at least ``buffer`` steps before
    the horizon, so that a later cone exit would almost surely have been
    observed.  Guarantees on candidates: the state just before a candidate
    lies outside the candidate's cone, and candidate cones are nested.
    """
    states = traj.states
    lengths = np.array([len(w) for w in states], dtype=np.int64)
    cps = np.array(
        [common_prefix_length(states[t], states[t + 1]) for t in range(len(states) - 1)],
        dtype=np.int64,
    )
    horizon = len(states) - 1
    cutoff = horizon - buffer
    out = []
    for k, m in _exit_candidates(lengths, cps):
        if m >= 1 and not cps[m - 1] < k:
            raise AssertionError(f"candidate e_{k}={m} entered its cone from inside")
        out.append(ExitTime(k=k, time=m, confirmed=m <= cutoff))
    return out


def k_of_n(renewal_times: Sequence[int], n: int) -> Optional[int]:
    """Largest index ``m`` with ``T_m <= n``; ``None`` when ``T_0 > n``."""
    if not renewal_times:
        raise ValueError("renewal_times must be nonempty")
    best = None
    for m, t in enumerate(renewal_times):
        if t <= n:
            best = m
        else:
            break
    return best


@dataclass(frozen=True)
class Block:
    """One renewal block: increment, reward increments, and the appended pair."""

    index: int
    delta_t: int
    d_dist: int
    d_block: int
    d_ent: float
    word: Word


@dataclass
class RenewalSample:
    """Renewal decomposition of one trajectory.

    ``renewal_times[j]`` is the confirmed time ``T_j`` (the exit time at
    level ``2 j + tau``), ``renewal_distances[j]`` the graph distance of the
    corresponding word from the root; blocks pair consecutive confirmed
    renewal times.
    """

    tau: int
    exit_times: list[ExitTime]
    renewal_times: list[int]
    renewal_distances: list[int]
    blocks: list[Block]
    buffer: int
    censored_count: int
    config_digest: str = ""


def renewal_decompose(
    traj: Trajectory, ctx: GenFunContext, buffer: int = DEFAULT_BUFFER
) -> RenewalSample:
    """Decompose a trajectory at its confirmed renewal times.

    Every structural identity is asserted on the way: alternation and
    nesting of the exit words, the two-letter appended pattern, the level
    identity ``||X_{T_j}|| = 2 j + tau``, and the exact telescoping of graph
    distances along renewal words.  Distances here are recomputed from whole
    words, independently of the incremental bookkeeping used by the batch
    path.
    """
    cfg_digest = traj.config_digest
    exits = detect_exit_times(traj, buffer)
    confirmed = [e for e in exits if e.confirmed]
    if not confirmed:
        raise NoConfirmedExit(
            f"no confirmed exit with horizon {len(traj)} and buffer {buffer}"
        )
    states = traj.states
    for prev, cur in zip(confirmed, confirmed[1:]):
        if not in_cone(states[cur.time], states[prev.time]):
            raise AssertionError("exit cones are not nested")
        if (states[cur.time].letters[-1][0]) == (states[prev.time].letters[-1][0]):
            raise AssertionError("exit word factors do not alternate")
    first_factor = states[confirmed[0].time].letters[-1][0]
    tau = 1 if first_factor == 1 else 2

    by_level = {e.k: e for e in confirmed}
    renewal_times: list[int] = []
    renewal_words: list[Word] = []
    k = tau
    while k in by_level:
        e = by_level[k]
        w = states[e.time]
        if len(w) != k or w.letters[-1][0] != 1:
            raise AssertionError("renewal word has wrong level or factor")
        renewal_times.append(e.time)
        renewal_words.append(w)
        k += 2
    if not renewal_times:
        raise NoConfirmedExit(f"no confirmed renewal time (tau = {tau})")

    blocks: list[Block] = []
    for j in range(1, len(renewal_times)):
        prev_w, cur_w = renewal_words[j - 1], renewal_words[j]
        pair = Word(cur_w.letters[-2:])
        if concat(prev_w, pair) != cur_w:
            raise AssertionError("renewal words do not extend by the appended pair")
        if pair.letters[0][0] != 2 or pair.letters[1][0] != 1:
            raise AssertionError("appended pair does not match (factor2, factor1)")
        blocks.append(
            Block(
                index=j,
                delta_t=renewal_times[j] - renewal_times[j - 1],
                d_dist=_traj_distance(traj, pair),
                d_block=2,
                d_ent=dL_word(pair, ctx),
                word=pair,
            )
        )
    distances = [_traj_distance(traj, w) for w in renewal_words]
    for j in range(1, len(distances)):
        if distances[j] != distances[0] + sum(b.d_dist for b in blocks[:j]):
            raise AssertionError("graph distance does not telescope along renewals")
    return RenewalSample(
        tau=tau,
        exit_times=exits,
        renewal_times=renewal_times,
        renewal_distances=distances,
        blocks=blocks,
        buffer=buffer,
        censored_count=sum(1 for e in exits if not e.confirmed),
        config_digest=cfg_digest,
    )


_traj_kernel_cache: dict[str, CompiledKernel] = {}


def register_kernel(cfg: WalkConfig) -> None:
    _traj_kernel_cache[cfg.digest()] = compile_kernel(cfg)


def _traj_distance(traj: Trajectory, w: Word) -> int:
    kernel = _traj_kernel_cache.get(traj.config_digest)
    if kernel is None:
        raise AssertionError(
            "kernel not registered for trajectory config; call register_kernel(cfg)"
        )
    return int(kernel.word_distance(kernel.encode(w)))


# -- batch simulation ----------------------------------------------------------


@dataclass
class BatchWalks:
    """Compact result of many walks: per-step actions and final stacks."""

    master_seed: int
    streams: np.ndarray
    n: int
    config_digest: str
    stacks: np.ndarray  # (M, n + 1) letter codes; column 0 is a root sentinel
    sp: np.ndarray  # (M,) final stack depth = ||X_n||
    acts: Optional[np.ndarray]  # (M, n) PUSH/REPLACE/POP, when recorded

    @property
    def n_walks(self) -> int:
        return len(self.streams)

    def final_codes(self, m: int) -> np.ndarray:
        return self.stacks[m, 1 : int(self.sp[m]) + 1]


def default_workers() -> int:
    """Worker count from ``FREEWALK_WORKERS``; serial when unset or 1."""
    try:
        return max(1, int(os.environ.get("FREEWALK_WORKERS", "1")))
    except ValueError:
        return 1


def _simulate_span(
    cfg: WalkConfig,
    n: int,
    master_seed: int,
    streams: np.ndarray,
    record_acts: bool,
    chunk_size: int,
) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    kernel = compile_kernel(cfg)
    M = len(streams)
    stacks = np.zeros((M, n + 1), dtype=np.int16)
    sp = np.zeros(M, dtype=np.int64)
    acts = np.empty((M, n), dtype=np.int8) if record_acts else None
    cum, act_tab, let_tab = kernel.cum, kernel.act, kernel.let
    for lo in range(0, M, chunk_size):
        hi = min(lo + chunk_size, M)
        m = hi - lo
        u = np.empty((m, n))
        for i in range(m):
            stream_uniforms(master_seed, int(streams[lo + i]), n, out=u[i])
        stack_c = stacks[lo:hi]
        sp_c = np.zeros(m, dtype=np.int64)
        state = np.zeros(m, dtype=np.int64)
        rows = np.arange(m)
        for t in range(n):
            j = (u[:, t, None] < cum[state]).argmax(axis=1)
            a = act_tab[state, j]
            letters = let_tab[state, j]
            if record_acts:
                acts[lo:hi, t] = a
            push = a == PUSH
            repl = a == REPLACE
            pop = a == POP
            sp_c[push] += 1
            stack_c[rows[push], sp_c[push]] = letters[push]
            stack_c[rows[repl], sp_c[repl]] = letters[repl]
            sp_c[pop] -= 1
            state = stack_c[rows, sp_c].astype(np.int64)
        sp[lo:hi] = sp_c
    return stacks, sp, acts


def simulate_batch(
    cfg: WalkConfig,
    n: int,
    master_seed: int,
    streams: Sequence[int],
    record_acts: bool = True,
    chunk_size: int = 256,
    workers: Optional[int] = None,
) -> BatchWalks:
    """Simulate one walk per stream, vectorized across walks.

    Identical to running :func:`sample_trajectory` per stream: both consume
    the same uniforms through the same inversion tables.  With ``workers``
    above 1 (default from ``FREEWALK_WORKERS``) stream spans run in separate
    processes; per-stream keying makes the result independent of worker
    count and scheduling, and results are assembled in stream order.
    """
    streams = np.asarray(list(streams), dtype=np.uint64)
    M = len(streams)
    if workers is None:
        workers = default_workers()
    workers = max(1, min(workers, M))
    if workers > 1:
        spans = np.array_split(np.arange(M), workers)
        try:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(
                        _simulate_span,
                        cfg,
                        n,
                        master_seed,
                        streams[span],
                        record_acts,
                        chunk_size,
                    )
                    for span in spans
                    if len(span)
                ]
                parts = [f.result() for f in futures]
        except OSError:
            parts = None  # process pools unavailable; fall back to serial
        if parts is not None:
            stacks = np.concatenate([p[0] for p in parts])
            sp = np.concatenate([p[1] for p in parts])
            acts = np.concatenate([p[2] for p in parts]) if record_acts else None
            return BatchWalks(
                master_seed=master_seed,
                streams=streams,
                n=n,
                config_digest=cfg.digest(),
                stacks=stacks,
                sp=sp,
                acts=acts,
            )
    stacks, sp, acts = _simulate_span(
        cfg, n, master_seed, streams, record_acts, chunk_size
    )
    return BatchWalks(
        master_seed=master_seed,
        streams=streams,
        n=n,
        config_digest=cfg.digest(),
        stacks=stacks,
        sp=sp,
        acts=acts,
    )


@dataclass
class WalkStatsArrays:
    """Endpoint statistics of a batch: word length, graph distance, letter distance."""

    n: int
    length: np.ndarray
    dist: np.ndarray
    dl: np.ndarray


def letter_dl_table(kernel: CompiledKernel, ctx: GenFunContext) -> np.ndarray:
    table = np.zeros(kernel.n_letters + 1)
    for code in range(1, kernel.n_letters + 1):
        i, v = kernel.letter_of_code[code]
        table[code] = ctx.letter_dl(i, v)
    return table


def batch_walk_stats(
    batch: BatchWalks, kernel: CompiledKernel, ctx: Optional[GenFunContext] = None
) -> WalkStatsArrays:
    dl_tab = letter_dl_table(kernel, ctx) if ctx is not None else None
    M = batch.n_walks
    dist = np.zeros(M)
    dl = np.full(M, np.nan)
    ldist = kernel.letter_distance
    for m in range(M):
        codes = batch.final_codes(m)
        dist[m] = ldist[codes].sum()
        if dl_tab is not None:
            dl[m] = dl_tab[codes].sum()
    return WalkStatsArrays(
        n=batch.n, length=batch.sp.astype(float), dist=dist, dl=dl
    )


@dataclass
class BlockPool:
    """Flat arrays of renewal blocks pooled over many walks.

    Block-level arrays are aligned; ``walk`` holds the walk row index and
    ``index`` the 1-based block index within its walk.  Per-walk arrays
    (``tau``, ``t0_time``, ``t0_dist``, ``n_blocks``, ``censored``) have one
    entry per simulated walk, including walks that produced no block.
    """

    config_digest: str
    buffer: int
    n: int
    walk: np.ndarray
    index: np.ndarray
    delta_t: np.ndarray
    d_dist: np.ndarray
    d_ent: np.ndarray
    w_first: np.ndarray
    w_second: np.ndarray
    d_at: np.ndarray
    tau: np.ndarray
    t0_time: np.ndarray
    t0_dist: np.ndarray
    n_blocks: np.ndarray
    censored: np.ndarray

    @property
    def n_walks(self) -> int:
        return len(self.tau)

    @property
    def size(self) -> int:
        return len(self.delta_t)

    def walk_sums(self, values: np.ndarray) -> np.ndarray:
        return np.bincount(self.walk, weights=values, minlength=self.n_walks)

    def blocks_of_walk(self, m: int) -> np.ndarray:
        return np.nonzero(self.walk == m)[0]


def batch_decompose(
    batch: BatchWalks,
    kernel: CompiledKernel,
    ctx: GenFunContext,
    buffer: int = DEFAULT_BUFFER,
) -> BlockPool:
    """Renewal-decompose every walk of a batch into a flat block pool.

    Blocks whose endpoints are not both confirmed (within ``buffer`` of the
    horizon) are dropped entirely.  The appended pairs and the renewal-word
    distances are read off the final stack, which is sound because every
    confirmed renewal word is a prefix of the final word.
    """
    if batch.acts is None:
        raise ValueError("batch was simulated without action recording")
    n = batch.n
    cutoff = n - buffer
    ldist = kernel.letter_distance
    dl_tab = letter_dl_table(kernel, ctx)
    fac = kernel.factor_of_code
    walk_l, index_l, dt_l, dd_l, de_l, wf_l, ws_l, dat_l = ([] for _ in range(8))
    M = batch.n_walks
    tau_arr = np.zeros(M, dtype=np.int8)
    t0_time = np.full(M, -1, dtype=np.int64)
    t0_dist = np.full(M, np.nan)
    nb_arr = np.zeros(M, dtype=np.int64)
    cen_arr = np.zeros(M, dtype=np.int64)
    for m in range(M):
        a = batch.acts[m]
        delta = (a == PUSH).astype(np.int64) - (a == POP)
        lengths = np.concatenate(([0], np.cumsum(delta)))
        if lengths[-1] != batch.sp[m]:
            raise AssertionError("action log inconsistent with final stack depth")
        if lengths[-1] == 0:
            continue
        cps = np.minimum(lengths[:-1], lengths[1:])
        cps[a == REPLACE] -= 1
        candidates = _exit_candidates(lengths, cps)
        cen_arr[m] = sum(1 for _, t in candidates if t > cutoff)
        e_time = {k: t for k, t in candidates if t <= cutoff}
        tau = 1 if fac[batch.stacks[m, 1]] == 1 else 2
        tau_arr[m] = tau
        ks = []
        k = tau
        while k in e_time:
            ks.append(k)
            k += 2
        if not ks:
            continue
        ks = np.array(ks, dtype=np.int64)
        times = np.array([e_time[k] for k in ks], dtype=np.int64)
        codes = batch.stacks[m, 1 : ks[-1] + 1].astype(np.int64)
        if not (
            np.all(fac[codes[0::2]] == (1 if tau == 1 else 2))
            and np.all(fac[codes[1::2]] == (2 if tau == 1 else 1))
        ):
            raise AssertionError("final-stack letters do not alternate as expected")
        pdist = np.concatenate(([0.0], np.cumsum(ldist[codes])))
        t0_time[m] = times[0]
        t0_dist[m] = pdist[ks[0]]
        nb = len(ks) - 1
        nb_arr[m] = nb
        if nb == 0:
            continue
        first = codes[ks[1:] - 2]
        second = codes[ks[1:] - 1]
        if not (np.all(fac[first] == 2) and np.all(fac[second] == 1)):
            raise AssertionError("appended pair does not match (factor2, factor1)")
        walk_l.append(np.full(nb, m, dtype=np.int64))
        index_l.append(np.arange(1, nb + 1, dtype=np.int64))
        dt_l.append(np.diff(times))
        dd_l.append(ldist[first] + ldist[second])
        de_l.append(dl_tab[first] + dl_tab[second])
        wf_l.append(first.astype(np.int16))
        ws_l.append(second.astype(np.int16))
        dat_l.append(pdist[ks[1:]])

    def _cat(parts, dtype=None):
        if not parts:
            return np.array([], dtype=dtype or float)
        return np.concatenate(parts)

    return BlockPool(
        config_digest=batch.config_digest,
        buffer=buffer,
        n=n,
        walk=_cat(walk_l, np.int64),
        index=_cat(index_l, np.int64),
        delta_t=_cat(dt_l, np.int64),
        d_dist=_cat(dd_l),
        d_ent=_cat(de_l),
        w_first=_cat(wf_l, np.int16),
        w_second=_cat(ws_l, np.int16),
        d_at=_cat(dat_l),
        tau=tau_arr,
        t0_time=t0_time,
        t0_dist=t0_dist,
        n_blocks=nb_arr,
        censored=cen_arr,
    )


def simulate_pool(
    cfg: WalkConfig,
    ctx: GenFunContext,
    n: int,
    n_walks: int,
    master_seed: int,
    buffer: int = DEFAULT_BUFFER,
    purpose: int = PURPOSE_POOL,
) -> tuple[BlockPool, WalkStatsArrays]:
    """Simulate, decompose and summarize a pool of independent walks."""
    kernel = compile_kernel(cfg)
    streams = [stream_id(purpose, i) for i in range(n_walks)]
    batch = simulate_batch(cfg, n, master_seed, streams, record_acts=True)
    pool = batch_decompose(batch, kernel, ctx, buffer)
    stats = batch_walk_stats(batch, kernel, ctx)
    return pool, stats


def pool_to_csv_rows(pool: BlockPool, kernel: CompiledKernel) -> list[dict]:
    rows = []
    for i in range(pool.size):
        rows.append(
            {
                "trajectory_id": int(pool.walk[i]),
                "k": int(pool.index[i]),
                "delta_t": int(pool.delta_t[i]),
                "d_dist": float(pool.d_dist[i]),
                "d_ent": float(pool.d_ent[i]),
                "pair": kernel.letter_of_code[int(pool.w_first[i])][1]
                + kernel.letter_of_code[int(pool.w_second[i])][1],
            }
        )
    return rows


def hit_probability_mc(
    cfg: WalkConfig,
    factor: int,
    n_walks: int,
    master_seed: int,
    horizon: int = 200,
    escape_length: int = 40,
    chunk_size: int = 1024,
) -> tuple[float, float]:
    """Monte Carlo frequency of ever visiting a one-letter word of ``factor``.

    Walks are stopped early once their word grows beyond ``escape_length``
    (the return probability from there is geometrically negligible) or at
    the horizon; both truncations bias the frequency down by far less than a
    standard error at desk scale.  Returns ``(frequency, standard_error)``.
    """
    kernel = compile_kernel(cfg)
    cum, act_tab, let_tab = kernel.cum, kernel.act, kernel.let
    fac = kernel.factor_of_code
    hits = 0
    for lo in range(0, n_walks, chunk_size):
        hi = min(lo + chunk_size, n_walks)
        m = hi - lo
        u = np.empty((m, horizon))
        for i in range(m):
            stream_uniforms(
                master_seed, stream_id(PURPOSE_HIT_MC, lo + i), horizon, out=u[i]
            )
        stack = np.zeros((m, escape_length + 2), dtype=np.int16)
        sp = np.zeros(m, dtype=np.int64)
        state = np.zeros(m, dtype=np.int64)
        alive = np.ones(m, dtype=bool)
        hit = np.zeros(m, dtype=bool)
        rows = np.arange(m)
        for t in range(horizon):
            if not alive.any():
                break
            act_rows = rows[alive]
            uu = u[act_rows, t]
            st = state[act_rows]
            j = (uu[:, None] < cum[st]).argmax(axis=1)
            a = act_tab[st, j]
            letters = let_tab[st, j]
            push = act_rows[a == PUSH]
            repl = act_rows[a == REPLACE]
            pop = act_rows[a == POP]
            sp[push] += 1
            stack[push, sp[push]] = letters[a == PUSH]
            stack[repl, sp[repl]] = letters[a == REPLACE]
            sp[pop] -= 1
            state[act_rows] = stack[act_rows, sp[act_rows]]
            now_hit = act_rows[
                (sp[act_rows] == 1) & (fac[stack[act_rows, 1]] == factor)
            ]
            hit[now_hit] = True
            alive[now_hit] = False
            alive[act_rows[sp[act_rows] >= escape_length]] = False
        hits += int(hit.sum())
    freq = hits / n_walks
    se = float(np.sqrt(max(freq * (1 - freq), 1e-12) / n_walks))
    return freq, se
