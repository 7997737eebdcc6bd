"""Exact truncated power series for the free-product walk, by path enumeration.

Everything here is forward dynamic programming over the (finite) set of words
reachable within the truncation order, in exact rational arithmetic where
requested.  These series are the independent ground truth against which the
linear-solve evaluations in :mod:`freewalk.genfun` and the Monte Carlo
estimators are validated.
"""

from __future__ import annotations

from collections import OrderedDict, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .core import (
    CompiledKernel,
    FreewalkError,
    Word,
    WalkConfig,
    compile_kernel,
)

DEFAULT_ORDER_CAP = 14

Number = float | Fraction


class OrderTooLarge(FreewalkError):
    """Requested truncation order exceeds the configured enumeration cap."""


class ComposeNeedsZeroConstant(FreewalkError):
    """Series substitution requires the inner series to vanish at 0."""


@dataclass(frozen=True)
class TruncatedSeries:
    """Power series coefficients ``c_0 .. c_N`` (rational or float)."""

    coeffs: tuple[Number, ...]

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, n: int) -> Number:
        return self.coeffs[n]

    def truncate(self, order: int) -> "TruncatedSeries":
        return TruncatedSeries(self.coeffs[: order + 1])

    def partial_sums(self) -> tuple[Number, ...]:
        out = []
        acc: Number = 0
        for c in self.coeffs:
            acc = acc + c
            out.append(acc)
        return tuple(out)

    def eval(self, z: Number) -> Number:
        acc: Number = 0
        for c in reversed(self.coeffs):
            acc = acc * z + c
        return acc

    def as_float(self) -> "TruncatedSeries":
        return TruncatedSeries(tuple(float(c) for c in self.coeffs))


def series_combine(
    a: TruncatedSeries, b: TruncatedSeries, mode: str
) -> TruncatedSeries:
    """Exact coefficient arithmetic, truncated at the smaller order.

    ``add`` and ``multiply`` are the usual Cauchy operations; ``compose``
    substitutes ``b`` into ``a`` and requires ``b(0) = 0`` so that the result
    is determined by finitely many coefficients.
    """
    order = min(a.order, b.order)
    zero = a.coeffs[0] * 0
    if mode == "add":
        return TruncatedSeries(
            tuple(a.coeffs[n] + b.coeffs[n] for n in range(order + 1))
        )
    if mode == "multiply":
        out = [zero] * (order + 1)
        for i, ca in enumerate(a.coeffs[: order + 1]):
            if ca == 0:
                continue
            for j in range(order + 1 - i):
                out[i + j] += ca * b.coeffs[j]
        return TruncatedSeries(tuple(out))
    if mode == "compose":
        if b.coeffs[0] != 0:
            raise ComposeNeedsZeroConstant(
                f"inner series has constant term {b.coeffs[0]}"
            )
        # Horner in the truncated coefficient ring
        result = [zero] * (order + 1)
        result[0] = a.coeffs[min(a.order, order)] + zero
        acc = TruncatedSeries(tuple(result))
        for k in range(min(a.order, order) - 1, -1, -1):
            acc = series_combine(acc, b.truncate(order), "multiply")
            coeffs = list(acc.coeffs)
            coeffs[0] += a.coeffs[k]
            acc = TruncatedSeries(tuple(coeffs))
        return acc
    raise ValueError(f"unknown mode {mode!r}")


def _check_order(n: int, cap: int) -> None:
    if n > cap:
        raise OrderTooLarge(f"order {n} exceeds cap {cap}; raise the cap explicitly")


def _one(exact: bool) -> Number:
    return Fraction(1) if exact else 1.0


def _distribution_steps(
    kernel: CompiledKernel, start: tuple[int, ...], n_steps: int, exact: bool
):
    """Yield the occupation measure at times 0, 1, ..., n_steps."""
    zero = _one(exact) * 0
    dist = {start: _one(exact)}
    yield dist
    for _ in range(n_steps):
        new: dict = defaultdict(lambda: zero)
        for w, p in dist.items():
            for w2, q in kernel.successors(w, exact=exact):
                new[w2] += p * q
        dist = dict(new)
        yield dist


def enum_green_series(
    x: Word,
    y: Word,
    N: int,
    cfg: WalkConfig,
    exact: bool = False,
    cap: int = DEFAULT_ORDER_CAP,
) -> TruncatedSeries:
    """Coefficient ``n`` is the n-step transition probability from ``x`` to ``y``."""
    _check_order(N, cap)
    kernel = compile_kernel(cfg)
    table = _green_table(kernel, kernel.encode(x), N, exact)
    target = kernel.encode(y)
    zero = _one(exact) * 0
    return TruncatedSeries(tuple(d.get(target, zero) for d in table))


def enum_L_series(
    x: Word,
    y: Word,
    N: int,
    cfg: WalkConfig,
    exact: bool = False,
    cap: int = DEFAULT_ORDER_CAP,
) -> TruncatedSeries:
    """Last-exit series: paths from ``x`` to ``y`` avoiding ``x`` after time 0.

    Coefficient ``n`` is ``P_x[X_n = y, X_m != x for 1 <= m <= n]``; in
    particular the series for ``y = x`` is identically ``(1, 0, 0, ...)``.
    """
    _check_order(N, cap)
    kernel = compile_kernel(cfg)
    src = kernel.encode(x)
    tgt = kernel.encode(y)
    zero = _one(exact) * 0
    table = _taboo_table(kernel, src, N, exact)
    coeffs: list[Number] = [_one(exact) if src == tgt else zero]
    coeffs += [table[t].get(tgt, zero) for t in range(1, N + 1)]
    return TruncatedSeries(tuple(coeffs))


def enum_xi_series(
    i: int,
    N: int,
    cfg: WalkConfig,
    exact: bool = False,
    cap: int = DEFAULT_ORDER_CAP,
) -> TruncatedSeries:
    """First-visit series of the set of one-letter factor-``i`` words, from o."""
    _check_order(N, cap)
    kernel = compile_kernel(cfg)
    zero = _one(exact) * 0
    fac = kernel.factor_of_code
    coeffs: list[Number] = [zero]
    dist = {(): _one(exact)}
    for _ in range(N):
        new: dict = defaultdict(lambda: zero)
        for w, p in dist.items():
            for w2, q in kernel.successors(w, exact=exact):
                new[w2] += p * q
        hit = zero
        for w in [w for w in new if len(w) == 1 and fac[w[0]] == i]:
            hit += new.pop(w)
        coeffs.append(hit)
        dist = dict(new)
    return TruncatedSeries(tuple(coeffs))


def enum_first_passage_series(
    kind: tuple,
    N: int,
    cfg: WalkConfig,
    exact: bool = False,
    cap: int = DEFAULT_ORDER_CAP,
) -> TruncatedSeries:
    """Dispatch on ``("L", x, y)`` or ``("xi", i)``."""
    if kind[0] == "L":
        return enum_L_series(kind[1], kind[2], N, cfg, exact=exact, cap=cap)
    if kind[0] == "xi":
        return enum_xi_series(kind[1], N, cfg, exact=exact, cap=cap)
    raise ValueError(f"unknown first-passage kind {kind!r}")


_DP_CACHE_SLOTS = 4
_green_cache: OrderedDict = OrderedDict()
_taboo_cache: OrderedDict = OrderedDict()


def _cached_table(cache: dict, key, builder) -> list[dict]:
    hit = cache.get(key)
    if hit is not None:
        cache.move_to_end(key)
        return hit
    table = builder()
    cache[key] = table
    while len(cache) > _DP_CACHE_SLOTS:
        cache.popitem(last=False)
    return table


def _green_table(
    kernel: CompiledKernel, src: tuple[int, ...], N: int, exact: bool
) -> list[dict]:
    """Occupation measures at times 0..N from ``src`` (small LRU per process)."""

    def build():
        return list(_distribution_steps(kernel, src, N, exact))

    key = (kernel, src, N, exact)
    return _cached_table(_green_cache, key, build)


def _taboo_table(
    kernel: CompiledKernel, src: tuple[int, ...], N: int, exact: bool
) -> list[dict]:
    """Occupation measures with the source deleted after time 0 (taboo at src)."""

    def build():
        zero = _one(exact) * 0
        dist = {src: _one(exact)}
        table = [dict(dist)]
        for _ in range(N):
            new: dict = defaultdict(lambda: zero)
            for w, p in dist.items():
                for w2, q in kernel.successors(w, exact=exact):
                    new[w2] += p * q
            new.pop(src, None)
            dist = dict(new)
            table.append(dist)
        return table

    key = (kernel, src, N, exact)
    return _cached_table(_taboo_cache, key, build)


# -- factor-level series (dense DP on one factor graph) -----------------------


def factor_green_series(
    i: int, x: str, y: str, N: int, cfg: WalkConfig, exact: bool = False
) -> TruncatedSeries:
    """n-step series of the bare factor chain ``P_i`` (no alpha weighting)."""
    f = cfg.factor(i)
    size = f.size
    one = _one(exact)
    zero = one * 0
    if exact:
        mat = [[Fraction(p) for p in row] for row in f.transition]
    else:
        mat = [list(row) for row in f.transition]
    vec = [zero] * size
    vec[f.index(x)] = one
    tgt = f.index(y)
    coeffs = [vec[tgt]]
    for _ in range(N):
        vec = [
            sum(vec[k] * mat[k][j] for k in range(size) if vec[k] != 0)
            for j in range(size)
        ]
        vec = [v + zero for v in vec]
        coeffs.append(vec[tgt])
    return TruncatedSeries(tuple(coeffs))


def factor_L_series(
    i: int, x: str, y: str, N: int, cfg: WalkConfig, exact: bool = False
) -> TruncatedSeries:
    """Last-exit series of the bare factor chain (taboo at ``x`` after time 0)."""
    f = cfg.factor(i)
    size = f.size
    one = _one(exact)
    zero = one * 0
    if exact:
        mat = [[Fraction(p) for p in row] for row in f.transition]
    else:
        mat = [list(row) for row in f.transition]
    src = f.index(x)
    tgt = f.index(y)
    vec = [zero] * size
    vec[src] = one
    coeffs = [one if src == tgt else zero]
    for _ in range(N):
        vec = [
            sum(vec[k] * mat[k][j] for k in range(size) if vec[k] != 0)
            for j in range(size)
        ]
        vec = [v + zero for v in vec]
        vec[src] = zero
        coeffs.append(vec[tgt])
    return TruncatedSeries(tuple(coeffs))


# -- renewal increment law -----------------------------------------------------


@dataclass
class RenewalIncrementTable:
    """Exact truncated joint law of the renewal increment and the appended pair.

    ``joint[n][pair]`` is the probability that the increment equals ``n`` and
    the two appended letters are ``pair`` (a factor-2 letter then a factor-1
    letter, as vertex names).  The truncation tail ``1 - sum`` is reported,
    never dropped; ``tail_rate`` is the fitted geometric decay of the
    increment law near the truncation order (a crude continuation --- see
    :func:`freewalk.genfun.renewal_increment_law` for the sharp one).
    """

    n_max: int
    pairs: tuple[tuple[str, str], ...]
    joint: list[dict[tuple[str, str], float]]
    config_digest: str

    @property
    def delta_t_probs(self) -> list[float]:
        return [sum(row.values()) for row in self.joint]

    @property
    def assigned_mass(self) -> float:
        return sum(self.delta_t_probs)

    @property
    def tail_mass(self) -> float:
        return 1.0 - self.assigned_mass

    @property
    def tail_rate(self) -> Optional[float]:
        p = self.delta_t_probs
        if self.n_max < 4 or p[-2] <= 0 or p[-1] <= 0:
            return None
        return p[-1] / p[-2]

    def pair_marginal(self) -> dict[tuple[str, str], float]:
        out: dict[tuple[str, str], float] = defaultdict(float)
        for row in self.joint:
            for pair, p in row.items():
                out[pair] += p
        return dict(out)

    def distance_marginal(self, distance_of_pair) -> dict[float, float]:
        """Truncated law of the per-block distance increment."""
        out: dict[float, float] = defaultdict(float)
        for row in self.joint:
            for pair, p in row.items():
                out[distance_of_pair(pair)] += p
        return dict(out)

    def to_rows(self) -> list[dict]:
        rows = []
        for n, row in enumerate(self.joint):
            for pair, p in sorted(row.items()):
                rows.append(
                    {
                        "n": n,
                        "pair": "".join(pair),
                        "probability": p,
                        "provenance": "exact",
                    }
                )
        rows.append(
            {
                "n": self.n_max,
                "pair": "*",
                "probability": self.tail_mass,
                "provenance": "tail-bound",
            }
        )
        return rows


def exact_renewal_increment_dist(
    n_max: int,
    cfg: WalkConfig,
    exact: bool = False,
    cap: int = DEFAULT_ORDER_CAP,
) -> RenewalIncrementTable:
    """Joint law of (increment, appended pair) by taboo enumeration.

    The increment between consecutive renewal points equals ``n`` with the
    walk appending the two-letter word ``y1 x1`` exactly when a path from o
    avoids one-letter factor-1 words before time ``n`` and arrives at
    ``y1 x1`` at time ``n`` from outside its cone.  Arrivals from outside the
    cone are the appends from ``y1`` and the sibling moves from ``y1 x'``;
    pop moves from inside the cone are excluded.
    """
    _check_order(n_max, cap)
    kernel = compile_kernel(cfg)
    fac = kernel.factor_of_code
    zero = _one(exact) * 0
    joint: list[dict[tuple[str, str], Number]] = [defaultdict(lambda: zero)]
    dist = {(): _one(exact)}
    for _ in range(n_max):
        new: dict = defaultdict(lambda: zero)
        arrivals: dict[tuple[str, str], Number] = defaultdict(lambda: zero)
        for w, p in dist.items():
            from_outside = len(w) <= 2
            for w2, q in kernel.successors(w, exact=exact):
                if len(w2) == 1 and fac[w2[0]] == 1:
                    continue  # taboo: first visit to a one-letter factor-1 word
                new[w2] += p * q
                if (
                    from_outside
                    and len(w2) == 2
                    and fac[w2[0]] == 2
                    and fac[w2[1]] == 1
                ):
                    pair = (
                        kernel.letter_of_code[w2[0]][1],
                        kernel.letter_of_code[w2[1]][1],
                    )
                    arrivals[pair] += p * q
        joint.append(dict(arrivals))
        dist = dict(new)
    pairs = tuple(
        sorted(
            (y, x)
            for y in cfg.factor2.nonroot
            for x in cfg.factor1.nonroot
        )
    )
    joint_float = [
        {pair: float(p) for pair, p in row.items()} for row in joint
    ]
    return RenewalIncrementTable(
        n_max=n_max, pairs=pairs, joint=joint_float, config_digest=cfg.digest()
    )


def return_probability_proxy(
    cfg: WalkConfig, N: int = DEFAULT_ORDER_CAP, cap: int = DEFAULT_ORDER_CAP
) -> list[tuple[int, float]]:
    """Spectral-radius proxy ``p^(2n)(o, o) ** (1 / 2n)`` on even orders."""
    series = enum_green_series(Word(), Word(), N, cfg, exact=False, cap=cap)
    out = []
    for n in range(1, N // 2 + 1):
        p = float(series[2 * n])
        if p > 0:
            out.append((2 * n, p ** (1.0 / (2 * n))))
    return out


def series_to_rows(series: TruncatedSeries, label: str) -> list[dict]:
    return [
        {"index": n, "value": float(c), "provenance": "exact", "series": label}
        for n, c in enumerate(series.coeffs)
    ]
