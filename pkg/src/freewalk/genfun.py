"""Generating-function evaluations: factor resolvents, the cone exit-probability
fixed point, the letter-distance function, and the renewal-increment law.

Factor Green functions are resolvent solves ``(I - t P_i)^{-1}``; the
free-product first-passage quantities are the minimal nonnegative solution of
a one-step polynomial system, obtained by monotone iteration from zero.  The
same system, evaluated on a complex circle and inverted by FFT, yields the
full law of the renewal increment far beyond the reach of path enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import FreewalkError, Word, WalkConfig, compile_kernel

XI_TOL = 1e-12
XI_MAX_ITER = 10**6
DIVERGENCE_BOUND = 1e9


class SingularSolve(FreewalkError):
    """The resolvent matrix is numerically singular at the requested point."""


class NoConvergence(FreewalkError):
    """The first-passage fixed point failed to converge (z beyond the radius)."""


class NonpositiveL(FreewalkError):
    """A cached last-exit value is nonpositive, signalling numeric failure."""


def factor_green(cfg: WalkConfig, i: int, x: str, y: str, t: complex) -> complex:
    """Entry ``(x, y)`` of ``(I - t P_i)^{-1}``, the factor Green function.

    For real ``0 <= t < 1/spectral_radius(P_i)`` this is the power series
    ``sum_n p_i^(n)(x, y) t^n``.
    """
    f = cfg.factor(i)
    mat = np.eye(f.size, dtype=complex) - t * f.matrix().astype(complex)
    try:
        inv = np.linalg.inv(mat)
    except np.linalg.LinAlgError as e:
        raise SingularSolve(f"I - t P_{i} singular at t = {t}") from e
    if not np.all(np.isfinite(inv)) or np.linalg.cond(mat) > 1e12:
        raise SingularSolve(f"I - t P_{i} ill-conditioned at t = {t}")
    val = inv[f.index(x), f.index(y)]
    return val.real if abs(val.imag) < 1e-14 else val


def factor_L(cfg: WalkConfig, i: int, x: str, y: str, t: complex) -> complex:
    """Factor last-exit function ``G_i(x, y | t) / G_i(x, x | t)``."""
    return factor_green(cfg, i, x, y, t) / factor_green(cfg, i, x, x, t)


@dataclass
class XiSolution:
    """Minimal nonnegative solution of the one-step first-passage system.

    ``returns[(j, v)]`` is the generating function, at the evaluation point,
    of the first passage from the one-letter word ``v`` (factor ``j``) to the
    root; ``xi[i]`` the generating function of the first visit to the set of
    one-letter factor-``i`` words from the root.
    """

    z: complex
    xi1: complex
    xi2: complex
    returns: dict[tuple[int, str], complex]
    iterations: int
    converged: bool
    residual: float

    def xi(self, i: int) -> complex:
        return self.xi1 if i == 1 else self.xi2


def solve_xi(
    z: complex,
    cfg: WalkConfig,
    tol: float = XI_TOL,
    max_iter: int = XI_MAX_ITER,
    raise_on_divergence: bool = True,
) -> XiSolution:
    """Solve the first-passage system at ``z`` by monotone iteration from 0.

    One step from the one-letter word ``v`` of factor ``j`` either moves
    inside factor ``j`` (reaching the root directly or another one-letter
    word), or appends a letter ``y`` of the other factor, after which the
    walk must first undo ``y`` and then still reach the root:

        R_j(v) = a_j z [p_j(v, o_j) + sum_w p_j(v, w) R_j(w)]
                 + a_j' z sum_y p_j'(o_j', y) R_j'(y) R_j(v)
        xi_1   = a_1 z + a_2 z sum_y p_2(o_2, y) R_2(y) xi_1

    and symmetrically for ``xi_2``.  Iteration from zero is monotone for
    ``z >= 0``, so it converges to the minimal nonnegative solution, which is
    the probabilistic one for ``z <= 1``; on a complex circle the iterates
    are dominated coefficientwise by the ``|z|`` case.  Divergence (iterates
    still moving at the cap, or blowing up) indicates ``z`` beyond the radius
    of convergence and is reported, not raised, when requested.
    """
    compile_kernel(cfg)  # reject configurations that fail validation
    f1, f2 = cfg.factor1, cfg.factor2
    a1, a2 = cfg.alphas
    p1 = f1.matrix().astype(complex)
    p2 = f2.matrix().astype(complex)
    nr1 = [f1.index(v) for v in f1.nonroot]
    nr2 = [f2.index(v) for v in f2.nonroot]
    r1, r2 = f1.root_index, f2.root_index

    R1 = np.zeros(len(nr1), dtype=complex)
    R2 = np.zeros(len(nr2), dtype=complex)
    xi1 = xi2 = 0.0 + 0.0j
    converged = False
    residual = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        s1 = complex(p1[r1, nr1] @ R1)  # sum_y p_1(o_1, y) R_1(y)
        s2 = complex(p2[r2, nr2] @ R2)
        new_R1 = a1 * z * (p1[nr1, r1] + p1[np.ix_(nr1, nr1)] @ R1) + a2 * z * s2 * R1
        new_R2 = a2 * z * (p2[nr2, r2] + p2[np.ix_(nr2, nr2)] @ R2) + a1 * z * s1 * R2
        new_xi1 = a1 * z + a2 * z * s2 * xi1
        new_xi2 = a2 * z + a1 * z * s1 * xi2
        residual = max(
            float(np.max(np.abs(new_R1 - R1))) if len(nr1) else 0.0,
            float(np.max(np.abs(new_R2 - R2))) if len(nr2) else 0.0,
            abs(new_xi1 - xi1),
            abs(new_xi2 - xi2),
        )
        R1, R2, xi1, xi2 = new_R1, new_R2, new_xi1, new_xi2
        if residual < tol:
            converged = True
            break
        if (
            np.max(np.abs(R1), initial=0.0) > DIVERGENCE_BOUND
            or np.max(np.abs(R2), initial=0.0) > DIVERGENCE_BOUND
        ):
            break

    if not converged and raise_on_divergence:
        raise NoConvergence(
            f"first-passage iteration did not converge at z = {z} "
            f"(residual {residual:.3e} after {it} iterations)"
        )

    returns: dict[tuple[int, str], complex] = {}
    for idx, v in enumerate(f1.nonroot):
        returns[(1, v)] = _realify(R1[idx])
    for idx, v in enumerate(f2.nonroot):
        returns[(2, v)] = _realify(R2[idx])
    return XiSolution(
        z=z,
        xi1=_realify(xi1),
        xi2=_realify(xi2),
        returns=returns,
        iterations=it,
        converged=converged,
        residual=residual,
    )


def _realify(v: complex) -> complex:
    return v.real if abs(v.imag) < 1e-14 else v


@dataclass(frozen=True)
class GenFunContext:
    """Cached generating-function values at z = 1 for one configuration.

    ``letter_L[(i, v)]`` is the last-exit value of the one-letter word ``v``
    seen from the root, i.e. the factor value at the cone exit probability:
    ``L_i(o_i, v | xi_i)``.  ``cl_constant`` is the uniform upper bound
    ``-log((1 - xi_1)(1 - xi_2))`` for the letter-distance of appended pairs.
    """

    config_digest: str
    xi1: float
    xi2: float
    cone_stay: tuple[float, float]
    letter_L: dict[tuple[int, str], float]
    cl_constant: float

    def xi(self, i: int) -> float:
        return self.xi1 if i == 1 else self.xi2

    def letter_dl(self, i: int, v: str) -> float:
        L = self.letter_L[(i, v)]
        if L <= 0:
            raise NonpositiveL(f"cached L for letter ({i}, {v}) is {L}")
        return -math.log(L)

    def to_json_dict(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "xi": [self.xi1, self.xi2],
            "cone_stay": list(self.cone_stay),
            "letter_L": {f"{i}:{v}": L for (i, v), L in sorted(self.letter_L.items())},
            "cl_constant": self.cl_constant,
        }


def build_context(cfg: WalkConfig, tol: float = XI_TOL) -> GenFunContext:
    """Solve the fixed point at z = 1 and cache the per-letter L values."""
    sol = solve_xi(1.0, cfg, tol=tol)
    xi1, xi2 = float(sol.xi1.real), float(sol.xi2.real)
    if not (0.0 < xi1 < 1.0 and 0.0 < xi2 < 1.0):
        raise NoConvergence(f"xi out of (0,1): xi1 = {xi1}, xi2 = {xi2}")
    bound = 1.0 / ((1.0 - xi1) * (1.0 - xi2))
    letter_L: dict[tuple[int, str], float] = {}
    for i, xi in ((1, xi1), (2, xi2)):
        f = cfg.factor(i)
        for v in f.nonroot:
            L = float(factor_L(cfg, i, f.root, v, xi).real)
            if not (0.0 < L <= bound + 1e-9):
                raise NonpositiveL(
                    f"L_{i}(o, {v} | xi_{i}) = {L} outside (0, {bound}]"
                )
            letter_L[(i, v)] = L
    return GenFunContext(
        config_digest=cfg.digest(),
        xi1=xi1,
        xi2=xi2,
        cone_stay=(1.0 - xi1, 1.0 - xi2),
        letter_L=letter_L,
        cl_constant=-math.log((1.0 - xi1) * (1.0 - xi2)),
    )


def dL_word(w: Word, ctx: GenFunContext) -> float:
    """Letter-distance ``-log L(o, w | 1)``, additive over the letters of ``w``.

    Every path from the root to ``w`` locks in the letters in order, so the
    last-exit function factorizes into one factor value per letter.
    """
    return sum(ctx.letter_dl(i, v) for i, v in w.letters)


def entropy_bound_CL(ctx: GenFunContext) -> float:
    """The uniform bound ``-log((1 - xi_1)(1 - xi_2))`` on appended-pair values."""
    return -math.log(ctx.cone_stay[0] * ctx.cone_stay[1])


@dataclass
class RadiusReport:
    """Numeric plausibility probe for the strictly-larger-than-1 radius."""

    grid: list[float]
    converged_at: list[float]
    largest_converging: Optional[float]
    xi_at_largest: Optional[tuple[float, float]]
    spectral_proxy: list[tuple[int, float]]
    plausible: bool

    def to_json_dict(self) -> dict:
        return {
            "grid": self.grid,
            "converged_at": self.converged_at,
            "largest_converging": self.largest_converging,
            "xi_at_largest": list(self.xi_at_largest) if self.xi_at_largest else None,
            "spectral_proxy": [[n, v] for n, v in self.spectral_proxy],
            "plausible": self.plausible,
        }


def radius_diagnostic(
    cfg: WalkConfig, grid: Optional[list[float]] = None, proxy_order: int = 14
) -> RadiusReport:
    """Probe whether the Green function radius exceeds 1.

    Reports the largest grid point where the fixed point still converges with
    both exit probabilities below 1, together with the even-order return
    probability proxy; the standing assumption is declared plausible iff
    convergence holds strictly beyond 1.  A heuristic diagnostic, not a
    certificate.
    """
    from .oracle import return_probability_proxy

    if grid is None:
        grid = [round(1.0 + 0.02 * k, 2) for k in range(11)]
    converged_at = []
    largest = None
    xi_at_largest = None
    for z in grid:
        sol = solve_xi(z, cfg, max_iter=200_000, raise_on_divergence=False)
        if sol.converged and abs(sol.xi1) < 1.0 and abs(sol.xi2) < 1.0:
            converged_at.append(z)
            if largest is None or z > largest:
                largest = z
                xi_at_largest = (float(sol.xi1.real), float(sol.xi2.real))
    proxy = return_probability_proxy(cfg, proxy_order)
    plausible = largest is not None and largest > 1.0
    return RadiusReport(
        grid=grid,
        converged_at=converged_at,
        largest_converging=largest,
        xi_at_largest=xi_at_largest,
        spectral_proxy=proxy,
        plausible=plausible,
    )


# -- renewal increment generating function -------------------------------------


def renewal_pair_gf(z: complex, cfg: WalkConfig) -> dict[tuple[str, str], complex]:
    """Generating function of (increment, appended pair), one value per pair.

    Paths contributing to the increment law avoid one-letter factor-1 words
    and enter the two-letter cone at the last step, either by appending the
    factor-1 letter or by a sibling move; decomposing at the last root visit
    and the last visit to the factor-2 letter expresses everything through
    the fixed point and the factor last-exit functions:

        F_{y,x}(z) = xi_1(z) * L_2(o_2, y | xi_2(z))
                     * [ p_1(o_1, x) + sum_{x'} L_1(o_1, x' | xi_1(z)) p_1(x', x) ]
    """
    sol = solve_xi(z, cfg)
    f1, f2 = cfg.factor1, cfg.factor2
    L2 = {y: factor_L(cfg, 2, f2.root, y, sol.xi2) for y in f2.nonroot}
    L1 = {x: factor_L(cfg, 1, f1.root, x, sol.xi1) for x in f1.nonroot}
    out: dict[tuple[str, str], complex] = {}
    for y in f2.nonroot:
        for x in f1.nonroot:
            arrivals = f1.transition[f1.root_index][f1.index(x)] + sum(
                L1[xp] * f1.transition[f1.index(xp)][f1.index(x)]
                for xp in f1.nonroot
            )
            out[(y, x)] = sol.xi1 * L2[y] * arrivals
    return out


def renewal_increment_gf(z: complex, cfg: WalkConfig) -> complex:
    """The increment generating function ``F(z)``; equals 1 at z = 1."""
    return sum(renewal_pair_gf(z, cfg).values())


@dataclass
class RenewalLaw:
    """Full numeric law of (increment, appended pair), from FFT inversion.

    ``pair_probs[pair][n]`` approximates the joint probability of increment
    ``n`` with appended pair ``pair`` to near machine precision; the law is
    effectively complete (the reported ``unassigned`` mass is at rounding
    level), which is what makes moment-accurate oracle values possible where
    plain truncation at enumeration order loses a visible tail.
    """

    pairs: tuple[tuple[str, str], ...]
    pair_probs: dict[tuple[str, str], np.ndarray]
    config_digest: str

    @property
    def delta_t_probs(self) -> np.ndarray:
        return sum(self.pair_probs.values())

    @property
    def unassigned(self) -> float:
        return 1.0 - float(self.delta_t_probs.sum())

    def moment(self, power: int = 1) -> float:
        p = self.delta_t_probs
        n = np.arange(len(p), dtype=float)
        return float((n**power * p).sum())

    def mean(self) -> float:
        return self.moment(1)

    def variance(self) -> float:
        m = self.mean()
        return self.moment(2) - m * m

    def block_speed(self) -> float:
        return 2.0 / self.mean()

    def rate(self, reward_of_pair: Callable[[tuple[str, str]], float]) -> float:
        total = sum(
            reward_of_pair(pair) * float(probs.sum())
            for pair, probs in self.pair_probs.items()
        )
        return total / self.mean()

    def sigma_sq(self, reward_of_pair: Callable[[tuple[str, str]], float]) -> float:
        """Renewal variance ``E[(reward - increment * rate)^2] / E[increment]``."""
        rate = self.rate(reward_of_pair)
        acc = 0.0
        for pair, probs in self.pair_probs.items():
            r = reward_of_pair(pair)
            n = np.arange(len(probs), dtype=float)
            acc += float((((r - n * rate) ** 2) * probs).sum())
        return acc / self.mean()

    def sigma_block_sq(self) -> float:
        return self.sigma_sq(lambda _pair: 2.0)


def _solve_xi_grid(
    zs: np.ndarray, cfg: WalkConfig, tol: float = XI_TOL, max_iter: int = XI_MAX_ITER
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """The fixed point of :func:`solve_xi`, iterated jointly over many z."""
    f1, f2 = cfg.factor1, cfg.factor2
    a1, a2 = cfg.alphas
    p1 = f1.matrix().astype(complex)
    p2 = f2.matrix().astype(complex)
    nr1 = [f1.index(v) for v in f1.nonroot]
    nr2 = [f2.index(v) for v in f2.nonroot]
    r1, r2 = f1.root_index, f2.root_index
    nz = len(zs)
    R1 = np.zeros((nz, len(nr1)), dtype=complex)
    R2 = np.zeros((nz, len(nr2)), dtype=complex)
    xi1 = np.zeros(nz, dtype=complex)
    xi2 = np.zeros(nz, dtype=complex)
    b1 = p1[nr1, r1]
    b2 = p2[nr2, r2]
    m1 = p1[np.ix_(nr1, nr1)].T
    m2 = p2[np.ix_(nr2, nr2)].T
    w1 = p1[r1, nr1]
    w2 = p2[r2, nr2]
    for it in range(1, max_iter + 1):
        s1 = R1 @ w1
        s2 = R2 @ w2
        new_R1 = (a1 * zs)[:, None] * (b1[None, :] + R1 @ m1) + (
            a2 * zs * s2
        )[:, None] * R1
        new_R2 = (a2 * zs)[:, None] * (b2[None, :] + R2 @ m2) + (
            a1 * zs * s1
        )[:, None] * R2
        new_xi1 = a1 * zs + a2 * zs * s2 * xi1
        new_xi2 = a2 * zs + a1 * zs * s1 * xi2
        residual = max(
            float(np.max(np.abs(new_R1 - R1))),
            float(np.max(np.abs(new_R2 - R2))),
            float(np.max(np.abs(new_xi1 - xi1))),
            float(np.max(np.abs(new_xi2 - xi2))),
        )
        R1, R2, xi1, xi2 = new_R1, new_R2, new_xi1, new_xi2
        if residual < tol:
            return xi1, xi2, R1, R2
    raise NoConvergence(
        f"grid fixed point did not converge within {max_iter} iterations"
    )


def _factor_L_row_grid(
    cfg: WalkConfig, i: int, ts: np.ndarray
) -> dict[str, np.ndarray]:
    """``L_i(o_i, v | t)`` for every non-root ``v``, batched over ``ts``."""
    f = cfg.factor(i)
    mats = np.eye(f.size, dtype=complex)[None, :, :] - ts[:, None, None] * f.matrix()
    inv = np.linalg.inv(mats)
    root = f.root_index
    return {
        v: inv[:, root, f.index(v)] / inv[:, root, root] for v in f.nonroot
    }


def renewal_increment_law(
    cfg: WalkConfig, fft_size: int = 2048, n_terms: int = 1200
) -> RenewalLaw:
    """Invert the increment generating function on the unit circle.

    The coefficients decay geometrically (the radius exceeds 1), so with a
    transform length well beyond the effective support the aliasing error is
    far below double precision.
    """
    f1 = cfg.factor1
    half = fft_size // 2
    zs = np.exp(2j * np.pi * np.arange(half + 1) / fft_size)
    xi1, xi2, _, _ = _solve_xi_grid(zs, cfg)
    L1 = _factor_L_row_grid(cfg, 1, xi1)
    L2 = _factor_L_row_grid(cfg, 2, xi2)
    pairs = tuple(
        sorted((y, x) for y in cfg.factor2.nonroot for x in cfg.factor1.nonroot)
    )
    n_terms = min(n_terms, fft_size)
    out: dict[tuple[str, str], np.ndarray] = {}
    for y, x in pairs:
        arrivals = f1.transition[f1.root_index][f1.index(x)] + sum(
            L1[xp] * f1.transition[f1.index(xp)][f1.index(x)] for xp in f1.nonroot
        )
        upper = xi1 * L2[y] * arrivals
        full = np.empty(fft_size, dtype=complex)
        full[: half + 1] = upper
        full[half + 1 :] = np.conj(upper[1:half][::-1])
        coeffs = (np.fft.fft(full).real / fft_size)[:n_terms]
        coeffs[np.abs(coeffs) < 1e-15] = 0.0
        out[(y, x)] = coeffs
    return RenewalLaw(pairs=pairs, pair_probs=out, config_digest=cfg.digest())
