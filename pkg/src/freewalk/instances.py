"""Bundled example configurations used by the CLI shortcuts and the test suite."""

from __future__ import annotations

from .core import FactorSpec, LoopWitness, ParameterBinding, WalkConfig


def _k3(factor_id: int, names: tuple[str, str, str]) -> FactorSpec:
    return FactorSpec(
        factor_id=factor_id,
        vertices=names,
        root=names[0],
        transition=(
            (0.0, 0.5, 0.5),
            (0.5, 0.0, 0.5),
            (0.5, 0.5, 0.0),
        ),
    )


def _path3(factor_id: int, names: tuple[str, str, str]) -> FactorSpec:
    # reflecting walk on the path names[0] - names[1] - names[2]
    return FactorSpec(
        factor_id=factor_id,
        vertices=names,
        root=names[0],
        transition=(
            (0.0, 1.0, 0.0),
            (0.5, 0.0, 0.5),
            (0.0, 1.0, 0.0),
        ),
    )


def instance_k3_k3(alpha: float = 0.5) -> WalkConfig:
    """Two complete 3-vertex factors with uniform off-diagonal rows.

    At ``alpha = 1/2`` every positive kernel entry equals 1/4, so the walk
    depends on a single parameter and admits several closed-form checks
    (exit probability 2/3, block speed 1/4, mean renewal increment 8).
    """
    bindings = []
    if alpha == 0.5:
        params: tuple[float, ...] = (0.25,)
        for fid, names in ((1, ("o1", "a", "b")), (2, ("o2", "c", "d"))):
            for src in names:
                for tgt in names:
                    if src != tgt:
                        bindings.append(ParameterBinding(fid, src, tgt, 0))
    else:
        params = (alpha * 0.5, (1.0 - alpha) * 0.5)
        for idx, (fid, names) in enumerate(
            ((1, ("o1", "a", "b")), (2, ("o2", "c", "d")))
        ):
            for src in names:
                for tgt in names:
                    if src != tgt:
                        bindings.append(ParameterBinding(fid, src, tgt, idx))
    return WalkConfig(
        factor1=_k3(1, ("o1", "a", "b")),
        factor2=_k3(2, ("o2", "c", "d")),
        alpha=alpha,
        epsilon0=min(alpha, 1.0 - alpha) * 0.5,
        parameters=params,
        bindings=tuple(bindings),
        loop_witness=LoopWitness(1, "a", 2),
        name="K3xK3" if alpha == 0.5 else f"K3xK3(alpha={alpha})",
    )


def instance_path_k3(alpha: float = 0.5) -> WalkConfig:
    """A reflecting 3-path against a complete 3-vertex factor.

    Letter distances differ across factor-1 vertices (the far end of the
    path sits at distance 2), so the graph-distance and block-length
    statistics genuinely decouple on this instance.
    """
    return WalkConfig(
        factor1=_path3(1, ("o1", "m", "e")),
        factor2=_k3(2, ("o2", "c", "d")),
        alpha=alpha,
        epsilon0=min(alpha * 0.5, (1.0 - alpha) * 0.5),
        loop_witness=LoopWitness(1, "m", 2),
        name="PathxK3" if alpha == 0.5 else f"PathxK3(alpha={alpha})",
    )


NAMED_INSTANCES = {
    "K3xK3": instance_k3_k3,
    "PathxK3": instance_path_k3,
}
