"""False-data-injection attack vectors and stealthiness tests.

An attack adds a to the measurement vector. Whenever a = H c for some state
shift c, the estimator absorbs the attack into the state and the residual is
unchanged, so residual-based detection cannot see it. Against a different
matrix H' the same a is detectable unless it also lies in col(H').
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dc import MeasurementMatrix
from .topology import CutBasis

__all__ = [
    "AttackVector",
    "construct_attack",
    "random_cut_attack",
    "is_stealthy",
]


@dataclass(frozen=True)
class AttackVector:
    """Measurement perturbation a = H0 c with its generating state shift."""

    a: np.ndarray  # m-vector, p.u.
    c: np.ndarray  # n-vector
    cut_branch: int | None  # 1-based tree branch when cut-restricted
    magnitude: float  # max |a_l|, p.u.


def construct_attack(H0: MeasurementMatrix, c) -> AttackVector:
    """Attack from an arbitrary state shift: a = H0 c."""
    c = np.asarray(c, dtype=float)
    if c.shape != (H0.n,):
        raise ValueError(f"c must have shape ({H0.n},), got {c.shape}")
    a = H0.matrix @ c
    return AttackVector(a=a, c=c, cut_branch=None, magnitude=float(np.max(np.abs(a), initial=0.0)))


def random_cut_attack(
    H0: MeasurementMatrix,
    cuts: CutBasis,
    rng: np.random.Generator,
    target_deviation_mw: float = 10.0,
    base_mva: float = 100.0,
) -> AttackVector:
    """Attack supported on one uniformly chosen fundamental cut.

    The state shift is a constant angle offset on the cut's from-side buses
    (reference bus excluded; if the reference bus sits on that side the
    complement is shifted instead, which gives the same attack up to sign).
    The offset is scaled so max |a_l| equals the target deviation in p.u.,
    with a random overall sign.
    """
    if target_deviation_mw <= 0:
        raise ValueError("target deviation must be positive")
    j = int(rng.integers(len(cuts.tree)))
    side = cuts.sides[j]
    col = {b: i for i, b in enumerate(H0.bus_order)}
    c = np.zeros(H0.n)
    if H0.ref_bus in side:
        # shift the complement so the reference stays at angle zero
        for b in H0.bus_order:
            if b not in side:
                c[col[b]] = -1.0
    else:
        for b in side:
            c[col[b]] = 1.0
    a = H0.matrix @ c
    peak = np.max(np.abs(a))
    sign = rng.choice((-1.0, 1.0))
    scale = sign * (target_deviation_mw / base_mva) / peak
    a = a * scale
    c = c * scale
    return AttackVector(
        a=a,
        c=c,
        cut_branch=cuts.tree[j],
        magnitude=float(np.max(np.abs(a))),
    )


def is_stealthy(a, H_prime: MeasurementMatrix, tol: float = 1e-8) -> bool:
    """True when a lies in col(H') within tolerance.

    Tested via the least-squares projection residual, relative to ||a||:
    min_c ||a - H'c|| <= tol * ||a||. The zero attack is stealthy by
    convention. Scale-invariant in a.
    """
    a = np.asarray(a, dtype=float) if not isinstance(a, AttackVector) else a.a
    if a.shape != (H_prime.m,):
        raise ValueError(f"attack must have shape ({H_prime.m},), got {a.shape}")
    norm = np.linalg.norm(a)
    if norm == 0:
        return True
    c = np.linalg.lstsq(H_prime.matrix, a, rcond=None)[0]
    misfit = float(np.linalg.norm(a - H_prime.matrix @ c))
    return misfit <= tol * norm
