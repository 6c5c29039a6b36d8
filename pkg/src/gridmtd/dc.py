"""DC measurement model, WLS state estimation, BDD and power flow.

The measurement set is one active-power flow per branch, in per unit on the
case base. The state is the vector of non-reference bus angles (radians),
columns ordered by ascending bus id. For branch l from bus f to bus t,

    z_l = (theta_f - theta_t) / x_l

so row l of H holds +1/x_l in f's column and -1/x_l in t's column, with the
reference bus column dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .topology import Topology

__all__ = [
    "MeasurementMatrix",
    "MeasurementModel",
    "StateEstimate",
    "BddThreshold",
    "IslandError",
    "EstimationError",
    "DegreesOfFreedomError",
    "measurement_matrix",
    "dc_state_estimate",
    "bdd_threshold",
    "dc_power_flow",
    "simulate_measurements",
    "batch_residuals",
    "loss_proxy",
]


class IslandError(ValueError):
    """Some bus has no path to the reference bus."""


class EstimationError(ValueError):
    """The weighted normal equations are singular or weights are invalid."""


class DegreesOfFreedomError(ValueError):
    """Residual test needs m > n."""


@dataclass(frozen=True)
class MeasurementMatrix:
    """H plus the reactances and column bookkeeping it was built from."""

    matrix: np.ndarray  # m x n
    bus_order: tuple[int, ...]  # non-reference bus id per column, ascending
    x: np.ndarray
    ref_bus: int

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]


def _check_connected(t: Topology) -> None:
    adj = t._adjacency
    pos = t._bus_pos
    seen = {pos[t.ref_bus]}
    queue = [pos[t.ref_bus]]
    while queue:
        v = queue.pop()
        for w, _ in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    if len(seen) != len(t.bus_ids):
        stranded = sorted(b for b in t.bus_ids if pos[b] not in seen)
        raise IslandError(f"buses {stranded} have no path to reference bus {t.ref_bus}")


def measurement_matrix(t: Topology, x) -> MeasurementMatrix:
    """Build H for a topology and reactance vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (t.m,):
        raise ValueError(f"x must have shape ({t.m},), got {x.shape}")
    if np.any(x <= 0):
        raise ValueError("reactances must be positive")
    _check_connected(t)
    bus_order = tuple(sorted(b for b in t.bus_ids if b != t.ref_bus))
    col = {b: j for j, b in enumerate(bus_order)}
    H = np.zeros((t.m, len(bus_order)))
    for l, (f, to) in enumerate(t.branches):
        b = 1.0 / x[l]
        if f != t.ref_bus:
            H[l, col[f]] = b
        if to != t.ref_bus:
            H[l, col[to]] = -b
    return MeasurementMatrix(matrix=H, bus_order=bus_order, x=x, ref_bus=t.ref_bus)


@dataclass(frozen=True)
class MeasurementModel:
    """Per-measurement noise standard deviations, p.u.

    Estimation weights are 1/sigma^2. Zero sigmas are allowed only on the
    simulation side (exact measurements); estimation rejects them.
    """

    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim != 1:
            raise ValueError("sigma must be a vector")
        if np.any(sigma < 0):
            raise ValueError("sigma must be nonnegative")
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def proportional(cls, readings, scale: float = 0.01, floor: float = 1e-4):
        """Sigma = scale * |reading|, floored at ``floor`` when scale > 0.

        scale = 0 means exact measurements: every sigma is 0, no floor.
        """
        readings = np.asarray(readings, dtype=float)
        if scale < 0:
            raise ValueError("scale must be nonnegative")
        if scale == 0:
            return cls(sigma=np.zeros_like(readings))
        return cls(sigma=np.maximum(scale * np.abs(readings), floor))

    @classmethod
    def flat(cls, m: int, sigma: float):
        return cls(sigma=np.full(m, float(sigma)))


@dataclass(frozen=True)
class StateEstimate:
    theta: np.ndarray  # radians
    residual: float  # ||z - H theta||_2
    weighted_residual: float  # ||R^(-1/2) (z - H theta)||_2


def _weights_or_raise(model: MeasurementModel, m: int) -> np.ndarray:
    sigma = model.sigma
    if sigma.shape != (m,):
        raise ValueError(f"sigma must have shape ({m},), got {sigma.shape}")
    if np.any(sigma == 0):
        raise EstimationError("zero-sigma measurement: weighted estimation undefined")
    return 1.0 / sigma


def dc_state_estimate(H: MeasurementMatrix, model: MeasurementModel, z) -> StateEstimate:
    """Weighted least squares state estimate and residuals."""
    z = np.asarray(z, dtype=float)
    if z.shape != (H.m,):
        raise ValueError(f"z must have shape ({H.m},), got {z.shape}")
    w = _weights_or_raise(model, H.m)
    Hw = H.matrix * w[:, None]
    zw = z * w
    theta, _, rank, _ = np.linalg.lstsq(Hw, zw, rcond=None)
    if rank < H.n:
        raise EstimationError(
            f"normal matrix rank {rank} < {H.n}: system effectively islanded"
        )
    err = z - H.matrix @ theta
    return StateEstimate(
        theta=theta,
        residual=float(np.linalg.norm(err)),
        weighted_residual=float(np.linalg.norm(err * w)),
    )


def batch_residuals(H: MeasurementMatrix, model: MeasurementModel, Z) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of many measurement vectors at once.

    Z has one measurement vector per column. Returns (plain 2-norm residuals,
    weighted squared statistics), each of length Z.shape[1]. Matches
    dc_state_estimate applied column by column.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != H.m:
        raise ValueError(f"Z must have shape ({H.m}, trials)")
    w = _weights_or_raise(model, H.m)
    Hw = H.matrix * w[:, None]
    Q, R = np.linalg.qr(Hw)
    if np.min(np.abs(np.diag(R))) <= H.m * np.abs(R[0, 0]) * np.finfo(float).eps:
        raise EstimationError("normal matrix numerically singular")
    Zw = Z * w[:, None]
    theta = np.linalg.solve(R, Q.T @ Zw)
    E = Z - H.matrix @ theta
    r = np.linalg.norm(E, axis=0)
    j = np.sum((E * w[:, None]) ** 2, axis=0)
    return r, j


@dataclass(frozen=True)
class BddThreshold:
    """Detection threshold with its calibration metadata.

    chi_square thresholds apply to the squared weighted residual;
    monte_carlo thresholds apply to the plain 2-norm residual.
    """

    eta: float
    alpha: float
    method: str

    def flags(self, est: StateEstimate) -> bool:
        if self.method == "chi_square":
            return est.weighted_residual**2 > self.eta
        return est.residual > self.eta

    def flags_batch(self, residuals: np.ndarray, weighted_sq: np.ndarray) -> np.ndarray:
        if self.method == "chi_square":
            return weighted_sq > self.eta
        return residuals > self.eta


def bdd_threshold(
    H: MeasurementMatrix,
    model: MeasurementModel,
    alpha: float = 0.05,
    method: str = "chi_square",
    rng: np.random.Generator | None = None,
    samples: int = 10000,
) -> BddThreshold:
    """Calibrate a BDD threshold for false-positive rate alpha.

    chi_square: (1-alpha) quantile of chi-square with m-n degrees of
    freedom (exact for Gaussian noise under the weighted statistic).
    monte_carlo: empirical (1-alpha) quantile of the plain residual over
    ``samples`` noise-only draws; needs an rng.
    """
    if not (0 < alpha <= 0.5):
        raise ValueError(f"alpha must be in (0, 0.5], got {alpha}")
    dof = H.m - H.n
    if dof <= 0:
        raise DegreesOfFreedomError(f"residual test needs m > n, got m={H.m}, n={H.n}")
    if method == "chi_square":
        eta = float(stats.chi2.ppf(1.0 - alpha, dof))
    elif method == "monte_carlo":
        if rng is None:
            raise ValueError("monte_carlo calibration needs an rng")
        if samples < 10000:
            raise ValueError("monte_carlo calibration needs >= 10000 samples")
        W = rng.normal(0.0, model.sigma[:, None], size=(H.m, samples))
        r, _ = batch_residuals(H, model, W)
        eta = float(np.quantile(r, 1.0 - alpha))
    else:
        raise ValueError(f"unknown method {method!r}")
    return BddThreshold(eta=eta, alpha=alpha, method=method)


def dc_power_flow(t: Topology, x, injections_mw, base_mva: float = 100.0):
    """Solve DC power flow: angles (radians) and branch flows (p.u.).

    ``injections_mw`` is the net injection per bus in case bus order; any
    imbalance is absorbed by the reference bus (slack). Flows are oriented
    from-bus to to-bus.
    """
    H = measurement_matrix(t, x)
    p = np.asarray(injections_mw, dtype=float)
    if p.shape != (len(t.bus_ids),):
        raise ValueError(f"injections must have shape ({len(t.bus_ids)},)")
    pos = t._bus_pos
    p_red = np.array([p[pos[b]] for b in H.bus_order]) / base_mva
    # nodal balance at non-reference buses: (M^T flows) = p,  flows = H theta,
    # M the reduced incidence, H = diag(1/x) M
    M = np.sign(H.matrix)
    B = M.T @ H.matrix
    try:
        theta = np.linalg.solve(B, p_red)
    except np.linalg.LinAlgError as err:
        raise IslandError(f"susceptance matrix singular: {err}") from err
    flows = H.matrix @ theta
    return theta, flows


def simulate_measurements(flows, model: MeasurementModel, rng: np.random.Generator) -> np.ndarray:
    """Noisy flow measurements: z_l = flow_l + N(0, sigma_l^2)."""
    flows = np.asarray(flows, dtype=float)
    if model.sigma.shape != flows.shape:
        raise ValueError("model sigma length must match flows")
    if np.all(model.sigma == 0):
        return flows.copy()
    return flows + rng.normal(0.0, model.sigma)


def loss_proxy(flows_pu, resistances, base_mva: float = 100.0) -> float:
    """Resistive series-loss proxy in MW: sum of r_l * flow_l^2 * base."""
    flows = np.asarray(flows_pu, dtype=float)
    r = np.asarray(resistances, dtype=float)
    if flows.shape != r.shape:
        raise ValueError("flows and resistances must have matching shapes")
    return float(np.sum(r * flows**2) * base_mva)
