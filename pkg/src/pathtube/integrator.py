"""Stochastic path-integral estimators.

Weighted Monte Carlo expectations over path ensembles: the Lorentzian and
Euclidean integrals, their Riemann-product discretization with the
convergence diagnostic, the theta-family of Feynman-Kac expectations with
its power series, the fiber-disintegration cross-check, and the endpoint
propagator.  Estimation is a pure map over sample indices followed by a
commutative merge of streaming accumulators.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .dynamics import DisplacementBridgeEnsemble, SDEParams
from .errors import (
    BoundViolationError,
    NoDataError,
    PartitionError,
    PathTubeError,
    WeightError,
)
from .geometry import MetricChart, solve_classical_trajectory
from .oracles import heat_kernel
from .tube import DiscretePath, TubeSpec

Array = np.ndarray

MERGE_TOL = 1e-12


class MCAccumulator:
    """Mergeable streaming estimator: count, complex mean, second moment.

    ``m2`` is the summed squared deviation of the real and imaginary parts,
    so ``std_error`` covers the complex estimate as a whole.  ``merge`` is a
    commutative, associative pairwise combination (counts exact, moments to
    merge-order floating-point tolerance).
    """

    __slots__ = ("count", "mean", "m2")

    def __init__(self, count: int = 0, mean: complex = 0j, m2: float = 0.0):
        self.count = count
        self.mean = complex(mean)
        self.m2 = float(m2)

    def push(self, value) -> None:
        value = complex(value)
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += (delta.conjugate() * (value - self.mean)).real

    def merge(self, other: "MCAccumulator") -> "MCAccumulator":
        if other.count == 0:
            return MCAccumulator(self.count, self.mean, self.m2)
        if self.count == 0:
            return MCAccumulator(other.count, other.mean, other.m2)
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = (self.count * self.mean + other.count * other.mean) / n
        m2 = self.m2 + other.m2 + abs(delta) ** 2 * self.count * other.count / n
        return MCAccumulator(n, mean, m2)

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)

    @property
    def std_error(self) -> float:
        if self.count < 1:
            return math.inf
        return math.sqrt(self.variance / self.count)


@dataclass(frozen=True)
class Observable:
    """A bounded observable with a declared sup norm.

    ``kind`` is one of endpoint (f(X_T)), path (F(X, grid)) or fiber
    (F(x, t)); fiber evaluators must be vectorized over nodes.
    """

    kind: str
    fn: Callable
    bound: float
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("endpoint", "path", "fiber"):
            raise ValueError(f"unknown observable kind {self.kind!r}")
        if not (self.bound > 0.0 and math.isfinite(self.bound)):
            raise ValueError("observable bound must be finite and positive")

    def evaluate(self, *args):
        val = self.fn(*args)
        mag = np.max(np.abs(val))
        if mag > self.bound * (1.0 + 1e-9):
            raise BoundViolationError(
                f"observable {self.name or self.kind} reached |value| = {mag:.6g} "
                f"beyond its declared bound {self.bound:.6g}"
            )
        return val


def unit_observable() -> Observable:
    return Observable(kind="path", fn=lambda pts, grid: 1.0, bound=1.0, name="one")


def endpoint_observable(fn, bound, name="f") -> Observable:
    return Observable(kind="endpoint", fn=fn, bound=bound, name=name)


def fiber_observable(fn, bound, name="F") -> Observable:
    return Observable(kind="fiber", fn=fn, bound=bound, name=name)


@dataclass(frozen=True)
class KernelEstimate:
    """A Monte Carlo estimate with its standard error and provenance."""

    value: complex
    std_error: float
    n_samples: int
    metadata: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        theta = self.metadata.get("theta")
        return {
            "value_re": float(self.value.real),
            "value_im": float(self.value.imag),
            "std_error": float(self.std_error),
            "n_samples": int(self.n_samples),
            "mode": self.metadata.get("mode"),
            "theta": None if theta is None else [complex(theta).real, complex(theta).imag],
            "partition_mesh": self.metadata.get("partition_mesh"),
            "seed": self.metadata.get("seed"),
            "config_hash": self.metadata.get("config_hash"),
        }


def _estimate_from(acc: MCAccumulator, **metadata) -> KernelEstimate:
    if acc.count == 0:
        raise NoDataError("estimator received no samples")
    return KernelEstimate(value=acc.mean, std_error=acc.std_error,
                          n_samples=acc.count, metadata=metadata)


@dataclass(frozen=True)
class PartitionSpec:
    """Partition 0 = t_0 < ... < t_n = T whose nodes sit on the sampling grid."""

    times: Array

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0.0):
            raise PartitionError("partition must be strictly increasing with >= 2 nodes")

    @classmethod
    def from_stride(cls, grid: Array, stride: int) -> "PartitionSpec":
        idx = np.arange(0, len(grid), stride)
        if idx[-1] != len(grid) - 1:
            idx = np.append(idx, len(grid) - 1)
        return cls(times=np.asarray(grid, dtype=float)[idx])

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.times)))

    def indices_on(self, grid: Array) -> Array:
        grid = np.asarray(grid, dtype=float)
        if abs(self.times[0] - grid[0]) > 1e-12 or abs(self.times[-1] - grid[-1]) > 1e-12:
            raise PartitionError("partition must span the full sampling window")
        idx = np.searchsorted(grid, self.times)
        idx = np.clip(idx, 0, len(grid) - 1)
        if np.any(np.abs(grid[idx] - self.times) > 1e-12 * max(1.0, grid[-1])):
            raise PartitionError("partition nodes must lie on the sampling grid")
        return idx


def euclidean_density(chart: MetricChart, path: DiscretePath,
                      potential_only: bool = True, hbar: float = 1.0) -> Array:
    """Local density on the grid: V(X)/hbar, or the full (kinetic + V)/hbar.

    The potential channel is the Feynman-Kac one (the diffusion law supplies
    the kinetic part); the full channel exists for lattice-sum comparisons.
    """
    return _density(chart, path.points, path.grid, potential_only, hbar)


def _density(chart, pts, grid, potential_only, hbar):
    if potential_only:
        return chart.potential_at(pts) / hbar
    v = np.gradient(pts, grid, axis=0, edge_order=2)
    if chart.is_flat:
        kin = 0.5 * np.einsum("ki,ki->k", v, v)
    else:
        kin = 0.5 * np.array([vk @ chart.metric_at(qk) @ vk for qk, vk in zip(pts, v)])
    return (kin + chart.potential_at(pts)) / hbar


def _phase_weight(s: float, mode: str) -> complex:
    if mode == "lorentzian":
        return cmath.exp(1j * s)
    if mode == "euclidean":
        return math.exp(-s)
    raise ValueError(f"unknown mode {mode!r}")


def _observable_value(observable: Observable, pts, grid):
    if observable.kind == "endpoint":
        return observable.evaluate(pts[-1])
    if observable.kind == "path":
        return observable.evaluate(pts, grid)
    raise ValueError("fiber observables belong to disintegration_check")


def stochastic_path_integral(
    ensemble,
    observable: Observable,
    mode: str = "lorentzian",
    *,
    potential_only: bool = True,
    hbar: Optional[float] = None,
) -> KernelEstimate:
    """E[O(X) (dmu/dGamma) w(S)] with w = exp(i S) or exp(-S).

    S is the trapezoid integral of the selected density channel along each
    assembled sample path; the Lorentzian weight has unit modulus on every
    sample.  Each sample's accumulated density integral is recorded on its
    fluctuation record.
    """
    hbar = ensemble.spec.hbar if hbar is None else hbar
    grid = ensemble.grid
    acc = MCAccumulator()
    for sample in ensemble.iter_samples():
        dens = _density(ensemble.chart, sample.x, grid, potential_only, hbar)
        s = float(np.trapezoid(dens, grid))
        if sample.fluct is not None:
            sample.fluct.action_integral = s
        o = _observable_value(observable, sample.x, grid)
        acc.push(o * math.exp(sample.log_weight) * _phase_weight(s, mode))
    return _estimate_from(acc, mode=mode, potential_only=potential_only,
                          seed=ensemble.seed)


@dataclass(frozen=True)
class RiemannProductResult:
    """Riemann-product estimate with its full-grid reference and diagnostic.

    ``action_gap`` estimates the weighted mean of |S - S_p|; the per-run
    triangle inequality |I_p - I_ref| <= action_gap holds by construction.
    """

    partition_estimate: KernelEstimate
    reference_estimate: KernelEstimate
    action_gap: float
    action_gap_se: float
    mesh: float

    @property
    def bound_satisfied(self) -> bool:
        gap = abs(self.partition_estimate.value - self.reference_estimate.value)
        return gap <= self.action_gap + 1e-14

    @property
    def estimate_gap(self) -> float:
        return abs(self.partition_estimate.value - self.reference_estimate.value)


def riemann_product(
    ensemble,
    partition: PartitionSpec,
    *,
    mode: str = "lorentzian",
    potential_only: bool = True,
    observable: Optional[Observable] = None,
    hbar: Optional[float] = None,
) -> RiemannProductResult:
    """Time-sliced product estimate I_p next to the full-grid reference I.

    S_p is the left-point sum of the density over the partition (matching
    the product form of the discretized semigroup); S is the trapezoid
    integral on the sampling grid.  Also returns the sampled mean of
    |S - S_p|, which bounds |I_p - I| run by run.
    """
    hbar = ensemble.spec.hbar if hbar is None else hbar
    observable = observable or unit_observable()
    grid = ensemble.grid
    idx = partition.indices_on(grid)
    dts_p = np.diff(partition.times)
    acc_p, acc_ref, acc_gap = MCAccumulator(), MCAccumulator(), MCAccumulator()
    for sample in ensemble.iter_samples():
        dens = _density(ensemble.chart, sample.x, grid, potential_only, hbar)
        s = float(np.trapezoid(dens, grid))
        s_p = float(dens[idx[:-1]] @ dts_p)
        o = _observable_value(observable, sample.x, grid)
        z = math.exp(sample.log_weight)
        acc_ref.push(o * z * _phase_weight(s, mode))
        acc_p.push(o * z * _phase_weight(s_p, mode))
        acc_gap.push(abs(o) * z * abs(s - s_p))
    meta = dict(mode=mode, potential_only=potential_only, seed=ensemble.seed,
                partition_mesh=partition.mesh)
    return RiemannProductResult(
        partition_estimate=_estimate_from(acc_p, **meta),
        reference_estimate=_estimate_from(acc_ref, **meta),
        action_gap=acc_gap.mean.real,
        action_gap_se=acc_gap.std_error,
        mesh=partition.mesh,
    )


def _fk_sweep(ensemble, f: Observable, hbar, c_bound, powers: int):
    """Shared Feynman-Kac sweep: per-sample A = int V_E dt and f(X_T) A^n."""
    grid = ensemble.grid
    horizon = float(grid[-1] - grid[0])
    accs = [MCAccumulator() for _ in range(powers + 1)]
    max_dens = 0.0
    for sample in ensemble.iter_samples():
        dens = _density(ensemble.chart, sample.x, grid, True, hbar)
        max_dens = max(max_dens, float(np.max(np.abs(dens))))
        a = float(np.trapezoid(dens, grid))
        if c_bound is not None and abs(a) > c_bound * horizon * (1.0 + 1e-9):
            raise BoundViolationError(
                f"|A| = {abs(a):.6g} exceeds C*T = {c_bound * horizon:.6g}; "
                "the supplied density bound C is too small"
            )
        if sample.fluct is not None:
            sample.fluct.action_integral = a
        base = _observable_value(f, sample.x, grid) * math.exp(sample.log_weight)
        an = 1.0
        for n in range(powers + 1):
            accs[n].push(base * an)
            an *= a
    c_eff = c_bound if c_bound is not None else 1.1 * max_dens
    return accs, c_eff, horizon


def feynman_kac_expectation(
    ensemble,
    f: Observable,
    theta: complex,
    *,
    hbar: Optional[float] = None,
    c_bound: Optional[float] = None,
) -> KernelEstimate:
    """u_theta = E[f(X_T) exp(-theta A)], A the potential-channel integral.

    The per-sample |A| <= C T bound is asserted against the supplied density
    bound; when none is given, C is the observed ensemble maximum inflated
    by 10 percent (recorded in the metadata).
    """
    hbar = ensemble.spec.hbar if hbar is None else hbar
    theta = complex(theta)
    grid = ensemble.grid
    acc = MCAccumulator()
    max_dens = 0.0
    horizon = float(grid[-1] - grid[0])
    for sample in ensemble.iter_samples():
        dens = _density(ensemble.chart, sample.x, grid, True, hbar)
        max_dens = max(max_dens, float(np.max(np.abs(dens))))
        a = float(np.trapezoid(dens, grid))
        if c_bound is not None and abs(a) > c_bound * horizon * (1.0 + 1e-9):
            raise BoundViolationError(
                f"|A| = {abs(a):.6g} exceeds C*T = {c_bound * horizon:.6g}"
            )
        if sample.fluct is not None:
            sample.fluct.action_integral = a
        fv = _observable_value(f, sample.x, grid)
        acc.push(fv * math.exp(sample.log_weight) * cmath.exp(-theta * a))
    c_eff = c_bound if c_bound is not None else 1.1 * max_dens
    return _estimate_from(acc, mode="feynman-kac", theta=theta, seed=ensemble.seed,
                          c_bound=c_eff)


@dataclass(frozen=True)
class ThetaSeries:
    """Power-series form of the theta-family from sampled moments a_n.

    ``evaluate`` sums a_n (-theta)^n / n!; ``remainder_bound`` is the Taylor
    tail bound M_f (|theta| C T)^(N+1)/(N+1)! exp(|theta| C T), which
    dominates the per-sample truncation error whenever |A| <= C T.
    """

    coefficients: Array      # (N+1,) complex estimates of E[f(X_T) A^n]
    coefficient_ses: Array   # (N+1,)
    m_f: float
    c_bound: float
    horizon: float
    n_samples: int

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def evaluate(self, theta: complex) -> complex:
        theta = complex(theta)
        total = 0j
        term = 1.0 + 0j
        for n, a_n in enumerate(self.coefficients):
            if n > 0:
                term *= -theta / n
            total += a_n * term
        return total

    def remainder_bound(self, theta: complex) -> float:
        ct = abs(complex(theta)) * self.c_bound * self.horizon
        n1 = self.order + 1
        return self.m_f * ct ** n1 / math.factorial(n1) * math.exp(ct)

    def coefficient_bound(self, n: int) -> float:
        """The moment bound M_f (C T)^n."""
        return self.m_f * (self.c_bound * self.horizon) ** n


def theta_series(
    ensemble,
    f: Observable,
    n_order: int,
    *,
    hbar: Optional[float] = None,
    c_bound: Optional[float] = None,
) -> ThetaSeries:
    """Estimate a_n = E[f(X_T) A^n] for n <= n_order from one shared sweep."""
    if n_order > 30:
        raise ValueError("series order capped at 30 (factorial precision budget)")
    if n_order < 0:
        raise ValueError("series order must be non-negative")
    hbar = ensemble.spec.hbar if hbar is None else hbar
    accs, c_eff, horizon = _fk_sweep(ensemble, f, hbar, c_bound, n_order)
    return ThetaSeries(
        coefficients=np.array([a.mean for a in accs]),
        coefficient_ses=np.array([a.std_error for a in accs]),
        m_f=f.bound,
        c_bound=c_eff,
        horizon=horizon,
        n_samples=accs[0].count,
    )


def lorentzian_from_theta(
    ensemble,
    f: Observable,
    *,
    hbar: Optional[float] = None,
) -> KernelEstimate:
    """The theta = -i member: weight exp(+iA), unit modulus on every sample.

    Internally cross-checked against the Lorentzian-mode path integral with
    the potential-only channel on the same samples.
    """
    hbar = ensemble.spec.hbar if hbar is None else hbar
    direct = feynman_kac_expectation(ensemble, f, -1j, hbar=hbar)
    cross = stochastic_path_integral(
        ensemble, Observable(kind="endpoint", fn=f.fn, bound=f.bound, name=f.name),
        mode="lorentzian", potential_only=True, hbar=hbar,
    )
    gap = abs(direct.value - cross.value)
    if gap > 1e-12 * (1.0 + abs(direct.value)):
        raise PathTubeError(
            f"theta = -i estimate and Lorentzian path integral disagree by {gap:.3e}"
        )
    meta = dict(direct.metadata)
    meta["cross_check_gap"] = gap
    meta["mode"] = "lorentzian"
    return KernelEstimate(value=direct.value, std_error=direct.std_error,
                          n_samples=direct.n_samples, metadata=meta)


@dataclass(frozen=True)
class DisintegrationResult:
    """Both sides of the fiber-disintegration identity and their paired gap."""

    lhs: KernelEstimate
    rhs: KernelEstimate
    gap: float
    gap_se: float


def disintegration_check(
    ensemble,
    fiber: Observable,
    time_weights: Array,
) -> DisintegrationResult:
    """Monte Carlo check of int F dmu_bundle = int E[F(X_t, t)] rho(dt).

    The left side draws one time per sample from the weight vector; the
    right side averages the rho-weighted node values on the same samples,
    so the gap estimator is paired and its SE is the combined one.
    """
    grid = ensemble.grid
    rho = np.asarray(time_weights, dtype=float)
    if rho.shape != grid.shape:
        raise WeightError("time weights must live on the sampling grid")
    if np.any(rho < 0.0) or abs(float(np.sum(rho)) - 1.0) > 1e-12:
        raise WeightError("time weights must form a probability vector (sum 1)")
    cum = np.cumsum(rho)
    gamma0 = ensemble.gamma0
    acc_l, acc_r, acc_gap = MCAccumulator(), MCAccumulator(), MCAccumulator()
    for sample in ensemble.iter_samples():
        u = sample.x - gamma0
        node_vals = np.asarray(fiber.evaluate(u, grid), dtype=float)
        rhs_val = float(rho @ node_vals)
        draw = sample_rng_uniform(ensemble.seed, sample.index)
        j = int(np.searchsorted(cum, draw, side="left"))
        j = min(j, len(grid) - 1)
        lhs_val = float(node_vals[j])
        acc_l.push(lhs_val)
        acc_r.push(rhs_val)
        acc_gap.push(lhs_val - rhs_val)
    return DisintegrationResult(
        lhs=_estimate_from(acc_l, mode="disintegration-lhs", seed=ensemble.seed),
        rhs=_estimate_from(acc_r, mode="disintegration-rhs", seed=ensemble.seed),
        gap=acc_gap.mean.real,
        gap_se=acc_gap.std_error,
    )


def sample_rng_uniform(seed: int, index: int) -> float:
    """Deterministic uniform draw on a per-sample sub-stream."""
    from .dynamics import sample_rng

    return float(sample_rng(seed, index, 1).uniform())


def propagator(
    chart: MetricChart,
    spec: TubeSpec,
    params: SDEParams,
    x,
    y,
    n_samples: int,
    mode: str = "euclidean",
    *,
    seed: int = 0,
    chunk_size: int = 10000,
) -> KernelEstimate:
    """Endpoint kernel K(x, y, T) = free kernel x bridge expectation.

    Euclidean mode multiplies the closed-form heat kernel by the sampled
    mean of exp(-int V/hbar dt) over displacement bridges around the
    classical trajectory (tube-confined when kappa > 0); the standard error
    scales only the expectation factor.  Physical kernels need
    sigma = sqrt(hbar / m).
    """
    est, _ = propagator_chunked(chart, spec, params, x, y, n_samples, mode,
                                seed=seed, chunk_size=chunk_size)
    return est


def propagator_chunked(
    chart: MetricChart,
    spec: TubeSpec,
    params: SDEParams,
    x,
    y,
    n_samples: int,
    mode: str = "euclidean",
    *,
    seed: int = 0,
    chunk_size: int = 10000,
):
    """Propagator plus the per-chunk partial accumulators (for CSV output)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    traj = spec.trajectory
    if (np.max(np.abs(traj.points[0] - x)) > 1e-12
            or np.max(np.abs(traj.points[-1] - y)) > 1e-12):
        traj = solve_classical_trajectory(chart, x, y, traj.duration,
                                          steps=len(traj.grid) - 1)
        spec = TubeSpec(trajectory=traj, hbar=spec.hbar, coercivity=spec.coercivity,
                        eta_action=spec.eta_action, radius=spec.radius,
                        delta_e=spec.delta_e)
    horizon = traj.duration
    prefactor = heat_kernel(x, y, horizon, params.sigma, chart.dim)
    ens = DisplacementBridgeEnsemble(chart, spec, params, seed, n_samples)
    grid = ens.grid
    hbar = spec.hbar

    chunks = []
    acc = MCAccumulator()
    merged = MCAccumulator()
    n_seen = 0
    for sample in ens.iter_samples():
        dens = _density(chart, sample.x, grid, True, hbar)
        a = float(np.trapezoid(dens, grid))
        acc.push(_phase_weight(a, mode))
        n_seen += 1
        if acc.count == chunk_size or n_seen == n_samples:
            chunks.append(acc)
            merged = merged.merge(acc)
            acc = MCAccumulator()
    if merged.count == 0:
        raise NoDataError("propagator received no samples")
    est = KernelEstimate(
        value=prefactor * merged.mean,
        std_error=prefactor * merged.std_error,
        n_samples=merged.count,
        metadata=dict(mode=mode, seed=seed, prefactor=prefactor,
                      x=list(map(float, x)), y=list(map(float, y))),
    )
    return est, chunks
