"""Sampling of fluctuation paths in the tube.

Brownian bridges (vectorized and sequential-kernel constructions), the
normal-component SDE in the parallel frame with stiffness, energy-cost and
confining-barrier drift, Girsanov log-weights, longitudinal gauge fixing,
and the ensemble generators the integrator consumes.

Every sample is a pure function of (parameters, seed, sample index): each
index gets its own counter-derived random stream, so results are bitwise
reproducible regardless of chunking or evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from .errors import BoundaryError, ShapeError
from .geometry import ClassicalTrajectory, Frame, MetricChart, exp_map
from .tube import DiscretePath, TubeSpec

Array = np.ndarray

# Below this norm the energy-cost gradient is defined to vanish (the cost has
# its minimum at zero displacement, where the radial quotient is 0/0).
CHI_FLOOR = 1e-12

GAUGE_TOL = 1e-12


def sample_rng(seed: int, index: int, *tags: int) -> np.random.Generator:
    """Independent random stream for one sample (and optional sub-stream tags)."""
    return np.random.default_rng((int(seed), int(index)) + tuple(int(t) for t in tags))


@dataclass
class SDEParams:
    """Diffusion-scale, stiffness, barrier and stepping parameters.

    ``xi`` may be a constant or a callable of time.  ``kappa`` switches the
    confining barrier (and per-step tube rejection) on; ``kappa = 0`` runs
    unconfined controls with exact bridge statistics.
    """

    sigma: float = 1.0
    xi: float | Callable[[float], float] = 0.0
    kappa: float = 0.0
    barrier_power: int = 2
    max_retries: int = 100
    scheme: str = "euler-maruyama"

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.kappa < 0.0:
            raise ValueError("kappa must be non-negative")
        if self.barrier_power < 2:
            raise ValueError("barrier power must be >= 2")
        if self.scheme != "euler-maruyama":
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def xi_at(self, t: Array) -> Array:
        if callable(self.xi):
            return np.asarray([float(self.xi(float(s))) for s in np.atleast_1d(t)])
        return np.full(np.shape(np.atleast_1d(t)), float(self.xi))


@dataclass
class FluctuationPath:
    """One sampled tube path in frame coordinates.

    ``normal_components`` holds chi^i(t_k) for the n-1 normal frame
    directions; ``longitudinal`` is the gauge-fixed scalar channel.
    ``action_integral`` is filled by the integrator when a density channel
    is evaluated on the assembled path.
    """

    grid: Array
    normal_components: Array   # (K+1, n-1)
    longitudinal: Array        # (K+1,)
    log_girsanov: float
    action_integral: float = math.nan
    in_tube: bool = True

    def __post_init__(self):
        k = len(self.grid)
        if self.normal_components.shape[0] != k or self.longitudinal.shape[0] != k:
            raise ShapeError("fluctuation channels must live on the trajectory grid")


def sample_brownian_bridge(dim: int, grid: Array, sigma: float,
                           rng: np.random.Generator) -> Array:
    """Pinned Wiener path W(t_k), exact in distribution at the grid nodes.

    Standard construction W(t) = B(t) - (t/T) B(T) from a fresh Wiener
    sample; both endpoints are exactly zero.
    """
    grid = np.asarray(grid, dtype=float)
    dts = np.diff(grid)
    if np.any(dts <= 0.0):
        raise ShapeError("grid must be strictly increasing")
    z = rng.standard_normal((len(dts), dim))
    b = np.vstack([np.zeros((1, dim)), np.cumsum(z * (sigma * np.sqrt(dts))[:, None], axis=0)])
    frac = (grid - grid[0]) / (grid[-1] - grid[0])
    return b - frac[:, None] * b[-1]


def _bridge_kernel_sequential(grid, dim, sigma, rng, radius=None, max_retries=0):
    """Bridge via the exact conditional one-step kernel, optionally rejecting
    steps that would leave |x| >= radius.

    Returns (path, hit_wall) where hit_wall marks an exhausted retry budget.
    The final step has zero variance, pinning the endpoint exactly.
    """
    grid = np.asarray(grid, dtype=float)
    n_nodes = len(grid)
    t_end = grid[-1]
    x = np.zeros((n_nodes, dim))
    hit_wall = False
    for k in range(n_nodes - 1):
        dt = grid[k + 1] - grid[k]
        alpha = (t_end - grid[k + 1]) / (t_end - grid[k])
        mean = alpha * x[k]
        sd = sigma * math.sqrt(dt * alpha)
        for attempt in range(max(1, max_retries)):
            step = mean + sd * rng.standard_normal(dim)
            if radius is None or float(np.linalg.norm(step)) < radius:
                break
        else:
            hit_wall = True
        x[k + 1] = step
    return x, hit_wall


def energy_cost(chart: MetricChart, traj: ClassicalTrajectory, t: float, v) -> float:
    """|H at gamma0(t) - H at the displaced point| with transported momentum.

    Parallel transport preserves the kinetic term (it is a g-isometry), so
    the cost reduces to the potential change at the displaced position.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    grid = traj.grid
    k = int(np.clip(np.searchsorted(grid, t), 0, len(grid) - 1))
    if k > 0 and abs(grid[k - 1] - t) < abs(grid[k] - t):
        k -= 1
    if abs(grid[k] - t) <= 1e-9 * max(1.0, traj.duration):
        q0 = traj.points[k]
    else:
        w = np.interp(t, grid, np.arange(len(grid), dtype=float))
        lo = int(np.floor(w))
        q0 = traj.points[lo] + (w - lo) * (traj.points[min(lo + 1, len(grid) - 1)] - traj.points[lo])
    displaced = exp_map(chart, q0, v)
    return float(abs(chart.potential_at(displaced) - chart.potential_at(q0)))


def barrier_gradient(r: float, spec: TubeSpec, params: SDEParams) -> float:
    """Radial derivative of the confining barrier kappa (r/R)^m / (1 - (r/R)^2).

    Smooth on [0, R) with a minimum at the center; diverges at the tube wall.
    """
    if r < 0.0:
        raise ValueError("radius coordinate must be non-negative")
    radius = spec.radius
    if r >= radius:
        raise BoundaryError(f"barrier evaluated at r = {r} >= radius {radius}")
    if params.kappa == 0.0:
        return 0.0
    u = r / radius
    m = params.barrier_power
    denom = 1.0 - u * u
    return (params.kappa / radius) * (m * u ** (m - 1) * denom + 2.0 * u ** (m + 1)) / (denom * denom)


def girsanov_log_weight(increments: Array, drifts: Array, dts: Array,
                        sigma: float = 1.0) -> float:
    """log dmu/dGamma along a sampled path (Ito sum, left-point drift).

    (1/sigma^2) sum b_k . dx_k  -  (1/(2 sigma^2)) sum |b_k|^2 dt_k,
    the exact likelihood ratio of the Euler-Maruyama chain with drift b
    against the driftless chain, so reweighted reference expectations
    reproduce drifted-law expectations and E[exp(weight)] = 1.
    """
    increments = np.atleast_2d(np.asarray(increments, dtype=float))
    drifts = np.atleast_2d(np.asarray(drifts, dtype=float))
    dts = np.asarray(dts, dtype=float)
    if increments.shape != drifts.shape or len(dts) != increments.shape[0]:
        raise ShapeError("increments, drifts and dts must align step-wise")
    s2 = sigma * sigma
    ito = np.einsum("ki,ki->", drifts, increments) / s2
    comp = 0.5 * np.einsum("ki,ki,k->", drifts, drifts, dts) / s2
    return float(ito - comp)


def gauge_fix_longitudinal(p_l: Array, grid: Array) -> Array:
    """Project the longitudinal channel onto the zero-time-mean surface.

    Subtracts the bump profile phi(t) = 4 t (T - t) / T^2 scaled so the
    trapezoid integral vanishes; endpoints stay exactly pinned and the
    projection is idempotent.  The determinant of this linear gauge
    condition is field-independent and absorbed as a constant.
    """
    p_l = np.asarray(p_l, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if p_l.shape != grid.shape:
        raise ShapeError("longitudinal channel and grid must align")
    t0, t1 = grid[0], grid[-1]
    span = t1 - t0
    phi = 4.0 * (grid - t0) * (t1 - grid) / (span * span)
    num = np.trapezoid(p_l, grid)
    den = np.trapezoid(phi, grid)
    return p_l - (num / den) * phi


def _embedding_matrices(frame: Frame) -> Array:
    """(K+1, n, n-1) matrices whose columns are the normal frame vectors."""
    idx = frame.normal_indices()
    return frame.vectors[:, :, idx]


class _NormalDrift:
    """Precomputed drift evaluator -(1/sigma^2) grad U for the normal channels.

    U = xi(t)|chi|^2/2 + E_c(chi) + barrier(|chi|); the energy-cost gradient
    comes from central differences of the potential at displaced points and
    is defined as zero at the origin.
    """

    def __init__(self, chart: MetricChart, frame: Frame, traj: ClassicalTrajectory,
                 spec: TubeSpec, params: SDEParams):
        self.chart = chart
        self.frame = frame
        self.traj = traj
        self.spec = spec
        self.params = params
        self.s2 = params.sigma ** 2
        self.xi_vals = params.xi_at(frame.grid)
        self.emb = _embedding_matrices(frame)      # (K+1, n, d)
        self.has_cost = not _is_free_potential(chart, traj)
        self.v_base = chart.potential_at(traj.points) if chart.is_flat else None

    def _grad_cost_rows(self, rows: Array, chis: Array) -> Array:
        """Energy-cost gradient at the given node rows, chis (m, d)."""
        m, d = chis.shape
        grad = np.zeros_like(chis)
        emb = self.emb[rows]
        if self.chart.is_flat:
            base = self.traj.points[rows]
            vb = self.v_base[rows]
            disp = base + np.einsum("knd,kd->kn", emb, chis)
            for j in range(d):
                h = 1e-6 * (1.0 + np.abs(chis[:, j]))
                ec_p = np.abs(self.chart.potential_at(disp + h[:, None] * emb[:, :, j]) - vb)
                ec_m = np.abs(self.chart.potential_at(disp - h[:, None] * emb[:, :, j]) - vb)
                grad[:, j] = (ec_p - ec_m) / (2.0 * h)
        else:
            grid = self.frame.grid
            for i, k in enumerate(np.atleast_1d(rows)):
                for j in range(d):
                    h = 1e-6 * (1.0 + abs(chis[i, j]))
                    cp = chis[i].copy(); cp[j] += h
                    cm = chis[i].copy(); cm[j] -= h
                    ec_p = energy_cost(self.chart, self.traj, grid[k], emb[i] @ cp)
                    ec_m = energy_cost(self.chart, self.traj, grid[k], emb[i] @ cm)
                    grad[i, j] = (ec_p - ec_m) / (2.0 * h)
        norms = np.linalg.norm(chis, axis=1)
        grad[norms < CHI_FLOOR] = 0.0
        return grad

    def at_rows(self, rows: Array, chis: Array) -> Array:
        """Drift at the given node rows; chis has shape (len(rows), d)."""
        drift = -(self.xi_vals[rows][:, None] / self.s2) * chis
        if self.has_cost and chis.shape[1] > 0:
            drift -= self._grad_cost_rows(rows, chis) / self.s2
        if self.params.kappa > 0.0 and chis.shape[1] > 0:
            norms = np.linalg.norm(chis, axis=1)
            for i in range(len(chis)):
                # Wall-touching nodes only occur on retry-exhausted paths,
                # whose weight is zeroed anyway; skip the divergent barrier.
                if CHI_FLOOR <= norms[i] < self.spec.radius:
                    drift[i] -= (barrier_gradient(norms[i], self.spec, self.params)
                                 / self.s2) * (chis[i] / norms[i])
        return drift

    def at_node(self, k: int, chi: Array) -> Array:
        return self.at_rows(np.array([k]), chi[None, :])[0]

    def along_path(self, chis: Array) -> Array:
        return self.at_rows(np.arange(len(chis)), chis)


def _is_free_potential(chart: MetricChart, traj: ClassicalTrajectory) -> bool:
    probe = traj.points[:: max(1, len(traj.points) // 8)]
    vals = chart.potential_at(probe)
    return bool(np.all(vals == vals.flat[0])) and bool(
        np.all(chart.potential_at(probe + 0.01) == vals.flat[0])
    )


def simulate_fluctuation(
    chart: MetricChart,
    frame: Frame,
    spec: TubeSpec,
    params: SDEParams,
    rng: np.random.Generator,
    *,
    drive: str = "weighted",
) -> FluctuationPath:
    """Sample one fluctuation path on the trajectory grid.

    ``weighted`` (default): the normal channels are exact Brownian bridges
    and the drift enters only through the Girsanov log-weight; this is the
    change-of-measure representation the integrator uses for expectations.
    ``drifted``: the drift is applied to the path itself through the guided
    bridge kernel (diffusion-bridge approximation); the log-weight is then a
    diagnostic along the realized path.

    With kappa > 0 each step is redrawn (up to ``max_retries``) while it
    would leave the tube; an exhausted budget flags ``in_tube = False`` and
    zeroes the sample's weight rather than truncating the path.
    """
    if drive not in ("weighted", "drifted"):
        raise ValueError(f"unknown drive {drive!r}")
    traj = spec.trajectory
    if not np.array_equal(frame.grid, traj.grid):
        raise ShapeError("frame and trajectory grids differ")
    grid = traj.grid
    dts = np.diff(grid)
    n = chart.dim
    d = n - 1
    sigma = params.sigma
    hit_wall = False

    if d == 0:
        chi = np.zeros((len(grid), 0))
        logw = 0.0
    elif drive == "weighted" and params.kappa == 0.0:
        chi = sample_brownian_bridge(d, grid, sigma, rng)
        drift = _NormalDrift(chart, frame, traj, spec, params)
        logw = girsanov_log_weight(np.diff(chi, axis=0),
                                   drift.along_path(chi)[:-1], dts, sigma)
    else:
        drift = _NormalDrift(chart, frame, traj, spec, params)
        radius = spec.radius if params.kappa > 0.0 else None
        t_end = grid[-1]
        chi = np.zeros((len(grid), d))
        drifts = np.zeros((len(dts), d))
        for k in range(len(dts)):
            dt = dts[k]
            alpha = (t_end - grid[k + 1]) / (t_end - grid[k])
            b_k = drift.at_node(k, chi[k])
            drifts[k] = b_k
            pulled = chi[k] + (b_k * dt if drive == "drifted" else 0.0)
            mean = alpha * pulled
            sd = sigma * math.sqrt(dt * alpha)
            for _ in range(max(1, params.max_retries)):
                step = mean + sd * rng.standard_normal(d)
                if radius is None or float(np.linalg.norm(step)) < radius:
                    break
            else:
                hit_wall = True
            chi[k + 1] = step
        logw = girsanov_log_weight(np.diff(chi, axis=0), drifts, dts, sigma)

    max_norm = float(np.max(np.linalg.norm(chi, axis=1))) if d > 0 else 0.0
    in_tube = (max_norm < spec.radius) and not hit_wall
    if params.kappa > 0.0 and not in_tube:
        logw = -math.inf  # barrier measure puts no mass on wall-touching paths

    raw_l = sample_brownian_bridge(1, grid, sigma, rng)[:, 0]
    p_l = gauge_fix_longitudinal(raw_l, grid)

    return FluctuationPath(
        grid=grid,
        normal_components=chi,
        longitudinal=p_l,
        log_girsanov=float(logw),
        in_tube=bool(in_tube),
    )


def sample_free_diffusion(
    chart: MetricChart,
    traj: ClassicalTrajectory,
    params: SDEParams,
    rng: np.random.Generator,
    start,
    *,
    drift: Optional[Callable[[float, Array], Array]] = None,
) -> Array:
    """Euler-Maruyama displacement path with a free terminal point.

    Used for the Feynman-Kac expectations, whose defining law starts at
    ``start`` and is not pinned at T.  ``drift`` is an optional callable
    (t, u) -> drift vector; None means driftless diffusion at scale sigma.
    """
    grid = traj.grid
    dts = np.diff(grid)
    n = chart.dim
    u0 = np.atleast_1d(np.asarray(start, dtype=float))
    noise = rng.standard_normal((len(dts), n))
    if drift is None:
        steps = noise * (params.sigma * np.sqrt(dts))[:, None]
        return u0 + np.vstack([np.zeros((1, n)), np.cumsum(steps, axis=0)])
    u = np.empty((len(grid), n))
    u[0] = u0
    for k, dt in enumerate(dts):
        b = np.asarray(drift(float(grid[k]), u[k]), dtype=float)
        u[k + 1] = u[k] + b * dt + params.sigma * math.sqrt(dt) * noise[k]
    return u


def displacement_field(frame: Frame, traj: ClassicalTrajectory,
                       fluct: FluctuationPath, v_tol: float = 1e-10) -> Array:
    """Tangent-space displacement u(t_k) encoded by a fluctuation path.

    Normal channels ride their frame vectors; the longitudinal channel
    multiplies the trajectory velocity, falling back to the frozen unit
    tangent axis wherever the trajectory is at rest (a rest trajectory has
    no reparameterization freedom, so that axis is an ordinary direction).
    """
    emb = _embedding_matrices(frame)
    u = np.einsum("knd,kd->kn", emb, fluct.normal_components)
    speeds = np.linalg.norm(traj.velocities, axis=1)
    tangent = frame.vectors[:, :, frame.tangent_index]
    long_dir = np.where(speeds[:, None] >= v_tol, traj.velocities, tangent)
    return u + fluct.longitudinal[:, None] * long_dir


def assemble_path(traj: ClassicalTrajectory, frame: Frame, fluct: FluctuationPath,
                  chart: MetricChart | None = None) -> DiscretePath:
    """Configuration-space path exp_{gamma0(t)}(displacement)."""
    u = displacement_field(frame, traj, fluct)
    if chart is None or chart.is_flat:
        pts = traj.points + u
    else:
        pts = np.array([
            exp_map(chart, traj.points[k], u[k]) for k in range(len(traj.grid))
        ])
    return DiscretePath(grid=traj.grid, points=pts)


# ---------------------------------------------------------------------------
# Ensembles: deterministic per-(seed, index) sample streams.

@dataclass(frozen=True)
class Sample:
    """One Monte Carlo draw: assembled path, weight and bookkeeping."""

    index: int
    x: Array            # (K+1, n) configuration-space path
    log_weight: float   # log Girsanov factor (0 for unweighted ensembles)
    in_tube: bool
    fluct: Optional[FluctuationPath] = None


class TubeEnsemble:
    """Pinned fluctuation paths around the tube's classical trajectory."""

    def __init__(self, chart: MetricChart, frame: Frame, spec: TubeSpec,
                 params: SDEParams, seed: int, n_samples: int,
                 drive: str = "weighted"):
        if n_samples < 1:
            raise ValueError("need at least one sample")
        self.chart = chart
        self.frame = frame
        self.spec = spec
        self.params = params
        self.seed = int(seed)
        self.n_samples = int(n_samples)
        self.drive = drive

    @property
    def grid(self) -> Array:
        return self.spec.trajectory.grid

    @property
    def gamma0(self) -> Array:
        return self.spec.trajectory.points

    def iter_samples(self) -> Iterator[Sample]:
        traj = self.spec.trajectory
        for i in range(self.n_samples):
            rng = sample_rng(self.seed, i)
            fl = simulate_fluctuation(self.chart, self.frame, self.spec,
                                      self.params, rng, drive=self.drive)
            path = assemble_path(traj, self.frame, fl, self.chart)
            yield Sample(index=i, x=path.points, log_weight=fl.log_girsanov,
                         in_tube=fl.in_tube, fluct=fl)


class FreeDiffusionEnsemble:
    """Free-endpoint diffusion started at gamma0(0) + start displacement."""

    def __init__(self, chart: MetricChart, spec: TubeSpec, params: SDEParams,
                 seed: int, n_samples: int, start=None,
                 drift: Optional[Callable[[float, Array], Array]] = None):
        if n_samples < 1:
            raise ValueError("need at least one sample")
        self.chart = chart
        self.spec = spec
        self.params = params
        self.seed = int(seed)
        self.n_samples = int(n_samples)
        self.start = (np.zeros(chart.dim) if start is None
                      else np.atleast_1d(np.asarray(start, dtype=float)))
        self.drift = drift

    @property
    def grid(self) -> Array:
        return self.spec.trajectory.grid

    @property
    def gamma0(self) -> Array:
        return self.spec.trajectory.points

    def iter_samples(self) -> Iterator[Sample]:
        traj = self.spec.trajectory
        for i in range(self.n_samples):
            rng = sample_rng(self.seed, i)
            u = sample_free_diffusion(self.chart, traj, self.params, rng,
                                      self.start, drift=self.drift)
            if self.chart.is_flat:
                pts = traj.points + u
            else:
                pts = np.array([
                    exp_map(self.chart, traj.points[k], u[k])
                    for k in range(len(traj.grid))
                ])
            yield Sample(index=i, x=pts, log_weight=0.0, in_tube=True)


class DisplacementBridgeEnsemble:
    """Full n-dimensional displacement bridges around the classical trajectory.

    The kernel estimator's path model: X = exp_{gamma0}(W) with W a pinned
    Wiener path at scale sigma, optionally tube-confined when kappa > 0.
    The normal/longitudinal split does not apply here; all n directions
    fluctuate, which is what the endpoint-kernel factorization requires.
    """

    def __init__(self, chart: MetricChart, spec: TubeSpec, params: SDEParams,
                 seed: int, n_samples: int):
        if n_samples < 1:
            raise ValueError("need at least one sample")
        self.chart = chart
        self.spec = spec
        self.params = params
        self.seed = int(seed)
        self.n_samples = int(n_samples)

    @property
    def grid(self) -> Array:
        return self.spec.trajectory.grid

    @property
    def gamma0(self) -> Array:
        return self.spec.trajectory.points

    def iter_samples(self) -> Iterator[Sample]:
        traj = self.spec.trajectory
        n = self.chart.dim
        confined = self.params.kappa > 0.0
        for i in range(self.n_samples):
            rng = sample_rng(self.seed, i)
            if confined:
                w, hit_wall = _bridge_kernel_sequential(
                    traj.grid, n, self.params.sigma, rng,
                    radius=self.spec.radius, max_retries=self.params.max_retries,
                )
                in_tube = not hit_wall
            else:
                w = sample_brownian_bridge(n, traj.grid, self.params.sigma, rng)
                in_tube = bool(np.max(np.linalg.norm(w, axis=1)) < self.spec.radius)
            if self.chart.is_flat:
                pts = traj.points + w
            else:
                pts = np.array([
                    exp_map(self.chart, traj.points[k], w[k])
                    for k in range(len(traj.grid))
                ])
            yield Sample(index=i, x=pts, log_weight=0.0, in_tube=in_tube)
