"""Configuration-space primitives.

Metric charts, Hamiltonian boundary-value trajectories, exponential and
logarithm maps, and parallel-orthonormal frames along a trajectory.

Charts are single global coordinate patches on R^n.  The flat chart
(identity metric) is exact; curved charts take a user metric function and
get Christoffel symbols from central finite differences of the metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    DegenerateMetricError,
    FrameError,
    OutOfChartError,
    StepSizeError,
    TrajectoryError,
)

Array = np.ndarray

# Below this g-norm of the velocity the tangent direction is frozen rather
# than normalized (rest trajectories, turning points).
V_TOL = 1e-10

# Componentwise finite-difference scale; grows with |q| to balance
# truncation against double-precision rounding.
FD_SCALE = 1e-5


def _fd_steps(q: Array) -> Array:
    return FD_SCALE * (1.0 + np.abs(q))


@dataclass(frozen=True)
class MetricChart:
    """A global coordinate chart: metric g_ij(q), potential V(q), dimension.

    ``potential`` must be vectorized over leading axes: it receives arrays of
    shape (..., dim) and returns shape (...).  ``metric`` (curved charts only)
    maps a single point (dim,) to a symmetric positive-definite (dim, dim)
    matrix.  ``grad_potential`` is optional; central finite differences are
    used when it is absent.
    """

    dim: int
    potential: Callable[[Array], Array]
    metric: Optional[Callable[[Array], Array]] = None
    grad_potential: Optional[Callable[[Array], Array]] = None
    name: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("chart dimension must be >= 1")

    @property
    def is_flat(self) -> bool:
        return self.metric is None

    @property
    def kind(self) -> str:
        return "flat" if self.is_flat else "user"

    def metric_at(self, q: Array) -> Array:
        if self.is_flat:
            return np.eye(self.dim)
        g = np.asarray(self.metric(np.asarray(q, dtype=float)), dtype=float)
        if g.shape != (self.dim, self.dim):
            raise DegenerateMetricError(
                f"metric returned shape {g.shape}, expected {(self.dim, self.dim)}"
            )
        return g

    def inverse_metric_at(self, q: Array) -> Array:
        if self.is_flat:
            return np.eye(self.dim)
        g = self.metric_at(q)
        try:
            return np.linalg.inv(g)
        except np.linalg.LinAlgError as exc:
            raise DegenerateMetricError(f"singular metric at q={q!r}") from exc

    def potential_at(self, q: Array) -> Array:
        return np.asarray(self.potential(np.asarray(q, dtype=float)), dtype=float)

    def grad_potential_at(self, q: Array) -> Array:
        """Gradient of V, vectorized over leading axes of q."""
        q = np.asarray(q, dtype=float)
        if self.grad_potential is not None:
            return np.asarray(self.grad_potential(q), dtype=float)
        grad = np.empty_like(q)
        for j in range(self.dim):
            h = FD_SCALE * (1.0 + np.abs(q[..., j]))
            qp = q.copy()
            qm = q.copy()
            qp[..., j] += h
            qm[..., j] -= h
            grad[..., j] = (self.potential_at(qp) - self.potential_at(qm)) / (2.0 * h)
        return grad


def flat_chart(dim: int, potential=None, grad_potential=None, name="flat") -> MetricChart:
    """Flat chart; V defaults to zero."""
    if potential is None:
        potential = lambda q: np.zeros(np.shape(q)[:-1])
        grad_potential = lambda q: np.zeros_like(q)
    return MetricChart(dim=dim, potential=potential, grad_potential=grad_potential, name=name)


def validate_metric(chart: MetricChart, points: Array, tol: float = 1e-12) -> None:
    """Check symmetry and positive-definiteness of g at the sampled points."""
    if chart.is_flat:
        return
    for q in np.atleast_2d(points):
        g = chart.metric_at(q)
        if not np.allclose(g, g.T, atol=1e-10, rtol=0.0):
            raise DegenerateMetricError(f"metric not symmetric at q={q!r}")
        if np.linalg.eigvalsh(g).min() < tol:
            raise DegenerateMetricError(f"metric not positive-definite at q={q!r}")


def christoffel(chart: MetricChart, q: Array) -> Array:
    """Christoffel symbols Gamma^k_ij at q, shape (dim, dim, dim).

    Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij); the metric
    derivatives come from central finite differences.  Exactly zero for the
    flat chart.
    """
    n = chart.dim
    q = np.asarray(q, dtype=float)
    if chart.is_flat:
        return np.zeros((n, n, n))
    ginv = chart.inverse_metric_at(q)
    dg = np.empty((n, n, n))  # dg[l, i, j] = d_l g_ij
    h = _fd_steps(q)
    for l in range(n):
        qp = q.copy()
        qm = q.copy()
        qp[l] += h[l]
        qm[l] -= h[l]
        dg[l] = (chart.metric_at(qp) - chart.metric_at(qm)) / (2.0 * h[l])
    # bracket[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    bracket = np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg
    return 0.5 * np.einsum("kl,lij->kij", ginv, bracket)


def hamiltonian(chart: MetricChart, q: Array, p: Array) -> float:
    """H(q, p) = 1/2 p . g^{-1}(q) . p + V(q)."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if chart.is_flat:
        kinetic = 0.5 * float(p @ p)
    else:
        kinetic = 0.5 * float(p @ chart.inverse_metric_at(q) @ p)
    return kinetic + float(chart.potential_at(q))


def hamiltonian_batch(chart: MetricChart, qs: Array, ps: Array) -> Array:
    """H evaluated at each row of (qs, ps)."""
    qs = np.atleast_2d(np.asarray(qs, dtype=float))
    ps = np.atleast_2d(np.asarray(ps, dtype=float))
    if chart.is_flat:
        return 0.5 * np.einsum("ki,ki->k", ps, ps) + chart.potential_at(qs)
    return np.array([hamiltonian(chart, q, p) for q, p in zip(qs, ps)])


@dataclass(frozen=True)
class ClassicalTrajectory:
    """Discretized solution of Hamilton's equations joining A to B in time T."""

    grid: Array                # (K+1,) strictly increasing, grid[0] = 0
    points: Array              # (K+1, n)
    velocities: Array          # (K+1, n)  qdot = g^{-1} p
    momenta: Array             # (K+1, n)
    energy: float              # H(q_0, p_0), conserved along the solve

    def __post_init__(self):
        if self.grid.ndim != 1 or len(self.grid) < 2:
            raise ValueError("grid must hold at least two nodes")
        if np.any(np.diff(self.grid) <= 0.0):
            raise ValueError("grid must be strictly increasing")

    @property
    def duration(self) -> float:
        return float(self.grid[-1])

    @property
    def start(self) -> Array:
        return self.points[0]

    @property
    def end(self) -> Array:
        return self.points[-1]


def _hamilton_rhs(chart: MetricChart, q: Array, p: Array) -> tuple[Array, Array]:
    if chart.is_flat:
        return p.copy(), -chart.grad_potential_at(q)
    ginv = chart.inverse_metric_at(q)
    qdot = ginv @ p
    # pdot_k = +1/2 (g^{-1} d_k g g^{-1})_{ij} p_i p_j - d_k V
    n = chart.dim
    pdot = -chart.grad_potential_at(q)
    h = _fd_steps(q)
    for k in range(n):
        qp = q.copy()
        qm = q.copy()
        qp[k] += h[k]
        qm[k] -= h[k]
        dgk = (chart.metric_at(qp) - chart.metric_at(qm)) / (2.0 * h[k])
        w = ginv @ p
        pdot[k] += 0.5 * float(w @ dgk @ w)
    return qdot, pdot


def integrate_hamilton(chart: MetricChart, q0: Array, p0: Array, grid: Array):
    """Classical RK4 sweep of Hamilton's equations over the given time grid.

    Returns (points, momenta), each of shape (K+1, n).
    """
    q = np.asarray(q0, dtype=float).copy()
    p = np.asarray(p0, dtype=float).copy()
    pts = np.empty((len(grid), chart.dim))
    mom = np.empty_like(pts)
    pts[0], mom[0] = q, p
    for k in range(len(grid) - 1):
        dt = grid[k + 1] - grid[k]
        k1q, k1p = _hamilton_rhs(chart, q, p)
        k2q, k2p = _hamilton_rhs(chart, q + 0.5 * dt * k1q, p + 0.5 * dt * k1p)
        k3q, k3p = _hamilton_rhs(chart, q + 0.5 * dt * k2q, p + 0.5 * dt * k2p)
        k4q, k4p = _hamilton_rhs(chart, q + dt * k3q, p + dt * k3p)
        q = q + (dt / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        p = p + (dt / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        pts[k + 1], mom[k + 1] = q, p
    return pts, mom


def _trajectory_from_shot(chart, grid, pts, mom, energy_drift_tol):
    vel = np.empty_like(pts)
    if chart.is_flat:
        vel[:] = mom
    else:
        for k in range(len(grid)):
            vel[k] = chart.inverse_metric_at(pts[k]) @ mom[k]
    e0 = hamiltonian(chart, pts[0], mom[0])
    drift = max(abs(hamiltonian(chart, pts[k], mom[k]) - e0) for k in range(len(grid)))
    if drift > energy_drift_tol * (1.0 + abs(e0)):
        raise StepSizeError(
            f"energy drift {drift:.3e} exceeds tolerance; refine the grid (steps={len(grid) - 1})"
        )
    return ClassicalTrajectory(grid=grid, points=pts, velocities=vel, momenta=mom, energy=e0)


def energy_drift(chart: MetricChart, traj: ClassicalTrajectory) -> float:
    """max_k |H(q_k, p_k) - E0| along the trajectory."""
    hs = hamiltonian_batch(chart, traj.points, traj.momenta)
    return float(np.max(np.abs(hs - traj.energy)))


def solve_classical_trajectory(
    chart: MetricChart,
    a,
    b,
    duration: float,
    *,
    steps: int = 128,
    momentum_seed=None,
    solver: str = "shooting",
    energy: float | None = None,
    bvp_tol: float = 1e-8,
    max_iter: int = 40,
    energy_drift_tol: float = 1e-6,
) -> ClassicalTrajectory:
    """Boundary-value trajectory from a to b.

    ``shooting`` runs damped Newton on the initial momentum until
    |q(T) - b| <= bvp_tol * (1 + |b|).  Multiple solutions (oscillator
    branches) are disambiguated by ``momentum_seed``.  ``fixed-energy``
    (dim 1 only) puts the initial momentum on the energy shell H = energy
    and locates the arrival time at b by bisection; the supplied duration
    seeds the search window and the returned trajectory carries its own T.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != (chart.dim,) or b.shape != (chart.dim,):
        raise ValueError("endpoint dimension does not match the chart")
    if duration <= 0.0:
        raise ValueError("duration must be positive")
    if steps < 16:
        raise ValueError("grid resolution must be at least 16 steps")

    if solver == "fixed-energy":
        return _solve_fixed_energy(
            chart, a, b, duration, steps, momentum_seed, energy,
            bvp_tol, energy_drift_tol,
        )
    if solver != "shooting":
        raise ValueError(f"unknown solver {solver!r}")

    grid = np.linspace(0.0, duration, steps + 1)
    if momentum_seed is None:
        p0 = chart.metric_at(a) @ ((b - a) / duration)
    else:
        p0 = np.atleast_1d(np.asarray(momentum_seed, dtype=float)).copy()

    def shoot(p):
        pts, mom = integrate_hamilton(chart, a, p, grid)
        return pts, mom, pts[-1] - b

    pts, mom, res = shoot(p0)
    tol = bvp_tol * (1.0 + np.linalg.norm(b))
    for it in range(max_iter + 1):
        rnorm = float(np.linalg.norm(res))
        if rnorm <= tol:
            break
        if it == max_iter:
            raise TrajectoryError(
                f"shooting did not converge in {max_iter} iterations "
                f"(residual {rnorm:.3e})",
                residual=rnorm,
            )
        # Finite-difference Jacobian d q(T) / d p0, one shot per column.
        jac = np.empty((chart.dim, chart.dim))
        for j in range(chart.dim):
            h = FD_SCALE * (1.0 + abs(p0[j]))
            pp = p0.copy()
            pp[j] += h
            jac[:, j] = (shoot(pp)[2] - res) / h
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        lam = 1.0
        for _ in range(10):
            cand = p0 + lam * step
            pts_c, mom_c, res_c = shoot(cand)
            if np.linalg.norm(res_c) < rnorm:
                p0, pts, mom, res = cand, pts_c, mom_c, res_c
                break
            lam *= 0.5
        else:
            raise TrajectoryError(
                f"shooting stalled at residual {rnorm:.3e}", residual=rnorm
            )
    # Pin the endpoints exactly; the solve left them within bvp_tol.
    pts[0], pts[-1] = a, b
    return _trajectory_from_shot(chart, grid, pts, mom, energy_drift_tol)


def _solve_fixed_energy(chart, a, b, duration, steps, momentum_seed, energy,
                        bvp_tol, energy_drift_tol):
    if chart.dim != 1:
        raise TrajectoryError("fixed-energy solver supports dim 1 only")
    if energy is None:
        raise ValueError("fixed-energy solver needs the target energy")
    v0 = float(chart.potential_at(a))
    if energy < v0:
        raise TrajectoryError(f"energy {energy} below V(a) = {v0}: shell is empty")
    gaa = float(chart.metric_at(a)[0, 0])
    pmag = np.sqrt(2.0 * (energy - v0) * gaa)
    sign = 1.0
    if momentum_seed is not None and float(np.atleast_1d(momentum_seed)[0]) < 0.0:
        sign = -1.0
    p0 = np.array([sign * pmag])

    horizon = 3.0 * duration
    scan = np.linspace(0.0, horizon, max(steps * 4, 256) + 1)
    pts, _ = integrate_hamilton(chart, a, p0, scan)
    offs = pts[:, 0] - b[0]
    hit = None
    for k in range(len(scan) - 1):
        if offs[k] == 0.0:
            hit = scan[k]
            break
        if offs[k] * offs[k + 1] < 0.0:
            lo, hi = scan[k], scan[k + 1]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                gmid = np.linspace(0.0, mid, steps + 1)
                qm = integrate_hamilton(chart, a, p0, gmid)[0][-1, 0] - b[0]
                if offs[k] * qm <= 0.0:
                    hi = mid
                else:
                    lo = mid
            hit = 0.5 * (lo + hi)
            break
    if hit is None or hit <= 0.0:
        raise TrajectoryError(
            f"no arrival at b within t <= {horizon}", residual=float(np.min(np.abs(offs)))
        )
    grid = np.linspace(0.0, hit, steps + 1)
    pts, mom = integrate_hamilton(chart, a, p0, grid)
    if abs(pts[-1, 0] - b[0]) > max(bvp_tol * (1.0 + abs(b[0])), 1e-7):
        raise TrajectoryError("fixed-energy arrival refinement failed",
                              residual=float(abs(pts[-1, 0] - b[0])))
    pts[0], pts[-1] = a, b
    return _trajectory_from_shot(chart, grid, pts, mom, energy_drift_tol)


@dataclass(frozen=True)
class Frame:
    """g-orthonormal frame E_i(t_k) along a trajectory, columns of ``vectors``.

    ``tangent_index`` is the column that started along the normalized initial
    velocity (frozen axis for rest trajectories).  ``connection`` holds the
    measured coefficients Omega_ij(t_k) = g(nabla_t E_i, E_j); for parallel
    transport these vanish up to discretization error.
    """

    grid: Array            # (K+1,)
    vectors: Array         # (K+1, n, n)
    tangent_index: int
    connection: Array      # (K+1, n, n)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def normal_indices(self) -> list[int]:
        return [i for i in range(self.dim) if i != self.tangent_index]


def _gram_schmidt(g: Array, cols: Array) -> Array:
    """g-orthonormalize the columns of ``cols`` in order."""
    n = cols.shape[0]
    out = cols.astype(float).copy()
    for i in range(n):
        for j in range(i):
            out[:, i] -= (out[:, j] @ g @ out[:, i]) * out[:, j]
        nrm = np.sqrt(out[:, i] @ g @ out[:, i])
        if nrm < 1e-14:
            raise FrameError("degenerate direction during Gram-Schmidt")
        out[:, i] /= nrm
    return out


def _interp_rows(grid: Array, values: Array, t: float) -> Array:
    """Linear interpolation of (K+1, ...) values at time t."""
    k = np.clip(np.searchsorted(grid, t) - 1, 0, len(grid) - 2)
    w = (t - grid[k]) / (grid[k + 1] - grid[k])
    return (1.0 - w) * values[k] + w * values[k + 1]


def parallel_frame(
    chart: MetricChart,
    traj: ClassicalTrajectory,
    *,
    reortho_every: int = 8,
    frame_tol: float | None = None,
) -> Frame:
    """Parallel-orthonormal frame along the trajectory.

    The initial frame is the g-Gram-Schmidt completion of the normalized
    initial velocity (an arbitrary fixed axis when the start is at rest);
    each column is transported by Edot = -Gamma(qdot) E with RK4 and
    re-orthonormalized every ``reortho_every`` nodes.
    """
    n = chart.dim
    grid = traj.grid
    if frame_tol is None:
        frame_tol = 1e-8 if chart.is_flat else 1e-6

    g0 = chart.metric_at(traj.points[0])
    v0 = traj.velocities[0]
    if np.sqrt(v0 @ g0 @ v0) < V_TOL:
        v0 = np.eye(n)[:, 0]
    seed = np.column_stack([v0] + [np.eye(n)[:, j] for j in range(n)])
    # Drop whichever axis is linearly dependent on the leading velocity.
    cols = [seed[:, 0]]
    for j in range(1, seed.shape[1]):
        if len(cols) == n:
            break
        trial = np.column_stack(cols + [seed[:, j]])
        if np.linalg.matrix_rank(trial, tol=1e-12) == len(cols) + 1:
            cols.append(seed[:, j])
    frame0 = _gram_schmidt(g0, np.column_stack(cols))

    vectors = np.empty((len(grid), n, n))
    vectors[0] = frame0

    if chart.is_flat:
        vectors[:] = frame0  # zero Christoffels: the frame is constant
        connection = np.zeros((len(grid), n, n))
        return Frame(grid=grid, vectors=vectors, tangent_index=0, connection=connection)

    def transport_rhs(t, e_mat):
        q = _interp_rows(grid, traj.points, t)
        v = _interp_rows(grid, traj.velocities, t)
        gam = christoffel(chart, q)
        return -np.einsum("kij,i,jc->kc", gam, v, e_mat)

    e = frame0.copy()
    for k in range(len(grid) - 1):
        t, dt = grid[k], grid[k + 1] - grid[k]
        k1 = transport_rhs(t, e)
        k2 = transport_rhs(t + 0.5 * dt, e + 0.5 * dt * k1)
        k3 = transport_rhs(t + 0.5 * dt, e + 0.5 * dt * k2)
        k4 = transport_rhs(t + dt, e + dt * k3)
        e = e + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (k + 1) % reortho_every == 0 or k + 1 == len(grid) - 1:
            e = _gram_schmidt(chart.metric_at(traj.points[k + 1]), e)
        vectors[k + 1] = e

    worst = 0.0
    for k in range(len(grid)):
        g = chart.metric_at(traj.points[k])
        gram = vectors[k].T @ g @ vectors[k]
        worst = max(worst, float(np.max(np.abs(gram - np.eye(n)))))
    if worst > frame_tol:
        raise FrameError(
            f"frame drifted to orthonormality defect {worst:.3e} (> {frame_tol:.1e})"
        )

    connection = _measure_connection(chart, traj, vectors)
    return Frame(grid=grid, vectors=vectors, tangent_index=0, connection=connection)


def _measure_connection(chart, traj, vectors):
    """Omega_ij(t_k) = g(nabla_t E_i, E_j), from central differences."""
    grid = traj.grid
    n = vectors.shape[1]
    de = np.gradient(vectors, grid, axis=0, edge_order=2)
    omega = np.empty_like(vectors)
    for k in range(len(grid)):
        g = chart.metric_at(traj.points[k])
        cov = de[k]
        if not chart.is_flat:
            gam = christoffel(chart, traj.points[k])
            cov = cov + np.einsum("kij,i,jc->kc", gam, traj.velocities[k], vectors[k])
        omega[k] = cov.T @ g @ vectors[k]  # omega[k][i, j] = g(nabla_t E_i, E_j)
    return omega


def _geodesic_rhs(chart, q, u):
    gam = christoffel(chart, q)
    return u, -np.einsum("kij,i,j->k", gam, u, u)


def exp_map(chart: MetricChart, base, v, *, rho_inj: float | None = None,
            steps: int = 32) -> Array:
    """Riemannian exponential: follow the geodesic from base with velocity v.

    Exact (base + v) on the flat chart; RK4 geodesic integration otherwise.
    """
    base = np.atleast_1d(np.asarray(base, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if chart.is_flat:
        return base + v
    g = chart.metric_at(base)
    vnorm = float(np.sqrt(v @ g @ v))
    if rho_inj is not None and vnorm >= rho_inj:
        raise OutOfChartError(f"|v|_g = {vnorm:.3e} exceeds injectivity guard {rho_inj}")
    q, u = base.copy(), v.copy()
    dt = 1.0 / steps
    for _ in range(steps):
        k1q, k1u = _geodesic_rhs(chart, q, u)
        k2q, k2u = _geodesic_rhs(chart, q + 0.5 * dt * k1q, u + 0.5 * dt * k1u)
        k3q, k3u = _geodesic_rhs(chart, q + 0.5 * dt * k2q, u + 0.5 * dt * k2u)
        k4q, k4u = _geodesic_rhs(chart, q + dt * k3q, u + dt * k3u)
        q = q + (dt / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        u = u + (dt / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    return q


def log_map(chart: MetricChart, base, target, *, tol: float = 1e-11,
            max_iter: int = 40, steps: int = 32) -> Array:
    """Inverse of exp_map by damped Newton shooting on the initial velocity."""
    base = np.atleast_1d(np.asarray(base, dtype=float))
    target = np.atleast_1d(np.asarray(target, dtype=float))
    if chart.is_flat:
        return target - base
    v = target - base
    scale = 1.0 + np.linalg.norm(target - base)
    res = exp_map(chart, base, v, steps=steps) - target
    for _ in range(max_iter):
        rnorm = np.linalg.norm(res)
        if rnorm <= tol * scale:
            return v
        jac = np.empty((chart.dim, chart.dim))
        for j in range(chart.dim):
            h = FD_SCALE * (1.0 + abs(v[j]))
            vp = v.copy()
            vp[j] += h
            jac[:, j] = (exp_map(chart, base, vp, steps=steps) - target - res) / h
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        lam = 1.0
        for _ in range(10):
            cand = v + lam * step
            res_c = exp_map(chart, base, cand, steps=steps) - target
            if np.linalg.norm(res_c) < rnorm:
                v, res = cand, res_c
                break
            lam *= 0.5
        else:
            raise OutOfChartError(f"log map stalled at residual {rnorm:.3e}")
    raise OutOfChartError(
        f"log map did not converge (residual {np.linalg.norm(res):.3e}); "
        "target may lie outside the chart guard"
    )
