"""The restricted path space around a classical trajectory.

Action functional, H1 distance, the tube parameter pack with its
hbar-derived defaults, the energy-window resolvent, and the admissibility
probe that classifies candidate paths as allowed or forbidden.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np

from .errors import ContourError, NearPoleError, PathCsvError, ShapeError
from .geometry import ClassicalTrajectory, MetricChart, hamiltonian_batch

Array = np.ndarray

# Relative width of the band around each resolvent pole treated as divergent.
POLE_GUARD = 0.05


@dataclass
class TubeSpec:
    """Tube around a classical trajectory plus the derived quantum bounds.

    ``eta_action`` bounds the action deviation (units of hbar), ``radius``
    caps the pointwise normal displacement (length units), ``delta_e`` is the
    energy half-width of the admissibility window.  Defaults implement the
    hbar chain: eta = hbar/2, radius = sqrt(hbar/(2 c)), delta_e = eta/T.
    """

    trajectory: ClassicalTrajectory
    hbar: float = 1.0
    coercivity: float = 1.0
    eta_action: Optional[float] = None
    radius: Optional[float] = None
    delta_e: Optional[float] = None
    e0: Optional[float] = None

    def __post_init__(self):
        if self.hbar <= 0.0 or self.coercivity <= 0.0:
            raise ValueError("hbar and coercivity must be positive")
        if self.eta_action is None:
            self.eta_action = 0.5 * self.hbar
        if self.radius is None:
            self.radius = default_radius(self.hbar, self.coercivity)
        if self.delta_e is None:
            self.delta_e = self.eta_action / self.trajectory.duration
        if self.e0 is None:
            self.e0 = self.trajectory.energy
        if self.eta_action <= 0.0 or self.radius <= 0.0 or self.delta_e <= 0.0:
            raise ValueError("eta_action, radius and delta_e must be positive")

    @property
    def grid(self) -> Array:
        return self.trajectory.grid


@dataclass(frozen=True)
class DiscretePath:
    """A path sampled on a shared time grid with pinned endpoints."""

    grid: Array    # (K+1,)
    points: Array  # (K+1, n)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))
        if self.grid.ndim != 1 or len(self.grid) != len(self.points):
            raise ShapeError(
                f"grid has {len(self.grid)} nodes but path has {len(self.points)}"
            )
        if len(self.grid) < 2:
            raise ShapeError("a path needs at least two nodes")
        if np.any(np.diff(self.grid) <= 0.0):
            raise ShapeError("grid must be strictly increasing")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def velocities(self) -> Array:
        return np.gradient(self.points, self.grid, axis=0, edge_order=2)


@dataclass(frozen=True)
class ProbeResult:
    """Outcome of the admissibility probe for one candidate path."""

    value: float          # math.inf when the contour meets a pole band
    min_margin: float     # min_t (delta_e - |H(t) - E0|) over both legs
    admissible: bool


def trajectory_path(traj: ClassicalTrajectory) -> DiscretePath:
    return DiscretePath(grid=traj.grid, points=traj.points)


def _require_shared_grid(a: DiscretePath, b: DiscretePath) -> None:
    if a.points.shape != b.points.shape or not np.array_equal(a.grid, b.grid):
        raise ShapeError("paths must share the same time grid and dimension")


def action(chart: MetricChart, path: DiscretePath) -> float:
    """Trapezoidal action integral of 1/2 g(q) qdot.qdot - V(q).

    Velocities come from second-order finite differences on the grid, so the
    value is deterministic for a fixed input.
    """
    v = path.velocities()
    if chart.is_flat:
        kinetic = 0.5 * np.einsum("ki,ki->k", v, v)
    else:
        kinetic = 0.5 * np.array(
            [vk @ chart.metric_at(qk) @ vk for qk, vk in zip(path.points, v)]
        )
    lagr = kinetic - chart.potential_at(path.points)
    return float(np.trapezoid(lagr, path.grid))


def h1_distance(path: DiscretePath, other: DiscretePath) -> float:
    """Discrete H1 distance: sqrt of int(|dq|^2 + |dqdot|^2) dt by trapezoid."""
    _require_shared_grid(path, other)
    d = path.points - other.points
    dd = np.gradient(d, path.grid, axis=0, edge_order=2)
    dens = np.einsum("ki,ki->k", d, d) + np.einsum("ki,ki->k", dd, dd)
    return float(np.sqrt(np.trapezoid(dens, path.grid)))


def default_radius(hbar: float, coercivity: float) -> float:
    """Tube H1 radius sqrt(hbar / (2 c)); the bare quantum bound at c = 1."""
    if hbar <= 0.0 or coercivity <= 0.0:
        raise ValueError("hbar and coercivity must be positive")
    return math.sqrt(0.5 * hbar / coercivity)


def action_deviation(chart: MetricChart, path: DiscretePath, spec: TubeSpec):
    """(S(path) - S(gamma0), |deviation| <= eta_action)."""
    ref = trajectory_path(spec.trajectory)
    _require_shared_grid(path, ref)
    ds = action(chart, path) - action(chart, ref)
    return ds, abs(ds) <= spec.eta_action


def resolvent(e: float, spec: TubeSpec, pole_guard: float = POLE_GUARD) -> float:
    """f(E) = 1 / (delta_e^2 - (E - E0)^2), positive inside the energy window."""
    de = spec.delta_e
    dist = abs(e - spec.e0)
    if abs(dist - de) <= pole_guard * de:
        raise NearPoleError(
            f"|E - E0| = {dist:.6g} within {pole_guard:.0%} of the pole at delta_e = {de:.6g}"
        )
    return 1.0 / (de * de - dist * dist)


def _leg_quantities(chart: MetricChart, path: DiscretePath, spec: TubeSpec):
    """Per-node H, momenta and points for one leg of the probe contour."""
    v = path.velocities()
    if chart.is_flat:
        p = v
    else:
        p = np.array([chart.metric_at(qk) @ vk for qk, vk in zip(path.points, v)])
    h = hamiltonian_batch(chart, path.points, p)
    return h, p


def admissibility_probe(
    chart: MetricChart,
    path: DiscretePath,
    spec: TubeSpec,
    *,
    pole_guard: float = POLE_GUARD,
    endpoint_tol: float = 1e-9,
) -> ProbeResult:
    """Contour integral of f(H) p.dq over the candidate path against gamma0.

    The loop is the path followed by the reversed classical trajectory, so
    the probe value is the forward leg integral minus the gamma0 leg
    integral (a reversed leg contributes the negative of its forward
    integral).  Any node whose energy sits within ``pole_guard`` of the
    resolvent poles marks the contour divergent.
    """
    ref = trajectory_path(spec.trajectory)
    _require_shared_grid(path, ref)
    gap0 = float(np.linalg.norm(path.points[0] - ref.points[0]))
    gap1 = float(np.linalg.norm(path.points[-1] - ref.points[-1]))
    if gap0 > endpoint_tol or gap1 > endpoint_tol:
        raise ContourError(
            f"loop does not close: endpoint offsets ({gap0:.3e}, {gap1:.3e})"
        )

    de, e0 = spec.delta_e, spec.e0
    margin = math.inf
    diverged = False
    legs = []
    for leg in (path, ref):
        h, p = _leg_quantities(chart, leg, spec)
        excess = np.abs(h - e0)
        margin = min(margin, float(np.min(de - excess)))
        if np.any(excess >= (1.0 - pole_guard) * de):
            diverged = True
            legs.append(None)
            continue
        f = 1.0 / (de * de - excess * excess)
        integrand = f[:, None] * p                    # f(H) p at each node
        dq = np.diff(leg.points, axis=0)
        # trapezoid for the 1-form: mean of endpoint integrands dotted with dq
        contrib = 0.5 * np.einsum("ki,ki->", integrand[:-1] + integrand[1:], dq)
        legs.append(contrib)

    if diverged:
        return ProbeResult(value=math.inf, min_margin=margin, admissible=False)
    value = float(legs[0] - legs[1])
    admissible = margin > pole_guard * de and math.isfinite(value)
    return ProbeResult(value=value, min_margin=margin, admissible=admissible)


# ---------------------------------------------------------------------------
# CSV ingestion: header "t,q1,...,qn", one row per node, strictly increasing t.

def save_path_csv(path: DiscretePath, dest: str | TextIO) -> None:
    close = False
    if isinstance(dest, str):
        dest = open(dest, "w", encoding="utf-8")
        close = True
    try:
        cols = ",".join(f"q{i + 1}" for i in range(path.dim))
        dest.write(f"t,{cols}\n")
        for t, q in zip(path.grid, path.points):
            dest.write(",".join([repr(float(t))] + [repr(float(x)) for x in q]) + "\n")
    finally:
        if close:
            dest.close()


def load_path_csv(src: str | TextIO) -> DiscretePath:
    close = False
    if isinstance(src, str):
        src = open(src, "r", encoding="utf-8")
        close = True
    try:
        header = src.readline().strip()
        fields = [f.strip() for f in header.split(",")]
        if not fields or fields[0] != "t" or any(
            f != f"q{i + 1}" for i, f in enumerate(fields[1:])
        ) or len(fields) < 2:
            raise PathCsvError(f"bad header {header!r}, expected t,q1,...,qn", row=1)
        dim = len(fields) - 1
        ts, rows = [], []
        for lineno, line in enumerate(src, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != dim + 1:
                raise PathCsvError(
                    f"row has {len(parts)} fields, expected {dim + 1}", row=lineno
                )
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise PathCsvError(f"non-numeric field: {exc}", row=lineno) from exc
            if ts and vals[0] <= ts[-1]:
                raise PathCsvError("time column must be strictly increasing", row=lineno)
            ts.append(vals[0])
            rows.append(vals[1:])
        if len(ts) < 2:
            raise PathCsvError("need at least two data rows", row=len(ts) + 1)
        return DiscretePath(grid=np.array(ts), points=np.array(rows))
    finally:
        if close:
            src.close()


def path_from_string(text: str) -> DiscretePath:
    return load_path_csv(io.StringIO(text))
