"""Independent ground truth for the Monte Carlo estimators.

Closed-form free and harmonic kernels, a Crank-Nicolson solver for the
backward equation du/dt + G_t u - theta V_E u = 0 (complex theta allowed),
and an exhaustive lattice path sum for desk-scale kernel compositions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded

from .errors import PathTubeError, ShapeError, SizeError, StepSizeError
from .geometry import MetricChart

Array = np.ndarray


def heat_kernel(x, y, t: float, sigma: float = 1.0, n: int = 1):
    """Free Euclidean kernel (2 pi sigma^2 t)^(-n/2) exp(-|x-y|^2 / (2 sigma^2 t)).

    For n = 1 the arguments broadcast elementwise; for n > 1 the last axis
    holds the coordinates.
    """
    if t <= 0.0 or sigma <= 0.0:
        raise ValueError("t and sigma must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if n == 1:
        r2 = (x - y) ** 2
        if r2.ndim and r2.shape[-1] == 1:
            r2 = r2[..., 0]
    else:
        r2 = np.sum((x - y) ** 2, axis=-1)
    s2t = sigma * sigma * t
    val = (2.0 * math.pi * s2t) ** (-0.5 * n) * np.exp(-r2 / (2.0 * s2t))
    return float(val) if np.ndim(val) == 0 else val


def mehler_kernel(x, y, t: float, omega: float = 1.0, hbar: float = 1.0):
    """Harmonic-oscillator Euclidean kernel (unit mass).

    sqrt(omega / (2 pi hbar sinh(omega t))) *
    exp(-(omega / (2 hbar sinh(omega t))) ((x^2 + y^2) cosh(omega t) - 2 x y)).
    """
    if omega <= 0.0 or t <= 0.0 or hbar <= 0.0:
        raise ValueError("omega, t and hbar must be positive")
    wt = omega * t
    if wt > 30.0:
        raise OverflowError(f"omega*t = {wt} out of range (sinh overflow)")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sh, ch = math.sinh(wt), math.cosh(wt)
    pref = math.sqrt(omega / (2.0 * math.pi * hbar * sh))
    val = pref * np.exp(-(omega / (2.0 * hbar * sh)) * ((x * x + y * y) * ch - 2.0 * x * y))
    return float(val) if np.ndim(val) == 0 else val


@dataclass
class PDEGrid:
    """Discretization of the backward Feynman-Kac equation on [-L, L].

    ``v_e`` is the density V_E(t, x) as a callable of (t, node array);
    ``drift`` is the generator's first-order coefficient b(t, x) (None for
    the plain diffusion).  The stability budget dt * max|V_E| <= 0.5 and
    J >= 64 are enforced at solve time.
    """

    x: Array
    dt: float
    theta: complex = 1.0
    v_e: Optional[Callable[[float, Array], Array]] = None
    drift: Optional[Callable[[float, Array], Array]] = None
    sigma: float = 1.0
    t_final: float = 1.0
    bc: str = "dirichlet"

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim != 1 or len(self.x) < 3:
            raise ShapeError("PDE grid needs a 1-D node array")
        dx = np.diff(self.x)
        if np.any(dx <= 0.0) or np.max(np.abs(dx - dx[0])) > 1e-9 * abs(dx[0]):
            raise ShapeError("PDE grid must be uniform and increasing")
        if self.bc not in ("dirichlet", "reflecting"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.v_e is None:
            self.v_e = lambda t, xs: np.zeros_like(xs)

    @property
    def j_intervals(self) -> int:
        return len(self.x) - 1

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])


def solve_backward_pde(grid: PDEGrid, f) -> Array:
    """Crank-Nicolson march of du/dt + b u' + (sigma^2/2) u'' - theta V_E u = 0
    backward from the terminal condition u(T, x) = f(x); returns u(0, x).

    Second-order central differences in space; complex theta rides the same
    tridiagonal solves.  Dirichlet-zero or reflecting walls.
    """
    if grid.j_intervals < 64:
        raise StepSizeError(f"need J >= 64 spatial intervals, got {grid.j_intervals}")
    steps = max(1, int(round(grid.t_final / grid.dt)))
    dt = grid.t_final / steps

    xs = grid.x
    vmax = 0.0
    for tprobe in (0.0, 0.5 * grid.t_final, grid.t_final):
        vmax = max(vmax, float(np.max(np.abs(grid.v_e(tprobe, xs)))))
    if dt * vmax > 0.5 + 1e-12:
        raise StepSizeError(
            f"stability budget exceeded: dt * max|V_E| = {dt * vmax:.3g} > 0.5"
        )

    theta = complex(grid.theta)
    complex_solve = theta.imag != 0.0
    u = np.asarray(f(xs) if callable(f) else f)
    u = u.astype(complex if (complex_solve or np.iscomplexobj(u)) else float).copy()
    dtype = u.dtype
    if not complex_solve:
        theta = theta.real

    n = len(xs)
    dx = grid.dx
    diff = grid.sigma ** 2 / (2.0 * dx * dx)

    def operator_bands(t):
        """Tridiagonal bands (sub, diag, super) of L(t)."""
        v = np.asarray(grid.v_e(t, xs))
        b = np.zeros(n) if grid.drift is None else np.asarray(grid.drift(t, xs))
        adv = b / (2.0 * dx)
        sub = np.full(n, diff, dtype=dtype) - adv.astype(dtype)
        sup = np.full(n, diff, dtype=dtype) + adv.astype(dtype)
        dia = np.full(n, -2.0 * diff, dtype=dtype) - theta * v.astype(dtype)
        if grid.bc == "reflecting":
            # ghost-node reflection u_{-1} = u_1 kills the advective term
            sup[0] = 2.0 * diff
            sub[-1] = 2.0 * diff
        return sub, dia, sup

    def apply_tridiag(sub, dia, sup, w):
        out = dia * w
        out[:-1] += sup[:-1] * w[1:]
        out[1:] += sub[1:] * w[:-1]
        return out

    for m in range(steps):
        t_hi = grid.t_final - m * dt
        t_lo = t_hi - dt
        sub_h, dia_h, sup_h = operator_bands(t_hi)
        sub_l, dia_l, sup_l = operator_bands(t_lo)
        rhs = u + 0.5 * dt * apply_tridiag(sub_h, dia_h, sup_h, u)
        ab = np.zeros((3, n), dtype=dtype)
        ab[0, 1:] = -0.5 * dt * sup_l[:-1]
        ab[1, :] = 1.0 - 0.5 * dt * dia_l
        ab[2, :-1] = -0.5 * dt * sub_l[1:]
        if grid.bc == "dirichlet":
            ab[0, 1] = 0.0
            ab[1, 0] = 1.0
            rhs[0] = 0.0
            ab[2, -2] = 0.0
            ab[1, -1] = 1.0
            rhs[-1] = 0.0
        u = solve_banded((1, 1), ab, rhs)
    return u


def lattice_path_sum(
    chart: MetricChart,
    x_nodes: Array,
    n_steps: int,
    dt: float,
    start_index: int,
    end_index: int,
    *,
    sigma: float = 1.0,
    hbar: float = 1.0,
    mode: str = "euclidean",
) -> complex:
    """Exhaustive sum over lattice paths pinned at the chosen endpoints.

    Each step carries the transition Gaussian times the left-point density
    weight exp(-V dt / hbar) (or the phase exp(+i V dt / hbar)); interior
    sums carry the node spacing as quadrature measure.  The enumeration is
    verified against the transfer-matrix composition to 1e-12 before the
    value is returned.
    """
    if chart.dim != 1:
        raise SizeError("lattice path sum is restricted to 1-D charts")
    x_nodes = np.asarray(x_nodes, dtype=float)
    j = len(x_nodes)
    if j < 2 or np.any(np.diff(x_nodes) <= 0.0):
        raise ShapeError("lattice nodes must be increasing")
    spacing = np.diff(x_nodes)
    if np.max(np.abs(spacing - spacing[0])) > 1e-9 * spacing[0]:
        raise ShapeError("lattice nodes must be uniform")
    if n_steps < 1:
        raise SizeError("need at least one step")
    if j ** n_steps > 1_000_000:
        raise SizeError(f"instance too large: {j}^{n_steps} paths")
    if not (0 <= start_index < j and 0 <= end_index < j):
        raise SizeError("endpoint indices out of range")

    dx = float(spacing[0])
    v = chart.potential_at(x_nodes[:, None])
    if mode == "euclidean":
        w = np.exp(-v * dt / hbar)
    elif mode == "lorentzian":
        w = np.exp(1j * v * dt / hbar)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    g = heat_kernel(x_nodes[:, None], x_nodes[None, :], dt, sigma, 1)

    m = (w[:, None] * g) * dx
    matrix_val = np.linalg.matrix_power(m, n_steps)[start_index, end_index] / dx

    brute = 0.0 + 0.0j
    for mids in itertools.product(range(j), repeat=n_steps - 1):
        path = (start_index,) + mids + (end_index,)
        amp = 1.0 + 0.0j
        for a, b in zip(path[:-1], path[1:]):
            amp *= w[a] * g[a, b]
        brute += amp
    brute *= dx ** (n_steps - 1)

    if abs(brute - matrix_val) > 1e-12 * (1.0 + abs(matrix_val)):
        raise PathTubeError(
            f"lattice enumeration and transfer matrix disagree: "
            f"{brute} vs {matrix_val}"
        )
    return complex(brute)
