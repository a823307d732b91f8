import math

import numpy as np
import pytest

import pathtube as pt

from conftest import make_harmonic


class TestHeatKernel:
    def test_peak_value(self):
        assert pt.heat_kernel(0.0, 0.0, 1.0, 1.0, 1) == pytest.approx(
            (2.0 * math.pi) ** -0.5, abs=1e-12)

    def test_normalization(self):
        xs = np.linspace(-12.0, 12.0, 4001)
        mass = np.trapezoid(pt.heat_kernel(xs, 0.3, 1.0), xs)
        assert mass == pytest.approx(1.0, abs=1e-6)

    def test_symmetry_exact(self):
        assert pt.heat_kernel(0.2, -0.7, 0.8) == pt.heat_kernel(-0.7, 0.2, 0.8)

    def test_multidim(self):
        x = np.array([0.0, 0.0])
        y = np.array([1.0, 0.0])
        got = pt.heat_kernel(x, y, 1.0, 1.0, 2)
        assert got == pytest.approx((2 * math.pi) ** -1.0 * math.exp(-0.5), abs=1e-12)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            pt.heat_kernel(0.0, 0.0, -1.0)


class TestMehlerKernel:
    def test_stated_closed_form(self):
        # direct evaluation of the closed form at the origin
        val = pt.mehler_kernel(0.0, 0.0, 1.0, 1.0, 1.0)
        assert val == pytest.approx((2.0 * math.pi * math.sinh(1.0)) ** -0.5, abs=1e-12)
        off = pt.mehler_kernel(0.3, -0.2, 1.0, 1.0, 1.0)
        sh, ch = math.sinh(1.0), math.cosh(1.0)
        expect = math.sqrt(1.0 / (2.0 * math.pi * sh)) * math.exp(
            -(1.0 / (2.0 * sh)) * ((0.09 + 0.04) * ch - 2.0 * 0.3 * -0.2))
        assert off == pytest.approx(expect, abs=1e-12)

    def test_cross_check_against_pde(self):
        # smoothed identity: int K(0, z, T) f(z) dz equals the backward-PDE
        # solution at x = 0 with terminal data f.
        width = 0.1
        xs = np.linspace(-7.0, 7.0, 1401)
        grid = pt.PDEGrid(x=xs, dt=1.0 / 800.0, theta=1.0,
                          v_e=lambda t, q: 0.5 * q * q, sigma=1.0, t_final=1.0)
        u0 = pt.solve_backward_pde(grid, lambda q: np.exp(-q * q / (2.0 * width ** 2)))
        z = np.linspace(-7.0, 7.0, 4001)
        oracle = np.trapezoid(
            pt.mehler_kernel(0.0, z, 1.0) * np.exp(-z * z / (2.0 * width ** 2)), z)
        got = float(np.interp(0.0, xs, np.real(u0)))
        assert abs(got - oracle) <= 1e-4

    def test_small_frequency_approaches_heat(self):
        got = pt.mehler_kernel(0.2, -0.1, 1.0, 1e-4, 1.0)
        assert abs(got - pt.heat_kernel(0.2, -0.1, 1.0)) <= 1e-6

    def test_symmetry_exact(self):
        assert pt.mehler_kernel(0.4, -0.3, 0.7) == pt.mehler_kernel(-0.3, 0.4, 0.7)

    def test_overflow_guard(self):
        with pytest.raises(OverflowError):
            pt.mehler_kernel(0.0, 0.0, 40.0, 1.0, 1.0)


class TestBackwardPde:
    def test_free_evolution_is_heat_convolution(self):
        xs = np.linspace(-7.0, 7.0, 1401)
        eps, y = 0.05, 0.3
        grid = pt.PDEGrid(x=xs, dt=1.0 / 400.0, theta=1.0, sigma=1.0, t_final=1.0)
        u0 = pt.solve_backward_pde(grid, lambda q: pt.heat_kernel(q, y, eps))
        exact = pt.heat_kernel(xs, y, 1.0 + eps)
        assert np.max(np.abs(u0 - exact)) <= 1e-4

    def test_constant_mode_real_theta(self):
        xs = np.linspace(-4.0, 4.0, 129)
        grid = pt.PDEGrid(x=xs, dt=2e-5, theta=1.0,
                          v_e=lambda t, q: np.ones_like(q),
                          sigma=1.0, t_final=1.0, bc="reflecting")
        u0 = pt.solve_backward_pde(grid, lambda q: np.ones_like(q))
        assert np.max(np.abs(u0 - math.exp(-1.0))) <= 1e-10

    def test_constant_mode_imaginary_theta(self):
        xs = np.linspace(-4.0, 4.0, 129)
        grid = pt.PDEGrid(x=xs, dt=2e-5, theta=-1j,
                          v_e=lambda t, q: np.ones_like(q),
                          sigma=1.0, t_final=1.0, bc="reflecting")
        u0 = pt.solve_backward_pde(grid, lambda q: np.ones_like(q))
        assert np.max(np.abs(u0 - np.exp(1j))) <= 1e-10

    def test_self_convergence_order(self):
        def solve(j, dt):
            xs = np.linspace(-6.0, 6.0, j + 1)
            grid = pt.PDEGrid(x=xs, dt=dt, theta=1.0,
                              v_e=lambda t, q: 0.5 * q * q, sigma=1.0, t_final=1.0)
            return pt.solve_backward_pde(grid, lambda q: np.exp(-q * q))

        ua = solve(300, 1.0 / 100.0)
        ub = solve(600, 1.0 / 200.0)
        uc = solve(1200, 1.0 / 400.0)
        d1 = np.max(np.abs(ua - ub[::2]))
        d2 = np.max(np.abs(ub - uc[::2]))
        assert d1 / d2 >= 3.5

    def test_drift_term_against_shifted_heat(self):
        # constant drift b: u(0,x) = E[f(x + bT + W_T)] = heat smoothed at x + bT
        b = 0.4
        xs = np.linspace(-8.0, 8.0, 1601)
        grid = pt.PDEGrid(x=xs, dt=1.0 / 400.0, theta=1.0,
                          drift=lambda t, q: np.full_like(q, b),
                          sigma=1.0, t_final=1.0)
        u0 = pt.solve_backward_pde(grid, lambda q: pt.heat_kernel(q, 0.0, 0.05))
        exact = pt.heat_kernel(xs + b, 0.0, 1.05)
        core = np.abs(xs) <= 4.0
        assert np.max(np.abs(u0[core] - exact[core])) <= 1e-4

    def test_stability_budget(self):
        xs = np.linspace(-4.0, 4.0, 129)
        grid = pt.PDEGrid(x=xs, dt=0.1, theta=1.0,
                          v_e=lambda t, q: 10.0 * np.ones_like(q),
                          sigma=1.0, t_final=1.0)
        with pytest.raises(pt.StepSizeError):
            pt.solve_backward_pde(grid, lambda q: np.ones_like(q))

    def test_minimum_resolution(self):
        xs = np.linspace(-4.0, 4.0, 33)
        grid = pt.PDEGrid(x=xs, dt=1e-3, theta=1.0, sigma=1.0, t_final=1.0)
        with pytest.raises(pt.StepSizeError):
            pt.solve_backward_pde(grid, lambda q: np.ones_like(q))


class TestLatticePathSum:
    def test_free_ratio_is_one(self, free_chart):
        nodes = np.linspace(-1.0, 1.0, 5)
        val = pt.lattice_path_sum(free_chart, nodes, 3, 0.2, 0, 4)
        # with V = 0 the sum is the free composition itself
        g = pt.heat_kernel(nodes[:, None], nodes[None, :], 0.2)
        m = g * (nodes[1] - nodes[0])
        free = np.linalg.matrix_power(m, 3)[0, 4] / (nodes[1] - nodes[0])
        assert val.real / free == pytest.approx(1.0, abs=1e-12)
        assert val.imag == 0.0

    def test_single_step_matches_kernel_entry(self, harmonic_chart):
        nodes = np.linspace(-1.0, 1.0, 5)
        dt = 0.3
        val = pt.lattice_path_sum(harmonic_chart, nodes, 1, dt, 1, 3)
        v1 = 0.5 * nodes[1] ** 2
        expect = math.exp(-v1 * dt) * pt.heat_kernel(nodes[1], nodes[3], dt)
        assert val.real == pytest.approx(expect, abs=1e-14)

    def test_enumeration_equals_transfer_matrix(self, harmonic_chart):
        # J = 5, K = 4: the function itself raises if the two routes differ
        # beyond 1e-12; also verify against an independent matrix build here.
        nodes = np.linspace(-1.0, 1.0, 5)
        dt = 0.25
        val = pt.lattice_path_sum(harmonic_chart, nodes, 4, dt, 0, 4)
        dx = nodes[1] - nodes[0]
        g = pt.heat_kernel(nodes[:, None], nodes[None, :], dt)
        w = np.exp(-0.5 * nodes ** 2 * dt)
        m = w[:, None] * g * dx
        expect = np.linalg.matrix_power(m, 4)[0, 4] / dx
        assert val.real == pytest.approx(expect, rel=1e-12)

    def test_lorentzian_mode_unit_modulus_weights(self, harmonic_chart):
        nodes = np.linspace(-0.5, 0.5, 3)
        val = pt.lattice_path_sum(harmonic_chart, nodes, 2, 0.5, 0, 2,
                                  mode="lorentzian")
        assert abs(val) > 0.0

    def test_size_guard(self, free_chart):
        nodes = np.linspace(-1.0, 1.0, 9)
        with pytest.raises(pt.SizeError):
            pt.lattice_path_sum(free_chart, nodes, 8, 0.1, 0, 8)

    def test_requires_1d(self):
        chart = pt.flat_chart(2)
        with pytest.raises(pt.SizeError):
            pt.lattice_path_sum(chart, np.linspace(-1, 1, 5), 2, 0.1, 0, 4)
