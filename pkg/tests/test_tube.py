import io
import math

import numpy as np
import pytest

import pathtube as pt

from conftest import make_harmonic


def sine_perturbed(traj, eps, freq=1):
    """gamma0 + eps sin(freq pi t / T) along the first coordinate."""
    t = traj.grid
    bump = eps * np.sin(freq * math.pi * t / t[-1])
    pts = traj.points.copy()
    pts[:, 0] += bump
    return pt.DiscretePath(grid=t, points=pts)


class TestAction:
    def test_free_particle_line(self, free_chart, free_traj):
        path = pt.trajectory_path(free_traj)
        assert pt.action(free_chart, path) == pytest.approx(0.5, abs=1e-14)

    def test_rest_path_zero(self, harmonic_chart):
        grid = np.linspace(0.0, 1.0, 65)
        path = pt.DiscretePath(grid=grid, points=np.zeros((65, 1)))
        assert pt.action(harmonic_chart, path) == 0.0

    def test_oscillator_closed_form(self, harmonic_chart):
        # q = a sin t on [0, 1]: S = a^2 sin(2)/4 from the closed-form integral.
        a, t1 = 0.7, 1.0
        exact = 0.25 * a * a * math.sin(2.0 * t1)
        grid = np.linspace(0.0, t1, 101)
        path = pt.DiscretePath(grid=grid, points=a * np.sin(grid)[:, None])
        assert pt.action(harmonic_chart, path) == pytest.approx(exact, abs=5e-4)

    def test_second_order_grid_refinement(self, harmonic_chart):
        a = 0.7
        vals = []
        for n in (50, 100, 200):
            grid = np.linspace(0.0, 1.0, n + 1)
            path = pt.DiscretePath(grid=grid, points=a * np.sin(grid)[:, None])
            vals.append(pt.action(harmonic_chart, path))
        ratio = abs(vals[0] - vals[1]) / abs(vals[1] - vals[2])
        assert ratio >= 2.0 ** 1.7

    def test_shape_error(self, free_chart):
        with pytest.raises(pt.ShapeError):
            pt.DiscretePath(grid=np.linspace(0, 1, 5), points=np.zeros((4, 1)))


class TestH1Distance:
    def test_identical_paths(self, free_traj):
        p = pt.trajectory_path(free_traj)
        assert pt.h1_distance(p, p) == 0.0

    def test_sine_closed_form(self, free_traj):
        # |gamma - gamma0| = eps sin(pi t): H1 norm eps sqrt(1/2 + pi^2/2).
        eps = 0.05
        exact = eps * math.sqrt(0.5 + math.pi ** 2 / 2.0)
        path = sine_perturbed(free_traj, eps)
        got = pt.h1_distance(path, pt.trajectory_path(free_traj))
        assert got == pytest.approx(exact, rel=5e-4)

    def test_symmetry(self, free_traj):
        a = sine_perturbed(free_traj, 0.03)
        b = sine_perturbed(free_traj, -0.08, freq=2)
        assert pt.h1_distance(a, b) == pt.h1_distance(b, a)

    def test_triangle_inequality_random_triples(self, free_traj):
        rng = np.random.default_rng(9)
        grid = free_traj.grid
        for _ in range(50):
            pts = [pt.DiscretePath(grid=grid, points=rng.normal(size=(len(grid), 1)))
                   for _ in range(3)]
            dab = pt.h1_distance(pts[0], pts[1])
            dbc = pt.h1_distance(pts[1], pts[2])
            dac = pt.h1_distance(pts[0], pts[2])
            assert dac <= dab + dbc + 1e-12
            assert dab >= 0.0


class TestDefaultRadius:
    def test_unit_values(self):
        assert pt.default_radius(1.0, 1.0) == pytest.approx(0.7071067811865476, abs=1e-15)
        assert pt.default_radius(2.0, 1.0) == 1.0

    def test_coercivity_scaling(self):
        assert pt.default_radius(1.3, 4.0) == pytest.approx(pt.default_radius(1.3, 1.0) / 2.0, abs=1e-15)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            pt.default_radius(-1.0, 1.0)
        with pytest.raises(ValueError):
            pt.default_radius(1.0, 0.0)


class TestActionDeviation:
    def test_reference_path_is_exactly_zero(self, free_chart, free_traj):
        spec = pt.TubeSpec(trajectory=free_traj)
        ds, ok = pt.action_deviation(free_chart, pt.trajectory_path(free_traj), spec)
        assert ds == 0.0 and ok

    def test_quadratic_expansion_oracle(self, free_chart, free_traj):
        # Free action is exactly quadratic: S(q0 + d) - S(q0) equals the
        # discrete cross term plus the quadratic term built from the same
        # finite-difference and trapezoid operators.
        spec = pt.TubeSpec(trajectory=free_traj)
        grid = free_traj.grid
        v0 = np.gradient(free_traj.points, grid, axis=0, edge_order=2)
        for eps in (0.02, 0.1, 0.4):
            path = sine_perturbed(free_traj, eps)
            d = path.points - free_traj.points
            dd = np.gradient(d, grid, axis=0, edge_order=2)
            cross = np.trapezoid(np.einsum("ki,ki->k", v0, dd), grid)
            quad = 0.5 * np.trapezoid(np.einsum("ki,ki->k", dd, dd), grid)
            oracle = cross + quad
            ds, _ = pt.action_deviation(free_chart, path, spec)
            assert ds == pytest.approx(oracle, abs=1e-12)
            # and the continuum value eps^2 pi^2 / 4 at second order
            assert ds == pytest.approx(eps * eps * math.pi ** 2 / 4.0, rel=2e-2)

    def test_bound_flip_against_oracle_ladder(self, free_chart, free_traj):
        spec = pt.TubeSpec(trajectory=free_traj)  # eta = 1/2
        eps_star = 2.0 * math.sqrt(spec.eta_action) / math.pi
        ladder = np.linspace(0.05, 0.9, 18)
        flags = []
        for eps in ladder:
            _, ok = pt.action_deviation(free_chart, sine_perturbed(free_traj, eps), spec)
            flags.append(ok)
        flips = [i for i in range(1, len(flags)) if flags[i] != flags[i - 1]]
        assert len(flips) == 1
        crossing = 0.5 * (ladder[flips[0] - 1] + ladder[flips[0]])
        assert abs(crossing - eps_star) <= (ladder[1] - ladder[0])


class TestResolvent:
    def test_center_value(self, free_traj):
        spec = pt.TubeSpec(trajectory=free_traj, delta_e=1.0)
        assert pt.resolvent(spec.e0, spec) == pytest.approx(1.0, abs=1e-14)

    def test_outside_window(self, free_traj):
        spec = pt.TubeSpec(trajectory=free_traj, delta_e=1.0)
        assert pt.resolvent(spec.e0 + 2.0, spec) == pytest.approx(-1.0 / 3.0, abs=1e-14)

    def test_pole_guard_and_attainable_magnitude(self, free_traj):
        spec = pt.TubeSpec(trajectory=free_traj, delta_e=1.0)
        pg = 0.05
        with pytest.raises(pt.NearPoleError):
            pt.resolvent(spec.e0 + 1.0 + 0.5 * pg, spec)
        # largest legal magnitude sits just outside the guard band
        val = pt.resolvent(spec.e0 + 1.0 + pg * 1.000001, spec)
        assert abs(val) >= 0.99 / ((2.0 + pg) * pg)


class TestAdmissibilityProbe:
    def make_spec(self, free_traj):
        return pt.TubeSpec(trajectory=free_traj)  # delta_e = 0.5

    def test_reference_loop_cancels(self, free_chart, free_traj):
        spec = self.make_spec(free_traj)
        res = pt.admissibility_probe(free_chart, pt.trajectory_path(free_traj), spec)
        assert res.value == 0.0
        assert res.admissible

    def test_energy_excess_diverges(self, free_chart, free_traj):
        # eps chosen so max |H - E0| = 1.5 delta_e (oracle: solve the quadratic
        # max excess = eps pi + eps^2 pi^2 / 2 for the sine family).
        spec = self.make_spec(free_traj)
        target = 1.5 * spec.delta_e
        eps = (math.sqrt(1.0 + 2.0 * target) - 1.0) / math.pi
        res = pt.admissibility_probe(free_chart, sine_perturbed(free_traj, eps), spec)
        assert math.isinf(res.value)
        assert not res.admissible
        assert res.min_margin < 0.0

    def test_small_perturbation_double_resolution_oracle(self, free_chart):
        # max |H - E0| = 0.5 delta_e: finite probe value, admissible; the value
        # agrees with the same quadrature at doubled resolution to 1e-3.
        chart = free_chart
        values = []
        for steps in (256, 512):
            traj = pt.solve_classical_trajectory(chart, 0.0, 1.0, 1.0, steps=steps)
            spec = pt.TubeSpec(trajectory=traj)
            target = 0.5 * spec.delta_e
            eps = (math.sqrt(1.0 + 2.0 * target) - 1.0) / math.pi
            res = pt.admissibility_probe(chart, sine_perturbed(traj, eps), spec)
            assert res.admissible and math.isfinite(res.value)
            values.append(res.value)
        assert values[1] != 0.0
        assert abs(values[0] - values[1]) <= 1e-3 * abs(values[1])

    def test_shrinking_amplitude_stays_admissible(self, free_chart, free_traj):
        spec = self.make_spec(free_traj)
        admissible_seen = False
        for eps in np.linspace(0.3, 0.01, 10):
            res = pt.admissibility_probe(free_chart, sine_perturbed(free_traj, eps), spec)
            if admissible_seen:
                assert res.admissible
            admissible_seen = admissible_seen or res.admissible
        assert admissible_seen

    def test_open_loop_raises(self, free_chart, free_traj):
        spec = self.make_spec(free_traj)
        pts = free_traj.points.copy()
        pts[-1, 0] += 0.1
        bad = pt.DiscretePath(grid=free_traj.grid, points=pts)
        with pytest.raises(pt.ContourError):
            pt.admissibility_probe(free_chart, bad, spec)


class TestTubeSpecDefaults:
    def test_hbar_chain(self, free_traj):
        spec = pt.TubeSpec(trajectory=free_traj, hbar=1.0)
        assert spec.eta_action == 0.5
        assert spec.radius == pytest.approx(math.sqrt(0.5))
        assert spec.delta_e == pytest.approx(0.5)
        assert spec.e0 == pytest.approx(free_traj.energy)

    def test_positivity_validation(self, free_traj):
        with pytest.raises(ValueError):
            pt.TubeSpec(trajectory=free_traj, hbar=-1.0)
        with pytest.raises(ValueError):
            pt.TubeSpec(trajectory=free_traj, radius=-0.1)


class TestPathCsv:
    def test_round_trip(self, free_traj):
        path = sine_perturbed(free_traj, 0.07)
        buf = io.StringIO()
        pt.save_path_csv(path, buf)
        buf.seek(0)
        back = pt.load_path_csv(buf)
        assert np.array_equal(back.grid, path.grid)
        assert np.array_equal(back.points, path.points)

    def test_bad_header(self):
        with pytest.raises(pt.PathCsvError) as err:
            pt.load_path_csv(io.StringIO("time,q1\n0.0,0.0\n1.0,1.0\n"))
        assert err.value.row == 1

    def test_bad_row_reports_number(self):
        text = "t,q1\n0.0,0.0\n0.5,oops\n1.0,1.0\n"
        with pytest.raises(pt.PathCsvError) as err:
            pt.load_path_csv(io.StringIO(text))
        assert err.value.row == 3

    def test_non_increasing_time(self):
        text = "t,q1\n0.0,0.0\n0.5,0.1\n0.5,0.2\n"
        with pytest.raises(pt.PathCsvError) as err:
            pt.load_path_csv(io.StringIO(text))
        assert err.value.row == 4

    def test_wrong_field_count(self):
        text = "t,q1\n0.0,0.0\n0.5,0.1,9\n"
        with pytest.raises(pt.PathCsvError) as err:
            pt.load_path_csv(io.StringIO(text))
        assert err.value.row == 3
