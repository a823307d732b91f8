import numpy as np
import pytest

import pathtube as pt


def make_harmonic(dim=1, omega=1.0):
    w2 = omega * omega
    return pt.MetricChart(
        dim=dim,
        potential=lambda q: 0.5 * w2 * np.sum(np.asarray(q) ** 2, axis=-1),
        grad_potential=lambda q: w2 * np.asarray(q),
        name="harmonic",
    )


def make_constant_potential(dim=1, value=1.0):
    return pt.MetricChart(
        dim=dim,
        potential=lambda q: np.full(np.shape(q)[:-1], value),
        grad_potential=lambda q: np.zeros_like(np.asarray(q)),
        name="constant",
    )


def make_exp_metric():
    """1-D chart with g(q) = e^{2q}; its only Christoffel symbol equals 1."""
    return pt.MetricChart(
        dim=1,
        potential=lambda q: np.zeros(np.shape(q)[:-1]),
        grad_potential=lambda q: np.zeros_like(np.asarray(q)),
        metric=lambda q: np.array([[np.exp(2.0 * q[0])]]),
        name="expmetric",
    )


def make_conformal(dim=2, slope=0.3):
    """Conformal metric g = e^{2 a q_1} I with zero potential."""

    def metric(q):
        return np.exp(2.0 * slope * q[0]) * np.eye(dim)

    return pt.MetricChart(
        dim=dim,
        potential=lambda q: np.zeros(np.shape(q)[:-1]),
        grad_potential=lambda q: np.zeros_like(np.asarray(q)),
        metric=metric,
        name="conformal",
    )


@pytest.fixture
def free_chart():
    return pt.flat_chart(1)


@pytest.fixture
def harmonic_chart():
    return make_harmonic()


@pytest.fixture
def exp_metric_chart():
    return make_exp_metric()


@pytest.fixture
def conformal_chart():
    return make_conformal()


@pytest.fixture
def free_traj(free_chart):
    return pt.solve_classical_trajectory(free_chart, 0.0, 1.0, 1.0, steps=128)


@pytest.fixture
def rest_traj_harmonic(harmonic_chart):
    return pt.solve_classical_trajectory(harmonic_chart, 0.0, 0.0, 1.0, steps=128)
