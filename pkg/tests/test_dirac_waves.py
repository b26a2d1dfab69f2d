import dataclasses

import numpy as np
import pytest

from soler_stability.dirac_waves import (
    G_of_s,
    SolitaryWave,
    continue_family,
    empirical_order,
    g_of_s,
    hamiltonian_density,
    remainder_norms,
    solve_1d_closed,
    solve_continuation,
    turning_point,
    wave_residual,
    x_profile_exact,
)
from soler_stability.nls import solve_ground_state
from soler_stability.radial_numerics import (
    GridFunction,
    build_grid,
    even_value_at_origin,
    staggered_operators,
    tail_decay_rate,
)


@pytest.fixture(scope="module")
def closed_1_3():
    eps = np.sqrt(1 - 0.99 ** 2)
    return solve_1d_closed(0.99, 3, 1.0, build_grid(1, 25.0 / eps, 1000))


@pytest.fixture(scope="module")
def state_1_3():
    return solve_ground_state(1, 3, 1.0, build_grid(1, 25.0, 1000))


def test_G_and_g():
    assert G_of_s(0.0, 3, 1.0) == 0.0
    s = np.linspace(0, 1.5, 7)
    assert np.allclose(G_of_s(s, 1, 1.0), s - s * s / 2)
    d = 1e-6
    fd = (G_of_s(s + d, 3, 1.3) - G_of_s(s - d, 3, 1.3)) / (2 * d)
    assert np.allclose(fd, g_of_s(s, 3, 1.3), atol=1e-8)


@pytest.mark.parametrize("omega,k", [(0.9, 1), (0.99, 3), (0.5, 2)])
def test_turning_point(omega, k):
    gamma = turning_point(omega, k, 1.0)
    assert omega * gamma == pytest.approx(G_of_s(gamma, k, 1.0), abs=1e-12)
    s = np.linspace(0, gamma, 2001)[1:-1]
    assert np.all(omega * s < G_of_s(s, k, 1.0))


def test_turning_point_values():
    assert turning_point(0.9, 1, 1.0) == pytest.approx(0.2)
    assert turning_point(1 - 1e-12, 2, 1.0) < 1e-5
    with pytest.raises(ValueError):
        turning_point(1.0, 1, 1.0)


def test_closed_form_invariants(closed_1_3):
    w, prof = closed_1_3
    assert w.residual_norm < 1e-7
    v, u = w.v.values, w.u.values
    X, gamma = prof.X.values, prof.Gamma
    assert even_value_at_origin(w.grid, X) == pytest.approx(gamma, abs=1e-10)
    assert np.max(np.abs(X - x_profile_exact(w.grid.nodes, 0.99, 3, 1.0))) < 1e-10
    assert even_value_at_origin(w.grid, v) ** 2 == pytest.approx(gamma, abs=1e-10)
    assert np.all(v > 0) and np.all(u >= 0)


def test_zero_energy_on_faces():
    eps = np.sqrt(1 - 0.95 ** 2)
    grid = build_grid(1, 25.0 / eps, 800)
    w, prof = solve_1d_closed(0.95, 2, 1.0, grid)
    # v and Y are both available on faces: v_f = Y / u where u != 0
    u = w.u.values
    mask = np.abs(u) > 1e-6
    vf = prof.Y.values[mask] / u[mask]
    assert np.max(np.abs(hamiltonian_density(vf, u[mask], 0.95, 2, 1.0))) < 1e-8
    # omega (v^2 + u^2) = G(v^2 - u^2)
    lhs = 0.95 * (vf ** 2 + u[mask] ** 2)
    assert np.max(np.abs(lhs - G_of_s(vf ** 2 - u[mask] ** 2, 2, 1.0))) < 1e-8


def test_zero_energy_relation_for_X(closed_1_3):
    w, prof = closed_1_3
    x = w.grid.nodes
    X = prof.X.values
    eps = w.epsilon
    # derivative of the explicit profile as oracle
    d = 1e-6 / eps
    dX = (x_profile_exact(x + d, 0.99, 3, 1.0) - x_profile_exact(x - d, 0.99, 3, 1.0)) / (2 * d)
    lhs = dX ** 2
    rhs = 4 * (G_of_s(X, 3, 1.0) ** 2 - 0.99 ** 2 * X ** 2)
    assert np.max(np.abs(lhs - rhs)) < 1e-6


def test_Y_is_derivative_of_X(closed_1_3):
    w, prof = closed_1_3
    ops = staggered_operators(w.grid)
    Y_fd = -(ops.grad @ prof.X.values) / (4 * 0.99)
    assert np.max(np.abs(Y_fd - prof.Y.values)[:-8]) < 1e-8 * np.max(prof.X.values) + 1e-12


def test_closed_form_residual_and_uniqueness(closed_1_3, state_1_3):
    w, _ = closed_1_3
    cont = solve_continuation(1, 3, 1.0, 0.99, state_1_3, threshold=np.inf)
    ref, _ = solve_1d_closed(0.99, 3, 1.0, cont.grid)
    assert cont.residual_norm < 1e-9
    assert np.max(np.abs(cont.v.values - ref.v.values)) < 1e-6
    assert np.max(np.abs(cont.u.values - ref.u.values)) < 1e-6


def test_closed_form_rejects_nd():
    with pytest.raises(ValueError):
        solve_1d_closed(0.9, 1, 1.0, build_grid(2, 100.0, 100))


def test_wave_residual_zero_and_perturbed(closed_1_3):
    w, _ = closed_1_3
    zero = dataclasses.replace(w, v=GridFunction(w.grid, np.zeros(1000)),
                               u=GridFunction(w.grid, np.zeros(1000), "face"))
    assert wave_residual(zero) == 0.0
    bumped = dataclasses.replace(w, v=GridFunction(w.grid, w.v.values
                                                   + 1e-3 * np.exp(-w.grid.nodes)))
    assert wave_residual(bumped) > 1e-5


def test_amplitude_scaling(state_1_3):
    eps = np.array([0.02, 0.05, 0.1, 0.2])
    waves = continue_family(1, 3, 1.0, np.sqrt(1 - eps[::-1] ** 2), state_1_3)[::-1]
    vmax = [np.max(w.v.values) for w in waves]
    umax = [np.max(np.abs(w.u.values)) for w in waves]
    assert np.polyfit(np.log(eps), np.log(vmax), 1)[0] == pytest.approx(1 / 3, rel=0.05)
    assert np.polyfit(np.log(eps), np.log(umax), 1)[0] == pytest.approx(4 / 3, rel=0.05)


def test_tail_decay_rate():
    omega = 0.9
    eps = np.sqrt(1 - omega ** 2)
    w, _ = solve_1d_closed(omega, 1, 1.0, build_grid(1, 40.0 / eps, 800))
    rate = tail_decay_rate(w.grid.nodes, w.v.values, 10 / eps, 25 / eps)
    assert rate == pytest.approx(eps, rel=0.05)


def test_rescaled_converges_to_nls(state_1_3):
    grid = build_grid(1, 25.0, 300)
    st = solve_ground_state(1, 3, 1.0, grid)
    diffs = []
    for omega in (np.sqrt(1 - 0.1 ** 2), np.sqrt(1 - 0.05 ** 2)):
        V, _ = solve_continuation(1, 3, 1.0, omega, st).rescaled()
        diffs.append(np.max(np.abs(V - st.V_hat.values)))
    assert diffs[1] < diffs[0] / 3


def test_continuation_threshold_and_omega_checks(state_1_3):
    with pytest.raises(ValueError):
        solve_continuation(1, 3, 1.0, 0.5, state_1_3)  # eps = 0.87 > 0.5
    with pytest.raises(ValueError):
        solve_continuation(1, 3, 1.0, 1.0, state_1_3)


def test_remainder_order_1d():
    st = solve_ground_state(1, 3, 1.0, build_grid(1, 30.0, 300))
    norms = []
    for eps in (0.2, 0.1, 0.05):
        w = solve_continuation(1, 3, 1.0, np.sqrt(1 - eps ** 2), st)
        norms.append(remainder_norms(w, st))
    assert all(1.8 <= p <= 2.2 for p in empirical_order(norms))


def test_wave_is_frozen(closed_1_3):
    w, _ = closed_1_3
    assert isinstance(w, SolitaryWave)
    with pytest.raises(dataclasses.FrozenInstanceError):
        w.omega = 0.5
