import numpy as np
import pytest

from soler_stability.dirac_linearization import EigenClass, assemble_linearization, point_spectrum
from soler_stability.dirac_waves import default_rescaled_grid, solve_continuation
from soler_stability.nls import assemble_nls_linearization, nls_unstable_eigenvalue, solve_ground_state
from soler_stability.perturbation import (
    KernelError,
    _project_out,
    assemble_A_Lambda,
    assemble_W,
    fixed_point_MZ,
    k_matrices,
    kernel_consistency,
    limit_kernel,
    rescaled_operator,
    smallest_singular_value,
    swap,
)
from soler_stability.radial_numerics import DenseOperator, build_grid


@pytest.fixture(scope="module")
def setup():
    st = solve_ground_state(1, 3, 1.0, default_rescaled_grid(1))
    Lam = nls_unstable_eigenvalue(assemble_nls_linearization(st), refine=False)
    return st, Lam, limit_kernel(st, Lam)


def _wave(st, eps):
    return solve_continuation(1, 3, 1.0, np.sqrt(1 - eps ** 2), st)


def test_decomposition(setup):
    st, Lam, _ = setup
    K1, _ = k_matrices(st.grid.num_points)
    A0 = assemble_A_Lambda(st, 0.0).entries
    assert np.array_equal(assemble_A_Lambda(st, Lam).entries, A0 - Lam * np.diag(K1))
    # JL_0 squared restricted to (Phi1, Phi3) reproduces jl through the Schur complement
    lin = assemble_nls_linearization(st)
    N = st.grid.num_points
    top = A0[:N, 2 * N:3 * N] + A0[:N, 3 * N:] @ np.linalg.solve(A0[N:2 * N, 3 * N:],
                                                                 -A0[N:2 * N, 2 * N:3 * N])
    assert np.allclose(top, lin.l_minus.entries, atol=1e-10)


def test_adjoint_structure(setup):
    st, Lam, kd = setup
    A = kd.A_Lambda.entries
    w = kd.weights
    lhs = (w[:, None] * A).T  # weighted transpose: W A^T W^-1 scaled
    F = np.vstack([swap(e) for e in np.eye(len(w))]).T
    rhs = w[:, None] * (F @ A @ F)
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * np.max(np.abs(lhs))


def test_singular_values(setup):
    st, Lam, kd = setup
    assert kd.singular_values[-1] < 1e-10
    assert smallest_singular_value(st, 1.3 * Lam) > 1e-2
    free = solve_ground_state(1, 3, 1.0, build_grid(1, 30.0, 64))
    assert smallest_singular_value(free, 1.3 * Lam) > 1e-2


def test_kernel_relations(setup):
    _, _, kd = setup
    res = kernel_consistency(kd)
    assert max(res.values()) < 1e-5
    p1, _, p3, _ = kd.blocks()
    assert kd.pairing > 0
    N = len(p1)
    wc = kd.weights[:N]
    assert kd.pairing == pytest.approx(2 * np.sum(wc * p3 * p1), rel=1e-12)


def test_kernel_error_off_eigenvalue(setup):
    st, Lam, _ = setup
    with pytest.raises(KernelError):
        limit_kernel(st, 1.3 * Lam)


def test_projection(setup):
    _, _, kd = setup
    rng = np.random.default_rng(3)
    g = rng.normal(size=len(kd.Phi))
    once = _project_out(kd, g)
    assert np.allclose(_project_out(kd, once), once, atol=1e-12)
    assert np.max(np.abs(_project_out(kd, kd.Phi_star))) < 1e-12


def test_W_definition(setup):
    st, _, kd = setup
    w = _wave(st, 0.1)
    W, _ = assemble_W(w, st)
    T = rescaled_operator(w, st)
    A0 = assemble_A_Lambda(st, 0.0).entries
    assert np.allclose(W.entries, A0 - T, atol=1e-10)


def test_W_order(setup):
    st, _, _ = setup
    sups = [assemble_W(_wave(st, e), st)[1] for e in (0.2, 0.1, 0.05)]
    orders = np.log2(np.array(sups[:-1]) / np.array(sups[1:]))
    assert np.all((orders > 1.7) & (orders < 2.3))


def test_unperturbed_fixed_point(setup):
    _, _, kd = setup
    res = fixed_point_MZ(kd, np.zeros_like(kd.A_Lambda.entries), 0.0)
    assert res.mu0 == 0.0 and res.predicted_lambda == 0.0
    assert np.max(np.abs(res.zeta0)) == 0.0


def test_prediction_and_ball(setup):
    st, Lam, kd = setup
    eps = 0.05
    w = _wave(st, eps)
    res = fixed_point_MZ(kd, assemble_W(w, st)[0], eps)
    assert res.contraction_factor < 1
    assert abs(res.mu0) <= eps / res.Gamma_metric
    assert res.ball_norm <= eps
    direct = point_spectrum(assemble_linearization(w), refine=False).of_class(EigenClass.POINT_REAL)
    lam = np.max(direct.real)
    assert res.predicted_lambda == pytest.approx(lam, rel=0.05)


def test_contraction_decreases_with_eps(setup):
    st, _, kd = setup
    factors = [fixed_point_MZ(kd, assemble_W(_wave(st, e), st)[0], e).contraction_factor
               for e in (0.1, 0.05)]
    assert factors[1] < factors[0] < 1


def test_accepts_dense_operator(setup):
    _, _, kd = setup
    Z = DenseOperator(np.zeros_like(kd.A_Lambda.entries))
    assert fixed_point_MZ(kd, Z, 0.0).iterations >= 1
