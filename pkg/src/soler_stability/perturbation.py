"""Nonrelativistic-limit perturbation theory for the real eigenvalue pair.

All quantities live on the rescaled grid ``R = eps r``. The eigenvalue problem
``JL rho = lambda rho`` becomes, with ``Phi = (Re rho_1, Re rho_2 / eps,
Im rho_1, Im rho_2 / eps)`` and ``lambda = eps^2 (Lambda + mu)``,

    (A_Lambda - mu K1 - eps^2 (Lambda + mu) K2 - W) Phi = 0,

where ``A_Lambda = JL_0 - Lambda K1`` is the limit operator, ``K1 = diag(1,0,1,0)``,
``K2 = diag(0,1,0,1)`` and ``W = JL_0 - T_eps`` is a multiplication-type
remainder of size ``O(eps^2)``. ``ker A_Lambda`` is spanned by the NLS
eigenvector lifted through ``Phi_2 = -Phi_1'/(2m)``, ``Phi_4 = -Phi_3'/(2m)``.
The adjoint kernel is ``F Phi`` with ``F`` the swap of the two halves.

Inner products carry the radial weight ``c_n r^(n-1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dirac_waves import SolitaryWave
from .nls import NLSGroundState
from .radial_numerics import SPHERE_FACTOR, DenseOperator, staggered_operators


class KernelError(RuntimeError):
    """Raised when ``A_Lambda`` does not have a one-dimensional kernel."""


class FixedPointError(RuntimeError):
    """Raised on non-contraction or exit from the ball; ``trace`` holds the history."""

    def __init__(self, message: str, trace=()):
        super().__init__(message)
        self.trace = list(trace)


@dataclass(frozen=True)
class LimitKernelData:
    """Kernel data of ``A_Lambda``.

    ``Phi`` and ``Phi_star`` are length-``4N`` vectors in block order
    ``(centres, faces, centres, faces)``; ``weights`` is the matching diagonal
    inner-product weight.
    """

    state: NLSGroundState
    Lambda: float
    A_Lambda: DenseOperator = field(repr=False)
    Phi: np.ndarray = field(repr=False)
    Phi_star: np.ndarray = field(repr=False)
    pairing: float
    weights: np.ndarray = field(repr=False)
    singular_values: tuple = ()

    def blocks(self, x=None):
        """Split a ``4N`` vector into its four components (defaults to ``Phi``)."""
        x = self.Phi if x is None else x
        return tuple(np.split(x, 4))


@dataclass(frozen=True)
class FixedPointResult:
    """Fixed point ``(mu0, zeta0)`` of the ``(M, Z)`` map and its diagnostics."""

    mu0: float
    zeta0: np.ndarray = field(repr=False)
    iterations: int
    contraction_factor: float
    Gamma_metric: float
    predicted_lambda: float
    epsilon: float
    trace: tuple = ()

    @property
    def ball_norm(self) -> float:
        """``Gamma |mu0| + ||zeta0||`` (needs the weight; stored in the trace tail)."""
        return self.trace[-1][4] if self.trace else 0.0


def _weights(grid, order):
    ops = staggered_operators(grid, order)
    w = SPHERE_FACTOR[grid.n] * np.concatenate([ops.w_c, ops.w_f])
    return np.tile(w, 2)


def _inner(x, y, w):
    return float(np.sum(w * x * y))


def _norm(x, w):
    return float(np.sqrt(np.sum(w * x * x)))


def k_matrices(N: int):
    """Diagonals of ``K1`` and ``K2`` for block size ``N``."""
    one, zero = np.ones(N), np.zeros(N)
    return np.concatenate([one, zero, one, zero]), np.concatenate([zero, one, zero, one])


def limit_operator(state: NLSGroundState) -> np.ndarray:
    """``JL_0``: the ``eps -> 0`` limit of the rescaled Dirac generator."""
    ops = staggered_operators(state.grid, state.order)
    N = state.grid.num_points
    m, k = state.m, state.k
    pot = state.V_hat.values ** (2 * k)
    Z = np.zeros((N, N))
    I = np.eye(N)
    return np.block([
        [Z, Z, np.diag(1 / (2 * m) - pot), ops.div],
        [Z, Z, -ops.grad, -2 * m * I],
        [np.diag(-1 / (2 * m) + (2 * k + 1) * pot), -ops.div, Z, Z],
        [ops.grad, 2 * m * I, Z, Z],
    ])


def assemble_A_Lambda(state: NLSGroundState, Lambda: float) -> DenseOperator:
    """``A_Lambda = JL_0 - Lambda K1``."""
    K1, _ = k_matrices(state.grid.num_points)
    return DenseOperator(limit_operator(state) - Lambda * np.diag(K1),
                         ("Phi1", "Phi2", "Phi3", "Phi4"))


def swap(x: np.ndarray) -> np.ndarray:
    """The block swap ``F``: ``(a, b, c, d) -> (c, d, a, b)``."""
    a, b, c, d = np.split(x, 4)
    return np.concatenate([c, d, a, b])


def kernel_vector(A: DenseOperator, state: NLSGroundState, Lambda: float,
                  threshold: float = 1e-6) -> LimitKernelData:
    """Unit kernel vector of ``A`` from the weighted singular value decomposition.

    The sign is fixed so that ``Re <Phi_3, Phi_1> > 0``.

    Raises:
        KernelError: If the smallest singular value exceeds ``threshold`` or the
            second smallest does not.
    """
    w = _weights(state.grid, state.order)
    s = np.sqrt(w)
    As = (s[:, None] * A.entries) / s[None, :]
    _, sv, Vh = np.linalg.svd(As)
    small = sv[-2:][::-1]
    if small[0] > threshold or small[1] <= threshold:
        raise KernelError(f"kernel not one-dimensional: smallest singular values {small}")
    Phi = Vh[-1] / s
    Phi /= _norm(Phi, w)
    p1, _, p3, _ = np.split(Phi, 4)
    N = state.grid.num_points
    wc = w[:N]
    if np.sum(wc * p3 * p1) < 0:
        Phi = -Phi
    Phi_star = swap(Phi)
    K1, _ = k_matrices(N)
    pairing = _inner(Phi_star, K1 * Phi, w)
    return LimitKernelData(state=state, Lambda=float(Lambda), A_Lambda=A, Phi=Phi,
                           Phi_star=Phi_star, pairing=pairing, weights=w,
                           singular_values=tuple(float(x) for x in sv[-3:]))


def limit_kernel(state: NLSGroundState, Lambda: float, threshold: float = 1e-6) -> LimitKernelData:
    return kernel_vector(assemble_A_Lambda(state, Lambda), state, Lambda, threshold)


def smallest_singular_value(state: NLSGroundState, Lambda: float) -> float:
    """Smallest weighted singular value of ``A_Lambda``."""
    w = _weights(state.grid, state.order)
    s = np.sqrt(w)
    A = assemble_A_Lambda(state, Lambda).entries
    return float(np.linalg.svd((s[:, None] * A) / s[None, :], compute_uv=False)[-1])


def kernel_consistency(kd: LimitKernelData) -> dict:
    """Residuals of the kernel relations, each relative to ``max |Phi|``."""
    state = kd.state
    ops = staggered_operators(state.grid, state.order)
    m, k = state.m, state.k
    p1, p2, p3, p4 = kd.blocks()
    scale = np.max(np.abs(kd.Phi))
    pot = state.V_hat.values ** (2 * k)
    lm = lambda x: (-(ops.lap @ x) + x) / (2 * m) - pot * x
    lp = lambda x: lm(x) - 2 * k * pot * x
    return {
        "phi2": float(np.max(np.abs(p2 + ops.grad @ p1 / (2 * m))) / scale),
        "phi4": float(np.max(np.abs(p4 + ops.grad @ p3 / (2 * m))) / scale),
        "l_plus": float(np.max(np.abs(lp(p1) + kd.Lambda * p3)) / scale),
        "l_minus": float(np.max(np.abs(lm(p3) - kd.Lambda * p1)) / scale),
        "A_Phi": float(np.max(np.abs(kd.A_Lambda @ kd.Phi)) / scale),
    }


# --------------------------------------------------------------------------
# remainder


def rescaled_operator(w: SolitaryWave, state: NLSGroundState) -> np.ndarray:
    """``T_eps``: the Dirac generator at ``w`` written in the rescaled unknowns."""
    ops = staggered_operators(state.grid, state.order)
    N = state.grid.num_points
    m, k, omega, e2 = w.m, w.k, w.omega, w.epsilon ** 2
    V, U = w.rescaled()
    IU = ops.interp @ U
    s = V * V - e2 * IU * IU
    sk, sk1 = s ** k, s ** (k - 1)
    P, I = ops.lift, ops.interp
    b = 2 * e2 * k * sk1 * V * IU
    Z = np.zeros((N, N))
    return np.block([
        [Z, Z, np.diag(1 / (m + omega) - sk), ops.div],
        [Z, Z, -ops.grad, -(m + omega) * np.eye(N) + e2 * (P * sk[None, :]) @ I],
        [np.diag(-(1 / (m + omega) - sk - 2 * k * sk1 * V * V)), -ops.div - b[:, None] * I, Z, Z],
        [ops.grad - P * b[None, :],
         (m + omega) * np.eye(N) - e2 * (P * (sk - 2 * e2 * k * sk1 * IU * IU)[None, :]) @ I,
         Z, Z],
    ])


def assemble_W(w: SolitaryWave, state: NLSGroundState):
    """Remainder ``W = JL_0 - T_eps`` and the sup norm of its coefficient profiles.

    Entries are formed from rescaled coefficients so the ``O(eps^2)`` size is
    not lost to cancellation.
    """
    if w.rescaled_grid.num_points != state.grid.num_points or \
            not np.isclose(w.rescaled_grid.r_max, state.grid.r_max, rtol=1e-12):
        raise ValueError("wave and NLS state must share the rescaled grid")
    ops = staggered_operators(state.grid, state.order)
    N = state.grid.num_points
    m, k, omega, e2 = w.m, w.k, w.omega, w.epsilon ** 2
    V, U = w.rescaled()
    IU = ops.interp @ U
    s = V * V - e2 * IU * IU
    sk, sk1 = s ** k, s ** (k - 1)
    pot = state.V_hat.values ** (2 * k)
    P, I = ops.lift, ops.interp
    c13 = (1 / (2 * m) - pot) - (1 / (m + omega) - sk)
    c31 = -1 / (2 * m) + (2 * k + 1) * pot + 1 / (m + omega) - sk - 2 * k * sk1 * V * V
    b = 2 * e2 * k * sk1 * V * IU
    g24 = e2 * sk
    g42 = e2 * (sk - 2 * e2 * k * sk1 * IU * IU)
    Z = np.zeros((N, N))
    Wm = np.block([
        [Z, Z, np.diag(c13), Z],
        [Z, Z, Z, (omega - m) * np.eye(N) - (P * g24[None, :]) @ I],
        [np.diag(c31), b[:, None] * I, Z, Z],
        [P * b[None, :], (m - omega) * np.eye(N) + (P * g42[None, :]) @ I, Z, Z],
    ])
    sup = max(np.max(np.abs(c13)), np.max(np.abs(c31)), np.max(np.abs(b)),
              abs(m - omega) + np.max(np.abs(g24)), abs(m - omega) + np.max(np.abs(g42)))
    return DenseOperator(Wm, ("Phi1", "Phi2", "Phi3", "Phi4")), float(sup)


# --------------------------------------------------------------------------
# fixed point


def _bordered_solver(kd: LimitKernelData):
    """Solve ``A zeta = g`` with ``zeta`` weighted-orthogonal to ``Phi`` (``g`` in range)."""
    A = kd.A_Lambda.entries
    n = A.shape[0]
    B = np.zeros((n + 1, n + 1))
    B[:n, :n] = A
    B[:n, n] = kd.Phi_star
    B[n, :n] = kd.weights * kd.Phi
    lu = scipy.linalg.lu_factor(B)

    def solve(g):
        return scipy.linalg.lu_solve(lu, np.concatenate([g, [0.0]]))[:n]

    return solve


def _project_out(kd: LimitKernelData, g):
    """``(1 - P) g`` with ``P`` the orthogonal projection onto ``Phi_star``."""
    w, ps = kd.weights, kd.Phi_star
    return g - ps * (_inner(ps, g, w) / _inner(ps, ps, w))


def gamma_metric(kd: LimitKernelData, solve=None) -> float:
    """``Gamma = max(1, 2 ||A^-1 (1 - P) K1 Phi||)``."""
    solve = solve or _bordered_solver(kd)
    K1, _ = k_matrices(kd.state.grid.num_points)
    return max(1.0, 2.0 * _norm(solve(_project_out(kd, K1 * kd.Phi)), kd.weights))


def fixed_point_MZ(kd: LimitKernelData, W, epsilon: float, tol: float = 1e-12,
                   max_iter: int = 200, enforce_ball: bool = True) -> FixedPointResult:
    """Iterate ``(mu, zeta) -> (M(mu, zeta), Z(mu, zeta))`` from ``(0, 0)``.

    Args:
        kd: Kernel data at the NLS eigenvalue.
        W: Remainder operator (``DenseOperator`` or array).
        epsilon: ``sqrt(m^2 - omega^2)``.
        tol: Stop once the step in the ``Gamma``-weighted metric is below this.
        max_iter: Iteration cap.
        enforce_ball: Raise if an iterate leaves ``Gamma |mu| + ||zeta|| <= eps``.

    Raises:
        FixedPointError: Non-contraction (step ratio >= 1 five times in a row),
            ball exit, or no convergence within ``max_iter``.
    """
    Wm = W.entries if isinstance(W, DenseOperator) else np.asarray(W, dtype=float)
    w = kd.weights
    N = kd.state.grid.num_points
    K1, K2 = k_matrices(N)
    solve = _bordered_solver(kd)
    Gamma = gamma_metric(kd, solve)
    e2 = epsilon ** 2
    Phi, Phi_s, p = kd.Phi, kd.Phi_star, kd.pairing
    mu, zeta = 0.0, np.zeros_like(Phi)
    trace = []
    prev_step, bad, ratio = None, 0, 0.0
    for it in range(1, max_iter + 1):
        psi = Phi + zeta
        rhs_rest = e2 * (kd.Lambda + mu) * K2 * psi + Wm @ psi
        mu_new = -(mu * _inner(Phi_s, K1 * zeta, w) + _inner(Phi_s, rhs_rest, w)) / p
        zeta_new = solve(_project_out(kd, mu * K1 * psi + rhs_rest))
        step = Gamma * abs(mu_new - mu) + _norm(zeta_new - zeta, w)
        mu, zeta = mu_new, zeta_new
        size = Gamma * abs(mu) + _norm(zeta, w)
        if prev_step is not None and prev_step > 0:
            ratio = step / prev_step
            bad = bad + 1 if ratio >= 1 else 0
        trace.append((it, mu, _norm(zeta, w), step, size))
        if bad >= 5:
            raise FixedPointError("map is not contracting", trace)
        if enforce_ball and size > epsilon:
            raise FixedPointError(f"iterate left the ball: {size:.3e} > eps = {epsilon:.3e}", trace)
        if step < tol:
            return FixedPointResult(mu0=float(mu), zeta0=zeta, iterations=it,
                                    contraction_factor=float(_contraction(trace)),
                                    Gamma_metric=Gamma,
                                    predicted_lambda=float(e2 * (kd.Lambda + mu)),
                                    epsilon=float(epsilon), trace=tuple(trace))
        prev_step = step
    raise FixedPointError(f"no convergence in {max_iter} iterations", trace)


def _contraction(trace) -> float:
    """Geometric mean of step ratios over the iterations before round-off dominates."""
    steps = np.array([t[3] for t in trace])
    usable = steps[steps > 1e3 * np.finfo(float).eps * max(1.0, steps[0])]
    if len(usable) < 3:
        return 0.0 if len(usable) < 2 else float(usable[1] / usable[0])
    ratios = usable[1:] / usable[:-1]
    return float(np.exp(np.mean(np.log(ratios[1:]))))


def pairing_under_refinement(state_factory, Lambda_factory, sizes) -> list:
    """Pairing ``2 Re <Phi_3, Phi_1>`` on a sequence of grids.

    ``state_factory(N)`` builds the NLS state; ``Lambda_factory(state)`` its eigenvalue.
    """
    out = []
    for N in sizes:
        st = state_factory(N)
        out.append(limit_kernel(st, Lambda_factory(st)).pairing)
    return out
