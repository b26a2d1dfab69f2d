"""Solitary waves of the Soler model with ``f(s) = s^k``.

A wave ``(v, u)`` solves

    omega v = u' + (n-1)/r u + m v - f(v^2 - u^2) v
    omega u = -v' - m u + f(v^2 - u^2) u

with ``v`` even-type (cell centres) and ``u`` odd-type (cell faces).

Two constructions are provided. In 1D the Hamiltonian reduction gives
``X = v^2 - u^2`` from a first-order zero-energy equation, and ``(v, u)`` is
recovered pointwise. In any dimension a Newton continuation works in the
rescaled variables ``R = eps r``, ``v = eps^(1/k) V``, ``u = eps^(1+1/k) U``
with ``eps^2 = m^2 - omega^2``, starting from the NLS limit profiles.

The discrete nonlinearity is evaluated on cell centres only: ``s = v^2 - (I u)^2``
with ``I`` the face-to-centre interpolation, and the face equation carries
``P (f I u)`` where ``P`` is the weighted adjoint of ``I``. This keeps the
discrete system variational, so its linearization is self-adjoint.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .nls import (
    NewtonConvergenceError,
    NLSGroundState,
    check_admissible,
    solve_ground_state,
)
from .radial_numerics import (
    DEFAULT_ORDER,
    SPHERE_FACTOR,
    GridFunction,
    RadialGrid,
    build_grid,
    staggered_operators,
)

log = logging.getLogger(__name__)

CONTINUATION_THRESHOLD = 0.5


class Construction(str, enum.Enum):
    CLOSED_FORM_1D = "closed-form-1d"
    CONTINUATION = "continuation"


@dataclass(frozen=True)
class SolitaryWave:
    """Discrete solitary wave on the physical grid.

    Attributes:
        n, k, m: Dimension, nonlinearity power and mass.
        omega: Frequency in ``(0, m)``.
        epsilon: ``sqrt(m^2 - omega^2)``.
        grid: Physical radial grid.
        v: Even-type component on cell centres.
        u: Odd-type component on cell faces.
        construction: How the wave was obtained.
        residual_norm: Max-norm residual of the discrete wave equations.
        order: Stencil order of the staggered operators.
    """

    n: int
    k: int
    m: float
    omega: float
    epsilon: float
    grid: RadialGrid
    v: GridFunction = field(repr=False)
    u: GridFunction = field(repr=False)
    construction: Construction
    residual_norm: float
    order: int = DEFAULT_ORDER

    @property
    def rescaled_grid(self) -> RadialGrid:
        return self.grid.scaled(self.epsilon)

    def rescaled(self):
        """``(V, U)`` with ``v = eps^(1/k) V`` and ``u = eps^(1+1/k) U``."""
        e, k = self.epsilon, self.k
        return self.v.values * e ** (-1.0 / k), self.u.values * e ** (-1.0 - 1.0 / k)


@dataclass(frozen=True)
class HamiltonianProfile:
    """1D reduction variables ``X = v^2 - u^2`` and ``Y = v u``.

    ``X`` is sampled on cell centres and ``Y`` on cell faces.
    """

    grid: RadialGrid
    X: GridFunction = field(repr=False)
    Y: GridFunction = field(repr=False)
    Gamma: float


@dataclass(frozen=True)
class RemainderNorms:
    """Distance of the rescaled wave from the NLS limit profiles."""

    epsilon: float
    V_tilde: float
    U_tilde: float

    @property
    def total(self) -> float:
        return self.V_tilde + self.U_tilde


def g_of_s(s, k: int, m: float):
    """``g(s) = m - s^k``."""
    return m - np.asarray(s, dtype=float) ** k


def G_of_s(s, k: int, m: float):
    """``G(s) = m s - s^(k+1)/(k+1)``, the antiderivative of ``g`` with ``G(0) = 0``."""
    s = np.asarray(s, dtype=float)
    return m * s - s ** (k + 1) / (k + 1)


def _check_omega(omega: float, m: float):
    if not 0 < omega < m:
        raise ValueError(f"frequency must lie in (0, m) = (0, {m}), got {omega}")


def turning_point(omega: float, k: int, m: float) -> float:
    """Smallest positive root ``Gamma`` of ``omega s = G(s)``: ``((k+1)(m-omega))^(1/k)``."""
    _check_omega(omega, m)
    gamma = ((k + 1) * (m - omega)) ** (1.0 / k)
    if abs(omega * gamma - G_of_s(gamma, k, m)) > 1e-12 * max(1.0, m * gamma):
        raise ArithmeticError("turning point does not satisfy omega Gamma = G(Gamma)")
    if omega == g_of_s(gamma, k, m):
        raise ArithmeticError("degenerate turning point: omega = g(Gamma)")
    return gamma


def hamiltonian_density(v, u, omega: float, k: int, m: float):
    """``h(v, u) = (omega/2)(v^2 + u^2) - G(v^2 - u^2)/2``; vanishes along the wave."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    return 0.5 * omega * (v * v + u * u) - 0.5 * G_of_s(v * v - u * u, k, m)


# --------------------------------------------------------------------------
# 1D closed form


def _x_profile(omega, k, m, x_end, rtol=1e-13):
    """Integrate ``X' = -2 sqrt(G(X)^2 - omega^2 X^2)`` from the turning point.

    Returns a callable ``x -> (X, X')`` valid on ``[0, x_end]``.
    """
    gamma = turning_point(omega, k, m)
    eps = np.sqrt(m * m - omega * omega)
    # second-order start: X'' (0) = 4 (G g - omega^2 X) at X = Gamma
    curv = 4.0 * (G_of_s(gamma, k, m) * g_of_s(gamma, k, m) - omega ** 2 * gamma)
    x0 = 1e-4 / eps

    def log_rate(y):
        # y = log X; (log X)' = -2 sqrt((G/X)^2 - omega^2), G/X = m - X^k/(k+1)
        q = m - np.exp(k * y) / (k + 1)
        return -2.0 * np.sqrt(np.maximum(q * q - omega * omega, 0.0))

    def rate(_, y):
        return log_rate(y)

    X0 = gamma + 0.5 * curv * x0 ** 2
    sol = solve_ivp(rate, (x0, x_end), [np.log(X0)], method="DOP853",
                    rtol=rtol, atol=1e-14, dense_output=True)
    if not sol.success:
        raise ArithmeticError(f"X integration failed: {sol.message}")

    def evaluate(x):
        x = np.abs(np.asarray(x, dtype=float))
        X = np.empty_like(x)
        dX = np.empty_like(x)
        inner = x < x0
        X[inner] = gamma + 0.5 * curv * x[inner] ** 2
        dX[inner] = curv * x[inner]
        if np.any(~inner):
            y = sol.sol(x[~inner])[0]
            X[~inner] = np.exp(y)
            dX[~inner] = X[~inner] * log_rate(y)
        return X, dX

    return gamma, evaluate


def _reconstruct(X, dX, omega, k, m):
    """``(v, u)`` from ``X`` and ``X'`` with ``v > 0`` and ``u`` of the sign of ``-X'``."""
    GX = G_of_s(X, k, m) / omega
    v2 = 0.5 * (GX + X)
    u2 = 0.5 * (GX - X)
    if np.min(u2) < -1e-12 * np.max(np.abs(X)):
        raise ArithmeticError("negative radicand in (v, u) reconstruction")
    v = np.sqrt(np.maximum(v2, 0.0))
    u = np.sqrt(np.maximum(u2, 0.0)) * np.sign(-dX)
    return v, u


def solve_1d_closed(omega: float, k: int, m: float = 1.0,
                    grid: Optional[RadialGrid] = None, order: int = DEFAULT_ORDER):
    """1D wave from the zero-energy reduction; returns ``(SolitaryWave, HamiltonianProfile)``.

    ``X`` is integrated with an adaptive 8th-order Runge-Kutta method and its
    dense output is sampled on the cell centres and faces of ``grid``.
    """
    _check_omega(omega, m)
    eps = np.sqrt(m * m - omega * omega)
    grid = grid or default_wave_grid(1, eps)
    if grid.n != 1:
        raise ValueError("the closed-form construction is one-dimensional")
    gamma, evaluate = _x_profile(omega, k, m, grid.r_max)
    Xc, dXc = evaluate(grid.nodes)
    Xf, dXf = evaluate(grid.faces)
    if Xc[-1] > 1e-6 * gamma:
        raise ArithmeticError("X has not decayed on the grid; increase r_max")
    v, _ = _reconstruct(Xc, dXc, omega, k, m)
    vf, u = _reconstruct(Xf, dXf, omega, k, m)
    wave = SolitaryWave(n=1, k=k, m=float(m), omega=float(omega), epsilon=float(eps),
                        grid=grid, v=GridFunction(grid, v),
                        u=GridFunction(grid, u, "face"),
                        construction=Construction.CLOSED_FORM_1D, residual_norm=0.0,
                        order=order)
    wave = _with_residual(wave)
    profile = HamiltonianProfile(grid=grid, X=GridFunction(grid, Xc),
                                 Y=GridFunction(grid, vf * u, "face"), Gamma=gamma)
    return wave, profile


def x_profile_exact(x, omega: float, k: int, m: float):
    """Explicit solution ``X = ((k+1) eps^2 / (m + omega cosh(2 k eps x)))^(1/k)``.

    Used as an independent check of the integrated profile.
    """
    eps = np.sqrt(m * m - omega * omega)
    x = np.asarray(x, dtype=float)
    return ((k + 1) * eps ** 2 / (m + omega * np.cosh(2 * k * eps * x))) ** (1.0 / k)


# --------------------------------------------------------------------------
# discrete equations


def _equations(ops, v, u, omega, m, k):
    Iu = ops.interp @ u
    f = (v * v - Iu * Iu) ** k
    eq1 = (m - omega - f) * v + ops.div @ u
    eq2 = -(ops.grad @ v) - (m + omega) * u + ops.lift @ (f * Iu)
    return eq1, eq2


def wave_residual(w: SolitaryWave) -> float:
    """Max norm of both discrete wave equations over all nodes."""
    ops = staggered_operators(w.grid, w.order)
    eq1, eq2 = _equations(ops, w.v.values, w.u.values, w.omega, w.m, w.k)
    return float(max(np.max(np.abs(eq1)), np.max(np.abs(eq2))))


def _with_residual(w: SolitaryWave) -> SolitaryWave:
    return SolitaryWave(**{**w.__dict__, "residual_norm": wave_residual(w)})


# --------------------------------------------------------------------------
# continuation


RESCALED_R_MAX = 30.0
RESCALED_POINTS = 300


def default_rescaled_grid(n: int, num_points: int = RESCALED_POINTS,
                          r_max: float = RESCALED_R_MAX) -> RadialGrid:
    return build_grid(n, r_max, num_points)


def default_wave_grid(n: int, epsilon: float, num_points: int = RESCALED_POINTS,
                      r_max: float = RESCALED_R_MAX) -> RadialGrid:
    """Physical grid whose rescaled image is :func:`default_rescaled_grid`."""
    return build_grid(n, r_max / epsilon, num_points)


def _rescaled_system(ops, V, U, omega, m, k, eps):
    e2 = eps * eps
    IU = ops.interp @ U
    s = V * V - e2 * IU * IU
    sk = s ** k
    F1 = V / (m + omega) - sk * V + ops.div @ U
    F2 = -(ops.grad @ V) - (m + omega) * U + e2 * (ops.lift @ (sk * IU))
    return F1, F2, s, IU


def _rescaled_jacobian(ops, V, U, omega, m, k, eps, s, IU):
    e2 = eps * eps
    sk = s ** k
    dk = k * s ** (k - 1)
    N = len(V)
    J11 = np.diag(1.0 / (m + omega) - sk - 2 * dk * V * V)
    J12 = ops.div + (2 * e2 * dk * V * IU)[:, None] * ops.interp
    J21 = -ops.grad + e2 * ops.lift * (2 * dk * V * IU)[None, :]
    J22 = -(m + omega) * np.eye(N) + e2 * (ops.lift * (sk - 2 * e2 * dk * IU * IU)[None, :]) @ ops.interp
    return np.block([[J11, J12], [J21, J22]])


def _newton_rescaled(ops, V, U, omega, m, k, eps, tol, max_iter=50):
    N = len(V)
    trace = []
    F1, F2, s, IU = _rescaled_system(ops, V, U, omega, m, k, eps)
    norm = max(np.max(np.abs(F1)), np.max(np.abs(F2)))
    for _ in range(max_iter):
        trace.append(float(norm))
        if norm < tol:
            return V, U, float(norm), trace
        J = _rescaled_jacobian(ops, V, U, omega, m, k, eps, s, IU)
        step = scipy.linalg.solve(J, np.concatenate([F1, F2]))
        t = 1.0
        while t > 1e-4:
            Vn, Un = V - t * step[:N], U - t * step[N:]
            G1, G2, sn, IUn = _rescaled_system(ops, Vn, Un, omega, m, k, eps)
            new = max(np.max(np.abs(G1)), np.max(np.abs(G2)))
            if np.isfinite(new) and new < norm:
                break
            t *= 0.5
        else:
            break
        V, U, F1, F2, s, IU, norm = Vn, Un, G1, G2, sn, IUn, new
    raise NewtonConvergenceError(
        f"continuation Newton stalled at residual {trace[-1]:.3e}", trace)


def solve_continuation(n: int, k: int, m: float, omega: float,
                       state: Optional[NLSGroundState] = None,
                       grid: Optional[RadialGrid] = None,
                       tol: float = 1e-12, threshold: float = CONTINUATION_THRESHOLD,
                       initial: Optional[tuple] = None,
                       order: Optional[int] = None) -> SolitaryWave:
    """Wave at ``omega`` by Newton's method in the rescaled variables.

    Args:
        n, k, m, omega: Model parameters.
        state: NLS ground state on the rescaled grid; solved if absent.
        grid: Rescaled grid in ``R``; defaults to ``state.grid``.
        tol: Max-norm tolerance on the rescaled residual.
        threshold: Largest ``eps/m`` attempted without a supplied initial guess.
        initial: Optional rescaled ``(V, U)`` starting point.
        order: Stencil order (defaults to that of ``state``).

    Raises:
        ValueError: Invalid parameters or ``eps/m`` beyond ``threshold``.
        NewtonConvergenceError: Divergence of the Newton iteration and of the
            omega-stepping fallback, or collapse onto the zero solution.
    """
    check_admissible(n, k)
    _check_omega(omega, m)
    eps = float(np.sqrt(m * m - omega * omega))
    if initial is None and eps / m > threshold:
        raise ValueError(f"eps/m = {eps / m:.3g} exceeds the continuation threshold {threshold}")
    if state is None:
        state = solve_ground_state(n, k, m, grid or default_rescaled_grid(n),
                                   order=order or DEFAULT_ORDER)
    if state.n != n or state.k != k or state.m != m:
        raise ValueError("NLS state does not match (n, k, m)")
    grid = grid or state.grid
    if grid.num_points != state.grid.num_points or grid.r_max != state.grid.r_max:
        raise ValueError("continuation grid must coincide with the NLS grid")
    order = order or state.order
    ops = staggered_operators(grid, order)
    V0, U0 = initial if initial is not None else (state.V_hat.values, state.U_hat.values)
    try:
        V, U, res, _ = _newton_rescaled(ops, V0, U0, omega, m, k, eps, tol)
        _check_not_collapsed(V, state)
    except NewtonConvergenceError:
        log.info("direct Newton failed at omega=%.6g; stepping in omega", omega)
        V, U, res = _omega_stepping(ops, state, omega, m, k, tol)
    return _physical_wave(n, k, m, omega, eps, grid, V, U, order)


def _check_not_collapsed(V, state):
    if np.max(np.abs(V)) < 0.5 * state.V_hat.values[0]:
        raise NewtonConvergenceError("Newton collapsed onto the zero solution")


def _omega_stepping(ops, state, omega, m, k, tol):
    """Walk from close to ``m`` down to ``omega``; step starts at ``(m - omega)/8``."""
    current = m - (m - omega) / 8
    V, U = state.V_hat.values, state.U_hat.values
    step = (m - omega) / 8
    while True:
        eps = np.sqrt(m * m - current * current)
        try:
            Vn, Un, res, _ = _newton_rescaled(ops, V, U, current, m, k, eps, tol)
            _check_not_collapsed(Vn, state)
        except NewtonConvergenceError:
            step *= 0.5
            if step < 1e-8 * m:
                raise
            current = min(current + step, m - 1e-12)
            continue
        V, U = Vn, Un
        if current == omega:
            return V, U, res
        current = max(current - step, omega)


def _physical_wave(n, k, m, omega, eps, rgrid, V, U, order):
    grid = rgrid.scaled(1.0 / eps)
    wave = SolitaryWave(n=n, k=k, m=float(m), omega=float(omega), epsilon=eps, grid=grid,
                        v=GridFunction(grid, eps ** (1.0 / k) * V),
                        u=GridFunction(grid, eps ** (1.0 + 1.0 / k) * U, "face"),
                        construction=Construction.CONTINUATION, residual_norm=0.0,
                        order=order)
    return _with_residual(wave)


def continue_family(n: int, k: int, m: float, omegas, state: NLSGroundState,
                    tol: float = 1e-12) -> list:
    """Solve along ``omegas`` (ordered from ``m`` downward), seeding each solve
    with the previous rescaled profile. Failures are recorded as exceptions."""
    ops = staggered_operators(state.grid, state.order)
    out = []
    guess = None
    for omega in omegas:
        try:
            if guess is None:
                w = solve_continuation(n, k, m, omega, state, tol=tol, threshold=np.inf)
            else:
                eps = float(np.sqrt(m * m - omega * omega))
                V, U, _, _ = _newton_rescaled(ops, guess[0], guess[1], omega, m, k, eps, tol)
                _check_not_collapsed(V, state)
                w = _physical_wave(n, k, m, omega, eps, state.grid, V, U, state.order)
            guess = w.rescaled()
            out.append(w)
        except (NewtonConvergenceError, ValueError, np.linalg.LinAlgError) as exc:
            out.append(exc)
    return out


def remainder_norms(w: SolitaryWave, state: NLSGroundState) -> RemainderNorms:
    """Weighted L2 norms of ``V - V_hat`` and ``U - U_hat`` on the rescaled grid."""
    ops = staggered_operators(state.grid, state.order)
    V, U = w.rescaled()
    cn = SPHERE_FACTOR[w.n]
    dV = V - state.V_hat.values
    dU = U - state.U_hat.values
    return RemainderNorms(epsilon=w.epsilon,
                          V_tilde=float(np.sqrt(cn * np.sum(ops.w_c * dV * dV))),
                          U_tilde=float(np.sqrt(cn * np.sum(ops.w_f * dU * dU))))


def empirical_order(norms) -> list:
    """``log2`` ratios of successive remainder totals (epsilon halving each step)."""
    totals = [r.total for r in norms]
    eps = [r.epsilon for r in norms]
    return [float(np.log(totals[i] / totals[i + 1]) / np.log(eps[i] / eps[i + 1]))
            for i in range(len(totals) - 1)]

