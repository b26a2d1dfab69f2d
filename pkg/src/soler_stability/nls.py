"""NLS ground states, their scaling law and the radial linearization.

Everything here lives in the rescaled variable ``R``. The ground state ``F``
solves ``-Delta F + F - F^(2k+1) = 0`` and does not depend on the mass ``m``;
``m`` only enters through the rescaled Dirac limit profiles

    V_hat = (2m)^(-1/2k) F,    U_hat = -(2m)^(-1/2k - 1) F'.

The linearization is taken at the frequency ``-1/(2m)`` fixed by the
nonrelativistic limit; other frequencies follow from the exact scaling.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .radial_numerics import (
    DEFAULT_ORDER,
    SPHERE_FACTOR,
    DenseOperator,
    GridFunction,
    RadialGrid,
    build_grid,
    dense_eigenvalues,
    even_value_at_origin,
    quadrature,
    staggered_operators,
)

log = logging.getLogger(__name__)

DEFAULT_R_MAX = 25.0
DEFAULT_POINTS = 800


class InadmissibleError(ValueError):
    """Raised for (n, k) pairs without a ground state in this model."""


class NewtonConvergenceError(RuntimeError):
    """Raised when a Newton iteration fails; ``trace`` holds residual history."""

    def __init__(self, message: str, trace=()):
        super().__init__(message)
        self.trace = list(trace)


def check_admissible(n: int, k: int) -> None:
    """Reject (n, k) outside the energy-subcritical range ``k < 2/(n-2)``."""
    if n not in (1, 2, 3):
        raise InadmissibleError(f"dimension must be 1, 2 or 3, got {n}")
    if int(k) != k or k < 1:
        raise InadmissibleError(f"k must be a positive integer, got {k}")
    if n == 3 and k != 1:
        raise InadmissibleError(f"(n={n}, k={k}) is not admissible: n=3 requires k=1")


@dataclass(frozen=True)
class NLSGroundState:
    """Ground state ``F`` with the limit Dirac profiles ``V_hat`` and ``U_hat``.

    ``F`` and ``V_hat`` live on cell centres, ``U_hat`` on cell faces.
    """

    n: int
    k: int
    m: float
    grid: RadialGrid
    F: GridFunction
    V_hat: GridFunction
    U_hat: GridFunction
    residual_norm: float
    order: int = DEFAULT_ORDER


@dataclass(frozen=True)
class NLSLinearization:
    """Radial NLS linearization ``jl = [[0, l_plus], [-l_minus, 0]]``."""

    state: NLSGroundState
    l_minus: DenseOperator = field(repr=False)
    l_plus: DenseOperator = field(repr=False)
    jl: DenseOperator = field(repr=False)


@dataclass(frozen=True)
class UnstableEigenvalueReport:
    """Outcome of the real-eigenvalue search, including the refinement check.

    Attributes:
        value: Refinement-stable ``Lambda`` or ``None``.
        candidates: Positive real eigenvalues found on the base grid.
        refined: Matching value on the refined grid (``None`` if absent).
        relative_shift: ``|refined - candidate| / candidate`` for the top candidate.
        flagged: Candidates that failed the refinement check.
    """

    value: Optional[float]
    candidates: tuple
    refined: Optional[float]
    relative_shift: Optional[float]
    flagged: tuple


def closed_form_F_1d(k: int, x):
    """1D ground state ``((k+1) / cosh^2(k x))^(1/2k)``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    x = np.asarray(x, dtype=float)
    # evaluate via log-cosh to stay finite for large |x|
    ax = np.abs(k * x)
    log_cosh = ax + np.log1p(np.exp(-2 * ax)) - np.log(2.0)
    return np.exp((np.log(k + 1.0) - 2.0 * log_cosh) / (2 * k))


def default_nls_grid(n: int, num_points: int = DEFAULT_POINTS,
                     r_max: float = DEFAULT_R_MAX) -> RadialGrid:
    return build_grid(n, r_max, num_points)


def _residual(ops, F, k):
    return -ops.lap @ F + F - F ** (2 * k + 1)


def _newton(ops, F, k, tol, max_iter=40):
    trace = []
    I = np.eye(len(F))
    for _ in range(max_iter):
        res = _residual(ops, F, k)
        norm = float(np.max(np.abs(res)))
        trace.append(norm)
        if norm < tol:
            return F, norm, trace
        J = -ops.lap + I - (2 * k + 1) * np.diag(F ** (2 * k))
        F = F - scipy.linalg.solve(J, res)
        if not np.all(np.isfinite(F)) or np.max(np.abs(F)) > 1e6:
            break
    raise NewtonConvergenceError(
        f"ground-state Newton did not converge; last residual {trace[-1]:.3e}", trace)


def _petviashvili(ops, F, k, iterations=200, tol=1e-9):
    A = np.eye(len(F)) - ops.lap
    w = ops.w_c
    lu = scipy.linalg.lu_factor(A)
    gamma = (2 * k + 1) / (2 * k)
    for _ in range(iterations):
        N = F ** (2 * k + 1)
        M = np.sum(w * F * (A @ F)) / np.sum(w * F * N)
        F_new = M ** gamma * scipy.linalg.lu_solve(lu, N)
        if np.max(np.abs(F_new - F)) < tol:
            return F_new
        F = F_new
    return F


def _initial_guess(ops, k, r):
    G = closed_form_F_1d(k, r)
    w = ops.w_c
    ratio = np.sum(w * G * (G - ops.lap @ G)) / np.sum(w * G ** (2 * k + 2))
    return ratio ** (1.0 / (2 * k)) * G


def solve_ground_state(n: int, k: int, m: float = 1.0, grid: Optional[RadialGrid] = None,
                       tol: float = 1e-10, order: int = DEFAULT_ORDER) -> NLSGroundState:
    """Positive radial ground state of ``-Delta F + F - F^(2k+1) = 0``.

    Newton's method on the staggered discretisation, started from the 1D closed
    form rescaled by the Nehari identity; Petviashvili iteration is the fallback.

    Raises:
        InadmissibleError: For (n, k) without a ground state.
        NewtonConvergenceError: If neither start converges.
    """
    check_admissible(n, k)
    if m <= 0:
        raise ValueError(f"mass must be positive, got {m}")
    grid = grid or default_nls_grid(n)
    if grid.n != n:
        raise ValueError("grid dimension does not match n")
    ops = staggered_operators(grid, order)
    r = grid.nodes
    if n == 1:
        guess = closed_form_F_1d(k, r)
    else:
        # amplitude from the Nehari identity, shape refined by Petviashvili
        guess = _petviashvili(ops, _initial_guess(ops, k, r), k, tol=1e-6)
    try:
        F, res, _ = _newton(ops, guess, k, tol)
        if F[0] < 0.5 * guess[0] or np.any(F[: len(F) // 2] <= 0):
            raise NewtonConvergenceError("Newton left the positive branch")
    except NewtonConvergenceError:
        log.info("Newton failed for (n=%d, k=%d); tightening the Petviashvili start", n, k)
        F, res, _ = _newton(ops, _petviashvili(ops, guess, k, iterations=2000), k, tol)
    if np.any(F <= 0):
        raise NewtonConvergenceError("ground state is not strictly positive")
    if F[-1] >= 1e-10:
        warnings.warn(f"ground state not decayed at r_max: F = {F[-1]:.3g}; "
                      "increase r_max", RuntimeWarning, stacklevel=2)
    return _make_state(n, k, m, grid, ops, F, res, order)


def _make_state(n, k, m, grid, ops, F, res, order):
    scale = (2.0 * m) ** (-1.0 / (2 * k))
    return NLSGroundState(
        n=n, k=k, m=float(m), grid=grid,
        F=GridFunction(grid, F),
        V_hat=GridFunction(grid, scale * F),
        U_hat=GridFunction(grid, -scale / (2.0 * m) * (ops.grad @ F), "face"),
        residual_norm=res, order=order)


def ground_state_charge_integral(state: NLSGroundState) -> float:
    """``int_{R^n} F^2`` using the end-corrected quadrature rule."""
    return quadrature(GridFunction(state.grid, state.F.values ** 2), tail_tol=np.inf)


def nls_charge(omega: float, n: int, k: int, m: float, state: NLSGroundState) -> float:
    """Charge ``|omega|^(1/k) (2 m |omega|)^(-n/2) int F^2`` of the NLS wave at ``omega < 0``."""
    if omega >= 0:
        raise ValueError(f"NLS frequency must be negative, got {omega}")
    if (n, k) != (state.n, state.k):
        raise ValueError("state does not match (n, k)")
    a = abs(omega)
    return a ** (1.0 / k) * (2.0 * m * a) ** (-n / 2.0) * ground_state_charge_integral(state)


def nls_charge_exponent(n: int, k: int) -> float:
    return 1.0 / k - n / 2.0


def assemble_nls_linearization(state: NLSGroundState) -> NLSLinearization:
    """``l_minus = -(1/2m) Delta + 1/(2m) - V_hat^(2k)`` and ``l_plus = l_minus - 2k V_hat^(2k)``."""
    ops = staggered_operators(state.grid, state.order)
    m, k = state.m, state.k
    N = state.grid.num_points
    pot = state.V_hat.values ** (2 * k)
    l_minus = -ops.lap / (2 * m) + np.diag(1.0 / (2 * m) - pot)
    l_plus = l_minus - 2 * k * np.diag(pot)
    Z = np.zeros((N, N))
    jl = np.block([[Z, l_plus], [-l_minus, Z]])
    return NLSLinearization(state=state,
                            l_minus=DenseOperator(l_minus, ("l-",)),
                            l_plus=DenseOperator(l_plus, ("l+",)),
                            jl=DenseOperator(jl, ("Re rho", "Im rho")))


def real_positive_eigenvalues(values, tol_real=1e-6, tol_imag=1e-8):
    """Eigenvalues that are real to ``tol_imag (1 + |lambda|)`` with real part above ``tol_real``."""
    values = np.asarray(values)
    mask = (np.abs(values.imag) < tol_imag * (1 + np.abs(values))) & (values.real > tol_real)
    return np.sort(values.real[mask])[::-1]


def nls_unstable_eigenvalue_report(lin: NLSLinearization, tol_real: float = 1e-6,
                                   tol_imag: float = 1e-8, refine: bool = True,
                                   rel_tol: float = 0.01) -> UnstableEigenvalueReport:
    """Search ``jl`` for a real pair and validate it on a grid with ``2N`` points."""
    cands = real_positive_eigenvalues(dense_eigenvalues(lin.jl), tol_real, tol_imag)
    if len(cands) == 0:
        return UnstableEigenvalueReport(None, (), None, None, ())
    if not refine:
        return UnstableEigenvalueReport(float(cands[0]), tuple(cands), None, None, ())
    st = lin.state
    fine = st.grid.refined(2)
    fine_state = solve_ground_state(st.n, st.k, st.m, fine, order=st.order)
    fine_lin = assemble_nls_linearization(fine_state)
    # jl^2 is block diagonal, so the squared spectrum is an N x N solve
    squared = dense_eigenvalues(-fine_lin.l_plus.entries @ fine_lin.l_minus.entries)
    fine_c = real_positive_eigenvalues(np.sqrt(squared.astype(complex)), tol_real, tol_imag)
    stable, flagged = [], []
    matches = {}
    for c in cands:
        shift = float(np.min(np.abs(fine_c - c)) / c) if len(fine_c) else np.inf
        if len(fine_c):
            matches[float(c)] = float(fine_c[np.argmin(np.abs(fine_c - c))])
        (stable if shift < rel_tol else flagged).append((float(c), shift))
    if flagged:
        warnings.warn(f"real eigenvalue candidates failed refinement: {flagged}",
                      RuntimeWarning, stacklevel=2)
    if not stable:
        return UnstableEigenvalueReport(None, tuple(cands), None,
                                        flagged[0][1], tuple(c for c, _ in flagged))
    top, shift = max(stable)
    return UnstableEigenvalueReport(top, tuple(cands), matches[top], shift,
                                    tuple(c for c, _ in flagged))


def nls_unstable_eigenvalue(lin: NLSLinearization, tol_real: float = 1e-6,
                            tol_imag: float = 1e-8, refine: bool = True) -> Optional[float]:
    """Largest refinement-stable positive real eigenvalue ``Lambda`` of ``jl``, or ``None``."""
    return nls_unstable_eigenvalue_report(lin, tol_real, tol_imag, refine).value


def ground_state_peak(state: NLSGroundState) -> float:
    """``F(0)`` extrapolated from the first cell centres."""
    return even_value_at_origin(state.grid, state.F.values)


def charge_integral_weights(grid: RadialGrid, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Discrete ``c_n w_c`` weights consistent with the staggered operators."""
    return SPHERE_FACTOR[grid.n] * staggered_operators(grid, order).w_c
