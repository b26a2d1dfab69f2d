"""Radial grids, parity-aware differentiation, quadrature and dense eigensolves.

Profiles are radial functions on ``(0, r_max]`` sampled at cell centres
``r_i = (i + 1/2) h``; the origin is never a node. Regularity at ``r = 0`` is
imposed through ghost values obtained by reflection: even-type profiles
(``v``, ``F``) reflect with sign ``+1``, odd-type profiles (``u``) with sign
``-1``. Beyond ``r_max`` ghost values are zero.

Two families of derivative operators live here:

* :func:`d_dr` / :func:`d_dr_plus_drift` -- collocated central differences (or
  folded Chebyshev collocation) acting on a single node set.
* :func:`staggered_operators` -- the pair used by the solvers. Even-type
  fields sit on the cell centres, odd-type fields on the cell faces
  ``r_j = j h`` (``j = 1..N``). The face-to-centre divergence is defined as the
  exact negative adjoint of the centre-to-face gradient in the radially
  weighted inner product, so the discrete Dirac and Schroedinger operators
  built from them are self-adjoint and free of fermion doublers.
"""

from __future__ import annotations

import enum
import functools
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import bernoulli

# c_n in  int_{R^n} f(|x|) dx = c_n int_0^inf f(r) r^{n-1} dr
SPHERE_FACTOR = {1: 2.0, 2: 2.0 * np.pi, 3: 4.0 * np.pi}

DEFAULT_ORDER = 8
MAX_DENSE_SIZE = 6000


class Scheme(str, enum.Enum):
    UNIFORM = "uniform-centered"
    CHEBYSHEV = "chebyshev"


class Parity(str, enum.Enum):
    EVEN = "even"
    ODD = "odd"


class EigenvalueConvergenceError(RuntimeError):
    """Raised when the dense eigenvalue iteration fails to converge."""


@dataclass(frozen=True)
class RadialGrid:
    """Discretised radial half-line ``(0, r_max]``.

    Attributes:
        n: Spatial dimension (1, 2 or 3).
        r_max: Truncation radius.
        num_points: Number of nodes.
        nodes: Strictly increasing node positions, all positive.
        scheme: Node placement scheme.
    """

    n: int
    r_max: float
    num_points: int
    nodes: np.ndarray = field(repr=False)
    scheme: Scheme = Scheme.UNIFORM

    @property
    def h(self) -> float:
        if self.scheme is not Scheme.UNIFORM:
            raise ValueError("grid spacing is only defined for the uniform scheme")
        return self.r_max / self.num_points

    @property
    def faces(self) -> np.ndarray:
        """Cell faces ``j h`` for ``j = 1..N`` (the face at the origin is dropped)."""
        if self.scheme is not Scheme.UNIFORM:
            raise ValueError("staggered faces require the uniform scheme")
        return self.h * np.arange(1, self.num_points + 1)

    def scaled(self, factor: float) -> "RadialGrid":
        """Same grid with every length multiplied by ``factor``."""
        return build_grid(self.n, self.r_max * factor, self.num_points, self.scheme)

    def refined(self, points_factor: int = 2, radius_factor: float = 1.0) -> "RadialGrid":
        return build_grid(self.n, self.r_max * radius_factor,
                          int(self.num_points * points_factor), self.scheme)


@dataclass(frozen=True)
class GridFunction:
    """Real profile sampled on a grid (``location`` is ``"center"`` or ``"face"``)."""

    grid: RadialGrid
    values: np.ndarray
    location: str = "center"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.num_points,):
            raise ValueError(f"expected {self.grid.num_points} values, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def positions(self) -> np.ndarray:
        return self.grid.nodes if self.location == "center" else self.grid.faces


@dataclass(frozen=True)
class DenseOperator:
    """Dense real matrix together with a description of its block layout."""

    entries: np.ndarray = field(repr=False)
    labels: tuple = ()

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("operator must be a square matrix")
        if not np.all(np.isfinite(entries)):
            raise ValueError("operator has non-finite entries")
        object.__setattr__(self, "entries", entries)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def __matmul__(self, other):
        return self.entries @ other


def build_grid(n: int, r_max: float, num_points: int,
               scheme: Scheme | str = Scheme.UNIFORM) -> RadialGrid:
    """Build a cell-centred radial grid.

    For the uniform scheme ``node_i = (i + 1/2) r_max / num_points``. The
    Chebyshev scheme uses the positive half of the ``2 N`` Gauss-Chebyshev
    points of ``(-r_max, r_max)``, which also excludes the origin.
    """
    if n not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {n}")
    if not r_max > 0:
        raise ValueError(f"r_max must be positive, got {r_max}")
    if num_points < 16:
        raise ValueError(f"num_points must be at least 16, got {num_points}")
    scheme = Scheme(scheme)
    if scheme is Scheme.UNIFORM:
        nodes = (np.arange(num_points) + 0.5) * (r_max / num_points)
    else:
        nodes = np.sort(_chebyshev_full(num_points, r_max)[num_points:])
    return RadialGrid(n=n, r_max=float(r_max), num_points=int(num_points),
                      nodes=nodes, scheme=scheme)


def fornberg_weights(x0: float, x: Sequence[float], order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at ``x0``.

    Fornberg's recursion (Math. Comp. 51, 1988); returns one weight per point.
    """
    x = np.asarray(x, dtype=float)
    npts = len(x)
    c = np.zeros((npts, order + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = x[0] - x0
    for i in range(1, npts):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def _fold(index: int, num_points: int, sign: float):
    """Map a (possibly ghost) node index to ``(index, factor)`` or ``None``."""
    if index < 0:
        return -1 - index, sign
    if index >= num_points:
        return None
    return index, 1.0


def _check_order(order: int):
    if order < 2 or order % 2:
        raise ValueError(f"stencil order must be an even integer >= 2, got {order}")


# --------------------------------------------------------------------------
# collocated operators


def d_dr(grid: RadialGrid, parity: Parity | str, order: int = DEFAULT_ORDER) -> DenseOperator:
    """Collocated first-derivative matrix with parity ghosts at the origin.

    Central differences of the given (even) order on the uniform scheme,
    folded Chebyshev collocation otherwise. Values beyond ``r_max`` are zero.
    """
    parity = Parity(parity)
    sign = 1.0 if parity is Parity.EVEN else -1.0
    N = grid.num_points
    if grid.scheme is Scheme.CHEBYSHEV:
        full = _chebyshev_diff(_chebyshev_full(N, grid.r_max))
        # full nodes are ascending: indices N.. are positive, N-1-i mirrors N+i
        D = full[N:, N:] + sign * full[N:, :N][:, ::-1]
        return DenseOperator(D, ("d/dr", parity.value))
    _check_order(order)
    h = grid.h
    half = order // 2
    offsets = np.arange(-half, half + 1)
    w = fornberg_weights(0.0, offsets * h, 1)
    D = np.zeros((N, N))
    for i in range(N):
        for off, wk in zip(offsets, w):
            hit = _fold(i + off, N, sign)
            if hit is not None:
                D[i, hit[0]] += hit[1] * wk
    return DenseOperator(D, ("d/dr", parity.value))


def d_dr_plus_drift(grid: RadialGrid, parity: Parity | str,
                    order: int = DEFAULT_ORDER) -> DenseOperator:
    """``d/dr + (n-1)/r`` on the collocated nodes (reduces to :func:`d_dr` for n=1)."""
    D = d_dr(grid, parity, order)
    if grid.n == 1:
        return DenseOperator(D.entries, ("d/dr + (n-1)/r", Parity(parity).value))
    return DenseOperator(D.entries + np.diag((grid.n - 1) / grid.nodes),
                         ("d/dr + (n-1)/r", Parity(parity).value))


def _chebyshev_full(N: int, r_max: float) -> np.ndarray:
    j = np.arange(2 * N)
    return np.sort(-r_max * np.cos(np.pi * (j + 0.5) / (2 * N)))


def _chebyshev_diff(x: np.ndarray) -> np.ndarray:
    M = len(x)
    # barycentric weights of first-kind Chebyshev points (sign pattern only matters)
    j = np.arange(M)
    w = (-1.0) ** j * np.sin((2 * j + 1) * np.pi / (2 * M))
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    D = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


# --------------------------------------------------------------------------
# staggered operators


@dataclass(frozen=True)
class StaggeredOperators:
    """Centre/face operator family on a uniform grid.

    Attributes:
        grad: ``d/dr`` from centres (even-type) to faces, ``N x N``.
        div: ``d/dr + (n-1)/r`` from faces (odd-type) to centres; equals
            ``-diag(w_c)^{-1} grad^T diag(w_f)``.
        lap: ``div @ grad``, the radial Laplacian on centres.
        interp: Interpolation faces -> centres (odd fold).
        lift: ``diag(w_f)^{-1} interp^T diag(w_c)``, the weighted adjoint of
            ``interp`` (approximate interpolation centres -> faces for odd data).
        interp_cf: Interpolation centres -> faces (even fold), for output only.
        w_c, w_f: Radial quadrature weights (without the sphere factor).
    """

    grid: RadialGrid
    order: int
    grad: np.ndarray = field(repr=False)
    div: np.ndarray = field(repr=False)
    lap: np.ndarray = field(repr=False)
    interp: np.ndarray = field(repr=False)
    lift: np.ndarray = field(repr=False)
    interp_cf: np.ndarray = field(repr=False)
    w_c: np.ndarray = field(repr=False)
    w_f: np.ndarray = field(repr=False)


def staggered_operators(grid: RadialGrid, order: int = DEFAULT_ORDER) -> StaggeredOperators:
    """Build (and cache) the staggered operator family for ``grid``."""
    if grid.scheme is not Scheme.UNIFORM:
        raise ValueError("staggered operators require the uniform-centered scheme")
    _check_order(order)
    return _staggered(grid.n, grid.r_max, grid.num_points, order)


@functools.lru_cache(maxsize=16)
def _staggered(n: int, r_max: float, N: int, order: int) -> StaggeredOperators:
    grid = build_grid(n, r_max, N)
    h = grid.h
    half = order // 2
    c, f = grid.nodes, grid.faces

    # face j (position j h) uses centres j-half .. j+half-1
    c_off = np.arange(-half, half)
    wg = fornberg_weights(0.0, (c_off + 0.5) * h, 1)
    wi_cf = fornberg_weights(0.0, (c_off + 0.5) * h, 0)
    grad = np.zeros((N, N))
    interp_cf = np.zeros((N, N))
    for row, j in enumerate(range(1, N + 1)):
        for off, a, b in zip(c_off, wg, wi_cf):
            hit = _fold(j + off, N, 1.0)
            if hit is not None:
                grad[row, hit[0]] += hit[1] * a
                interp_cf[row, hit[0]] += hit[1] * b

    # centre i (position (i+1/2) h) uses faces i-half+1 .. i+half
    f_off = np.arange(-half + 1, half + 1)
    wi = fornberg_weights(0.0, (f_off - 0.5) * h, 0)
    interp = np.zeros((N, N))
    for i in range(N):
        for off, b in zip(f_off, wi):
            j = i + off
            if j == 0 or j > N:
                continue
            if j < 0:
                interp[i, -j - 1] -= b
            else:
                interp[i, j - 1] += b

    w_f = h * f ** (n - 1)
    w_c = h * c ** (n - 1)
    # near the origin pick centre weights that make div exact on u(r) = r
    exact = -(grad.T @ (w_f * f)) / n
    w_c[:order] = exact[:order]
    if np.any(w_c <= 0):
        raise ValueError("non-positive quadrature weight; grid too coarse")

    div = -(grad.T * w_f[None, :]) / w_c[:, None]
    lap = div @ grad
    lift = (interp.T * w_c[None, :]) / w_f[:, None]
    for arr in (grad, div, lap, interp, lift, interp_cf, w_c, w_f):
        arr.setflags(write=False)
    return StaggeredOperators(grid=grid, order=order, grad=grad, div=div, lap=lap,
                              interp=interp, lift=lift, interp_cf=interp_cf,
                              w_c=w_c, w_f=w_f)


# --------------------------------------------------------------------------
# quadrature


def quadrature(f: GridFunction, tail_tol: float = 1e-10, end_points: int = 8) -> float:
    """Radial integral ``c_n * int_0^{r_max} f(r) r^{n-1} dr``.

    Uniform grids use the midpoint rule with Euler-Maclaurin end corrections
    whose odd derivatives are estimated from ``end_points`` one-sided nodes;
    Chebyshev grids use folded Fejer weights. Warns if ``f`` has not decayed
    below ``tail_tol`` at the last node.
    """
    grid = f.grid
    values = f.values
    if abs(values[-1]) > tail_tol:
        warnings.warn(f"integrand not decayed at r_max: |f(r_max)| = {abs(values[-1]):.3g}",
                      RuntimeWarning, stacklevel=2)
    r = f.positions
    g = values * r ** (grid.n - 1)
    return SPHERE_FACTOR[grid.n] * float(_radial_weights(grid, f.location, end_points) @ g)


def quadrature_weights(grid: RadialGrid, location: str = "center",
                       end_points: int = 8) -> np.ndarray:
    """Weights ``w`` with ``c_n * sum(w * f * r^(n-1))`` approximating the integral."""
    return SPHERE_FACTOR[grid.n] * _radial_weights(grid, location, end_points)


def _radial_weights(grid: RadialGrid, location: str, K: int) -> np.ndarray:
    N = grid.num_points
    if grid.scheme is Scheme.CHEBYSHEV:
        w = _fejer_weights(2 * N) * grid.r_max
        return w[N:]
    h = grid.h
    if location == "face":
        # trapezoid on faces; the origin face carries weight h/2 times g(0) = 0
        w = np.full(N, h)
        w[-1] = h / 2
        K = min(K, N // 2)
        x = grid.faces[:K] - 0.0
        return w + _em_correction(h, x, K, trapezoid=True, at_right=False, N=N)
    w = np.full(N, h)
    K = min(K, N // 2)
    left = _em_correction(h, grid.nodes[:K], K, trapezoid=False, at_right=False, N=N)
    right = _em_correction(h, grid.nodes[-K:] - grid.r_max, K, trapezoid=False,
                           at_right=True, N=N)
    return w + left + right


def _em_correction(h, x, K, trapezoid, at_right, N):
    """Euler-Maclaurin endpoint correction expressed as nodal weights."""
    B = bernoulli(K + 1)
    corr = np.zeros(K)
    for j in range(1, K // 2 + 1):
        p = 2 * j - 1
        if p > K - 1:
            break
        beta = B[2 * j] / _fact(2 * j) if trapezoid else _bernoulli_half(2 * j, B)
        dw = fornberg_weights(0.0, x, p)
        # int = Q - sum beta h^{2j} [g^(p)(b) - g^(p)(a)]
        corr += (-1.0 if at_right else 1.0) * beta * h ** (2 * j) * dw
    out = np.zeros(N)
    if at_right:
        out[N - K:] = corr
    else:
        out[:K] = corr
    return out


def _fact(k: int) -> float:
    return float(np.prod(np.arange(1, k + 1)))


def _bernoulli_half(k: int, B) -> float:
    # B_k(1/2) = -(1 - 2^{1-k}) B_k
    return -(1.0 - 2.0 ** (1 - k)) * B[k] / _fact(k)


def _fejer_weights(M: int) -> np.ndarray:
    """Fejer's first rule on the ascending first-kind Chebyshev points of [-1, 1]."""
    j = np.arange(M)
    theta = np.pi * (j + 0.5) / M
    k = np.arange(1, M // 2 + 1)
    w = 1.0 - 2.0 * np.sum(np.cos(2 * np.outer(theta, k)) / (4 * k ** 2 - 1), axis=1)
    w *= 2.0 / M
    # theta ascending gives descending x; reverse to match ascending nodes
    return w[::-1]


# --------------------------------------------------------------------------
# eigenvalues


def canonical_sort(values: np.ndarray) -> np.ndarray:
    """Sort complex numbers by real part, then imaginary part."""
    values = np.asarray(values, dtype=complex)
    return values[np.lexsort((values.imag, values.real))]


def dense_eigenvalues(A, cap: int = MAX_DENSE_SIZE) -> np.ndarray:
    """All eigenvalues of a dense real matrix, canonically sorted.

    Backed by LAPACK ``dgeev`` (balancing + Hessenberg QR).

    Raises:
        ValueError: If the matrix exceeds ``cap``.
        EigenvalueConvergenceError: If the QR iteration does not converge.
    """
    M = A.entries if isinstance(A, DenseOperator) else np.asarray(A, dtype=float)
    if M.shape[0] > cap:
        raise ValueError(f"matrix of size {M.shape[0]} exceeds the dense cap {cap}")
    try:
        values = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise EigenvalueConvergenceError(str(exc)) from exc
    return canonical_sort(values)


def shift_invert_eigenvalues(A, sigma: float = 0.0, count: int = 12) -> np.ndarray:
    """Eigenvalues closest to ``sigma`` via shift-invert Arnoldi (opt-in, large N)."""
    from scipy.sparse.linalg import eigs

    M = A.entries if isinstance(A, DenseOperator) else np.asarray(A, dtype=float)
    try:
        values = eigs(M, k=count, sigma=sigma, return_eigenvectors=False)
    except Exception as exc:  # ARPACK reports non-convergence through several types
        raise EigenvalueConvergenceError(str(exc)) from exc
    return canonical_sort(values)


def even_value_at_origin(grid: RadialGrid, values: np.ndarray, points: int = 6) -> float:
    """Value at ``r = 0`` of an even profile, by interpolating its mirrored centres."""
    r = grid.nodes[:points]
    x = np.concatenate([-r[::-1], r])
    y = np.concatenate([values[:points][::-1], values[:points]])
    return float(fornberg_weights(0.0, x, 0) @ y)


def weighted_norm(x: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sqrt(np.sum(weights * np.abs(x) ** 2)))


def tail_decay_rate(r: np.ndarray, values: np.ndarray, lo: float, hi: float) -> Optional[float]:
    """Least-squares exponential decay rate of ``|values|`` on ``[lo, hi]``."""
    mask = (r >= lo) & (r <= hi) & (np.abs(values) > 0)
    if mask.sum() < 3:
        return None
    slope = np.polyfit(r[mask], np.log(np.abs(values[mask])), 1)[0]
    return float(-slope)
