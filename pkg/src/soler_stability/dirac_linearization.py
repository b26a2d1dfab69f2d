"""Linearization of the Soler model at a solitary wave and its spectrum.

Perturbations ``rho = (rho_1, rho_2)`` are split into real and imaginary parts
and ordered ``(Re rho_1, Re rho_2, Im rho_1, Im rho_2)``; ``rho_1`` components
live on cell centres, ``rho_2`` components on cell faces. The evolution
generator is ``JL = [[0, L_minus], [-L_plus, 0]]`` with

    L_minus = [[m - omega - f, d_r + (n-1)/r], [-d_r, -m - omega + f]]
    L_plus  = L_minus - 2 f' [[v^2, -u v], [-u v, u^2]].

Both blocks are self-adjoint in the radially weighted inner product, so the
spectrum is symmetric under ``lambda -> -lambda`` and conjugation.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dirac_waves import SolitaryWave, default_rescaled_grid, solve_continuation
from .nls import NLSGroundState, solve_ground_state
from .radial_numerics import (
    DenseOperator,
    GridFunction,
    dense_eigenvalues,
    staggered_operators,
)

log = logging.getLogger(__name__)

TOL_REAL = 1e-6
TOL_IMAG = 1e-8
GAP_MARGIN = 0.02


class EigenClass(str, enum.Enum):
    POINT_REAL = "point-real"
    POINT_IMAGINARY_GAP = "point-imaginary-gap"
    ZERO_MODE = "zero-mode"
    ESSENTIAL_BAND_ARTIFACT = "essential-band-artifact"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class DiracLinearization:
    """Assembled ``L_minus``, ``L_plus`` and ``JL`` at a wave.

    ``f_profile`` and ``fprime_profile`` are sampled on cell centres.
    """

    wave: SolitaryWave
    f_profile: GridFunction = field(repr=False)
    fprime_profile: GridFunction = field(repr=False)
    L_minus: DenseOperator = field(repr=False)
    L_plus: DenseOperator = field(repr=False)
    JL: DenseOperator = field(repr=False)

    @property
    def weights(self) -> np.ndarray:
        """Diagonal of the inner-product weight on the ``2N`` space ``(centres, faces)``."""
        ops = staggered_operators(self.wave.grid, self.wave.order)
        return np.concatenate([ops.w_c, ops.w_f])


@dataclass(frozen=True)
class SpectrumResult:
    """Classified spectrum of a discretized ``JL``.

    Attributes:
        eigenvalues: All eigenvalues, canonically sorted.
        classification: One :class:`EigenClass` per eigenvalue.
        band_edges: ``(m - |omega|, m + |omega|)``: the gap edge and the
            embedded threshold, as magnitudes on the imaginary axis.
        refinement_stable: Per eigenvalue; ``None`` where not checked (only
            point eigenvalues are checked, and only when refinement ran).
    """

    eigenvalues: np.ndarray
    classification: tuple
    band_edges: tuple
    refinement_stable: tuple

    def of_class(self, cls: EigenClass) -> np.ndarray:
        mask = np.array([c is cls for c in self.classification], dtype=bool)
        return self.eigenvalues[mask] if len(mask) else self.eigenvalues[:0]

    def stable_real_pairs(self) -> np.ndarray:
        """Positive real parts of refinement-stable point-real eigenvalues."""
        out = [lam.real for lam, c, s in zip(self.eigenvalues, self.classification,
                                             self.refinement_stable)
               if c is EigenClass.POINT_REAL and s and lam.real > 0]
        return np.array(sorted(out, reverse=True))

    def unstable_stable_count(self, tol: float = TOL_REAL) -> int:
        """Refinement-stable eigenvalues with ``|Re| > tol`` (any class)."""
        return sum(1 for lam, s in zip(self.eigenvalues, self.refinement_stable)
                   if s and abs(lam.real) > tol)


def essential_band(omega: float, m: float):
    """Gap edge ``m - |omega|`` and embedded threshold ``m + |omega|``."""
    if abs(omega) >= m:
        raise ValueError("|omega| must be smaller than m")
    return m - abs(omega), m + abs(omega)


def assemble_linearization(w: SolitaryWave, coupling: bool = True) -> DiracLinearization:
    """Build ``L_minus``, ``L_plus`` and ``JL`` on the staggered grid of ``w``.

    Args:
        w: Converged wave.
        coupling: If false the ``f'`` term is dropped, so ``L_plus = L_minus``
            (used to isolate the effect of that term).
    """
    ops = staggered_operators(w.grid, w.order)
    N = w.grid.num_points
    v, u = w.v.values, w.u.values
    Iu = ops.interp @ u
    s = v * v - Iu * Iu
    f = s ** w.k
    fp = w.k * s ** (w.k - 1)
    m, omega = w.m, w.omega
    P, I = ops.lift, ops.interp
    L_minus = np.block([
        [np.diag(m - omega - f), ops.div],
        [-ops.grad, -(m + omega) * np.eye(N) + (P * f[None, :]) @ I],
    ])
    if coupling:
        a, b, c = fp * v * v, fp * v * Iu, fp * Iu * Iu
        L_plus = L_minus - 2.0 * np.block([
            [np.diag(a), -(b[:, None] * I)],
            [-(P * b[None, :]), (P * c[None, :]) @ I],
        ])
    else:
        L_plus = L_minus.copy()
    Z = np.zeros((2 * N, 2 * N))
    JL = np.block([[Z, L_minus], [-L_plus, Z]])
    labels = ("Re rho1", "Re rho2", "Im rho1", "Im rho2")
    return DiracLinearization(wave=w, f_profile=GridFunction(w.grid, f),
                              fprime_profile=GridFunction(w.grid, fp),
                              L_minus=DenseOperator(L_minus, ("rho1", "rho2")),
                              L_plus=DenseOperator(L_plus, ("rho1", "rho2")),
                              JL=DenseOperator(JL, labels))


def symmetrized_JL(lin: DiracLinearization) -> np.ndarray:
    """``W^(1/2) JL W^(-1/2)``: same spectrum, better balanced for the eigensolver."""
    s = np.sqrt(np.tile(lin.weights, 2))
    return (s[:, None] * lin.JL.entries) / s[None, :]


def jl_eigenvalues(lin: DiracLinearization) -> np.ndarray:
    return dense_eigenvalues(symmetrized_JL(lin))


def classify(values, omega: float, m: float, tol_real: float = TOL_REAL,
             tol_imag: float = TOL_IMAG, margin: float = GAP_MARGIN,
             zero_tol: Optional[float] = None) -> tuple:
    """Classify eigenvalues against the gap ``|Im| < m - |omega|``.

    ``zero_tol`` bounds the near-zero cluster (generalized kernel); it defaults
    to ``1e-3 (m - |omega|)``.
    """
    edge, _ = essential_band(omega, m)
    zero_tol = 1e-3 * edge if zero_tol is None else zero_tol
    out = []
    for lam in np.asarray(values, dtype=complex):
        re, im = abs(lam.real), abs(lam.imag)
        if abs(lam) < zero_tol:
            out.append(EigenClass.ZERO_MODE)
        elif im < tol_imag * (1 + abs(lam)) and re > tol_real:
            out.append(EigenClass.POINT_REAL)
        elif re <= tol_real and im < edge * (1 - margin):
            out.append(EigenClass.POINT_IMAGINARY_GAP)
        elif im >= edge * (1 - margin):
            out.append(EigenClass.ESSENTIAL_BAND_ARTIFACT)
        else:
            out.append(EigenClass.UNRESOLVED)
    return tuple(out)


POINT_CLASSES = (EigenClass.POINT_REAL, EigenClass.POINT_IMAGINARY_GAP, EigenClass.UNRESOLVED)


def point_spectrum(lin: DiracLinearization, refine: bool = True,
                   state: Optional[NLSGroundState] = None,
                   tol_real: float = TOL_REAL, tol_imag: float = TOL_IMAG,
                   margin: float = GAP_MARGIN, rel_tol: float = 0.01) -> SpectrumResult:
    """Dense spectrum of ``JL`` with classification and an optional refinement check.

    Refinement rebuilds the wave on a grid with twice the points and 1.5 times
    the radius (continuation waves only) and marks a point eigenvalue stable
    if an eigenvalue of the refined operator lies within ``rel_tol`` relative
    distance of it. Off-axis eigenvalues inside the gap are classified
    ``unresolved`` and reported, never dropped.
    """
    w = lin.wave
    values = jl_eigenvalues(lin)
    cls = classify(values, w.omega, w.m, tol_real, tol_imag, margin)
    stable = [None] * len(values)
    if refine:
        fine = _refined_values(w, state)
        for i, (lam, c) in enumerate(zip(values, cls)):
            if c in POINT_CLASSES:
                dist = np.min(np.abs(fine - lam))
                stable[i] = bool(dist < rel_tol * abs(lam))
    unresolved = [lam for lam, c in zip(values, cls) if c is EigenClass.UNRESOLVED]
    if unresolved:
        log.warning("unresolved eigenvalues inside the gap: %s", unresolved[:6])
    return SpectrumResult(eigenvalues=values, classification=cls,
                          band_edges=essential_band(w.omega, w.m),
                          refinement_stable=tuple(stable))


def _refined_values(w: SolitaryWave, state: Optional[NLSGroundState]) -> np.ndarray:
    rgrid = w.rescaled_grid.refined(2, 1.5)
    fine_state = solve_ground_state(w.n, w.k, w.m, rgrid, order=w.order)
    fine_wave = solve_continuation(w.n, w.k, w.m, w.omega, fine_state, threshold=np.inf)
    return jl_eigenvalues(assemble_linearization(fine_wave))


@dataclass(frozen=True)
class LambdaRow:
    epsilon: float
    omega: float
    lam: Optional[float]
    ratio: Optional[float]
    error: Optional[str] = None


def lambda_of_epsilon_sweep(n: int, k: int, m: float, epsilons, state: Optional[NLSGroundState] = None,
                            refine: bool = True) -> list:
    """Rows ``(eps, omega, lambda, lambda/eps^2)``; failures are recorded per row."""
    state = state or solve_ground_state(n, k, m, default_rescaled_grid(n))
    rows = []
    for eps in epsilons:
        try:
            if not 0 < eps < m:
                raise ValueError(f"epsilon must lie in (0, m), got {eps}")
            omega = float(np.sqrt(m * m - eps * eps))
            w = solve_continuation(n, k, m, omega, state, threshold=np.inf)
            spec = point_spectrum(assemble_linearization(w), refine=refine)
            pairs = spec.stable_real_pairs() if refine else np.sort(
                spec.of_class(EigenClass.POINT_REAL).real)[::-1]
            pairs = pairs[pairs > 0]
            lam = float(pairs[0]) if len(pairs) else None
            rows.append(LambdaRow(eps, omega, lam, None if lam is None else lam / eps ** 2))
        except Exception as exc:  # recorded per row; the sweep continues
            rows.append(LambdaRow(eps, float("nan"), None, None, f"{type(exc).__name__}: {exc}"))
    return rows

