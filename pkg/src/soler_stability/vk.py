"""Charge curves ``Q(omega)`` of Dirac solitary-wave families.

The charge is ``Q = int |phi|^2 = c_n int (v^2 + u^2) r^(n-1) dr``. Near the
nonrelativistic limit ``Q ~ eps^(2/k - n)``, so ``dQ/domega > 0`` close to ``m``
exactly when ``k > 2/n``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dirac_waves import SolitaryWave, continue_family, default_rescaled_grid
from .nls import check_admissible, solve_ground_state
from .radial_numerics import SPHERE_FACTOR, RadialGrid, staggered_operators

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChargeCurve:
    """Sampled ``omega -> Q(omega)`` with centred derivative estimates.

    Failed points carry ``nan`` and a note; ``dQ_domega`` is empty for fewer
    than two points.
    """

    n: int
    k: int
    m: float
    omegas: np.ndarray
    Q_values: np.ndarray
    dQ_domega: np.ndarray
    notes: tuple = field(default=(), repr=False)


def dirac_charge(w: SolitaryWave, tail_tol: float = 1e-10) -> float:
    """Charge of a discrete wave using the grid's radial weights."""
    ops = staggered_operators(w.grid, w.order)
    v, u = w.v.values, w.u.values
    peak = max(np.max(np.abs(v)), 1e-300)
    if abs(v[-1]) > tail_tol * max(1.0, peak) and peak > 0:
        warnings.warn(f"wave not decayed at r_max: |v| = {abs(v[-1]):.3g}",
                      RuntimeWarning, stacklevel=2)
    return float(SPHERE_FACTOR[w.n] * (np.sum(ops.w_c * v * v) + np.sum(ops.w_f * u * u)))


def centred_derivative(x, y) -> np.ndarray:
    """Second-order differences on a possibly non-uniform mesh (one-sided at the ends)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        return np.zeros(0)
    return np.gradient(y, x, edge_order=2 if len(x) > 2 else 1)


def charge_sweep(n: int, k: int, m: float, omega_range, count: int,
                 grid: Optional[RadialGrid] = None) -> ChargeCurve:
    """Solve waves at ``count`` equally spaced frequencies and tabulate their charge.

    The family is followed from the largest frequency downward on one rescaled
    grid, each solve seeded with the previous profile.
    """
    check_admissible(n, k)
    lo, hi = float(omega_range[0]), float(omega_range[1])
    if not 0 < lo <= hi < m:
        raise ValueError(f"omega range must lie in (0, m), got {omega_range}")
    if count < 1:
        raise ValueError("count must be positive")
    omegas = np.linspace(lo, hi, count) if count > 1 else np.array([hi])
    state = solve_ground_state(n, k, m, grid or default_rescaled_grid(n))
    waves = continue_family(n, k, m, omegas[::-1], state)[::-1]
    Q, notes = [], []
    for om, w in zip(omegas, waves):
        if isinstance(w, Exception):
            Q.append(np.nan)
            notes.append(f"omega={om:.17g}: {type(w).__name__}: {w}")
            continue
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            Q.append(dirac_charge(w))
        note = f"omega={om:.17g}: residual={w.residual_norm:.3e}"
        if caught:
            note += "; " + "; ".join(str(c.message) for c in caught)
        notes.append(note)
    Q = np.array(Q)
    return ChargeCurve(n=n, k=k, m=float(m), omegas=omegas, Q_values=Q,
                       dQ_domega=centred_derivative(omegas, Q), notes=tuple(notes))


def find_charge_minimum(curve: ChargeCurve) -> Optional[float]:
    """Interior local minimum of ``Q`` refined by a parabola through three samples.

    Returns ``None`` if the discrete minimum sits at an end of the range.
    """
    om, Q = np.asarray(curve.omegas), np.asarray(curve.Q_values)
    if len(om) < 5:
        raise ValueError("need at least five samples")
    ok = np.isfinite(Q)
    om, Q = om[ok], Q[ok]
    i = int(np.argmin(Q))
    if i == 0 or i == len(Q) - 1:
        return None
    x, y = om[i - 1:i + 2], Q[i - 1:i + 2]
    a, b, _ = np.polyfit(x - x[1], y, 2)
    if a <= 0:
        return float(x[1])
    return float(x[1] - b / (2 * a))


def limit_slope_sign(n: int, k: int) -> int:
    """Predicted sign of ``dQ/domega`` as ``omega -> m``: ``sign(n - 2/k)``."""
    return int(np.sign(n - 2.0 / k))


def charge_exponent_fit(curve: ChargeCurve) -> float:
    """Least-squares slope of ``log Q`` against ``log eps`` (expected ``2/k - n``)."""
    eps = np.sqrt(curve.m ** 2 - curve.omegas ** 2)
    ok = np.isfinite(curve.Q_values)
    return float(np.polyfit(np.log(eps[ok]), np.log(curve.Q_values[ok]), 1)[0])
