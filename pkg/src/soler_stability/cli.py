"""Command-line driver: ``soler-stability {nls,wave,spectrum,vk,limit}``.

Each command writes into ``--out``: one or more CSV tables (first line
``# schema=<name>/1``), a JSON summary embedding the configuration, an
optional SVG, and ``run.json`` listing every emitted file with its SHA-256.
Floats are written with 17 significant digits, so identical configurations
give byte-identical files. Wall-clock timings are recorded only with
``--record-timings``.

Exit codes: 0 success, 1 numerical failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from ._svg import Figure, padded_limits
from .dirac_linearization import (
    EigenClass,
    assemble_linearization,
    jl_eigenvalues,
    point_spectrum,
)
from .dirac_waves import (
    solve_1d_closed,
    solve_continuation,
)
from .nls import (
    InadmissibleError,
    NewtonConvergenceError,
    assemble_nls_linearization,
    check_admissible,
    ground_state_peak,
    nls_unstable_eigenvalue_report,
    solve_ground_state,
)
from .perturbation import (
    FixedPointError,
    KernelError,
    assemble_W,
    fixed_point_MZ,
    limit_kernel,
)
from .radial_numerics import EigenvalueConvergenceError, build_grid
from .vk import charge_sweep, dirac_charge, find_charge_minimum

log = logging.getLogger("soler_stability")

NUMERICAL_ERRORS = (NewtonConvergenceError, EigenvalueConvergenceError, FixedPointError,
                    KernelError, ArithmeticError, np.linalg.LinAlgError)

DEFAULTS = {
    "nls": {"grid_n": 800, "rmax": 25.0},
    "wave": {"grid_n": 300, "rmax": 30.0},
    "spectrum": {"grid_n": 300, "rmax": 30.0},
    "vk": {"grid_n": 300, "rmax": 30.0},
    "limit": {"grid_n": 300, "rmax": 30.0},
}


class UsageError(ValueError):
    """Invalid configuration detected before any solve."""


@dataclass
class ExperimentConfig:
    """Resolved run configuration (command-line flags over config file over defaults).

    ``grid_n`` and ``rmax`` refer to the rescaled grid ``R = eps r`` for the
    Dirac commands and to the NLS grid for ``nls``.
    """

    command: str
    n: int = 1
    k: int = 1
    m: float = 1.0
    omega: Optional[float] = None
    omega_range: Optional[list] = None
    count: int = 40
    epsilon_list: Optional[list] = None
    grid_n: int = 300
    rmax: float = 30.0
    order: int = 8
    construction: str = "continuation"
    refine: bool = True
    newton_tol: float = 1e-12
    eig_real: float = 1e-6
    eig_imag: float = 1e-8
    margin: float = 0.02
    out: str = "out"
    svg: bool = False

    def validate(self) -> None:
        try:
            check_admissible(self.n, self.k)
        except InadmissibleError as exc:
            raise UsageError(str(exc)) from exc
        if not self.m > 0:
            raise UsageError("--m must be positive")
        if self.grid_n < 16 or not self.rmax > 0:
            raise UsageError("--grid-n must be >= 16 and --rmax positive")
        if self.order < 2 or self.order % 2:
            raise UsageError("--order must be an even integer >= 2")
        for name in ("newton_tol", "eig_real", "eig_imag", "margin"):
            if not getattr(self, name) > 0:
                raise UsageError(f"tolerance {name} must be positive")
        if self.command in ("wave", "spectrum"):
            if self.omega is None:
                raise UsageError(f"{self.command} requires --omega")
            if not 0 < self.omega < self.m:
                raise UsageError(f"--omega must lie in (0, m) = (0, {self.m})")
        if self.command == "wave" and self.construction == "closed" and self.n != 1:
            raise UsageError("the closed-form construction is one-dimensional")
        if self.command == "vk":
            if not self.omega_range or len(self.omega_range) != 2:
                raise UsageError("vk requires --omega-range LO HI")
            lo, hi = self.omega_range
            if not 0 < lo <= hi < self.m:
                raise UsageError("--omega-range must lie in (0, m)")
            if self.count < 1:
                raise UsageError("--count must be positive")
        if self.command == "limit":
            if not self.epsilon_list:
                raise UsageError("limit requires --epsilon-list")
            if any(not 0 < e < self.m for e in self.epsilon_list):
                raise UsageError("every epsilon must lie in (0, m)")


@dataclass
class RunRecord:
    config: dict
    files: dict = field(default_factory=dict)
    timings: Optional[dict] = None
    version: str = __version__


# --------------------------------------------------------------------------
# output helpers


def _num(x):
    """JSON-safe float with 17 significant digits (``None`` for nan/inf)."""
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.17g}")


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


class Writer:
    """Collects emitted files and their hashes."""

    def __init__(self, out: Path):
        self.out = out
        self.files: dict = {}
        out.mkdir(parents=True, exist_ok=True)

    def _write(self, name: str, text: str):
        data = text.encode("utf-8")
        (self.out / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def csv(self, name: str, schema: str, header, rows):
        buf = io.StringIO()
        buf.write(f"# schema={schema}/1\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_cell(x) for x in row])
        self._write(name, buf.getvalue())

    def json(self, name: str, payload: dict):
        self._write(name, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def svg(self, name: str, fig: Figure):
        self._write(name, fig.render())


def _rescaled_grid(cfg: ExperimentConfig):
    return build_grid(cfg.n, cfg.rmax, cfg.grid_n)


# --------------------------------------------------------------------------
# commands


def cmd_nls(cfg: ExperimentConfig, out: Writer) -> int:
    state = solve_ground_state(cfg.n, cfg.k, cfg.m, _rescaled_grid(cfg), order=cfg.order)
    g = state.grid
    out.csv("nls_profile.csv", "nls_profile", ["r", "F", "V_hat", "r_face", "U_hat"],
            zip(g.nodes, state.F.values, state.V_hat.values, g.faces, state.U_hat.values))
    rep = nls_unstable_eigenvalue_report(assemble_nls_linearization(state),
                                         cfg.eig_real, cfg.eig_imag, refine=cfg.refine)
    out.json("nls_summary.json", {
        "config": asdict(cfg),
        "F0": _num(ground_state_peak(state)),
        "residual": _num(state.residual_norm),
        "Lambda": "none" if rep.value is None else _num(rep.value),
        "Lambda_refined": _num(rep.refined),
        "relative_shift": _num(rep.relative_shift),
        "candidates": [_num(c) for c in rep.candidates],
        "flagged": [_num(c) for c in rep.flagged],
        "refinement_checked": cfg.refine,
    })
    if cfg.svg:
        fig = Figure(xlim=(0.0, min(g.r_max, 10.0)), ylim=padded_limits(state.F.values),
                     title=f"ground state n={cfg.n} k={cfg.k}", xlabel="R", ylabel="F")
        fig.line(g.nodes, state.F.values, color="#1f4e99", label="F")
        out.svg("nls_profile.svg", fig)
    return 0


def _make_wave(cfg: ExperimentConfig):
    eps = math.sqrt(cfg.m ** 2 - cfg.omega ** 2)
    if cfg.construction == "closed":
        grid = _rescaled_grid(cfg).scaled(1.0 / eps)
        return solve_1d_closed(cfg.omega, cfg.k, cfg.m, grid, order=cfg.order)[0], None
    state = solve_ground_state(cfg.n, cfg.k, cfg.m, _rescaled_grid(cfg), order=cfg.order)
    return solve_continuation(cfg.n, cfg.k, cfg.m, cfg.omega, state, tol=cfg.newton_tol,
                              threshold=math.inf), state


def cmd_wave(cfg: ExperimentConfig, out: Writer) -> int:
    w, _ = _make_wave(cfg)
    g = w.grid
    out.csv("wave_profile.csv", "wave_profile", ["r", "v", "r_face", "u"],
            zip(g.nodes, w.v.values, g.faces, w.u.values))
    out.json("wave_summary.json", {
        "config": asdict(cfg),
        "epsilon": _num(w.epsilon),
        "construction": w.construction.value,
        "residual": _num(w.residual_norm),
        "charge": _num(dirac_charge(w)),
        "v0": _num(w.v.values[0]),
    })
    if cfg.svg:
        vals = np.concatenate([w.v.values, w.u.values])
        fig = Figure(xlim=(0.0, min(g.r_max, 12.0 / w.epsilon)), ylim=padded_limits(vals),
                     title=f"solitary wave n={w.n} k={w.k} omega={w.omega:.6g}",
                     xlabel="r", ylabel="profile")
        fig.line(g.nodes, w.v.values, color="#1f4e99", label="v")
        fig.line(g.faces, w.u.values, color="#b22222", label="u")
        out.svg("wave_profile.svg", fig)
    return 0


def cmd_spectrum(cfg: ExperimentConfig, out: Writer) -> int:
    w, state = _make_wave(cfg)
    lin = assemble_linearization(w)
    spec = point_spectrum(lin, refine=cfg.refine, state=state, tol_real=cfg.eig_real,
                          tol_imag=cfg.eig_imag, margin=cfg.margin)
    out.csv("spectrum.csv", "spectrum", ["re", "im", "classification", "refinement_stable"],
            ((lam.real, lam.imag, c.value, s) for lam, c, s in
             zip(spec.eigenvalues, spec.classification, spec.refinement_stable)))
    counts = {c.value: 0 for c in EigenClass}
    for c in spec.classification:
        counts[c.value] += 1
    real = spec.of_class(EigenClass.POINT_REAL)
    out.json("spectrum_summary.json", {
        "config": asdict(cfg),
        "epsilon": _num(w.epsilon),
        "band_edge": _num(spec.band_edges[0]),
        "embedded_threshold": _num(spec.band_edges[1]),
        "counts": counts,
        "point_real": [[_num(z.real), _num(z.imag)] for z in real],
        "stable_real_pairs": [_num(x) for x in spec.stable_real_pairs()],
        "wave_residual": _num(w.residual_norm),
    })
    if cfg.svg:
        out.svg("spectrum.svg", _spectrum_figure(spec, w))
    return 0


def _spectrum_figure(spec, w) -> Figure:
    edge, thr = spec.band_edges
    ymax = 1.25 * thr
    real = spec.of_class(EigenClass.POINT_REAL)
    xmax = max(1.3 * float(np.max(np.abs(real.real))) if len(real) else 0.0, 0.5 * edge)
    fig = Figure(xlim=(-xmax, xmax), ylim=(-ymax, ymax),
                 title=f"spectrum n={w.n} k={w.k} omega={w.omega:.6g}",
                 xlabel="Re lambda", ylabel="Im lambda")
    for sign in (1, -1):
        fig.line([0, 0], [sign * edge, sign * ymax], color="#888888", width=4)
        fig.points([0.0], [sign * thr], color="#d4a017", radius=4)
    fig.line([0, 0], [-edge, edge], color="#cccccc", width=1, dash="4,3")
    band = [c is EigenClass.ESSENTIAL_BAND_ARTIFACT for c in spec.classification]
    ev = spec.eigenvalues
    fig.points(ev[band].real, ev[band].imag, color="#888888", radius=1.5,
               label="band (discretized)")
    for cls, color in ((EigenClass.POINT_IMAGINARY_GAP, "#2e8b57"),
                       (EigenClass.ZERO_MODE, "#000000"),
                       (EigenClass.UNRESOLVED, "#8a2be2"),
                       (EigenClass.POINT_REAL, "#b22222")):
        vals = spec.of_class(cls)
        if len(vals):
            fig.points(vals.real, vals.imag, color=color, radius=4, label=cls.value)
    return fig


def cmd_vk(cfg: ExperimentConfig, out: Writer) -> int:
    curve = charge_sweep(cfg.n, cfg.k, cfg.m, cfg.omega_range, cfg.count,
                         grid=_rescaled_grid(cfg))
    dq = curve.dQ_domega if len(curve.dQ_domega) else [None] * len(curve.omegas)
    out.csv("charge_curve.csv", "charge_curve", ["omega", "Q", "dQ_domega"],
            zip(curve.omegas, curve.Q_values, dq))
    omega_min = find_charge_minimum(curve) if len(curve.omegas) >= 5 else None
    failures = [note for note, q in zip(curve.notes, curve.Q_values) if not np.isfinite(q)]
    out.json("vk_summary.json", {
        "config": asdict(cfg),
        "omega_min": _num(omega_min),
        "failures": failures,
        "notes": list(curve.notes),
    })
    if cfg.svg:
        fig = Figure(xlim=padded_limits(curve.omegas, 0.02), ylim=padded_limits(curve.Q_values),
                     title=f"charge n={cfg.n} k={cfg.k}", xlabel="omega", ylabel="Q")
        fig.line(curve.omegas, curve.Q_values, color="#1f4e99", label="Q(omega)")
        fig.points(curve.omegas, curve.Q_values, color="#1f4e99", radius=2)
        if omega_min is not None:
            fig.line([omega_min, omega_min], fig.ylim, color="#b22222", dash="5,4",
                     label=f"minimum {omega_min:.4f}")
        out.svg("charge_curve.svg", fig)
    return 1 if failures else 0


def cmd_limit(cfg: ExperimentConfig, out: Writer) -> int:
    state = solve_ground_state(cfg.n, cfg.k, cfg.m, _rescaled_grid(cfg), order=cfg.order)
    rep = nls_unstable_eigenvalue_report(assemble_nls_linearization(state),
                                         cfg.eig_real, cfg.eig_imag, refine=cfg.refine)
    Lam = rep.value if rep.value is not None else (rep.candidates[0] if rep.candidates else None)
    kd = limit_kernel(state, Lam) if Lam is not None else None
    rows, failures = [], []
    for eps in cfg.epsilon_list:
        omega = math.sqrt(cfg.m ** 2 - eps ** 2)
        row = {"epsilon": eps, "omega": omega, "lambda": None, "predicted": None,
               "ratio": None, "mu0": None, "contraction": None}
        try:
            w = solve_continuation(cfg.n, cfg.k, cfg.m, omega, state, tol=cfg.newton_tol,
                                   threshold=math.inf)
            ev = jl_eigenvalues(assemble_linearization(w))
            real = ev[(np.abs(ev.imag) < cfg.eig_imag * (1 + np.abs(ev)))
                      & (ev.real > cfg.eig_real)]
            if len(real):
                row["lambda"] = float(np.max(real.real))
                row["ratio"] = row["lambda"] / eps ** 2
            if kd is not None:
                W, _ = assemble_W(w, state)
                fp = fixed_point_MZ(kd, W, eps, enforce_ball=False)
                row.update(predicted=fp.predicted_lambda, mu0=fp.mu0,
                           contraction=fp.contraction_factor)
        except NUMERICAL_ERRORS as exc:
            failures.append({"epsilon": eps, "reason": f"{type(exc).__name__}: {exc}"})
        rows.append(row)
    cols = ["epsilon", "omega", "lambda", "predicted", "ratio", "mu0", "contraction"]
    out.csv("limit_table.csv", "limit_table", cols, ([r[c] for c in cols] for r in rows))
    out.json("limit_summary.json", {
        "config": asdict(cfg),
        "Lambda": _num(Lam),
        "Lambda_refinement_stable": rep.value is not None,
        "rows": [{c: _num(r[c]) for c in cols} for r in rows],
        "failures": failures,
    })
    if cfg.svg:
        eps = np.array([r["epsilon"] for r in rows])
        ratio = np.array([np.nan if r["ratio"] is None else r["ratio"] for r in rows])
        pred = np.array([np.nan if r["predicted"] is None else r["predicted"] / r["epsilon"] ** 2
                         for r in rows])
        ys = np.concatenate([ratio, pred, [Lam if Lam is not None else np.nan]])
        fig = Figure(xlim=(0.0, 1.1 * float(np.max(eps))), ylim=padded_limits(ys),
                     title=f"lambda / eps^2, n={cfg.n} k={cfg.k}", xlabel="eps",
                     ylabel="lambda / eps^2")
        if Lam is not None:
            fig.line([0.0, fig.xlim[1]], [Lam, Lam], color="#888888", dash="5,4",
                     label="NLS Lambda")
        fig.points(eps, ratio, color="#b22222", radius=4, label="direct")
        fig.points(eps, pred, color="#1f4e99", radius=2.5, label="fixed point")
        out.svg("limit.svg", fig)
    return 1 if failures or Lam is None else 0


COMMANDS = {"nls": cmd_nls, "wave": cmd_wave, "spectrum": cmd_spectrum,
            "vk": cmd_vk, "limit": cmd_limit}


# --------------------------------------------------------------------------
# argument handling


def _float_list(text: str):
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="soler-stability", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI file with a [run] section")
        p.add_argument("--n", type=int)
        p.add_argument("--k", type=int)
        p.add_argument("--m", type=float)
        p.add_argument("--grid-n", type=int, dest="grid_n")
        p.add_argument("--rmax", type=float)
        p.add_argument("--order", type=int)
        p.add_argument("--out", type=str)
        p.add_argument("--svg", action="store_true", default=None)
        p.add_argument("--refine", action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--newton-tol", type=float, dest="newton_tol")
        p.add_argument("--eig-real", type=float, dest="eig_real")
        p.add_argument("--eig-imag", type=float, dest="eig_imag")
        p.add_argument("--margin", type=float)
        p.add_argument("--record-timings", action="store_true")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("wave", "spectrum"):
            p.add_argument("--omega", type=float)
            p.add_argument("--construction", choices=["continuation", "closed"])
        if name == "vk":
            p.add_argument("--omega-range", type=float, nargs=2, dest="omega_range")
            p.add_argument("--count", type=int)
        if name == "limit":
            p.add_argument("--epsilon-list", type=_float_list, dest="epsilon_list")
    return parser


def _from_file(path: Path) -> dict:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"cannot read config file {path}")
    if "run" not in cp:
        raise UsageError(f"config file {path} has no [run] section")
    sec = cp["run"]
    conv = {"n": int, "k": int, "count": int, "grid_n": int, "order": int,
            "m": float, "omega": float, "rmax": float, "newton_tol": float,
            "eig_real": float, "eig_imag": float, "margin": float,
            "omega_range": _float_list, "epsilon_list": _float_list,
            "refine": lambda s: sec.getboolean("refine"),
            "svg": lambda s: sec.getboolean("svg"),
            "out": str, "construction": str}
    values = {}
    for key, raw in sec.items():
        key = key.replace("-", "_")
        if key not in conv:
            raise UsageError(f"unknown config key {key!r}")
        try:
            values[key] = conv[key](raw)
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {raw!r}") from exc
    return values


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values = dict(DEFAULTS[args.command])
    if args.config is not None:
        values.update(_from_file(args.config))
    for key in ("n", "k", "m", "grid_n", "rmax", "order", "out", "svg", "refine", "newton_tol",
                "eig_real", "eig_imag", "margin", "omega", "construction", "omega_range",
                "count", "epsilon_list"):
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    cfg = ExperimentConfig(command=args.command, **values)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (UsageError, TypeError) as exc:
        parser.error(str(exc))  # exits with status 2
    out = Writer(Path(cfg.out))
    start = time.perf_counter()
    try:
        code = COMMANDS[cfg.command](cfg, out)
    except NUMERICAL_ERRORS as exc:
        log.error("numerical failure: %s: %s", type(exc).__name__, exc)
        code = 1
        out.json("failure.json", {"config": asdict(cfg),
                                  "error": f"{type(exc).__name__}: {exc}"})
    record = RunRecord(config=asdict(cfg), files=dict(sorted(out.files.items())))
    if args.record_timings:
        record.timings = {"total_seconds": time.perf_counter() - start}
    text = json.dumps(asdict(record), indent=2, sort_keys=True) + "\n"
    (out.out / "run.json").write_text(text, encoding="utf-8")
    return code


if __name__ == "__main__":
    sys.exit(main())
