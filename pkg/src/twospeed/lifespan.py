"""Epsilon sweeps of the coupled system and fits of the lifespan law.

A sweep runs the coupled solver for a descending list of amplitudes, records
the first time the blowup diagnostic crosses its threshold, and re-runs each
finite blowup on a grid refined once to confirm it.  The fits regress
``log T*`` on ``eps^-2`` (the exponential law under test) and, for
comparison, on ``eps^-1`` and on ``log(1/eps)`` (a power law).

Survived runs are censored: they are counted, never imputed.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from . import __version__
from .errors import ParameterError
from .geometry import Grid
from .system import DEFAULT_THRESHOLD_FACTOR, DataFamily, initial_amplitude, solve_coupled

logger = logging.getLogger(__name__)

DEFAULT_EPSILONS = (8.0, 7.0, 6.0, 5.5, 5.0, 4.5, 4.0, 3.75, 3.5, 3.25, 3.0)
DEFAULT_HORIZON = 128.0
DEFAULT_DX = 1.0 / 32
CONFIRM_TOL = 0.10
IMMEDIATE_STEPS = 10
SWEEP_COLUMNS = ("epsilon", "T_star", "censored", "threshold", "nx", "dt", "confirmed")


@dataclass(frozen=True)
class LifespanRecord:
    """One sweep point.  ``T_star`` is ``None`` when the run survived the horizon."""

    epsilon: float
    T_star: float | None
    threshold: float
    nx: int
    dt: float
    refinement_confirmed: bool | None = None
    T_star_refined: float | None = None
    immediate: bool = False
    family: str = ""
    c: float = 2.0
    horizon: float = DEFAULT_HORIZON
    runtime: float = 0.0

    def __post_init__(self):
        if self.T_star is not None and not self.T_star > 4:
            raise ParameterError("a finite blowup time must exceed t = 4")

    @property
    def survived(self) -> bool:
        return self.T_star is None

    @property
    def grid_signature(self) -> str:
        return f"nx={self.nx},dt={self.dt:.6g}"

    def row(self) -> dict:
        return {"epsilon": self.epsilon,
                "T_star": "survived" if self.T_star is None else repr(self.T_star),
                "censored": int(self.survived), "threshold": repr(self.threshold),
                "nx": self.nx, "dt": repr(self.dt),
                "confirmed": "" if self.refinement_confirmed is None else int(self.refinement_confirmed)}

    def to_json(self) -> dict:
        return asdict(self)


def _blowup(data: DataFamily, c: float, grid: Grid, threshold: float | None, scheme: str,
            engine: str) -> tuple[float | None, float]:
    V, _ = solve_coupled(data, c, grid, scheme=scheme, threshold=threshold,
                         store_stride=grid.nsteps, engine=engine)
    return V.blowup_time, V.diagnostics["threshold"]


def run_point(data: DataFamily, c: float, horizon: float, dx: float, *, confirm: bool = True,
              threshold_factor: float = DEFAULT_THRESHOLD_FACTOR, scheme: str = "centered",
              engine: str = "numba") -> LifespanRecord:
    """Blowup time for one amplitude, confirmed on a grid with ``dx/2``."""
    t0 = time.perf_counter()
    grid = Grid.for_problem(horizon, c=c, dx=dx)
    a0 = initial_amplitude(data, grid)
    threshold = threshold_factor * a0 if a0 > 0 else None
    T, used = _blowup(data, c, grid, threshold, scheme, engine)
    immediate = T is not None and T < grid.t_start + IMMEDIATE_STEPS * grid.dt + 1e-12
    if immediate:
        logger.warning("eps=%g blows up immediately (t=%.4f): outside the asymptotic regime",
                       data.epsilon, T)
    confirmed = refined = None
    if T is not None and confirm:
        fine = Grid.for_problem(horizon, c=c, dx=dx / 2)
        a0f = initial_amplitude(data, fine)
        refined, _ = _blowup(data, c, fine, threshold_factor * a0f, scheme, engine)
        confirmed = refined is not None and abs(refined - T) <= CONFIRM_TOL * T
    return LifespanRecord(data.epsilon, T, float(used), grid.nx, grid.dt, confirmed, refined,
                          immediate, data.name, c, horizon, time.perf_counter() - t0)


def _run_point_args(args):
    data, c, horizon, dx, kw = args
    return run_point(data, c, horizon, dx, **kw)


def sweep(data: DataFamily, c: float = 2.0, epsilons: Sequence[float] = DEFAULT_EPSILONS,
          horizon: float = DEFAULT_HORIZON, dx: float = DEFAULT_DX, *, workers: int = 1,
          confirm: bool = True, early_exit: int | None = 2,
          threshold_factor: float = DEFAULT_THRESHOLD_FACTOR, scheme: str = "centered",
          engine: str = "numba") -> list[LifespanRecord]:
    """Records for ``epsilons`` (strictly descending) in the order given.

    Once ``early_exit`` consecutive amplitudes survive the horizon the sweep
    stops; smaller amplitudes are assumed to survive too.  That is a
    monotonicity heuristic, not a proof.  With ``workers > 1`` points run in
    batches of that size, so a few extra points past the exit may be computed
    and are then discarded; the returned list does not depend on ``workers``.
    """
    eps = [float(e) for e in epsilons]
    if not eps:
        raise ParameterError("epsilons must be nonempty")
    if any(e <= 0 for e in eps) or any(a <= b for a, b in zip(eps, eps[1:])):
        raise ParameterError("epsilons must be positive and strictly descending")
    if horizon <= 4:
        raise ParameterError("horizon must exceed t = 4")
    kw = dict(confirm=confirm, threshold_factor=threshold_factor, scheme=scheme, engine=engine)
    jobs = [(data.with_epsilon(e), c, horizon, dx, kw) for e in eps]
    records: list[LifespanRecord] = []
    run = 0
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for start in range(0, len(jobs), max(1, workers)):
            batch = jobs[start:start + max(1, workers)]
            results = list(pool.map(_run_point_args, batch)) if pool else [_run_point_args(batch[0])]
            for rec in results:
                records.append(rec)
                logger.info("eps=%g T*=%s", rec.epsilon, rec.T_star)
                run = run + 1 if rec.survived else 0
                if early_exit and run >= early_exit:
                    logger.info("stopping after %d consecutive survivals (heuristic)", run)
                    return records
    finally:
        if pool:
            pool.shutdown()
    return records


def measurable_window(records: Iterable[LifespanRecord]) -> list[LifespanRecord]:
    """Finite, non-immediate records, in sweep order."""
    return [r for r in records if r.T_star is not None and not r.immediate]


def is_monotone(records: Iterable[LifespanRecord], strict: bool = True) -> bool:
    """Whether ``T*`` decreases as ``eps`` increases (survivals count as infinite)."""
    pts = sorted(((r.epsilon, math.inf if r.T_star is None else r.T_star) for r in records))
    for (e1, t1), (e2, t2) in zip(pts, pts[1:]):
        if t2 > t1 or (strict and t2 == t1 and math.isfinite(t1)):
            return False
    return True


@dataclass(frozen=True)
class FitResult:
    """Least-squares line ``y = slope * x + intercept``.

    For the exponential law ``x = eps^-2`` and ``y = log T*``, so ``c_tilde``
    is the slope.  ``insufficient`` is set when fewer than three finite points
    were available; the numeric fields are then NaN.
    """

    law: str
    c_tilde: float
    intercept: float
    r_squared: float
    n_points: int
    censored_count: int
    insufficient: bool = False

    def to_json(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}


LAWS = {
    # law name -> (x transform, y transform) applied to (eps, T*)
    "exp_inv_eps2": (lambda e: e ** -2.0, np.log),
    "exp_inv_eps": (lambda e: 1.0 / e, np.log),
    "power": (lambda e: np.log(1.0 / e), np.log),
}


def _pairs(records) -> tuple[np.ndarray, np.ndarray, int]:
    """``(eps, T*)`` arrays for finite points, plus the censored count.

    Accepts records or plain ``(eps, T*)`` tuples (``T*`` may be ``None``).
    """
    eps, T, censored = [], [], 0
    for r in records:
        e, t = (r.epsilon, r.T_star) if isinstance(r, LifespanRecord) else r
        if t is None or not math.isfinite(t):
            censored += 1
            continue
        eps.append(float(e))
        T.append(float(t))
    return np.asarray(eps), np.asarray(T), censored


def _fit(law: str, eps: np.ndarray, T: np.ndarray, censored: int, min_points: int) -> FitResult:
    if eps.size < min_points:
        return FitResult(law, math.nan, math.nan, math.nan, int(eps.size), censored, True)
    fx, fy = LAWS[law]
    x, y = fx(eps), fy(T)
    if np.ptp(x) == 0:
        return FitResult(law, math.nan, math.nan, math.nan, int(eps.size), censored, True)
    res = stats.linregress(x, y)
    return FitResult(law, float(res.slope), float(res.intercept), float(res.rvalue ** 2),
                     int(eps.size), censored)


def fit_exp_law(records) -> FitResult:
    """Fit ``log T* = c_tilde / eps^2 + intercept`` over the finite points."""
    eps, T, censored = _pairs(records)
    return _fit("exp_inv_eps2", eps, T, censored, 3)


@dataclass(frozen=True)
class LawComparison:
    fits: dict[str, FitResult]
    winner: str | None
    insufficient: bool = False

    def to_json(self) -> dict:
        return {"winner": self.winner, "insufficient": self.insufficient,
                "fits": {k: f.to_json() for k, f in self.fits.items()}}


def competing_law_test(records) -> LawComparison:
    """Goodness of fit of the three candidate laws; the highest r^2 wins."""
    eps, T, censored = _pairs(records)
    fits = {law: _fit(law, eps, T, censored, 4) for law in LAWS}
    if any(f.insufficient for f in fits.values()):
        return LawComparison(fits, None, True)
    winner = max(fits, key=lambda k: fits[k].r_squared)
    return LawComparison(fits, winner)


def consistency_corridor(records) -> dict:
    """Parallel lines in ``(eps^-2, log T*)`` bracketing every finite point.

    The slope is the least-squares ``c_tilde``; the intercepts are shifted to
    the smallest and largest residual.  Vacuous (``None`` bounds) with fewer
    than three finite points.
    """
    fit = fit_exp_law(records)
    if fit.insufficient:
        return {"vacuous": True, "slope": None, "lower": None, "upper": None, "width": None}
    eps, T, _ = _pairs(records)
    resid = np.log(T) - fit.c_tilde * eps ** -2.0
    lo, hi = float(resid.min()), float(resid.max())
    return {"vacuous": False, "slope": fit.c_tilde, "lower": lo, "upper": hi, "width": hi - lo}


def threshold_insensitivity(records: Iterable[LifespanRecord], data: DataFamily, factor: float = 10.0, *,
                            dx: float = DEFAULT_DX, scheme: str = "centered",
                            engine: str = "numba") -> list[dict]:
    """Re-run each finite point with the threshold multiplied by ``factor``.

    A point passes when both blowup times fall within one dyadic time block
    of each other, i.e. ``|log2(T'/T)| < 1``.
    """
    out = []
    for r in records:
        if r.T_star is None:
            continue
        grid = Grid.for_problem(r.horizon, c=r.c, dx=dx)
        T2, _ = _blowup(data.with_epsilon(r.epsilon), r.c, grid, r.threshold * factor, scheme, engine)
        shift = math.inf if T2 is None else abs(math.log2(T2 / r.T_star))
        out.append({"epsilon": r.epsilon, "T_star": r.T_star, "T_star_perturbed": T2,
                    "log2_shift": shift, "ok": shift < 1.0})
    return out


def summarize(records: Sequence[LifespanRecord]) -> dict:
    """Fit, law comparison, corridor and monotonicity over the measurable window."""
    window = measurable_window(records)
    return {"fit": fit_exp_law(window).to_json(),
            "comparison": competing_law_test(window).to_json(),
            "corridor": consistency_corridor(window),
            "monotone": is_monotone(records), "n_records": len(records),
            "n_window": len(window), "all_survived": all(r.survived for r in records)}


def write_sweep(records: Sequence[LifespanRecord], out_dir, config: dict | None = None,
                extra: dict | None = None) -> dict[str, Path]:
    """Write ``sweep.csv`` with its JSON twin, ``fit.json`` and ``pairs.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"version": __version__, "config": config or {}}
    paths = {"csv": out / "sweep.csv", "json": out / "sweep.json", "fit": out / "fit.json",
             "pairs": out / "pairs.csv"}
    with open(paths["csv"], "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for r in records:
            w.writerow(r.row())
    paths["json"].write_text(json.dumps({**meta, "records": [r.to_json() for r in records]},
                                        indent=2, sort_keys=True))
    window = measurable_window(records)
    summary = {**meta, **summarize(records), **(extra or {})}
    paths["fit"].write_text(json.dumps(summary, indent=2, sort_keys=True))
    with open(paths["pairs"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["inv_eps2", "log_T_star"])
        for r in window:
            w.writerow([repr(r.epsilon ** -2.0), repr(math.log(r.T_star))])
    return paths


def read_sweep_csv(path) -> list[LifespanRecord]:
    """Records back from a sweep CSV (the replay input)."""
    recs = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            T = None if row["T_star"] == "survived" else float(row["T_star"])
            conf = None if row.get("confirmed", "") == "" else bool(int(row["confirmed"]))
            recs.append(LifespanRecord(float(row["epsilon"]), T, float(row["threshold"]),
                                       int(row["nx"]), float(row["dt"]), conf))
    return recs
