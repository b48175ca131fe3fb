"""The coupled two-speed system on the odd line, its Picard iteration and blowup.

Fields ``V`` (speed 1) and ``W`` (speed ``c > 1``) solve

    box V   = x^{-1} W d_t V,
    box_c W = x^{-1} (d_t V)^2,

from data ``eps * (V0, V1, W0, W1)`` at ``t = 4``.  Both fields share one
staggered grid, so ``x^{-1}`` is a plain division.

Time derivative in the forcing
------------------------------
The default ``"centered"`` scheme uses ``(V^{n+1} - V^{n-1}) / (2 dt)`` in both
forcings.  The V update is then linear in ``V^{n+1}`` and is solved pointwise:

    V^{n+1} (1 - a) = 2V^n - V^{n-1} + lam^2 D^2 V^n - a V^{n-1},  a = dt W^n / (2x).

At a fixed point of the discrete Picard iteration the iterate satisfies the
same equations, so the two solvers agree to the iteration error.  The
``"lagged"`` scheme uses ``(V^n - V^{n-1}) / dt`` and is fully explicit.
"""

from __future__ import annotations

import json
import logging
import math
import tempfile
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ParameterError, ValidationError
from .geometry import Grid
from .waveop import SpaceTimeTrace, check_odd, second_difference, solve_linear

logger = logging.getLogger(__name__)

SCHEMES = ("centered", "lagged")
DEFAULT_THRESHOLD_FACTOR = 1e3


def _odd_bump(x, power: int = 1, scale: float = 1.0):
    """``scale * x^power * exp(-1/(1-x^2))`` on ``|x| < 1``; odd for odd ``power``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    xi = x[inside]
    out[inside] = scale * xi**power * np.exp(-1.0 / (1.0 - xi * xi))
    return out


def _profile(power: int, scale: float) -> Callable:
    def f(x):
        return _odd_bump(x, power, scale)
    f.__doc__ = f"{scale:g} * x^{power} * exp(-1/(1-x^2))"
    return f


FAMILY_PROFILES = {
    # V0 = x phi is the reference profile; the others vary sign and shape.
    "standard-bump": dict(V0=(1, 1.0), V1=(1, -1.0), W0=(3, 1.0), W1=(1, 0.5)),
    # Large initial velocity drives (d_t V)^2 hard.
    "pessimal": dict(V0=(1, 1.0), V1=(1, 8.0), W0=(1, 1.0), W1=(1, 4.0)),
}


@dataclass(frozen=True)
class DataFamily:
    """Odd data ``eps * (V0, V1, W0, W1)`` supported in ``|x| <= 1``.

    Profiles are ``scale * x^p * exp(-1/(1-x^2))`` with odd ``p``, so oddness is
    exact in floating point.  ``nonlinear=False`` switches the coupling off.
    """

    name: str
    epsilon: float
    nonlinear: bool = True

    def __post_init__(self):
        if self.name not in FAMILY_PROFILES:
            raise ParameterError(f"unknown data family {self.name!r}; choose from {sorted(FAMILY_PROFILES)}")
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ParameterError("epsilon must be finite and >= 0")

    def profiles(self) -> dict[str, Callable]:
        return {k: _profile(*v) for k, v in FAMILY_PROFILES[self.name].items()}

    def slices(self, x: np.ndarray) -> tuple[np.ndarray, ...]:
        """``(V(4), d_t V(4), W(4), d_t W(4))`` on the nodes ``x``."""
        p = self.profiles()
        return tuple(self.epsilon * p[k](x) for k in ("V0", "V1", "W0", "W1"))

    def with_epsilon(self, epsilon: float) -> DataFamily:
        return DataFamily(self.name, epsilon, self.nonlinear)

    def to_json(self) -> dict:
        return {"name": self.name, "epsilon": self.epsilon, "nonlinear": self.nonlinear}


def coupling_forcings(W: np.ndarray, Vt: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(x^{-1} W d_t V, x^{-1} (d_t V)^2)``; odd whenever ``W`` and ``d_t V`` are odd."""
    return W * Vt / x, Vt * Vt / x


def amplitude(V, W, Vt, Wt, Vx, Wx) -> float:
    """Blowup diagnostic: max of ``|V|, |W|`` and the root local energy densities."""
    eV = np.sqrt(0.5 * (Vt * Vt + Vx * Vx))
    eW = np.sqrt(0.5 * (Wt * Wt + Wx * Wx))
    return float(max(np.max(np.abs(V)), np.max(np.abs(W)), np.max(eV), np.max(eW)))


def _gradient(u: np.ndarray, dx: float) -> np.ndarray:
    return np.gradient(u, dx, edge_order=2)


def initial_amplitude(data: DataFamily, grid: Grid) -> float:
    v0, v1, w0, w1 = data.slices(grid.x)
    return amplitude(v0, w0, v1, w1, _gradient(v0, grid.dx), _gradient(w0, grid.dx))


ENGINES = ("numba", "numpy")


def _numpy_loop(V_prev, V_curr, W_prev, W_curr, x, dt, dx, c, nsteps, stride, threshold,
                centered, on, Vs, Ws, FV, FW, history):
    """Reference array implementation of the time loop; see :mod:`._kernels`."""
    l1, lc = (dt / dx) ** 2, (c * dt / dx) ** 2
    last = 0
    for n in range(1, nsteps + 1):
        if n == nsteps:
            # Final level: no step follows, so use the one-sided derivative.
            Vt = (V_curr - V_prev) / dt
            V_next = None
        elif centered and on:
            base = 2.0 * V_curr - V_prev + l1 * second_difference(V_curr)
            a = dt * W_curr / (2.0 * x)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                V_next = (base - a * V_prev) / (1.0 - a)
            V_next[a >= 1.0] = np.inf
            Vt = (V_next - V_prev) / (2.0 * dt)
        else:
            V_next = 2.0 * V_curr - V_prev + l1 * second_difference(V_curr)
            Vt = (V_curr - V_prev) / dt
        with np.errstate(over="ignore", invalid="ignore"):
            if on:
                fv, fw = coupling_forcings(W_curr, Vt, x)
            else:
                fv = fw = np.zeros_like(x)
            if V_next is not None and not centered and on:
                V_next = V_next + dt * dt * fv
            Wt = (W_curr - W_prev) / dt
            amp = amplitude(V_curr, W_curr, Vt, Wt, _gradient(V_curr, dx), _gradient(W_curr, dx))
        history[n] = amp
        if not np.isfinite(amp) or amp > threshold:
            return n, last
        if n % stride == 0:
            last = n // stride
            Vs[last], Ws[last], FV[last], FW[last] = V_curr, W_curr, fv, fw
        if n == nsteps:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            W_next = 2.0 * W_curr - W_prev + lc * second_difference(W_curr) + dt * dt * fw
        V_prev, V_curr, W_prev, W_curr = V_curr, V_next, W_curr, W_next
    return -1, last


def _nonzero_extent(*arrays) -> tuple[int, int]:
    mask = np.zeros(arrays[0].shape, dtype=bool)
    for a in arrays:
        mask |= a != 0
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        mid = mask.size // 2
        return mid, mid
    return int(idx[0]), int(idx[-1]) + 1


def solve_coupled(data: DataFamily, c: float, grid: Grid, *, scheme: str = "centered",
                  threshold: float | None = None, store_stride: int | None = 1,
                  cfl_limit: float = 0.9, engine: str = "numba") -> tuple[SpaceTimeTrace, SpaceTimeTrace]:
    """Integrate the coupled system from ``t = 4`` to the grid horizon or blowup.

    ``threshold`` defaults to ``1e3`` times the initial value of the
    :func:`amplitude` diagnostic.  On blowup both traces end at the last level
    below threshold and carry ``blowup_time`` (the first bad level).  The
    per-step diagnostic history is in ``V.diagnostics["amplitude"]``.

    ``engine="numba"`` runs the compiled loop, which only visits the cells the
    stencil can have reached; ``"numpy"`` is the array reference.  Both give
    the same samples.
    """
    if c <= 1:
        raise ParameterError("the coupled system needs c > 1")
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown scheme {scheme!r}")
    if engine not in ENGINES:
        raise ParameterError(f"unknown engine {engine!r}; choose from {ENGINES}")
    lam = c * grid.dt / grid.dx
    if lam > cfl_limit + 1e-12:
        raise ValidationError(f"Courant number {lam:.4f} for speed {c} exceeds {cfl_limit}")
    x, dt, dx = grid.x, grid.dt, grid.dx
    v0, v1, w0, w1 = data.slices(x)
    a0 = amplitude(v0, w0, v1, w1, _gradient(v0, dx), _gradient(w0, dx))
    if threshold is None:
        threshold = DEFAULT_THRESHOLD_FACTOR * a0 if a0 > 0 else np.inf
    elif a0 > 0 and threshold <= a0:
        raise ParameterError("threshold must exceed the initial amplitude")
    stride = store_stride or 1
    n_store = grid.nsteps // stride + 1
    Vs = np.zeros((n_store, grid.nx))
    Ws = np.zeros((n_store, grid.nx))
    FV = np.zeros((n_store, grid.nx))
    FW = np.zeros((n_store, grid.nx))
    history = np.full(grid.nsteps + 1, np.nan)
    history[0] = a0
    l1, lc = (dt / dx) ** 2, (c * dt / dx) ** 2
    on = data.nonlinear
    centered = scheme == "centered"

    fv0, fw0 = coupling_forcings(w0, v1, x) if on else (np.zeros_like(x), np.zeros_like(x))
    Vs[0], Ws[0], FV[0], FW[0] = v0, w0, fv0, fw0
    V_prev, W_prev = v0.copy(), w0.copy()
    V_curr = v0 + dt * v1 + 0.5 * l1 * second_difference(v0) + 0.5 * dt * dt * fv0
    W_curr = w0 + dt * w1 + 0.5 * lc * second_difference(w0) + 0.5 * dt * dt * fw0
    args = (V_prev, V_curr, W_prev, W_curr, x, dt, dx, float(c), grid.nsteps, stride,
            float(threshold), centered, on)
    if engine == "numba":
        from ._kernels import coupled_loop
        lo, hi = _nonzero_extent(V_prev, V_curr, W_prev, W_curr)
        bad, last = coupled_loop(*args, lo, hi, Vs, Ws, FV, FW, history)
    else:
        bad, last = _numpy_loop(*args, Vs, Ws, FV, FW, history)
    bad, last = int(bad), int(last)
    blowup = None if bad < 0 else grid.t_start + bad * dt
    n_hist = grid.nsteps + 1 if bad < 0 else bad + 1
    keep = last + 1
    prov = {"solver": "coupled", "scheme": scheme, "engine": engine, "data": data.to_json(), "c": c,
            "threshold": threshold, "cfl": lam}
    diag = {"amplitude": history[:n_hist], "threshold": threshold}
    V = SpaceTimeTrace(grid, Vs[:keep], 1.0, stride, "odd", v1.copy(), FV[:keep], blowup,
                       provenance={**prov, "field": "V"}, diagnostics=diag)
    W = SpaceTimeTrace(grid, Ws[:keep], c, stride, "odd", w1.copy(), FW[:keep], blowup,
                       provenance={**prov, "field": "W"}, diagnostics=diag)
    if blowup is not None:
        logger.info("coupled run %s eps=%g blew up at t=%.4f", data.name, data.epsilon, blowup)
    return V, W


def centered_velocity(trace: SpaceTimeTrace) -> np.ndarray:
    """``d_t`` on every level: exact data velocity at level 0, centred inside,
    one-sided at the last level.  Needs a stride-1 trace."""
    if trace.store_stride != 1:
        raise ValidationError("iteration forcings need stride-1 traces")
    s, dt = trace.samples, trace.grid.dt
    out = np.empty_like(s)
    out[0] = trace.velocity0 if trace.velocity0 is not None else (s[1] - s[0]) / dt
    out[1:-1] = (s[2:] - s[:-2]) / (2.0 * dt)
    if s.shape[0] > 1:
        out[-1] = (s[-1] - s[-2]) / dt
    return out


@dataclass
class IterationLedger:
    """Rows of the Picard iteration plus the last three iterate pairs.

    ``traces`` maps ``j`` to ``(V_j, W_j)`` for the three newest ``j``; older
    pairs are written to ``spill_dir`` when one is given, otherwise dropped.
    """

    data: DataFamily
    c: float
    grid: Grid
    k_used: int
    rows: list[dict] = field(default_factory=list)
    traces: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    blowup: float | None = None
    spill_dir: Path | None = None

    @property
    def j(self) -> int:
        return self.rows[-1]["j"] if self.rows else 0

    def A(self) -> np.ndarray:
        return np.array([row["A"] for row in self.rows])

    def M(self) -> np.ndarray:
        return np.array([row["M"] for row in self.rows])

    def contraction_ratios(self) -> np.ndarray:
        """``A_j / A_{j-1}`` for ``j >= 2`` (NaN when ``A_{j-1} = 0``)."""
        A = self.A()
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(A[:-1] > 0, A[1:] / np.where(A[:-1] > 0, A[:-1], 1.0), np.nan)

    def latest(self) -> tuple[SpaceTimeTrace, SpaceTimeTrace]:
        return self.traces[self.j]

    def to_json(self) -> dict:
        return {"data": self.data.to_json(), "c": self.c, "k_used": self.k_used,
                "grid": self.grid.signature(), "blowup": self.blowup, "rows": self.rows}


def _zero_pair(grid: Grid, c: float) -> tuple[SpaceTimeTrace, SpaceTimeTrace]:
    z = np.zeros((grid.nsteps + 1, grid.nx))
    return (SpaceTimeTrace(grid, z, 1.0, 1, "odd", np.zeros(grid.nx)),
            SpaceTimeTrace(grid, z.copy(), c, 1, "odd", np.zeros(grid.nx)))


def picard_iterate(data: DataFamily, c: float, grid: Grid, j_max: int, *, k_used: int = 1,
                   method: str = "finite_difference", spill_dir=None,
                   norms: bool = True) -> IterationLedger:
    """Run ``j_max`` Picard steps from ``V_0 = W_0 = 0``.

    Iterate ``j`` solves ``box V_j = x^{-1} W_{j-1} d_t V_{j-1}`` and
    ``box_c W_j = x^{-1} (d_t V_{j-1})^2`` with the original data; the time
    derivative is the one used by the centred direct solver, so the discrete
    fixed point is the direct solution.  Each row records ``M_j`` (twelve
    terms), ``A_j`` and ``A_j / A_{j-1}``.
    """
    from .norms import assemble_M, difference_report

    if j_max < 1:
        raise ParameterError("j_max must be >= 1")
    if c <= 1:
        raise ParameterError("the coupled system needs c > 1")
    x = grid.x
    v0, v1, w0, w1 = data.slices(x)
    ledger = IterationLedger(data, c, grid, k_used, spill_dir=Path(spill_dir) if spill_dir else None)
    ledger.traces[0] = _zero_pair(grid, c)
    window = deque([0], maxlen=3)
    prev_A = None
    for j in range(1, j_max + 1):
        Vp, Wp = ledger.traces[j - 1]
        if j == 1 or not data.nonlinear:
            fv = fw = None
        else:
            fv, fw = coupling_forcings(Wp.samples, centered_velocity(Vp), x)
        Vj = solve_linear((v0, v1), fv, 1.0, grid, store_stride=1)
        Wj = solve_linear((w0, w1), fw, c, grid, store_stride=1)
        row = {"j": j, "blowup": None}
        if Vj.blowup_time is not None or Wj.blowup_time is not None:
            ledger.blowup = min(t for t in (Vj.blowup_time, Wj.blowup_time) if t is not None)
            row["blowup"] = ledger.blowup
            ledger.rows.append(row)
            logger.info("Picard iterate %d stopped at t=%.4f", j, ledger.blowup)
            break
        ledger.traces[j] = (Vj, Wj)
        if norms:
            rep = assemble_M(Vj, Wj, c, k_used, method=method)
            diff = difference_report((Vj, Wj), (Vp, Wp), c, k_used, method=method)
            rep.j = diff.j = j
            ledger.reports[j] = (rep, diff)
            row.update(M_terms=[rep.terms[t] for t in rep.term_ids], M=rep.total, A=diff.total)
            row["contraction_ratio"] = (diff.total / prev_A) if prev_A else None
            prev_A = diff.total
        ledger.rows.append(row)
        window.append(j)
        for old in [k for k in ledger.traces if k not in window]:
            _spill(ledger, old)
    return ledger


def _spill(ledger: IterationLedger, j: int):
    pair = ledger.traces.pop(j)
    if ledger.spill_dir is None or j == 0:
        return
    from .traceio import write_trace

    ledger.spill_dir.mkdir(parents=True, exist_ok=True)
    for name, tr in zip("VW", pair):
        write_trace(ledger.spill_dir / f"iterate_{j:03d}_{name}.mswl", tr, {"iterate": j})


def blowup_time(V: SpaceTimeTrace, W: SpaceTimeTrace, threshold: float) -> float | None:
    """First time the amplitude diagnostic exceeds ``threshold``; ``None`` if it never does.

    Uses the solver's per-step history when present, else the stored levels.
    """
    hist = V.diagnostics.get("amplitude")
    if hist is not None:
        grid = V.grid
        bad = np.flatnonzero(~(np.asarray(hist) <= threshold))
        if bad.size:
            return float(grid.t_start + bad[0] * grid.dt)
        return V.blowup_time
    dt, dx = V.dt_stored, V.grid.dx
    for k in range(V.n_levels):
        if k + 1 < V.n_levels:
            Vt = (V.samples[k + 1] - V.samples[k]) / dt
            Wt = (W.samples[k + 1] - W.samples[k]) / dt
        elif k > 0:
            Vt = (V.samples[k] - V.samples[k - 1]) / dt
            Wt = (W.samples[k] - W.samples[k - 1]) / dt
        else:
            Vt = Wt = np.zeros(V.grid.nx)
        amp = amplitude(V.samples[k], W.samples[k], Vt, Wt,
                        _gradient(V.samples[k], dx), _gradient(W.samples[k], dx))
        if not np.isfinite(amp) or amp > threshold:
            return float(V.times[k])
    return V.blowup_time


@dataclass
class RadialFields:
    """Three-dimensional radial profiles ``v = V/r`` and ``w = W/r``.

    ``v`` and ``w`` are full-line traces (even in ``x``); ``positive()``
    returns the ``r > 0`` half.
    """

    v: SpaceTimeTrace
    w: SpaceTimeTrace

    def positive(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        half = self.v.grid.nx // 2
        return self.v.grid.x[half:], self.v.samples[:, half:], self.w.samples[:, half:]


def reconstruct_3d(V: SpaceTimeTrace, W: SpaceTimeTrace) -> RadialFields:
    """Undo the reduction ``V = r v``.  Staggered nodes avoid ``r = 0``."""
    for name, tr in (("V", V), ("W", W)):
        if tr.parity != "odd":
            raise ValidationError(f"{name} must be odd to reconstruct a radial field")
        check_odd(tr.samples[0], f"{name}(4)")
    x = V.grid.x
    v = V.with_samples(V.samples / x, parity="even", c=V.c)
    w = W.with_samples(W.samples / x, parity="even", c=W.c)
    return RadialFields(v, w)


def radial_residual(w: SpaceTimeTrace, c: float) -> np.ndarray:
    """``d_t^2 w - c^2 (w'' + 2 w'/r)`` at interior levels, positive nodes."""
    s = w.samples
    dt, dx = w.dt_stored, w.grid.dx
    r = w.grid.x
    wtt = (s[2:] - 2 * s[1:-1] + s[:-2]) / dt**2
    mid = s[1:-1]
    wrr = np.zeros_like(mid)
    wr = np.zeros_like(mid)
    wrr[:, 1:-1] = (mid[:, 2:] - 2 * mid[:, 1:-1] + mid[:, :-2]) / dx**2
    wr[:, 1:-1] = (mid[:, 2:] - mid[:, :-2]) / (2 * dx)
    res = wtt - c * c * (wrr + 2.0 * wr / r)
    half = w.grid.nx // 2
    return res[:, half:-1]


def ledger_to_json(ledger: IterationLedger, path=None) -> str:
    text = json.dumps(ledger.to_json(), indent=2, default=float)
    if path is not None:
        Path(path).write_text(text)
    return text


def default_spill_dir() -> Path:
    return Path(tempfile.mkdtemp(prefix="twospeed-iter-"))


CONTRACTION_BOUND = 0.6


def contraction_holds(ledger: IterationLedger, bound: float = CONTRACTION_BOUND, j_min: int = 3) -> bool:
    """``A_j / A_{j-1} <= bound`` for every ``j >= j_min`` in the ledger, with no blowup."""
    if ledger.blowup is not None:
        return False
    ratios = ledger.contraction_ratios()  # entry i is A_{i+2} / A_{i+1}
    sel = ratios[j_min - 2:]
    return bool(sel.size > 0 and np.all(np.isfinite(sel)) and np.all(sel <= bound))


def bisect_contraction(family: str, c: float, grid: Grid, lo: float, hi: float, *, j_max: int = 8,
                       steps: int = 6, bound: float = CONTRACTION_BOUND) -> tuple[float, float]:
    """Bracket the largest amplitude at which the Picard iteration contracts.

    ``lo`` must contract and ``hi`` must not; returns the final bracket after
    ``steps`` halvings (geometric midpoints).
    """
    def ok(eps):
        return contraction_holds(picard_iterate(DataFamily(family, eps), c, grid, j_max), bound)

    if not ok(lo):
        raise ValidationError(f"the iteration does not contract at the lower end eps={lo}")
    if ok(hi):
        raise ValidationError(f"the iteration still contracts at the upper end eps={hi}")
    for _ in range(steps):
        mid = math.sqrt(lo * hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi
