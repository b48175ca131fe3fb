"""Registry and numerical audit of thirteen inequality statements.

Each entry evaluates a left side and a right side on a trace pair and reports
``ratio = lhs / rhs`` with the implied constant set to 1.  The audit is a
boundedness check over a solution family, not a proof.

``E1``-``E8`` are pointwise (sup) bounds on single dyadic regions by L^2
norms over the enlarged region; the reported ratio is the worst region.
``E9``-``E11`` are energy-type statements written with squared norms, so
their sides are compared squared (degree 2).  ``E12`` and ``E13`` are Hardy
inequalities over the full line in ``x``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Callable

import numpy as np

from .errors import ParameterError, RefusedError, ValidationError
from .geometry import DEFAULT_ENLARGEMENT, Grid, RegionKind, enumerate_regions
from .norms import _labels, aggregate, positive_half, time_weights, weight_product
from .scalecalc import box_samples, d_r, d_t, scaling_fd
from .waveop import SpaceTimeTrace, manufactured_solution

logger = logging.getLogger(__name__)

DEGENERATE_RHS = 1e-14
REGION_SKIP_REL = 1e-10
SUPPORT_MARGIN_CELLS = 4
SUPPORT_TOL = 1e-12
FORCING_SOURCES = ("auto", "recorded", "box")


@dataclass(frozen=True)
class EstimateEntry:
    """One inequality: which field, which regions, how sides are evaluated."""

    id: str
    label: str
    statement: str
    field: str
    degree: int
    evaluator: Callable
    needs_odd: bool = True
    needs_c_gt_1: bool = False
    uses_p: bool = False


@dataclass
class EstimateReport:
    id: str
    lhs: float | None
    rhs: float | None
    ratio: float | None
    degenerate: bool = False
    refused: str | None = None
    p: float | None = None
    c: float | None = None
    config: str = ""
    grid: dict = field(default_factory=dict)
    worst_region: list | None = None
    n_regions: int | None = None

    def row(self) -> dict:
        return {"id": self.id, "p": self.p, "c": self.c, "config": self.config, "lhs": self.lhs,
                "rhs": self.rhs, "ratio": self.ratio, "nx": self.grid.get("nx"),
                "dt": self.grid.get("dt"), "degenerate": self.degenerate,
                "refused": self.refused or ""}


class _Context:
    """Positive-half samples and derived fields of one trace pair."""

    def __init__(self, V: SpaceTimeTrace | None, W: SpaceTimeTrace | None, c: float):
        base = V if V is not None else W
        self.V, self.W, self.c = V, W, c
        self.grid = base.grid
        self.trace = base
        self.half = positive_half(base)
        self.t = base.times
        self.r = self.grid.x[self.half]
        self.dts = base.dt_stored
        self.quad = time_weights(base)[:, None] * self.grid.dx
        self._cache: dict = {}

    def _full(self, name):
        return (self.V if name == "V" else self.W).samples

    def S(self, name: str, j: int) -> np.ndarray:
        """``S^j`` of the field, full line (finite differences)."""
        key = ("S", name, j)
        if key not in self._cache:
            if j == 0:
                self._cache[key] = self._full(name)
            else:
                prev = self.S(name, j - 1)
                self._cache[key] = scaling_fd(prev, self.t, self.grid.x, self.dts, self.grid.dx)
        return self._cache[key]

    def derivs(self, name: str, j: int) -> tuple[np.ndarray, np.ndarray]:
        key = ("D", name, j)
        if key not in self._cache:
            s = self.S(name, j)
            self._cache[key] = (d_t(s, self.dts), d_r(s, self.grid.x, self.grid.dx))
        return self._cache[key]

    def pos(self, a: np.ndarray) -> np.ndarray:
        return a[:, self.half]

    def s_sum(self, name: str, k: int, op: str = "value") -> np.ndarray:
        """``sum_{j <= k} |op S^j f|`` on the positive half."""
        total = 0.0
        for j in range(k + 1):
            total = total + np.abs(self.op(name, j, op))
        return total

    def op(self, name: str, j: int, op: str) -> np.ndarray:
        c = self.c
        if op == "value":
            return self.pos(self.S(name, j))
        if op == "box":
            speed = 1.0 if name == "V" else c
            key = ("B", name, j, speed)
            if key not in self._cache:
                self._cache[key] = box_samples(self.S(name, j), speed, self.dts, self.grid.dx)
            return self.pos(self._cache[key])
        vt, vr = (self.pos(a) for a in self.derivs(name, j))
        if op == "d_r":
            return vr
        if op == "d_u":
            return 0.5 * (vt - vr)
        if op == "d_ubar":
            return 0.5 * (vt + vr)
        if op == "d_ubar_c":
            return (vt + c * vr) / (2 * c)
        if op == "grad":
            return np.hypot(vt, vr)
        raise ValidationError(f"unknown operator {op!r}")

    def initial_derivs(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """``(d_t f, d_r f)`` at ``t = 4``, using the recorded data velocity when present."""
        tr = self.V if name == "V" else self.W
        vt_full = tr.velocity0 if tr.velocity0 is not None else d_t(tr.samples, self.dts)[0]
        vr_full = d_r(tr.samples[:1], self.grid.x, self.grid.dx)[0]
        return vt_full[self.half], vr_full[self.half]

    def forcing(self, name: str, source: str) -> np.ndarray:
        """``box f`` from the recorded forcing or from second differences.

        ``"auto"`` prefers the recorded forcing: for exact solutions the
        difference operator applied to exact samples carries truncation
        noise that would pollute a right side meant to be zero.
        """
        tr = self.V if name == "V" else self.W
        if source not in FORCING_SOURCES:
            raise ParameterError(f"unknown forcing source {source!r}")
        if source == "recorded" or (source == "auto" and tr.forcing is not None):
            if tr.forcing is None:
                raise RefusedError(f"{name} has no recorded forcing")
            return self.pos(tr.forcing)
        return self.op(name, 0, "box")

    def integral(self, density: np.ndarray) -> float:
        return float(np.sum(density * self.quad))


# --- pointwise estimates on single regions -------------------------------------------------


def _region_l2(ctx: _Context, field_vals: np.ndarray, mask: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.where(mask, field_vals * field_vals * ctx.quad, 0.0))))


def _pointwise(ctx: _Context, params: dict, speed: float, kinds, lhs_field: np.ndarray,
               rhs_terms: list[tuple[Callable, np.ndarray]]) -> dict:
    """Worst ratio over regions of ``sup_C |lhs| / sum_i coef_i ||f_i||_{L^2(C~)}``."""
    T = ctx.grid.t_end
    f = params.get("enlargement", DEFAULT_ENLARGEMENT)
    rows = []
    tt = ctx.t[:, None]
    rr = ctx.r[None, :]
    for reg in enumerate_regions(speed, T):
        if reg.kind not in kinds:
            continue
        plain = reg.contains(tt, rr)
        if not plain.any():
            continue
        big = reg.enlarged(f).contains(tt, rr)
        lhs = float(np.max(np.abs(lhs_field[plain])))
        rhs = sum(coef(reg.tau, reg.value) * _region_l2(ctx, vals, big) for coef, vals in rhs_terms)
        rows.append((reg, lhs, rhs))
    if not rows:
        return {"lhs": 0.0, "rhs": 0.0, "degenerate": True, "n_regions": 0}
    top = max(r[2] for r in rows)
    usable = [r for r in rows if r[2] > DEGENERATE_RHS and r[2] > REGION_SKIP_REL * top]
    if not usable:
        return {"lhs": max(r[1] for r in rows), "rhs": top, "degenerate": True, "n_regions": 0}
    reg, lhs, rhs = max(usable, key=lambda r: r[1] / r[2])
    return {"lhs": lhs, "rhs": rhs, "degenerate": False, "worst_region": list(reg.key),
            "n_regions": len(usable)}


R_KINDS = (RegionKind.R_BAND, RegionKind.OUTER)
U_KINDS = (RegionKind.UC_BAND,)


def _e1(ctx, params):
    c = ctx.c
    lhs = ctx.pos(ctx.S("W", 0)) / np.sqrt(ctx.r)[None, :]
    return _pointwise(ctx, params, c, R_KINDS, lhs, [
        (lambda tau, R: tau**-0.5 / R, ctx.s_sum("W", 1)),
        (lambda tau, R: tau**-0.5, ctx.s_sum("W", 1, "d_r")),
    ])


def _e2(ctx, params):
    return _pointwise(ctx, params, ctx.c, U_KINDS, ctx.pos(ctx.S("W", 0)), [
        (lambda tau, U: (tau * U) ** -0.5, ctx.s_sum("W", 1)),
        (lambda tau, U: (U / tau) ** 0.5, ctx.s_sum("W", 1, "d_r")),
    ])


def _e3(ctx, params):
    lhs = ctx.pos(ctx.S("W", 0)) / np.sqrt(ctx.r)[None, :]
    return _pointwise(ctx, params, ctx.c, R_KINDS, lhs, [
        (lambda tau, R: tau**-0.5 / R, ctx.s_sum("W", 2)),
        (lambda tau, R: tau**-0.5, ctx.s_sum("W", 1, "d_ubar_c")),
    ])


def _e4(ctx, params):
    return _pointwise(ctx, params, ctx.c, U_KINDS, ctx.pos(ctx.S("W", 0)), [
        (lambda tau, U: (tau * U) ** -0.5, ctx.s_sum("W", 2)),
        (lambda tau, U: (tau / U) ** 0.5, ctx.s_sum("W", 1, "d_ubar_c")),
    ])


def _e5(ctx, params):
    r14 = ctx.r[None, :] ** 0.25
    return _pointwise(ctx, params, 1.0, R_KINDS, ctx.pos(ctx.S("V", 0)), [
        (lambda tau, R: (tau * R) ** -0.5, ctx.s_sum("V", 2)),
        (lambda tau, R: R**0.25 * tau**-0.5, r14 * ctx.s_sum("V", 1, "d_ubar")),
    ])


def _e6(ctx, params):
    return _pointwise(ctx, params, 1.0, U_KINDS, ctx.pos(ctx.S("V", 0)), [
        (lambda tau, U: (tau * U) ** -0.5, ctx.s_sum("V", 2)),
        (lambda tau, U: (tau / U) ** 0.5, ctx.s_sum("V", 1, "d_ubar")),
    ])


def _e7(ctx, params):
    r14 = ctx.r[None, :] ** 0.25
    return _pointwise(ctx, params, 1.0, R_KINDS, ctx.op("V", 0, "grad"), [
        (lambda tau, R: (tau * R) ** -0.5, ctx.s_sum("V", 2, "grad")),
        (lambda tau, R: R**0.25 * tau**-0.5, r14 * ctx.s_sum("V", 1, "box")),
    ])


def _e8(ctx, params):
    return _pointwise(ctx, params, 1.0, U_KINDS, ctx.op("V", 0, "grad"), [
        (lambda tau, U: (tau * U) ** -0.5, ctx.s_sum("V", 2, "grad")),
        (lambda tau, U: (tau / U) ** 0.5, ctx.s_sum("V", 1, "box")),
    ])


# --- energy-type estimates -----------------------------------------------------------------


def _family_norm(ctx: _Context, density_field: np.ndarray, speed: float, family: str, spec: str) -> float:
    """Aggregate of per-region L^2 norms of an already weighted field."""
    labels = _labels(ctx.trace, speed)
    kinds = R_KINDS if family == "R" else (RegionKind.UC_BAND, RegionKind.OUTER)
    flat = labels.labels.ravel()
    inside = flat >= 0
    dens = (density_field**2 * ctx.quad).ravel()
    sums = np.bincount(flat[inside], weights=dens[inside], minlength=len(labels.regions))
    counts = np.bincount(flat[inside], minlength=len(labels.regions))
    sel = labels.family(kinds)
    vals = {reg: float(np.sqrt(sums[k])) for k, reg in enumerate(labels.regions) if sel[k] and counts[k]}
    return aggregate(vals, spec)


def _weights(ctx, **exps) -> np.ndarray:
    names = {"r": "r", "jr": "<r>", "ju": "<u>", "jub": "<ubar>", "juc": "<u_c>"}
    return weight_product({names[k]: v for k, v in exps.items()}, ctx.t, ctx.r, ctx.c)


def _scalar(lhs: float, rhs: float) -> dict:
    return {"lhs": lhs, "rhs": rhs, "degenerate": rhs <= DEGENERATE_RHS}


def _e9(ctx, params):
    p = params.get("p", 0)
    c = ctx.c
    dub = ctx.op("V", 0, "d_ubar")
    lhs = (_family_norm(ctx, _weights(ctx, r=-0.25, jr=-0.25, jub=p / 2) * dub, 1.0, "R", "linf_R l2_tau") ** 2
           + _family_norm(ctx, _weights(ctx, ju=-0.5, jub=p / 2) * dub, 1.0, "U", "linf_U l2_tau") ** 2
           + _family_norm(ctx, _weights(ctx, juc=-0.5, jub=p / 2) * dub, c, "U", "linf_U_c l2_tau") ** 2)
    vt0, vr0 = ctx.initial_derivs("V")
    data = float(np.sum(np.power(np.hypot(1.0, ctx.r), p) * (0.5 * (vt0 + vr0)) ** 2) * ctx.grid.dx)
    box = ctx.forcing("V", params.get("forcing", "auto"))
    bulk = ctx.integral(_weights(ctx, jub=p) * np.abs(box) * np.abs(dub))
    out = _scalar(lhs, data + bulk)
    out.update(data_term=data, forcing_term=bulk)
    return out


def _e10(ctx, params):
    p = params.get("p", 0)
    c = ctx.c
    dub = ctx.op("V", 0, "d_ubar")
    du = ctx.op("V", 0, "d_u")
    terms = [
        (_weights(ctx, r=-0.25, jr=-0.25, jub=p / 2) * dub, 1.0, "R", "linf_R l2_tau"),
        (_weights(ctx, r=-0.25, jr=-0.25, ju=p / 2) * du, 1.0, "R", "linf_R l2_tau"),
        (_weights(ctx, juc=-0.5, jub=p / 2) * dub, c, "U", "linf_U_c l2_tau"),
        (_weights(ctx, juc=-0.5, ju=p / 2) * du, c, "U", "linf_U_c l2_tau"),
        (_weights(ctx, ju=-0.5, jub=p / 2) * dub, 1.0, "U", "linf_U l2_tau"),
    ]
    lhs = sum(_family_norm(ctx, *t) ** 2 for t in terms)
    vt0, vr0 = ctx.initial_derivs("V")
    data = float(np.sum(np.power(np.hypot(1.0, ctx.r), p) * (vt0**2 + vr0**2)) * ctx.grid.dx)
    box = np.abs(ctx.forcing("V", params.get("forcing", "auto")))
    bulk = (ctx.integral(_weights(ctx, jub=p) * box * np.abs(dub))
            + ctx.integral(_weights(ctx, ju=p) * box * np.abs(du)))
    out = _scalar(lhs, data + bulk)
    out.update(data_term=data, forcing_term=bulk)
    return out


def _e11(ctx, params):
    dubc = ctx.op("W", 0, "d_ubar_c")
    r = ctx.r[None, :]
    lhs = (_family_norm(ctx, dubc, 1.0, "R", "l2_tau l2_R") ** 2
           + _family_norm(ctx, _weights(ctx, ju=-0.5) * np.sqrt(r) * dubc, 1.0, "U", "linf_U l2_tau") ** 2)
    wt0, wr0 = ctx.initial_derivs("W")
    c = ctx.c
    data = float(np.sum(ctx.r * ((wt0 + c * wr0) / (2 * c)) ** 2) * ctx.grid.dx)
    box = ctx.forcing("W", params.get("forcing", "auto"))
    bulk = ctx.integral(r * np.abs(box) * np.abs(dubc))
    out = _scalar(lhs, data + bulk)
    out.update(data_term=data, forcing_term=bulk)
    return out


def _hardy_rhs(ctx) -> float:
    # Odd W: every integrand below is even in x, so the full line doubles the half line.
    w0 = ctx.pos(ctx.S("W", 0))[0]
    data = np.sqrt(2.0 * np.sum(w0**2 / ctx.r) * ctx.grid.dx)
    dubc = ctx.op("W", 0, "d_ubar_c")
    return float(data + np.sqrt(2.0 * ctx.integral(dubc**2)))


def _e12(ctx, params):
    w = ctx.pos(ctx.S("W", 0))
    lhs = float(np.sqrt(2.0 * ctx.integral((w / ctx.r[None, :]) ** 2)))
    return _scalar(lhs, _hardy_rhs(ctx))


def _e13(ctx, params):
    w = ctx.pos(ctx.S("W", 0))
    weighted = _weights(ctx, ju=-0.5, r=-0.5) * w
    lhs = np.sqrt(2.0) * _family_norm(ctx, weighted, 1.0, "U", "linf_U l2_tau")
    return _scalar(lhs, _hardy_rhs(ctx))


REGISTRY: dict[str, EstimateEntry] = {e.id: e for e in (
    EstimateEntry("E1", "sup-W-radial-band", "sup_C |r^-1/2 W| <= (tau^-1/2 R^-1) ||S^<=1 W|| + tau^-1/2 ||d_r S^<=1 W|| on C~^{c,R}",
                  "W", 1, _e1),
    EstimateEntry("E2", "sup-W-cone-band", "sup_C |W| <= (tau U_c)^-1/2 ||S^<=1 W|| + (U_c/tau)^1/2 ||d_r S^<=1 W|| on C~^{c,U_c}",
                  "W", 1, _e2),
    EstimateEntry("E3", "sup-W-radial-band-good", "sup_C |r^-1/2 W| <= (tau^-1/2 R^-1) ||S^<=2 W|| + tau^-1/2 ||d_ubar_c S^<=1 W|| on C~^{c,R}",
                  "W", 1, _e3),
    EstimateEntry("E4", "sup-W-cone-band-good", "sup_C |W| <= (tau U_c)^-1/2 ||S^<=2 W|| + (tau/U_c)^1/2 ||d_ubar_c S^<=1 W|| on C~^{c,U_c}",
                  "W", 1, _e4),
    EstimateEntry("E5", "sup-V-radial-band", "sup_C |V| <= (tau R)^-1/2 ||S^<=2 V|| + R^1/4 tau^-1/2 ||r^1/4 d_ubar S^<=1 V|| on C~^{1,R}",
                  "V", 1, _e5),
    EstimateEntry("E6", "sup-V-cone-band", "sup_C |V| <= (tau U)^-1/2 ||S^<=2 V|| + (tau/U)^1/2 ||d_ubar S^<=1 V|| on C~^{1,U}",
                  "V", 1, _e6),
    EstimateEntry("E7", "sup-dV-radial-band", "sup_C |dV| <= (tau R)^-1/2 ||d S^<=2 V|| + R^1/4 tau^-1/2 ||r^1/4 box S^<=1 V|| on C~^{1,R}",
                  "V", 1, _e7),
    EstimateEntry("E8", "sup-dV-cone-band", "sup_C |dV| <= (tau U)^-1/2 ||d S^<=2 V|| + (tau/U)^1/2 ||box S^<=1 V|| on C~^{1,U}",
                  "V", 1, _e8),
    EstimateEntry("E9", "good-derivative-energy", "good-derivative local energy with <ubar>^p weights, squared", "V", 2, _e9,
                  needs_odd=False, uses_p=True),
    EstimateEntry("E10", "ghost-weight-local-energy", "good and bad derivative local energy with <u>, <ubar> weights, squared",
                  "V", 2, _e10, needs_odd=False, uses_p=True),
    EstimateEntry("E11", "r-weighted-energy-W", "r-weighted good derivative of W with a speed-1 ghost weight, squared", "W", 2, _e11,
                  needs_odd=False),
    EstimateEntry("E12", "hardy-space-time", "||r^-1 W||_{L2 L2} <= ||r^-1/2 W(4)|| + ||d_ubar_c W||_{L2 L2}", "W", 1, _e12),
    EstimateEntry("E13", "hardy-speed-gap", "||<u>^-1/2 r^-1/2 W||_{linf_U l2_tau L2 L2(C^{1,U})} <= same right side as E12",
                  "W", 1, _e13, needs_c_gt_1=True),
)}
IDS = tuple(REGISTRY)


def _unpack(traces) -> tuple[SpaceTimeTrace | None, SpaceTimeTrace | None]:
    if isinstance(traces, SpaceTimeTrace):
        return traces, traces
    if isinstance(traces, dict):
        return traces.get("V"), traces.get("W")
    V, W = traces
    return V, W


def support_ok(trace: SpaceTimeTrace, margin: int = SUPPORT_MARGIN_CELLS) -> bool:
    """True when the outermost ``margin`` cells stay negligible on every level."""
    s = trace.samples
    scale = float(np.max(np.abs(s), initial=0.0))
    if scale == 0:
        return True
    edge = max(float(np.max(np.abs(s[:, :margin]))), float(np.max(np.abs(s[:, -margin:]))))
    return edge <= SUPPORT_TOL * scale


def check_estimate(id: str, traces, params: dict | None = None, *, config: str = "") -> EstimateReport:
    """Evaluate one registry entry.

    ``traces`` is ``(V, W)``, a dict with keys ``V``/``W``, or a single trace
    used for whichever field the entry needs.  ``params``: ``c`` (speed of the
    ``C^{c,...}`` regions, default the W trace's speed or 2), ``p`` (E9, E10),
    ``enlargement`` and ``forcing`` (``"box"`` recomputes the forcing from the
    trace, ``"recorded"`` uses the solver's, ``"auto"`` (default) prefers the
    recorded one).

    Raises :class:`RefusedError` when the entry does not apply.
    """
    if id not in REGISTRY:
        raise ParameterError(f"unknown estimate {id!r}")
    entry = REGISTRY[id]
    params = dict(params or {})
    V, W = _unpack(traces)
    tr = V if entry.field == "V" else W
    if tr is None:
        raise RefusedError(f"{id} needs a {entry.field} trace")
    c = params.get("c")
    if c is None:
        c = W.c if (W is not None and W.c is not None and W.c >= 1) else 2.0
    if c <= 0:
        raise RefusedError("speed must be positive")
    if entry.needs_c_gt_1 and c <= 1:
        raise RefusedError(f"{id} needs c > 1 (got c={c})")
    if c < 1:
        raise RefusedError("region geometry needs c >= 1")
    if entry.needs_odd and tr.parity != "odd":
        raise RefusedError(f"{id} needs an odd {entry.field}")
    if not support_ok(tr):
        raise RefusedError(f"{entry.field} reaches the domain edge: compact support not resolved")
    if tr.n_levels < 4:
        raise RefusedError("need at least 4 stored levels")
    if tr.grid.t_end < 8:
        raise RefusedError("horizon must be >= 8")
    p = params.get("p", 0) if entry.uses_p else None
    if p is not None and p < 0:
        raise RefusedError("p must be >= 0")
    if entry.uses_p:
        params["p"] = p
    ctx = _Context(V if entry.field == "V" else None, W if entry.field == "W" else None, c)
    out = entry.evaluator(ctx, params)
    lhs, rhs = out["lhs"], out["rhs"]
    degenerate = bool(out.get("degenerate")) or rhs <= DEGENERATE_RHS
    ratio = None if degenerate else lhs / rhs
    g = tr.grid
    return EstimateReport(id, lhs, rhs, ratio, degenerate, None, p, c, config,
                          {"nx": g.nx, "dt": g.dt, "dx": g.dx, "t_end": g.t_end},
                          out.get("worst_region"), out.get("n_regions"))


# --- audit families ------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditConfig:
    """A recipe for a ``(V, W)`` pair on a grid.

    ``kind``: ``free`` (outgoing bumps of half-width ``width``), ``drift``
    (bumps moving at half their wave speed, forcing recorded), ``coupled``
    (the nonlinear system, ``family`` and ``epsilon``) or ``zero``.
    ``profile`` is the bump shape of the manufactured kinds; the polynomial
    one keeps finite-difference ``S^2`` resolved on modest grids.
    """

    name: str
    kind: str
    width: float = 0.5
    amplitude: float = 1.0
    family: str = "standard-bump"
    epsilon: float = 0.5
    profile: str = "poly"

    def build(self, grid: Grid, c: float) -> tuple[SpaceTimeTrace, SpaceTimeTrace]:
        if self.kind in ("free", "drift"):
            man = "dalembert_bump" if self.kind == "free" else "drifting_bump"
            kw = dict(amplitude=self.amplitude, center=1.0 - self.width, width=self.width,
                      profile=self.profile)
            V = manufactured_solution(man, grid, 1.0, **kw)
            W = manufactured_solution(man, grid, c, **kw)
            return V, W
        if self.kind == "coupled":
            from .system import DataFamily, solve_coupled

            return solve_coupled(DataFamily(self.family, self.epsilon), c, grid)
        if self.kind == "zero":
            z = np.zeros((grid.nsteps + 1, grid.nx))
            return (SpaceTimeTrace(grid, z, 1.0, 1, "odd", np.zeros(grid.nx)),
                    SpaceTimeTrace(grid, z.copy(), c, 1, "odd", np.zeros(grid.nx)))
        raise ParameterError(f"unknown audit config kind {self.kind!r}")


DEFAULT_FAMILY: tuple[AuditConfig, ...] = (
    # Widths above 1/2 put part of each bump across the origin at t = 4, so the
    # good derivative is not identically zero on r > 0.
    AuditConfig("free-w0.6", "free", width=0.6),
    AuditConfig("free-w0.7", "free", width=0.7),
    AuditConfig("free-w0.8", "free", width=0.8),
    AuditConfig("drift-w0.7", "drift", width=0.7),
    AuditConfig("coupled-eps0.5", "coupled", epsilon=0.5),
)
DEFAULT_AUDIT_GRID = {"t_end": 16.0, "dx": 1.0 / 32}


@dataclass
class AuditTable:
    reports: list[EstimateReport]

    def worst(self) -> dict:
        """Largest finite ratio per (id, p)."""
        out: dict = {}
        for rep in self.reports:
            if rep.ratio is None:
                continue
            key = rep.id if rep.p is None else f"{rep.id}:p={rep.p:g}"
            out[key] = max(out.get(key, 0.0), rep.ratio)
        return out

    def refused(self) -> list[EstimateReport]:
        return [r for r in self.reports if r.refused]

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["id", "p", "c", "config", "lhs", "rhs", "ratio", "nx", "dt", "degenerate", "refused"]
        w = csv.DictWriter(buf, fieldnames=cols)
        w.writeheader()
        for rep in self.reports:
            w.writerow(rep.row())
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"reports": [asdict(r) for r in self.reports], "worst": self.worst()}


def audit_family(ids, family, *, c: float = 2.0, t_end: float = DEFAULT_AUDIT_GRID["t_end"],
                 dx: float = DEFAULT_AUDIT_GRID["dx"], p_values=(0, 1), params: dict | None = None) -> AuditTable:
    """Run every id on every config; refusals are recorded, not raised."""
    family = list(family)
    if not family:
        raise ParameterError("audit family must be nonempty")
    ids = list(ids) if ids else list(IDS)
    grid = Grid.for_problem(t_end, c=c, dx=dx)
    reports = []
    for cfg in family:
        pair = cfg.build(grid, c) if isinstance(cfg, AuditConfig) else cfg
        name = cfg.name if isinstance(cfg, AuditConfig) else "custom"
        for eid in ids:
            ps = p_values if REGISTRY[eid].uses_p else (None,)
            for p in ps:
                prm = {"c": c, **(params or {})}
                if p is not None:
                    prm["p"] = p
                try:
                    rep = check_estimate(eid, pair, prm, config=name)
                except RefusedError as exc:
                    rep = EstimateReport(eid, None, None, None, refused=exc.reason, p=p, c=c, config=name,
                                         grid={"nx": grid.nx, "dt": grid.dt})
                reports.append(rep)
                logger.debug("%s %s p=%s ratio=%s", name, eid, p, rep.ratio)
    return AuditTable(reports)


def load_pins() -> dict:
    """Regression bounds shipped with the package (2x the first measured max ratio)."""
    text = resources.files("twospeed").joinpath("data/audit_pins.json").read_text()
    return json.loads(text)["bounds"]


def pin_violations(table: AuditTable, pins: dict | None = None) -> dict:
    pins = load_pins() if pins is None else pins
    return {k: (v, pins[k]) for k, v in table.worst().items() if k in pins and v > pins[k]}


SPEED_GAP_SPEEDS = (1.1, 1.5, 2.0, 3.0)


def _f(v):
    return None if v is None else float(v)


def speed_gap_scan(config: AuditConfig = DEFAULT_FAMILY[1], speeds=SPEED_GAP_SPEEDS, *,
                   t_end: float = DEFAULT_AUDIT_GRID["t_end"], dx: float = DEFAULT_AUDIT_GRID["dx"],
                   estimate: str = "E13") -> list[dict]:
    """Ratio of one speed-gap estimate for a fixed config as ``c`` varies.

    The constant is allowed to depend on ``c``; the scan shows how it grows as
    the two speeds merge.  ``c <= 1`` rows are refused with the reason.
    """
    rows = []
    for c in speeds:
        grid = Grid.for_problem(t_end, c=max(c, 1.0), dx=dx)
        pair = config.build(grid, c)
        try:
            rep = check_estimate(estimate, pair, {"c": c}, config=config.name)
            rows.append({"c": c, "lhs": _f(rep.lhs), "rhs": _f(rep.rhs), "ratio": _f(rep.ratio), "refused": None})
        except RefusedError as exc:
            rows.append({"c": c, "lhs": None, "rhs": None, "ratio": None, "refused": exc.reason})
    return rows
