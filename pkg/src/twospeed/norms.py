"""Weighted space-time L^2 norms on dyadic regions and the twelve-term norm M.

Every term has the shape

    || weight * |S^{<=k} f| ||_{agg L^2_t L^2_r(C)}

where ``f`` is a first derivative of ``V`` or ``W`` (or ``W`` itself), the
weight is a product of powers of ``r`` and Japanese brackets of null
coordinates, ``C`` runs over one region family and ``agg`` is a word such as
``linf_R l2_tau`` (innermost index last, aggregated first).

Quadrature: trapezoid weights in ``t`` over the stored levels, ``dx`` per
staggered node in ``r``, ``r > 0`` nodes only.  A grid point belongs to the
region containing it (cell-centre membership), so region boundaries carry an
``O(dx + dt)`` error that vanishes under refinement.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import RefusedError, ValidationError
from .geometry import DyadicRegion, RegionKind, japanese, label_points
from .scalecalc import K_MAX, METHODS, apply_S_power, d_r, d_t, scaling_fd
from .waveop import SpaceTimeTrace

logger = logging.getLogger(__name__)

INDICES = ("tau", "R", "U", "U_c")
NORMS = ("l2", "linf")


@dataclass(frozen=True)
class NormTerm:
    """One term of M: field expression, weight exponents, region family, aggregation.

    ``expr`` is one of ``d_u``, ``d_ubar``, ``grad`` (Euclidean ``|(d_t, d_r)|``),
    ``d_ubar_c`` or ``value``.  ``weight`` maps a factor name (``r``, ``<r>``,
    ``<u>``, ``<ubar>``, ``<u_c>``) to its exponent.  ``speed`` is ``"1"`` or
    ``"c"``; ``family`` is ``"R"`` or ``"U"`` (the outer cell joins both).
    """

    id: str
    field: str
    expr: str
    weight: tuple
    speed: str
    family: str
    aggregation: str

    def weight_values(self, t: np.ndarray, r: np.ndarray, c: float) -> np.ndarray:
        return weight_product(dict(self.weight), t, r, c)

    def describe(self) -> str:
        w = " ".join(f"{k}^{v:g}" for k, v in self.weight) or "1"
        fam = f"C^{{{self.speed},{self.family}}}"
        return f"{self.id}: {w} |S^<=k {self.expr} {self.field}| over {self.aggregation} on {fam}"


def weight_product(exponents: dict, t, r, c: float = 1.0) -> np.ndarray:
    """Evaluate ``prod factor^exponent`` pointwise on the tensor grid ``t x r``."""
    t = np.asarray(t, dtype=float)[:, None]
    r = np.asarray(r, dtype=float)[None, :]
    out = np.ones(np.broadcast_shapes(t.shape, r.shape))
    for name, p in exponents.items():
        if p == 0:
            continue
        if name == "r":
            base = r
        elif name == "<r>":
            base = japanese(r)
        elif name == "<u>":
            base = japanese(t - r)
        elif name == "<ubar>":
            base = japanese(t + r)
        elif name == "<u_c>":
            base = japanese(c * t - r)
        elif name == "<ubar_c>":
            base = japanese(c * t + r)
        else:
            raise ValidationError(f"unknown weight factor {name!r}")
        out = out * np.power(base, p)
    return out


def _w(**kw) -> tuple:
    names = {"r": "r", "jr": "<r>", "ju": "<u>", "jub": "<ubar>", "juc": "<u_c>"}
    return tuple((names[k], v) for k, v in kw.items())


TERMS: tuple[NormTerm, ...] = (
    NormTerm("I", "V", "d_u", _w(r=-0.25, jr=-0.25, ju=0.5), "1", "R", "linf_R l2_tau"),
    NormTerm("II", "V", "d_u", _w(juc=-0.5, ju=0.5), "c", "U", "linf_U_c l2_tau"),
    NormTerm("III", "V", "d_ubar", _w(r=-0.25, jr=-0.25, jub=0.5), "1", "R", "linf_R l2_tau"),
    NormTerm("IV", "V", "d_ubar", _w(juc=-0.5, jub=0.5), "c", "U", "linf_U_c l2_tau"),
    NormTerm("V", "V", "d_ubar", _w(ju=-0.5, jub=0.5), "1", "U", "linf_U l2_tau"),
    NormTerm("VI", "V", "grad", _w(r=-0.25, jr=-0.25), "1", "R", "linf_R l2_tau"),
    NormTerm("VII", "V", "grad", _w(juc=-0.5), "c", "U", "linf_U_c l2_tau"),
    NormTerm("VIII", "V", "d_ubar", _w(ju=-0.5), "1", "U", "linf_U l2_tau"),
    NormTerm("IX", "W", "d_ubar_c", _w(r=0.5, ju=-0.5), "1", "U", "linf_U l2_tau"),
    NormTerm("X", "W", "value", _w(r=-0.5, ju=-0.5), "1", "U", "linf_U l2_tau"),
    NormTerm("XI", "W", "d_ubar_c", (), "1", "R", "l2_R l2_tau"),
    NormTerm("XII", "W", "value", _w(r=-1.0), "c", "R", "l2_R l2_tau"),
)
TERM_IDS = tuple(t.id for t in TERMS)
FAMILY_KINDS = {"R": (RegionKind.R_BAND, RegionKind.OUTER), "U": (RegionKind.UC_BAND, RegionKind.OUTER)}


def parse_aggregation(spec) -> list[tuple[str, str]]:
    """``"linf_R l2_tau"`` -> ``[("linf", "R"), ("l2", "tau")]`` (outermost first)."""
    if not isinstance(spec, str):
        return [tuple(p) for p in spec]
    out = []
    for word in spec.split():
        norm, _, index = word.partition("_")
        if norm not in NORMS or index not in INDICES:
            raise ValidationError(f"bad aggregation word {word!r}")
        out.append((norm, index))
    if len({i for _, i in out}) != len(out):
        raise ValidationError(f"repeated index in {spec!r}")
    return out


def _index_value(region: DyadicRegion, index: str) -> float:
    if index == "tau":
        return region.tau
    if index == "R":
        if region.kind not in FAMILY_KINDS["R"]:
            raise ValidationError(f"index R does not apply to {region.kind.value} regions")
        return region.value
    if region.kind not in FAMILY_KINDS["U"]:
        raise ValidationError(f"index {index} does not apply to {region.kind.value} regions")
    if index == "U" and region.c != 1:
        raise ValidationError("index U needs speed-1 regions; use U_c")
    if index == "U_c" and region.value > region.c * region.tau / 4 and region.kind != RegionKind.OUTER:
        raise ValidationError("U_c band above c tau / 4")
    return region.value


def _reduce(vals, norm: str) -> float:
    vals = np.asarray(list(vals), dtype=float)
    if vals.size == 0:
        return 0.0
    if norm == "linf":
        return float(np.max(vals))
    return float(np.sqrt(np.sum(vals * vals)))


def aggregate(values: dict, spec) -> float:
    """Apply a sequence-norm word to per-region values, innermost index first.

    ``values`` maps :class:`DyadicRegion` (or any object with ``tau``, ``kind``,
    ``value`` and ``c``) to a non-negative real.
    """
    words = parse_aggregation(spec)
    if not words:
        raise ValidationError("empty aggregation spec")
    items = [(reg, float(v)) for reg, v in values.items()]
    keyed = [(tuple(_index_value(reg, idx) for _, idx in words), v) for reg, v in items]
    return _aggregate_keyed(keyed, [n for n, _ in words])


def _aggregate_keyed(keyed: list, norms: list) -> float:
    if len(norms) == 1:
        return _reduce((v for _, v in keyed), norms[0])
    groups: dict = {}
    for key, v in keyed:
        groups.setdefault(key[0], []).append((key[1:], v))
    return _reduce((_aggregate_keyed(g, norms[1:]) for g in groups.values()), norms[0])


def time_weights(trace: SpaceTimeTrace) -> np.ndarray:
    """Trapezoid weights over the stored levels (stride-aware)."""
    w = np.full(trace.n_levels, trace.dt_stored)
    if trace.n_levels > 1:
        w[0] = w[-1] = 0.5 * trace.dt_stored
    else:
        w[:] = 0.0
    return w


def positive_half(trace: SpaceTimeTrace) -> slice:
    return slice(trace.grid.nx // 2, trace.grid.nx)


@dataclass(frozen=True)
class RegionNorm:
    """A weighted L^2 norm over one region; ``empty`` when no node falls inside."""

    value: float
    n_points: int

    @property
    def empty(self) -> bool:
        return self.n_points == 0

    def __float__(self) -> float:
        return self.value


def region_weighted_l2(trace, region: DyadicRegion, weight=None) -> RegionNorm:
    """``|| weight * f ||_{L^2_t L^2_r(region)}`` on the ``r > 0`` nodes.

    ``trace`` is a :class:`SpaceTimeTrace`; ``weight`` is ``None``, a dict of
    exponents (see :func:`weight_product`), a callable ``(t, r) -> array`` on
    the tensor grid, or an array of the positive-half shape.
    """
    half = positive_half(trace)
    r = trace.grid.x[half]
    t = trace.times
    f = trace.samples[:, half]
    mask = region.contains(t[:, None], r[None, :])
    n = int(mask.sum())
    if n == 0:
        return RegionNorm(0.0, 0)
    if weight is None:
        wv = 1.0
    elif isinstance(weight, dict):
        wv = weight_product(weight, t, r, region.c)
    elif callable(weight):
        wv = weight(t[:, None], r[None, :])
    else:
        wv = np.asarray(weight)
    quad = time_weights(trace)[:, None] * trace.grid.dx
    total = np.sum(np.where(mask, (wv * f) ** 2 * quad, 0.0))
    return RegionNorm(float(np.sqrt(total)), n)


class FieldCalculus:
    """Caches ``S^j`` of first derivatives of ``V`` and ``W`` on the ``r > 0`` half."""

    def __init__(self, V: SpaceTimeTrace, W: SpaceTimeTrace, c: float, k: int,
                 method: str = "finite_difference"):
        if V.grid != W.grid or V.n_levels != W.n_levels or V.store_stride != W.store_stride:
            raise ValidationError("V and W must share grid and stored levels")
        if method not in METHODS:
            raise ValidationError(f"unknown method {method!r}")
        if k > K_MAX[method]:
            raise RefusedError(f"k_used={k} exceeds k_max={K_MAX[method]} for {method}")
        self.V, self.W, self.c, self.k, self.method = V, W, c, k, method
        self.grid = V.grid
        self.half = positive_half(V)
        self.t = V.times
        self.r = self.grid.x[self.half]
        self._powers: dict = {}
        self._cache: dict = {}

    def _s_powers(self, name: str) -> list[np.ndarray]:
        """``[S^0 f, ..., S^k f]`` full-line samples of the field itself."""
        if name not in self._powers:
            tr = self.V if name == "V" else self.W
            if self.method == "finite_difference":
                self._powers[name] = [tr.samples]
            else:
                self._powers[name] = [p.samples for p in apply_S_power(tr, self.k, "commuted_pde")]
        return self._powers[name]

    def _derivs(self, samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = self.grid
        return d_t(samples, self.V.dt_stored), d_r(samples, g.x, g.dx)

    def _combine(self, vt: np.ndarray, vr: np.ndarray, expr: str) -> np.ndarray | tuple:
        c = self.c
        if expr == "d_u":
            return 0.5 * (vt - vr)
        if expr == "d_ubar":
            return 0.5 * (vt + vr)
        if expr == "d_ubar_c":
            return (vt + c * vr) / (2 * c)
        if expr == "grad":
            return (vt, vr)
        raise ValidationError(f"unknown expression {expr!r}")

    def stack(self, name: str, expr: str) -> list:
        """``[S^j f]_{j <= k}`` on the positive half; ``grad`` entries are pairs."""
        key = (name, expr)
        if key in self._cache:
            return self._cache[key]
        h = self.half
        if expr == "value":
            if self.method == "finite_difference":
                base = self._s_powers(name)[0]
                out = [base]
                for _ in range(self.k):
                    out.append(scaling_fd(out[-1], self.t, self.grid.x, self.V.dt_stored, self.grid.dx))
            else:
                out = self._s_powers(name)
            res = [s[:, h] for s in out]
        elif self.method == "finite_difference":
            vt, vr = self._derivs(self._s_powers(name)[0])
            parts = [(vt, vr)]
            for _ in range(self.k):
                pt, pr = parts[-1]
                parts.append(tuple(scaling_fd(p, self.t, self.grid.x, self.V.dt_stored, self.grid.dx)
                                   for p in (pt, pr)))
            res = [self._slice(self._combine(pt, pr, expr), h) for pt, pr in parts]
        else:
            # S^j d f = d (S - 1)^j f for any first-order derivative d.
            powers = self._s_powers(name)
            res = []
            for j in range(self.k + 1):
                comb = sum(_binom(j, i) * (-1) ** (j - i) * powers[i] for i in range(j + 1))
                vt, vr = self._derivs(comb)
                res.append(self._slice(self._combine(vt, vr, expr), h))
        self._cache[key] = res
        return res

    @staticmethod
    def _slice(val, h):
        if isinstance(val, tuple):
            return tuple(v[:, h] for v in val)
        return val[:, h]

    def magnitude(self, name: str, expr: str) -> np.ndarray:
        """``|S^{<=k} f| = sum_j |S^j f|`` pointwise."""
        total = np.zeros((self.V.n_levels, self.r.size))
        for s in self.stack(name, expr):
            if isinstance(s, tuple):
                total += np.hypot(*s)
            else:
                total += np.abs(s)
        return total


def _binom(n: int, k: int) -> int:
    from math import comb

    return comb(n, k)


@dataclass
class NormReport:
    """Twelve term values, their sum and per-region values; stamped with ``k_used``."""

    k_used: int
    method: str
    terms: dict
    per_region: list
    j: int | None = None
    valid: bool = True
    absent: list = field(default_factory=list)

    term_ids = TERM_IDS

    @property
    def total(self) -> float:
        return float(sum(self.terms[t] for t in TERM_IDS if t in self.terms))

    def compatible(self, other: NormReport):
        if self.k_used != other.k_used or self.method != other.method:
            raise RefusedError(f"refusing to compare k_used={self.k_used} ({self.method}) "
                               f"with k_used={other.k_used} ({other.method})")

    def to_json(self, A: float | None = None) -> dict:
        out = {"j": self.j, "k_used": self.k_used, "method": self.method,
               "terms": {t: self.terms.get(t) for t in TERM_IDS}, "M": self.total,
               "valid": self.valid, "per_region": self.per_region}
        if A is not None:
            out["A"] = A
        return out

    def csv_row(self) -> dict:
        row = {"j": self.j, "k_used": self.k_used, "method": self.method, "M": self.total}
        row.update({t: self.terms.get(t) for t in TERM_IDS})
        return row


def reports_to_csv(reports: list[NormReport], extra: list[dict] | None = None) -> str:
    buf = io.StringIO()
    fields = ["j", "k_used", "method", "M", *TERM_IDS]
    extra = extra or [{} for _ in reports]
    keys = sorted({k for e in extra for k in e})
    writer = csv.DictWriter(buf, fieldnames=fields + keys)
    writer.writeheader()
    for rep, e in zip(reports, extra):
        writer.writerow({**rep.csv_row(), **e})
    return buf.getvalue()


_LABEL_CACHE: dict = {}


def _labels(trace: SpaceTimeTrace, c: float):
    key = (trace.grid, trace.n_levels, trace.store_stride, float(c))
    if key not in _LABEL_CACHE:
        if len(_LABEL_CACHE) > 32:
            _LABEL_CACHE.clear()
        r = trace.grid.x[positive_half(trace)]
        _LABEL_CACHE[key] = label_points(trace.times, r, c, trace.grid.t_end)
    return _LABEL_CACHE[key]


def term_region_values(term: NormTerm, magnitude: np.ndarray, trace: SpaceTimeTrace,
                       labels, c: float) -> dict:
    """``{region: weighted L^2 norm}`` for the term's family via one bincount."""
    r = trace.grid.x[positive_half(trace)]
    wv = term.weight_values(trace.times, r, c)
    dens = (wv * magnitude) ** 2 * (time_weights(trace)[:, None] * trace.grid.dx)
    flat = labels.labels.ravel()
    inside = flat >= 0
    sums = np.bincount(flat[inside], weights=dens.ravel()[inside], minlength=len(labels.regions))
    counts = np.bincount(flat[inside], minlength=len(labels.regions))
    sel = labels.family(FAMILY_KINDS[term.family])
    return {reg: float(np.sqrt(sums[k])) for k, reg in enumerate(labels.regions)
            if sel[k] and counts[k] > 0}


def region_tables(V: SpaceTimeTrace, W: SpaceTimeTrace, c: float, k_used: int = 1, *,
                  method: str = "finite_difference") -> tuple[dict, list]:
    """``({term id: {region: value}}, absent ids)`` before aggregation."""
    if c <= 1:
        raise ValidationError("M needs c > 1")
    calc = FieldCalculus(V, W, c, k_used, method)
    labels = {"1": _labels(V, 1.0), "c": _labels(V, c)}
    tables, absent = {}, []
    for term in TERMS:
        try:
            mag = calc.magnitude(term.field, term.expr)
        except (ValidationError, RefusedError) as exc:
            logger.warning("term %s absent: %s", term.id, exc)
            absent.append(term.id)
            continue
        tables[term.id] = term_region_values(term, mag, V, labels[term.speed], c)
    return tables, absent


def assemble_M(V: SpaceTimeTrace, W: SpaceTimeTrace, c: float, k_used: int = 1, *,
               method: str = "finite_difference") -> NormReport:
    """All twelve terms for the pair ``(V, W)`` with ``S^{<=k_used}``."""
    tables, absent = region_tables(V, W, c, k_used, method=method)
    terms, per_region = {}, []
    for term in TERMS:
        if term.id not in tables:
            continue
        vals = tables[term.id]
        terms[term.id] = aggregate(vals, term.aggregation)
        per_region.extend({"term": term.id, "region": list(reg.key), "value": v}
                          for reg, v in vals.items())
    return NormReport(k_used, method, terms, per_region, valid=not absent, absent=absent)


def _difference(a: SpaceTimeTrace, b: SpaceTimeTrace) -> SpaceTimeTrace:
    if a.grid != b.grid or a.samples.shape != b.samples.shape:
        raise ValidationError("iterates must share one grid and level count")
    fa = np.zeros_like(a.samples) if a.forcing is None else a.forcing
    fb = np.zeros_like(b.samples) if b.forcing is None else b.forcing
    va = np.zeros(a.grid.nx) if a.velocity0 is None else a.velocity0
    vb = np.zeros(b.grid.nx) if b.velocity0 is None else b.velocity0
    return a.with_samples(a.samples - b.samples, c=a.c, velocity0=va - vb, forcing=fa - fb)


def difference_report(cur: tuple, prev: tuple, c: float, k_used: int = 1, *,
                      method: str = "finite_difference") -> NormReport:
    """The twelve terms applied to ``(V_j - V_{j-1}, W_j - W_{j-1})``."""
    dV = _difference(cur[0], prev[0])
    dW = _difference(cur[1], prev[1])
    return assemble_M(dV, dW, c, k_used, method=method)


def assemble_A(cur: tuple, prev: tuple, c: float, k_used: int = 1, *,
               method: str = "finite_difference") -> float:
    """``A_j``: the M-norm of the difference of consecutive iterates."""
    return difference_report(cur, prev, c, k_used, method=method).total


def redecomposition_bound(values: dict, index: str = "R") -> tuple[float, float, int]:
    """Compare the ``l2`` and ``linf`` aggregations over one dyadic index.

    Returns ``(lhs, rhs, n)``: ``lhs`` is ``l2_index l2_tau``, ``n`` is the
    number of distinct values of the index and ``rhs = sqrt(n) *
    linf_index l2_tau``.  ``lhs <= rhs`` holds for any table of values.
    """
    lhs = aggregate(values, f"l2_{index} l2_tau")
    n = len({_index_value(reg, index) for reg in values})
    rhs = np.sqrt(n) * aggregate(values, f"linf_{index} l2_tau")
    return lhs, float(rhs), n


def report_json(report: NormReport, A: float | None = None) -> str:
    return json.dumps(report.to_json(A), indent=2, default=float)
