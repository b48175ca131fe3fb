"""Space-time grids, null coordinates, weights and the dyadic decomposition.

The support of a solution at speed ``c`` launched from data in ``|x| <= 1`` at
``t = 4`` is the cone ``r <= c t - (4c - 1)``.  That cone is cut into dyadic
time blocks ``[tau, 2 tau)`` and, inside each block, into bands of dyadic
radius ``R`` (away from the cone edge), bands of dyadic ``U_c = c t - r``
(near the cone edge) and one outer cell.  Intervals are half-open so the plain
cells partition the cone; the last time block is closed at the horizon.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, ParameterError

T_START = 4.0
DEFAULT_ENLARGEMENT = 1.5

# min over r in [R/64, 4R] of (d/dr sqrt(sigma_R(r))) * sqrt(r R); attained at r = 4R.
# Measured by a dense scan over R in {1, ..., 2**10}; analytically 1 / (2 * 5**1.5).
SQRT_SIGMA_SLOPE_CONSTANT = 0.044721359549995794
SQRT_SIGMA_BAND = (1.0 / 64.0, 4.0)


def japanese(y):
    """Return ``<y> = (1 + y**2) ** 0.5``."""
    return np.sqrt(1.0 + np.square(y))


@dataclass(frozen=True)
class Grid:
    """Uniform (t, x) grid over ``[t_start, t_end] x [-x_max, x_max]``.

    Spatial nodes sit at cell centres ``x_i = -x_max + (i + 1/2) dx`` when
    ``stagger`` is set, so ``x = 0`` is never a node.
    """

    x_max: float
    nx: int
    t_end: float
    nsteps: int
    t_start: float = T_START
    stagger: bool = True

    def __post_init__(self):
        if self.x_max <= 0:
            raise ParameterError("x_max must be positive")
        if self.nx < 2 or self.nx % 2:
            raise ParameterError("nx must be an even integer >= 2")
        if self.nsteps < 1:
            raise ParameterError("nsteps must be >= 1")
        if not self.t_end > self.t_start:
            raise ParameterError("t_end must exceed t_start")

    @classmethod
    def for_problem(cls, t_end: float, c: float = 2.0, dx: float = 1.0 / 16,
                    cfl: float = 0.8, margin: float = 4.0) -> Grid:
        """Grid wide enough to hold the speed-``max(1, c)`` cone up to ``t_end``.

        ``dt`` is the largest value not exceeding ``cfl * dx / max(1, c)`` that
        divides ``t_end - 4`` into an integer number of steps.
        """
        speed = max(1.0, c)
        half = speed * t_end - (4 * speed - 1) + margin
        cells = 2 * math.ceil(half / dx)
        x_max = cells * dx / 2
        nsteps = math.ceil((t_end - T_START) / (cfl * dx / speed) - 1e-9)
        return cls(x_max=x_max, nx=cells, t_end=float(t_end), nsteps=nsteps)

    @property
    def x_min(self) -> float:
        return -self.x_max

    @property
    def dx(self) -> float:
        return 2 * self.x_max / self.nx

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.nsteps

    @property
    def x(self) -> np.ndarray:
        offset = 0.5 if self.stagger else 0.0
        # half-integer multiples are exact, so x[i] == -x[nx-1-i] bitwise
        return (np.arange(self.nx) + offset - self.nx / 2) * self.dx

    @property
    def t(self) -> np.ndarray:
        return self.t_start + np.arange(self.nsteps + 1) * self.dt

    def courant(self, c: float) -> float:
        return c * self.dt / self.dx

    def refined(self, factor: int = 2) -> Grid:
        """Same domain with ``dx`` and ``dt`` divided by ``factor``."""
        return Grid(self.x_max, self.nx * factor, self.t_end, self.nsteps * factor,
                    self.t_start, self.stagger)

    def signature(self) -> dict:
        return {"x_max": self.x_max, "nx": self.nx, "t_start": self.t_start,
                "t_end": self.t_end, "nsteps": self.nsteps, "dx": self.dx, "dt": self.dt}


@dataclass(frozen=True)
class NullCoords:
    """Null coordinates of a point (or arrays of points) at speed ``c``."""

    u: np.ndarray | float
    ubar: np.ndarray | float
    u_c: np.ndarray | float
    ubar_c: np.ndarray | float
    c: float

    @classmethod
    def at(cls, t, r, c: float = 1.0) -> NullCoords:
        if c <= 0:
            raise ParameterError("speed must be positive")
        return cls(t - r, t + r, c * t - r, c * t + r, c)


def sigma_weight(y, theta: float):
    """``sigma_theta(y) = y / (|y| + theta)``: odd, increasing, bounded by 1."""
    if theta < 1:
        raise ParameterError(f"theta must be >= 1, got {theta}")
    return y / (np.abs(y) + theta)


def sigma_weight_derivative(y, theta: float):
    """``theta / (|y| + theta)**2``."""
    if theta < 1:
        raise ParameterError(f"theta must be >= 1, got {theta}")
    return theta / np.square(np.abs(y) + theta)


def sqrt_sigma_r_derivative_lower_bound(r, R: float):
    """Return ``d/dr sigma_R(r)**0.5`` for ``r > 0``.

    Inside the band ``R/64 <= r <= 4R`` the value is checked against
    ``SQRT_SIGMA_SLOPE_CONSTANT * r**-0.5 * R**-0.5``.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("r must be positive")
    if R < 1:
        raise ParameterError("R must be >= 1")
    value = sigma_weight_derivative(r, R) / (2.0 * np.sqrt(sigma_weight(r, R)))
    lo, hi = SQRT_SIGMA_BAND
    band = (r >= lo * R) & (r <= hi * R)
    floor = SQRT_SIGMA_SLOPE_CONSTANT / np.sqrt(r * R)
    if np.any(value[band] < floor[band] * (1 - 1e-12)):
        raise AssertionError("slope lower bound violated inside the band")
    return value if value.ndim else float(value)


def largest_dyadic_le(y):
    """Largest power of two ``<= y`` (``y >= 1``), exact for float input."""
    mant, expo = np.frexp(np.asarray(y, dtype=float))
    out = np.ldexp(1.0, expo - 1)
    return out if out.ndim else float(out)


class RegionKind(str, Enum):
    R_BAND = "R"
    UC_BAND = "Uc"
    OUTER = "outer"


KIND_CODES = {RegionKind.R_BAND: 0, RegionKind.UC_BAND: 1, RegionKind.OUTER: 2}


def time_blocks(T: float) -> list[float]:
    """Dyadic ``tau >= 4`` whose block ``[tau, 2 tau)`` meets ``[4, T)``."""
    blocks, tau = [], T_START
    while tau < T:
        blocks.append(tau)
        tau *= 2
    return blocks


def top_dyadic(c: float, tau: float) -> float:
    """Largest dyadic band value allowed in block ``tau``: ``<= c tau / 4``."""
    return largest_dyadic_le(max(c * tau / 4, 1.0))


def _check_speed(c: float):
    if c < 1:
        raise ParameterError("region geometry requires c >= 1")


@dataclass(frozen=True)
class DyadicRegion:
    """One cell ``C^{c,R}_tau``, ``C^{c,U_c}_tau`` or the outer cell.

    ``value`` is the dyadic ``R`` or ``U_c``; for the outer cell it is
    ``c tau / 2``, which lets the outer cell join either family.
    ``enlargement > 1`` stretches every defining interval ``[a, b)`` to
    ``[a / f, b f)``.
    """

    c: float
    tau: float
    kind: RegionKind
    value: float
    horizon: float
    enlargement: float = 1.0
    _key: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_key", (self.c, self.tau, self.kind.value, self.value))

    @property
    def key(self) -> tuple:
        return self._key

    @property
    def is_top(self) -> bool:
        return self.kind != RegionKind.OUTER and self.value == top_dyadic(self.c, self.tau)

    def t_bounds(self) -> tuple[float, float]:
        f = self.enlargement
        lo = max(self.tau / f, T_START)
        hi = min(2 * self.tau * f, self.horizon)
        return lo, hi

    def coord_bounds(self) -> tuple[float, float]:
        """Half-open bounds on ``r`` (R bands, outer) or ``c t - r`` (U_c bands)."""
        f = self.enlargement
        half = self.c * self.tau / 2
        if self.kind == RegionKind.OUTER:
            return half / f, math.inf
        lo = 0.0 if (self.kind == RegionKind.R_BAND and self.value == 1) else self.value
        hi = half if self.is_top else 2 * self.value
        return lo / f, hi * f

    def contains(self, t, r):
        """Vectorised membership test for points ``(t, r)`` with ``r >= 0``."""
        t = np.asarray(t, dtype=float)
        r = np.asarray(r, dtype=float)
        c = self.c
        uc = c * t - r
        tlo, thi = self.t_bounds()
        last = thi >= self.horizon
        in_t = (t >= tlo) & ((t <= thi) if last else (t < thi))
        inside = in_t & (r <= c * t - (4 * c - 1))
        lo, hi = self.coord_bounds()
        if self.kind == RegionKind.R_BAND:
            return inside & (r >= lo) & (r < hi)
        if self.kind == RegionKind.UC_BAND:
            return inside & (uc >= lo) & (uc < hi)
        return inside & (r >= lo) & (uc >= lo)

    def enlarged(self, factor: float = DEFAULT_ENLARGEMENT) -> DyadicRegion:
        return DyadicRegion(self.c, self.tau, self.kind, self.value, self.horizon, factor)

    def to_json(self) -> dict:
        tlo, thi = self.t_bounds()
        lo, hi = self.coord_bounds()
        return {
            "c": self.c,
            "tau": self.tau,
            "kind": self.kind.value,
            "value": self.value,
            "enlargement": self.enlargement,
            "bounds": {"t": [tlo, thi], "r_or_uc": [lo, None if math.isinf(hi) else hi]},
        }


def _block_of(t, T: float):
    """Dyadic block index for times in ``[4, T]``; ``t = T`` joins the last block."""
    tau = largest_dyadic_le(t)
    last = time_blocks(T)[-1]
    return np.minimum(tau, last)


def classify_point(t: float, r: float, c: float, T: float) -> DyadicRegion | None:
    """Plain region containing ``(t, r)``, or ``None`` outside the support cone.

    Priority: outside support, then the ``U_c`` band if ``c t - r < c tau / 2``,
    then the ``R`` band if ``r < c tau / 2``, otherwise the outer cell.
    """
    if not (T_START <= t <= T):
        raise DomainError(f"t={t} outside [{T_START}, {T}]")
    if r < 0:
        raise DomainError("r must be non-negative")
    _check_speed(c)
    if r > c * t - (4 * c - 1):
        return None
    tau = float(_block_of(t, T))
    half = c * tau / 2
    uc = c * t - r
    top = top_dyadic(c, tau)
    if uc < half:
        assert uc >= 2, "c t - r < 2 inside the support cone"
        value = min(max(largest_dyadic_le(uc), 2.0), top)
        return DyadicRegion(c, tau, RegionKind.UC_BAND, value, T)
    if r < half:
        value = min(largest_dyadic_le(max(r, 1.0)), top)
        return DyadicRegion(c, tau, RegionKind.R_BAND, value, T)
    return DyadicRegion(c, tau, RegionKind.OUTER, half, T)


def enumerate_regions(c: float, T: float, enlargement: float = 1.0) -> list[DyadicRegion]:
    """All cells of the decomposition for ``tau`` up to the horizon ``T``."""
    _check_speed(c)
    if T < 2 * T_START:
        raise ParameterError("horizon must be >= 8")
    regions = []
    for tau in time_blocks(T):
        top = top_dyadic(c, tau)
        R = 1.0
        while R <= top:
            regions.append(DyadicRegion(c, tau, RegionKind.R_BAND, R, T, enlargement))
            R *= 2
        U = 2.0
        while U <= top:
            regions.append(DyadicRegion(c, tau, RegionKind.UC_BAND, U, T, enlargement))
            U *= 2
        regions.append(DyadicRegion(c, tau, RegionKind.OUTER, c * tau / 2, T, enlargement))
    return regions


@dataclass
class RegionLabels:
    """Plain-region label of every point of a (t, r) sample grid.

    ``labels[n, i]`` indexes into ``regions``; ``-1`` marks points outside the
    support cone.
    """

    c: float
    horizon: float
    regions: list[DyadicRegion]
    labels: np.ndarray

    def family(self, kinds) -> np.ndarray:
        """Boolean per-region selector for the given kinds."""
        kinds = set(kinds)
        return np.array([reg.kind in kinds for reg in self.regions], dtype=bool)


def label_points(t: np.ndarray, r: np.ndarray, c: float, T: float) -> RegionLabels:
    """Vectorised :func:`classify_point` over the tensor grid ``t x r``."""
    _check_speed(c)
    regions = enumerate_regions(c, T)
    tt = np.asarray(t, dtype=float)[:, None]
    rr = np.asarray(r, dtype=float)[None, :]
    if tt.min() < T_START or tt.max() > T:
        raise DomainError("sample times outside [4, T]")
    tau = _block_of(tt, T)
    half = c * tau / 2
    uc = c * tt - rr
    support = rr <= c * tt - (4 * c - 1)
    top = largest_dyadic_le(np.maximum(c * tau / 4, 1.0))
    uc_val = np.minimum(np.maximum(largest_dyadic_le(np.maximum(uc, 1.0)), 2.0), top)
    r_val = np.minimum(largest_dyadic_le(np.maximum(rr, 1.0)), top)
    is_uc = uc < half
    is_r = ~is_uc & (rr < half)
    kind = np.where(is_uc, 1, np.where(is_r, 0, 2))
    value = np.where(is_uc, uc_val, np.where(is_r, r_val, half))
    # Integer code per (block, kind, dyadic exponent) -> region index lookup.
    blocks = time_blocks(T)
    tau_i = np.rint(np.log2(np.broadcast_to(tau, kind.shape) / T_START)).astype(np.int64)
    v_exp = np.where(kind == 2, 0, np.rint(np.log2(np.maximum(value, 1.0)))).astype(np.int64)
    n_exp = 64
    code = (tau_i * 3 + kind) * n_exp + v_exp
    lookup = np.full(len(blocks) * 3 * n_exp, -1, dtype=np.int64)
    for k, reg in enumerate(regions):
        ti = int(round(math.log2(reg.tau / T_START)))
        kc = KIND_CODES[reg.kind]
        ve = 0 if kc == 2 else int(round(math.log2(reg.value)))
        lookup[(ti * 3 + kc) * n_exp + ve] = k
    labels = np.where(support, lookup[np.where(support, code, 0)], -1)
    if np.any(labels[support] < 0):
        raise DomainError("a support point matched no enumerated region")
    return RegionLabels(c, T, regions, labels)


def regions_to_json(regions: list[DyadicRegion]) -> str:
    return json.dumps([reg.to_json() for reg in regions], indent=2)
