"""Linear constant-speed wave stepping on the odd-extended line.

The scheme is the explicit three-level leapfrog

    V^{n+1} = 2 V^n - V^{n-1} + lam^2 (V_{i+1} + V_{i-1} - 2 V_i) + dt^2 F^n,

with ``lam = c dt / dx``.  Ghost values at the two domain faces are the
negated first interior values (homogeneous Dirichlet at ``x = +-x_max``);
for compactly supported data they are never reached.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DomainError, ParameterError, ValidationError
from .geometry import T_START, Grid

logger = logging.getLogger(__name__)

PARITY_CODES = {"none": 0, "odd": 1, "even": 2}
DEFAULT_CFL_LIMIT = 0.9
MAX_STORED_SAMPLES = 10**8


@dataclass
class SpaceTimeTrace:
    """Samples of one field on stored time levels of a :class:`Grid`.

    ``samples[k]`` is the slice at ``t = t_start + k * store_stride * dt``.
    ``c`` is the speed of the equation the field solves, or ``None`` for a
    derived field.  ``forcing`` (same shape) holds the right-hand side the
    solver used at each stored level, when known.  ``blowup_time`` is set when
    the run stopped early; the samples end at the last finite level.
    """

    grid: Grid
    samples: np.ndarray
    c: float | None = None
    store_stride: int = 1
    parity: str = "odd"
    velocity0: np.ndarray | None = None
    forcing: np.ndarray | None = None
    blowup_time: float | None = None
    derivatives: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[1] != self.grid.nx:
            raise ValidationError("samples must have shape (levels, nx)")
        if self.parity not in PARITY_CODES:
            raise ParameterError(f"unknown parity {self.parity!r}")
        if self.store_stride < 1:
            raise ParameterError("store_stride must be >= 1")

    @property
    def n_levels(self) -> int:
        return self.samples.shape[0]

    @property
    def dt_stored(self) -> float:
        return self.grid.dt * self.store_stride

    @property
    def times(self) -> np.ndarray:
        return self.grid.t_start + np.arange(self.n_levels) * self.dt_stored

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def level_index(self, t: float) -> int:
        """Index of the stored level at time ``t``; no interpolation."""
        k = (t - self.grid.t_start) / self.dt_stored
        kr = int(round(k))
        if abs(k - kr) > 1e-9 * max(1.0, abs(k)) or not 0 <= kr < self.n_levels:
            raise DomainError(f"t={t} is not a stored time level")
        return kr

    def with_samples(self, samples: np.ndarray, **changes) -> SpaceTimeTrace:
        """Copy sharing the grid and stride, with new samples (derived field)."""
        base = dict(c=None, velocity0=None, forcing=None, derivatives={}, diagnostics={},
                    provenance=dict(self.provenance))
        base.update(changes)
        return replace(self, samples=samples, **base)

    def max_parity_defect(self) -> float:
        if self.parity == "odd":
            return float(np.max(np.abs(self.samples + self.samples[:, ::-1]), initial=0.0))
        if self.parity == "even":
            return float(np.max(np.abs(self.samples - self.samples[:, ::-1]), initial=0.0))
        return 0.0


@dataclass
class StepperState:
    """Two consecutive spatial slices of a leapfrog integration."""

    prev: np.ndarray
    curr: np.ndarray
    n: int
    dt: float
    dx: float
    cfl_limit: float = DEFAULT_CFL_LIMIT
    blown_up: bool = False

    def courant(self, c: float) -> float:
        return c * self.dt / self.dx


def second_difference(u: np.ndarray) -> np.ndarray:
    """``u_{i+1} + u_{i-1} - 2 u_i`` along the last axis, negated ghosts at both faces."""
    out = np.empty_like(u)
    out[..., 1:-1] = u[..., 2:] + u[..., :-2] - 2.0 * u[..., 1:-1]
    out[..., 0] = u[..., 1] - 3.0 * u[..., 0]
    out[..., -1] = u[..., -2] - 3.0 * u[..., -1]
    return out


def leapfrog_step(state: StepperState, forcing: np.ndarray | None, c: float) -> StepperState:
    """Advance one level.  Refuses to step when the Courant number exceeds the limit."""
    lam = state.courant(c)
    if lam > state.cfl_limit + 1e-12:
        raise ConfigurationError(f"Courant number {lam:.4f} exceeds limit {state.cfl_limit}")
    nxt = 2.0 * state.curr - state.prev + lam * lam * second_difference(state.curr)
    if forcing is not None:
        if not np.all(np.isfinite(forcing)):
            return replace(state, blown_up=True)
        nxt += state.dt * state.dt * forcing
    return StepperState(state.curr, nxt, state.n + 1, state.dt, state.dx, state.cfl_limit,
                        not np.all(np.isfinite(nxt)))


def default_store_stride(grid: Grid) -> int:
    """1 below 10**6 samples, else the smallest stride keeping <= 10**8 samples."""
    total = (grid.nsteps + 1) * grid.nx
    if total <= 10**6:
        return 1
    stride = 1
    while ((grid.nsteps // stride) + 1) * grid.nx > MAX_STORED_SAMPLES:
        stride += 1
    return stride


def _forcing_source(forcing, grid: Grid) -> Callable[[int], np.ndarray | None]:
    if forcing is None:
        return lambda n: None
    if isinstance(forcing, SpaceTimeTrace):
        if forcing.store_stride != 1 or forcing.grid != grid:
            raise ValidationError("forcing trace must live on the same grid with stride 1")
        forcing = forcing.samples
    if isinstance(forcing, np.ndarray):
        if forcing.ndim != 2 or forcing.shape[1] != grid.nx or forcing.shape[0] < grid.nsteps:
            raise ValidationError("forcing array must have shape (>= nsteps, nx)")
        return lambda n: forcing[n]
    if callable(forcing):
        x, t = grid.x, grid.t
        return lambda n: np.asarray(forcing(t[n], x), dtype=float)
    raise ValidationError("forcing must be None, an array, a trace or a callable f(t, x)")


def check_odd(u: np.ndarray, what: str, tol: float = 1e-12):
    scale = max(1.0, float(np.max(np.abs(u), initial=0.0)))
    if np.max(np.abs(u + u[::-1]), initial=0.0) > tol * scale:
        raise ValidationError(f"{what} is not odd in x")


def solve_linear(ic, forcing, c: float, grid: Grid, *, store_stride: int | None = None,
                 parity: str = "odd", cfl_limit: float = DEFAULT_CFL_LIMIT,
                 blowup_threshold: float = np.inf) -> SpaceTimeTrace:
    """Solve ``(d_t^2 - c^2 d_x^2) V = F`` on ``[4, T]`` from ``(V(4), d_t V(4))``.

    ``forcing`` may be ``None``, an array of shape ``(nsteps + 1, nx)``, a
    stride-1 trace on the same grid, or a callable ``f(t, x)``.  The second
    level comes from the Taylor start
    ``V0 + dt V1 + dt^2/2 (c^2 V0'' + F(4))``.
    """
    v0 = np.asarray(ic[0], dtype=float)
    v1 = np.asarray(ic[1], dtype=float)
    if v0.shape != (grid.nx,) or v1.shape != (grid.nx,):
        raise ValidationError("initial slices must have shape (nx,)")
    if parity == "odd":
        check_odd(v0, "V(4)")
        check_odd(v1, "d_t V(4)")
    stride = store_stride or default_store_stride(grid)
    source = _forcing_source(forcing, grid)
    dt, dx = grid.dt, grid.dx
    lam2 = (c * dt / dx) ** 2
    if c * dt / dx > cfl_limit + 1e-12:
        raise ConfigurationError(f"Courant number {c * dt / dx:.4f} exceeds limit {cfl_limit}")

    n_store = grid.nsteps // stride + 1
    out = np.empty((n_store, grid.nx))
    rec = np.zeros((n_store, grid.nx)) if forcing is not None else None
    f0 = source(0)
    out[0] = v0
    if rec is not None:
        rec[0] = f0
    curr = v0 + dt * v1 + 0.5 * lam2 * second_difference(v0)
    if f0 is not None:
        curr += 0.5 * dt * dt * f0
    state = StepperState(v0, curr, 1, dt, dx, cfl_limit)
    blowup = None
    last = 0
    for n in range(1, grid.nsteps + 1):
        vn = state.curr
        if not np.all(np.isfinite(vn)) or np.max(np.abs(vn)) > blowup_threshold:
            blowup = grid.t_start + n * dt
            break
        stored = n % stride == 0
        if stored:
            last = n // stride
            out[last] = vn
        fn = source(n) if (n < grid.nsteps or _has_final_level(forcing, grid)) else None
        if rec is not None and stored and fn is not None:
            rec[last] = fn
        if n == grid.nsteps:
            break
        state = leapfrog_step(state, fn, c)
        if state.blown_up and state.n == n:
            blowup = grid.t_start + n * dt
            break
    n_keep = last + 1
    trace = SpaceTimeTrace(grid, out[:n_keep], c, stride, parity, v1.copy(),
                           None if rec is None else rec[:n_keep], blowup,
                           provenance={"scheme": "leapfrog", "cfl": c * dt / dx})
    if blowup is not None:
        logger.info("linear solve stopped at t=%.4f (non-finite or above threshold)", blowup)
    return trace


def _has_final_level(forcing, grid: Grid) -> bool:
    if forcing is None:
        return False
    if isinstance(forcing, SpaceTimeTrace):
        return forcing.n_levels > grid.nsteps
    if isinstance(forcing, np.ndarray):
        return forcing.shape[0] > grid.nsteps
    return True


def discrete_energy(trace: SpaceTimeTrace, t: float) -> float:
    """Leapfrog energy between level ``t`` and the next stored level.

    ``1/2 sum [((V^{n+1} - V^n)/dt)^2 + c^2 D V^{n+1} . D V^n] dx`` with face
    differences ``D`` (boundary faces weighted 1/2).  For the homogeneous
    scheme this is conserved to round-off.  At the final level the pair
    ``(n - 1, n)`` is used.  Requires stride 1.
    """
    if trace.store_stride != 1:
        raise DomainError("discrete energy needs consecutive levels (store_stride = 1)")
    if trace.c is None:
        raise ValidationError("discrete energy needs the trace's wave speed")
    n = trace.level_index(t)
    if trace.n_levels < 2:
        raise DomainError("need at least two stored levels")
    a, b = (n, n + 1) if n + 1 < trace.n_levels else (n - 1, n)
    u, v = trace.samples[a], trace.samples[b]
    dt, dx = trace.grid.dt, trace.grid.dx
    kinetic = np.sum(np.square((v - u) / dt))
    du = np.diff(np.concatenate(([-u[0]], u, [-u[-1]]))) / dx
    dv = np.diff(np.concatenate(([-v[0]], v, [-v[-1]]))) / dx
    w = np.ones_like(du)
    w[0] = w[-1] = 0.5
    potential = trace.c ** 2 * np.sum(w * du * dv)
    return float(0.5 * (kinetic + potential) * dx)


def bump(s):
    """C-infinity bump ``exp(-1 / (1 - s^2))`` on ``|s| < 1``."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def bump_d1(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    i = np.abs(s) < 1
    q = 1.0 - s[i] ** 2
    out[i] = np.exp(-1.0 / q) * (-2.0 * s[i] / q**2)
    return out


def bump_d2(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    i = np.abs(s) < 1
    si = s[i]
    q = 1.0 - si**2
    # d/ds of g(s) = -2 s / q^2 is -2/q^2 - 8 s^2/q^3
    g = -2.0 * si / q**2
    dg = -2.0 / q**2 - 8.0 * si**2 / q**3
    out[i] = np.exp(-1.0 / q) * (g * g + dg)
    return out


def poly_bump(s, order: int = 0):
    """``(1 - s^2)^5`` on ``|s| < 1`` (C^4) and its first two derivatives."""
    s = np.asarray(s, dtype=float)
    q = np.where(np.abs(s) < 1, 1.0 - s * s, 0.0)
    if order == 0:
        return q**5
    if order == 1:
        return -10.0 * s * q**4
    return -10.0 * q**4 + 80.0 * s * s * q**3


PROFILES = {
    "cinf": (bump, bump_d1, bump_d2),
    "poly": (poly_bump, lambda s: poly_bump(s, 1), lambda s: poly_bump(s, 2)),
}
MANUFACTURED_KINDS = ("dalembert_bump", "drifting_bump", "standing_wave")


def manufactured_solution(kind: str, grid: Grid, c: float = 1.0, *, amplitude: float = 1.0,
                          center: float = 0.5, width: float = 0.5, velocity: float | None = None,
                          mode: int = 1, profile: str = "cinf") -> SpaceTimeTrace:
    """Exact odd field sampled on every level of ``grid``.

    ``dalembert_bump``: outgoing bump of half-width ``width`` centred at
    ``center`` at ``t = 4`` minus its mirror image; an exact free solution.
    ``drifting_bump``: the same shape moving at ``velocity`` instead of ``c``;
    its exact forcing ``(velocity^2 - c^2) phi''/width^2`` is recorded.
    ``standing_wave``: ``sin(k x) cos(c k t)`` with ``k = mode * pi / x_max``,
    vanishing on the domain faces.  ``profile`` selects the bump shape:
    ``"cinf"`` (``exp(-1/(1-s^2))``) or ``"poly"`` (``(1-s^2)^5``).

    Exact ``d_t`` and ``d_x`` samples are attached under ``derivatives``, and
    the exact forcing (zero for the free kinds) under ``forcing``.
    """
    if kind not in MANUFACTURED_KINDS:
        raise ParameterError(f"unsupported manufactured solution {kind!r}")
    t = grid.t[:, None]
    x = grid.x[None, :]
    forcing = np.zeros((grid.nsteps + 1, grid.nx))
    if kind == "standing_wave":
        k = mode * np.pi / grid.x_max
        vals = np.sin(k * x) * np.cos(c * k * t)
        d_t = -c * k * np.sin(k * x) * np.sin(c * k * t)
        d_x = k * np.cos(k * x) * np.cos(c * k * t)
    else:
        speed = c if kind == "dalembert_bump" else (0.5 * c if velocity is None else velocity)
        s1 = (x - center - speed * (t - T_START)) / width
        s2 = (-x - center - speed * (t - T_START)) / width
        if profile not in PROFILES:
            raise ParameterError(f"unknown bump profile {profile!r}")
        phi, phi1, phi2 = PROFILES[profile]
        vals = phi(s1) - phi(s2)
        d1, e1 = phi1(s1), phi1(s2)
        d_t = (-speed / width) * (d1 - e1)
        d_x = (d1 + e1) / width
        if kind == "drifting_bump":
            forcing = amplitude * (speed**2 - c**2) / width**2 * (phi2(s1) - phi2(s2))
    vals = amplitude * vals
    trace = SpaceTimeTrace(grid, vals, c, 1, "odd", amplitude * d_t[0].copy(), forcing,
                           derivatives={"t": amplitude * d_t, "x": amplitude * d_x},
                           provenance={"manufactured": kind, "amplitude": amplitude,
                                       "center": center, "width": width, "mode": mode,
                                       "profile": profile})
    return trace
