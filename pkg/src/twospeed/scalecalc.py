"""Scaling vector field ``S = t d_t + r d_r`` and null derivatives on traces.

Two routes to ``S^k V``:

* ``finite_difference`` differentiates the stored samples (second-order
  centred, one-sided second-order at the first and last level).
* ``commuted_pde`` re-solves the wave equation for ``S V`` using
  ``[box, S] = 2 box``: ``box(S V) = (S + 2) box V`` with data at ``t = 4``
  built from ``(V(4), d_t V(4))``.

On the odd line ``r d_r = x d_x``, so no sign bookkeeping is needed for S.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, RefusedError, ValidationError
from .waveop import SpaceTimeTrace, second_difference, solve_linear

METHODS = ("finite_difference", "commuted_pde")
K_MAX = {"finite_difference": 3, "commuted_pde": 7}
NULL_DIRECTIONS = ("u", "ubar", "u_c", "ubar_c")


@dataclass
class DerivedTrace(SpaceTimeTrace):
    """A trace obtained from another by a word of differential operators."""

    operator_word: tuple = ()
    method: str = "finite_difference"


def _derived(base: SpaceTimeTrace, samples, op: str, method: str = "finite_difference",
             **changes) -> DerivedTrace:
    word = tuple(getattr(base, "operator_word", ())) + (op,)
    fields = dict(grid=base.grid, samples=samples, c=None, store_stride=base.store_stride,
                  parity=base.parity, velocity0=None, forcing=None, blowup_time=base.blowup_time,
                  provenance=dict(base.provenance), operator_word=word, method=method)
    fields.update(changes)
    return DerivedTrace(**fields)


def d_t(samples: np.ndarray, dt: float) -> np.ndarray:
    if samples.shape[0] < 3:
        raise ValidationError("time derivatives need at least 3 stored levels")
    return np.gradient(samples, dt, axis=0, edge_order=2)


def d_x(samples: np.ndarray, dx: float) -> np.ndarray:
    return np.gradient(samples, dx, axis=-1, edge_order=2)


def d_r(samples: np.ndarray, x: np.ndarray, dx: float) -> np.ndarray:
    """Radial derivative on the line: ``sign(x) d_x``."""
    return np.sign(x) * d_x(samples, dx)


def scaling_fd(samples: np.ndarray, t: np.ndarray, x: np.ndarray, dt: float, dx: float) -> np.ndarray:
    return t[:, None] * d_t(samples, dt) + x[None, :] * d_x(samples, dx)


def apply_S(trace: SpaceTimeTrace, method: str = "finite_difference") -> DerivedTrace:
    """One application of the scaling field."""
    if method not in METHODS:
        raise ParameterError(f"unknown method {method!r}")
    if trace.n_levels < 3:
        raise ValidationError("apply_S needs at least 3 stored levels")
    g = trace.grid
    if method == "finite_difference":
        out = scaling_fd(trace.samples, trace.times, g.x, trace.dt_stored, g.dx)
        return _derived(trace, out, "S")
    return _apply_S_commuted(trace)


def _apply_S_commuted(trace: SpaceTimeTrace) -> DerivedTrace:
    if trace.c is None or trace.velocity0 is None:
        raise ValidationError("commuted_pde needs a solver trace with speed and initial velocity")
    g, c = trace.grid, trace.c
    if trace.forcing is not None and trace.store_stride != 1:
        raise ValidationError("commuted_pde with forcing needs stride-1 traces")
    x, dx, t0 = g.x, g.dx, g.t_start
    v0, v1 = trace.samples[0], trace.velocity0
    f0 = np.zeros(g.nx) if trace.forcing is None else trace.forcing[0]
    v0_x = np.gradient(v0, dx, edge_order=2)
    v1_x = np.gradient(v1, dx, edge_order=2)
    v0_xx = second_difference(v0) / dx**2
    s0 = t0 * v1 + x * v0_x
    s1 = v1 + t0 * (c * c * v0_xx + f0) + x * v1_x
    forcing = None
    if trace.forcing is not None:
        F = trace.forcing
        forcing = scaling_fd(F, trace.times, x, g.dt, dx) + 2.0 * F
        if forcing.shape[0] < g.nsteps:
            raise ValidationError("forcing shorter than the grid (truncated trace)")
    solved = solve_linear((s0, s1), forcing, c, g, store_stride=trace.store_stride,
                          parity=trace.parity if trace.parity == "odd" else "none",
                          cfl_limit=1.0)
    out = _derived(trace, solved.samples[: trace.n_levels], "S", "commuted_pde",
                   c=c, velocity0=s1, forcing=None if solved.forcing is None else solved.forcing[: trace.n_levels])
    return out


def apply_S_power(trace: SpaceTimeTrace, k: int, method: str = "finite_difference") -> list[SpaceTimeTrace]:
    """``[S^0 V, S^1 V, ..., S^k V]``; refuses ``k`` above the method's ``K_MAX``."""
    if method not in METHODS:
        raise ParameterError(f"unknown method {method!r}")
    if k < 0:
        raise ParameterError("k must be non-negative")
    if k > K_MAX[method]:
        raise RefusedError(f"k={k} exceeds k_max={K_MAX[method]} for {method}")
    out = [trace]
    for _ in range(k):
        out.append(apply_S(out[-1], method))
    return out


def time_derivative(trace: SpaceTimeTrace) -> DerivedTrace:
    return _derived(trace, d_t(trace.samples, trace.dt_stored), "d_t", parity=_flip_none(trace.parity, False))


def space_derivative(trace: SpaceTimeTrace) -> DerivedTrace:
    return _derived(trace, d_x(trace.samples, trace.grid.dx), "d_x", parity=_flip_none(trace.parity, True))


def _flip_none(parity: str, flip: bool) -> str:
    if not flip or parity == "none":
        return parity
    return "even" if parity == "odd" else "odd"


def null_derivative(trace: SpaceTimeTrace, which: str, c: float = 1.0) -> DerivedTrace:
    """``d_u``, ``d_ubar`` (speed 1) or ``d_{u_c}``, ``d_{ubar_c}`` (speed ``c``).

    ``d_r = sign(x) d_x`` on the line, so odd inputs give odd outputs.
    """
    if which not in NULL_DIRECTIONS:
        raise ParameterError(f"unknown null direction {which!r}")
    g = trace.grid
    vt = d_t(trace.samples, trace.dt_stored)
    vr = d_r(trace.samples, g.x, g.dx)
    if which == "u":
        out = 0.5 * (vt - vr)
    elif which == "ubar":
        out = 0.5 * (vt + vr)
    elif which == "u_c":
        out = (vt - c * vr) / (2 * c)
    else:
        out = (vt + c * vr) / (2 * c)
    return _derived(trace, out, f"d_{which}")


def second_dt(samples: np.ndarray, dt: float) -> np.ndarray:
    n = samples.shape[0]
    if n < 3:
        raise ValidationError("need at least 3 stored levels")
    out = np.empty_like(samples)
    out[1:-1] = samples[2:] - 2 * samples[1:-1] + samples[:-2]
    if n >= 4:
        out[0] = 2 * samples[0] - 5 * samples[1] + 4 * samples[2] - samples[3]
        out[-1] = 2 * samples[-1] - 5 * samples[-2] + 4 * samples[-3] - samples[-4]
    else:
        out[0] = out[1]
        out[-1] = out[1]
    return out / dt**2


def box_samples(samples: np.ndarray, c: float, dt: float, dx: float) -> np.ndarray:
    lap = second_difference(samples)
    return second_dt(samples, dt) - (c * c / dx**2) * lap


def box_residual(trace: SpaceTimeTrace, c: float | None = None) -> DerivedTrace:
    """``(d_t^2 - c^2 d_x^2) V`` by centred second differences.

    On a stride-1 solver trace the interior levels reproduce the recorded
    forcing up to round-off, since this is the scheme's own operator.
    """
    c = trace.c if c is None else c
    if c is None:
        raise ValidationError("box_residual needs a speed")
    out = box_samples(trace.samples, c, trace.dt_stored, trace.grid.dx)
    return _derived(trace, out, f"box_{c:g}")


def box_commutator_residual(trace: SpaceTimeTrace, c: float | None = None) -> np.ndarray:
    """``box(S V) - (S + 2) box V`` by finite differences; zero in the continuum.

    Evaluated on the interior levels and nodes, where every stencil is centred.
    """
    c = trace.c if c is None else c
    if c is None:
        raise ValidationError("commutator residual needs a speed")
    g, dt = trace.grid, trace.dt_stored
    t, x = trace.times, g.x
    box = box_samples(trace.samples, c, dt, g.dx)
    SV = scaling_fd(trace.samples, t, x, dt, g.dx)
    lhs = box_samples(SV, c, dt, g.dx)
    rhs = scaling_fd(box, t, x, dt, g.dx) + 2.0 * box
    return (lhs - rhs)[2:-2, 2:-2]


def null_commutator_residual(trace: SpaceTimeTrace, c: float, exclude_origin: float = 0.0) -> np.ndarray:
    """``d_{u_c}(S V) - S d_{u_c} V - d_{u_c} V`` on the interior; zero in the continuum.

    ``d_r = sign(x) d_x`` jumps at ``x = 0`` unless ``d_x V(0) = 0``, and the
    outer ``S`` differentiates across that jump, so nodes with
    ``|x| < exclude_origin`` are dropped (the result has fewer columns).
    """
    g, dt = trace.grid, trace.dt_stored
    t, x = trace.times, g.x

    def duc(f):
        return (d_t(f, dt) - c * d_r(f, x, g.dx)) / (2 * c)

    SV = scaling_fd(trace.samples, t, x, dt, g.dx)
    D = duc(trace.samples)
    res = duc(SV) - scaling_fd(D, t, x, dt, g.dx) - D
    keep = np.abs(x[2:-2]) >= exclude_origin
    return res[2:-2, 2:-2][:, keep]
