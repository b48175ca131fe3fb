"""Numerical laboratory for a two-speed semilinear wave system on the odd line.

Modules
-------
geometry   grids, null coordinates, weights and the dyadic region decomposition
waveop     leapfrog solver for linear wave equations, traces, energy
traceio    binary trace files with JSON sidecars
scalecalc  scaling vector field and null derivatives on traces
system     coupled solver, Picard iteration, blowup, 3D reconstruction
norms      weighted region norms, aggregation, the twelve-term norm M and A
estimates  registry and audit of the thirteen inequality statements
lifespan   epsilon sweeps, blowup-time confirmation, lifespan-law fits
cli        command-line entry point ``twospeed``
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (ConfigurationError, DomainError, ParameterError, RefusedError,  # noqa: F401
                     TwoSpeedError, ValidationError)
from .geometry import Grid  # noqa: F401
from .waveop import SpaceTimeTrace, solve_linear  # noqa: F401
