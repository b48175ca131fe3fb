"""Dyadic space-time regions and the weighted norm M of a solution pair."""

# %%
from __future__ import annotations

from collections import Counter

import numpy as np

from twospeed.geometry import Grid, classify_point, enumerate_regions, label_points
from twospeed.norms import TERMS, assemble_M, redecomposition_bound, region_tables
from twospeed.system import DataFamily, solve_coupled

# %% [markdown]
# Time is cut into dyadic blocks [tau, 2 tau).  Inside each block the support
# cone splits into bands in r, bands in c t - r near the cone, and one outer cell.

# %%
c, T = 2.0, 64.0
regions = enumerate_regions(c, T)
print(len(regions), "regions;", dict(Counter(r.kind.value for r in regions)))
for t, r in [(5.0, 0.5), (20.0, 30.0), (40.0, 76.0), (40.0, 40.0)]:
    reg = classify_point(t, r, c, T)
    print(f"(t={t}, r={r}) ->", None if reg is None else (reg.tau, reg.kind.value, reg.value))

# %% [markdown]
# Every point of the cone lies in exactly one region.

# %%
t = np.linspace(4.0, T, 256)
r = np.linspace(0.0, c * T, 256)
tt, rr = np.meshgrid(t, r, indexing="ij")
count = sum(reg.contains(tt, rr).astype(int) for reg in regions)
inside = rr <= c * tt - (4 * c - 1)
print("one region per cone point:", bool(np.all(count[inside] == 1)))
print("labels agree:", bool(np.all((label_points(t, r, c, T).labels >= 0) == inside)))

# %% [markdown]
# The norm M sums twelve weighted terms.  Each term is an l2 or sup
# aggregation over the regions of one family.

# %%
grid = Grid.for_problem(32.0, c=c, dx=1 / 16)
V, W = solve_coupled(DataFamily("standard-bump", 0.3), c, grid)
report = assemble_M(V, W, c)
for term in TERMS:
    print(f"{report.terms[term.id]:10.4e}  {term.describe()}")
print(f"M = {report.total:.4e}")

# %% [markdown]
# Replacing an l2 sum over n dyadic values by sqrt(n) times their max never
# underestimates.  Check this on the computed region tables.

# %%
tables, _ = region_tables(V, W, c)
for term in TERMS:
    index = "R" if term.family == "R" else ("U" if term.speed == "1" else "U_c")
    lhs, rhs, n = redecomposition_bound(tables[term.id], index)
    print(f"{term.id:>4}  l2={lhs:.3e}  sqrt({n})*sup={rhs:.3e}  holds={lhs <= rhs}")
