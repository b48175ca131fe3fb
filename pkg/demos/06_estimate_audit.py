"""Auditing the thirteen inequality statements on a family of solutions.

An inequality "lhs <~ rhs" cannot be checked against an unknown constant, so
each entry reports the ratio lhs / rhs.  The audit looks for ratios that stay
bounded across the family and stable under grid refinement.
"""

# %%
from __future__ import annotations

from twospeed.estimates import DEFAULT_FAMILY, IDS, REGISTRY, audit_family, load_pins, pin_violations, speed_gap_scan

for eid in IDS:
    print(f"{eid:>4} {REGISTRY[eid].label}: {REGISTRY[eid].statement}")

# %% [markdown]
# The shipped family has free outgoing bumps, a forced drifting bump and a
# solution of the coupled system.  This takes about 15 s.

# %%
table = audit_family(IDS, DEFAULT_FAMILY, c=2.0, dx=1 / 32)
pins = load_pins()
for key, worst in table.worst().items():
    print(f"{key:>8}  worst ratio={worst:.4f}  regression bound={pins[key]:.4f}")
print("pin violations:", pin_violations(table) or "none")

# %% [markdown]
# One estimate relies on the two speeds differing.  Its ratio grows as c
# approaches 1, and c = 1 is refused outright.

# %%
for row in speed_gap_scan(speeds=(1.0, 1.1, 1.5, 2.0, 3.0)):
    print(f"c={row['c']:.1f}  " + (f"ratio={row['ratio']:.4f}" if row["refused"] is None
                                    else f"refused: {row['refused']}"))
