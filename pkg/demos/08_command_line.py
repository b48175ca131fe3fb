"""The ``twospeed`` command drives the same experiments from presets and config files.

Every run writes its outputs plus the effective configuration and package
version into one directory.  The same calls work from a shell, e.g.
``twospeed simulate --preset golden-simulate --out run``.
"""

# %%
from __future__ import annotations

import json
import tempfile
from pathlib import Path

from twospeed.cli import PRESETS, main

print("presets:", ", ".join(PRESETS))
main(["info"])

# %%
with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "simulate"
    main(["simulate", "--preset", "golden-simulate", "--out", str(out)])
    print(sorted(p.name for p in out.iterdir()))
    summary = json.loads((out / "summary.json").read_text())
    print({k: summary[k] for k in ("amplitude_initial", "levels_stored", "t_last")})

    # A second call with --resume sees the finished stage and does nothing.
    main(["simulate", "--preset", "golden-simulate", "--out", str(out), "--resume"])

    # Settings come from an INI file; --set overrides single keys.
    cfg = Path(tmp) / "iterate.ini"
    cfg.write_text("[grid]\nt_end = 12\ndx = 0.125\n\n[data]\nepsilon = 0.3\n\n[iterate]\nj_max = 4\n")
    main(["iterate", "--config", str(cfg), "--set", "k_used=1", "--out", str(Path(tmp) / "iterate")])

    # Usage errors exit with status 2, refusals with 3.
    print("missing epsilon ->", main(["simulate", "--out", str(Path(tmp) / "bad")]))
    print("equal speeds ->", main(["verify", "--set", "estimates=E13", "--set", "c=1",
                                   "--set", "audit_family=free-w0.7", "--set", "audit_dx=0.0625",
                                   "--out", str(Path(tmp) / "refused")]))
