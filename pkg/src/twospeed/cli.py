"""Command-line entry point: ``twospeed <subcommand>``.

Subcommands: ``simulate``, ``iterate``, ``verify``, ``sweep``, ``regions`` and
``info``.  Settings come from, in increasing precedence, the built-in
defaults, a named ``--preset``, a ``--config`` file (INI sections or JSON) and
``--set key=value`` overrides.  Every JSON output embeds the full config and
the package version.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical refusal,
4 regression violation.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (ConfigurationError, DomainError, ParameterError, RefusedError, TwoSpeedError,
                     ValidationError)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_REFUSED, EXIT_VIOLATION = 0, 2, 3, 4
THREADS_ENV = "TWOSPEED_THREADS"
COMMANDS = ("simulate", "iterate", "verify", "sweep", "regions", "info")
SUMMARY_DIGITS = 10


@dataclass
class ExperimentConfig:
    """Every setting of every subcommand, grouped into INI sections by ``SECTIONS``."""

    # grid
    t_end: float = 16.0
    dx: float = 1.0 / 16
    cfl: float = 0.8
    nx: int = 0
    # data
    family: str = "standard-bump"
    epsilon: float | None = None
    nonlinear: bool = True
    c: float = 2.0
    seed: int = 0
    # simulate
    scheme: str = "centered"
    engine: str = "numba"
    store_stride: int = 1
    reconstruct: bool = False
    # iterate
    j_max: int = 8
    k_used: int = 1
    method: str = "finite_difference"
    compare: str = ""
    spill: bool = False
    # verify
    estimates: tuple = ()
    audit_family: tuple = ("free-w0.6", "free-w0.7", "free-w0.8", "drift-w0.7", "coupled-eps0.5")
    p_values: tuple = (0.0, 1.0)
    audit_t_end: float = 16.0
    audit_dx: float = 1.0 / 32
    perturb: float = 0.0
    # sweep
    epsilons: tuple = (8.0, 7.0, 6.0, 5.5, 5.0, 4.5, 4.0, 3.75, 3.5, 3.25, 3.0)
    horizon: float = 128.0
    sweep_dx: float = 1.0 / 32
    confirm: bool = True
    early_exit: int = 2
    threshold_factor: float = 1e3
    threshold_check: bool = True
    replay: str = ""
    # regions
    enlargement: float = 1.0

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        d = self.to_dict()
        for section, names in SECTIONS.items():
            cp[section] = {n: _format_value(d[n]) for n in names}
        buf = []

        class _W:
            def write(self, s):
                buf.append(s)
        cp.write(_W())
        return "".join(buf)


SECTIONS = {
    "grid": ("t_end", "dx", "cfl", "nx"),
    "data": ("family", "epsilon", "nonlinear", "c", "seed"),
    "simulate": ("scheme", "engine", "store_stride", "reconstruct"),
    "iterate": ("j_max", "k_used", "method", "compare", "spill"),
    "verify": ("estimates", "audit_family", "p_values", "audit_t_end", "audit_dx", "perturb"),
    "sweep": ("epsilons", "horizon", "sweep_dx", "confirm", "early_exit", "threshold_factor",
              "threshold_check", "replay"),
    "regions": ("enlargement",),
}
_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}

PRESETS = {
    "lifespan-sweep": {"family": "standard-bump"},
    "estimate-audit": {},
    "picard-contraction": {"family": "standard-bump", "epsilon": 0.35, "t_end": 16.0, "dx": 1.0 / 16,
                           "j_max": 8},
    "golden-simulate": {"family": "standard-bump", "epsilon": 0.05, "nx": 1024, "dx": 1.0 / 32,
                        "t_end": 10.0, "store_stride": 10},
    "speed-gap": {"estimates": ("E13",), "audit_family": ("free-w0.7",)},
}


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (list, tuple)):
        return ", ".join(str(x) for x in v)
    return str(v)


def _coerce(name: str, value):
    """Convert a raw config value (string or JSON scalar/list) to the field type."""
    if name not in _FIELD_TYPES:
        raise ConfigurationError(f"unknown config key {name!r}")
    kind = _FIELD_TYPES[name]
    try:
        if kind == "tuple":
            if isinstance(value, str):
                value = [v.strip() for v in value.split(",") if v.strip()]
            items = list(value)
            default = getattr(ExperimentConfig(), name)
            numeric = bool(default) and isinstance(default[0], float) or name in ("p_values", "epsilons")
            return tuple(float(v) for v in items) if numeric else tuple(str(v) for v in items)
        if isinstance(value, str):
            value = value.strip()
            if kind == "float | None":
                return None if value in ("", "none", "None") else float(value)
            if kind == "bool":
                low = value.lower()
                if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                    raise ValueError(value)
                return low in ("1", "true", "yes", "on")
            if kind == "int":
                return int(value)
            if kind == "float":
                return float(value)
            return value
        if kind == "bool":
            return bool(value)
        if kind == "int":
            return int(value)
        if kind in ("float", "float | None"):
            return None if value is None else float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad value for {name!r}: {value!r}") from exc


def read_config_file(path) -> dict:
    """Flat ``{key: value}`` from an INI file with sections or a JSON file."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} not found")
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
        flat = {}
        for k, v in raw.items():
            if isinstance(v, dict):
                flat.update(v)
            else:
                flat[k] = v
        return flat
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    flat = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigurationError(f"unknown config section [{section}]")
        flat.update(cp[section])
    return flat


def build_config(preset: str | None = None, config_path=None, overrides: list[str] | None = None) -> ExperimentConfig:
    values: dict = {}
    if preset:
        if preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    if config_path:
        values.update(read_config_file(config_path))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v
    cfg = ExperimentConfig()
    for k, v in values.items():
        setattr(cfg, k, _coerce(k, v))
    return cfg


def _threads(flag: int | None) -> int:
    if flag is not None:
        n = flag
    else:
        env = os.environ.get(THREADS_ENV, "")
        try:
            n = int(env) if env else 1
        except ValueError as exc:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
    if n < 1:
        raise ConfigurationError("thread count must be >= 1")
    return n


def _round(v):
    """Round floats for summaries that must be identical across machines."""
    if isinstance(v, float):
        return v if not np.isfinite(v) else float(f"{v:.{SUMMARY_DIGITS}g}")
    if isinstance(v, dict):
        return {k: _round(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_round(x) for x in v]
    return v


class OutputDir:
    """Single writer for one output directory; stamps every JSON file."""

    def __init__(self, root, cfg: ExperimentConfig, command: str):
        self.root = Path(root)
        self.cfg = cfg
        self.command = command
        self.root.mkdir(parents=True, exist_ok=True)
        self.written: list[str] = []

    @property
    def meta(self) -> dict:
        return {"command": self.command, "version": __version__, "config": self.cfg.to_dict()}

    def path(self, name: str) -> Path:
        return self.root / name

    def json(self, name: str, payload: dict) -> Path:
        p = self.path(name)
        p.write_text(json.dumps({**self.meta, **payload}, indent=2, sort_keys=True, default=float) + "\n")
        self.written.append(name)
        return p

    def text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        self.written.append(name)
        return p

    @property
    def stage_file(self) -> Path:
        return self.path(f"{self.command}.stage.json")

    def completed(self) -> bool:
        if not self.stage_file.exists():
            return False
        try:
            return json.loads(self.stage_file.read_text()).get("config_hash") == self.cfg.digest()
        except json.JSONDecodeError:
            return False

    def finish(self, exit_code: int):
        self.stage_file.write_text(json.dumps(
            {**self.meta, "config_hash": self.cfg.digest(), "files": self.written,
             "exit_code": exit_code}, indent=2, sort_keys=True) + "\n")


def _grid(cfg: ExperimentConfig, c: float | None = None):
    from .geometry import Grid

    c = cfg.c if c is None else c
    if cfg.nx:
        speed = max(1.0, c)
        nsteps = int(np.ceil((cfg.t_end - 4.0) / (cfg.cfl * cfg.dx / speed) - 1e-9))
        return Grid(x_max=cfg.nx * cfg.dx / 2, nx=cfg.nx, t_end=cfg.t_end, nsteps=nsteps)
    return Grid.for_problem(cfg.t_end, c=c, dx=cfg.dx, cfl=cfg.cfl)


def _data(cfg: ExperimentConfig):
    from .system import DataFamily

    if cfg.epsilon is None:
        raise ConfigurationError("epsilon is required (set it in [data], with --set epsilon=..., or a preset)")
    return DataFamily(cfg.family, cfg.epsilon, cfg.nonlinear)


def cmd_simulate(cfg: ExperimentConfig, out: OutputDir, threads: int) -> int:
    from .estimates import support_ok
    from .system import reconstruct_3d, solve_coupled
    from .traceio import write_trace

    data = _data(cfg)
    grid = _grid(cfg)
    V, W = solve_coupled(data, cfg.c, grid, scheme=cfg.scheme, store_stride=cfg.store_stride,
                         engine=cfg.engine)
    if not (support_ok(V) and support_ok(W)):
        raise RefusedError("solution reaches the domain edge; enlarge the grid or shorten t_end")
    prov = {"config": cfg.to_dict(), "version": __version__}
    for name, tr in (("V", V), ("W", W)):
        write_trace(out.path(f"{name}.mswl"), tr, prov)
        out.written += [f"{name}.mswl", f"{name}.mswl.json"]
    if cfg.reconstruct:
        rad = reconstruct_3d(V, W)
        r, v, w = rad.positive()
        np.savez(out.path("radial.npz"), r=r, t=V.times, v=v, w=w)
        out.written.append("radial.npz")
    amp = V.diagnostics["amplitude"]
    summary = {
        "trivial": data.epsilon == 0,
        "grid": grid.signature(),
        "blowup_time": V.blowup_time,
        "levels_stored": int(V.n_levels),
        "t_last": float(V.times[-1]),
        "max_abs_V": float(np.max(np.abs(V.samples))),
        "max_abs_W": float(np.max(np.abs(W.samples))),
        "l2_V_last": float(np.sqrt(np.sum(V.samples[-1] ** 2) * grid.dx)),
        "l2_W_last": float(np.sqrt(np.sum(W.samples[-1] ** 2) * grid.dx)),
        "amplitude_initial": float(amp[0]),
        "amplitude_max": float(np.max(amp)),
        "threshold": float(V.diagnostics["threshold"]),
    }
    out.json("summary.json", _round(summary))
    state = "trivial run (zero data)" if summary["trivial"] else (
        f"blowup at t={V.blowup_time:.4f}" if V.blowup_time is not None else f"reached t={summary['t_last']:g}")
    print(f"simulate {data.name} eps={data.epsilon:g} c={cfg.c:g}: {state}")
    return EXIT_OK


def cmd_iterate(cfg: ExperimentConfig, out: OutputDir, threads: int) -> int:
    from .norms import reports_to_csv
    from .system import picard_iterate

    data = _data(cfg)
    grid = _grid(cfg)
    if cfg.compare:
        prior = json.loads(Path(cfg.compare).read_text())
        pk = prior.get("k_used", prior.get("config", {}).get("k_used"))
        pm = prior.get("method", prior.get("config", {}).get("method"))
        if pk != cfg.k_used or pm != cfg.method:
            raise RefusedError(f"refusing to compare k_used={cfg.k_used} ({cfg.method}) "
                               f"with k_used={pk} ({pm})")
    spill = out.path("iterates") if cfg.spill else None
    ledger = picard_iterate(data, cfg.c, grid, cfg.j_max, k_used=cfg.k_used, method=cfg.method,
                            spill_dir=spill)
    reports = [ledger.reports[j][0] for j in sorted(ledger.reports)]
    extra = [{"A": r["A"], "contraction_ratio": r["contraction_ratio"]} for r in ledger.rows if "A" in r]
    out.text("norms.csv", reports_to_csv(reports, extra))
    payload = {**ledger.to_json(), "method": cfg.method,
               "contraction_ratios": [None if not np.isfinite(x) else float(x)
                                      for x in ledger.contraction_ratios()]}
    if cfg.compare:
        prior_rows = {r["j"]: r for r in prior.get("rows", [])}
        payload["compare"] = [{"j": r["j"], "dA": r["A"] - prior_rows[r["j"]]["A"],
                               "dM": r["M"] - prior_rows[r["j"]]["M"]}
                              for r in ledger.rows if "A" in r and r["j"] in prior_rows]
    out.json("ledger.json", payload)
    for row in ledger.rows:
        if "A" not in row:
            print(f"j={row['j']}: stopped, blowup at t={row['blowup']:.4f}")
            continue
        ratio = row["contraction_ratio"]
        rtxt = "" if ratio is None else f"  A_j/A_j-1={ratio:.4f}"
        print(f"j={row['j']}: M={row['M']:.6g}  A={row['A']:.6g}{rtxt}")
    return EXIT_OK


def _audit_configs(cfg: ExperimentConfig):
    from .estimates import DEFAULT_FAMILY

    known = {a.name: a for a in DEFAULT_FAMILY}
    if not cfg.audit_family:
        raise ConfigurationError("audit family is empty")
    rng = np.random.default_rng(cfg.seed)
    out = []
    for name in cfg.audit_family:
        if name not in known:
            raise ConfigurationError(f"unknown audit config {name!r}; choose from {sorted(known)}")
        a = known[name]
        if cfg.perturb:
            scale = 1.0 + cfg.perturb * rng.standard_normal()
            a = dataclasses.replace(a, name=f"{name}*{scale:.4f}", amplitude=a.amplitude * scale)
        out.append(a)
    return out


def cmd_verify(cfg: ExperimentConfig, out: OutputDir, threads: int) -> int:
    from .estimates import DEFAULT_AUDIT_GRID, IDS, audit_family, load_pins, pin_violations

    family = _audit_configs(cfg)
    ids = list(cfg.estimates) or list(IDS)
    unknown = [i for i in ids if i not in IDS]
    if unknown:
        raise ConfigurationError(f"unknown estimate ids {unknown}")
    table = audit_family(ids, family, c=cfg.c, t_end=cfg.audit_t_end, dx=cfg.audit_dx,
                         p_values=tuple(cfg.p_values))
    out.text("audit.csv", table.to_csv())
    default_grid = (cfg.audit_t_end == DEFAULT_AUDIT_GRID["t_end"] and cfg.audit_dx == DEFAULT_AUDIT_GRID["dx"]
                    and cfg.c == 2.0)
    violations = pin_violations(table, load_pins())
    refused = [{"id": r.id, "config": r.config, "reason": r.refused} for r in table.refused()]
    out.json("audit.json", {**table.to_json(), "violations": violations, "refused": refused,
                            "pins_apply": default_grid})
    for key, ratio in sorted(table.worst().items()):
        flag = "  VIOLATION" if key in violations else ""
        print(f"{key:10s} worst ratio {ratio:.4g}{flag}")
    for r in refused:
        print(f"{r['id']:10s} refused on {r['config']}: {r['reason']}")
    if violations:
        if not default_grid:
            logger.warning("pins were measured on the default grid; this run used another")
        return EXIT_VIOLATION
    return EXIT_REFUSED if refused else EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, out: OutputDir, threads: int) -> int:
    from .lifespan import read_sweep_csv, summarize, sweep, threshold_insensitivity, write_sweep
    from .system import DataFamily

    extra = {}
    if cfg.replay:
        records = read_sweep_csv(cfg.replay)
        extra["replayed_from"] = str(cfg.replay)
    else:
        data = DataFamily(cfg.family, cfg.epsilons[0] if cfg.epsilons else 1.0, cfg.nonlinear)
        records = sweep(data, cfg.c, cfg.epsilons, cfg.horizon, cfg.sweep_dx, workers=threads,
                        confirm=cfg.confirm, early_exit=cfg.early_exit or None,
                        threshold_factor=cfg.threshold_factor, scheme=cfg.scheme, engine=cfg.engine)
        if cfg.threshold_check:
            extra["threshold_check"] = threshold_insensitivity(records, data, 10.0, dx=cfg.sweep_dx,
                                                               scheme=cfg.scheme, engine=cfg.engine)
    meta = out.meta
    paths = write_sweep(records, out.root, meta["config"], extra)
    out.written += [p.name for p in paths.values()]
    s = summarize(records)
    for r in records:
        state = "survived" if r.survived else f"T*={r.T_star:.4f}"
        print(f"eps={r.epsilon:g}: {state}")
    fit = s["fit"]
    if fit["insufficient"]:
        print(f"fit: insufficient data ({fit['n_points']} finite points)")
    else:
        print(f"fit: c_tilde={fit['c_tilde']:.4g} r2={fit['r_squared']:.4f} "
              f"winner={s['comparison']['winner']}")
    return EXIT_OK


def cmd_regions(cfg: ExperimentConfig, out: OutputDir, threads: int) -> int:
    from .geometry import enumerate_regions

    regions = enumerate_regions(cfg.c, cfg.t_end, cfg.enlargement)
    counts: dict = {}
    for reg in regions:
        counts[reg.kind.value] = counts.get(reg.kind.value, 0) + 1
    out.json("regions.json", {"count": len(regions), "by_kind": counts,
                              "regions": [r.to_json() for r in regions]})
    print(f"{len(regions)} regions up to T={cfg.t_end:g} at c={cfg.c:g}: "
          + ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    return EXIT_OK


def cmd_info(cfg: ExperimentConfig, out: OutputDir | None, threads: int) -> int:
    from .estimates import REGISTRY
    from .system import ENGINES, FAMILY_PROFILES

    try:
        import numba
        nb = numba.__version__
    except ImportError:  # pragma: no cover
        nb = None
    info = {"version": __version__, "numba": nb, "numpy": np.__version__, "threads": threads,
            "presets": sorted(PRESETS), "data_families": sorted(FAMILY_PROFILES),
            "engines": list(ENGINES),
            "estimates": {k: e.statement for k, e in REGISTRY.items()}}
    print(json.dumps(info, indent=2))
    print("\n# effective config\n" + cfg.to_ini())
    return EXIT_OK


HANDLERS = {"simulate": cmd_simulate, "iterate": cmd_iterate, "verify": cmd_verify,
            "sweep": cmd_sweep, "regions": cmd_regions, "info": cmd_info}


def _add_common(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", metavar="PATH", default=d, help="INI or JSON config file")
    p.add_argument("--out", metavar="DIR", default=d, help="output directory")
    p.add_argument("--threads", type=int, metavar="N", default=d,
                   help=f"worker count (default ${THREADS_ENV} or 1)")
    p.add_argument("--resume", action="store_true", default=d,
                   help="skip the stage if DIR already holds output for the same config")
    p.add_argument("--preset", metavar="NAME", default=d, help=f"one of {', '.join(sorted(PRESETS))}")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", default=d, dest="overrides",
                   help="override one config key (repeatable)")
    p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twospeed", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"twospeed {__version__}")
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {"simulate": "integrate the coupled system and write traces",
             "iterate": "run the Picard iteration and report M_j, A_j",
             "verify": "audit the inequality registry on a solution family",
             "sweep": "epsilon sweep of blowup times and lifespan-law fits",
             "regions": "list the dyadic regions up to a horizon",
             "info": "versions, presets, registry and the effective config"}
    for name in COMMANDS:
        _add_common(sub.add_parser(name, help=helps[name]), suppress=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose or 0, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args.preset, args.config, args.overrides)
        threads = _threads(args.threads)
        if args.command == "info":
            return cmd_info(cfg, None, threads)
        out = OutputDir(args.out or Path("twospeed-out") / args.command, cfg, args.command)
        if args.resume and out.completed():
            print(f"{args.command}: output in {out.root} matches this config, skipping")
            return EXIT_OK
        code = HANDLERS[args.command](cfg, out, threads)
        out.finish(code)
        return code
    except (ConfigurationError, ParameterError) as exc:
        print(f"twospeed: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RefusedError, ValidationError, DomainError) as exc:
        print(f"twospeed: refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except TwoSpeedError as exc:  # pragma: no cover
        print(f"twospeed: {exc}", file=sys.stderr)
        return EXIT_REFUSED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
