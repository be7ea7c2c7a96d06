"""Command-line front end: ``isoball <command> [options]``.

Every run writes its data file(s) plus ``<command>.manifest.json`` into
``--out``.  The manifest holds the full validated configuration and the tool
version and nothing machine- or time-dependent, so ``isoball replay`` on it
reproduces every file byte for byte.

Exit codes: 0 success, 1 numeric failure, 2 invalid arguments,
3 optimizer did not converge.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .bound import DEFAULT_ODE_TOL, DEFAULT_QUAD_TOL, dimension_scan, iso_profile
from .geometry import BallGeometry
from .lemmas import lemma_suite, parse_resolution
from .lens import lens_free_area, solve_rho_for_volume
from .variational import MIN_NODES, euler_lagrange_residual, minimize_profile

log = logging.getLogger(__name__)

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE, EXIT_CONVERGENCE = 0, 1, 2, 3
COMMANDS = ("profile", "distance", "variational", "verify-lemmas")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    n: int | None = None
    n_range: str | None = None
    eps: float | None = None
    eps_grid: str | None = None
    quad_tol: float = DEFAULT_QUAD_TOL
    ode_tol: float = DEFAULT_ODE_TOL
    m: int = 2000
    starts: int = 5
    h: str = "R/200"
    seed: list[int] = field(default_factory=lambda: [0])
    bodies: int = 50
    bodies_3d: int = 5
    lens_eps: float = 0.1
    format: str = "csv"

    # -- validation --

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.n is not None and self.n < 2:
            raise ConfigError("n must be >= 2")
        if self.eps is not None:
            _check_eps(self.eps, self.command)
        for tol in (self.quad_tol, self.ode_tol):
            if not tol > 0:
                raise ConfigError("tolerances must be positive")
        check = getattr(self, "_validate_" + self.command.replace("-", "_"))
        check()
        return self

    def _validate_profile(self):
        if self.n is None:
            raise ConfigError("profile needs --n")
        if (self.eps is None) == (self.eps_grid is None):
            raise ConfigError("profile needs exactly one of --eps and --eps-grid")
        for e in self.eps_values():
            _check_eps(e, self.command)

    def _validate_distance(self):
        if (self.n is None) == (self.n_range is None):
            raise ConfigError("distance needs exactly one of --n and --n-range")
        if (self.eps is None) == (self.eps_grid is None):
            raise ConfigError("distance needs exactly one of --eps and --eps-grid")
        self.n_values()
        for e in self.eps_values():
            _check_eps(e, self.command)

    def _validate_variational(self):
        if self.n is None or self.eps is None:
            raise ConfigError("variational needs --n and --eps")
        if not self.eps < 0.5:
            raise ConfigError("eps must be < 1/2 for the variational problem")
        if self.m < MIN_NODES:
            raise ConfigError(f"m must be >= {MIN_NODES}")
        if self.starts < 5:
            raise ConfigError("starts must be >= 5")
        if len(self.seed) != 1:
            raise ConfigError("variational takes a single --seed")

    def _validate_verify_lemmas(self):
        try:
            parse_resolution(self.h)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.bodies < 0 or self.bodies_3d < 0:
            raise ConfigError("body counts must be >= 0")
        if not (0.0 < self.lens_eps < 0.5):
            raise ConfigError("lens-eps must lie in (0, 1/2)")

    # -- grids --

    def eps_values(self) -> list[float]:
        if self.eps is not None:
            return [float(self.eps)]
        return parse_eps_grid(self.eps_grid)

    def n_values(self) -> list[int]:
        if self.n is not None:
            return [int(self.n)]
        try:
            a, b = (int(v) for v in self.n_range.split(":"))
        except ValueError:
            raise ConfigError(f"n-range must look like 2:100, got {self.n_range!r}") from None
        if a < 2:
            raise ConfigError("n must be >= 2")
        if b < a:
            raise ConfigError("n-range is empty")
        return list(range(a, b + 1))

    def to_dict(self) -> dict:
        return asdict(self)


def _check_eps(e, command):
    if not e > 0:
        raise ConfigError("eps must be > 0")
    if not e <= 0.5:
        raise ConfigError("eps must be <= 1/2")


def parse_eps_grid(spec: str) -> list[float]:
    """``log:a:b:k`` (geometric), ``lin:a:b:k`` (uniform) or ``e1,e2,...``."""
    try:
        if spec.startswith(("log:", "lin:")):
            kind, a, b, k = spec.split(":")
            a, b, k = float(a), float(b), int(k)
            if k < 1:
                raise ValueError
            if kind == "log":
                if not (a > 0 and b > 0):
                    raise ConfigError("eps must be > 0")
                vals = np.geomspace(a, b, k)
            else:
                vals = np.linspace(a, b, k)
            # pin the end points exactly; geomspace rounds them
            vals[0], vals[-1] = a, b
            return [float(v) for v in vals]
        return [float(v) for v in spec.split(",") if v.strip()]
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"cannot parse eps grid {spec!r}") from None


# -- output helpers --------------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _clean(v):
    # JSON without NaN/inf tokens
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _csv_text(header: dict, columns: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    for k, v in header.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


@dataclass
class RunResult:
    files: dict[str, str]
    summary: dict
    status: int = EXIT_OK
    message: str = ""
    warning: bool = False


def _table(cfg, name, header, columns, rows, summary, **kw) -> RunResult:
    if cfg.format == "csv":
        head = {"command": cfg.command, "version": __version__}
        head.update(header)
        files = {f"{name}.csv": _csv_text(head, columns, rows)}
    else:
        doc = {"columns": columns, "rows": rows, "summary": summary}
        files = {f"{name}.json": _dumps(doc)}
    return RunResult(files, summary, **kw)


# -- commands ------------------------------------------------------------------------------


def cmd_profile(cfg: RunConfig) -> RunResult:
    pts = iso_profile(cfg.n, cfg.eps_values())
    rows = [[p.n, p.eps, p.m_value] for p in pts]
    bad = next((p for p in pts if p.error), None)
    summary = {"rows": len(rows)}
    res = _table(cfg, "profile", {"n": cfg.n}, ["n", "eps", "M"], rows, summary)
    if bad is not None:
        res.status = EXIT_NUMERIC
        res.message = f"M failed at eps={bad.eps!r}: {bad.error}"
    return res


def cmd_distance(cfg: RunConfig) -> RunResult:
    rows, scans, bad = [], [], None
    for eps in cfg.eps_values():
        scan = dimension_scan(eps, cfg.n_values(), quad_tol=cfg.quad_tol, ode_tol=cfg.ode_tol)
        scans.append(scan)
        diffs = [None] + scan.differences()
        sup = scan.sup
        for r, dd in zip(scan.rows, diffs):
            rows.append([r.n, r.eps, r.m_value, r.d_value, r.d_ode, r.gap, r.quad_error, dd, sup])
            if r.error and bad is None:
                bad = r
    summary = {
        "scans": [
            {
                "eps": s.eps,
                "sup_D": s.sup,
                "argsup_n": s.argsup,
                "max_gap": max((r.gap for r in s.rows if r.gap is not None), default=None),
                "differences": s.differences(),
            }
            for s in scans
        ]
    }
    header = {
        "sup_D": " ".join(f"eps={s.eps!r}:{s.sup!r}@n={s.argsup}" for s in scans),
        "quad_tol": cfg.quad_tol,
        "ode_tol": cfg.ode_tol,
    }
    columns = ["n", "eps", "M", "D", "D_ode", "gap", "quad_error", "diff", "sup_D"]
    res = _table(cfg, "distance", header, columns, rows, summary)
    if bad is not None:
        res.status = EXIT_NUMERIC
        res.message = f"distance failed at n={bad.n}, eps={bad.eps!r}: {bad.error}"
    return res


def cmd_variational(cfg: RunConfig) -> RunResult:
    seed = cfg.seed[0]
    out = minimize_profile(cfg.n, cfg.eps, cfg.m, seed=seed, starts=cfg.starts)
    R = out.profile.ambient.radius
    lens_area = lens_free_area(solve_rho_for_volume(cfg.n, cfg.eps))
    summary = {
        "area": out.area,
        "lens_area": lens_area,
        "relative_gap": out.area / lens_area - 1.0,
        "el_residual_R": euler_lagrange_residual(out.profile, out.multiplier) * R,
        "multiplier": out.multiplier,
        "converged": out.converged,
        "volume_violation": out.volume_violation,
        "starts": [asdict(s) for s in out.starts],
    }
    p = out.profile
    rows = [[x, r, bool(c)] for x, r, c in zip(p.grid, p.radii, p.clip_mask)]
    header = {k: _fmt(summary[k]) for k in ("area", "lens_area", "relative_gap", "el_residual_R", "multiplier", "converged")}
    res = _table(cfg, "variational", header, ["x", "r", "clipped"], rows, summary)
    if not out.converged:
        res.status = EXIT_CONVERGENCE
        res.warning = True
        res.message = f"optimizer did not meet the volume tolerance (violation {out.volume_violation:.2e})"
    return res


def cmd_verify_lemmas(cfg: RunConfig) -> RunResult:
    frac = parse_resolution(cfg.h)
    runs, first_fail = [], None
    for seed in cfg.seed:
        checks = lemma_suite(frac, seed=seed, eps=cfg.lens_eps, bodies=cfg.bodies, bodies_3d=cfg.bodies_3d)
        runs.append({"seed": seed, "checks": [c.to_dict() for c in checks]})
        if first_fail is None:
            first_fail = next((c for c in checks if c.passed is False), None)
    verdicts = [[c["passed"] for c in r["checks"]] for r in runs]
    report = {
        "resolution_fraction": frac,
        "runs": runs,
        "all_passed": first_fail is None,
        "verdicts_agree_across_seeds": all(v == verdicts[0] for v in verdicts),
    }
    res = RunResult({"lemmas.json": _dumps(report)}, {"all_passed": first_fail is None})
    if first_fail is not None:
        res.status = EXIT_NUMERIC
        res.message = f"lemma check failed: {first_fail.name} (measured {first_fail.measured}, tolerance {first_fail.tolerance})"
    return res


DISPATCH = {
    "profile": cmd_profile,
    "distance": cmd_distance,
    "variational": cmd_variational,
    "verify-lemmas": cmd_verify_lemmas,
}


def run(cfg: RunConfig, out_dir: Path) -> RunResult:
    """Execute a validated config and write its files plus manifest into ``out_dir``."""
    result = DISPATCH[cfg.command](cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in result.files.items():
        (out_dir / name).write_text(text)
    manifest = {
        "tool": "isoball",
        "version": __version__,
        "command": cfg.command,
        "config": cfg.to_dict(),
        "outputs": sorted(result.files),
        "exit_status": result.status,
        "warning": result.warning,
        "summary": result.summary,
    }
    mname = f"{cfg.command}.manifest.json"
    (out_dir / mname).write_text(_dumps(manifest))
    return result


# -- argument parsing --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isoball", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"isoball {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("profile", help="tabulate M(eps, n)")
    sp.add_argument("--n", type=int)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--eps-grid", help="log:a:b:k, lin:a:b:k or a comma list")
    common(sp)

    sp = sub.add_parser("distance", help="D(eps, n) by quadrature and by the growth ODE")
    sp.add_argument("--n", type=int)
    sp.add_argument("--n-range", help="inclusive range a:b")
    sp.add_argument("--eps", type=float)
    sp.add_argument("--eps-grid")
    sp.add_argument("--quad-tol", type=float, default=DEFAULT_QUAD_TOL)
    sp.add_argument("--ode-tol", type=float, default=DEFAULT_ODE_TOL)
    common(sp)

    sp = sub.add_parser("variational", help="minimize free area over profiles of revolution")
    sp.add_argument("--n", type=int)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--m", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--starts", type=int, default=5)
    common(sp)

    sp = sub.add_parser("verify-lemmas", help="run the symmetry-lab suite")
    sp.add_argument("--h", default="R/200", help="resolution as R/k or a fraction of R")
    sp.add_argument("--seed", type=int, action="append", help="repeatable")
    sp.add_argument("--bodies", type=int, default=50, help="planar random bodies")
    sp.add_argument("--bodies-3d", type=int, default=5, help="spatial random bodies")
    sp.add_argument("--lens-eps", type=float, default=0.1)
    common(sp)

    sp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out", required=True)
    sp.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    names = {f.name for f in fields(RunConfig)}
    kw = {k: v for k, v in vars(ns).items() if k in names and v is not None}
    if "seed" in kw and not isinstance(kw["seed"], list):
        kw["seed"] = [kw["seed"]]
    return RunConfig(**kw)


def config_from_manifest(path) -> RunConfig:
    doc = json.loads(Path(path).read_text())
    if doc.get("tool") != "isoball":
        raise ConfigError("not an isoball manifest")
    if doc.get("version") != __version__:
        log.warning("manifest written by isoball %s, replaying with %s", doc.get("version"), __version__)
    return RunConfig(**doc["config"])


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if ns.command == "replay":
            cfg = config_from_manifest(ns.manifest).validate()
        else:
            cfg = config_from_args(ns).validate()
    except (ConfigError, OSError, TypeError, KeyError, json.JSONDecodeError) as exc:
        print(f"isoball: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = run(cfg, Path(ns.out))
    except (ArithmeticError, ValueError) as exc:
        print(f"isoball: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if result.message:
        print(f"isoball: {result.message}", file=sys.stderr)
    for name in sorted(result.files):
        print(Path(ns.out) / name)
    return result.status


if __name__ == "__main__":
    sys.exit(main())
