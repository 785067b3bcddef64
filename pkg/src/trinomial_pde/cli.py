"""Command-line benchmark harness.

    trinomial-pde solve --config run.cfg [--seed N] [--solver tree|lsmc]
                        [--out DIR] [--format csv|json|plotdata] [--allow-nonmonotone]

The config is a flat ``key = value`` file (an optional ``[run]`` header is
accepted)::

    problem = ex6.2            # registry key
    solver = lsmc              # tree | lsmc
    schedule = 10:52083:32; 20:208333:16
    seed = 2024
    T = 0.2                    # optional, registry default otherwise
    x0 = 1, 2, 3               # optional
    p = 0.25                   # optional override of the automatic p
    sigma0_scale = 1.0         # optional override of the sigma0 scale
    eps = 0.01                 # optional truncation of a degenerate generator
    format = csv
    out = results
    name = ex62                # output file stem

Tree schedules list ``n`` only (``20; 40``) or ``n:1:1``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .generator import REGISTRY, PdeProblem, epsilon_truncate, get_problem, scheme_params
from .kernels import BudgetExceededError
from .lattice import solve_tree
from .lsmc import run_repeats
from .params import MonotonicityParams, MonotonicityWarning

log = logging.getLogger("trinomial_pde")

COLUMNS = ("n", "L", "K", "avg", "var_avg", "abs_error", "seconds")
FORMATS = ("csv", "json", "plotdata")

EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_BUDGET = 4


class ConfigError(ValueError):
    pass


class PreconditionError(RuntimeError):
    pass


@dataclass
class RunConfig:
    problem: str
    solver: str
    schedule: list
    seed: int = 0
    x0: Optional[tuple] = None
    T: Optional[float] = None
    p: Optional[float] = None
    sigma0_scale: Optional[float] = None
    eps: Optional[float] = None
    out: str = "."
    format: str = "csv"
    name: Optional[str] = None

    def validate(self) -> None:
        if self.problem not in REGISTRY:
            raise ConfigError(f"unknown problem {self.problem!r}; known: {', '.join(sorted(REGISTRY))}")
        if self.solver not in ("tree", "lsmc"):
            raise ConfigError(f"solver must be 'tree' or 'lsmc', got {self.solver!r}")
        if not self.schedule:
            raise ConfigError("schedule is empty")
        for n, L, K in self.schedule:
            if n < 1 or L < 1 or K < 1:
                raise ConfigError(f"schedule entries must be positive, got {(n, L, K)}")
            if self.solver == "tree" and (L, K) != (1, 1):
                raise ConfigError("tree schedules take n only (L and K must be 1)")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.eps is not None and self.eps < 0.0:
            raise ConfigError("eps must be >= 0")


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def parse_schedule(text: str, solver: str) -> list:
    rows = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = [s.strip() for s in item.split(":")]
        try:
            nums = [int(s) for s in parts]
        except ValueError:
            raise ConfigError(f"bad schedule entry {item!r}") from None
        if len(nums) == 1:
            if solver == "lsmc":
                raise ConfigError(f"lsmc schedule entries need n:L:K, got {item!r}")
            nums += [1, 1]
        if len(nums) != 3:
            raise ConfigError(f"schedule entries are n or n:L:K, got {item!r}")
        rows.append(tuple(nums))
    return sorted(rows)


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    body = text if text.lstrip().startswith("[") else "[run]\n" + text
    try:
        cp.read_string(body)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    if "run" not in cp:
        raise ConfigError("config needs a [run] section or no section header")
    sec = cp["run"]
    known = {"problem", "solver", "schedule", "seed", "x0", "t", "p", "sigma0_scale", "eps", "out", "format", "name"}
    extra = set(sec.keys()) - known
    if extra:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
    if "problem" not in sec:
        raise ConfigError("config is missing 'problem'")
    solver = sec.get("solver", "tree").strip()

    def opt_float(key):
        return float(sec[key]) if key in sec and sec[key].strip() else None

    try:
        cfg = RunConfig(
            problem=sec["problem"].strip(),
            solver=solver,
            schedule=parse_schedule(sec.get("schedule", ""), solver),
            seed=int(sec.get("seed", "0")),
            x0=_floats(sec["x0"]) if "x0" in sec else None,
            T=opt_float("t"),
            p=opt_float("p"),
            sigma0_scale=opt_float("sigma0_scale"),
            eps=opt_float("eps"),
            out=sec.get("out", ".").strip(),
            format=sec.get("format", "csv").strip(),
            name=sec.get("name", "").strip() or None,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value in config: {exc}") from None
    cfg.validate()
    return cfg


@dataclass
class Row:
    n: int
    L: int
    K: int
    avg: float
    var_avg: Optional[float]
    abs_error: Optional[float]
    seconds: float
    monotone: bool = True
    notes: tuple = ()


@dataclass
class ConvergenceTable:
    problem: str
    solver: str
    horizon: float
    true_value: Optional[float]
    rows: list = field(default_factory=list)

    @property
    def has_true_solution(self) -> bool:
        return self.true_value is not None

    def nr_diffs(self) -> list:
        """``NR_n - NR_prev`` for consecutive rows (first row has none)."""
        out = [None]
        for a, b in zip(self.rows, self.rows[1:]):
            out.append(b.avg - a.avg)
        return out

    def columns(self) -> tuple:
        return COLUMNS if self.has_true_solution else COLUMNS + ("nr_diff",)

    def records(self) -> list[dict]:
        diffs = self.nr_diffs()
        out = []
        for r, dif in zip(self.rows, diffs):
            rec = {"n": r.n, "L": r.L, "K": r.K, "avg": r.avg, "var_avg": r.var_avg,
                   "abs_error": r.abs_error, "seconds": r.seconds}
            if not self.has_true_solution:
                rec["nr_diff"] = dif
            out.append(rec)
        return out


def prepare(cfg: RunConfig, allow_nonmonotone: bool = False) -> tuple[PdeProblem, MonotonicityParams, np.ndarray]:
    problem = get_problem(cfg.problem, T=cfg.T, x0=cfg.x0)
    if cfg.x0 is not None and len(cfg.x0) != problem.dim:
        raise ConfigError(f"x0 has {len(cfg.x0)} entries, problem dimension is {problem.dim}")
    if cfg.eps:
        problem = epsilon_truncate(problem, cfg.eps, np.eye(problem.dim))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", MonotonicityWarning)
        try:
            params = scheme_params(problem, p=cfg.p, sigma0_scale=cfg.sigma0_scale)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    for w in caught:
        log.warning("%s", w.message)
    d = problem.dim
    theta = problem.bounds.theta if problem.bounds is not None else params.theta
    if d > 1 and theta >= 2.0 / d and not allow_nonmonotone:
        raise PreconditionError(
            f"theta={theta:.4g} >= 2/d={2.0 / d:.4g}: no admissible p makes the scheme monotone; "
            "rerun with --allow-nonmonotone to proceed anyway"
        )
    x0 = np.asarray(problem.x0, dtype=float)
    return problem, params, x0


def run(cfg: RunConfig, allow_nonmonotone: bool = False) -> ConvergenceTable:
    problem, params, x0 = prepare(cfg, allow_nonmonotone)
    truth = problem.true_value(x0)
    table = ConvergenceTable(problem.name, cfg.solver, problem.horizon, truth)
    for n, L, K in cfg.schedule:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MonotonicityWarning)
            if cfg.solver == "tree":
                res = solve_tree(problem, params, x0, n)
                row = Row(n, 1, 1, res.value, None, None if truth is None else abs(res.value - truth),
                          res.seconds, res.monotone, res.warnings)
            else:
                rep = run_repeats(problem, params, x0, n, L, K, cfg.seed)
                row = Row(n, L, K, rep.avg, rep.var_avg, rep.abs_error, rep.seconds, True, rep.flags)
        log.info("n=%d L=%d K=%d avg=%.10g (%.1fs)", row.n, row.L, row.K, row.avg, row.seconds)
        for note in row.notes:
            log.warning("n=%d: %s", n, note)
        table.rows.append(row)
    return table


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.10g" % v


def to_csv(table: ConvergenceTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = table.columns()
    w.writerow(cols)
    for rec in table.records():
        w.writerow([_fmt(rec[c]) for c in cols])
    return buf.getvalue()


def to_json(table: ConvergenceTable) -> str:
    doc = {
        "problem": table.problem,
        "solver": table.solver,
        "T": table.horizon,
        "true_value": table.true_value,
        "columns": list(table.columns()),
        "rows": [
            {**rec, "monotone": r.monotone, "notes": list(r.notes)}
            for rec, r in zip(table.records(), table.rows)
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def to_plotdata(table: ConvergenceTable) -> str:
    """Whitespace-separated ``h |error|`` lines (``|NR diff|`` without a true solution)."""
    label = "abs_error" if table.has_true_solution else "abs_nr_diff"
    lines = [f"# h {label}"]
    for rec in table.records():
        v = rec["abs_error"] if table.has_true_solution else rec["nr_diff"]
        if v is None:
            continue
        lines.append(f"{_fmt(table.horizon / rec['n'])} {_fmt(abs(v))}")
    return "\n".join(lines) + "\n"


def emit(table: ConvergenceTable, fmt: str, out_dir: str | Path, stem: str) -> Path:
    if not table.rows:
        raise ValueError("nothing to write: table is empty")
    render = {"csv": (to_csv, ".csv"), "json": (to_json, ".json"), "plotdata": (to_plotdata, ".dat")}
    try:
        fn, ext = render[fmt]
    except KeyError:
        raise ValueError(f"unknown format {fmt!r}") from None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{stem}{ext}"
    path.write_text(fn(table))
    return path


def read_csv(text: str) -> list[dict]:
    """Parse emitted CSV back into records (empty cells become None)."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for k, v in rec.items():
            if v == "":
                row[k] = None
            elif k in ("n", "L", "K"):
                row[k] = int(v)
            else:
                row[k] = float(v)
        out.append(row)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trinomial-pde", description="Monotone trinomial PDE solvers.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("solve", help="run a convergence schedule from a config file")
    sp.add_argument("--config", required=True, type=Path)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--solver", choices=("tree", "lsmc"))
    sp.add_argument("--out", type=Path)
    sp.add_argument("--format", choices=FORMATS)
    sp.add_argument("--allow-nonmonotone", action="store_true",
                    help="run even when no p makes the scheme monotone")
    sub.add_parser("problems", help="list registered problems")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.command == "problems":
        for name in sorted(REGISTRY):
            print(name)
        return 0
    try:
        cfg = parse_config(args.config.read_text())
        if args.seed is not None:
            cfg.seed = args.seed
        if args.solver is not None:
            cfg.solver = args.solver
        if args.out is not None:
            cfg.out = str(args.out)
        if args.format is not None:
            cfg.format = args.format
        cfg.validate()
        table = run(cfg, allow_nonmonotone=args.allow_nonmonotone)
        path = emit(table, cfg.format, cfg.out, cfg.name or cfg.problem)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
