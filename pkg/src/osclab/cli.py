"""Command-line runner: ``osclab <subcommand> ...``.

Every subcommand builds an :class:`ExperimentConfig`, hands it to
:func:`run`, and prints (or writes) a JSON report or a flat CSV table.
Exit status is 0 on pass, 1 when a check fails and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .czo import (
    CzOperator,
    boundedness_experiment,
    kernel_regularity_check,
    kernel_size_check,
    make_kernel,
    t1_norm,
    tail_integral_check,
)
from .errors import ChainViolationError, KernelDefectError, UsageError, ValidationError
from .geometry import Ball, BallPair, doubling_search, enumerate_ball_family, parse_family
from .lipschitz import full_report, rbmo_report
from .measure import generate_measure, growth_report, load_measure, save_measure
from .profiles import resolve_function

SCHEMA = "osclab.report/1"
COMMANDS = ("gen", "growth", "doubling", "lip", "rbmo", "kernel-check", "t1",
            "bound", "tail")
DEFAULT_FAMILY = {"growth": "exhaustive", "lip": "exhaustive", "rbmo": "exhaustive",
                  "t1": "dyadic", "bound": "dyadic"}
EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


@dataclass
class ExperimentConfig:
    """One experiment. Unused fields stay ``None``."""

    command: str
    measure: str | None = None
    functions: list = field(default_factory=list)
    alpha: float | None = None
    p: str | None = None
    n: float | None = None
    epsilon: float | None = None
    beta: float | None = None
    rho: float = 2.0
    family: str | None = None
    kernel: str | None = None
    center: int | None = None
    all_centers: bool = False
    radius: list = field(default_factory=list)
    r0: float | None = None
    halvings: int | None = None
    r_min: float | None = None
    r_max: float | None = None
    tol: float | None = None
    output: str | None = None
    format: str | None = None
    seed: int = 0
    threads: int = 1

    def require(self, *names):
        for name in names:
            if getattr(self, name) in (None, [], ()):
                raise UsageError(f"{self.command}: missing required field {name!r}", name)

    def validate(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}", "command")
        self.require("measure")
        if self.alpha is not None and not (0 < self.alpha <= 1):
            raise UsageError("alpha must lie in (0, 1]", "alpha")
        if self.p is not None and self.p not in ("1", "2", "inf"):
            raise UsageError("p must be one of 1, 2, inf", "p")
        if self.n is not None and not self.n > 0:
            raise UsageError("n must be > 0", "n")
        if self.epsilon is not None and not (0 < self.epsilon <= 1):
            raise UsageError("epsilon must lie in (0, 1]", "epsilon")
        if self.beta is not None and not self.beta > 1:
            raise UsageError("beta must be > 1", "beta")
        if not self.rho > 1:
            raise UsageError("rho must be > 1", "rho")
        if self.family is not None:
            try:
                parse_family(_with_seed(self.family, self.seed))
            except ValidationError as exc:
                raise UsageError(str(exc), "family") from None
        if self.format not in (None, "json", "csv"):
            raise UsageError("format must be json or csv", "format")
        if self.threads < 1:
            raise UsageError("threads must be >= 1", "threads")
        need = {
            "gen": ("output",),
            "growth": ("n",),
            "doubling": ("beta", "r0", "halvings"),
            "lip": ("functions", "alpha"),
            "rbmo": ("functions", "n"),
            "kernel-check": ("kernel",),
            "t1": ("kernel", "alpha"),
            "bound": ("functions", "kernel", "alpha"),
            "tail": ("center", "radius", "n", "epsilon", "alpha"),
        }[self.command]
        self.require(*need)
        if self.command == "doubling" and self.center is None and not self.all_centers:
            raise UsageError("doubling needs --center or --all", "center")
        if self.command in ("lip", "rbmo") and len(self.functions) != 1:
            raise UsageError(f"{self.command} takes exactly one function", "functions")


# ----------------------------------------------------------- config files

def _coerce(f, text):
    text = text.strip()
    if f.name in ("functions", "radius"):
        items = [t.strip() for t in text.split(";") if t.strip()]
        return [float(t) for t in items] if f.name == "radius" else items
    if f.name == "all_centers":
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise UsageError(f"bad boolean {text!r}", f.name)
        return text.lower() in ("true", "1", "yes")
    if text.lower() in ("", "none"):
        return None
    kind = {"alpha": float, "n": float, "epsilon": float, "beta": float, "rho": float,
            "r0": float, "r_min": float, "r_max": float, "tol": float,
            "center": int, "halvings": int, "seed": int, "threads": int}.get(f.name, str)
    try:
        return kind(text)
    except ValueError:
        raise UsageError(f"bad value {text!r} for {f.name}", f.name) from None


def parse_config_text(text):
    """Flat ``key = value`` lines; ``#`` starts a comment and list fields
    (``functions``, ``radius``) separate items with ``;``."""
    known = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        key = key.strip()
        if not eq:
            raise UsageError(f"line {lineno}: expected key = value", None)
        if key not in known:
            raise UsageError(f"line {lineno}: unknown field {key!r}", key)
        values[key] = _coerce(known[key], val)
    if "command" not in values:
        raise UsageError("config has no command", "command")
    return ExperimentConfig(**values)


def format_config(config):
    lines = []
    for f in fields(ExperimentConfig):
        v = getattr(config, f.name)
        if v is None or v == [] or (f.name == "all_centers" and not v):
            continue
        if isinstance(v, list):
            v = ";".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------ rendering

def _canon(obj):
    """JSON-ready copy with floats rounded to 12 significant digits."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.12g}") + 0.0
    if isinstance(obj, Ball):
        return {"center_index": obj.center_index, "radius": _canon(obj.radius)}
    if isinstance(obj, BallPair):
        return {"inner": _canon(obj.inner), "outer": _canon(obj.outer)}
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_canon(v) for v in obj]
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def render_json(report):
    return json.dumps(_canon(report), indent=2, allow_nan=False) + "\n"


def render_csv(rows):
    buf = io.StringIO()
    if rows:
        cols = list(rows[0])
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _canon(v) for k, v in row.items()})
    return buf.getvalue()


# ------------------------------------------------------------- commands

def _measure(config, base_dir):
    spec = config.measure
    path = spec if base_dir is None else os.path.join(base_dir, spec)
    if os.path.isfile(path):
        return load_measure(path)
    return generate_measure(spec)


def _with_seed(text, seed):
    """``sampled:m`` takes the global seed."""
    if text.startswith("sampled") and text.count(":") == 1:
        return f"{text}:{seed}"
    return text


def _family(config, measure):
    text = config.family or DEFAULT_FAMILY.get(config.command, "exhaustive")
    return enumerate_ball_family(measure, _with_seed(text, config.seed))


def _kernel(config):
    return make_kernel(config.kernel, n=config.n, epsilon=config.epsilon)


def _functions(config, measure, base_dir):
    return [resolve_function(s, measure, config.seed, base_dir) for s in config.functions]


def _cmd_gen(config, base_dir):
    m = generate_measure(config.measure)
    out = config.output if base_dir is None else os.path.join(base_dir, config.output)
    save_measure(m, out)
    return "PASS", {"atoms": m.size, "dim": m.ambient_dim, "total_mass": m.total_mass,
                    "resolution": m.resolution, "diameter": m.diameter}, []


def _cmd_growth(config, m, base_dir):
    fam = config.family or "exhaustive"
    if fam != "exhaustive":
        fam = _family(config, m)
    rep = growth_report(m, config.n, fam, config.r_min, config.r_max)
    d = rep.to_dict()
    row = {"n": rep.n, "best_constant": rep.best_constant,
           "center_index": rep.witness_ball.center_index,
           "radius": rep.witness_ball.radius, "r_lo": rep.scale_range[0],
           "r_hi": rep.scale_range[1], "family": rep.family_descriptor}
    return "INFO", d, [row]


def _cmd_doubling(config, m, base_dir):
    centers = range(m.size) if config.all_centers else [config.center]
    rows, reports = [], []
    for c in centers:
        rep = doubling_search(m, c, config.beta, config.r0, config.halvings, config.rho)
        reports.append({"center_index": c, "doubling_radii": rep.radii,
                        "exhausted_at": rep.exhausted_at})
        for r, ratio, ok in rep.scanned:
            rows.append({"center": c, "radius": r, "mass_ratio": ratio, "doubling": ok})
    result = {"beta": config.beta, "rho": config.rho, "centers": reports,
              "scanned": rows}
    return "INFO", result, rows


def _cmd_lip(config, m, base_dir):
    (f,) = _functions(config, m, base_dir)
    rep = full_report(m, f, config.alpha, _family(config, m), config.rho, check=False)
    d = rep.to_dict()
    if config.p is not None:
        d["selected_p"] = config.p
    ok = all(c["ok"] for c in rep.chain_checks)
    rows = [{"constant": "c1", "osc": rep.c1_osc, "pair": rep.c1_pair, "value": rep.c1},
            {"constant": "c2", "osc": None, "pair": None, "value": rep.c2}]
    for p, r in rep.cp.items():
        tag = "inf" if p == math.inf else str(p)
        rows.append({"constant": f"c{tag}", "osc": r.osc, "pair": r.pair,
                     "value": r.value})
    return ("PASS" if ok else "FAIL"), d, rows


def _cmd_rbmo(config, m, base_dir):
    (f,) = _functions(config, m, base_dir)
    fam = _family(config, m)
    rep = rbmo_report(m, f, config.n, fam, config.rho)
    d = {"value": rep.value, "oscillation": rep.oscillation, "jump": rep.jump,
         "oscillation_witness": rep.oscillation_witness,
         "jump_witness": rep.jump_witness, "jump_k": rep.jump_k,
         "family": fam.descriptor,
         "scale_range": [float(fam.radii.min()), float(fam.radii.max())]}
    row = {k: d[k] for k in ("value", "oscillation", "jump", "jump_k", "family")}
    return "INFO", d, [row]


def _cmd_kernel_check(config, m, base_dir):
    k = _kernel(config)
    size = kernel_size_check(k, m)
    reg = kernel_regularity_check(k, m)
    d = {"kernel": k.to_dict(),
         "size": {"worst_ratio": size.worst_ratio, "pair": list(size.pair),
                  "bound": size.bound, "passed": size.passed},
         "regularity": {"worst_ratio": reg.worst_ratio,
                        "triple": list(reg.triple) if reg.triple else None,
                        "bound": reg.bound, "count": reg.count, "passed": reg.passed}}
    rows = [{"check": "size", "worst_ratio": size.worst_ratio, "bound": size.bound,
             "passed": size.passed},
            {"check": "regularity", "worst_ratio": reg.worst_ratio, "bound": reg.bound,
             "passed": reg.passed}]
    return ("PASS" if size.passed and reg.passed else "FAIL"), d, rows


def _cmd_t1(config, m, base_dir):
    op = CzOperator(_kernel(config), m)
    fam = _family(config, m)
    res = t1_norm(op, config.alpha, fam, config.rho)
    norm, iters = op.spectral_norm()
    d = {"kernel": op.kernel.to_dict(), "alpha": config.alpha, "t1_norm": res.value,
         "stitch_radii": res.stitch_radii, "spectral_norm": norm,
         "spectral_iterations": iters, "family": fam.descriptor,
         "scale_range": [float(fam.radii.min()), float(fam.radii.max())]}
    status = "INFO"
    if config.tol is not None:
        d["tol"] = config.tol
        status = "PASS" if res.value <= config.tol else "FAIL"
    rows = [{"index": i, "t1_representative": float(v)}
            for i, v in enumerate(res.representative)]
    return status, d, rows


def _cmd_bound(config, m, base_dir):
    op = CzOperator(_kernel(config), m)
    fam = _family(config, m)
    funcs = _functions(config, m, base_dir)
    rows = boundedness_experiment(op, config.alpha, funcs, fam, config.rho,
                                  names=config.functions, threads=config.threads)
    norm, _ = op.spectral_norm()
    d = {"kernel": op.kernel.to_dict(), "alpha": config.alpha, "spectral_norm": norm,
         "family": fam.descriptor,
         "scale_range": [float(fam.radii.min()), float(fam.radii.max())],
         "rows": [r.to_dict() for r in rows]}
    ok = all(r.decomposition_ok for r in rows)
    table = [{"name": r.name, "lip_norm_f": r.lip_norm_f, "lip_norm_Tf": r.lip_norm_Tf,
              "ratio": r.ratio, "pairs": r.pairs, "decomposition_ok": r.decomposition_ok}
             for r in rows]
    return ("PASS" if ok else "FAIL"), d, table


def _cmd_tail(config, m, base_dir):
    if config.alpha >= config.epsilon:
        raise UsageError("alpha must be < epsilon", "alpha")
    rows = []
    for r in config.radius:
        value, ratio = tail_integral_check(m, Ball(config.center, r), config.n,
                                           config.epsilon, config.alpha)
        rows.append({"radius": r, "value": value, "bound_ratio": ratio})
    return "INFO", {"center_index": config.center, "n": config.n,
                    "epsilon": config.epsilon, "alpha": config.alpha,
                    "ladder": rows}, rows


_DISPATCH = {"growth": _cmd_growth, "doubling": _cmd_doubling, "lip": _cmd_lip,
             "rbmo": _cmd_rbmo, "kernel-check": _cmd_kernel_check, "t1": _cmd_t1,
             "bound": _cmd_bound, "tail": _cmd_tail}


@dataclass
class RunResult:
    status: str
    report: dict
    table: list

    @property
    def exit_code(self):
        return EXIT_FAIL if self.status == "FAIL" else EXIT_PASS

    def render(self, fmt):
        return render_csv(self.table) if fmt == "csv" else render_json(self.report)


def run(config, base_dir=None):
    """Validate ``config``, dispatch it and assemble the report.

    Relative file names in the config resolve against ``base_dir``.
    Kernel defects become a FAIL status. Other module validation errors
    are re-raised as :class:`UsageError`.
    """
    config.validate()
    try:
        if config.command == "gen":
            status, result, table = _cmd_gen(config, base_dir)
        else:
            m = _measure(config, base_dir)
            status, result, table = _DISPATCH[config.command](config, m, base_dir)
    except KernelDefectError as exc:
        status, result, table = "FAIL", {"error": str(exc), "pair": list(exc.pair or [])}, []
    except ChainViolationError as exc:
        status, result, table = "FAIL", {"error": str(exc),
                                         "violations": exc.violations}, []
    except UsageError:
        raise
    except (ValidationError, IndexError, OSError) as exc:
        raise UsageError(str(exc)) from None
    report = {"schema": SCHEMA, "command": config.command, "status": status,
              "config": asdict(config), "result": result}
    return RunResult(status, report, table)


# -------------------------------------------------------------- argparse

def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="fallback seed for random pieces")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--family", default=None,
                   help="exhaustive | dyadic | sampled:m[:seed]")
    p.add_argument("--rho", type=float, default=2.0, help="dilation factor")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="format", action="store_const", const="json")
    fmt.add_argument("--csv", dest="format", action="store_const", const="csv")
    p.add_argument("-o", "--output", default=None, help="write the report here")
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(
        prog="osclab",
        description="Lipschitz seminorms and Calderón-Zygmund operators on "
                    "weighted point clouds.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a measure file")
    p.add_argument("measure", metavar="spec")

    p = sub.add_parser("growth", parents=[common], help="empirical growth constant")
    p.add_argument("measure")
    p.add_argument("--n", type=float, required=True)
    p.add_argument("--rmin", dest="r_min", type=float)
    p.add_argument("--rmax", dest="r_max", type=float)

    p = sub.add_parser("doubling", parents=[common], help="scan for doubling balls")
    p.add_argument("measure")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--r0", type=float, required=True)
    p.add_argument("--halvings", type=int, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--center", type=int)
    g.add_argument("--all", dest="all_centers", action="store_true")

    p = sub.add_parser("lip", parents=[common], help="Lipschitz seminorm report")
    p.add_argument("measure")
    p.add_argument("functions", nargs=1, metavar="function")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--p", choices=["1", "2", "inf"])

    p = sub.add_parser("rbmo", parents=[common], help="RBMO-type norm")
    p.add_argument("measure")
    p.add_argument("functions", nargs=1, metavar="function")
    p.add_argument("--n", type=float, required=True)

    p = sub.add_parser("kernel-check", parents=[common], help="size and regularity")
    p.add_argument("measure")
    p.add_argument("--kernel", required=True)
    p.add_argument("--n", type=float)
    p.add_argument("--eps", dest="epsilon", type=float)

    p = sub.add_parser("t1", parents=[common], help="seminorm of T(1)")
    p.add_argument("measure")
    p.add_argument("--kernel", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--n", type=float)
    p.add_argument("--eps", dest="epsilon", type=float)
    p.add_argument("--tol", type=float, help="FAIL if the seminorm exceeds this")

    p = sub.add_parser("bound", parents=[common], help="boundedness experiment")
    p.add_argument("measure")
    p.add_argument("functions", nargs="+", metavar="function")
    p.add_argument("--kernel", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--n", type=float)
    p.add_argument("--eps", dest="epsilon", type=float)

    p = sub.add_parser("tail", parents=[common], help="tail integral ladder")
    p.add_argument("measure")
    p.add_argument("--center", type=int, required=True)
    p.add_argument("--r", dest="radius", type=float, nargs="+", required=True)
    p.add_argument("--n", type=float, required=True)
    p.add_argument("--eps", dest="epsilon", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)

    p = sub.add_parser("replay", help="rerun a config file")
    p.add_argument("config")
    p.add_argument("--check", metavar="GOLDEN",
                   help="compare the output byte-for-byte with this file")
    p.add_argument("-o", "--output", default=None)
    return parser


def _config_from_args(ns):
    known = {f.name for f in fields(ExperimentConfig)}
    values = {k: v for k, v in vars(ns).items() if k in known and v is not None}
    return ExperimentConfig(**values)


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def replay(config_path, golden=None):
    """Run a config file; returns ``(rendered_text, matches_golden_or_None)``."""
    with open(config_path, encoding="utf-8") as fh:
        config = parse_config_text(fh.read())
    base = os.path.dirname(os.path.abspath(config_path))
    res = run(config, base_dir=base)
    fmt = config.format or ("csv" if config.command == "doubling" else "json")
    text = res.render(fmt)
    match = None
    if golden is not None:
        with open(golden, encoding="utf-8", newline="") as fh:
            match = fh.read() == text
    return text, match, res


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        if ns.command == "replay":
            text, match, res = replay(ns.config, ns.check)
            _emit(text, ns.output)
            if match is False:
                print(f"replay: output differs from {ns.check}", file=sys.stderr)
                return EXIT_FAIL
            return res.exit_code
        config = _config_from_args(ns)
        res = run(config)
        fmt = config.format or ("csv" if config.command == "doubling" else "json")
        _emit(res.render(fmt), None if config.command == "gen" else config.output)
        return res.exit_code
    except UsageError as exc:
        where = f" [{exc.field}]" if exc.field else ""
        print(f"osclab: usage error{where}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"osclab: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
