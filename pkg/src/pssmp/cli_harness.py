"""Command-line front end.

Subcommands ``solve``, ``value``, ``sweep``, ``simulate`` and ``validate``
read a problem from ``--config`` (JSON or YAML) or ``--preset``.  Tables go
to ``--out`` (or stdout) as CSV or JSON; human-readable summaries go to
stderr.

Exit codes: 0 success, 1 configuration error, 2 gate rejection, 3 numerical
failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import jsonschema
import numpy as np
import yaml

from . import __version__
from .levy_model import (
    Direction,
    Family,
    GateError,
    LevyModel,
    PredictionProblem,
    classify,
    esscher_tilt,
    right_inverse_phi,
    unkilled_exponent,
)
from .scale_functions import ScaleFunction, laplace_residual, scale_w_tilted
from .threshold_solver import (
    checked_quad,
    h_function,
    kstar_closed_form_bm,
    solve_kstar,
)
from .value_functions import (
    continuous_fit_residual,
    smooth_fit_slope,
    v_bm_closed_form,
    v_max,
    v_min,
    v_star_1d,
)

if TYPE_CHECKING:
    from .lamperti_sim import PathConfig

EXIT_OK, EXIT_CONFIG, EXIT_GATE, EXIT_NUMERIC = 0, 1, 2, 3

PRESETS: dict[str, dict] = {
    "bm-max": {"problem": {"family": "brownian", "sigma": 1.0, "mu": 1.0, "alpha": 1.0,
                           "direction": "max"}},
    "bessel3": {"problem": {"family": "brownian", "sigma": 1.0, "mu": 0.5, "alpha": 2.0,
                            "direction": "min"}},
    "bessel5": {"problem": {"family": "brownian", "sigma": 1.0, "mu": 1.5, "alpha": 2.0,
                            "direction": "min"}},
    "cramer": {"problem": {"family": "cramer-lundberg", "d": 2.0, "lambda": 1.0, "rho": 1.0,
                           "q": 2.0, "alpha": 1.0, "direction": "max"}},
}

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NUM_LIST = {"type": "array", "items": _POS, "minItems": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["problem"],
    "properties": {
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family", "alpha"],
            "properties": {
                "family": {"enum": [f.value for f in Family]},
                "sigma": _POS, "mu": _NUM, "d": _POS, "lambda": {"type": "number", "minimum": 0},
                "rho": _POS, "q": {"type": "number", "minimum": 0}, "alpha": _POS,
                "direction": {"enum": [d.value for d in Direction]},
            },
        },
        "value": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"x": _NUM_LIST, "extremum": _POS, "c": _POS},
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"K": _NUM_LIST, "factors": _NUM_LIST},
        },
        "simulate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"K": _POS, "dump": {"type": "string"}},
        },
        "mc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": _POS, "horizon": _POS,
                "n_paths": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "x0": _POS, "tail": {"enum": ["conditional", "path"]},
            },
        },
    },
}

_FAMILY_KEYS = {
    Family.BROWNIAN.value: ({"sigma", "mu"}, {"d", "lambda", "rho"}),
    Family.CRAMER_LUNDBERG.value: ({"d", "lambda", "rho"}, {"sigma", "mu"}),
}

DEFAULT_FACTORS = (0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3)


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    document: dict
    problem: PredictionProblem

    @property
    def path(self) -> PathConfig:
        # built on demand so that analytic commands never load the simulator
        from .lamperti_sim import PathConfig

        mc = self.block("mc")
        try:
            return PathConfig(dt=mc.get("dt", 1e-4), horizon=mc.get("horizon"),
                              n_paths=mc.get("n_paths", 10_000), seed=mc.get("seed", 0),
                              x0=mc.get("x0", 1.0))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def tail(self) -> str:
        return self.block("mc").get("tail", "conditional")

    @property
    def digest(self) -> str:
        canon = json.dumps(self.document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def block(self, name: str) -> dict:
        return self.document.get(name, {})


def _read_document(path: str) -> dict:
    text = Path(path).read_text()
    try:
        if path.endswith((".yaml", ".yml")):
            return yaml.safe_load(text)
        return json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def build_problem(block: dict) -> PredictionProblem:
    required, foreign = _FAMILY_KEYS[block["family"]]
    missing = required - block.keys()
    if missing:
        raise ConfigError(f"{block['family']} needs {sorted(missing)}")
    stray = foreign & block.keys()
    if stray:
        raise ConfigError(f"{sorted(stray)} do not apply to {block['family']}")
    q = block.get("q", 0.0)
    if block["family"] == Family.BROWNIAN.value:
        model = LevyModel.brownian(block["sigma"], block["mu"], q)
    else:
        model = LevyModel.cramer_lundberg(block["d"], block["lambda"], block["rho"], q)
    return PredictionProblem(model, float(block["alpha"]), block.get("direction", "max"))


def load_config(args: argparse.Namespace) -> RunConfig:
    """Merge preset/config file with command-line overrides and validate."""
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        doc = copy.deepcopy(PRESETS[args.preset])
    elif args.config:
        try:
            doc = _read_document(args.config)
        except OSError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        raise ConfigError("one of --config or --preset is required")
    mc = doc.setdefault("mc", {}) if isinstance(doc, dict) else {}
    for flag, key in (("seed", "seed"), ("paths", "n_paths"), ("dt", "dt"),
                      ("horizon", "horizon")):
        value = getattr(args, flag, None)
        if value is not None:
            mc[key] = value
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from exc
    try:
        problem = build_problem(doc["problem"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    mc = doc.get("mc", {})
    if "horizon" in mc and mc["horizon"] <= mc.get("dt", 1e-4):
        raise ConfigError("mc.horizon must exceed mc.dt")
    return RunConfig(doc, problem)


# ---------------------------------------------------------------------------
# output


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value + 0.0)  # no "-0.0"
    return str(value)


def render(columns: list[str], rows: list[dict], meta: dict, fmt: str) -> str:
    """CSV (canonical) or JSON with identical content."""
    if fmt == "json":
        return json.dumps({"meta": meta, "columns": columns,
                           "rows": [[r.get(c) for c in columns] for r in rows]},
                          indent=2, allow_nan=True) + "\n"
    buf = io.StringIO()
    buf.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _emit(args, cfg: RunConfig | None, columns, rows, seed=None):
    meta = {"pssmp": __version__,
            "seed": seed if seed is not None else (cfg.path.seed if cfg else ""),
            "config": cfg.digest if cfg else "presets"}
    text = render(columns, rows, meta, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _say(*lines: str):
    for line in lines:
        print(line, file=sys.stderr)


# ---------------------------------------------------------------------------
# commands


def _extremum_name(problem: PredictionProblem) -> str:
    return "s" if problem.direction is Direction.MAX else "i"


def _closed_form_applies(problem: PredictionProblem) -> bool:
    return problem.model.family is Family.BROWNIAN and problem.q == 0


def cmd_solve(args, cfg: RunConfig) -> int:
    problem = cfg.problem
    sol = solve_kstar(problem)
    rec = sol.as_record()
    hat = "K*" if problem.direction is Direction.MAX else "K̂*"
    side = "<" if problem.direction is Direction.MAX else ">"
    lines = [
        f"k*  = {sol.k_star:.12g}",
        f"{hat} = {sol.K_star:.12g}",
        f"k0  = {sol.k0:.12g}  (log 2 / Phi(q), Phi(q) = {sol.Phi_q:.12g})",
        f"bound {hat} {side} {sol.K_bound:.12g}: {'ok' if sol.within_bounds else 'VIOLATED'}",
        f"residual = {sol.residual:.3g} after {sol.iterations} iterations",
    ]
    if _closed_form_applies(problem):
        closed = kstar_closed_form_bm(problem)
        rec["K_closed_form"] = closed.K_star
        lines.append(f"closed form {hat} = {closed.K_star:.12g} "
                     f"(|diff| = {abs(closed.K_star - sol.K_star):.3g})")
    golden = (1.0 + math.sqrt(5.0)) / 2.0
    if problem.direction is Direction.MIN and abs(sol.K_star - 1.0 - golden) < 1e-9:
        lines.append(f"{hat} − 1 = golden ratio ({golden:.12g})")
    _say(*lines)
    _emit(args, cfg, list(rec), [rec])
    return EXIT_OK


def _value(problem, x, e, sol, method="1d"):
    fn = v_max if problem.direction is Direction.MAX else v_min
    return fn(problem, x, e, sol, method=method)


def _default_value_grid(problem, sol) -> list[float]:
    lo, hi = sorted((sol.K_star, 1.0))
    return [float(v) for v in np.linspace(lo, hi, 10)]


def cmd_value(args, cfg: RunConfig) -> int:
    problem = cfg.problem
    sol = solve_kstar(problem)
    block = cfg.block("value")
    e = float(block.get("extremum", 1.0))
    c = float(block.get("c", 2.0))
    xs = block.get("x") or [v * e for v in _default_value_grid(problem, sol)]
    closed = _closed_form_applies(problem)
    name = _extremum_name(problem)
    rows = []
    for x in xs:
        v = _value(problem, x, e, sol)
        direct = _value(problem, x, e, sol, method="direct")
        row = {"x": x, name: e, "v": v, "v_direct": direct}
        if closed:
            vc = v_bm_closed_form(problem, x, e)
            row["v_closed_form"] = vc
            row["closed_form_rel_dev"] = abs(v - vc) / abs(v) if v else abs(vc)
        scaled = _value(problem, c * x, c * e, sol)
        expect = c**problem.alpha * v
        row["c"] = c
        row["v_scaled"] = scaled
        row["homogeneity_rel_err"] = abs(scaled - expect) / abs(expect) if expect else abs(scaled)
        rows.append(row)
    columns = ["x", name, "v", "v_direct"]
    if closed:
        columns += ["v_closed_form", "closed_form_rel_dev"]
    columns += ["c", "v_scaled", "homogeneity_rel_err"]
    summary = [f"{len(rows)} points, max homogeneity error "
               f"{max(r['homogeneity_rel_err'] for r in rows):.3g}"]
    if closed:
        summary.append(f"max closed-form deviation {max(r['closed_form_rel_dev'] for r in rows):.3g}")
    _say(*summary)
    _emit(args, cfg, columns, rows)
    return EXIT_OK


_SWEEP_COLUMNS = ["K", "mean", "stderr", "n", "truncation_rate"]


def _report_lines(report) -> list[str]:
    lines = [f"label: {report.label}; killed {report.killed_rate:.2%}; "
             f"flagged {report.flag_rate:.2%}; overflow {report.overflow_count}; "
             f"truncation bias bound {report.truncation_bias_bound:.3g}"]
    if not report.finite_variance:
        lines.append("warning: losses have infinite variance here; stderr is not reliable")
    if report.theta_mean is not None:
        lines.append(f"E[Theta] = {report.theta_mean:.6g} ± {report.theta_stderr:.2g}")
    return lines


def sweep_grid(problem: PredictionProblem, block: dict) -> list[float]:
    if "K" in block:
        return [float(k) for k in block["K"]]
    K = solve_kstar(problem).K_star
    grid = [K * f for f in block.get("factors", DEFAULT_FACTORS)]
    if problem.direction is Direction.MAX:
        grid = [min(1.0, g) for g in grid]
    else:
        grid = [max(1.0, g) for g in grid]
    return grid


def cmd_sweep(args, cfg: RunConfig) -> int:
    from .lamperti_sim import sweep_K

    grid = sweep_grid(cfg.problem, cfg.block("sweep"))
    report = sweep_K(cfg.problem, grid, cfg.path, tail=cfg.tail)
    best = report.rows[report.argmin()]
    _say(f"argmin K = {best.K:.6g} (mean {best.mean:.6g} ± {best.stderr:.2g})",
         *_report_lines(report))
    _emit(args, cfg, _SWEEP_COLUMNS, [r.as_record() for r in report.rows])
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig) -> int:
    from .lamperti_sim import sweep_K

    block = cfg.block("simulate")
    K = block.get("K") or solve_kstar(cfg.problem).K_star
    report = sweep_K(cfg.problem, [K], cfg.path, tail=cfg.tail)
    row = report.rows[0]
    _say(f"objective at K = {row.K:.6g}: {row.mean:.6g} ± {row.stderr:.2g}",
         *_report_lines(report))
    if "dump" in block:
        text = render(["path_id", "theta", "tau", "loss"],
                      [dict(zip(("path_id", "theta", "tau", "loss"), r))
                       for r in report.path_dump()],
                      {"pssmp": __version__, "seed": cfg.path.seed, "config": cfg.digest},
                      "csv")
        Path(block["dump"]).write_text(text)
    _emit(args, cfg, _SWEEP_COLUMNS, [row.as_record()])
    return EXIT_OK


# ---------------------------------------------------------------------------
# validation suite


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


def _laplace_checks(problem) -> list[Check]:
    model, q, beta = problem.model, problem.q, problem.beta
    out = []
    sf = ScaleFunction(model, q)
    phi_q = right_inverse_phi(model.unkilled(), q)
    worst = 0.0
    for gap in (0.5, 1.0, 2.0):
        val, target = laplace_residual(sf, phi_q + gap)
        worst = max(worst, abs(val - target) / abs(target))
    out.append(Check("scale-function Laplace identity", worst < 1e-6, worst, 1e-6))

    # Laplace transform of exp(-beta x) W^(q)(x) against the tilted exponent
    tilted = esscher_tilt(model, beta)
    shift = q - float(unkilled_exponent(model, beta))
    worst = 0.0
    for gap in (0.5, 1.0, 2.0):
        theta = phi_q - beta + gap
        upper = 60.0 / gap
        val = checked_quad(lambda x: math.exp(-theta * x) * scale_w_tilted(model, beta, q, x),
                           0.0, upper)
        target = 1.0 / (float(unkilled_exponent(tilted, theta)) - shift)
        worst = max(worst, abs(val - target) / abs(target))
    out.append(Check("tilt identity", worst < 1e-6, worst, 1e-6))
    return out


def _h_scan(problem, sol) -> Check:
    grid = [sol.k_star * 4.0 * (j + 1) / 400 for j in range(400)]
    values = [h_function(problem, k) for k in grid]
    changes = [grid[j] for j in range(399) if (values[j] < 0) != (values[j + 1] < 0)]
    ok = len(changes) == 1 and abs(changes[0] - sol.k_star) <= grid[0] * 1.01
    return Check("h has a unique root", ok, float(len(changes)), 1.0,
                 f"sign changes at {[round(c, 6) for c in changes]}")


def _static_checks(problem) -> list[Check]:
    checks = _laplace_checks(problem)
    sol = solve_kstar(problem)
    checks.append(Check("threshold bounds", sol.within_bounds, sol.K_star, sol.K_bound,
                        f"k* = {sol.k_star:.10g} > k0 = {sol.k0:.10g}"))
    checks.append(_h_scan(problem, sol))
    if _closed_form_applies(problem):
        diff = abs(kstar_closed_form_bm(problem).K_star - sol.K_star)
        checks.append(Check("closed-form threshold", diff < 1e-8, diff, 1e-8))
    if problem.model.bounded_variation:
        left = abs(v_star_1d(problem, sol.k_star * (1 - 1e-12), sol))
        checks.append(Check("continuous fit value", left < 1e-8, left, 1e-8))
        res = continuous_fit_residual(problem, sol)
        checks.append(Check("continuous fit identity", res < 1e-8, res, 1e-8))
    else:
        slope = abs(smooth_fit_slope(problem, sol))
        checks.append(Check("smooth fit", slope < 1e-6, slope, 1e-6))
    worst = 0.0
    for x, c in ((0.9, 2.0), (0.75, 10.0), (0.6, 0.5)):
        if problem.direction is Direction.MAX:
            e = 1.0
        else:
            x, e = 1.0 / x, 1.0
        v = _value(problem, x, e, sol)
        scaled = _value(problem, c * x, c * e, sol)
        if v:
            worst = max(worst, abs(scaled - c**problem.alpha * v) / abs(c**problem.alpha * v))
    checks.append(Check("homogeneity", worst < 1e-10, worst, 1e-10))
    return checks


def _mc_checks(problem, path) -> list[Check]:
    from .lamperti_sim import mc_vk, sweep_K

    sol = solve_kstar(problem)
    mean, se = mc_vk(problem, sol.k_star, 0.0, path)
    exact = v_star_1d(problem, 0.0, sol)
    z = abs(mean - exact) / se
    checks = [Check("mc_vk agrees with V*(0)", z < 3.0, z, 3.0,
                    f"{mean:.6g} ± {se:.2g} vs {exact:.6g}")]
    grid = sweep_grid(problem, {"factors": (0.7, 1.0, 1.3)})
    report = sweep_K(problem, grid, path)
    worst = -math.inf
    for other in (0, 2):
        if grid[other] == grid[1]:
            continue
        diff, paired, _ = report.contrast(1, other)
        worst = max(worst, diff / paired)
    checks.append(Check("K* not beaten in the sweep", worst < 2.0, worst, 2.0,
                        "largest (objective(K*) - objective(K)) / paired stderr"))
    return checks


def _validate_one(name: str, problem: PredictionProblem, path,
                  fast: bool) -> tuple[list[dict], bool]:
    report = classify(problem)
    rows = [{"problem": name, "check": "class gate", "status": "PASS" if report.accepted
             else "FAIL", "value": report.psi_alpha, "tolerance": 0.0,
             "detail": report.reason}]
    if not report.accepted:
        return rows, True
    checks = _static_checks(problem)
    if fast:
        rows.append({"problem": name, "check": "monte carlo", "status": "SKIP",
                     "detail": "--fast"})
    else:
        checks += _mc_checks(problem, path.resolved(problem.model))
    for ch in checks:
        rows.append({"problem": name, "check": ch.name, "status": "PASS" if ch.passed
                     else "FAIL", "value": ch.value, "tolerance": ch.tolerance,
                     "detail": ch.detail})
    return rows, False


def cmd_validate(args, cfg: RunConfig | None) -> int:
    from .lamperti_sim import PathConfig

    if cfg is None:
        targets = []
        for name, doc in PRESETS.items():
            targets.append((name, build_problem(doc["problem"])))
        path = PathConfig(seed=args.seed or 0, n_paths=args.paths or 10_000,
                          dt=args.dt or 1e-4, horizon=args.horizon)
    else:
        targets = [(args.preset or Path(args.config).name, cfg.problem)]
        path = cfg.path
    rows, gate_failed = [], False
    for name, problem in targets:
        part, rejected = _validate_one(name, problem, path, args.fast)
        rows += part
        gate_failed |= rejected
    for r in rows:
        _say(f"{r['status']:4}  {r['problem']:<12} {r['check']:<32} {_fmt(r.get('value'))}"
             f"  {r.get('detail', '')}")
    failed = sum(r["status"] == "FAIL" for r in rows)
    _say(f"{len(rows) - failed}/{len(rows)} checks without failure")
    _emit(args, cfg, ["problem", "check", "status", "value", "tolerance", "detail"], rows,
          seed=path.seed)
    if gate_failed:
        return EXIT_GATE
    return EXIT_NUMERIC if failed else EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "value": cmd_value,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pssmp",
        description="Optimal prediction of the time of the extremum of a pssMp.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--preset", metavar="NAME")
        p.add_argument("--out", metavar="PATH")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=int, metavar="N")
        p.add_argument("--paths", type=int, metavar="N")
        p.add_argument("--dt", type=float, metavar="F")
        p.add_argument("--horizon", type=float, metavar="F")
        p.add_argument("--fast", action="store_true", help="skip Monte Carlo checks")
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 is reserved for gate rejection
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        if args.command == "validate" and not (args.config or args.preset):
            cfg = None
        else:
            cfg = load_config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        _say(f"config error: {exc}")
        return EXIT_CONFIG
    except GateError as exc:
        _say(f"rejected: {exc}")
        return EXIT_GATE
    except ValueError as exc:
        # invalid states or parameters reaching the numerics from the config
        _say(f"config error: {exc}")
        return EXIT_CONFIG
    except (RuntimeError, ArithmeticError) as exc:
        # solver, inversion and simulation failures
        _say(f"numerical failure: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
