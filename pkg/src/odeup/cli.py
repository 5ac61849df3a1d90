"""Command-line front end emitting plot-ready experiment data.

Subcommands:

* ``propagate``      quadrature-based uncertainty propagation through the
                     probabilistic solver, one row per grid time.
* ``reference``      Monte Carlo reference over the classic solver, same
                     row schema plus standard errors.
* ``sweep``          final-time variance decomposition across step sizes.
* ``demo-fig1``      closed-form state-estimation vs. propagation demo.
* ``list-problems``  the benchmark catalog.

Options may come from flags or from a JSON config file (``--config``);
flags win.  Output is CSV (LF line endings, 17 significant digits) or JSON
(``{"config_echo": ..., "rows": [...]}``) with identical numbers either
way.  Exit codes: 0 success, 1 numerical/runtime failure, 2 usage error.
"""

import argparse
import dataclasses
import json
import os
import sys
import tempfile

import numpy as np

from .exceptions import OdeupError
from .ivp import (
    BENCHMARK_NAMES,
    GaussianParameters,
    UniformBoxParameters,
    benchmark,
    uniform_box_from_gaussian,
)
from .odefilter import SolverConfig, time_grid
from .propagate import propagate, step_size_sweep
from .quadrature import RuleSpec
from .reference import fig1_demo, mc_reference

_JOBS_ENV = "ODEUP_JOBS"

# Sweep-specific default time spans; everything else uses the catalog span.
_SWEEP_TSPANS = {"lotka_volterra": (0.0, 0.5)}

_DEFAULTS = {
    "rule": "cubature",
    "order": 5,
    "n": 1000,
    "seed": 0,
    "q": 1,
    "h": 0.01,
    "linearization": "ek1",
    "calibrate": True,
    "smooth": True,
    "dist": "gaussian",
    "init_var": None,
    "tspan": None,
    "jobs": None,
    "format": "csv",
    "output": None,
    "ref_n": 10000,
    "ref_seed": 0,
    "rk4_h": 1e-3,
    "prior_vars": [1.0, 10.0],
}


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _write_output(path, fmt, header, rows, config_echo):
    if fmt == "csv":
        lines = [",".join(header)]
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        text = "\n".join(lines) + "\n"
    else:
        payload = {
            "config_echo": config_echo,
            "rows": [dict(zip(header, row)) for row in rows],
        }
        text = json.dumps(payload, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".odeup-", text=True)
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Settings:
    """Flag > config-file > default resolution for one subcommand."""

    def __init__(self, args, parser):
        self._args = vars(args)
        self._parser = parser
        self._config = {}
        config_path = self._args.get("config")
        if config_path:
            try:
                with open(config_path) as handle:
                    self._config = json.load(handle)
            except (OSError, json.JSONDecodeError) as err:
                parser.error(f"cannot read config file {config_path}: {err}")
            if not isinstance(self._config, dict):
                parser.error(f"config file {config_path} must hold a JSON object")

    def get(self, key):
        flag = self._args.get(key)
        if flag is not None:
            return flag
        if key in self._config:
            return self._config[key]
        return _DEFAULTS.get(key)

    def error(self, message):
        self._parser.error(message)


def _add_io_options(sub):
    sub.add_argument("--config", help="JSON file with default option values")
    sub.add_argument("--output", help="output file path (default: stdout)")
    sub.add_argument("--format", choices=["csv", "json"], help="output format")


def _add_problem_options(sub):
    sub.add_argument("--problem", required=True, choices=list(BENCHMARK_NAMES))
    sub.add_argument("--dist", choices=["gaussian", "uniform"],
                     help="parameter distribution family")
    sub.add_argument("--init-var", dest="init_var", type=float,
                     help="override the parameter variance with init_var * I")
    sub.add_argument("--tspan", nargs=2, type=float, metavar=("T0", "T1"))
    sub.add_argument("--jobs", type=int, help="worker threads, 0 = auto")


def _add_rule_options(sub):
    sub.add_argument("--rule", choices=["cubature", "gauss_hermite", "monte_carlo"])
    sub.add_argument("--order", type=int, help="Gauss-Hermite order")
    sub.add_argument("--n", type=int, help="Monte Carlo rule sample count")
    sub.add_argument("--seed", type=int, help="Monte Carlo rule seed")


def _add_solver_options(sub):
    sub.add_argument("--q", type=int, help="prior smoothness order")
    sub.add_argument("--h", type=float, help="solver step size")
    sub.add_argument("--linearization", choices=["ek1", "ek0"])
    sub.add_argument("--calibrate", action=argparse.BooleanOptionalAction)
    sub.add_argument("--smooth", action=argparse.BooleanOptionalAction)


def _resolve_jobs(settings):
    jobs = settings.get("jobs")
    if jobs is None:
        jobs = int(os.environ.get(_JOBS_ENV, "1"))
    return int(jobs)


def _resolve_problem(settings, *, sweep=False):
    name = settings.get("problem")
    problem, dist = benchmark(name)
    tspan = settings.get("tspan")
    if tspan is not None:
        problem = dataclasses.replace(problem, tspan=(float(tspan[0]), float(tspan[1])))
    elif sweep and name in _SWEEP_TSPANS:
        problem = dataclasses.replace(problem, tspan=_SWEEP_TSPANS[name])
    init_var = settings.get("init_var")
    if init_var is not None:
        dist = GaussianParameters(dist.mean, float(init_var) * np.eye(dist.dim))
    if settings.get("dist") == "uniform":
        dist = uniform_box_from_gaussian(dist)
    return problem, dist


def _resolve_rule(settings):
    return RuleSpec(
        kind=settings.get("rule"),
        order=int(settings.get("order")),
        n=int(settings.get("n")),
        seed=int(settings.get("seed")),
    )


def _resolve_solver(settings):
    return SolverConfig(
        q=int(settings.get("q")),
        step=float(settings.get("h")),
        linearization=settings.get("linearization"),
        calibrate=bool(settings.get("calibrate")),
        smooth=bool(settings.get("smooth")),
    )


def _dist_echo(dist):
    if isinstance(dist, GaussianParameters):
        return {"kind": "gaussian", "mean": dist.mean.tolist(),
                "cov": dist.cov.tolist()}
    return {"kind": "uniform_box", "lower": dist.lower.tolist(),
            "upper": dist.upper.tolist()}


def _propagation_header(dim, with_stderr=False):
    header = ["t"]
    for k in range(dim):
        header += [
            f"mean_{k}", f"var_total_{k}", f"var_pn_{k}", f"var_nonpn_{k}",
            f"ci_lo_{k}", f"ci_hi_{k}",
        ]
        if with_stderr:
            header.append(f"se_{k}")
    return header


def _propagation_rows(times, mean, var_total, var_pn, var_nonpn, stderr=None):
    rows = []
    half = 1.96 * np.sqrt(var_total)
    for i, t in enumerate(times):
        row = [float(t)]
        for k in range(mean.shape[1]):
            row += [
                float(mean[i, k]), float(var_total[i, k]), float(var_pn[i, k]),
                float(var_nonpn[i, k]),
                float(mean[i, k] - half[i, k]), float(mean[i, k] + half[i, k]),
            ]
            if stderr is not None:
                row.append(float(stderr[i, k]))
        rows.append(row)
    return rows


def _cmd_propagate(args, parser):
    settings = _Settings(args, parser)
    rule_spec = _resolve_rule(settings)
    if rule_spec.kind == "monte_carlo" and rule_spec.n < 1:
        settings.error(f"--n must be >= 1, got {rule_spec.n}")
    problem, dist = _resolve_problem(settings)
    config = _resolve_solver(settings)
    result = propagate(problem, dist, rule_spec, config, jobs=_resolve_jobs(settings))

    diag = np.diagonal
    rows = _propagation_rows(
        result.times,
        result.mean,
        diag(result.cov_total, axis1=-2, axis2=-1),
        diag(result.cov_pn, axis1=-2, axis2=-1),
        diag(result.cov_non_pn, axis1=-2, axis2=-1),
    )
    echo = {
        "command": "propagate",
        "problem": problem.name,
        "dist": _dist_echo(dist),
        "rule": dataclasses.asdict(rule_spec),
        "solver": dataclasses.asdict(config),
        "tspan": list(problem.tspan),
    }
    _write_output(settings.get("output"), settings.get("format"),
                  _propagation_header(problem.dim), rows, echo)
    return 0


def _cmd_reference(args, parser):
    settings = _Settings(args, parser)
    n = int(settings.get("ref_n"))
    if n < 2:
        settings.error(f"--n must be >= 2, got {n}")
    problem, dist = _resolve_problem(settings)
    grid = time_grid(problem.tspan, float(settings.get("h")))
    ref = mc_reference(
        problem, dist, n, int(settings.get("ref_seed")),
        float(settings.get("rk4_h")), grid,
    )
    var = np.diagonal(ref.cov, axis1=-2, axis2=-1)
    rows = _propagation_rows(
        ref.times, ref.mean, var, np.zeros_like(var), var, stderr=ref.stderr
    )
    echo = {
        "command": "reference",
        "problem": problem.name,
        "dist": _dist_echo(dist),
        "n": n,
        "seed": int(settings.get("ref_seed")),
        "rk4_h": float(settings.get("rk4_h")),
        "h": float(settings.get("h")),
        "tspan": list(problem.tspan),
    }
    _write_output(settings.get("output"), settings.get("format"),
                  _propagation_header(problem.dim, with_stderr=True), rows, echo)
    return 0


def _cmd_sweep(args, parser):
    settings = _Settings(args, parser)
    if args.steps_logspace is not None and args.steps:
        settings.error("give either --steps-logspace or --steps, not both")
    if args.steps_logspace is not None:
        lo, hi, num = args.steps_logspace
        if float(lo) <= 0 or float(hi) <= 0 or int(num) < 1:
            settings.error("--steps-logspace needs positive bounds and count")
        steps = np.logspace(np.log10(float(lo)), np.log10(float(hi)), int(num))
    elif args.steps:
        steps = np.asarray(sorted(float(s) for s in args.steps))
    else:
        settings.error("one of --steps-logspace or --steps is required")
    problem, dist = _resolve_problem(settings, sweep=True)
    rule_spec = _resolve_rule(settings)
    q = int(settings.get("q"))

    rows_raw = step_size_sweep(
        problem, dist, rule_spec, q, list(steps),
        jobs=_resolve_jobs(settings), linearization=settings.get("linearization"),
    )
    ref = mc_reference(
        problem, dist, int(settings.get("ref_n")), int(settings.get("ref_seed")),
        float(settings.get("rk4_h")), np.array(list(problem.tspan)),
    )
    var_ref = np.diag(ref.cov[-1])

    d = problem.dim
    header = ["h"]
    for k in range(d):
        header += [f"var_pn_{k}", f"var_nonpn_{k}", f"var_total_{k}", f"var_ref_{k}"]
    header.append("error")
    rows = []
    for row in rows_raw:
        out = [float(row.step)]
        for k in range(d):
            if row.error is None:
                out += [
                    float(row.cov_pn[k, k]), float(row.cov_non_pn[k, k]),
                    float(row.cov_total[k, k]), float(var_ref[k]),
                ]
            else:
                out += [None, None, None, float(var_ref[k])]
        out.append(row.error)
        rows.append(out)
    echo = {
        "command": "sweep",
        "problem": problem.name,
        "dist": _dist_echo(dist),
        "rule": dataclasses.asdict(rule_spec),
        "q": q,
        "steps": [float(s) for s in steps],
        "ref_n": int(settings.get("ref_n")),
        "ref_seed": int(settings.get("ref_seed")),
        "rk4_h": float(settings.get("rk4_h")),
        "tspan": list(problem.tspan),
    }
    _write_output(settings.get("output"), settings.get("format"), header, rows, echo)
    return 0


def _cmd_demo_fig1(args, parser):
    settings = _Settings(args, parser)
    prior_vars = settings.get("prior_vars")
    header = ["prior_var", "filter_mean", "filter_var", "marginal_mean",
              "marginal_var"]
    rows = []
    for v in prior_vars:
        if not float(v) > 0.0:
            settings.error(f"prior variances must be positive, got {v}")
        out = fig1_demo(float(v))
        filt, marg = out["filter"], out["marginal"]
        rows.append([
            float(v),
            float(filt.mean[0]), float(filt.cov[0, 0]),
            float(marg.mean[0]), float(marg.cov[0, 0]),
        ])
    echo = {"command": "demo-fig1", "prior_vars": [float(v) for v in prior_vars]}
    _write_output(settings.get("output"), settings.get("format"), header, rows, echo)
    return 0


def _cmd_list_problems(args, parser):
    settings = _Settings(args, parser)
    entries = []
    for name in BENCHMARK_NAMES:
        problem, dist = benchmark(name)
        entries.append({
            "name": name,
            "dim": problem.dim,
            "theta_dim": problem.theta_dim,
            "tspan": list(problem.tspan),
            "dist": _dist_echo(dist),
        })
    if settings.get("format") == "json":
        text = json.dumps(entries, indent=2) + "\n"
    else:
        lines = []
        for e in entries:
            mean = ", ".join(_fmt(v) for v in e["dist"]["mean"])
            var = ", ".join(_fmt(v) for v in np.diag(e["dist"]["cov"]))
            lines.append(
                f"{e['name']}: dim={e['dim']} theta_dim={e['theta_dim']} "
                f"tspan=[{_fmt(e['tspan'][0])}, {_fmt(e['tspan'][1])}] "
                f"theta~N([{mean}], diag[{var}])"
            )
        text = "\n".join(lines) + "\n"
    output = settings.get("output")
    if output is None:
        sys.stdout.write(text)
    else:
        with open(output, "w", newline="") as handle:
            handle.write(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="odeup",
        description="Propagate parameter uncertainty through probabilistic ODE solvers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("propagate", help="quadrature propagation through the ODE filter")
    _add_problem_options(p)
    _add_rule_options(p)
    _add_solver_options(p)
    _add_io_options(p)
    p.set_defaults(func=_cmd_propagate)

    p = sub.add_parser("reference", help="Monte Carlo reference over classic RK4")
    _add_problem_options(p)
    p.add_argument("--n", dest="ref_n", type=int, help="Monte Carlo sample count")
    p.add_argument("--seed", dest="ref_seed", type=int, help="sampling seed")
    p.add_argument("--rk4-h", dest="rk4_h", type=float, help="internal RK4 step")
    p.add_argument("--h", type=float, help="output grid step")
    _add_io_options(p)
    p.set_defaults(func=_cmd_reference)

    p = sub.add_parser("sweep", help="variance decomposition across step sizes")
    _add_problem_options(p)
    _add_rule_options(p)
    p.add_argument("--q", type=int, help="prior smoothness order")
    p.add_argument("--linearization", choices=["ek1", "ek0"])
    p.add_argument("--steps-logspace", dest="steps_logspace", nargs=3,
                   metavar=("LO", "HI", "NUM"),
                   help="NUM step sizes log-spaced in [LO, HI]")
    p.add_argument("--steps", nargs="+", type=float, help="explicit step sizes")
    p.add_argument("--ref-n", dest="ref_n", type=int, help="reference sample count")
    p.add_argument("--ref-seed", dest="ref_seed", type=int, help="reference seed")
    p.add_argument("--rk4-h", dest="rk4_h", type=float, help="reference RK4 step")
    _add_io_options(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("demo-fig1", help="state estimation vs. uncertainty propagation")
    p.add_argument("--prior-vars", dest="prior_vars", nargs="+", type=float)
    _add_io_options(p)
    p.set_defaults(func=_cmd_demo_fig1)

    p = sub.add_parser("list-problems", help="show the benchmark catalog")
    _add_io_options(p)
    p.set_defaults(func=_cmd_list_problems)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except OdeupError as err:
        print(f"odeup: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
