"""Command-line frontend binding flags and config files to experiment runs.

Exit codes: 0 success, 2 precondition violation, 3 numerical failure,
4 failed experiment assertion.  Every run writes ``runconfig.json`` into its
output directory echoing the fully resolved configuration, so identical
configurations reproduce identical artifacts.

This module imports only the standard library at import time: ``--threads``
must pin the BLAS/OpenMP pool sizes through environment variables before the
numeric stack is first imported, so all solver imports happen inside the
command handlers.

Defaults (any of these may come from a config file section matching the
command name, and flags win over the file):

====================  ==================================================
flag                  default
====================  ==================================================
--problem             eikonal-1d (example11 for the example11 command)
--eps                 command-specific sweep when omitted
--eps-list            0.2,0.1,0.05,0.025 (rate/action-gap); 0.1,0.05,0.025
                      (stationary/example11)
--lambda              1.0
--theta               problem default (see --help text)
--grid                eps-resolving grid (16 points per eps cell)
--t-end / --t         1.0
--out                 $HJHOMOG_OUT/<command> or ./runs/<command>
--threads             leave the environment untouched
--backend             fd
====================  ==================================================
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import AcceptanceFailure, NumericalError, PreconditionError

OUT_ROOT_ENV = "HJHOMOG_OUT"

EXIT_OK = 0
EXIT_PRECONDITION = 2
EXIT_NUMERICAL = 3
EXIT_ACCEPTANCE = 4

COMMANDS = ("solve", "cell", "iterate", "rate", "example11", "action-gap",
            "stationary")

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS")


@dataclass
class RunConfig:
    """Fully resolved run description; echoed verbatim into the manifest."""

    command: str
    problem: str
    overrides: dict = field(default_factory=dict)
    eps: float | None = None
    eps_list: list | None = None
    lam: float | None = None
    theta: float | None = None
    grid: int | None = None
    t_end: float | None = None
    out: str | None = None
    threads: int | None = None
    backend: str = "fd"
    config_file: str | None = None

    def out_dir(self) -> Path:
        if self.out:
            return Path(self.out)
        root = os.environ.get(OUT_ROOT_ENV, "runs")
        return Path(root) / self.command


def _parse_eps_list(text):
    try:
        vals = [float(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError:
        raise PreconditionError(f"bad --eps-list {text!r}: expected comma-separated floats")
    if not vals:
        raise PreconditionError("--eps-list is empty")
    return vals


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="hjhomog",
        description="Oscillatory Hamilton-Jacobi systems: solvers, effective "
                    "Hamiltonians, and rate experiments.",
    )
    sub = top.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--problem", default=None,
                       help="problem id, optionally with overrides as "
                            "id:key=val,key=val (e.g. eikonal-1d:coupling=sin)")
        p.add_argument("--eps", type=float, default=None,
                       help="single oscillation scale")
        p.add_argument("--eps-list", default=None,
                       help="comma-separated eps sweep, e.g. 0.2,0.1,0.05")
        p.add_argument("--lambda", dest="lam", type=float, default=None,
                       help="discount rate (stationary commands)")
        p.add_argument("--theta", type=float, default=None,
                       help="coupling strength override; must be representable "
                            "by the chosen problem family")
        p.add_argument("--grid", type=int, default=None,
                       help="points per axis (solve/iterate) or cell-problem "
                            "grid points (cell)")
        p.add_argument("--t-end", "--t", dest="t_end", type=float, default=None,
                       help="final time for Cauchy runs")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker thread cap for the numeric stack")
        p.add_argument("--backend", choices=("fd", "dp"), default=None,
                       help="inner solver: monotone finite differences or "
                            "semi-Lagrangian dynamic programming")
        p.add_argument("--config", default=None,
                       help="key = value config file; a [problem] section "
                            "selects the problem, a section named after the "
                            "command supplies flag defaults")
    return top


def _apply_threads(n) -> None:
    # must run before numpy/scipy are first imported anywhere in the process
    if n is None:
        return
    if n < 1:
        raise PreconditionError(f"--threads must be >= 1, got {n}")
    for var in _THREAD_VARS:
        os.environ[var] = str(int(n))


def _parse_problem_flag(text):
    """'id' or 'id:key=val,key=val' -> (id, overrides)."""
    if text is None:
        return None, {}
    if ":" not in text:
        return text, {}
    name, _, tail = text.partition(":")
    overrides = {}
    for tok in tail.split(","):
        if not tok.strip():
            continue
        if "=" not in tok:
            raise PreconditionError(
                f"bad problem override {tok!r}: expected key=value")
        key, _, val = tok.partition("=")
        overrides[key.strip()] = _coerce_token(val.strip())
    return name, overrides


def _coerce_token(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


_DEFAULT_PROBLEM = {cmd: "eikonal-1d" for cmd in COMMANDS}
_DEFAULT_PROBLEM["example11"] = "example11"

_SWEEP_DEFAULT = {
    "rate": [0.2, 0.1, 0.05, 0.025],
    "action-gap": [0.2, 0.1, 0.05, 0.025],
    "example11": [0.1, 0.05, 0.025],
    "stationary": [0.1, 0.05, 0.025],
}


def _resolve(args) -> tuple[RunConfig, dict]:
    """Merge flags > config file > built-in defaults into a RunConfig."""
    file_problem = None
    file_defaults = {}
    rest = {}
    if args.config:
        from .problems import load_problem_config

        file_problem, rest = load_problem_config(args.config)
        file_defaults = dict(rest.get(args.command, {}))
        file_defaults.update(rest.get("run", {}))

    def pick(flag_value, key, default=None):
        if flag_value is not None:
            return flag_value
        if key in file_defaults:
            return file_defaults[key]
        return default

    name, overrides = _parse_problem_flag(args.problem)
    if name is None and file_problem is not None:
        name = file_problem.name
        overrides = dict(file_problem.params)
        overrides.pop("theta", None)  # derived metadata, not a builder knob
    if name is None:
        name = _DEFAULT_PROBLEM[args.command]

    eps_list = pick(args.eps_list, "eps_list")
    if eps_list is not None and not isinstance(eps_list, list):
        eps_list = _parse_eps_list(eps_list)

    cfg = RunConfig(
        command=args.command,
        problem=name,
        overrides=overrides,
        eps=pick(args.eps, "eps"),
        eps_list=eps_list,
        lam=pick(args.lam, "lambda"),
        theta=pick(args.theta, "theta"),
        grid=pick(args.grid, "grid"),
        t_end=pick(args.t_end, "t_end"),
        out=pick(args.out, "out"),
        threads=pick(args.threads, "threads"),
        backend=pick(args.backend, "backend", "fd"),
        config_file=args.config,
    )
    return cfg, rest


def _theta_overrides(cfg: RunConfig) -> dict:
    """Translate --theta into the knob each problem family actually has."""
    overrides = dict(cfg.overrides)
    if cfg.theta is None:
        return overrides
    th = float(cfg.theta)
    if cfg.problem == "linear-coupling-2sys":
        overrides["b"] = th / 2.0  # Theta = max row sum |B| = 2b
    elif cfg.problem in ("eikonal-1d", "example11"):
        key = "coupling"
        if th == 0.0:
            overrides[key] = "zero" if cfg.problem == "example11" else "none"
        elif th == 1.0:
            overrides[key] = "sin"
        else:
            raise PreconditionError(
                f"problem {cfg.problem} realizes only theta in {{0, 1}} "
                f"(coupling on/off); theta={th} is not representable")
    else:
        raise PreconditionError(
            f"problem {cfg.problem} has no theta override")
    return overrides


def _make_problem(cfg: RunConfig):
    from .problems import get_problem

    return get_problem(cfg.problem, **_theta_overrides(cfg))


def _write_runconfig(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "runconfig.json", "w") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _default_grid(cfg: RunConfig, spec, fallback: int = 320):
    from .grid import TorusGrid

    if cfg.grid is not None:
        return TorusGrid(1, int(cfg.grid), spec.period)
    if cfg.eps is not None:
        cells = int(round(spec.period / cfg.eps))
        return TorusGrid(1, 16 * cells, spec.period)
    return TorusGrid(1, fallback, spec.period)


def _cmd_solve(cfg: RunConfig, out: Path) -> int:
    import numpy as np

    problem = _make_problem(cfg)
    spec, data = problem.spec, problem.data
    t_end = float(cfg.t_end if cfg.t_end is not None else 1.0)
    grid = _default_grid(cfg, spec)
    stamps = np.linspace(0.0, t_end, 9)
    if cfg.backend == "fd":
        from .fd_solver import SchemeConfig, solve_cauchy

        sol = solve_cauchy(spec, data, cfg.eps,
                           SchemeConfig(grid=grid, t_end=t_end,
                                        store_times=stamps))
    else:
        from .oracle_dp import DPConfig, value_function

        sol = value_function(problem.lagrangian, data, cfg.eps, grid, t_end,
                             DPConfig(dt=(cfg.eps or 0.1) / 16.0),
                             store_times=stamps)
    sol.to_csv(out / "solution.csv")
    print(f"solve: {spec.name} eps={cfg.eps} grid={grid.points_per_axis} "
          f"t_end={t_end} sup|u|={sol.sup_norm():.6g} -> {out/'solution.csv'}")
    return EXIT_OK


def _cmd_cell(cfg: RunConfig, out: Path) -> int:
    import csv

    import numpy as np

    from .cell import CellConfig, effective_hamiltonian

    problem = _make_problem(cfg)
    spec = problem.spec
    ccfg = CellConfig(y_grid=int(cfg.grid)) if cfg.grid else CellConfig()
    p_vals = np.linspace(-2.0, 2.0, 21)
    c0 = np.zeros(spec.m)
    rows = []
    for p in p_vals:
        rows.append((float(p), effective_hamiltonian(spec, 0, 0.0, float(p),
                                                     c0, ccfg)))
    with open(out / "cell.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["p", "hbar"])
        wr.writerows(rows)
    vals = [v for _, v in rows]
    print(f"cell: {spec.name} component 0, {len(rows)} p-values, "
          f"hbar in [{min(vals):.6g}, {max(vals):.6g}] -> {out/'cell.csv'}")
    return EXIT_OK


def _cmd_iterate(cfg: RunConfig, out: Path) -> int:
    problem = _make_problem(cfg)
    spec = problem.spec
    eps = cfg.eps if cfg.eps is not None else 0.1
    grid = _default_grid(cfg, spec)

    from .iterate import IterationConfig, iterate_cauchy, iterate_stationary

    icfg = IterationConfig(backend=cfg.backend)
    if cfg.lam is not None:
        # an explicit discount rate selects the stationary iteration
        trace = iterate_stationary(problem, eps, float(cfg.lam), grid, icfg)
    else:
        t_end = float(cfg.t_end if cfg.t_end is not None else 1.0)
        trace = iterate_cauchy(problem, eps, t_end, grid, icfg)
    trace.to_csv(out / "trace.csv")
    gaps = ", ".join(f"{g:.3e}" for g in trace.gaps)
    print(f"iterate: {spec.name} {trace.kind} eps={eps} "
          f"converged={trace.converged} gaps=[{gaps}] -> {out/'trace.csv'}")
    return EXIT_OK


def _cmd_rate(cfg: RunConfig, out: Path) -> int:
    from .harness import run_rate_experiment

    problem = _make_problem(cfg) if (cfg.problem != "eikonal-1d"
                                     or cfg.overrides or cfg.theta is not None) \
        else None
    eps_list = cfg.eps_list or ([cfg.eps] if cfg.eps else _SWEEP_DEFAULT["rate"])
    rep = run_rate_experiment(problem, eps_list=eps_list,
                              t_end=float(cfg.t_end or 1.0), out_dir=out)
    print(rep.summary())
    if rep.flagged:
        raise AcceptanceFailure(
            "rate: scheme budget exceeds 30% of the measured error; "
            "the fitted slope is untrustworthy")
    return EXIT_OK


def _cmd_example11(cfg: RunConfig, out: Path) -> int:
    from .harness import run_example11

    coupling = _theta_overrides(cfg).get("coupling", "sin")
    eps_list = cfg.eps_list or ([cfg.eps] if cfg.eps
                                else _SWEEP_DEFAULT["example11"])
    t_list = [cfg.t_end] if cfg.t_end is not None else (0.005, 0.02, 0.1, 1.0)
    rep = run_example11(eps_list=eps_list, t_list=t_list, coupling=coupling,
                        out_dir=out)
    print(rep.summary())
    if rep.flagged:
        raise AcceptanceFailure(
            "example11: a lower bound failed or the refinement budget "
            "exceeds its share of the bound")
    return EXIT_OK


def _cmd_action_gap(cfg: RunConfig, out: Path) -> int:
    from .harness import run_action_gap

    problem = _make_problem(cfg) if (cfg.overrides or cfg.theta is not None) \
        else None
    eps_list = cfg.eps_list or _SWEEP_DEFAULT["action-gap"]
    rep = run_action_gap(problem, eps_list=eps_list,
                         t=float(cfg.t_end or 1.0), out_dir=out)
    print(rep.summary())
    bad = [pair for pair, (tau, p) in zip(rep.pairs, rep.kendall)
           if p <= 0.05]
    if bad:
        raise AcceptanceFailure(
            f"action-gap: gap/eps grows as eps shrinks for pairs {bad} "
            "(Kendall trend test)")
    return EXIT_OK


def _cmd_stationary(cfg: RunConfig, out: Path) -> int:
    from .harness import run_stationary_rate

    problem = _make_problem(cfg)
    lam = float(cfg.lam if cfg.lam is not None else 1.0)
    if lam <= problem.spec.theta:
        raise PreconditionError(
            f"stationary runs need lambda > Theta, got lambda={lam} "
            f"<= Theta={problem.spec.theta}")
    eps_list = cfg.eps_list or ([cfg.eps] if cfg.eps
                                else _SWEEP_DEFAULT["stationary"])
    rep = run_stationary_rate(problem, lam=lam, eps_list=eps_list,
                              out_dir=out)
    print(rep.summary())
    if not rep.meta["bound_holds"]:
        raise AcceptanceFailure(
            "stationary: sup norm exceeds M/lambda "
            "(M = lambda/(lambda-Theta) * sup|H(x,y,0,0)|)")
    if rep.flagged:
        raise AcceptanceFailure(
            "stationary: scheme budget exceeds 30% of the measured error")
    return EXIT_OK


_HANDLERS = {
    "solve": _cmd_solve,
    "cell": _cmd_cell,
    "iterate": _cmd_iterate,
    "rate": _cmd_rate,
    "example11": _cmd_example11,
    "action-gap": _cmd_action_gap,
    "stationary": _cmd_stationary,
}


def parse_and_dispatch(argv=None) -> int:
    """Parse argv, resolve the run configuration, run, write artifacts."""
    args = _build_parser().parse_args(argv)
    _apply_threads(args.threads)
    cfg, _ = _resolve(args)
    if cfg.backend not in ("fd", "dp"):
        raise PreconditionError(f"backend must be fd or dp, not {cfg.backend!r}")
    out = cfg.out_dir()
    _write_runconfig(cfg, out)
    return _HANDLERS[cfg.command](cfg, out)


def main(argv=None) -> int:
    try:
        return parse_and_dispatch(argv)
    except PreconditionError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except AcceptanceFailure as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_ACCEPTANCE


if __name__ == "__main__":
    sys.exit(main())
