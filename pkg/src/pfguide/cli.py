"""Command-line front end: simulate, compare, check-derivatives.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 invariant violation (path geometry, diverged state, failed checks).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .errdyn import GuidanceState, InputCmd, dynamics
from .exceptions import (ConfigError, DomainError, Infeasible, InfeasibleStart,
                         NonRegularPath, PFGuideError, QPFailure, StateEscape,
                         TerminalWeightUnset, UnstableTerminalLoop)
from .config import load_scenario
from .paths import case_study_path, check_path_derivatives, line_path, polynomial_path
from .pnmpc import jacobian_block
from .sim import LAWS, compute_metrics, run_scenario, scenario_with_law

_SOLVER_ERRORS = (Infeasible, InfeasibleStart, QPFailure, TerminalWeightUnset,
                  UnstableTerminalLoop)
_INVARIANT_ERRORS = (NonRegularPath, StateEscape, DomainError)


def _cmd_simulate(args) -> int:
    sc = load_scenario(args.config)
    trace = run_scenario(sc)
    trace.write_csv(args.out)
    report = compute_metrics(trace)
    print(f"wrote {len(trace)} records to {args.out}")
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def _cmd_compare(args) -> int:
    laws = [law.strip() for law in args.laws.split(",") if law.strip()]
    for law in laws:
        if law not in LAWS:
            raise ConfigError(f"unknown law {law!r}; choose from {LAWS}")
    sc = load_scenario(args.config)
    os.makedirs(args.out, exist_ok=True)
    combined = {}
    for law in laws:
        trace = run_scenario(scenario_with_law(sc, law))
        out_csv = os.path.join(args.out, f"{law}.csv")
        trace.write_csv(out_csv)
        combined[law] = compute_metrics(trace).to_dict()
        print(f"{law}: wrote {out_csv}")
    report_path = os.path.join(args.out, "report.json")
    with open(report_path, "w") as fh:
        json.dump(combined, fh, indent=2)
        fh.write("\n")
    print(f"wrote {report_path}")
    return 0


def _check_jacobians(samples: int, seed: int) -> int:
    """Analytic input Jacobian vs central differences of the dynamics."""
    rng = np.random.default_rng(seed)
    path = case_study_path()
    h = 1e-6
    worst = 0.0
    for _ in range(samples):
        x = GuidanceState(rng.uniform(-10, 10), rng.uniform(-10, 10),
                          rng.uniform(0.01, 1.0))
        u = InputCmd(rng.uniform(0.0, 0.225), rng.uniform(-math.pi, math.pi),
                     rng.uniform(0.01, 0.75))
        v = rng.uniform(-0.15, 0.15)
        J = jacobian_block(x, u, v, path).m
        fd = np.empty((3, 3))
        base = np.array([u.u, u.psi, u.u_tar])
        for col in range(3):
            du = np.zeros(3)
            du[col] = h
            hi = np.array(dynamics(x, InputCmd(*(base + du)), v, path))
            lo = np.array(dynamics(x, InputCmd(*(base - du)), v, path))
            fd[:, col] = (hi - lo) / (2.0 * h)
        # relative tolerance 1e-6 with an absolute floor of 1e-9
        err = np.abs(J - fd) / np.maximum(np.abs(J), 1e-3)
        worst = max(worst, float(err.max()))
    print(f"input-Jacobian check: worst relative error {worst:.3e} "
          f"over {samples} samples")
    return 0 if worst <= 1e-6 else 1


def _cmd_check_derivatives(args) -> int:
    failures = 0
    omegas = np.linspace(0.0, 120.0, 100)
    for path in (case_study_path(), line_path(),
                 polynomial_path([0.0, 1.0, 0.01], [0.0, 0.5, -0.002])):
        try:
            check_path_derivatives(path, omegas)
            print(f"path derivative check: {path.name} ok")
        except NonRegularPath as exc:
            print(f"path derivative check FAILED: {exc}")
            failures += 1
    if _check_jacobians(args.samples, args.seed) != 0:
        print("input-Jacobian check FAILED")
        failures += 1
    if failures:
        raise NonRegularPath(f"{failures} derivative check(s) failed")
    print("all derivative checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pfguide",
        description="Path-following guidance laws and closed-loop simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one closed-loop scenario")
    p_sim.add_argument("--config", required=True, help="scenario JSON file")
    p_sim.add_argument("--out", required=True, help="output trace CSV")
    p_sim.set_defaults(func=_cmd_simulate)

    p_cmp = sub.add_parser("compare", help="run several laws on one scenario")
    p_cmp.add_argument("--config", required=True, help="scenario JSON file")
    p_cmp.add_argument("--laws", default="nmpc,pnmpc,sglos",
                       help="comma-separated laws to run")
    p_cmp.add_argument("--out", required=True, help="output directory")
    p_cmp.set_defaults(func=_cmd_compare)

    p_chk = sub.add_parser("check-derivatives",
                           help="finite-difference path and Jacobian checks")
    p_chk.add_argument("--samples", type=int, default=500)
    p_chk.add_argument("--seed", type=int, default=0)
    p_chk.set_defaults(func=_cmd_check_derivatives)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except _INVARIANT_ERRORS as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 4
    except PFGuideError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
