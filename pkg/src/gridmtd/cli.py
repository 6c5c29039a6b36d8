"""Command-line front end.

Subcommands:
  analyze  <case>   bridges, completeness, attack-space bounds
  deploy   <case>   perturbation-hardware placement plan
  plan     <case>   search a multi-stage schedule, emit its document
  adp      <case>   Monte-Carlo attack-detection-probability experiment
  table1            3-bus golden demonstration report
  economic          whole-cycle loss from stage and steady losses

All structured output is JSON on stdout; diagnostics go to stderr. Exit
status: 0 success, 2 usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .case_io import (
    BUNDLED_CASES,
    CaseParseError,
    CaseValidationError,
    DocumentFormatError,
    adp_csv,
    doa_curve_csv,
    load_bundled_case,
    read_schedule,
    write_schedule,
)
from .dc import EstimationError, IslandError
from .experiments import (
    AdpConfig,
    EconomicCycle,
    economic_average,
    loaded_first_weights,
    reproduce_table1,
    run_adp,
    schedule_document,
)
from .mtd import SearchError, plan_mmtd, verify_completeness
from .topology import Topology, deployment_plan, fundamental_cycles

_RUNTIME_ERRORS = (
    CaseParseError,
    CaseValidationError,
    DocumentFormatError,
    IslandError,
    EstimationError,
    SearchError,
    ValueError,
    KeyError,
    OSError,
)


def _add_case_argument(p: argparse.ArgumentParser) -> None:
    p.add_argument("case", choices=BUNDLED_CASES, help="bundled case name")


def _cmd_analyze(args) -> int:
    case = load_bundled_case(args.case)
    t = Topology.from_case(case)
    comp = verify_completeness(t)
    plan = deployment_plan(t)
    print(
        json.dumps(
            {
                "case": case.name,
                "buses": len(case.buses),
                "branches": case.m,
                "complete": comp.complete,
                "doi": comp.doi,
                "bridges": sorted(comp.bridges),
                "supremum": plan.supremum,
                "initial_doa": case.n,
                "residual_doa": case.m - plan.supremum,
            },
            indent=2,
        )
    )
    return 0


def _cmd_deploy(args) -> int:
    case = load_bundled_case(args.case)
    t = Topology.from_case(case)
    plan = deployment_plan(t, weights=loaded_first_weights(case, t))
    print(
        json.dumps(
            {
                "case": case.name,
                "deployment": list(plan.deployment),
                "size": plan.m_d,
                "single_cuts": sorted(plan.single_cuts),
                "supremum": plan.supremum,
            },
            indent=2,
        )
    )
    return 0


def _cmd_plan(args) -> int:
    case = load_bundled_case(args.case)
    t = Topology.from_case(case)
    plan = deployment_plan(t, weights=loaded_first_weights(case, t))
    schedule = plan_mmtd(
        case.reactances(),
        plan,
        fundamental_cycles(t),
        tau=args.tau,
        rng=np.random.default_rng(args.seed),
        max_stages=args.max_stages,
        min_shift=args.min_shift,
    )
    text = write_schedule(schedule_document(schedule, case.name))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote schedule to {args.out}", file=sys.stderr)
    else:
        print(text)
    if not schedule.complete:
        print(
            f"warning: {len(schedule.stages)} stages reached rank "
            f"{schedule.rank_trajectory[-1]} of {schedule.supremum}",
            file=sys.stderr,
        )
    return 0


def _cmd_adp(args) -> int:
    schedule = None
    if args.schedule:
        with open(args.schedule) as fh:
            schedule = read_schedule(fh.read())
    config = AdpConfig(
        case_name=args.case,
        seed=args.seed,
        trials=args.trials,
        noise_scale=args.noise,
        alpha=args.alpha,
        method=args.method,
        attack_mw=args.magnitude,
        attack_sizing=args.sizing,
        attack_snr=args.snr,
        deployment=args.deployment,
        tau=args.tau,
        max_stages=args.max_stages,
        schedule=schedule,
    )
    report = run_adp(config)
    print(json.dumps(report.to_dict(), indent=2))
    if args.doa_csv:
        with open(args.doa_csv, "w") as fh:
            fh.write(doa_curve_csv(report.doa_trajectory, load_bundled_case(args.case).n))
    if args.adp_csv:
        with open(args.adp_csv, "w") as fh:
            fh.write(adp_csv([("mmtd", report.case_name, report.overall)]))
    return 0


def _cmd_table1(args) -> int:
    print(json.dumps(reproduce_table1().to_dict(), indent=2))
    return 0


def _cmd_economic(args) -> int:
    cycle = EconomicCycle(
        cycle_s=args.cycle,
        window_s=args.window,
        stage_losses_mw=tuple(args.stage_loss),
        steady_loss_mw=args.steady_loss,
    )
    print(
        json.dumps(
            {
                "omega": cycle.window_s / cycle.cycle_s,
                "whole_cycle_loss_mw": economic_average(cycle),
            },
            indent=2,
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridmtd",
        description="Multi-stage reactance-perturbation defense toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="bridges, completeness, attack-space bounds")
    _add_case_argument(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("deploy", help="perturbation-hardware placement plan")
    _add_case_argument(p)
    p.set_defaults(func=_cmd_deploy)

    p = sub.add_parser("plan", help="search a multi-stage schedule")
    _add_case_argument(p)
    p.add_argument("--tau", type=float, default=0.2, help="relative perturbation bound")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-stages", type=int, default=8)
    p.add_argument("--min-shift", type=float, default=0.05,
                   help="minimum per-line relative shift (noise floor for detection)")
    p.add_argument("--out", help="write the schedule document here instead of stdout")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("adp", help="attack-detection-probability experiment")
    _add_case_argument(p)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--noise", type=float, default=0.01, help="sigma as fraction of reading")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--method", choices=("chi_square", "monte_carlo"), default="chi_square")
    p.add_argument("--magnitude", type=float, default=10.0, help="attack size, MW")
    p.add_argument("--sizing", choices=("peak", "calibrated"), default="peak",
                   help="peak: worst-line deviation = --magnitude; "
                        "calibrated: fixed stage-averaged noncentrality")
    p.add_argument("--snr", type=float, default=3.75,
                   help="root-noncentrality target for calibrated sizing")
    p.add_argument("--deployment", choices=("tree", "full"), default="tree",
                   help="tree: spanning tree minus bridges; full: every branch")
    p.add_argument("--tau", type=float, default=0.2)
    p.add_argument("--max-stages", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schedule", help="use a fixed schedule document (JSON file)")
    p.add_argument("--doa-csv", help="write stage,doa_over_n curve here")
    p.add_argument("--adp-csv", help="write strategy,case,adp summary here")
    p.set_defaults(func=_cmd_adp)

    p = sub.add_parser("table1", help="3-bus golden demonstration")
    p.set_defaults(func=_cmd_table1)

    p = sub.add_parser("economic", help="whole-cycle loss from stage and steady losses")
    p.add_argument("--cycle", type=float, required=True, help="cycle length, seconds")
    p.add_argument("--window", type=float, required=True, help="perturbation window, seconds")
    p.add_argument("--stage-loss", type=float, action="append", default=[],
                   help="per-stage loss, MW (repeatable)")
    p.add_argument("--steady-loss", type=float, required=True, help="steady-setting loss, MW")
    p.set_defaults(func=_cmd_economic)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _RUNTIME_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
