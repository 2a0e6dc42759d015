"""Command line: `conbandit run`, `conbandit analyze`, `conbandit list`."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiment import DEFAULT_MAX_STEPS, characteristic_time_grid, run_experiment
from .explorers import SAMPLERS, RadiusKind, StoppingConfig, ThresholdKind
from .hardness import analyze
from .model import ConBanditError
from .scenarios import UnknownScenarioError, list_scenarios, resolve


def _add_scenario_args(p):
    p.add_argument("--scenario", required=True, help="built-in name (see `list`) or a problem JSON file")
    p.add_argument("--exploration", choices=["anytime", "end_of_time"], default=None,
                   help="override the scenario's exploration constraint")
    p.add_argument("--delta", type=float, default=None, help="confidence level (default: scenario's)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conbandit", description="Pure exploration of linear-constrained bandits.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Monte Carlo experiment, writes runs.csv, timings.csv and summary.json")
    _add_scenario_args(run)
    run.add_argument("--samplers", default=",".join(SAMPLERS), help="comma-separated subset of " + ",".join(SAMPLERS))
    run.add_argument("--seeds", type=int, default=None, help="number of seeds (default: scenario's)")
    run.add_argument("--base-seed", type=int, default=0)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS, help="runs longer than this are censored")
    run.add_argument("--threshold", choices=[k.value for k in ThresholdKind], default="heuristic")
    run.add_argument("--alpha", type=float, default=1.5, help="exponent of the theoretical threshold")
    run.add_argument("--cge-radius", choices=[k.value for k in RadiusKind], default="log")
    run.add_argument("--inner-iters", type=int, default=None, help="supergradient steps per round for ctns/ptns")
    run.add_argument("--quiet", action="store_true")

    an = sub.add_parser("analyze", help="hardness report (JSON); optional characteristic-time grid")
    _add_scenario_args(an)
    an.add_argument("--sweep", nargs=8, metavar=("ARM_I", "LO_I", "HI_I", "STEPS_I", "ARM_J", "LO_J", "HI_J", "STEPS_J"),
                    help="grid over two means (arms 1-based)")
    an.add_argument("--out", default=None, help="output file (default: stdout)")

    sub.add_parser("list", help="built-in scenarios")
    return parser


def _cmd_run(args) -> int:
    samplers = [s.strip() for s in args.samplers.split(",") if s.strip()]
    options = {} if args.inner_iters is None else {"inner_iters": args.inner_iters}
    spec = resolve(args.scenario, args.exploration, delta=args.delta, samplers=samplers,
                   n_seeds=args.seeds, base_seed=args.base_seed, options=options)
    config = StoppingConfig(spec.delta, args.threshold, args.alpha, args.cge_radius)
    done = [0]
    total = len(spec.samplers) * spec.n_seeds

    def progress(rec):
        done[0] += 1
        if not args.quiet:
            print(f"[{done[0]}/{total}] {rec.sampler} seed={rec.seed} tau={rec.tau} "
                  f"correct={rec.correct}", file=sys.stderr)

    res = run_experiment(spec, args.out, args.jobs, args.max_steps, config, progress)
    for name, s in res.summary["samplers"].items():
        mean = "NA" if s["mean_tau"] is None else f"{s['mean_tau']:.1f}"
        err = "NA" if s["error_rate"] is None else f"{s['error_rate']:.3f}"
        print(f"{name:8s} n={s['n']:5d} mean_tau={mean:>10s} error_rate={err} censored={s['censored']}")
    ref = res.summary["reference"]
    if ref["lower_bound"] is not None:
        print(f"lower bound T*kl(delta,1-delta) = {ref['lower_bound']:.1f}")
    return 0


def _cmd_analyze(args) -> int:
    spec = resolve(args.scenario, args.exploration, delta=args.delta)
    p = spec.problem
    inst = p.instance
    if args.sweep:
        i, lo_i, hi_i, n_i, j, lo_j, hi_j, n_j = args.sweep
        out = characteristic_time_grid(p, int(i) - 1, float(lo_i), float(hi_i), int(n_i),
                                       int(j) - 1, float(lo_j), float(hi_j), int(n_j))
        out["scenario"] = spec.name
    else:
        out = analyze(inst.means, p.polytope, p.scenario, inst.family, spec.delta, inst.domain).to_dict()
        out["name"] = spec.name
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_list(args) -> int:
    for name, caption in list_scenarios():
        print(f"{name}\n    {caption}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return {"run": _cmd_run, "analyze": _cmd_analyze, "list": _cmd_list}[args.command](args)
    except (UnknownScenarioError, ConBanditError, ValueError) as exc:
        print(f"conbandit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
