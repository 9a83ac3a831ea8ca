"""Command line entry point: ``leoalloc {generate,solve,greedy,experiment,validate}``.

Exit codes: 0 success, 1 infeasible problem, 2 usage or input-format error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from .alternating import AlgorithmConfig, evaluate_solution, initialize_association, run_algorithm1
from .errors import InfeasibleError
from .greedy import run_greedy
from .harness import DEFAULT_SEEDS, KINDS, ExperimentSpec, load_manifest, run_experiment
from .instance import (
    _HEADER,
    InstanceFormatError,
    ScenarioConfig,
    dump_yaml,
    generate_scenario,
    load_instance,
    save_instance,
)

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE = 0, 1, 2

# --sweep values are given in these units per experiment kind
SWEEP_UNITS = {"demand": 1e6, "compare": 1e6, "bandwidth": 1e6, "connections": 1e6, "convergence": 1.0}


class UsageError(Exception):
    pass


def _parse_seeds(text: str) -> list[int]:
    """``"1-30"`` or ``"1,4,9"`` (ranges inclusive)."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return seeds


def _scenario_config(args) -> ScenarioConfig:
    doc = {}
    if getattr(args, "config", None):
        try:
            doc = yaml.safe_load(Path(args.config).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a mapping of scenario fields")
    try:
        cfg = ScenarioConfig.from_dict(doc)
        if getattr(args, "seed", None) is not None:
            cfg = cfg.replace(seed=args.seed)
        if getattr(args, "beam_exponent", None) is not None:
            channel = dict(vars(cfg.channel))
            channel["beam_exponent"] = args.beam_exponent
            cfg = cfg.replace(channel=channel)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid scenario config: {exc}") from None
    return cfg


def _algorithm_config(args) -> AlgorithmConfig:
    kw = {}
    if args.rho is not None:
        kw["rho"] = args.rho
    if args.eps is not None:
        kw["eps"] = args.eps
    if args.max_iters is not None:
        kw["max_iters"] = args.max_iters
    try:
        return AlgorithmConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _instance(args):
    if args.instance:
        return load_instance(args.instance)
    return generate_scenario(_scenario_config(args))


def _solution_doc(inst, algorithm, status, assoc, alloc, extra) -> dict:
    metrics = evaluate_solution(inst, assoc, alloc)
    return {
        "algorithm": algorithm,
        "status": status,
        "total_power_w": metrics.total_power_w,
        "total_power_dbw": metrics.total_power_dbw,
        "satisfaction": metrics.satisfaction,
        "per_leo_connections": metrics.per_leo_connections,
        "assignment": assoc.assignment,
        "p": alloc.p,
        "P": alloc.P,
        "W_sue": alloc.W_sue,
        "W_bs": alloc.W_bs,
        "rates": metrics.rates,
        "bandwidth_utilization": metrics.bandwidth_utilization,
        **extra,
        "seed": inst.meta.get("seed"),
        "config": inst.meta.get("config"),
    }


def _write(out, name, doc) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(dump_yaml(doc))
    return path


def cmd_generate(args) -> int:
    cfg = _scenario_config(args)
    inst = generate_scenario(cfg)
    out = Path(args.out) if args.out else Path(".")
    path = out if out.suffix in (".yaml", ".yml") else out / f"instance_seed{cfg.seed}.yaml"
    save_instance(inst, path)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = _instance(args)
    algorithm = args.algorithm
    if algorithm == "greedy":
        res = run_greedy(inst, strict=args.strict_paper)
        status = "Feasible" if res.feasible else "Infeasible"
        doc = _solution_doc(inst, "greedy", status, res.association, res.powers, {"strict": args.strict_paper})
        code = EXIT_OK if res.feasible else EXIT_INFEASIBLE
    else:
        cfg = _algorithm_config(args)
        try:
            sol = run_algorithm1(inst, cfg)
        except InfeasibleError as exc:
            print(f"Infeasible: {exc}", file=sys.stderr)
            if args.out:
                _write(args.out, "solution.yaml", {"algorithm": "alg1", "status": "Infeasible", "reason": str(exc)})
            return EXIT_INFEASIBLE
        extra = {
            "iterations": sol.iterations,
            "objective_trace": sol.objective_trace,
            "algorithm_config": dict(vars(cfg)),
        }
        doc = _solution_doc(inst, "alg1", sol.status, sol.association, sol.allocation, extra)
        code = EXIT_OK if sol.satisfaction >= 1.0 else EXIT_INFEASIBLE
    print(
        f"{doc['algorithm']}: status={doc['status']} power={doc['total_power_w']:.6g} W "
        f"({doc['total_power_dbw']:.3f} dBW) satisfaction={doc['satisfaction']:.3f} "
        f"connections={list(np.asarray(doc['per_leo_connections']).tolist())}"
    )
    if args.out:
        print(f"wrote {_write(args.out, 'solution.yaml', doc)}")
    return code


def cmd_experiment(args) -> int:
    if args.manifest:
        spec = load_manifest(args.manifest, args.out)
    else:
        if not args.experiment:
            raise UsageError("experiment needs --experiment or --manifest")
        kind = args.experiment
        sweep = []
        if args.sweep:
            try:
                sweep = [float(v) * SWEEP_UNITS[kind] for v in args.sweep.split(",") if v.strip()]
            except ValueError:
                raise UsageError(f"--sweep must be a comma list of numbers, got {args.sweep!r}") from None
        if args.seeds:
            seeds = _parse_seeds(args.seeds)
        elif args.seed is not None:
            seeds = [args.seed]
        else:
            seeds = list(DEFAULT_SEEDS)
        base = _scenario_config(argparse.Namespace(config=args.config, seed=None, beam_exponent=args.beam_exponent))
        try:
            spec = ExperimentSpec(
                kind=kind,
                base=base,
                sweep=sweep,
                seeds=seeds,
                out_dir=args.out or f"results/{kind}",
                algorithm=_algorithm_config(args),
                strict=args.strict_paper,
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    paths = run_experiment(spec, jobs=args.jobs)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    inst = load_instance(args.instance)
    print(f"valid instance: M={inst.M} K={inst.K} N={inst.N}")
    try:
        initialize_association(inst)
    except InfeasibleError as exc:
        print(f"Infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print("a feasible association exists")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leoalloc", description="LEO uplink association and resource allocation")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_flags(p):
        p.add_argument("--config", help="YAML mapping of scenario fields")
        p.add_argument("--seed", type=int)
        p.add_argument("--beam-exponent", type=int, choices=(1, 2))

    def algo_flags(p):
        p.add_argument("--rho", type=float)
        p.add_argument("--eps", type=float)
        p.add_argument("--max-iters", type=int)
        p.add_argument("--strict-paper", action="store_true", help="greedy with rounded per-satellite caps")

    p = sub.add_parser("generate", help="draw a random scenario and write it as an instance file")
    scenario_flags(p)
    p.add_argument("--out", help="output file (.yaml) or directory")
    p.set_defaults(func=cmd_generate)

    for name in ("solve", "greedy"):
        p = sub.add_parser(name, help=f"solve one instance{' with the greedy baseline' if name == 'greedy' else ''}")
        p.add_argument("--instance", help="instance file; a scenario is generated when omitted")
        scenario_flags(p)
        algo_flags(p)
        if name == "solve":
            p.add_argument("--algorithm", choices=("alg1", "greedy"), default="alg1")
        else:
            p.set_defaults(algorithm="greedy")
        p.add_argument("--out", help="directory for solution.yaml")
        p.set_defaults(func=cmd_solve)

    p = sub.add_parser("experiment", help="run a parameter sweep")
    p.add_argument("--experiment", choices=KINDS)
    p.add_argument("--sweep", help="comma list; Mbps for demand/compare, MHz for bandwidth/connections, K for convergence")
    p.add_argument("--seeds", help="seed list such as 1-30 or 1,2,5 (default 1-30)")
    p.add_argument("--manifest", help="re-run the experiment recorded in a manifest.json")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="output directory")
    scenario_flags(p)
    algo_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("validate", help="check an instance file")
    p.add_argument("--instance", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except InstanceFormatError as exc:
        print(f"instance format error: {exc}", file=sys.stderr)
        print(_HEADER, file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, FileNotFoundError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"Infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
