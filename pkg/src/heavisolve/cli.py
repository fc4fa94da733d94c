"""Command-line front end.

Subcommands: ``gen-data`` (synthetic dataset plus manifest), ``solve``
(treatment problem via the one-shot encoding or the progressive method,
writing a result JSON), ``compare`` (aggregate result JSONs into a CSV
table), and ``classify`` (score-based, error-constrained or tree rules).

Exit codes: 0 on success, 2 when the solve ends with a positive residual
(the inequality cap was not met), 3 on solver abort.  Argument errors exit
with the usual argparse code.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from .classify import (NpSpec, TreeShape,
                       build_np_classification, build_standard_classification,
                       read_labeled_csv, sweep_label_tuples, tree_predict)
from .encode import build_full_mip, extract_solution, incumbent_hint
from .hscop import ACTIVATION_TOL, evaluate, problem_to_json
from .milp import OPTIMAL, MilpNumericalError, solve_milp
from .progressive import PipConfig, initial_point, run_pip
from .scores import margin_values
from .synthdata import SynthConfig, generate, write_manifest
from .treatment import (PolicyParams, TreatmentSpec, build_treatment_hscop,
                        gini_ipw, read_dataset_csv, read_propensity_csv,
                        welfare_ipw, write_dataset_csv)

RESULT_SCHEMA = 1
GAMMA_FEASIBLE_TOL = 1e-9


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _tier_time_limit(n_atoms: int, scale: float) -> float:
    if n_atoms < 200:
        base = 600.0
    elif n_atoms < 500:
        base = 1800.0
    else:
        base = 3600.0
    return base * scale


def _write_json(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, indent=1, default=float) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen_data(args) -> int:
    config = SynthConfig(n_distinct=args.distinct, n_samples=args.samples,
                         seed=args.seed)
    dataset = generate(config)
    out = Path(args.out)
    write_dataset_csv(dataset, out)
    manifest_path = out.with_suffix(".manifest.json")
    write_manifest(config, out, manifest_path)
    print(f"wrote {out} ({dataset.n_samples} samples, "
          f"{dataset.n_distinct} distinct covariates) and {manifest_path}")
    return 0


def _load_treatment(args):
    propensities = None
    if args.propensities:
        propensities = read_propensity_csv(args.propensities)
    dataset = read_dataset_csv(
        args.data, propensities=propensities,
        propensity_mode=args.propensity_mode,
        outcome_bound=args.outcome_bound)
    spec = TreatmentSpec(n_arms=dataset.n_arms, tau=args.tau, alpha=args.alpha,
                         lam=args.lam, rho=args.rho,
                         beta_bound=args.beta_bound)
    return dataset, spec


def cmd_solve(args) -> int:
    dataset, spec = _load_treatment(args)
    problem, _pairs = build_treatment_hscop(dataset, spec)
    if args.dump_problem:
        Path(args.dump_problem).write_text(problem_to_json(problem))
    budget = args.time_limit
    if budget is None:
        budget = _tier_time_limit(problem.n_atoms, args.scale)
    t0 = time.perf_counter()
    aborted = False
    certificate = False
    history = []
    try:
        if args.method == "full":
            model, emap = build_full_mip(problem)
            model.time_limit = budget
            start = initial_point(problem)
            model.incumbent = incumbent_hint(problem, model, emap, start)
            sol = solve_milp(model)
            point, _ = extract_solution(sol, emap, problem)
            status = sol.status
            certificate = sol.status == OPTIMAL
        else:
            config = PipConfig(
                eps1=args.eps0, eps2=args.eps0,
                cap_fraction=args.cap,
                max_stale_expansions=args.stale,
                subproblem_time_limit=min(300.0, budget),
                total_time_limit=budget,
            )
            result = run_pip(problem, config)
            point = result.point
            status = "aborted" if result.aborted else "finished"
            certificate = result.certificate
            aborted = result.aborted
            history = [r.to_json_dict() for r in result.history]
    except MilpNumericalError as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return 3
    wall = time.perf_counter() - t0

    ev = evaluate(problem, point)
    params = PolicyParams.from_stacked(point.x, spec.n_arms)
    raw_welfare = welfare_ipw(dataset, params, spec)
    try:
        gini = gini_ipw(dataset, params, spec)
    except ValueError:
        gini = None
    feasible_cap = point.gamma <= GAMMA_FEASIBLE_TOL
    doc = {
        "schema_version": RESULT_SCHEMA,
        "command": "solve",
        "method": args.method if args.method == "full" else f"pip({args.cap})",
        "config": {
            "alpha": spec.alpha, "lambda": spec.lam, "rho": spec.rho,
            "tau": float(spec.tau[0]), "beta_bound": spec.beta_bound,
            "cap": args.cap, "stale": args.stale, "eps0": args.eps0,
            "time_limit": budget, "propensity_mode": args.propensity_mode,
        },
        "input": {"path": str(args.data), "sha256": _sha256(args.data)},
        "n_atoms": problem.n_atoms,
        "status": status,
        "welfare": ev.objective,
        "welfare_ipw": raw_welfare,
        "gini": gini,
        "gamma": point.gamma,
        "feasible": feasible_cap,
        "certificate": certificate,
        "time_seconds": wall,
        "beta": params.beta.tolist(),
        "iterations": history,
    }
    _write_json(doc, args.out)
    if args.iteration_log:
        with open(args.iteration_log, "w") as fh:
            for record in history:
                fh.write(json.dumps(record) + "\n")
    if aborted:
        return 3
    return 0 if feasible_cap else 2


def cmd_compare(args) -> int:
    run_dir = Path(args.runs)
    rows = []
    for path in sorted(run_dir.glob("*.json")):
        if path.name.endswith(".manifest.json"):
            continue
        doc = json.loads(path.read_text())
        if doc.get("command") != "solve":
            continue
        if doc.get("feasible", False):
            welfare = f"{doc['welfare']:.6g}"
            gini = "" if doc.get("gini") is None else f"{doc['gini']:.6g}"
        else:
            welfare = "infeas."
            gini = "infeas."
        rows.append([doc["method"], welfare, gini, f"{doc['time_seconds']:.3f}"])
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(["method", "welfare", "gini", "time_seconds"])
        writer.writerows(rows)
    finally:
        if args.out:
            out.close()
    return 0


def _parse_pairs(text: str) -> tuple:
    pairs = []
    if text:
        for chunk in text.split(","):
            i, j = chunk.split(":")
            pairs.append((int(i), int(j)))
    return tuple(pairs)


def cmd_classify(args) -> int:
    data = read_labeled_csv(args.data)
    budget = args.time_limit if args.time_limit is not None else 600.0
    t0 = time.perf_counter()

    def solve_problem(problem):
        model, emap = build_full_mip(problem)
        model.time_limit = budget
        sol = solve_milp(model)
        point, _ = extract_solution(sol, emap, problem)
        return evaluate(problem, point).objective, point, sol.status

    try:
        if args.mode == "tree":
            shape = TreeShape.complete(args.depth, args.branch_eps)
            sweep = sweep_label_tuples(
                data, shape,
                lambda prob: solve_problem(prob)[:2],
                lam=args.lam, budget=args.budget)
            predicted = tree_predict(shape, sweep.best_labels,
                                     sweep.best_point.x, data.features)
            accuracy = float(np.mean(predicted == data.labels))
            doc = {
                "schema_version": RESULT_SCHEMA,
                "command": "classify", "mode": "tree",
                "input": {"path": str(args.data), "sha256": _sha256(args.data)},
                "depth": args.depth,
                "tuples": [{"labels": list(l), "objective": v}
                           for l, v in sweep.per_tuple],
                "best_labels": list(sweep.best_labels),
                "objective": sweep.best_objective,
                "accuracy": accuracy,
                "time_seconds": time.perf_counter() - t0,
            }
            _write_json(doc, args.out)
            return 0

        if args.mode == "standard":
            problem, _ = build_standard_classification(
                data, tau=args.tau, lam=args.lam)
        else:
            all_pairs = {(i, j) for i in range(data.n_classes)
                         for j in range(data.n_classes) if i != j}
            e1 = _parse_pairs(args.np_e1)
            e2 = tuple(sorted(all_pairs - set(e1)))
            spec = NpSpec(n_classes=data.n_classes, e1=e1, e2=e2,
                          weights={p: args.np_weight for p in all_pairs},
                          gamma=args.np_gamma,
                          tau=max(args.tau, 1e-3), lam=args.lam)
            problem, _ = build_np_classification(data, spec)
        objective, point, status = solve_problem(problem)
        beta = point.x.reshape(data.n_classes, data.n_features)
        taus = np.full(data.n_classes, args.tau)
        h = margin_values(data.features, beta, np.zeros(data.n_classes), taus)
        rows = np.arange(data.n_samples)
        correct = h[rows, data.labels] >= -ACTIVATION_TOL
        per_class = {
            str(i): float(correct[data.labels == i].mean())
            for i in range(data.n_classes)
        }
        doc = {
            "schema_version": RESULT_SCHEMA,
            "command": "classify", "mode": args.mode,
            "input": {"path": str(args.data), "sha256": _sha256(args.data)},
            "status": status,
            "objective": objective,
            "accuracy": float(correct.mean()),
            "per_class_rate": per_class,
            "beta": beta.tolist(),
            "time_seconds": time.perf_counter() - t0,
        }
        _write_json(doc, args.out)
        return 0
    except MilpNumericalError as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heavisolve",
        description="Heaviside composite optimization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--distinct", type=int, default=25)
    g.add_argument("--samples", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("solve", help="solve a treatment learning instance")
    s.add_argument("--data", required=True)
    s.add_argument("--method", choices=["full", "pip"], default="full")
    s.add_argument("--alpha", type=float, default=0.7)
    s.add_argument("--lambda", dest="lam", type=float, default=0.01)
    s.add_argument("--rho", type=float, default=1e8)
    s.add_argument("--tau", type=float, default=0.001)
    s.add_argument("--cap", type=float, default=0.6)
    s.add_argument("--stale", type=int, default=10)
    s.add_argument("--eps0", type=float, default=0.5)
    s.add_argument("--beta-bound", type=float, default=1.0)
    s.add_argument("--time-limit", type=float, default=None,
                   help="seconds; default picks the size tier")
    s.add_argument("--scale", type=float, default=1.0,
                   help="multiplier on the tiered default time limits")
    s.add_argument("--propensity-mode", choices=["uniform", "empirical"],
                   default="uniform")
    s.add_argument("--propensities", default=None,
                   help="optional propensity CSV")
    s.add_argument("--outcome-bound", type=float, default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--dump-problem", default=None,
                   help="also write the assembled problem as JSON")
    s.add_argument("--iteration-log", default=None,
                   help="write per-iteration records as JSON lines")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("compare", help="aggregate solve results into a CSV")
    c.add_argument("--runs", required=True)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_compare)

    k = sub.add_parser("classify", help="fit a classification rule")
    k.add_argument("--data", required=True)
    k.add_argument("--mode", choices=["standard", "np", "tree"],
                   default="standard")
    k.add_argument("--tau", type=float, default=0.0)
    k.add_argument("--lambda", dest="lam", type=float, default=0.0)
    k.add_argument("--time-limit", type=float, default=None)
    k.add_argument("--np-e1", default="", help="capped pairs, e.g. '0:1,1:0'")
    k.add_argument("--np-gamma", type=float, default=0.1)
    k.add_argument("--np-weight", type=float, default=1.0)
    k.add_argument("--depth", type=int, default=1)
    k.add_argument("--branch-eps", type=float, default=1e-3)
    k.add_argument("--budget", type=int, default=64)
    k.add_argument("--out", default=None)
    k.set_defaults(func=cmd_classify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
