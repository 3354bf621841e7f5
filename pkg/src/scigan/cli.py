"""Command line: ``scigan {simulate,train,evaluate,sweep,hpo,oracle-check}``.

Every subcommand reads an optional INI config (``--config``) and repeated
``--set section.key=value`` overrides. Relative output paths are placed under
``$SCIGAN_OUTPUT_ROOT`` when it is set. Failures exit nonzero and print a JSON
object with ``error`` and ``message`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import harness, theory
from .metrics import ResponseOracle, write_results_csv
from .gan import write_training_log
from .simulate import load_dataset, read_manifest, save_dataset, write_manifest

DATASET_FILE = "dataset.csv"
MANIFEST_FILE = "manifest.json"


def _config(args):
    return harness.load_run_config(args.config, args.set or ())


def _out(args, cfg) -> Path:
    return harness.resolve_output(args.out or cfg.output)


def cmd_simulate(args) -> dict:
    cfg = _config(args)
    out = _out(args, cfg)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    ds, model = harness.simulate(cfg.simulation, seed)
    save_dataset(ds, out / DATASET_FILE)
    sim = cfg.simulation
    write_manifest(out / MANIFEST_FILE, model, seed=seed, alpha=sim.alpha, kappa=sim.kappa, C=sim.C, k=sim.k,
                   shapes=[p.shape for p in model.params], noise_sd=sim.noise_sd, direction=sim.direction,
                   dosage_levels=sim.dosage_levels, n=ds.n, p=ds.p)
    return {"dataset": str(out / DATASET_FILE), "manifest": str(out / MANIFEST_FILE)}


def _load_bundle(data_dir: Path):
    ds = load_dataset(data_dir / DATASET_FILE)
    manifest_path = data_dir / MANIFEST_FILE
    truth, extra = read_manifest(manifest_path) if manifest_path.exists() else (None, {})
    return ds, truth, extra


def cmd_train(args) -> dict:
    cfg = _config(args)
    data_dir = Path(args.data)
    ds, truth, extra = _load_bundle(data_dir)
    k = truth.k if truth is not None else int(ds.w_f.max()) + 1
    if extra.get("dosage_levels") and not cfg.simulation.dosage_levels:
        cfg.simulation.dosage_levels = int(extra["dosage_levels"])
    seed = args.seed if args.seed is not None else extra.get("seed", cfg.seeds[0])
    out = _out(args, cfg)
    written = {}
    for name in cfg.models:
        model, history = harness.train_model(name, ds, cfg, seed, k)
        path = out / f"{name}.ckpt.json"
        harness.save_model(path, model)
        written[name] = str(path)
        if history:
            write_training_log(history, out / f"{name}_log.csv")
    return {"checkpoints": written}


def cmd_evaluate(args) -> dict:
    cfg = _config(args)
    data_dir = Path(args.data)
    ds, truth, extra = _load_bundle(data_dir)
    if truth is None:
        raise FileNotFoundError(f"no oracle manifest at {data_dir / MANIFEST_FILE}; metrics need the true response")
    oracle = ResponseOracle(truth)
    cfg.simulation.kappa = extra.get("kappa", cfg.simulation.kappa)
    cfg.simulation.alpha = extra.get("alpha", cfg.simulation.alpha)
    seed = extra.get("seed", cfg.seeds[0])
    reports = []
    for ckpt in args.checkpoints:
        start = time.perf_counter()
        if ckpt == "oracle":
            model, name = oracle, "oracle"
        else:
            model = harness.load_model(ckpt)
            name = Path(ckpt).name.removesuffix(".ckpt.json")
        reports.append(harness.evaluate_model(model, name, oracle, ds, cfg, seed, time.perf_counter() - start))
    out = _out(args, cfg)
    write_results_csv(out / "results.csv", reports)
    summary = harness.aggregate(reports)
    harness.write_summary(out / "summary.csv", summary)
    return {"results": str(out / "results.csv"), "summary": summary}


def cmd_sweep(args) -> dict:
    cfg = _config(args)
    values = [float(v) if args.axis in ("kappa", "alpha") else int(v) for v in args.values.split(",")]
    out = _out(args, cfg)
    rows = harness.sweep(cfg, args.axis, values, out)
    missing = sum(1 for r in rows if r["sqrt_mise"] == "")
    return {"rows": len(rows), "missing": missing, "csv": str(out / f"sweep_{args.axis}.csv")}


def cmd_hpo(args) -> dict:
    cfg = _config(args)
    out = _out(args, cfg)
    best, trials = harness.hpo(cfg, args.budget, args.seed if args.seed is not None else cfg.seeds[0], out)
    (out / "hpo_best.json").write_text(json.dumps(best, indent=2, sort_keys=True) + "\n")
    return {"best": best, "trials": len(trials)}


def oracle_suite(problems, perturbations: int = 1000, seed: int = 0, counterexample=None) -> dict:
    """Run the exact-enumeration checks; ``ok`` is false if any check fails.

    The factorization check runs on the problems whose outcome blocks
    factorize (fresh ones are generated when none do). ``counterexample``
    defaults to a generated correlated problem.
    """
    rng = np.random.default_rng(seed)
    results = {"optimal_discriminator": [], "kl_identity": [], "factorization": []}
    for prob in problems:
        disc = theory.optimal_discriminator(prob)
        best = theory.exact_disc_loss(prob, disc)
        worst_gap = min(theory.exact_disc_loss(prob, theory.perturb_discriminator(disc, rng)) - best
                        for _ in range(perturbations))
        results["optimal_discriminator"].append({"optimal_loss": best, "min_perturbation_gap": worst_gap, "ok": worst_gap >= 0})
        lhs, rhs = theory.kl_identity_check(prob)
        results["kl_identity"].append({"lhs": lhs, "rhs": rhs, "ok": abs(lhs - rhs) < 1e-8})
    factorizing = [p for p in problems if theory.factorization_gap(p) <= 1e-12]
    if not factorizing:
        factorizing = [theory.factorizing_problem(rng) for _ in range(max(1, len(problems)))]
    for prob in factorizing:
        dev = theory.hierarchical_factorization_check(prob)
        results["factorization"].append({"deviation": dev, "ok": dev < 1e-10})
    counter = counterexample if counterexample is not None else theory.correlated_problem(rng)
    dev = theory.hierarchical_factorization_check(counter, require_factorization=False)
    results["counterexample"] = {"deviation": dev, "ok": dev > 1e-3}
    checks = [r["ok"] for key in ("optimal_discriminator", "kl_identity", "factorization") for r in results[key]]
    results["ok"] = all(checks) and results["counterexample"]["ok"]
    return results


def cmd_oracle_check(args) -> dict:
    counter = None
    if args.fixtures:
        root = Path(args.fixtures)
        problems = [theory.load_problem(p) for p in sorted(root.glob("*.json"))]
        if not problems:
            raise FileNotFoundError(f"no problem fixtures in {args.fixtures}")
        extra = sorted((root / "counterexample").glob("*.json"))
        counter = theory.load_problem(extra[0]) if extra else None
    else:
        rng = np.random.default_rng(args.seed)
        problems = [theory.random_problem(rng) for _ in range(5)]
    results = oracle_suite(problems, args.perturbations, args.seed, counter)
    if not results["ok"]:
        raise AssertionError(json.dumps(results))
    return results


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scigan", description="Dose-response estimation experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="master seed")
        if data:
            p.add_argument("--data", required=True, help="directory holding dataset.csv and manifest.json")
        return p

    common(sub.add_parser("simulate", help="generate a semi-synthetic dataset")).set_defaults(func=cmd_simulate)
    common(sub.add_parser("train", help="train the configured models"), data=True).set_defaults(func=cmd_train)
    ev = common(sub.add_parser("evaluate", help="score checkpoints on the test split"), data=True)
    ev.add_argument("checkpoints", nargs="+", help="checkpoint files, or 'oracle' for the ground truth")
    ev.set_defaults(func=cmd_evaluate)
    sw = common(sub.add_parser("sweep", help="train and evaluate along one axis"))
    sw.add_argument("--axis", required=True, choices=harness.SWEEP_AXES)
    sw.add_argument("--values", required=True, help="comma-separated axis values")
    sw.set_defaults(func=cmd_sweep)
    hp = common(sub.add_parser("hpo", help="random hyperparameter search"))
    hp.add_argument("--budget", type=int, required=True)
    hp.set_defaults(func=cmd_hpo)
    oc = sub.add_parser("oracle-check", help="exact checks of the optimal-discriminator results")
    oc.add_argument("--fixtures", help="directory of problem JSON files")
    oc.add_argument("--perturbations", type=int, default=1000)
    oc.add_argument("--seed", type=int, default=0)
    oc.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        result = args.func(args)
    except Exception as exc:  # noqa: BLE001 - reported as machine-readable JSON
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
