"""Command-line entry point.

Subcommands: simulate, fit, summarize, km, compare, validate-kernel. Every
run writes its outputs into a run directory (``--out``, or a timestamped
default under ./runs) together with run_manifest.json echoing the resolved
configuration; output files themselves contain no timestamps, so identical
configurations produce byte-identical primary outputs.

Exit codes: 0 success, 2 usage, 3 I/O or data validation, 4 numerical
failure, 5 convergence warning under --strict.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time

import numpy as np

from .analyze import (
    EvidenceResult,
    TestUndefinedError,
    kaplan_meier,
    km_rows,
    log_marginal_stepping_stone,
    logrank_test,
    summarize_draws,
    summary_rows,
)
from .families import Family
from .ingest import DatasetValidationError, load_dataset, read_column, write_dataset
from .kernels import KernelValidityError, NotPositiveDefiniteError, Topology, min_eig_sweep
from .model import ModelStructure, ParameterState, fit_model
from .priors import load_preset
from .sampler import (
    DiagnosticsUnavailableError,
    HMCConfig,
    InitializationError,
    PosteriorDraws,
    diagnostics,
)
from .simulate import SimulationError, SimulationSettings, default_truth, generate_dataset
from .topology import GridSpec, InvalidGridError, build_location_map

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_CONVERGENCE = 5

RHAT_LIMIT = 1.1


def _emit_error(kind, message, code):
    record = {"error": kind, "message": str(message), "exit_code": code}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message, EXIT_USAGE)
        raise SystemExit(EXIT_USAGE)


def _parse_grid(text) -> GridSpec:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"grid must look like 8x25, got {text!r}")
    return GridSpec(int(parts[0]), int(parts[1]))


def _parse_float_list(text):
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _run_dir(args, subcommand):
    if args.out:
        path = args.out
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        path = os.path.join("runs", f"{subcommand}-{stamp}-seed{args.seed}")
    os.makedirs(path, exist_ok=True)
    return path


def _write_manifest(outdir, subcommand, args, outputs):
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    payload = {"subcommand": subcommand, "config": resolved, "outputs": sorted(outputs)}
    path = os.path.join(outdir, "run_manifest.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _write_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerows(rows)


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_truth(path):
    if path is None:
        return default_truth()
    with open(path) as fh:
        payload = json.load(fh)
    return ParameterState(**payload)


def _load_data(args):
    descriptor = args.descriptor
    if args.schema == "generic" and descriptor is None:
        candidate = args.data + ".columns.json"
        if os.path.exists(candidate):
            descriptor = candidate
    return load_dataset(args.data, args.schema, _parse_grid(args.grid),
                        descriptor=descriptor, filter_batch=args.filter_batch)


def _hmc_config(args, n_chains=None):
    return HMCConfig(
        n_warmup=args.warmup,
        n_draws=args.draws,
        target_accept=args.target_accept,
        max_leapfrog_steps=args.max_leapfrog,
        seed=args.seed,
        n_chains=n_chains if n_chains is not None else args.chains,
    )


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args):
    outdir = _run_dir(args, "simulate")
    grid = _parse_grid(args.grid)
    truth = _load_truth(args.truth)
    outputs = []
    seeds = [args.seed] if args.n_datasets == 1 else [
        int(s.generate_state(1, dtype=np.uint64)[0])
        for s in np.random.SeedSequence(args.seed).spawn(args.n_datasets)
    ]
    for k, seed in enumerate(seeds):
        settings = SimulationSettings(
            grid=grid, replicates_per_location=args.replicates, truth=truth,
            target_censoring_rate=args.censoring, family=Family.from_name(args.family),
            seed=seed,
        )
        data, manifest = generate_dataset(settings)
        suffix = "" if args.n_datasets == 1 else f"-{k + 1}"
        data_path = os.path.join(outdir, f"dataset{suffix}.csv")
        write_dataset(data, grid, data_path, descriptor_path=data_path + ".columns.json")
        manifest.dataset_path = os.path.basename(data_path)
        manifest.to_json(os.path.join(outdir, f"manifest{suffix}.json"))
        outputs += [os.path.basename(data_path), f"dataset{suffix}.csv.columns.json",
                    f"manifest{suffix}.json"]
        print(f"wrote {data_path}: {data.n} units, "
              f"censoring rate {manifest.realized_censoring_rate:.4f}")
    _write_manifest(outdir, "simulate", args, outputs)
    return EXIT_OK


def _cmd_fit(args):
    outdir = _run_dir(args, "fit")
    data = _load_data(args)
    grid = _parse_grid(args.grid)
    locmap = build_location_map(grid)
    priors = load_preset(args.preset)
    config = _hmc_config(args)
    draws = fit_model(
        data, locmap, priors, config,
        family=Family.from_name(args.family),
        structure=ModelStructure.from_name(args.model),
        n_threads=args.threads,
    )
    draws_path = os.path.join(outdir, "draws.csv")
    rows = [draws.labels] + [[repr(float(x)) for x in row] for row in draws.draws]
    _write_csv(draws_path, rows)

    diag_payload = {"available": False}
    max_rhat = None
    try:
        diag = diagnostics(draws)
        diag_payload = {"available": True}
        diag_payload.update(diag)
        max_rhat = diag["max_rhat"]
    except DiagnosticsUnavailableError as exc:
        diag_payload["reason"] = str(exc)
    _write_json(os.path.join(outdir, "diagnostics.json"), diag_payload)
    _write_manifest(outdir, "fit", args, ["draws.csv", "diagnostics.json"])

    n_rows = draws.draws.shape[0]
    if max_rhat is not None:
        print(f"wrote {draws_path}: {n_rows} draws, max split R-hat {max_rhat:.4f}")
    else:
        print(f"wrote {draws_path}: {n_rows} draws (diagnostics unavailable)")
    if args.strict:
        if max_rhat is None:
            _emit_error("convergence", "diagnostics unavailable under --strict",
                        EXIT_CONVERGENCE)
            return EXIT_CONVERGENCE
        if max_rhat > RHAT_LIMIT or draws.divergence_warning:
            _emit_error("convergence",
                        f"max split R-hat {max_rhat:.4f} exceeds {RHAT_LIMIT} "
                        f"or divergence rate is high", EXIT_CONVERGENCE)
            return EXIT_CONVERGENCE
    return EXIT_OK


def _read_draws_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        values = [[float(x) for x in row] for row in reader]
    arr = np.asarray(values)
    if arr.size == 0:
        raise DatasetValidationError(f"{path}: no draws")
    return PosteriorDraws(
        draws=arr, labels=tuple(header), n_chains=1, n_draws=arr.shape[0],
        divergences=(0,), accept_rate=(float("nan"),), step_size=(float("nan"),),
    )


def _cmd_summarize(args):
    outdir = _run_dir(args, "summarize")
    draws = _read_draws_csv(args.draws_file)
    summary = summarize_draws(draws, alpha=args.alpha)
    path = os.path.join(outdir, "summary.csv")
    _write_csv(path, summary_rows(summary, args.name))
    _write_manifest(outdir, "summarize", args, ["summary.csv"])
    print(f"wrote {path}: {len(summary.labels)} parameters")
    return EXIT_OK


def _cmd_km(args):
    outdir = _run_dir(args, "km")
    data = _load_data(args)
    strata = None
    if args.strata:
        strata = np.asarray(read_column(args.data, args.strata))
        if args.filter_batch is not None:
            batch = np.asarray(read_column(args.data, "batch"))
            strata = strata[batch == str(args.filter_batch)]
    curves = kaplan_meier(data.time, data.event, strata)
    km_path = os.path.join(outdir, "km.csv")
    _write_csv(km_path, km_rows(curves))
    outputs = ["km.csv"]
    if strata is not None and np.unique(strata).shape[0] >= 2:
        stat, df, p_value = logrank_test(data.time, data.event, strata)
        _write_json(os.path.join(outdir, "logrank.json"),
                    {"statistic": stat, "df": df, "p_value": p_value})
        outputs.append("logrank.json")
        print(f"wrote {km_path}; log-rank chi2={stat:.4f} df={df} p={p_value:.3e}")
    else:
        print(f"wrote {km_path}")
    _write_manifest(outdir, "km", args, outputs)
    return EXIT_OK


def _cmd_compare(args):
    outdir = _run_dir(args, "compare")
    data = _load_data(args)
    grid = _parse_grid(args.grid)
    locmap = build_location_map(grid)
    priors = load_preset(args.preset)
    family = Family.from_name(args.family)
    models = [ModelStructure.from_name(tok) for tok in args.models.split(",") if tok.strip()]
    if not models:
        raise ValueError("no models requested")
    config = HMCConfig(n_warmup=args.rung_warmup, n_draws=args.rung_draws,
                       target_accept=args.target_accept,
                       max_leapfrog_steps=args.max_leapfrog,
                       seed=args.seed, n_chains=args.chains)
    results: dict[str, EvidenceResult] = {}
    for model in models:
        results[model.value] = log_marginal_stepping_stone(
            model, data, locmap, priors, family, config=config, k_rungs=args.rungs)
    payload = {
        "logml": {name: res.logml for name, res in results.items()},
        "reliable": {name: res.reliable for name, res in results.items()},
        "rung_rhat_max": {name: max(res.rung_rhat) for name, res in results.items()},
        "log_bayes_factor": {},
    }
    names = sorted(results)
    for a in names:
        for b in names:
            if a != b:
                payload["log_bayes_factor"][f"{a}_over_{b}"] = (
                    results[a].logml - results[b].logml)
    path = os.path.join(outdir, "compare.json")
    _write_json(path, payload)
    _write_manifest(outdir, "compare", args, ["compare.json"])
    ranking = sorted(payload["logml"], key=payload["logml"].get, reverse=True)
    print(f"wrote {path}; log evidence ranking: {' > '.join(ranking)}")
    if args.strict and not all(payload["reliable"].values()):
        _emit_error("convergence", "at least one stepping-stone rung failed R-hat",
                    EXIT_CONVERGENCE)
        return EXIT_CONVERGENCE
    return EXIT_OK


def _cmd_validate_kernel(args):
    outdir = _run_dir(args, "validate-kernel")
    grid = _parse_grid(args.grid)
    topology = Topology.TORUS if args.topology == "torus" else Topology.EUCLIDEAN_GRID
    rows = [("kappa", "nu", "min_eigenvalue")]
    sweep = min_eig_sweep(topology, grid, _parse_float_list(args.kappas),
                          _parse_float_list(args.nus))
    n_negative = 0
    for kappa, nu, eig in sweep:
        rows.append((repr(float(kappa)), repr(float(nu)), repr(float(eig))))
        n_negative += int(eig < -1e-8)
    path = os.path.join(outdir, "sweep.csv")
    _write_csv(path, rows)
    _write_manifest(outdir, "validate-kernel", args, ["sweep.csv"])
    print(f"wrote {path}: {len(sweep)} combinations, {n_negative} non-PD")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common_out(p):
    p.add_argument("--out", default=None, help="run directory (default: runs/<stamp>)")
    p.add_argument("--seed", type=int, default=0)


def _add_data_args(p):
    p.add_argument("--data", required=True, help="input dataset CSV")
    p.add_argument("--grid", required=True, help="grid as RxC, e.g. 8x25")
    p.add_argument("--schema", choices=("gpu", "generic"), default="generic")
    p.add_argument("--descriptor", default=None,
                   help="column descriptor JSON for the generic schema")
    p.add_argument("--filter-batch", default=None,
                   help="keep only records whose batch column matches")


def _add_hmc_args(p, warmup=4000, draws=4000):
    p.add_argument("--warmup", type=int, default=warmup)
    p.add_argument("--draws", type=int, default=draws)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--target-accept", type=float, default=0.8)
    p.add_argument("--max-leapfrog", type=int, default=32)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)


def build_parser():
    parser = _Parser(prog="spataft", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="generate synthetic datasets")
    p.add_argument("--grid", required=True)
    p.add_argument("--replicates", type=int, required=True)
    p.add_argument("--censoring", type=float, default=0.5)
    p.add_argument("--family", default="nor")
    p.add_argument("--truth", default=None, help="JSON file of true parameter values")
    p.add_argument("--n-datasets", type=int, default=1)
    _add_common_out(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="sample the posterior")
    _add_data_args(p)
    p.add_argument("--model", default="m2", help="m0, m1 or m2")
    p.add_argument("--family", default="nor")
    p.add_argument("--preset", default="analysis",
                   help="prior preset name (simulation, analysis) or JSON path")
    p.add_argument("--strict", action="store_true",
                   help="exit 5 when max split R-hat exceeds 1.1")
    _add_hmc_args(p)
    _add_common_out(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("summarize", help="summary table from a draws CSV")
    p.add_argument("--draws-file", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--name", default="fit", help="value of the Name column")
    _add_common_out(p)
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("km", help="Kaplan-Meier curves and log-rank test")
    _add_data_args(p)
    p.add_argument("--strata", default=None, help="raw CSV column to stratify by")
    _add_common_out(p)
    p.set_defaults(func=_cmd_km)

    p = sub.add_parser("compare", help="stepping-stone evidence for nested models")
    _add_data_args(p)
    p.add_argument("--models", default="m0,m1,m2")
    p.add_argument("--family", default="nor")
    p.add_argument("--preset", default="analysis")
    p.add_argument("--rungs", type=int, default=32)
    p.add_argument("--rung-warmup", type=int, default=500)
    p.add_argument("--rung-draws", type=int, default=500)
    p.add_argument("--chains", type=int, default=2)
    p.add_argument("--target-accept", type=float, default=0.8)
    p.add_argument("--max-leapfrog", type=int, default=32)
    p.add_argument("--strict", action="store_true")
    _add_common_out(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("validate-kernel", help="min-eigenvalue sweep over kappa, nu")
    p.add_argument("--topology", choices=("torus", "euclidean"), default="torus")
    p.add_argument("--grid", required=True)
    p.add_argument("--kappas", default="0.25,0.5,0.75,1.0")
    p.add_argument("--nus", default="0.5,1.0,2.0,4.0")
    _add_common_out(p)
    p.set_defaults(func=_cmd_validate_kernel)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DatasetValidationError as exc:
        _emit_error("validation", exc, EXIT_IO)
        return EXIT_IO
    except SimulationError as exc:
        _emit_error("simulation", exc, EXIT_IO)
        return EXIT_IO
    except TestUndefinedError as exc:
        _emit_error("validation", exc, EXIT_IO)
        return EXIT_IO
    except (FileNotFoundError, OSError, json.JSONDecodeError) as exc:
        _emit_error("io", exc, EXIT_IO)
        return EXIT_IO
    except (KernelValidityError, NotPositiveDefiniteError, InitializationError,
            np.linalg.LinAlgError) as exc:
        _emit_error("numerical", exc, EXIT_NUMERIC)
        return EXIT_NUMERIC
    except (InvalidGridError, ValueError) as exc:
        _emit_error("usage", exc, EXIT_USAGE)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
