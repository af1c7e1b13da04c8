"""Command-line interface: fit, select, simulate, ppc, summarize.

Exit codes: 0 success, 2 input error, 3 numeric failure, 4
non-convergence when --strict is set.  All randomness is derived from
--seed, so identical invocations write byte-identical result files.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .io import (
    load_draws,
    load_response_csv,
    save_draws,
    save_response_csv,
    write_manifest,
    write_positions_csv,
    write_summary_json,
    write_traces_csv,
    write_truth_json,
)
from .model import Hyperparameters, InputError, NumericError
from .postproc import align_chains, summarize
from .ppc import ppc_check
from .sampler import ChainSchedule, ModelConfig, ProposalScales, run_chains
from .selection import run_selection
from .simulate import Scenario

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_NOT_CONVERGED = 4

PSRF_LIMIT = 1.1


def _add_sampling_flags(parser, iters, burnin, chains):
    parser.add_argument("--iters", type=int, default=iters)
    parser.add_argument("--burnin", type=int, default=burnin)
    parser.add_argument("--thin", type=int, default=1)
    parser.add_argument("--chains", type=int, default=chains)
    parser.add_argument("--dim", type=int, default=2)
    parser.add_argument("--metric", choices=["l1", "l2", "linf"], default="l2")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--no-tune", action="store_true")
    parser.add_argument("--strict", action="store_true",
                        help="exit 4 when chains show non-convergence")
    parser.add_argument("--tau2-beta", type=float, default=4.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsirm")
    parser.add_argument("--config", type=Path,
                        help="key=value file mirroring the flags")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="sample the posterior of the latent space model")
    fit.add_argument("--input", type=Path, required=True)
    fit.add_argument("--out-dir", type=Path, required=True)
    fit.add_argument("--kernel", choices=["distance", "multiplicative", "none"],
                     default="distance")
    fit.add_argument("--gamma-fixed", type=float, default=None)
    _add_sampling_flags(fit, 20000, 10000, 3)

    sel = sub.add_parser("select", help="spike-and-slab choice vs the Rasch model")
    sel.add_argument("--input", type=Path, required=True)
    sel.add_argument("--out-dir", type=Path, required=True)
    _add_sampling_flags(sel, 10000, 5000, 1)

    sim = sub.add_parser("simulate", help="generate synthetic datasets")
    sim.add_argument("--scenario", required=True,
                     choices=["rasch", "local-dep", "two-cluster",
                              "two-cluster-noisy", "lsirm"])
    sim.add_argument("--out-dir", type=Path, required=True)
    sim.add_argument("--n", type=int, default=200)
    sim.add_argument("--i", type=int, default=14)
    sim.add_argument("--reps", type=int, default=1)
    sim.add_argument("--gamma", type=float, default=1.7)
    sim.add_argument("--boost", type=float, default=2.0)
    sim.add_argument("--random", type=int, default=0,
                     help="respondents answering at random in the two-cluster scenarios")
    sim.add_argument("--seed", type=int, default=0)

    ppc = sub.add_parser("ppc", help="posterior predictive check of a fit")
    ppc.add_argument("--fit", type=Path, required=True,
                     help="directory written by the fit command")
    ppc.add_argument("--input", type=Path, required=True)
    ppc.add_argument("--out-dir", type=Path, required=True)
    ppc.add_argument("--replications", type=int, default=10000)
    ppc.add_argument("--seed", type=int, default=0)

    summ = sub.add_parser("summarize", help="recompute summaries from saved draws")
    summ.add_argument("--fit", type=Path, required=True)
    summ.add_argument("--out-dir", type=Path, required=True)
    return parser


def _apply_config_file(argv: list) -> list:
    """Expand --config key=value pairs into flags ahead of explicit ones."""
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at + 1 >= len(argv):
        raise InputError("--config needs a file path")
    path = argv[at + 1]
    rest = argv[:at] + argv[at + 2:]
    if not rest:
        raise InputError("--config requires a subcommand")
    extra = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "config":
            raise InputError(f"{path}:{lineno}: config files cannot nest")
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                extra.append(flag)
        else:
            extra.extend([flag, value])
    # insert right after the subcommand so explicit flags win
    return rest[:1] + extra + rest[1:]


class _PooledDraws:
    """Lazy chain-major view of all kept draws as ParameterStates."""

    def __init__(self, chains):
        self.chains = chains
        self.k = chains[0].n_draws

    def __len__(self):
        return len(self.chains) * self.k

    def __getitem__(self, index):
        return self.chains[index // self.k].state_at(index % self.k)


def _max_psrf(summary) -> float:
    values = []
    if summary.alpha.psrf is not None:
        values.append(float(np.max(summary.alpha.psrf)))
        values.append(float(np.max(summary.beta.psrf)))
    for block in (summary.gamma, summary.sigma2):
        if block is not None and block.psrf is not None:
            values.append(block.psrf)
    return max(values) if values else float("nan")


def _model_config(args, kernel: str, gamma_fixed=None) -> ModelConfig:
    if gamma_fixed is not None and gamma_fixed == 0.0:
        kernel, gamma_fixed = "none", None
    return ModelConfig(
        dimension=args.dim, kernel=kernel,
        metric=args.metric if kernel == "distance" else None,
        hyper=Hyperparameters(tau2_beta=args.tau2_beta),
        tune=not args.no_tune, gamma_fixed=gamma_fixed,
    )


def cmd_fit(args) -> int:
    started = time.time()
    data = load_response_csv(args.input)
    config = _model_config(args, args.kernel, args.gamma_fixed)
    schedule = ChainSchedule(args.iters, args.burnin, args.thin, args.chains, args.seed)
    chains = run_chains(data, config, schedule, ProposalScales(),
                        n_jobs=args.threads)
    aligned = align_chains(chains)
    summary = summarize(chains, aligned)

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    model_meta = {"kernel": config.kernel, "metric": config.metric,
                  "dimension": config.dimension, "gamma_fixed": args.gamma_fixed}
    data_meta = {"n_respondents": data.n_respondents, "n_items": data.n_items,
                 "n_observed": int(data.observed.sum())}
    write_summary_json(out / "summary.json", summary, model_meta, data_meta)
    write_positions_csv(out / "positions.csv", summary)
    write_traces_csv(out / "traces.csv", chains)
    save_draws(out / "draws.npz", chains, n_observed=int(data.observed.sum()),
               gamma_fixed=args.gamma_fixed)
    write_manifest(out / "manifest.json", "fit", _echo_config(args),
                   [args.input],
                   ["summary.json", "positions.csv", "traces.csv", "draws.npz"],
                   time.time() - started)
    psrf = _max_psrf(summary)
    print(f"fit complete: {data.n_respondents} x {data.n_items}, "
          f"{schedule.n_chains} chains, max PSRF {psrf:.3f}"
          if np.isfinite(psrf) else
          f"fit complete: {data.n_respondents} x {data.n_items}, single chain")
    if args.strict and np.isfinite(psrf) and psrf > PSRF_LIMIT:
        print(f"non-convergence: max PSRF {psrf:.3f} > {PSRF_LIMIT}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_select(args) -> int:
    started = time.time()
    data = load_response_csv(args.input)
    config = _model_config(args, "distance")
    schedule = ChainSchedule(args.iters, args.burnin, args.thin, args.chains, args.seed)
    result = run_selection(data, config, schedule, ProposalScales(),
                           n_jobs=args.threads)

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema": 1,
        "inclusion_probability": result.inclusion_probability,
        "chosen_model": result.chosen_model,
        "warning": result.warning,
    }
    (out / "selection.json").write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    write_traces_csv(out / "traces.csv", result.chains)
    save_draws(out / "draws.npz", result.chains)
    write_manifest(out / "manifest.json", "select", _echo_config(args),
                   [args.input], ["selection.json", "traces.csv", "draws.npz"],
                   time.time() - started)
    print(f"inclusion probability {result.inclusion_probability:.3f} -> {result.chosen_model}")
    if result.warning:
        print(result.warning, file=sys.stderr)
        if args.strict:
            return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = time.time()
    kind = {"rasch": "rasch", "local-dep": "local_dependence",
            "two-cluster": "two_cluster", "two-cluster-noisy": "two_cluster_noisy",
            "lsirm": "lsirm"}[args.scenario]
    n_random = args.random
    if kind == "two_cluster" and n_random > 0:
        kind = "two_cluster_noisy"
    elif kind == "two_cluster_noisy" and n_random == 0:
        n_random = 20
    scenario = Scenario(kind, args.n, args.i, gamma=args.gamma, boost=args.boost,
                        n_random=n_random)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    children = np.random.SeedSequence(args.seed).spawn(args.reps)
    outputs = []
    for rep in range(args.reps):
        rng = np.random.default_rng(children[rep])
        data, truth = scenario.generate(rng)
        suffix = "" if args.reps == 1 else f"_{rep:03d}"
        data_path = out / f"data{suffix}.csv"
        truth_path = out / f"truth{suffix}.json"
        save_response_csv(data_path, data)
        write_truth_json(truth_path, truth)
        outputs += [data_path.name, truth_path.name]
    write_manifest(out / "manifest.json", "simulate", _echo_config(args), [],
                   outputs, time.time() - started)
    print(f"wrote {args.reps} dataset(s) to {out}")
    return EXIT_OK


def cmd_ppc(args) -> int:
    started = time.time()
    data = load_response_csv(args.input)
    chains = load_draws(args.fit / "draws.npz")
    draws = _PooledDraws(chains)
    report = ppc_check(data, draws, args.replications,
                       np.random.default_rng(args.seed))
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema": 1,
        "n_replications": report.n_replications,
        "observed_proportion": report.observed_proportion.tolist(),
        "replicated_mean": report.replicated_mean.tolist(),
        "replicated_lower": report.replicated_lower.tolist(),
        "replicated_upper": report.replicated_upper.tolist(),
        "cohen_d": [None if not np.isfinite(d) else d for d in report.cohen_d],
        "flagged_items": report.flagged_items.tolist(),
        "undefined_items": report.undefined_items.tolist(),
    }
    (out / "ppc.json").write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    write_manifest(out / "manifest.json", "ppc", _echo_config(args),
                   [args.input, args.fit / "draws.npz"],
                   ["ppc.json"], time.time() - started)
    print(f"ppc: {len(report.flagged_items)} item(s) flagged with |d| > 0.8")
    return EXIT_OK


def cmd_summarize(args) -> int:
    started = time.time()
    chains, meta = load_draws(args.fit / "draws.npz", with_meta=True)
    summary = summarize(chains)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    model_meta = {"kernel": chains[0].kernel_kind, "metric": chains[0].metric,
                  "dimension": int(chains[0].a_positions.shape[2]),
                  "gamma_fixed": meta["gamma_fixed"]}
    data_meta = {"n_respondents": int(chains[0].alpha.shape[1]),
                 "n_items": int(chains[0].beta.shape[1]),
                 "n_observed": meta["n_observed"]}
    write_summary_json(out / "summary.json", summary, model_meta, data_meta)
    write_positions_csv(out / "positions.csv", summary)
    write_manifest(out / "manifest.json", "summarize", _echo_config(args),
                   [args.fit / "draws.npz"],
                   ["summary.json", "positions.csv"], time.time() - started)
    print(f"summaries written to {out}")
    return EXIT_OK


def _echo_config(args) -> dict:
    skip = {"command", "func", "config"}
    return {k: (str(v) if isinstance(v, Path) else v)
            for k, v in vars(args).items() if k not in skip}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _apply_config_file(argv)
        args = build_parser().parse_args(argv)
        handler = {"fit": cmd_fit, "select": cmd_select, "simulate": cmd_simulate,
                   "ppc": cmd_ppc, "summarize": cmd_summarize}[args.command]
        return handler(args)
    except InputError as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
