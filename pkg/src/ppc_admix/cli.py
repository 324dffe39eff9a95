"""Command-line interface: ``ppc-admix {simulate,fit,replicate,ppc,report}``.

Every command writes into a fresh output directory and records its fully
resolved configuration as ``config.json`` before doing any work. A saved
``config.json`` can be passed back with ``--config`` to repeat the run.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .admixture_em import FitConfig, fit, load_model, save_model
from .discrepancies import (
    BETA_SMOOTHING,
    DEFAULT_LAGS,
    DISCREPANCY_NAMES,
    MAX_SNPS,
    MIN_SHARED,
    PHENOTYPE_DRAWS,
    RISK_IN_POPULATION,
    RISK_OUTSIDE,
)
from .genotype_data import (
    beta_frequencies,
    inject_ld,
    load_dataset,
    separated_frequencies,
    simulate_dataset,
    write_genotypes,
    write_labels,
)
from .ppc_engine import STAR_THRESHOLDS, PpcSpec, load_results, render_report, run_ppc, save_results
from .replicator import dump_replicates, replicate_batch

log = logging.getLogger("ppc_admix")

WORKERS_ENV = "PPC_ADMIX_WORKERS"


class UsageError(Exception):
    pass


def parse_lags(text):
    """Parse ``"1..30"``, ``"1,2,5"`` or a mix such as ``"1..3,10"``."""
    lags = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            lags.extend(range(int(lo), int(hi) + 1))
        else:
            lags.append(int(part))
    if not lags or min(lags) < 1:
        raise argparse.ArgumentTypeError(f"invalid lag set {text!r}")
    return tuple(sorted(set(lags)))


def parse_discrepancies(text):
    names = [s.strip() for s in str(text).split(",") if s.strip()]
    bad = [s for s in names if s not in DISCREPANCY_NAMES]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown discrepancy {', '.join(bad) or repr(text)}; valid names: {', '.join(DISCREPANCY_NAMES)}"
        )
    return tuple(dict.fromkeys(names))


def positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def positive_float(text):
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def _float_list(text):
    return tuple(float(s) for s in str(text).split(","))


def build_parser():
    parser = argparse.ArgumentParser(prog="ppc-admix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="output directory (must not exist or be empty)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", help="load defaults from a saved config.json")
        p.add_argument("--workers", type=positive_int, default=None, help=f"parallel workers (env {WORKERS_ENV})")

    p = sub.add_parser("simulate", help="draw a synthetic dataset from the admixture model")
    common(p)
    p.add_argument("--n", type=positive_int, default=200)
    p.add_argument("--l", type=positive_int, default=1000)
    p.add_argument("--k", type=positive_int, default=2)
    p.add_argument("--alpha", type=positive_float, default=1.0)
    p.add_argument("--gamma", type=positive_float, default=1.0, help="Beta(gamma, gamma) frequency prior")
    p.add_argument("--phi-means", type=_float_list, default=None, help="comma-separated per-population mean frequencies")
    p.add_argument("--phi-concentration", type=positive_float, default=20.0)
    p.add_argument("--inject-ld", type=int, default=None, metavar="BLOCK", help="also write an LD-injected copy")

    p = sub.add_parser("fit", help="fit the admixture model by EM")
    common(p)
    p.add_argument("--genotypes", required=True)
    p.add_argument("--k", type=positive_int, required=True)
    p.add_argument("--iterations", type=positive_int, default=1000)

    p = sub.add_parser("replicate", help="dump posterior predictive replicates")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--replicates", type=positive_int, default=100)

    p = sub.add_parser("ppc", help="run posterior predictive checks")
    common(p)
    p.add_argument("--genotypes", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--model", required=True)
    p.add_argument("--discrepancies", type=parse_discrepancies, default=DISCREPANCY_NAMES)
    p.add_argument("--replicates", type=positive_int, default=None, help="default 100 (30 for ibs)")
    p.add_argument("--lags", type=parse_lags, default=DEFAULT_LAGS, help="e.g. 1..30 or 1,2,5")
    p.add_argument("--max-snps", type=positive_int, default=MAX_SNPS)
    p.add_argument("--min-shared", type=int, default=MIN_SHARED)
    p.add_argument("--ibs-threshold-unit", choices=("alleles", "sites"), default="alleles")
    p.add_argument("--draws", type=positive_int, default=PHENOTYPE_DRAWS)
    p.add_argument("--per-lag-bf", action="store_true", help="one Bayes factor per lag for the mi check")
    p.add_argument("--format", choices=("tsv", "json"), default="tsv")

    p = sub.add_parser("report", help="re-render reports from a saved results.json")
    common(p)
    p.add_argument("--results", required=True)
    p.add_argument("--format", choices=("tsv", "json"), default="tsv")
    return parser


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def _prepare_out(path):
    out = Path(path)
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise UsageError(f"output directory {out} already exists and is not empty")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolved(args):
    """Effective values the command will use, including fixed model constants."""
    if args.command == "simulate":
        return {"alpha": args.alpha, "gamma": args.gamma}
    if args.command == "fit":
        cfg = FitConfig(iterations=args.iterations, seed=args.seed)
        return {
            "iterations": cfg.iterations,
            "alpha": 1.0,
            "gamma": 1.0,
            "init_clamp": list(cfg.init_clamp),
            "update_clamp": list(cfg.update_clamp),
        }
    if args.command == "ppc":
        return {
            "replicates": {
                name: args.replicates or PpcSpec(name).default_replicates for name in args.discrepancies
            },
            "lags": list(args.lags),
            "max_snps": args.max_snps,
            "min_shared": args.min_shared,
            "phenotype_draws": args.draws,
            "phenotype_risk": [RISK_IN_POPULATION, RISK_OUTSIDE],
            "beta_smoothing": BETA_SMOOTHING,
            "star_thresholds": list(STAR_THRESHOLDS),
            "workers": _workers(args),
        }
    return {}


def _echo_config(out, args):
    cfg = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in ("config", "verbose")}
    cfg["resolved"] = _resolved(args)
    cfg["provenance"] = {
        "tool": "ppc-admix",
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    with open(out / "config.json", "w", encoding="ascii", newline="\n") as fh:
        json.dump(cfg, fh, indent=1)
        fh.write("\n")


def _workers(args):
    if args.workers is not None:
        return args.workers
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return positive_int(env)
        except (ValueError, argparse.ArgumentTypeError):
            raise UsageError(f"{WORKERS_ENV} must be a positive integer, got {env!r}")
    return 1


def _write_tsv(path, rows, fmt):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for row in rows:
            fh.write("\t".join(fmt(v) for v in row) + "\n")


def cmd_simulate(args, out):
    if args.phi_means is not None:
        if len(args.phi_means) != args.k:
            raise UsageError(f"--phi-means has {len(args.phi_means)} values for --k {args.k}")
        if not all(0 < m < 1 for m in args.phi_means):
            raise UsageError("--phi-means values must lie in (0, 1)")
        phi_spec = separated_frequencies(args.phi_means, args.phi_concentration)
    else:
        phi_spec = beta_frequencies(args.gamma)
    if args.inject_ld is not None and not 2 <= args.inject_ld <= args.l:
        raise UsageError(f"--inject-ld must be between 2 and --l ({args.l})")
    dataset, truth = simulate_dataset(args.n, args.l, args.k, alpha=args.alpha, phi_spec=phi_spec, seed=args.seed)
    write_genotypes(out / "genotypes.txt", dataset.genotypes)
    write_labels(out / "labels.txt", dataset.labels)
    fmt = lambda v: f"{v:.10g}"
    _write_tsv(out / "theta_true.tsv", truth.theta_true.tolist(), fmt)
    _write_tsv(out / "phi_true.tsv", truth.phi_true.tolist(), fmt)
    _write_tsv(out / "z_true.tsv", (truth.z_true.reshape(args.n, 2 * args.l) + 1).tolist(), str)
    if args.inject_ld is not None:
        write_genotypes(out / "genotypes_ld.txt", inject_ld(dataset, args.inject_ld).genotypes)


def cmd_fit(args, out):
    dataset = load_dataset(args.genotypes)
    fitted = fit(dataset, args.k, FitConfig(iterations=args.iterations, seed=args.seed))
    save_model(fitted, out)


def cmd_replicate(args, out):
    fitted = load_model(args.model)
    dump_replicates(replicate_batch(fitted, args.replicates, args.seed), out)


def cmd_ppc(args, out):
    dataset = load_dataset(args.genotypes, args.labels)
    fitted = load_model(args.model)
    if fitted.z_map.shape[:2] != dataset.genotypes.shape:
        raise UsageError("model and genotype file disagree on dimensions")
    names = list(args.discrepancies)
    if "fst" in names and dataset.labels is None:
        raise UsageError("the fst discrepancy needs --labels")
    workers = _workers(args)
    results = []
    for name in names:
        spec = PpcSpec(
            name,
            lags=args.lags,
            max_snps=args.max_snps,
            min_shared=args.min_shared,
            threshold_unit=args.ibs_threshold_unit,
            draws=args.draws,
            per_lag_bf=args.per_lag_bf,
        )
        log.info("running %s PPC", name)
        results.append(run_ppc(fitted, dataset, spec, R=args.replicates, seed=args.seed, workers=workers))
    save_results(results, out / "results.json")
    render_report(results, out, fmt=args.format)


def cmd_report(args, out):
    render_report(load_results(args.results), out, fmt=args.format)


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "replicate": cmd_replicate,
    "ppc": cmd_ppc,
    "report": cmd_report,
}


def _apply_config(parser, argv):
    """Parse ``argv``, taking defaults from ``--config`` when given."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known_args, _ = pre.parse_known_args(argv)
    if not known_args.config:
        return parser.parse_args(argv)
    with open(known_args.config, encoding="ascii") as fh:
        saved = json.load(fh)
    saved.pop("provenance", None)
    saved.pop("resolved", None)
    command = saved.get("command")
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    if command not in subparsers.choices:
        parser.error(f"{known_args.config}: no valid 'command' entry")
    sub = subparsers.choices[command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in saved.items():
        action = actions.get(key)
        if action is None or key == "out":
            continue
        if isinstance(value, list):
            value = tuple(value)
        defaults[key] = value
        action.required = False
    sub.set_defaults(**defaults)
    args = parser.parse_args(argv)
    if args.command != command:
        parser.error(f"config is for '{command}', not '{args.command}'")
    return args


def main(argv=None):
    parser = build_parser()
    args = _apply_config(parser, argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        out = _prepare_out(args.out)
        _echo_config(out, args)
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        parser.error(str(exc))
    except (ValueError, OSError) as exc:
        print(f"ppc-admix: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
