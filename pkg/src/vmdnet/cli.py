"""Command-line front end.

Exit status: 0 on success, 1 on runtime/data failures, 2 on usage or
configuration errors.  Every command writes only inside its ``--out``
directory and leaves a ``manifest.json`` there.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .config import load_config
from .errors import ConfigError, InputError, UsageError, VmdnetError
from .model import load_checkpoint, save_checkpoint
from .pipeline.experiment import (
    VARIANTS,
    AblationSpec,
    HyperParams,
    apply_vmd,
    cross_validate,
    fit_and_score,
    fold_seed_table,
    read_comparison_table,
    run_ablation,
    write_comparison_table,
)
from .pipeline.metrics import aggregate, evaluate
from .pipeline.preprocess import prepare_dataset, prepare_unseen
from .pipeline.synth import STRONG_SEPARATION, SynthConfig, synth_generate
from .pipeline.table import format_float, load_csv, write_csv
from .pipeline.training import stratified_holdout
from .pso import hp_objective, pso_optimize
from .core import derive_seed
from .vmd import VmdConfig, vmd_decompose, vmd_reconstruct

log = logging.getLogger("vmdnet")


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


# ----------------------------------------------------------------------------
# output helpers


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_roc_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "fpr", "tpr", "threshold"])
        for fold, rep in reports:
            for fpr, tpr, thr in rep.roc_points:
                w.writerow([fold, format_float(fpr), format_float(tpr), format_float(thr)])


def _outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def write_manifest(out, command, args, seeds, started, config_path=None):
    write_json(os.path.join(out, "manifest.json"), {
        "command": command,
        "argv": sys.argv[1:],
        "config_path": None if config_path is None else os.path.abspath(config_path),
        "seeds": seeds,
        "output_dir": os.path.abspath(out),
        "tool_version": __version__,
        "wall_clock_seconds": time.time() - started,
    })


# ----------------------------------------------------------------------------
# shared run setup


def _overrides(args):
    o = {}
    if getattr(args, "seed", None) is not None:
        o["seed"] = args.seed
    if getattr(args, "variant", None):
        o["variant"] = args.variant
    proto = {}
    if getattr(args, "epochs", None) is not None:
        proto["max_epochs"] = args.epochs
    if getattr(args, "folds", None) is not None:
        proto["k_folds"] = args.folds
    if proto:
        o["protocol"] = proto
    return o


def _load_run(args, extra=None):
    overrides = _overrides(args)
    overrides.update(extra or {})
    cfg = load_config(args.config, overrides)
    if cfg.data_path is None:
        raise ConfigError("config has no data.path")
    if not os.path.isfile(cfg.data_path):
        raise ConfigError(f"data file not found: {cfg.data_path}")
    if not cfg.groups:
        raise ConfigError("config has no modality groups")
    table = load_csv(cfg.data_path, label=cfg.label, kinds=cfg.kinds, missing_token=cfg.missing_token)
    data = prepare_dataset(
        table, cfg.groups, impute_missing=cfg.preprocessing["impute"],
        remove_outliers=cfg.preprocessing["remove_outliers"], normalize=cfg.preprocessing["normalize"],
    )
    if cfg.vmd_columns is not None:
        for c in cfg.vmd_columns:
            if c not in data.columns:
                raise ConfigError(f"vmd.columns names unknown column {c!r}")
    return cfg, data


def _checkpoint_extra(cfg, hp, spec):
    return {
        "variant": spec.variant,
        "hyperparameters": hp.to_dict(),
        "vmd": {"columns": cfg.vmd_columns, "alpha": cfg.vmd.alpha, "tau": cfg.vmd.tau,
                "tol": cfg.vmd.tol, "max_iter": cfg.vmd.max_iter, "init_scheme": cfg.vmd.init_scheme},
        "label": cfg.label,
        "missing_token": cfg.missing_token,
        "kinds": cfg.kinds,
        "threshold": cfg.protocol.threshold,
    }


def _write_cv_outputs(out, cfg, data, hp, spec, results, agg):
    folds = []
    for r in results:
        folds.append({"fold": r.fold, **r.report.summary(),
                      "best_epoch": r.history.best_epoch, "epochs_run": r.history.stopped_epoch})
    write_json(os.path.join(out, "metrics.json"), {
        "variant": spec.variant,
        "hyperparameters": hp.to_dict(),
        "folds": folds,
        "aggregate": agg,
    })
    write_json(os.path.join(out, "confusion.json"), {
        "folds": [{"fold": r.fold, **r.report.confusion()} for r in results],
        "total": {k: sum(r.report.confusion()[k] for r in results) for k in ("tp", "fp", "tn", "fn")},
    })
    write_roc_csv(os.path.join(out, "roc_points.csv"), [(r.fold, r.report) for r in results])
    ckdir = _outdir(os.path.join(out, "checkpoints"))
    for r in results:
        save_checkpoint(os.path.join(ckdir, f"fold_{r.fold}.json"), r.config, r.params,
                        preprocessing=data.stats, extra=_checkpoint_extra(cfg, hp, spec))


# ----------------------------------------------------------------------------
# commands


def cmd_decompose(args):
    started = time.time()
    if not os.path.isfile(args.input):
        raise InputError(f"input file not found: {args.input}")
    cfg = VmdConfig(k_modes=args.modes, alpha=args.alpha, tau=args.tau, tol=args.tol,
                    max_iter=args.max_iter, init_scheme=args.init)
    table = load_csv(args.input)
    if args.column is None:
        if len(table.columns) != 1:
            raise UsageError(f"{args.input} has {len(table.columns)} columns; choose one with --column")
        column = table.columns[0]
    else:
        if args.column not in table.values:
            raise UsageError(f"column {args.column!r} not found in {args.input}")
        column = args.column
    if table.kinds[column] != "continuous":
        raise InputError(f"column {column!r} is not numeric")
    signal = table.values[column]
    if np.isnan(signal).any():
        raise InputError(f"column {column!r} has missing values")
    modes = vmd_decompose(signal, cfg)
    recon = vmd_reconstruct(modes)
    err = float(np.linalg.norm(recon - signal) / max(np.linalg.norm(signal), np.finfo(float).tiny))

    out = _outdir(args.out)
    with open(os.path.join(out, "modes.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"mode_{k + 1}" for k in range(cfg.k_modes)])
        for row in modes.modes.T:
            w.writerow([format_float(v) for v in row])
    write_json(os.path.join(out, "modes.json"), {
        "column": column,
        "center_freqs": modes.center_freqs,
        "iterations_used": modes.iterations_used,
        "converged": bool(modes.converged),
        "reconstruction_relative_error": err,
        "config": {"k_modes": cfg.k_modes, "alpha": cfg.alpha, "tau": cfg.tau, "tol": cfg.tol,
                   "max_iter": cfg.max_iter, "init_scheme": cfg.init_scheme},
    })
    write_manifest(out, "decompose", args, {}, started)
    print(f"reconstruction relative error: {format_float(err)}")
    return 0


def cmd_synth(args):
    started = time.time()
    separation = STRONG_SEPARATION if args.strong else args.separation
    cfg = SynthConfig(
        rows=args.rows, positive_fraction=args.positive_fraction, separation=separation,
        informative_fraction=args.informative_fraction, missing_rate=args.missing_rate,
        outlier_rate=args.outlier_rate, seed=args.seed,
    )
    table = synth_generate(cfg)
    out = _outdir(args.out)
    csv_name = "synthetic.csv"
    write_csv(table, os.path.join(out, csv_name))
    write_json(os.path.join(out, "schema.json"), {
        "data": {"path": csv_name, "label": cfg.label_name, "missing_token": "NA"},
        "groups": [[name, cols] for name, cols in cfg.grouping()],
        "kinds": table.kinds,
        "seed": args.seed,
    })
    write_json(os.path.join(out, "generator.json"), {
        "rows": cfg.rows, "positive_fraction": cfg.positive_fraction, "separation": cfg.separation,
        "informative_fraction": cfg.informative_fraction, "missing_rate": cfg.missing_rate,
        "outlier_rate": cfg.outlier_rate, "seed": cfg.seed,
        "informative_columns": table.meta["informative"],
    })
    write_manifest(out, "synth", args, {"seed": args.seed}, started)
    print(f"wrote {table.n_rows} rows to {os.path.join(out, csv_name)}")
    return 0


def cmd_train(args):
    started = time.time()
    cfg, data = _load_run(args)
    results, agg = cross_validate(data, cfg.hp, cfg.spec, cfg.protocol, cfg.seed, args.threads,
                                  cfg.vmd_columns, cfg.vmd)
    out = _outdir(args.out)
    _write_cv_outputs(out, cfg, data, cfg.hp, cfg.spec, results, agg)
    write_manifest(out, "train", args, {"seed": cfg.seed,
                                        "fold_seeds": fold_seed_table(cfg.seed, cfg.protocol.k_folds)},
                   started, args.config)
    auc = agg["auc"]["mean"]
    print(f"mean AUC over {len(results)} folds: {'n/a' if auc is None else format_float(auc)}")
    return 0


def cmd_optimize(args):
    started = time.time()
    extra = {}
    pso = {}
    if args.swarm is not None:
        pso["swarm_size"] = args.swarm
    if args.iterations is not None:
        pso["iterations"] = args.iterations
    if pso:
        extra["pso"] = pso
    cfg, data = _load_run(args, extra)
    names = cfg.space.names
    known = set(HyperParams.__dataclass_fields__)
    bad = [n for n in names if n not in known]
    if bad:
        raise ConfigError(f"search space names unknown hyperparameter(s): {', '.join(bad)}")

    search_seed = derive_seed(cfg.seed, 7)

    def objective(decoded):
        hp = HyperParams(**{**cfg.hp.to_dict(), **decoded})
        return hp_objective(hp, data, cfg.protocol, cfg.spec, search_seed, cfg.vmd_columns, cfg.vmd)

    result = pso_optimize(objective, cfg.space, cfg.pso, threads=args.threads)
    out = _outdir(args.out)
    with open(os.path.join(out, "trace.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "particle"] + names + ["score"])
        for row in result.trace:
            hp = row["hyperparameters"]
            w.writerow([row["iteration"], row["particle"]]
                       + [format_float(hp[n]) if isinstance(hp[n], float) else hp[n] for n in names]
                       + [format_float(row["score"])])
    best_hp = HyperParams(**{**cfg.hp.to_dict(), **result.best_position})
    write_json(os.path.join(out, "best.json"), {
        "best_hyperparameters": best_hp.to_dict(),
        "best_score": result.best_score,
        "evaluations": result.evaluations,
        "history": result.history,
        "warnings": result.warnings,
        "search_space": cfg.space.to_list(),
    })

    # final model at the best hyperparameters, full epoch budget
    results, agg = cross_validate(data, best_hp, cfg.spec, cfg.protocol, cfg.seed, args.threads,
                                  cfg.vmd_columns, cfg.vmd)
    _write_cv_outputs(out, cfg, data, best_hp, cfg.spec, results, agg)
    final_data = apply_vmd(data, best_hp, cfg.vmd_columns, cfg.vmd) if cfg.spec.use_vmd else data
    train_idx, val_idx = stratified_holdout(final_data.labels, cfg.protocol.val_fraction,
                                            derive_seed(cfg.seed, 8))
    params, mcfg, _, report = fit_and_score(final_data, train_idx, val_idx, best_hp, cfg.spec,
                                            cfg.protocol, derive_seed(cfg.seed, 9))
    save_checkpoint(os.path.join(out, "final_model.json"), mcfg, params, preprocessing=data.stats,
                    extra=_checkpoint_extra(cfg, best_hp, cfg.spec))
    write_json(os.path.join(out, "final_report.json"), report.summary())
    write_manifest(out, "optimize", args, {"seed": cfg.seed, "search_seed": search_seed,
                                           "pso_seed": cfg.pso.seed}, started, args.config)
    print(f"best validation AUC {format_float(result.best_score)} at {best_hp.to_dict()}")
    return 0


def cmd_ablate(args):
    started = time.time()
    cfg, data = _load_run(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()] if args.variants else list(VARIANTS)
    specs = [AblationSpec(v) for v in variants]
    rows = run_ablation(data, specs, cfg.hp, cfg.protocol, cfg.seed, args.threads, cfg.vmd_columns, cfg.vmd)
    extra = read_comparison_table(args.baselines) if args.baselines else []
    out = _outdir(args.out)
    write_comparison_table(rows, os.path.join(out, "ablation.csv"), extra)
    write_manifest(out, "ablate", args, {"seed": cfg.seed}, started, args.config)
    for r in rows:
        print(f"{r['variant']:>14}  AUC {'n/a' if r['auc'] is None else format_float(r['auc'])}")
    return 0


def cmd_evaluate(args):
    started = time.time()
    if not os.path.isfile(args.checkpoint):
        raise InputError(f"checkpoint not found: {args.checkpoint}")
    if not os.path.isfile(args.input):
        raise InputError(f"input file not found: {args.input}")
    mcfg, params, stats, extra = load_checkpoint(args.checkpoint)
    table = load_csv(args.input, label=extra.get("label", "label"), kinds=extra.get("kinds"),
                     missing_token=extra.get("missing_token", "NA"))
    data = prepare_unseen(table, stats)
    spec = AblationSpec(extra.get("variant", "bilstm-am-vmd"))
    if spec.use_vmd:
        hp = HyperParams(**extra["hyperparameters"])
        v = extra["vmd"]
        vcfg = VmdConfig(alpha=v["alpha"], tau=v["tau"], tol=v["tol"], max_iter=v["max_iter"],
                         init_scheme=v["init_scheme"])
        data = apply_vmd(data, hp, v.get("columns"), vcfg)
    threshold = args.threshold if args.threshold is not None else extra.get("threshold", 0.5)
    report = evaluate(params, mcfg, data.to_tensor(), data.labels, threshold)
    out = _outdir(args.out)
    write_json(os.path.join(out, "metrics.json"), {"report": report.summary(), "aggregate": aggregate([report])})
    write_json(os.path.join(out, "confusion.json"), report.confusion())
    write_roc_csv(os.path.join(out, "roc_points.csv"), [(0, report)])
    write_manifest(out, "evaluate", args, {}, started)
    print(f"AUC: {'n/a' if report.auc is None else format_float(report.auc)}")
    return 0


# ----------------------------------------------------------------------------
# parser


def _run_args(p, variant=True):
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for folds/particles")
    p.add_argument("--epochs", type=int, help="epoch cap (overrides protocol.max_epochs)")
    p.add_argument("--folds", type=int, help="number of CV folds (overrides protocol.k_folds)")
    if variant:
        p.add_argument("--variant", choices=VARIANTS, help="model variant (overrides the config)")


def build_parser():
    parser = ArgumentParser(prog="vmdnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    p = sub.add_parser("decompose", help="variational mode decomposition of one CSV column")
    p.add_argument("--input", required=True)
    p.add_argument("--column")
    p.add_argument("--modes", type=int, required=True, help="number of modes K >= 1")
    p.add_argument("--alpha", type=float, default=VmdConfig.alpha)
    p.add_argument("--tau", type=float, default=VmdConfig.tau)
    p.add_argument("--tol", type=float, default=VmdConfig.tol)
    p.add_argument("--max-iter", type=int, default=VmdConfig.max_iter)
    p.add_argument("--init", default=VmdConfig.init_scheme, choices=("zero", "uniform-spread", "random"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("synth", help="write a seeded synthetic dataset and its schema")
    p.add_argument("--rows", type=int, default=SynthConfig.rows)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--separation", type=float, default=SynthConfig.separation)
    p.add_argument("--strong", action="store_true", help=f"use separation {STRONG_SEPARATION}")
    p.add_argument("--positive-fraction", type=float, default=SynthConfig.positive_fraction)
    p.add_argument("--informative-fraction", type=float, default=SynthConfig.informative_fraction)
    p.add_argument("--missing-rate", type=float, default=SynthConfig.missing_rate)
    p.add_argument("--outlier-rate", type=float, default=SynthConfig.outlier_rate)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="k-fold training with fixed hyperparameters")
    _run_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("optimize", help="PSO hyperparameter search, then final training")
    _run_args(p)
    p.add_argument("--swarm", type=int, help="swarm size (overrides pso.swarm_size)")
    p.add_argument("--iterations", type=int, help="PSO iterations (overrides pso.iterations)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("ablate", help="compare model variants under identical folds")
    _run_args(p, variant=False)
    p.add_argument("--variants", help=f"comma-separated subset of {', '.join(VARIANTS)}")
    p.add_argument("--baselines", help="CSV of extra comparison rows (same columns)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("evaluate", help="score a saved checkpoint on a labeled CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"vmdnet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except VmdnetError as exc:
        print(f"vmdnet {args.command}: failed: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"vmdnet {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
