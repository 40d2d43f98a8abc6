"""Command line entry point: ``comfp {ingest,synth,train,eval,run,gradcheck}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, read_checkpoint, write_checkpoint
from .evaluation import (
    MODELS,
    comfp_config,
    evaluate_scorer,
    mmsb_config,
    resolve_config,
    run_experiment,
    write_reports,
)
from .mmsb import fit_mmsb, merge_split, score_pairs
from .model import NumericError, fit
from .network import (
    DataError,
    OverlapError,
    ParseError,
    filter_popular_users,
    holdout_split,
    load_manifest,
    read_split,
    sample_negatives,
    write_degree_histogram,
    write_split,
)
from .optim import OptimizationError

log = logging.getLogger("comfp")

EXIT_OK, EXIT_IO, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# flag dest -> config key
_KEYS = {
    "manifest": "manifest",
    "model": "models",
    "k": "K",
    "t": "T",
    "iters": "iterations",
    "seed": "seed",
    "holdout_fraction": "holdout_fraction",
    "split_mode": "split_mode",
    "filter_popular": "filter_popular",
    "eval_pool": "eval_pool",
    "sigma_u": "sigma_u",
    "sigma_d": "sigma_d",
    "sigma_mh": "sigma_mh",
    "hyper_period": "hyper_period",
    "tol": "tol",
    "degree_cap": "degree_cap",
}


def _data_flags(p):
    p.add_argument("--manifest", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--holdout-fraction", type=float)
    p.add_argument("--split-mode", choices=["temporal", "uniform"])
    p.add_argument("--filter-popular", action="store_true", default=None)
    p.add_argument("--eval-pool", type=int)


def _model_flags(p, many=False):
    if many:
        p.add_argument("--model", action="append", choices=MODELS, help="repeatable; default all three")
    else:
        p.add_argument("--model", choices=MODELS, required=False)
    p.add_argument("--k", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--sigma-u", type=float)
    p.add_argument("--sigma-d", type=float)
    p.add_argument("--sigma-mh", type=float)
    p.add_argument("--hyper-period", type=int)
    p.add_argument("--tol", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="comfp")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a manifest; optionally split it and draw negatives")
    p.add_argument("--config", type=Path)
    _data_flags(p)
    p.add_argument("--out-dir", type=Path, help="write split, histograms and summary here")

    p = sub.add_parser("synth", help="generate a planted sparse/dense composite")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--t", type=int, default=4)
    p.add_argument("--density-ratio", type=float, default=5.0)
    p.add_argument("--overlap", type=float, default=1.0)
    p.add_argument("--candidates", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("train", help="fit one model and write a checkpoint")
    p.add_argument("--config", type=Path)
    p.add_argument("--split", type=Path, help="split file from ingest (otherwise built from --manifest)")
    _data_flags(p)
    _model_flags(p)
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("eval", help="score a checkpoint on a split's held-out candidates")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", type=Path, required=True)
    p.add_argument("--degree-cap", type=float, default=10)
    p.add_argument("--timing", action="store_true", help="write wall time into report.csv")
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("run", help="full experiment: split, train all models, evaluate")
    p.add_argument("--config", type=Path)
    _data_flags(p)
    _model_flags(p, many=True)
    p.add_argument("--degree-cap", type=float)
    p.add_argument("--timing", action="store_true")
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradients")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    return ap


def merged_config(args) -> dict:
    """Config file values overridden by any flag that was given."""
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        if cfg.get("manifest"):
            cfg["manifest"] = str((Path(args.config).parent / cfg["manifest"]).resolve())
    for dest, key in _KEYS.items():
        val = getattr(args, dest, None)
        if val is None:
            continue
        if dest == "model" and isinstance(val, str):
            val = [val]
        cfg[key] = str(val) if isinstance(val, Path) else val
    return cfg


def _make_split(cfg: dict):
    if not cfg.get("manifest"):
        raise DataError("a manifest is required (--manifest or config file)")
    net = load_manifest(cfg["manifest"])
    if cfg["filter_popular"]:
        net = filter_popular_users(net)
    split = holdout_split(net, cfg["holdout_fraction"], cfg["split_mode"], cfg["seed"])
    return net, sample_negatives(net, split, cfg["eval_pool"], cfg["seed"] + 1)


def cmd_ingest(args) -> int:
    cfg = resolve_config(merged_config(args))
    if not cfg.get("manifest"):
        raise DataError("a manifest is required (--manifest or config file)")
    net = load_manifest(cfg["manifest"])
    stats = {
        "users": net.n,
        "layers": {g.name: {"members": len(g.members), "dyads": g.m, "self_loops_skipped": g.skipped_self_loops}
                   for g in net.layers},
        "overlaps": {f"{a}|{b}": v for (a, b), v in net.overlap_sizes().items()},
    }
    print(f"n={net.n} N={net.N}")
    for name, s in stats["layers"].items():
        print(f"layer {name}: {s['dyads']} dyads, {s['members']} members")
    for pair, v in stats["overlaps"].items():
        print(f"overlap {pair}: {v}")
    if args.out_dir is None:
        return EXIT_OK
    if cfg["filter_popular"]:
        net = filter_popular_users(net)
    split = holdout_split(net, cfg["holdout_fraction"], cfg["split_mode"], cfg["seed"])
    split = sample_negatives(net, split, cfg["eval_pool"], cfg["seed"] + 1)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_split(split, out / "split.txt", net.roster, _split_echo(cfg))
    for g in net.layers:
        write_degree_histogram(g, out / f"degree_{g.name}.csv")
    with open(out / "ingest.json", "w", encoding="utf-8") as fh:
        json.dump({"config": _split_echo(cfg), **stats}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def _split_echo(cfg):
    keys = ("manifest", "seed", "holdout_fraction", "split_mode", "filter_popular", "eval_pool")
    return {k: cfg.get(k) for k in keys}


def cmd_synth(args) -> int:
    from .synth import plant_sparse_dense_pair, write_dataset

    net, truth = plant_sparse_dense_pair(args.n, args.k, args.t, args.density_ratio, args.overlap,
                                         seed=args.seed, candidates=args.candidates)
    paths = write_dataset(net, truth, args.out_dir)
    print(f"wrote {paths['manifest']}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(merged_config(args))
    model = args.model or cfg["models"][0]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.split:
        split, roster, _ = read_split(args.split)
    else:
        net, split = _make_split(cfg)
        write_split(split, out / "split.txt", net.roster, _split_echo(cfg))
    cfg = {**cfg, "models": [model]}
    echo = {k: v for k, v in cfg.items() if k not in ("manifest",)}
    t0 = time.perf_counter()
    if model == "comfp":
        res = fit(split, comfp_config(cfg))
        ckpt = Checkpoint(model, res.estimates, echo, res.hyper.x, res.hyper.lam)
        trace = list(zip(res.log_density, res.mh_accept, res.seconds))
    else:
        data = merge_split(split) if model == "mmsb-c" else split
        res = fit_mmsb(data, mmsb_config(cfg))
        ckpt = Checkpoint(model, res.estimates, echo)
        trace = [(v, float("nan"), t) for v, t in zip(res.log_joint, res.seconds)]
    write_checkpoint(ckpt, out / f"checkpoint_{model}.txt")
    with open(out / f"trace_{model}.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "log_density", "mh_accept_rate", "seconds"])
        for it, (v, a, t) in enumerate(trace, 1):
            w.writerow([it, f"{v:.17g}", "" if np.isnan(a) else f"{a:.6f}", f"{t:.6f}"])
    print(f"{model}: {len(trace)} iterations in {time.perf_counter() - t0:.1f}s -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = read_checkpoint(args.checkpoint)
    split, _, split_cfg = read_split(args.split)
    est = ckpt.estimates
    if ckpt.model == "mmsb-c":
        scorer = lambda pairs, d: score_pairs(est, pairs, 0)  # noqa: E731
    else:
        if list(est.layer_names) != list(split.layer_names):
            raise DataError(f"checkpoint layers {est.layer_names} do not match split layers {split.layer_names}")
        scorer = lambda pairs, d: score_pairs(est, pairs, d)  # noqa: E731
    t0 = time.perf_counter()
    reports = evaluate_scorer(ckpt.model, scorer, split, args.degree_cap, 0.0)
    for r in reports:
        r.seconds = time.perf_counter() - t0
    config = {"model": ckpt.model, "train": ckpt.config, "split": split_cfg, "degree_cap": args.degree_cap}
    write_reports(reports, args.out_dir, config, timing=args.timing)
    for r in reports:
        print(f"{r.model}\t{r.layer}\tMAP={r.map:.4f}\tlong-tail={r.long_tail_map:.4f}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = merged_config(args)
    if args.degree_cap is not None:
        cfg["degree_cap"] = args.degree_cap
    reports = run_experiment(cfg, args.out_dir, timing=args.timing)
    for r in reports:
        print(f"{r.model}\t{r.layer}\tMAP={r.map:.4f}\tlong-tail={r.long_tail_map:.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import check_gradients

    res = check_gradients(args.instances, args.seed)
    print("instance\tlambda_rel_err\tx_rel_err")
    for k, (a, b) in enumerate(zip(res.lam_errors, res.x_errors)):
        print(f"{k}\t{a:.3e}\t{b:.3e}")
    print(f"max\t{max(res.lam_errors):.3e}\t{max(res.x_errors):.3e}")
    return EXIT_OK if res.worst < args.tol else EXIT_NUMERIC


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "run": cmd_run,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ParseError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DataError, OverlapError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, OptimizationError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
