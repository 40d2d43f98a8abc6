"""Ranking metrics, partition agreement, and the experiment runner."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .mmsb import MmsbConfig, fit_mmsb, merge_split, score_pairs
from .model import ComfpConfig, fit
from .network import (
    TrainTestSplit,
    canon,
    filter_popular_users,
    holdout_split,
    load_manifest,
    sample_negatives,
    write_degree_histogram,
)

log = logging.getLogger(__name__)

MODELS = ("mmsb", "mmsb-c", "comfp")

# scorer(pairs (m, 2) int array, layer index) -> (m,) scores
Scorer = Callable[[np.ndarray, int], np.ndarray]


@dataclass
class RankedCandidates:
    user: int
    pairs: np.ndarray  # (c, 2) canonical dyads
    positive: np.ndarray  # bool (c,)
    scores: Optional[np.ndarray] = None


def average_precision(scores, positive, pairs=None) -> float:
    """Mean over positives of precision at each positive's rank.

    Ranks by descending score; ties fall back to lexicographic dyad order
    (or input order without ``pairs``).  Returns nan with no positives.
    """
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if not positive.any():
        return float("nan")
    if pairs is None:
        order = np.lexsort((np.arange(len(scores)), -scores))
    else:
        pairs = np.asarray(pairs).reshape(-1, 2)
        order = np.lexsort((pairs[:, 1], pairs[:, 0], -scores))
    hits = positive[order]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


def layer_candidates(split: TrainTestSplit, d: int) -> list:
    """Per-user candidate lists: held-out dyads touching the user plus their eval negatives."""
    ls = split.layers[d]
    pos: dict = {}
    for i, j in ls.heldout_pos.tolist():
        pos.setdefault(i, set()).add((i, j))
        pos.setdefault(j, set()).add((i, j))
    neg: dict = {}
    for u, v in ls.eval_neg.tolist():
        neg.setdefault(u, set()).add(canon(u, v))
    out = []
    for u in sorted(pos):
        p = sorted(pos[u])
        q = sorted(neg.get(u, set()) - pos[u])
        pairs = np.array(p + q, dtype=np.int64).reshape(-1, 2)
        flags = np.zeros(len(pairs), dtype=bool)
        flags[: len(p)] = True
        out.append(RankedCandidates(u, pairs, flags))
    return out


def candidate_hash(split: TrainTestSplit, d: int) -> str:
    h = hashlib.sha256()
    for rc in layer_candidates(split, d):
        h.update(np.int64(rc.user).tobytes())
        h.update(rc.pairs.tobytes())
        h.update(rc.positive.tobytes())
    return h.hexdigest()


def train_degrees(split: TrainTestSplit, d: int) -> np.ndarray:
    deg = np.zeros(split.n, dtype=np.int64)
    tp = split.layers[d].train_pos
    np.add.at(deg, tp.ravel(), 1)
    return deg


def user_average_precisions(scorer: Scorer, split: TrainTestSplit, d: int) -> dict:
    cands = layer_candidates(split, d)
    if not cands:
        return {}
    allpairs = np.concatenate([c.pairs for c in cands])
    allscores = np.asarray(scorer(allpairs, d), dtype=float)
    out, pos = {}, 0
    for c in cands:
        s = allscores[pos: pos + len(c.pairs)]
        pos += len(c.pairs)
        out[c.user] = average_precision(s, c.positive, c.pairs)
    return out


def map_score(scorer: Scorer, split: TrainTestSplit) -> dict:
    """Layer name -> MAP over users holding at least one held-out positive."""
    out = {}
    for d, name in enumerate(split.layer_names):
        aps = user_average_precisions(scorer, split, d)
        if not aps:
            log.info("layer %s has no held-out positives; omitted", name)
            continue
        out[name] = float(np.mean(list(aps.values())))
    return out


def long_tail_map(scorer: Scorer, split: TrainTestSplit, degree_cap: float = 10) -> dict:
    """MAP restricted to users whose train degree in the layer is below ``degree_cap``."""
    out = {}
    for d, name in enumerate(split.layer_names):
        aps = user_average_precisions(scorer, split, d)
        deg = train_degrees(split, d)
        keep = [ap for u, ap in aps.items() if deg[u] < degree_cap]
        if not keep:
            log.info("layer %s has no users below degree %s; omitted", name, degree_cap)
            continue
        out[name] = float(np.mean(keep))
    return out


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def partition_agreement(a, b) -> float:
    """Normalised mutual information (arithmetic-mean normalisation)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("label vectors differ in length")
    if a.size == 0:
        return 1.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)
    ha = _entropy(table.sum(axis=1))
    hb = _entropy(table.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    pij = table / a.size
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / a.size**2
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / outer[nz])))
    return float(min(1.0, max(0.0, mi / (0.5 * (ha + hb)))))


# ----------------------------------------------------------------- runner


@dataclass
class EvalReport:
    model: str
    layer: str
    map: float
    long_tail_map: float
    n_users: int
    n_long_tail: int
    seconds: float
    candidate_hash: str
    user_ap: dict = field(default_factory=dict)


def evaluate_scorer(model: str, scorer: Scorer, split: TrainTestSplit, degree_cap: float = 10,
                    seconds: float = 0.0) -> list:
    reports = []
    for d, name in enumerate(split.layer_names):
        aps = user_average_precisions(scorer, split, d)
        if not aps:
            log.info("layer %s has no held-out positives; omitted", name)
            continue
        deg = train_degrees(split, d)
        tail = [ap for u, ap in aps.items() if deg[u] < degree_cap]
        reports.append(EvalReport(
            model, name, float(np.mean(list(aps.values()))),
            float(np.mean(tail)) if tail else float("nan"),
            len(aps), len(tail), seconds, candidate_hash(split, d), aps,
        ))
    return reports


REPORT_COLUMNS = ["model", "layer", "map", "long_tail_map", "n_users_evaluated", "seconds"]


def _fmt(v: float) -> str:
    return "nan" if isinstance(v, float) and math.isnan(v) else f"{v:.17g}"


def write_reports(reports: list, out_dir, config: dict, timing: bool = False) -> None:
    """report.csv, timing.csv and summary.json.

    Wall-clock seconds go to report.csv only when ``timing`` is set so that
    the default report is byte-reproducible; timing.csv always has them.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("# config " + json.dumps(config, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow([r.model, r.layer, _fmt(r.map), _fmt(r.long_tail_map), r.n_users,
                        _fmt(r.seconds) if timing else ""])
    with open(out / "timing.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "layer", "seconds"])
        for r in reports:
            w.writerow([r.model, r.layer, f"{r.seconds:.6f}"])
    summary = {
        "config": config,
        "results": [
            {
                "model": r.model,
                "layer": r.layer,
                "map": None if math.isnan(r.map) else r.map,
                "long_tail_map": None if math.isnan(r.long_tail_map) else r.long_tail_map,
                "n_users_evaluated": r.n_users,
                "n_long_tail_users": r.n_long_tail,
                "candidate_hash": r.candidate_hash,
            }
            for r in reports
        ],
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report(path) -> list:
    with open(path, encoding="utf-8") as fh:
        rows = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(rows))


DEFAULTS = {
    "models": list(MODELS),
    "K": 25,
    "T": 25,
    "iterations": 500,
    "seed": 0,
    "holdout_fraction": 0.1,
    "split_mode": "temporal",
    "filter_popular": False,
    "eval_pool": 100,
    "sigma_u": 1.0,
    "sigma_d": 1.0,
    "sigma_mh": 0.05,
    "hyper_period": 10,
    "lbfgs_iters": 10,
    "tol": 1e-4,
    "degree_cap": 10,
    "alpha0": None,
    "gamma0": 1.0,
    "gamma1": 1.0,
}


def resolve_config(config: dict) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update({k: v for k, v in config.items() if v is not None})
    bad = set(cfg["models"]) - set(MODELS)
    if bad:
        raise ValueError(f"unknown model(s): {sorted(bad)}")
    return cfg


def prepare_data(cfg: dict):
    """Load or generate the composite, then filter, split and draw negatives."""
    truth = None
    if cfg.get("manifest"):
        net = load_manifest(cfg["manifest"])
    elif cfg.get("synth"):
        from .synth import plant_sparse_dense_pair

        s = dict(cfg["synth"])
        net, truth = plant_sparse_dense_pair(
            s.pop("n"), s.pop("K"), s.pop("T"), s.pop("density_ratio"), s.pop("overlap_fraction"),
            seed=s.pop("seed", cfg["seed"]), **s)
    else:
        raise ValueError("experiment needs a 'manifest' or a 'synth' section")
    if cfg["filter_popular"]:
        net = filter_popular_users(net)
        truth = None  # indices no longer line up with the plant
    split = holdout_split(net, cfg["holdout_fraction"], cfg["split_mode"], cfg["seed"])
    split = sample_negatives(net, split, cfg["eval_pool"], cfg["seed"] + 1)
    return net, split, truth


def mmsb_config(cfg: dict) -> MmsbConfig:
    return MmsbConfig(K=cfg["K"], alpha0=cfg["alpha0"], gamma0=cfg["gamma0"], gamma1=cfg["gamma1"],
                      iterations=cfg["iterations"], seed=cfg["seed"])


def comfp_config(cfg: dict) -> ComfpConfig:
    return ComfpConfig(T=cfg["T"], K=cfg["K"], iterations=cfg["iterations"], hyper_period=cfg["hyper_period"],
                       lbfgs_iters=cfg["lbfgs_iters"], sigma_u=cfg["sigma_u"], sigma_d=cfg["sigma_d"],
                       sigma_mh=cfg["sigma_mh"], seed=cfg["seed"], tol=cfg["tol"])


def train_model(model: str, split: TrainTestSplit, cfg: dict):
    """Fit one model; returns ``(scorer, fitted object)``."""
    if model == "mmsb":
        res = fit_mmsb(split, mmsb_config(cfg))
        return (lambda pairs, d: score_pairs(res.estimates, pairs, d)), res
    if model == "mmsb-c":
        res = fit_mmsb(merge_split(split), mmsb_config(cfg))
        return (lambda pairs, d: score_pairs(res.estimates, pairs, 0)), res
    if model == "comfp":
        res = fit(split, comfp_config(cfg))
        return (lambda pairs, d: score_pairs(res.estimates, pairs, d)), res
    raise ValueError(f"unknown model {model!r}")


def run_experiment(config: dict, out_dir=None, timing: bool = False) -> list:
    """Data -> split -> negatives -> train each model -> score -> metrics -> reports."""
    cfg = resolve_config(config)
    net, split, _ = prepare_data(cfg)
    reports = []
    failed = []
    for model in cfg["models"]:
        t0 = time.perf_counter()
        try:
            scorer, _ = train_model(model, split, cfg)
        except Exception as exc:  # flush what we have, then re-raise
            failed.append(model)
            log.error("model %s failed: %s", model, exc)
            if out_dir is not None:
                write_reports(reports, out_dir, {**_echo(cfg), "failed_models": failed}, timing)
            raise
        reports.extend(evaluate_scorer(model, scorer, split, cfg["degree_cap"], time.perf_counter() - t0))
    if out_dir is not None:
        write_reports(reports, out_dir, _echo(cfg), timing)
        for g in net.layers:
            write_degree_histogram(g, Path(out_dir) / f"degree_{g.name}.csv")
    return reports


def _echo(cfg: dict) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}
