"""Composite network data model: ingestion, hold-out splits, negatives, degrees.

Dyads are undirected and binary; they are stored canonically as ``(i, j)``
with ``i < j`` over dense internal user indices.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .numerics import make_rng

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Input data violates a data-model invariant."""


class ParseError(DataError):
    pass


class OverlapError(DataError):
    """Two layers share no users."""

    def __init__(self, first: str, second: str):
        super().__init__(f"layers {first!r} and {second!r} share no users")
        self.layers = (first, second)


class InfeasibleError(DataError):
    """Not enough non-edges to draw the requested negatives."""


def canon(i: int, j: int) -> tuple:
    return (i, j) if i < j else (j, i)


@dataclass
class LayerGraph:
    """One layer.  Before assembly, endpoints are external labels."""

    name: str
    dyads: set
    members: set
    timestamps: Optional[dict] = None
    skipped_self_loops: int = 0

    @property
    def m(self) -> int:
        return len(self.dyads)

    def sorted_dyads(self) -> list:
        return sorted(self.dyads)

    def degrees(self) -> dict:
        deg = {u: 0 for u in self.members}
        for i, j in self.dyads:
            deg[i] += 1
            deg[j] += 1
        return deg


@dataclass
class CompositeNetwork:
    roster: list  # external labels; position is the internal index
    layers: list  # LayerGraph over internal indices

    @property
    def n(self) -> int:
        return len(self.roster)

    @property
    def N(self) -> int:
        return len(self.layers)

    def layer_names(self) -> list:
        return [g.name for g in self.layers]

    def index(self) -> dict:
        return {lab: k for k, lab in enumerate(self.roster)}

    def total_degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for g in self.layers:
            for i, j in g.dyads:
                deg[i] += 1
                deg[j] += 1
        return deg

    def overlap_sizes(self) -> dict:
        out = {}
        for a in range(self.N):
            for b in range(a + 1, self.N):
                out[(self.layers[a].name, self.layers[b].name)] = len(
                    self.layers[a].members & self.layers[b].members
                )
        return out

    def decompose(self) -> list:
        """Layers with external labels, the inverse of :func:`assemble_composite`."""
        out = []
        for g in self.layers:
            lab = self.roster
            dyads = {canon_label(lab[i], lab[j]) for i, j in g.dyads}
            ts = None
            if g.timestamps is not None:
                ts = {canon_label(lab[i], lab[j]): t for (i, j), t in g.timestamps.items()}
            out.append(LayerGraph(g.name, dyads, {lab[u] for u in g.members}, ts))
        return out


def canon_label(a: str, b: str) -> tuple:
    return (a, b) if a < b else (b, a)


def load_edge_list(path, has_timestamps: bool = False, name: Optional[str] = None) -> LayerGraph:
    """Read a ``src<TAB>dst[<TAB>timestamp]`` file into a label-keyed layer.

    Repeated interactions collapse to one dyad; with timestamps the earliest
    one is kept.  Self-loops are skipped and counted.
    """
    path = Path(path)
    dyads: set = set()
    members: set = set()
    ts: Optional[dict] = {} if has_timestamps else None
    loops = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            want = 3 if has_timestamps else 2
            if len(parts) != want or not parts[0] or not parts[1]:
                raise ParseError(f"{path}:{lineno}: expected {want} tab-separated fields")
            a, b = parts[0], parts[1]
            if a == b:
                loops += 1
                continue
            key = canon_label(a, b)
            if has_timestamps:
                try:
                    t = int(parts[2])
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: bad timestamp {parts[2]!r}") from None
                if key not in ts or t < ts[key]:
                    ts[key] = t
            dyads.add(key)
            members.update(key)
    if loops:
        log.warning("%s: skipped %d self-loop line(s)", path, loops)
    return LayerGraph(name or path.stem, dyads, members, ts, loops)


def write_edge_list(layer: LayerGraph, path, roster: Optional[list] = None) -> None:
    """Inverse of :func:`load_edge_list`; ``roster`` maps internal indices to labels."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# layer {layer.name}\n")
        for d in layer.sorted_dyads():
            a, b = (roster[d[0]], roster[d[1]]) if roster is not None else d
            if layer.timestamps is not None:
                fh.write(f"{a}\t{b}\t{layer.timestamps[d]}\n")
            else:
                fh.write(f"{a}\t{b}\n")


def assemble_composite(layers: list, validate: bool = True) -> CompositeNetwork:
    """Merge label-keyed layers into one roster with dense internal indices."""
    if not layers:
        raise DataError("a composite network needs at least one layer")
    labels = sorted(set().union(*(g.members for g in layers)))
    idx = {lab: k for k, lab in enumerate(labels)}
    out = []
    for g in layers:
        dyads = {canon(idx[a], idx[b]) for a, b in g.dyads}
        ts = None
        if g.timestamps is not None:
            ts = {canon(idx[a], idx[b]): t for (a, b), t in g.timestamps.items()}
        out.append(LayerGraph(g.name, dyads, {idx[u] for u in g.members}, ts))
    net = CompositeNetwork(labels, out)
    if validate:
        validate_composite(net)
    return net


def validate_composite(net: CompositeNetwork) -> None:
    for g in net.layers:
        for i, j in g.dyads:
            if i == j:
                raise DataError(f"layer {g.name!r}: self-loop on user {i}")
            if i not in g.members or j not in g.members:
                raise DataError(f"layer {g.name!r}: dyad ({i}, {j}) outside member set")
        if g.members and (min(g.members) < 0 or max(g.members) >= net.n):
            raise DataError(f"layer {g.name!r}: member outside roster")
    for a in range(net.N):
        for b in range(a + 1, net.N):
            if not net.layers[a].members & net.layers[b].members:
                raise OverlapError(net.layers[a].name, net.layers[b].name)


def load_manifest(path) -> CompositeNetwork:
    """Read a JSON manifest ``{"layers": [{"name", "path", "timestamps"}]}``.

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    if "layers" not in spec or not spec["layers"]:
        raise ParseError(f"{path}: manifest lists no layers")
    layers = []
    for entry in spec["layers"]:
        p = Path(entry["path"])
        if not p.is_absolute():
            p = path.parent / p
        layers.append(load_edge_list(p, bool(entry.get("timestamps", False)), entry.get("name")))
    return assemble_composite(layers)


def write_manifest(path, entries: list) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"layers": entries}, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- splitting


@dataclass
class LayerSplit:
    train_pos: np.ndarray  # (m, 2) int, canonical dyads
    heldout_pos: np.ndarray
    train_neg: np.ndarray
    # eval negatives are owned by a user: column 0 is the owner, column 1 the
    # candidate partner (not canonicalised)
    eval_neg: np.ndarray

    def observed(self) -> set:
        return set(map(tuple, self.train_pos.tolist())) | set(map(tuple, self.heldout_pos.tolist()))


def _empty_pairs():
    return np.zeros((0, 2), dtype=np.int64)


@dataclass
class TrainTestSplit:
    n: int
    layer_names: list
    layers: list  # LayerSplit per layer
    members: list = field(default_factory=list)  # sorted member arrays per layer

    @property
    def N(self) -> int:
        return len(self.layers)


def _as_pairs(dyads: Iterable) -> np.ndarray:
    arr = np.array(sorted(dyads), dtype=np.int64)
    return arr.reshape(-1, 2)


def holdout_split(net: CompositeNetwork, fraction: float = 0.1, mode: str = "temporal", seed: int = 0) -> TrainTestSplit:
    """Hold out ceil(fraction * m_d) dyads per layer (latest first, or uniformly)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("holdout fraction must lie in (0, 1)")
    if mode not in ("temporal", "uniform"):
        raise ValueError(f"unknown split mode {mode!r}")
    rng = make_rng(seed)
    out = []
    for g in net.layers:
        dyads = g.sorted_dyads()
        k = math.ceil(fraction * len(dyads)) if dyads else 0
        if mode == "temporal":
            if g.timestamps is None or any(d not in g.timestamps for d in dyads):
                raise DataError(f"layer {g.name!r}: temporal split needs a timestamp on every dyad")
            order = sorted(range(len(dyads)), key=lambda a: (g.timestamps[dyads[a]], dyads[a]))
            held = set(order[len(dyads) - k:])
        else:
            held = set(rng.permutation(len(dyads))[:k].tolist()) if k else set()
        train = [d for a, d in enumerate(dyads) if a not in held]
        test = [dyads[a] for a in sorted(held)]
        out.append(LayerSplit(_as_pairs(train), _as_pairs(test), _empty_pairs(), _empty_pairs()))
    members = [np.array(sorted(g.members), dtype=np.int64) for g in net.layers]
    return TrainTestSplit(net.n, net.layer_names(), out, members)


def _pair_index(i, j, n):
    return i * n + j


def sample_negatives(net: CompositeNetwork, split: TrainTestSplit, eval_pool_per_user: int = 100, seed: int = 0) -> TrainTestSplit:
    """Attach train negatives (|train_pos| of them) and per-user eval negatives.

    Negatives are drawn uniformly among non-observed dyads of the layer's
    member set.  Eval negatives come first and are excluded from the train
    negatives, keeping the four sets disjoint.
    """
    rng = make_rng(seed)
    out = []
    for d, (g, ls) in enumerate(zip(net.layers, split.layers)):
        if len(ls.train_pos) == 0:
            raise DataError(f"layer {g.name!r}: no train positives")
        mem = np.array(sorted(g.members), dtype=np.int64)
        nm = len(mem)
        n = net.n
        observed = {_pair_index(i, j, n) for i, j in g.dyads}
        taken = set(observed)

        # eval pools, one per user with a held-out positive
        users = sorted(set(ls.heldout_pos.ravel().tolist()))
        adj: dict = {}
        for i, j in g.dyads:
            adj.setdefault(i, set()).add(j)
            adj.setdefault(j, set()).add(i)
        rows = []
        for u in users:
            avail = nm - 1 - len(adj.get(u, ()))
            if avail < eval_pool_per_user:
                raise InfeasibleError(
                    f"layer {g.name!r}: user {u} has {avail} non-neighbours, "
                    f"{eval_pool_per_user} eval negatives requested"
                )
            chosen: list = []
            seen = set()
            if eval_pool_per_user * 2 > avail:
                cand = [v for v in mem.tolist() if v != u and v not in adj.get(u, ())]
                pick = rng.permutation(len(cand))[:eval_pool_per_user]
                chosen = [cand[a] for a in sorted(pick.tolist())]
            else:
                while len(chosen) < eval_pool_per_user:
                    v = int(mem[rng.integers(nm)])
                    if v == u or v in seen or v in adj.get(u, ()):
                        continue
                    seen.add(v)
                    chosen.append(v)
            for v in chosen:
                rows.append((u, v))
                a, b = canon(u, v)
                taken.add(_pair_index(a, b, n))
        eval_neg = np.array(rows, dtype=np.int64).reshape(-1, 2)

        want = len(ls.train_pos)
        free = nm * (nm - 1) // 2 - len(taken)
        if free < want:
            raise InfeasibleError(f"layer {g.name!r}: {free} free dyads, {want} train negatives requested")
        neg = []
        if want * 2 > free:
            for a in range(nm):
                for b in range(a + 1, nm):
                    key = _pair_index(int(mem[a]), int(mem[b]), n)
                    if key not in taken:
                        neg.append(key)
            pick = rng.permutation(len(neg))[:want]
            neg = [neg[a] for a in pick.tolist()]
        else:
            picked = set()
            while len(neg) < want:
                a, b = rng.integers(nm, size=2)
                if a == b:
                    continue
                i, j = canon(int(mem[a]), int(mem[b]))
                key = _pair_index(i, j, n)
                if key in taken or key in picked:
                    continue
                picked.add(key)
                neg.append(key)
        neg.sort()
        train_neg = np.array([(k // n, k % n) for k in neg], dtype=np.int64).reshape(-1, 2)
        out.append(LayerSplit(ls.train_pos, ls.heldout_pos, train_neg, eval_neg))
    return TrainTestSplit(split.n, list(split.layer_names), out, list(split.members))


def filter_popular_users(net: CompositeNetwork) -> CompositeNetwork:
    """Drop users whose degree summed over layers exceeds mean + 1 population std."""
    deg = net.total_degrees()
    if net.n == 0:
        return net
    thresh = deg.mean() + deg.std()
    keep = [u for u in range(net.n) if deg[u] <= thresh]
    if len(keep) == net.n:
        return net
    new = {u: k for k, u in enumerate(keep)}
    layers = []
    for g in net.layers:
        dyads = {(new[i], new[j]) for i, j in g.dyads if i in new and j in new}
        ts = None
        if g.timestamps is not None:
            ts = {(new[i], new[j]): t for (i, j), t in g.timestamps.items() if i in new and j in new}
        layers.append(LayerGraph(g.name, dyads, {new[u] for u in g.members if u in new}, ts))
    return CompositeNetwork([net.roster[u] for u in keep], layers)


def degree_histogram(layer: LayerGraph) -> dict:
    """Degree -> number of members with that degree."""
    hist: dict = {}
    for deg in layer.degrees().values():
        hist[deg] = hist.get(deg, 0) + 1
    return dict(sorted(hist.items()))


def write_degree_histogram(layer: LayerGraph, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["degree", "count"])
        for k, v in degree_histogram(layer).items():
            w.writerow([k, v])


# -------------------------------------------------------------- split files

SPLIT_VERSION = "comfp-split v1"


def write_split(split: TrainTestSplit, path, roster: Optional[list] = None, config: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {SPLIT_VERSION}\n")
        fh.write("config " + json.dumps(config or {}, sort_keys=True) + "\n")
        fh.write(f"n {split.n}\n")
        if roster is not None:
            fh.write("roster " + json.dumps(list(roster)) + "\n")
        for name, ls, mem in zip(split.layer_names, split.layers, split.members):
            fh.write(f"layer {name}\n")
            fh.write("members " + " ".join(map(str, mem.tolist())) + "\n")
            for key in ("train_pos", "heldout_pos", "train_neg", "eval_neg"):
                arr = getattr(ls, key)
                fh.write(f"{key} {len(arr)}\n")
                for a, b in arr.tolist():
                    fh.write(f"{a} {b}\n")


def read_split(path) -> tuple:
    """Return ``(split, roster, config)`` from a file written by :func:`write_split`."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != f"# {SPLIT_VERSION}":
        raise ParseError(f"{path}: not a {SPLIT_VERSION} file")
    pos = 1
    config, roster, n = {}, None, None
    names, layers, members = [], [], []
    while pos < len(lines):
        head, _, rest = lines[pos].partition(" ")
        pos += 1
        if head == "config":
            config = json.loads(rest)
        elif head == "n":
            n = int(rest)
        elif head == "roster":
            roster = json.loads(rest)
        elif head == "layer":
            names.append(rest)
            _, _, mem = lines[pos].partition(" ")
            members.append(np.array([int(v) for v in mem.split()], dtype=np.int64))
            pos += 1
            parts = {}
            for key in ("train_pos", "heldout_pos", "train_neg", "eval_neg"):
                k, cnt = lines[pos].split()
                if k != key:
                    raise ParseError(f"{path}:{pos + 1}: expected {key}")
                cnt = int(cnt)
                rows = [tuple(map(int, ln.split())) for ln in lines[pos + 1: pos + 1 + cnt]]
                parts[key] = np.array(rows, dtype=np.int64).reshape(-1, 2)
                pos += 1 + cnt
            layers.append(LayerSplit(**parts))
        else:
            raise ParseError(f"{path}:{pos}: unexpected record {head!r}")
    return TrainTestSplit(n, names, layers, members), roster, config
