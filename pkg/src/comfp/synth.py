"""Composite networks sampled from the generative processes with planted parameters."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .network import (
    CompositeNetwork,
    DataError,
    LayerGraph,
    LayerSplit,
    TrainTestSplit,
    assemble_composite,
    write_edge_list,
    write_manifest,
)
from .numerics import make_rng, sample_beta, sample_dirichlet
from .model import compat_prior, hybrid_prior

MAX_RETRIES = 20


@dataclass
class PlantedTruth:
    x: Optional[np.ndarray]
    lam: list
    alpha: list  # (n, K_d) per layer
    pi: list
    B: list
    candidates: list = field(default_factory=list)  # (c, 2) pairs per layer, in draw order
    z: list = field(default_factory=list)  # (c, 2) indicator pairs per layer
    links: list = field(default_factory=list)  # bool (c,) per layer
    members: list = field(default_factory=list)

    def negatives(self, d: int) -> np.ndarray:
        """Candidate pairs that were drawn as non-links."""
        return self.candidates[d][~self.links[d]]

    def labels(self, d: int) -> np.ndarray:
        """Hard community label per user: argmax of the planted membership."""
        return np.argmax(self.pi[d], axis=1)


def user_labels(n: int) -> list:
    width = max(1, len(str(n - 1)))
    return [f"u{k:0{width}d}" for k in range(n)]


def _candidate_pairs(pool: np.ndarray, count: int, rng) -> np.ndarray:
    m = len(pool)
    total = m * (m - 1) // 2
    if count > total:
        raise ValueError(f"{count} candidate dyads requested but only {total} pairs exist")
    lin = rng.choice(total, size=count, replace=False)
    # invert lin = a*(2m - a - 1)/2 + (b - a - 1) over a < b
    a = (2 * m - 1 - np.sqrt((2 * m - 1) ** 2 - 8 * lin.astype(float))) // 2
    a = a.astype(np.int64)
    # guard against floating error at row boundaries
    start = a * (2 * m - a - 1) // 2
    a = np.where(start > lin, a - 1, a)
    start = a * (2 * m - a - 1) // 2
    nxt = (a + 1) * (2 * m - a - 2) // 2
    a = np.where(lin >= nxt, a + 1, a)
    start = a * (2 * m - a - 1) // 2
    b = lin - start + a + 1
    return np.stack([pool[a], pool[b]], axis=1)


def _draw_indicators(pi: np.ndarray, users: np.ndarray, rng) -> np.ndarray:
    cum = np.cumsum(pi[users], axis=1)
    u = rng.random(len(users)) * cum[:, -1]
    idx = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(idx, pi.shape[1] - 1)


def _sample_layer(pi, B, pool, count, rng):
    for _ in range(MAX_RETRIES):
        cand = _candidate_pairs(pool, count, rng)
        zs = _draw_indicators(pi, cand[:, 0], rng)
        zd = _draw_indicators(pi, cand[:, 1], rng)
        links = rng.random(len(cand)) < B[zs, zd]
        if links.any():
            return cand, np.stack([zs, zd], axis=1), links
    raise DataError(f"no links generated after {MAX_RETRIES} attempts")


def _layer_graph(name, cand, links, pool):
    dyads = {}
    for t, ((i, j), hit) in enumerate(zip(cand.tolist(), links.tolist())):
        if hit:
            dyads[(min(i, j), max(i, j))] = t
    return LayerGraph(name, set(dyads), set(pool.tolist()), dyads)


def _to_composite(n, graphs) -> CompositeNetwork:
    lab = user_labels(n)
    relabeled = []
    for g in graphs:
        relabeled.append(LayerGraph(
            g.name,
            {(lab[i], lab[j]) for i, j in g.dyads},
            {lab[u] for u in g.members},
            {(lab[i], lab[j]): t for (i, j), t in g.timestamps.items()},
        ))
    net = assemble_composite(relabeled)
    if net.n != n:
        # isolated-only users would vanish from the roster; keep indices stable
        raise DataError("every user must belong to at least one layer")
    return net


def generate_comfp(n: int, layer_specs: Sequence, T: int, sigma_u: float = 1.0, sigma_d: float = 1.0,
                   seed: int = 0, lam: Optional[list] = None, pools: Optional[list] = None,
                   names: Optional[list] = None, x: Optional[np.ndarray] = None):
    """Sample a composite from the ComFP generative process.

    ``layer_specs`` holds ``(K_d, candidate_dyads)`` per layer.  ``lam`` and
    ``pools`` (member arrays per layer) and ``x`` may be supplied to plant
    structure; otherwise lam_d ~ N(0, sigma_d^2), x_i ~ N(0, sigma_u^2) and
    every user belongs to every layer.
    """
    if n < 2:
        raise ValueError("need at least two users")
    rng = make_rng(seed)
    N = len(layer_specs)
    if lam is None:
        lam = [rng.normal(0.0, sigma_d, size=(k, T)) for k, _ in layer_specs]
    B = [sample_beta(compat_prior(l), 1.0, rng) for l in lam]
    x = rng.normal(0.0, sigma_u, size=(n, T)) if x is None else np.asarray(x, dtype=float)
    if x.shape != (n, T):
        raise ValueError(f"x must be ({n}, {T})")
    alpha = [hybrid_prior(x, l) for l in lam]
    pi = [sample_dirichlet(a, rng) for a in alpha]
    if pools is None:
        pools = [np.arange(n)] * N
    names = names or [f"layer{d}" for d in range(N)]
    truth = PlantedTruth(x, [np.array(l) for l in lam], alpha, pi, B, members=[np.asarray(p) for p in pools])
    graphs = []
    for d, (_, count) in enumerate(layer_specs):
        cand, z, links = _sample_layer(pi[d], B[d], np.asarray(pools[d]), int(count), rng)
        truth.candidates.append(cand)
        truth.z.append(z)
        truth.links.append(links)
        graphs.append(_layer_graph(names[d], cand, links, np.asarray(pools[d])))
    return _to_composite(n, graphs), truth


def generate_mmsb(n: int, K: int, candidates: int, alpha0: float, gamma0: float = 1.0, gamma1: float = 1.0,
                  seed: int = 0, name: str = "layer0"):
    """Single-layer MMSB sample: pi_i ~ Dir(alpha0), B ~ Beta(gamma1, gamma0).

    Returns ``(layer, truth)`` with the layer keyed by internal indices.
    """
    if n < 2:
        raise ValueError("need at least two users")
    rng = make_rng(seed)
    alpha = np.full((n, K), float(alpha0))
    pi = sample_dirichlet(alpha, rng)
    B = np.atleast_2d(sample_beta(np.full((K, K), gamma1), np.full((K, K), gamma0), rng))
    pool = np.arange(n)
    cand, z, links = _sample_layer(pi, B, pool, int(candidates), rng)
    truth = PlantedTruth(None, [], [alpha], [pi], [B], [cand], [z], [links], [pool])
    return _layer_graph(name, cand, links, pool), truth


def random_split(n: int, m: int, N: int = 1, seed: int = 0) -> TrainTestSplit:
    """Training view with ``m`` uniformly drawn dyads per layer, half links and half non-links.

    No held-out part; meant for timing the samplers at a controlled size.
    """
    rng = make_rng(seed)
    layers = []
    empty = np.zeros((0, 2), dtype=np.int64)
    for _ in range(N):
        pairs = _candidate_pairs(np.arange(n), m, rng)
        pairs = np.sort(pairs, axis=1)
        layers.append(LayerSplit(pairs[: m // 2], empty, pairs[m // 2:], empty))
    return TrainTestSplit(n, [f"layer{d}" for d in range(N)], layers, [np.arange(n)] * N)


def structured_lambda(K: int, T: int, strength: float, rng) -> np.ndarray:
    """Rows centred on a simplex: strong self-affinity, negative cross-affinity."""
    if K <= T:
        base = np.zeros((K, T))
        base[:, :K] = np.eye(K) - 1.0 / K
        base /= math.sqrt(1.0 - 1.0 / K) if K > 1 else 1.0
    else:
        base = rng.normal(size=(K, T))
        base /= np.linalg.norm(base, axis=1, keepdims=True)
    return strength * base


def plant_sparse_dense_pair(n: int, K: int, T: int, density_ratio: float, overlap_fraction: float, seed: int = 0,
                            candidates: Optional[int] = None, strength: float = 5.0, separation: float = 3.0,
                            sigma_u: float = 0.5, noise: float = 0.3):
    """Two layers sharing users' features but with distinct mappings.

    Each user is assigned a community c_i and placed at ``separation`` times
    the c_i-th direction of ``structured_lambda`` plus N(0, sigma_u^2)
    noise, so memberships are nearly pure.  The sparse layer's mapping is a
    row permutation of the dense one plus Gaussian noise: both layers share
    the same partition up to relabelling.

    The dense layer draws ``candidates`` candidate dyads (default 40 n) and
    the sparse layer ``round(candidates / density_ratio)``.
    ``ceil(overlap_fraction * n)`` users belong to both layers; the rest
    alternate between the two.
    """
    if density_ratio <= 1:
        raise ValueError("density_ratio must exceed 1")
    if not 0.0 < overlap_fraction <= 1.0:
        raise ValueError("overlap_fraction must lie in (0, 1]")
    rng = make_rng(seed)
    order = rng.permutation(n)
    n_shared = math.ceil(overlap_fraction * n)
    shared, rest = order[:n_shared], order[n_shared:]
    pools = [np.sort(np.concatenate([shared, rest[0::2]])), np.sort(np.concatenate([shared, rest[1::2]]))]
    base = structured_lambda(K, T, strength, rng)
    lam = [base + noise * rng.normal(size=base.shape),
           base[rng.permutation(K)] + noise * rng.normal(size=base.shape)]
    community = rng.integers(K, size=n)
    centres = separation * base / strength
    x = centres[community] + rng.normal(0.0, sigma_u, size=(n, T))
    budget = int(candidates if candidates is not None else 40 * n)
    specs = [(K, budget), (K, int(round(budget / density_ratio)))]
    return generate_comfp(n, specs, T, sigma_u=sigma_u, seed=int(rng.integers(2**31)), lam=lam, pools=pools,
                          names=["dense", "sparse"], x=x)


# ----------------------------------------------------------------- output

TRUTH_VERSION = "comfp-truth v1"


def _write_matrix(fh, tag, mat):
    mat = np.atleast_2d(mat)
    fh.write(f"{tag} {mat.shape[0]} {mat.shape[1]}\n")
    for row in mat:
        fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def write_truth(truth: PlantedTruth, path, layer_names: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {TRUTH_VERSION}\n")
        if truth.x is not None:
            _write_matrix(fh, "x", truth.x)
        for d, name in enumerate(layer_names):
            if truth.lam:
                _write_matrix(fh, f"lambda {name}", truth.lam[d])
            _write_matrix(fh, f"pi {name}", truth.pi[d])
            _write_matrix(fh, f"B {name}", truth.B[d])


def write_dataset(net: CompositeNetwork, truth: PlantedTruth, out_dir) -> dict:
    """Edge lists with timestamps, a manifest and the truth file; returns their paths."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for g in net.layers:
        p = out / f"{g.name}.tsv"
        write_edge_list(g, p, net.roster)
        entries.append({"name": g.name, "path": p.name, "timestamps": g.timestamps is not None})
    write_manifest(out / "manifest.json", entries)
    write_truth(truth, out / "truth.txt", net.layer_names())
    return {"manifest": out / "manifest.json", "truth": out / "truth.txt"}
