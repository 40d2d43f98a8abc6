"""Single-network MMSB baseline with a collapsed, blocked Gibbs sampler.

The latent state and the sweep kernel are shared with the ComFP model: a
sweep only needs a per-user Dirichlet prior matrix ``alpha`` (n x K) and a
per-sign Beta pseudo-count tensor ``prior`` (K x K x 2, sign 0 = link,
sign 1 = non-link).  The baseline fills both with constants.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from .network import CompositeNetwork, DataError, LayerGraph, LayerSplit, TrainTestSplit
from .numerics import log_gamma, make_rng

POS, NEG = 0, 1


@dataclass
class MmsbConfig:
    K: int = 25
    alpha0: Optional[float] = None  # defaults to 1/K
    gamma0: float = 1.0  # pseudo-count for non-links
    gamma1: float = 1.0  # pseudo-count for links
    iterations: int = 500
    seed: int = 0
    burn_in: float = 0.5

    def __post_init__(self):
        if self.K < 1 or self.iterations < 0:
            raise ValueError("K must be >= 1 and iterations >= 0")
        if self.alpha0 is None:
            self.alpha0 = 1.0 / self.K
        if min(self.alpha0, self.gamma0, self.gamma1) <= 0:
            raise ValueError("MMSB hyperparameters must be strictly positive")


@dataclass
class LayerState:
    """Indicator pairs and count tables for the training dyads of one layer."""

    K: int
    src: np.ndarray
    dst: np.ndarray
    sign: np.ndarray  # 0 for y=+1, 1 for y=-1
    z_src: np.ndarray
    z_dst: np.ndarray
    n_user: np.ndarray  # (n, K)
    n_pair: np.ndarray  # (K, K, 2)

    @property
    def m(self) -> int:
        return len(self.src)

    def copy(self) -> "LayerState":
        return LayerState(self.K, *(a.copy() for a in (
            self.src, self.dst, self.sign, self.z_src, self.z_dst, self.n_user, self.n_pair)))

    def active_users(self) -> np.ndarray:
        return np.flatnonzero(self.n_user.sum(axis=1))


@dataclass
class LatentState:
    n: int
    layers: list

    def copy(self) -> "LatentState":
        return LatentState(self.n, [g.copy() for g in self.layers])


def tally(n: int, K: int, src, dst, sign, z_src, z_dst):
    """Fresh count tables from indicator assignments."""
    n_user = np.zeros((n, K), dtype=np.int64)
    np.add.at(n_user, (src, z_src), 1)
    np.add.at(n_user, (dst, z_dst), 1)
    n_pair = np.zeros((K, K, 2), dtype=np.int64)
    np.add.at(n_pair, (z_src, z_dst, sign), 1)
    return n_user, n_pair


def check_counts(layer: LayerState, n: int) -> None:
    n_user, n_pair = tally(n, layer.K, layer.src, layer.dst, layer.sign, layer.z_src, layer.z_dst)
    if not (np.array_equal(n_user, layer.n_user) and np.array_equal(n_pair, layer.n_pair)):
        raise AssertionError("count tables disagree with indicator assignments")


def layer_dyads(ls: LayerSplit):
    """Training dyads of a layer in scan order: positives, then negatives."""
    pairs = np.concatenate([ls.train_pos, ls.train_neg]).astype(np.int64).reshape(-1, 2)
    sign = np.concatenate([np.full(len(ls.train_pos), POS), np.full(len(ls.train_neg), NEG)]).astype(np.int64)
    return pairs[:, 0].copy(), pairs[:, 1].copy(), sign


def init_state(split: TrainTestSplit, K, rng) -> LatentState:
    """Uniform random indicator pairs for every training dyad.

    ``K`` is an int or a per-layer list.
    """
    Ks = [K] * split.N if np.isscalar(K) else list(K)
    if len(Ks) != split.N:
        raise ValueError("one K per layer required")
    layers = []
    for ls, k in zip(split.layers, Ks):
        src, dst, sign = layer_dyads(ls)
        if len(src) == 0:
            raise DataError("cannot initialise a layer with no training dyads")
        zs = rng.integers(k, size=len(src))
        zd = rng.integers(k, size=len(src))
        n_user, n_pair = tally(split.n, k, src, dst, sign, zs, zd)
        layers.append(LayerState(int(k), src, dst, sign, zs, zd, n_user, n_pair))
    return LatentState(split.n, layers)


# ------------------------------------------------------------ conditionals


def pair_conditional(layer: LayerState, e: int, alpha: np.ndarray, prior: np.ndarray) -> np.ndarray:
    """K x K conditional of dyad ``e``'s indicator pair given all others.

    Reference implementation used to cross-check the compiled sweep.
    """
    i, j, y = layer.src[e], layer.dst[e], layer.sign[e]
    k0, k1 = layer.z_src[e], layer.z_dst[e]
    ni = layer.n_user[i].astype(float)
    nj = layer.n_user[j].astype(float)
    npair = layer.n_pair.astype(float)
    ni[k0] -= 1
    nj[k1] -= 1
    npair[k0, k1, y] -= 1
    num = npair[:, :, y] + prior[:, :, y]
    den = npair.sum(axis=2) + prior.sum(axis=2)
    w = np.outer(ni + alpha[i], nj + alpha[j]) * num / den
    return w / w.sum()


@numba.njit(cache=True)
def _sweep_kernel(src, dst, sign, zs, zd, n_user, n_pair, alpha, prior, u):
    K = n_pair.shape[0]
    w = np.empty(K * K)
    for e in range(src.shape[0]):
        i = src[e]
        j = dst[e]
        y = sign[e]
        k0 = zs[e]
        k1 = zd[e]
        n_user[i, k0] -= 1
        n_user[j, k1] -= 1
        n_pair[k0, k1, y] -= 1
        tot = 0.0
        for k in range(K):
            a = n_user[i, k] + alpha[i, k]
            for l in range(K):
                num = n_pair[k, l, y] + prior[k, l, y]
                den = n_pair[k, l, 0] + n_pair[k, l, 1] + prior[k, l, 0] + prior[k, l, 1]
                tot += a * (n_user[j, l] + alpha[j, l]) * num / den
                w[k * K + l] = tot
        r = u[e] * tot
        pick = K * K - 1
        for c in range(K * K):
            if w[c] > r:
                pick = c
                break
        k0 = pick // K
        k1 = pick % K
        zs[e] = k0
        zd[e] = k1
        n_user[i, k0] += 1
        n_user[j, k1] += 1
        n_pair[k0, k1, y] += 1


def sweep_layer(layer: LayerState, alpha, prior, rng, uniforms=None) -> None:
    """One blocked Gibbs pass over the layer's dyads in scan order, in place."""
    u = rng.random(layer.m) if uniforms is None else np.asarray(uniforms, dtype=float)
    _sweep_kernel(layer.src, layer.dst, layer.sign, layer.z_src, layer.z_dst,
                  layer.n_user, layer.n_pair,
                  np.ascontiguousarray(alpha, dtype=float), np.ascontiguousarray(prior, dtype=float), u)


def baseline_priors(n: int, K: int, cfg: MmsbConfig):
    alpha = np.full((n, K), float(cfg.alpha0))
    prior = np.empty((K, K, 2))
    prior[:, :, POS] = cfg.gamma1
    prior[:, :, NEG] = cfg.gamma0
    return alpha, prior


def gibbs_sweep_mmsb(state: LatentState, cfg: MmsbConfig, rng, debug: bool = False) -> LatentState:
    for layer in state.layers:
        alpha, prior = baseline_priors(state.n, layer.K, cfg)
        sweep_layer(layer, alpha, prior, rng)
        if debug:
            check_counts(layer, state.n)
    return state


# ------------------------------------------------------- collapsed density


def collapsed_log_joint(layer: LayerState, alpha: np.ndarray, prior: np.ndarray) -> float:
    """log p(z, y | alpha, prior) with memberships and compatibilities integrated out.

    Users without training slots contribute exactly zero and are skipped.
    """
    act = layer.active_users()
    a = alpha[act]
    cnt = layer.n_user[act]
    asum = a.sum(axis=1)
    val = float(np.sum(log_gamma(asum) - log_gamma(asum + cnt.sum(axis=1))))
    val += float(np.sum(log_gamma(a + cnt) - log_gamma(a)))
    npair = layer.n_pair
    val += float(np.sum(log_gamma(prior + npair) - log_gamma(prior)))
    psum = prior.sum(axis=2)
    val += float(np.sum(log_gamma(psum) - log_gamma(psum + npair.sum(axis=2))))
    return val


def mmsb_log_joint(state: LatentState, cfg: MmsbConfig) -> float:
    total = 0.0
    for layer in state.layers:
        alpha, prior = baseline_priors(state.n, layer.K, cfg)
        total += collapsed_log_joint(layer, alpha, prior)
    return total


# ---------------------------------------------------------- point estimates


@dataclass
class PointEstimates:
    pi: list  # (n, K_d) per layer
    B: list  # (K_d, K_d) per layer
    layer_names: list = field(default_factory=list)

    def averaged(self, other: "PointEstimates", weight: float) -> "PointEstimates":
        """Running mean: self holds the mean of ``weight`` samples; fold in ``other``."""
        w = weight / (weight + 1.0)
        return PointEstimates(
            [w * a + (1 - w) * b for a, b in zip(self.pi, other.pi)],
            [w * a + (1 - w) * b for a, b in zip(self.B, other.B)],
            self.layer_names,
        )


def layer_point_estimate(layer: LayerState, alpha, prior):
    pi = (layer.n_user + alpha) / (layer.n_user.sum(axis=1, keepdims=True) + alpha.sum(axis=1, keepdims=True))
    B = (layer.n_pair[:, :, POS] + prior[:, :, POS]) / (layer.n_pair.sum(axis=2) + prior.sum(axis=2))
    return pi, B


def estimate_point(state: LatentState, cfg: MmsbConfig, layer_names=None) -> PointEstimates:
    pis, Bs = [], []
    for layer in state.layers:
        alpha, prior = baseline_priors(state.n, layer.K, cfg)
        pi, B = layer_point_estimate(layer, alpha, prior)
        pis.append(pi)
        Bs.append(B)
    return PointEstimates(pis, Bs, list(layer_names or []))


def average_estimates(samples: list) -> PointEstimates:
    acc = samples[0]
    for k, est in enumerate(samples[1:], 1):
        acc = acc.averaged(est, k)
    return acc


def score_dyad(est: PointEstimates, i: int, j: int, d: int) -> float:
    """pi_i^T B_d pi_j; users outside the fitted range get the prior mean."""
    pi = est.pi[d]
    pi_i = pi[i] if 0 <= i < len(pi) else np.full(pi.shape[1], 1.0 / pi.shape[1])
    pi_j = pi[j] if 0 <= j < len(pi) else np.full(pi.shape[1], 1.0 / pi.shape[1])
    return float(pi_i @ est.B[d] @ pi_j)


def score_pairs(est: PointEstimates, pairs: np.ndarray, d: int) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    pi = est.pi[d]
    return np.einsum("ek,kl,el->e", pi[pairs[:, 0]], est.B[d], pi[pairs[:, 1]])


# ------------------------------------------------------------------- fitting


@dataclass
class MmsbFit:
    estimates: PointEstimates
    state: LatentState
    log_joint: list
    seconds: list
    config: MmsbConfig


def fit_mmsb(split: TrainTestSplit, cfg: MmsbConfig) -> MmsbFit:
    """Independent MMSB chains on every layer of ``split``."""
    rng = make_rng(cfg.seed)
    state = init_state(split, cfg.K, rng)
    burn = int(cfg.burn_in * cfg.iterations)
    acc, kept = None, 0
    trace, secs = [], []
    for it in range(cfg.iterations):
        t0 = time.perf_counter()
        gibbs_sweep_mmsb(state, cfg, rng)
        if it >= burn:
            est = estimate_point(state, cfg, split.layer_names)
            acc = est if acc is None else acc.averaged(est, kept)
            kept += 1
        trace.append(mmsb_log_joint(state, cfg))
        secs.append(time.perf_counter() - t0)
    if acc is None:
        acc = estimate_point(state, cfg, split.layer_names)
    return MmsbFit(acc, state, trace, secs, cfg)


def merge_layers(net: CompositeNetwork, name: str = "merged") -> CompositeNetwork:
    """Single-layer composite whose dyads are the union over layers."""
    if net.N == 1:
        return net
    dyads, members, ts = set(), set(), {}
    has_ts = all(g.timestamps is not None for g in net.layers)
    for g in net.layers:
        dyads |= g.dyads
        members |= g.members
        if has_ts:
            for d, t in g.timestamps.items():
                ts[d] = min(t, ts.get(d, t))
    return CompositeNetwork(list(net.roster), [LayerGraph(name, dyads, members, ts if has_ts else None)])


def merge_split(split: TrainTestSplit, name: str = "merged") -> TrainTestSplit:
    """Training view for the merged baseline: union of train positives, and
    union of train negatives minus anything that is a positive somewhere."""
    pos = set()
    neg = set()
    for ls in split.layers:
        pos |= set(map(tuple, ls.train_pos.tolist()))
        neg |= set(map(tuple, ls.train_neg.tolist()))
    neg -= pos
    to_arr = lambda s: np.array(sorted(s), dtype=np.int64).reshape(-1, 2)
    members = np.unique(np.concatenate(split.members)) if split.members else np.zeros(0, np.int64)
    empty = np.zeros((0, 2), dtype=np.int64)
    return TrainTestSplit(split.n, [name], [LayerSplit(to_arr(pos), empty, to_arr(neg), empty)], [members])
