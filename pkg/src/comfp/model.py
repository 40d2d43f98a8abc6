"""ComFP: MMSB layers tied together by hybrid priors.

Every user carries latent features ``x_i`` (length T) and every layer a
mapping ``lam_d`` (K_d x T).  The Dirichlet prior of user i in layer d is
``softplus(lam_d @ x_i)`` and the Beta pseudo-counts of community pair
(k, k') are ``softplus(lam_dk . lam_dk') + 1`` for both link signs.
Memberships and compatibilities are collapsed; indicator pairs are Gibbs
sampled, ``lam`` is updated by L-BFGS and ``x`` by Langevin-proposal
Metropolis-Hastings.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .mmsb import (
    NEG,
    POS,
    LatentState,
    PointEstimates,
    collapsed_log_joint,
    init_state,
    layer_point_estimate,
    score_pairs,
    sweep_layer,
    check_counts,
)
from .network import TrainTestSplit
from .numerics import digamma, log_gamma, make_rng, sigmoid, softplus
from .optim import ObjectiveHandle, OptimizationError, lbfgs_maximize

log = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


class NumericError(ArithmeticError):
    """A density or gradient evaluated to a non-finite value."""


@dataclass
class ComfpConfig:
    T: int = 25
    K: Union[int, Sequence[int]] = 25
    iterations: int = 500
    hyper_period: int = 10
    lbfgs_iters: int = 10
    lbfgs_memory: int = 7
    sigma_u: float = 1.0
    sigma_d: float = 1.0
    sigma_mh: float = 0.05
    seed: int = 0
    tol: float = 1e-4  # relative change of the mean log density; 0 disables
    burn_in: float = 0.5

    def __post_init__(self):
        if self.hyper_period < 1:
            raise ValueError("hyper_period must be >= 1")
        if self.T < 1 or self.iterations < 0:
            raise ValueError("T must be >= 1 and iterations >= 0")
        if min(self.sigma_u, self.sigma_d, self.sigma_mh) <= 0:
            raise ValueError("sigma values must be > 0")

    def layer_K(self, N: int) -> list:
        if np.isscalar(self.K):
            return [int(self.K)] * N
        if len(self.K) != N:
            raise ValueError(f"{len(self.K)} K values for {N} layers")
        return [int(k) for k in self.K]


@dataclass
class HyperState:
    x: np.ndarray  # (n, T)
    lam: list  # (K_d, T) per layer
    sigma_u: float = 1.0
    sigma_d: Union[float, list] = 1.0
    sigma_mh: float = 0.05

    def sd(self, d: int) -> float:
        return float(self.sigma_d if np.isscalar(self.sigma_d) else self.sigma_d[d])

    def copy(self) -> "HyperState":
        sd = self.sigma_d if np.isscalar(self.sigma_d) else list(self.sigma_d)
        return HyperState(self.x.copy(), [l.copy() for l in self.lam], self.sigma_u, sd, self.sigma_mh)


def init_hyper(n: int, Ks: list, cfg: ComfpConfig, rng) -> HyperState:
    lam = [rng.normal(0.0, cfg.sigma_d, size=(k, cfg.T)) for k in Ks]
    x = rng.normal(0.0, cfg.sigma_u, size=(n, cfg.T))
    return HyperState(x, lam, cfg.sigma_u, cfg.sigma_d, cfg.sigma_mh)


# ----------------------------------------------------------------- priors


def hybrid_prior(x_i, lam_d) -> np.ndarray:
    """alpha_id = softplus(lam_d @ x_i)."""
    x_i = np.asarray(x_i, dtype=float)
    lam_d = np.asarray(lam_d, dtype=float)
    if lam_d.ndim != 2 or x_i.shape[-1] != lam_d.shape[1]:
        raise ValueError(f"feature dimension mismatch: x {x_i.shape} vs lambda {lam_d.shape}")
    return softplus(x_i @ lam_d.T)


def compat_prior(lam_d) -> np.ndarray:
    """rho_d = softplus(lam_d lam_d^T), symmetric by construction."""
    lam_d = np.asarray(lam_d, dtype=float)
    c = lam_d @ lam_d.T
    c = 0.5 * (c + c.T)
    return softplus(c)


def layer_priors(hyper: HyperState, d: int):
    """(alpha, prior) arrays in the layout the sweep kernel expects."""
    alpha = hybrid_prior(hyper.x, hyper.lam[d])
    r = compat_prior(hyper.lam[d]) + 1.0
    return alpha, np.stack([r, r], axis=2)


def gibbs_sweep_comfp(state: LatentState, hyper: HyperState, rng, debug: bool = False) -> LatentState:
    for d, layer in enumerate(state.layers):
        alpha, prior = layer_priors(hyper, d)
        sweep_layer(layer, alpha, prior, rng)
        if debug:
            check_counts(layer, state.n)
    return state


# --------------------------------------------------------- joint density


def _gauss_logpdf_sum(v: np.ndarray, sigma: float) -> float:
    return float(-0.5 * np.sum(v * v) / sigma**2 - 0.5 * v.size * (_LOG_2PI + 2.0 * math.log(sigma)))


def joint_log_density(state: LatentState, hyper: HyperState) -> float:
    """log p(z, lam, x): collapsed count terms of every layer plus Gaussian priors."""
    if not (np.all(np.isfinite(hyper.x)) and all(np.all(np.isfinite(l)) for l in hyper.lam)):
        raise NumericError("non-finite user features or layer mapping")
    total = 0.0
    for d, layer in enumerate(state.layers):
        alpha, prior = layer_priors(hyper, d)
        term = collapsed_log_joint(layer, alpha, prior)
        if not math.isfinite(term):
            raise NumericError(f"non-finite collapsed count term in layer {d}")
        total += term
        lp = _gauss_logpdf_sum(hyper.lam[d], hyper.sd(d))
        if not math.isfinite(lp):
            raise NumericError(f"non-finite Gaussian prior on lambda of layer {d}")
        total += lp
    lp = _gauss_logpdf_sum(hyper.x, hyper.sigma_u)
    if not math.isfinite(lp):
        raise NumericError("non-finite Gaussian prior on user features")
    return total + lp


def _dalpha(layer, alpha, users):
    """d log p / d alpha for the given users (rows), Dirichlet-multinomial terms."""
    a = alpha[users]
    cnt = layer.n_user[users]
    asum = a.sum(axis=1, keepdims=True)
    return (digamma(asum) - digamma(asum + cnt.sum(axis=1, keepdims=True))
            + digamma(a + cnt) - digamma(a))


def _drho(layer, rho):
    """d log p / d rho for the Beta-Bernoulli compatibility terms (pseudo-count rho + 1 per sign)."""
    p = rho + 1.0
    npair = layer.n_pair
    g = (digamma(p + npair[:, :, POS]) - digamma(p)) + (digamma(p + npair[:, :, NEG]) - digamma(p))
    g += 2.0 * (digamma(2.0 * p) - digamma(2.0 * p + npair.sum(axis=2)))
    return g


def grad_lambda(state: LatentState, hyper: HyperState, d: int, parts: bool = False):
    """Analytic gradient of :func:`joint_log_density` with respect to lam_d.

    With ``parts`` the prior, membership and compatibility contributions
    are returned separately as a dict.
    """
    layer = state.layers[d]
    lam = hyper.lam[d]
    prior_term = -lam / hyper.sd(d) ** 2

    users = layer.active_users()
    X = hyper.x[users]
    pre = X @ lam.T
    alpha = softplus(pre)
    full_alpha = np.zeros((state.n, lam.shape[0]))
    full_alpha[users] = alpha
    w = _dalpha(layer, full_alpha, users) * sigmoid(pre)
    member_term = w.T @ X

    c = lam @ lam.T
    c = 0.5 * (c + c.T)
    M = _drho(layer, softplus(c)) * sigmoid(c)
    compat_term = (M + M.T) @ lam
    if parts:
        return {"prior": prior_term, "membership": member_term, "compat": compat_term}
    return prior_term + member_term + compat_term


def _x_terms(state: LatentState, hyper: HyperState, X: np.ndarray, users: np.ndarray, grad: bool = True):
    """Per-user log target (count terms + prior) and gradient for rows ``X`` of ``users``."""
    users = np.asarray(users, dtype=np.int64)
    logp = -0.5 * np.sum(X * X, axis=1) / hyper.sigma_u**2 - 0.5 * X.shape[1] * (_LOG_2PI + 2.0 * math.log(hyper.sigma_u))
    g = -X / hyper.sigma_u**2 if grad else None
    for d, layer in enumerate(state.layers):
        cnt = layer.n_user[users]
        tot = cnt.sum(axis=1)
        rows = np.flatnonzero(tot)
        if rows.size == 0:
            continue
        lam = hyper.lam[d]
        pre = X[rows] @ lam.T
        a = softplus(pre)
        c = cnt[rows]
        asum = a.sum(axis=1)
        logp[rows] += (log_gamma(asum) - log_gamma(asum + tot[rows])
                       + np.sum(log_gamma(a + c) - log_gamma(a), axis=1))
        if grad:
            da = (digamma(asum)[:, None] - digamma(asum + tot[rows])[:, None]
                  + digamma(a + c) - digamma(a))
            g[rows] += (da * sigmoid(pre)) @ lam
    return logp, g


def grad_x(state: LatentState, hyper: HyperState, i: int) -> np.ndarray:
    """Analytic gradient of :func:`joint_log_density` with respect to x_i."""
    _, g = _x_terms(state, hyper, hyper.x[[i]], np.array([i]))
    return g[0]


def grad_x_all(state: LatentState, hyper: HyperState) -> np.ndarray:
    _, g = _x_terms(state, hyper, hyper.x, np.arange(state.n))
    return g


# ------------------------------------------------------------ lam update


def _lambda_objective(state: LatentState, hyper: HyperState, d: int) -> ObjectiveHandle:
    """Terms of the joint density that depend on lam_d, as a function of its flat entries."""
    shape = hyper.lam[d].shape
    layer = state.layers[d]

    def both(flat):
        h = hyper.copy()
        h.lam[d] = flat.reshape(shape)
        alpha, prior = layer_priors(h, d)
        v = collapsed_log_joint(layer, alpha, prior) + _gauss_logpdf_sum(h.lam[d], h.sd(d))
        return v, grad_lambda(state, h, d).ravel()

    return ObjectiveHandle(lambda z: both(z)[0], lambda z: both(z)[1], int(np.prod(shape)), both)


def update_lambda(state: LatentState, hyper: HyperState, d: int, iters: int = 10, memory: int = 7):
    """L-BFGS ascent on lam_d with everything else fixed.

    Returns ``(lam_d, result)``; on optimizer failure the previous value is
    kept and ``result`` is None.
    """
    obj = _lambda_objective(state, hyper, d)
    try:
        res = lbfgs_maximize(obj, hyper.lam[d].ravel(), max_iters=iters, memory=memory)
    except OptimizationError as exc:
        log.warning("lambda update for layer %d aborted: %s", d, exc)
        return hyper.lam[d].copy(), None
    return res.x.reshape(hyper.lam[d].shape), res


# ------------------------------------------------------- Langevin MH on x


def langevin_log_ratio(x, x_bar, logp_x, logp_bar, grad_at_x, grad_at_bar, sigma) -> np.ndarray:
    """Row-wise log acceptance ratio for a Langevin proposal.

    The forward kernel is N(x + sigma^2/2 grad(x), sigma^2) and the reverse
    kernel N(x_bar + sigma^2/2 grad(x_bar), sigma^2).
    """
    h = 0.5 * sigma * sigma
    fwd = x_bar - x - h * grad_at_x
    rev = x - x_bar - h * grad_at_bar
    log_q_rev = -np.sum(rev * rev, axis=-1) / (2.0 * sigma * sigma)
    log_q_fwd = -np.sum(fwd * fwd, axis=-1) / (2.0 * sigma * sigma)
    return (logp_bar - logp_x) + log_q_rev - log_q_fwd


def langevin_step(x, log_density, gradient, sigma, rng, noise=None):
    """One Metropolis-adjusted Langevin step, accepting row by row.

    ``log_density`` maps an (m, p) array to m values and ``gradient`` to an
    (m, p) array; each row is an independent target.  Returns
    ``(new_x, accepted)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    g = gradient(x)
    lp = log_density(x)
    if noise is None:
        noise = rng.standard_normal(x.shape)
    x_bar = x + 0.5 * sigma * sigma * g + sigma * noise
    finite = np.all(np.isfinite(x_bar), axis=1)
    safe = np.where(finite[:, None], x_bar, x)
    g_bar = gradient(safe)
    lp_bar = log_density(safe)
    with np.errstate(invalid="ignore", over="ignore"):
        log_r = langevin_log_ratio(x, safe, lp, lp_bar, g, g_bar, sigma)
    ok = finite & np.isfinite(log_r) & np.all(np.isfinite(g_bar), axis=1)
    if not ok.all():
        log.warning("rejecting %d non-finite Langevin proposal(s)", int((~ok).sum()))
    u = rng.random(x.shape[0])
    accept = ok & (np.log(np.maximum(u, 1e-300)) < np.minimum(log_r, 0.0))
    return np.where(accept[:, None], safe, x), accept


def update_x_mh(state: LatentState, hyper: HyperState, i: int, rng):
    """Langevin-MH update of one user's feature vector; returns (x_i, accepted)."""
    users = np.array([i])
    new, acc = langevin_step(
        hyper.x[[i]],
        lambda X: _x_terms(state, hyper, X, users, grad=False)[0],
        lambda X: _x_terms(state, hyper, X, users)[1],
        hyper.sigma_mh, rng,
    )
    return new[0], bool(acc[0])


def update_x_all(state: LatentState, hyper: HyperState, rng):
    """Langevin-MH update for every user at once.

    Given lam and z the target factorises over users, so this equals a
    sequential per-user pass.  Returns (new x, acceptance flags).
    """
    users = np.arange(state.n)
    return langevin_step(
        hyper.x,
        lambda X: _x_terms(state, hyper, X, users, grad=False)[0],
        lambda X: _x_terms(state, hyper, X, users)[1],
        hyper.sigma_mh, rng,
    )


# ------------------------------------------------------------ estimates


def comfp_estimates(state: LatentState, hyper: HyperState, layer_names=None) -> PointEstimates:
    pis, Bs = [], []
    for d, layer in enumerate(state.layers):
        alpha, prior = layer_priors(hyper, d)
        pi, B = layer_point_estimate(layer, alpha, prior)
        pis.append(pi)
        Bs.append(B)
    return PointEstimates(pis, Bs, list(layer_names or []))


@dataclass
class FitResult:
    estimates: PointEstimates
    hyper: HyperState
    state: LatentState
    log_density: list = field(default_factory=list)
    mh_accept: list = field(default_factory=list)  # nan on iterations without an x update
    seconds: list = field(default_factory=list)
    converged: bool = False
    config: Optional[ComfpConfig] = None

    @property
    def iterations(self) -> int:
        return len(self.log_density)


def _converged(trace, tol):
    if tol <= 0 or len(trace) < 20:
        return False
    recent = float(np.mean(trace[-10:]))
    before = float(np.mean(trace[-20:-10]))
    return abs(recent - before) / max(abs(before), 1e-300) < tol


def fit(split: TrainTestSplit, cfg: ComfpConfig, callback=None) -> FitResult:
    """Alternate Gibbs sweeps with periodic lam (L-BFGS) and x (MH) updates."""
    rng = make_rng(cfg.seed)
    Ks = cfg.layer_K(split.N)
    hyper = init_hyper(split.n, Ks, cfg, rng)
    state = init_state(split, Ks, rng)
    res = FitResult(comfp_estimates(state, hyper, split.layer_names), hyper, state, config=cfg)
    burn = int(cfg.burn_in * cfg.iterations)
    acc, kept = None, 0
    for it in range(1, cfg.iterations + 1):
        t0 = time.perf_counter()
        gibbs_sweep_comfp(state, hyper, rng)
        rate = float("nan")
        if it % cfg.hyper_period == 0:
            for d in range(split.N):
                hyper.lam[d], _ = update_lambda(state, hyper, d, cfg.lbfgs_iters, cfg.lbfgs_memory)
            hyper.x, flags = update_x_all(state, hyper, rng)
            rate = float(flags.mean())
        est = comfp_estimates(state, hyper, split.layer_names)
        if it > burn:
            acc = est if acc is None else acc.averaged(est, kept)
            kept += 1
        res.log_density.append(joint_log_density(state, hyper))
        res.mh_accept.append(rate)
        res.seconds.append(time.perf_counter() - t0)
        if callback is not None:
            callback(it, res)
        if it % cfg.hyper_period == 0 and _converged(res.log_density, cfg.tol):
            res.converged = True
            break
    if acc is not None:
        res.estimates = acc
    else:
        res.estimates = comfp_estimates(state, hyper, split.layer_names)
    return res


def score_dyad_comfp(result: FitResult, i: int, j: int, d: int) -> float:
    est = result.estimates
    return float(est.pi[d][i] @ est.B[d] @ est.pi[d][j])


def score_pairs_comfp(result: FitResult, pairs, d: int) -> np.ndarray:
    return score_pairs(result.estimates, pairs, d)
