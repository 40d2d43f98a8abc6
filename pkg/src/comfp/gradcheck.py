"""Random toy states and finite-difference certification of the analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mmsb import LatentState, LayerState, tally
from .model import HyperState, grad_lambda, grad_x, joint_log_density
from .numerics import make_rng
from .optim import finite_diff_gradient


def random_state(rng, n: int, Ks, T: int, dyads_per_layer: int = 12, sigma: float = 1.0):
    """A LatentState with random dyads, signs and indicators plus a random HyperState."""
    layers = []
    pairs = np.array([(i, j) for i in range(n) for j in range(i + 1, n)], dtype=np.int64)
    for K in Ks:
        m = min(dyads_per_layer, len(pairs))
        pick = pairs[np.sort(rng.choice(len(pairs), size=m, replace=False))]
        src, dst = pick[:, 0].copy(), pick[:, 1].copy()
        sign = rng.integers(2, size=m).astype(np.int64)
        zs = rng.integers(K, size=m).astype(np.int64)
        zd = rng.integers(K, size=m).astype(np.int64)
        n_user, n_pair = tally(n, K, src, dst, sign, zs, zd)
        layers.append(LayerState(int(K), src, dst, sign, zs, zd, n_user, n_pair))
    hyper = HyperState(
        rng.normal(0.0, sigma, size=(n, T)),
        [rng.normal(0.0, sigma, size=(K, T)) for K in Ks],
        sigma_u=float(rng.uniform(0.5, 2.0)),
        sigma_d=[float(rng.uniform(0.5, 2.0)) for _ in Ks],
    )
    return LatentState(n, layers), hyper


def rel_error(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


@dataclass
class GradCheck:
    lam_errors: list
    x_errors: list

    @property
    def worst(self) -> float:
        return max(self.lam_errors + self.x_errors)


def check_gradients(instances: int = 20, seed: int = 0, h: float = 1e-5) -> GradCheck:
    """Compare grad_lambda / grad_x with central differences of the joint density.

    Instances draw n <= 10 users, up to two layers with K <= 4 and T <= 4.
    """
    rng = make_rng(seed)
    lam_err, x_err = [], []
    for _ in range(instances):
        n = int(rng.integers(3, 11))
        Ks = [int(k) for k in rng.integers(1, 5, size=int(rng.integers(1, 3)))]
        T = int(rng.integers(1, 5))
        state, hyper = random_state(rng, n, Ks, T, dyads_per_layer=int(rng.integers(4, 20)))
        d = int(rng.integers(len(Ks)))

        def f_lam(lam, d=d):
            h2 = hyper.copy()
            h2.lam[d] = lam
            return joint_log_density(state, h2)

        lam_err.append(rel_error(grad_lambda(state, hyper, d), finite_diff_gradient(f_lam, hyper.lam[d], h)))

        i = int(rng.integers(n))

        def f_x(xi, i=i):
            h2 = hyper.copy()
            h2.x[i] = xi
            return joint_log_density(state, h2)

        x_err.append(rel_error(grad_x(state, hyper, i), finite_diff_gradient(f_x, hyper.x[i], h)))
    return GradCheck(lam_err, x_err)
