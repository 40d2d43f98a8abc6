"""Limited-memory BFGS (framed as maximisation) and a central-difference oracle."""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

log = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    """Raised when the objective or gradient turns non-finite."""


@dataclass
class ObjectiveHandle:
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    dimension: int
    # optional fused evaluation, returns (value, gradient)
    value_and_gradient: Optional[Callable[[np.ndarray], tuple]] = None

    def evaluate(self, x):
        if self.value_and_gradient is not None:
            v, g = self.value_and_gradient(x)
        else:
            v, g = self.value(x), self.gradient(x)
        return float(v), np.asarray(g, dtype=float)


@dataclass
class LbfgsResult:
    x: np.ndarray
    value: float
    n_iter: int
    converged: bool
    warning: Optional[str] = None
    history: list = field(default_factory=list)


def _check(f, g, x):
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        bad = "objective" if not math.isfinite(f) else "gradient"
        raise OptimizationError(f"non-finite {bad} at |x|_inf={np.max(np.abs(x)):.3g}")


def _cubic_min(a0, f0, d0, a1, f1, d1):
    """Minimiser of the cubic through (a0, f0, d0), (a1, f1, d1); None if undefined."""
    if a0 == a1:
        return None
    t1 = d0 + d1 - 3.0 * (f0 - f1) / (a0 - a1)
    disc = t1 * t1 - d0 * d1
    if disc < 0:
        return None
    t2 = math.copysign(math.sqrt(disc), a1 - a0)
    denom = d1 - d0 + 2.0 * t2
    if denom == 0:
        return None
    return a1 - (a1 - a0) * (d1 + t2 - t1) / denom


class _LineSearch:
    """Strong-Wolfe line search on phi(a) = f(x + a d), f being minimised."""

    def __init__(self, fun, x, d, f0, g0, c1, c2, max_evals=40):
        self.fun, self.x, self.d = fun, x, d
        self.f0 = f0
        self.d0 = float(g0 @ d)
        self.c1, self.c2 = c1, c2
        self.max_evals = max_evals
        self.evals = 0
        self.best = None  # (f, a, g) of the lowest phi seen

    def phi(self, a):
        self.evals += 1
        x = self.x + a * self.d
        f, g = self.fun(x)
        _check(f, g, x)
        if self.best is None or f < self.best[0]:
            self.best = (f, a, g)
        return f, g, float(g @ self.d)

    def polish(self, a0, f0, d0, a, f, g, dp):
        # One cubic-interpolation step from an accepted Wolfe point; exact
        # on quadratics, which gives conjugate-direction finite termination.
        ac = _cubic_min(a0, f0, d0, a, f, dp)
        if ac is None or not 0.0 < ac < 4.0 * max(a, a0) or abs(ac - a) <= 1e-12 * a:
            return a, f, g
        if self.evals >= self.max_evals:
            return a, f, g
        fc, gc, dc = self.phi(ac)
        if fc < f and fc <= self.f0 + self.c1 * ac * self.d0 and abs(dc) <= abs(dp):
            return ac, fc, gc
        return a, f, g

    def search(self, a_init):
        a_prev, f_prev, dp_prev = 0.0, self.f0, self.d0
        a = a_init
        first = True
        while self.evals < self.max_evals:
            f, g, dp = self.phi(a)
            if f > self.f0 + self.c1 * a * self.d0 or (not first and f >= f_prev):
                return self.zoom(a_prev, f_prev, dp_prev, a, f, dp)
            if abs(dp) <= -self.c2 * self.d0:
                return self.polish(a_prev, f_prev, dp_prev, a, f, g, dp)
            if dp >= 0:
                return self.zoom(a, f, dp, a_prev, f_prev, dp_prev)
            a_prev, f_prev, dp_prev = a, f, dp
            a *= 4.0
            first = False
        return None

    def zoom(self, lo, flo, dlo, hi, fhi, dhi):
        while self.evals < self.max_evals:
            width = abs(hi - lo)
            if width < 1e-16 * max(1.0, abs(lo)):
                return None
            a = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.01 * width
            if a is None or not left < a < right:
                a = 0.5 * (lo + hi)
            else:
                a = min(max(a, left + margin), right - margin)
            f, g, dp = self.phi(a)
            if f > self.f0 + self.c1 * a * self.d0 or f >= flo:
                hi, fhi, dhi = a, f, dp
            else:
                if abs(dp) <= -self.c2 * self.d0:
                    return self.polish(lo, flo, dlo, a, f, g, dp)
                if dp * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = a, f, dp
        return None


def lbfgs_maximize(
    obj: ObjectiveHandle,
    x0,
    max_iters: int = 10,
    memory: int = 7,
    gtol: float = 1e-6,
    c1: float = 1e-4,
    c2: float = 0.1,
) -> LbfgsResult:
    """Maximise ``obj`` from ``x0``.

    Iterates stop after ``max_iters`` accepted steps or once the gradient
    infinity-norm drops below ``gtol``.  A line-search failure returns the
    best point seen with ``warning`` set; non-finite values raise
    :class:`OptimizationError`.
    """
    x = np.array(x0, dtype=float).ravel()
    if x.size != obj.dimension:
        raise ValueError(f"x0 has {x.size} entries, objective expects {obj.dimension}")

    def fun(z):
        v, g = obj.evaluate(z)
        return -v, -g

    f, g = fun(x)
    _check(f, g, x)
    history = [-f]
    if max_iters <= 0:
        return LbfgsResult(x, -f, 0, bool(np.max(np.abs(g), initial=0.0) < gtol), None, history)

    pairs: deque = deque(maxlen=memory)
    warning = None
    converged = False
    n_iter = 0
    while True:
        if np.max(np.abs(g), initial=0.0) < gtol:
            converged = True
            break
        if n_iter >= max_iters:
            break
        # two-loop recursion
        q = g.copy()
        coefs = []
        for s, y, rho in reversed(pairs):
            a = rho * (s @ q)
            coefs.append(a)
            q -= a * y
        if pairs:
            s, y, _ = pairs[-1]
            q *= (s @ y) / (y @ y)
        for (s, y, rho), a in zip(pairs, reversed(coefs)):
            b = rho * (y @ q)
            q += (a - b) * s
        d = -q
        if g @ d >= 0:
            pairs.clear()
            d = -g
        a_init = 1.0 if pairs else min(1.0, 1.0 / np.max(np.abs(g)))
        ls = _LineSearch(fun, x, d, f, g, c1, c2)
        out = ls.search(a_init)
        if out is None:
            warning = "line search failed"
            if ls.best is not None and ls.best[0] < f:
                fb, ab, gb = ls.best
                x, f, g = x + ab * d, fb, gb
                n_iter += 1
                history.append(-f)
            log.debug("lbfgs: %s after %d iterations", warning, n_iter)
            break
        a, f_new, g_new = out
        s = a * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        x, f, g = x + s, f_new, g_new
        n_iter += 1
        history.append(-f)
    return LbfgsResult(x, -f, n_iter, converged, warning, history)


def finite_diff_gradient(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate."""
    x = np.array(x, dtype=float)
    flat = x.ravel()
    out = np.empty(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise ValueError(f"non-finite function value around coordinate {i}")
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(x.shape)
