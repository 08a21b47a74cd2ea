"""First-order and quasi-Newton optimizers for the attack loop.

Adam and SGD operate on a single ndarray parameter (the dummy image or
label logits).  L-BFGS keeps an m=10 two-loop history and uses Armijo
backtracking; when the line search fails it falls back to a steepest
descent step at the smallest trial step length, which keeps the notoriously
unstable L-BFGS attacks moving instead of crashing.
"""

from __future__ import annotations

from collections import deque

import numpy as np


def step_lr(initial: float, iteration: int, total: int,
            boundaries=(0.375, 0.625, 0.875), factor: float = 0.1) -> float:
    """Step decay: lr = initial * factor^(# boundaries passed).

    Boundaries are fractions of the total budget; iteration t has passed
    boundary s when t >= s * total.
    """
    passed = sum(1 for s in boundaries if iteration >= s * total)
    return initial * factor ** passed


class Adam:
    """Bias-corrected Adam (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, lr: float = 0.1, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def update(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(x)
            self.v = np.zeros_like(x)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        return x - self.lr * mhat / (np.sqrt(vhat) + self.eps)


class SGD:
    """Plain SGD with optional heavy-ball momentum."""

    def __init__(self, lr: float = 0.1, momentum: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self.velocity = None

    def update(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.momentum == 0.0:
            return x - self.lr * grad
        if self.velocity is None:
            self.velocity = np.zeros_like(x)
        self.velocity = self.momentum * self.velocity + grad
        return x - self.lr * self.velocity


class LBFGS:
    """Two-loop L-BFGS with Armijo backtracking.

    step(f, x) takes a callback f(x) -> (value, grad) and returns the new
    iterate.  The caller may project the iterate between steps (e.g. clamp
    to [0,1]); cached evaluations are invalidated automatically when the
    incoming x does not match the one this optimizer produced.
    """

    def __init__(self, history: int = 10, armijo_c: float = 1e-4,
                 max_halvings: int = 20):
        self.history = history
        self.c = armijo_c
        self.max_halvings = max_halvings
        self.s_list: deque = deque(maxlen=history)
        self.y_list: deque = deque(maxlen=history)
        self._cache = None  # (x, f, g) at the iterate we produced

    def _direction(self, g: np.ndarray) -> np.ndarray:
        if not self.s_list:
            return -g
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(self.s_list), reversed(self.y_list)):
            rho = 1.0 / np.dot(y, s)
            a = rho * np.dot(s, q)
            alphas.append((a, rho, s, y))
            q -= a * y
        s, y = self.s_list[-1], self.y_list[-1]
        q *= np.dot(s, y) / np.dot(y, y)
        for a, rho, s, y in reversed(alphas):
            b = rho * np.dot(y, q)
            q += (a - b) * s
        return -q

    def prime(self, x: np.ndarray, fx: float, gx: np.ndarray):
        """Record a known evaluation at x so the next step() reuses it."""
        self._cache = (np.asarray(x, dtype=np.float64).copy(), float(fx),
                       np.asarray(gx, dtype=np.float64).copy())

    def step(self, f, x: np.ndarray) -> np.ndarray:
        if self._cache is not None and np.array_equal(self._cache[0], x):
            fx, gx = self._cache[1], self._cache[2]
        else:
            fx, gx = f(x)
        if not np.all(np.isfinite(gx)) or not np.isfinite(fx):
            raise FloatingPointError("non-finite objective in line search")
        if np.max(np.abs(gx)) == 0.0:
            self._cache = (x, fx, gx)
            return x

        d = self._direction(gx)
        slope = np.dot(gx, d)
        if slope >= 0.0:  # history gone stale, restart from steepest descent
            self.s_list.clear()
            self.y_list.clear()
            d = -gx
            slope = np.dot(gx, d)

        t = 1.0
        accepted = None
        for _ in range(self.max_halvings + 1):
            x_try = x + t * d
            f_try, g_try = f(x_try)
            if np.isfinite(f_try) and f_try <= fx + self.c * t * slope:
                accepted = (x_try, f_try, g_try)
                break
            t *= 0.5
        if accepted is None:
            # smallest trial step length, straight down the gradient
            t_min = 0.5 ** self.max_halvings
            x_try = x - t_min * gx
            f_try, g_try = f(x_try)
            accepted = (x_try, f_try, g_try)

        x_new, f_new, g_new = accepted
        s = x_new - x
        y = g_new - gx
        if np.dot(s, y) > 1e-10:  # curvature guard
            self.s_list.append(s)
            self.y_list.append(y)
        else:
            # a failed curvature pair means the stored model is stale; keep
            # it and the direction collapses to a frozen micro-step
            self.s_list.clear()
            self.y_list.clear()
        self._cache = (x_new, f_new, g_new)
        return x_new


def minimize_lbfgs(f, x0, iterations: int = 100, tol: float = 1e-10):
    """Convenience driver; stops when the gradient inf-norm drops below tol.

    Returns (x, f(x), iterations used).
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    opt = LBFGS()
    used = 0
    for i in range(iterations):
        x = opt.step(f, x)
        used = i + 1
        _, g = opt._cache[1], opt._cache[2]
        if np.max(np.abs(g)) < tol:
            break
    return x, opt._cache[1], used
