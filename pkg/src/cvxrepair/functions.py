"""Convex function oracles: values, subgradients, and a small closed catalog.

Every oracle evaluates ``value`` on a single point of shape ``(n,)`` or on a
stack of points of shape ``(..., n)``; ``subgradient`` works on one point.
The catalog entries (``linear``, ``quadratic``, ``norm_squared``,
``sum_exp``, ``max_affine``) round-trip through plain dicts so that problem
files can describe constraint systems declaratively.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog

from .coremath import as_matrix, as_vector
from .errors import InvalidInputError


class ConvexFunctionOracle:
    """A convex function g: R^n -> R given by value and subgradient callables.

    Use this for user code; catalog functions subclass it.
    """

    kind = "custom"

    def __init__(self, value, subgradient, dim, differentiable=False):
        self._value = value
        self._subgradient = subgradient
        self.dim = int(dim)
        self.differentiable = bool(differentiable)

    def value(self, x):
        return self._value(x)

    def subgradient(self, x) -> np.ndarray:
        return np.asarray(self._subgradient(np.asarray(x, dtype=float)), dtype=float)

    def min_norm_subgradient(self, x) -> np.ndarray:
        # one subgradient is all a black-box oracle offers
        return self.subgradient(x)

    def level_point(self, b):
        """A point with g < b if one is known, else g <= b, else None."""
        return None

    def to_dict(self):
        raise InvalidInputError("custom oracles cannot be serialized")

    def __call__(self, x):
        return self.value(x)


class Linear(ConvexFunctionOracle):
    """g(x) = <a, x> + c."""

    kind = "linear"

    def __init__(self, a, c=0.0):
        self.a = as_vector(a, "a")
        self.c = float(c)
        self.dim = self.a.shape[0]
        self.differentiable = True

    def value(self, x):
        return np.asarray(x, dtype=float) @ self.a + self.c

    def subgradient(self, x):
        return self.a.copy()

    def level_point(self, b):
        nrm2 = float(self.a @ self.a)
        if nrm2 > 0:
            return (b - self.c - 1.0) * self.a / nrm2
        return np.zeros(self.dim) if self.c <= b else None

    def to_dict(self):
        return {"type": self.kind, "a": self.a.tolist(), "c": self.c}


class Quadratic(ConvexFunctionOracle):
    """g(x) = 0.5 x'Qx + q'x + c with Q symmetric positive semidefinite."""

    kind = "quadratic"

    def __init__(self, Q, q=None, c=0.0):
        Q = as_matrix(Q, "Q")
        if Q.shape[0] != Q.shape[1]:
            raise InvalidInputError("Q must be square")
        Q = 0.5 * (Q + Q.T)
        if np.linalg.eigvalsh(Q).min() < -1e-10 * max(1.0, np.abs(Q).max()):
            raise InvalidInputError("Q must be positive semidefinite")
        self.Q = Q
        self.dim = Q.shape[0]
        self.q = np.zeros(self.dim) if q is None else as_vector(q, "q", self.dim)
        self.c = float(c)
        self.differentiable = True

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.Q, x) + x @ self.q + self.c

    def subgradient(self, x):
        return self.Q @ np.asarray(x, dtype=float) + self.q

    def level_point(self, b):
        x = np.linalg.lstsq(self.Q, -self.q, rcond=None)[0]
        if np.linalg.norm(self.Q @ x + self.q) <= 1e-10 * (1 + np.linalg.norm(self.q)):
            if self.value(x) <= b:
                return x
            return None
        # unbounded below along the null-space component of q
        Qp = np.linalg.pinv(self.Q)
        d = -(self.q - self.Q @ (Qp @ self.q))
        t = (self.c - b + 1.0) / float(d @ d)
        return max(t, 0.0) * d

    def to_dict(self):
        return {"type": self.kind, "Q": self.Q.tolist(), "q": self.q.tolist(), "c": self.c}


class NormSquared(ConvexFunctionOracle):
    """g(x) = ||x - center||^2."""

    kind = "norm_squared"

    def __init__(self, center):
        self.center = as_vector(center, "center")
        self.dim = self.center.shape[0]
        self.differentiable = True

    def value(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return np.sum(d * d, axis=-1)

    def subgradient(self, x):
        return 2.0 * (np.asarray(x, dtype=float) - self.center)

    def level_point(self, b):
        return self.center.copy() if b >= 0 else None

    def to_dict(self):
        return {"type": self.kind, "center": self.center.tolist()}


class SumExp(ConvexFunctionOracle):
    """g(x) = sum_j exp(x_j - shift_j)."""

    kind = "sum_exp"

    def __init__(self, dim=None, shift=None):
        if shift is None:
            if dim is None:
                raise InvalidInputError("sum_exp needs dim or shift")
            shift = np.zeros(int(dim))
        self.shift = as_vector(shift, "shift")
        self.dim = self.shift.shape[0]
        self.differentiable = True

    def value(self, x):
        return np.sum(np.exp(np.asarray(x, dtype=float) - self.shift), axis=-1)

    def subgradient(self, x):
        return np.exp(np.asarray(x, dtype=float) - self.shift)

    def level_point(self, b):
        if b <= 0:
            return None
        return self.shift + math.log(b / (2.0 * self.dim))

    def delta(self, b):
        """Smallest gradient norm over the level curve {g = b}, b > 0.

        The gradient there is a positive vector with coordinate sum b, so its
        norm is at least b / sqrt(n), attained at the symmetric point.
        """
        if b <= 0:
            raise InvalidInputError("delta(b) is defined for b > 0 only")
        return b / math.sqrt(self.dim)

    def to_dict(self):
        return {"type": self.kind, "shift": self.shift.tolist()}


class MaxAffine(ConvexFunctionOracle):
    """g(x) = max_j (<A_j, x> + c_j)."""

    kind = "max_affine"
    active_tol = 1e-7

    def __init__(self, A, c=None):
        self.A = as_matrix(A, "A")
        self.dim = self.A.shape[1]
        self.c = np.zeros(self.A.shape[0]) if c is None else as_vector(c, "c", self.A.shape[0])
        self.differentiable = False

    def value(self, x):
        return np.max(np.asarray(x, dtype=float) @ self.A.T + self.c, axis=-1)

    def _pieces(self, x):
        return self.A @ np.asarray(x, dtype=float) + self.c

    def subgradient(self, x):
        return self.A[int(np.argmax(self._pieces(x)))].copy()

    def min_norm_subgradient(self, x):
        vals = self._pieces(x)
        top = vals.max()
        active = np.flatnonzero(vals >= top - self.active_tol * max(1.0, abs(top)))
        G = self.A[active]
        return _min_norm_in_hull(G)

    def level_point(self, b):
        # minimize t subject to A x + c <= t, t >= b - 1
        k, n = self.A.shape
        cost = np.zeros(n + 1)
        cost[-1] = 1.0
        A_ub = np.hstack([self.A, -np.ones((k, 1))])
        bounds = [(None, None)] * n + [(b - 1.0, None)]
        res = linprog(cost, A_ub=A_ub, b_ub=-self.c, bounds=bounds, method="highs")
        if res.status != 0:
            return None
        x = res.x[:n]
        return x if self.value(x) <= b else None

    def to_dict(self):
        return {"type": self.kind, "A": self.A.tolist(), "c": self.c.tolist()}


def _min_norm_in_hull(G: np.ndarray) -> np.ndarray:
    """Minimum-norm point of conv(rows of G), by enumerating supports."""
    k = G.shape[0]
    if k == 1:
        return G[0].copy()
    if k > 10:
        raise InvalidInputError("too many active pieces for exact min-norm subgradient")
    best = None
    best_norm = np.inf
    for r in range(1, k + 1):
        for T in itertools.combinations(range(k), r):
            GT = G[list(T)]
            K = np.zeros((r + 1, r + 1))
            K[:r, :r] = GT @ GT.T
            K[:r, r] = 1.0
            K[r, :r] = 1.0
            rhs = np.zeros(r + 1)
            rhs[r] = 1.0
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            lam = sol[:r]
            if np.any(lam < -1e-12) or abs(lam.sum() - 1.0) > 1e-9:
                continue
            point = lam @ GT
            nrm = np.linalg.norm(point)
            if nrm < best_norm:
                best, best_norm = point, nrm
    return best


CATALOG = {
    "linear": lambda d: Linear(d["a"], d.get("c", 0.0)),
    "quadratic": lambda d: Quadratic(d["Q"], d.get("q"), d.get("c", 0.0)),
    "norm_squared": lambda d: NormSquared(d["center"]),
    "sum_exp": lambda d: SumExp(d.get("dim"), d.get("shift")),
    "max_affine": lambda d: MaxAffine(d["A"], d.get("c")),
}


def function_from_dict(d) -> ConvexFunctionOracle:
    try:
        kind = d["type"]
    except (KeyError, TypeError):
        raise InvalidInputError(f"function entry needs a 'type' field: {d!r}") from None
    if kind not in CATALOG:
        raise InvalidInputError(f"unknown function type {kind!r}; catalog: {sorted(CATALOG)}")
    try:
        return CATALOG[kind](d)
    except KeyError as exc:
        raise InvalidInputError(f"function {kind!r} missing field {exc}") from None
