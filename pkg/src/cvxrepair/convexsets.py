"""Projection and distance oracles for a closed catalog of convex sets.

All distances are Euclidean. Closed-form variants project stacks of points
``(..., n)`` at once; ``Polyhedron`` (Dykstra) and ``SublevelSet`` (cutting
halfspaces) are iterative and loop over stacked inputs.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq, linprog
from scipy.special import wrightomega

from .coremath import as_matrix, as_vector
from .errors import ConvergenceError, InvalidInputError
from .functions import ConvexFunctionOracle, function_from_dict

MEMBERSHIP_TOL = 1e-9

DYKSTRA_TOL = 1e-10
DYKSTRA_MAX_SWEEPS = 100_000

SUBLEVEL_FEAS_TOL = 1e-9
SUBLEVEL_MAX_CUTS = 10_000


class ConvexSet:
    """Nonempty closed convex subset of R^n with a metric projection."""

    kind = "abstract"
    dim: int

    def project(self, x) -> np.ndarray:
        raise NotImplementedError

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.project(x), axis=-1)

    def contains(self, x, tol=MEMBERSHIP_TOL) -> bool:
        return bool(self.distance(as_vector(x, dim=self.dim)) <= tol)

    def witness(self) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise InvalidInputError(f"point has shape {x.shape}, set lives in R^{self.dim}")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("point has non-finite entries")
        return x

    def _project_each(self, x, fn):
        x = self._check_point(x)
        if x.ndim == 1:
            return fn(x)
        flat = x.reshape(-1, self.dim)
        return np.array([fn(row) for row in flat]).reshape(x.shape)


class Halfspace(ConvexSet):
    """{x : <a, x> <= b}."""

    kind = "halfspace"

    def __init__(self, a, b):
        self.a = as_vector(a, "a")
        if not np.any(self.a):
            raise InvalidInputError("halfspace normal must be nonzero")
        self.b = float(b)
        self.dim = self.a.shape[0]
        self._nrm2 = float(self.a @ self.a)

    def project(self, x):
        x = self._check_point(x)
        excess = np.maximum(x @ self.a - self.b, 0.0) / self._nrm2
        return x - excess[..., None] * self.a

    def distance(self, x):
        x = self._check_point(x)
        return np.maximum(x @ self.a - self.b, 0.0) / np.sqrt(self._nrm2)

    def witness(self):
        return self.b * self.a / self._nrm2

    def to_dict(self):
        return {"type": self.kind, "a": self.a.tolist(), "b": self.b}


class Hyperplane(ConvexSet):
    """{x : <a, x> = b}."""

    kind = "hyperplane"

    def __init__(self, a, b):
        self.a = as_vector(a, "a")
        if not np.any(self.a):
            raise InvalidInputError("hyperplane normal must be nonzero")
        self.b = float(b)
        self.dim = self.a.shape[0]
        self._nrm2 = float(self.a @ self.a)

    def project(self, x):
        x = self._check_point(x)
        return x - ((x @ self.a - self.b) / self._nrm2)[..., None] * self.a

    def witness(self):
        return self.b * self.a / self._nrm2

    def to_dict(self):
        return {"type": self.kind, "a": self.a.tolist(), "b": self.b}


class Ball(ConvexSet):
    """Closed Euclidean ball."""

    kind = "ball"

    def __init__(self, center, radius):
        self.center = as_vector(center, "center")
        self.radius = float(radius)
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise InvalidInputError("ball radius must be positive and finite")
        self.dim = self.center.shape[0]

    def project(self, x):
        x = self._check_point(x)
        d = x - self.center
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        scale = np.where(r > self.radius, self.radius / np.where(r > 0, r, 1.0), 1.0)
        return self.center + d * scale

    def distance(self, x):
        x = self._check_point(x)
        return np.maximum(np.linalg.norm(x - self.center, axis=-1) - self.radius, 0.0)

    def witness(self):
        return self.center.copy()

    def to_dict(self):
        return {"type": self.kind, "center": self.center.tolist(), "radius": self.radius}


class Box(ConvexSet):
    """{x : lower <= x <= upper} coordinate-wise."""

    kind = "box"

    def __init__(self, lower, upper):
        self.lower = as_vector(lower, "lower")
        self.upper = as_vector(upper, "upper", self.lower.shape[0])
        if np.any(self.lower > self.upper):
            raise InvalidInputError("box needs lower <= upper")
        self.dim = self.lower.shape[0]

    def project(self, x):
        x = self._check_point(x)
        return np.clip(x, self.lower, self.upper)

    def witness(self):
        return 0.5 * (self.lower + self.upper)

    def to_dict(self):
        return {"type": self.kind, "lower": self.lower.tolist(), "upper": self.upper.tolist()}


class AffineSubspace(ConvexSet):
    """{offset + B t : t in R^k}, B given column-wise (n x k)."""

    kind = "affine"

    def __init__(self, basis, offset):
        self.offset = as_vector(offset, "offset")
        self.dim = self.offset.shape[0]
        B = np.asarray(basis, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        B = as_matrix(B, "basis")
        if B.shape[0] != self.dim:
            raise InvalidInputError("basis rows must match the offset dimension")
        self.basis = B
        # orthonormal basis of the column span
        U, s, _ = np.linalg.svd(B, full_matrices=False)
        rank = int(np.sum(s > 1e-12 * max(1.0, s.max(initial=0.0))))
        self._Q = U[:, :rank]

    def project(self, x):
        x = self._check_point(x)
        return self.offset + ((x - self.offset) @ self._Q) @ self._Q.T

    def witness(self):
        return self.offset.copy()

    def to_dict(self):
        return {"type": self.kind, "basis": self.basis.tolist(), "offset": self.offset.tolist()}


class Polyhedron(ConvexSet):
    """{x : A x <= b}, projected with Dykstra's algorithm over its halfspaces."""

    kind = "polyhedron"

    def __init__(self, A, b, witness=None, tol=DYKSTRA_TOL, max_sweeps=DYKSTRA_MAX_SWEEPS):
        self.A = as_matrix(A, "A")
        self.b = as_vector(b, "b", self.A.shape[0])
        norms = np.linalg.norm(self.A, axis=1)
        if np.any(norms == 0):
            raise InvalidInputError("polyhedron rows must be nonzero")
        self.dim = self.A.shape[1]
        self.tol = tol
        self.max_sweeps = max_sweeps
        self._nrm2 = norms**2
        if witness is None:
            witness = self._find_point()
        witness = as_vector(witness, "witness", self.dim)
        if np.max(self.A @ witness - self.b) > MEMBERSHIP_TOL * max(1.0, norms.max()):
            raise InvalidInputError("polyhedron witness violates the constraints")
        self._witness = witness

    def _find_point(self):
        res = linprog(np.zeros(self.dim), A_ub=self.A, b_ub=self.b,
                      bounds=[(None, None)] * self.dim, method="highs")
        if res.status != 0:
            raise InvalidInputError("polyhedron is empty (feasibility pre-solve failed)")
        return res.x

    def _dykstra(self, x):
        k = self.A.shape[0]
        z = x.copy()
        incr = np.zeros((k, self.dim))
        scale = 1.0 + np.linalg.norm(x)
        for sweep in range(1, self.max_sweeps + 1):
            z_prev = z
            for i in range(k):
                y = z + incr[i]
                excess = y @ self.A[i] - self.b[i]
                z = y - (excess / self._nrm2[i]) * self.A[i] if excess > 0 else y
                incr[i] = y - z
            viol = np.max(self.A @ z - self.b)
            if np.linalg.norm(z - z_prev) <= self.tol * scale and viol <= self.tol * scale:
                return z
        raise ConvergenceError(
            f"Dykstra did not converge in {self.max_sweeps} sweeps", best=z, iterations=sweep
        )

    def project(self, x):
        return self._project_each(x, self._dykstra)

    def witness(self):
        return self._witness.copy()

    def to_dict(self):
        return {"type": self.kind, "A": self.A.tolist(), "b": self.b.tolist(),
                "witness": self._witness.tolist()}


class SublevelSet(ConvexSet):
    """{x : g(x) <= b} for a convex function oracle g.

    Needs a witness with g(witness) <= b; when none is given the oracle's
    ``level_point`` is tried. ``slater_point`` is a witness with g < b, if any.
    """

    kind = "sublevel"

    def __init__(self, func: ConvexFunctionOracle, b, witness=None,
                 feas_tol=SUBLEVEL_FEAS_TOL, max_cuts=SUBLEVEL_MAX_CUTS):
        self.func = func
        self.b = float(b)
        self.dim = func.dim
        self.feas_tol = feas_tol
        self.max_cuts = max_cuts
        if witness is None:
            witness = func.level_point(self.b)
            if witness is None:
                raise InvalidInputError("sublevel set needs a witness point (none could be found)")
        witness = as_vector(witness, "witness", self.dim)
        gw = float(func.value(witness))
        if gw > self.b + feas_tol:
            raise InvalidInputError(f"witness has g = {gw} > b = {self.b}")
        self._witness = witness
        self._slater = witness if gw < self.b else None
        if self._slater is None:
            lp = func.level_point(self.b)
            if lp is not None and float(func.value(lp)) < self.b:
                self._slater = as_vector(lp)
        self._closed_form = _closed_form_sublevel(func, self.b)

    @property
    def slater_point(self):
        return None if self._slater is None else self._slater.copy()

    def witness(self):
        return self._witness.copy()

    def project(self, x):
        if self._closed_form is not None:
            return self._closed_form.project(x)
        return self._project_each(x, lambda row: project_sublevel(self, row))

    def distance(self, x):
        if self._closed_form is not None:
            return self._closed_form.distance(x)
        return super().distance(x)

    def to_dict(self):
        return {"type": self.kind, "function": self.func.to_dict(), "b": self.b,
                "witness": self._witness.tolist()}


def _project_onto_cuts(x, C, d, start, max_iter=10_000):
    """Primal active-set solve of min 0.5||z - x||^2 s.t. C z <= d.

    ``start`` must satisfy every cut. Identity Hessian keeps each
    equality-constrained subproblem an orthogonal projection.
    """
    z = start.copy()
    work: list[int] = []
    scale = 1.0 + np.linalg.norm(x) + np.linalg.norm(start)
    for _ in range(max_iter):
        if len(work) >= z.shape[0]:
            p = np.zeros_like(z)
        elif work:
            Q, _ = np.linalg.qr(C[work].T)
            p = (x - z) - Q @ (Q.T @ (x - z))
        else:
            p = x - z
        if np.linalg.norm(p) <= 1e-13 * scale:
            if not work:
                return z
            nu = np.linalg.lstsq(C[work].T, x - z, rcond=None)[0]
            j = int(np.argmin(nu))
            if nu[j] >= -1e-12 * scale:
                return z
            work.pop(j)
            continue
        Cp = C @ p
        slack = d - C @ z
        alpha, block = 1.0, None
        for i in np.flatnonzero(Cp > 1e-15 * np.linalg.norm(p)):
            if i in work:
                continue
            t = max(slack[i], 0.0) / Cp[i]
            if t < alpha:
                alpha, block = t, int(i)
        z = z + alpha * p
        if block is not None:
            work.append(block)
    raise ConvergenceError("active-set projection did not terminate", best=z)


def project_sublevel(S: SublevelSet, x) -> np.ndarray:
    """Project onto {g <= b} by accumulating subgradient cuts.

    Each iterate y_k is the projection of x onto the intersection of the cuts
    {z : g(y_j) + <s_j, z - y_j> <= b}, an outer approximation of S, so
    ||x - y_k|| never exceeds the true distance. Stops once g(y_k) <= b + tol.
    """
    x = S._check_point(x)
    g, b = S.func, S.b
    if float(g.value(x)) <= b + S.feas_tol:
        return x.copy()
    start = S._witness
    rows, rhs = [], []
    y = x
    for k in range(S.max_cuts):
        gy = float(g.value(y))
        s = g.subgradient(y)
        if not np.any(s):
            raise InvalidInputError("zero subgradient outside the set: sublevel set is empty")
        rows.append(s)
        rhs.append(b - gy + s @ y)
        y = _project_onto_cuts(x, np.array(rows), np.array(rhs), start)
        if float(g.value(y)) <= b + S.feas_tol:
            return y
    raise ConvergenceError(f"sublevel projection used {S.max_cuts} cuts", best=y, iterations=S.max_cuts)


def project(S: ConvexSet, x) -> np.ndarray:
    return S.project(x)


def distance(S: ConvexSet, x):
    d = S.distance(x)
    return float(d) if np.ndim(d) == 0 else d


def ascoli_distance(a, b, x) -> float:
    """[<a,x> - b]_+ / ||a||: distance from x to the halfspace {<a,.> <= b}."""
    a = as_vector(a, "a")
    x = as_vector(x, "x", a.shape[0])
    nrm = np.linalg.norm(a)
    if nrm == 0:
        raise InvalidInputError("normal vector must be nonzero")
    return max(float(a @ x) - float(b), 0.0) / nrm


class _SumExpSublevel(ConvexSet):
    """{x : sum_j exp(x_j - s_j) <= b}, b > 0, projected by a scalar root find.

    The nearest point is y_j = x_j - W(lam exp(x_j - s_j)) for the multiplier
    lam > 0; with mu = log(lam) and the Wright omega function
    w(t) = W(exp(t)) the constraint reads log sum_j w(mu + z_j) - mu = log b
    (z = x - s), whose left side is strictly decreasing in mu.
    """

    kind = "sum_exp_sublevel"

    def __init__(self, shift, b):
        self.shift = as_vector(shift, "shift")
        self.log_b = float(np.log(b))
        self.dim = self.shift.shape[0]

    def _one(self, x):
        z = x - self.shift
        zmax = float(z.max())
        if zmax + np.log(np.sum(np.exp(z - zmax))) <= self.log_b:
            return x.copy()

        def h(mu):
            return float(np.log(np.sum(wrightomega(mu + z))) - mu - self.log_b)

        # below lo every omega is exp(.) to full precision, so h(lo) > 0
        # unless x is outside only by rounding
        lo = -zmax - 40.0
        if h(lo) <= 0:
            return x.copy()
        hi = max(1.0, abs(self.log_b) + 1.0)
        while h(hi) > 0:
            hi *= 2.0
        mu = brentq(h, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return x - wrightomega(mu + z)

    def project(self, x):
        return self._project_each(x, self._one)

    def witness(self):
        return self.shift + self.log_b - np.log(self.dim)


def _closed_form_sublevel(func, b):
    """A closed-form set equal to {g <= b} for catalog entries that have one."""
    from .functions import Linear, NormSquared, SumExp

    if isinstance(func, Linear) and np.any(func.a):
        return Halfspace(func.a, b - func.c)
    if isinstance(func, NormSquared) and b > 0:
        return Ball(func.center, np.sqrt(b))
    if isinstance(func, SumExp) and b > 0:
        return _SumExpSublevel(func.shift, b)
    return None


def sublevel_set(func: ConvexFunctionOracle, b, witness=None) -> SublevelSet:
    """{g <= b}; halfspaces and balls from the catalog project in closed form."""
    return SublevelSet(func, b, witness)


def set_from_dict(d) -> ConvexSet:
    try:
        kind = d["type"]
        if kind == "halfspace":
            return Halfspace(d["a"], d["b"])
        if kind == "hyperplane":
            return Hyperplane(d["a"], d["b"])
        if kind == "ball":
            return Ball(d["center"], d["radius"])
        if kind == "box":
            return Box(d["lower"], d["upper"])
        if kind == "affine":
            return AffineSubspace(d["basis"], d["offset"])
        if kind == "polyhedron":
            return Polyhedron(d["A"], d["b"], d.get("witness"))
        if kind == "sublevel":
            return SublevelSet(function_from_dict(d["function"]), d["b"], d.get("witness"))
    except KeyError as exc:
        raise InvalidInputError(f"set entry missing field {exc}: {d!r}") from None
    except TypeError:
        raise InvalidInputError(f"malformed set entry: {d!r}") from None
    raise InvalidInputError(f"unknown set type {kind!r}")
