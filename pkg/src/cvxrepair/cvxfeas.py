"""How far is an inconsistent convex system {g_i(x) <= b_i} from feasibility?

The distance from b to the consistent right-hand sides (in the p-norm on
R^m) satisfies

    d_p(b)^p = inf_x sum_i [g_i(x) - b_i]_+^p,

which ``minimize_residual`` computes directly. ``bound_distance`` brackets
the same number with two smooth weighted distance problems over the
individual sublevel sets S_i = {g_i <= b_i}, using per-constraint bounds on
subgradient norms (generalized Ascoli inequalities).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from . import simproj
from .convexsets import Ball, Box, ConvexSet, SublevelSet
from .coremath import as_matrix, as_vector, pnorm
from .errors import ConvergenceError, DomainError, InvalidInputError, PreconditionError
from .functions import ConvexFunctionOracle, Linear, NormSquared, SumExp

MAX_ITER = 100_000
SUBGRADIENT_ITERS = 2_000
RESIDUAL_CERT_TOL = 1e-6


@dataclass(frozen=True)
class ConvexSystem:
    """Constraints g_i(x) <= b_i, i = 1..m, measured in the p-norm (p >= 2).

    Each S_i must be nonempty: a witness is taken from ``witnesses`` or from
    the oracle's ``level_point``.
    """

    constraints: tuple
    rhs: np.ndarray
    p: float = 2.0
    witnesses: Optional[tuple] = None
    sets: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cons = tuple(self.constraints)
        if not cons:
            raise InvalidInputError("a system needs at least one constraint")
        for g in cons:
            if not isinstance(g, ConvexFunctionOracle):
                raise InvalidInputError(f"constraint {g!r} is not a ConvexFunctionOracle")
        dims = {g.dim for g in cons}
        if len(dims) != 1:
            raise InvalidInputError(f"constraints live in different dimensions {sorted(dims)}")
        rhs = as_vector(self.rhs, "rhs", len(cons))
        p = float(self.p)
        if not math.isfinite(p) or p < 2:
            raise DomainError(f"p must be finite and >= 2, got {p}")
        wit = self.witnesses
        if wit is None:
            wit = (None,) * len(cons)
        elif len(wit) != len(cons):
            raise InvalidInputError(f"{len(wit)} witnesses for {len(cons)} constraints")
        sets = []
        for i, (g, bi, w) in enumerate(zip(cons, rhs, wit)):
            try:
                sets.append(SublevelSet(g, bi, w))
            except InvalidInputError as exc:
                raise InvalidInputError(f"constraint {i}: {exc}") from None
        object.__setattr__(self, "constraints", cons)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "witnesses", tuple(S.witness() for S in sets))
        object.__setattr__(self, "sets", tuple(sets))

    @classmethod
    def from_linear(cls, A, b, p=2.0):
        """The system <a_i, x> <= b_i as catalog ``linear`` constraints."""
        A = as_matrix(A, "A")
        b = as_vector(b, "b", A.shape[0])
        return cls(tuple(Linear(row) for row in A), b, p)

    @property
    def m(self) -> int:
        return len(self.constraints)

    @property
    def dim(self) -> int:
        return self.constraints[0].dim

    def slacks(self, x) -> np.ndarray:
        """g_i(x) - b_i, stacked on the last axis."""
        x = np.asarray(x, dtype=float)
        return np.stack([np.asarray(g.value(x)) for g in self.constraints], axis=-1) - self.rhs

    def start_point(self) -> np.ndarray:
        return np.mean(self.witnesses, axis=0)


def residual_value(system: ConvexSystem, x):
    """sum_i [g_i(x) - b_i]_+^p; accepts a point or a stack of points."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("x has non-finite entries")
    r = np.maximum(system.slacks(x), 0.0)
    out = np.sum(r ** system.p, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def residual_subgradient(system: ConvexSystem, x) -> np.ndarray:
    """sum_i p [g_i(x) - b_i]_+^(p-1) s_i with s_i a subgradient of g_i at x."""
    x = as_vector(x, "x", system.dim)
    r = np.maximum(system.slacks(x), 0.0)
    g = np.zeros_like(x)
    for ri, gi in zip(r, system.constraints):
        if ri > 0:
            g += system.p * ri ** (system.p - 1.0) * gi.subgradient(x)
    return g


@dataclass
class ResidualSolution:
    point: np.ndarray
    value: float
    certificate: float
    status: str
    iterations: int
    p: float = 2.0

    @property
    def distance(self) -> float:
        """value^(1/p): the distance to feasibility."""
        return self.value ** (1.0 / self.p)


def minimize_residual(system: ConvexSystem, x0=None, max_iter=MAX_ITER,
                      subgradient_iters=SUBGRADIENT_ITERS,
                      cert_tol=RESIDUAL_CERT_TOL) -> ResidualSolution:
    """Minimize the residual sum_i [g_i(x) - b_i]_+^p.

    A subgradient phase with steps c/sqrt(k) (c = initial residual over
    initial subgradient norm) locates the basin; a quasi-Newton polish from
    the best iterate then sharpens it, since for p >= 2 the residual is C^1
    whenever the constraints are differentiable. The certificate is the
    subgradient norm at the returned point; ``status`` is ``converged`` when
    it is below ``cert_tol`` (or the value is exactly zero).
    """
    x = system.start_point() if x0 is None else as_vector(x0, "x0", system.dim).copy()
    f = residual_value(system, x)
    best_x, best_f = x.copy(), f
    s = residual_subgradient(system, x)
    s_norm0 = float(np.linalg.norm(s))
    iters = 0
    if f > 0 and s_norm0 > 0:
        c = f / s_norm0
        for k in range(1, min(subgradient_iters, max_iter) + 1):
            iters = k
            s_norm = float(np.linalg.norm(s))
            if s_norm == 0.0:
                break
            x = x - (c / math.sqrt(k)) * s / s_norm
            f = residual_value(system, x)
            if f < best_f:
                best_x, best_f = x.copy(), f
                if f == 0.0:
                    break
            s = residual_subgradient(system, x)
    budget = max_iter - iters
    if best_f > 0 and budget > 0:
        res = minimize(lambda z: residual_value(system, z), best_x,
                       jac=lambda z: residual_subgradient(system, z), method="L-BFGS-B",
                       options={"maxiter": budget, "gtol": 1e-14, "ftol": 1e-16,
                                "maxls": 50})
        iters += int(res.nit)
        if np.all(np.isfinite(res.x)) and res.fun < best_f:
            best_x, best_f = np.asarray(res.x, dtype=float), float(res.fun)
    cert = float(np.linalg.norm(residual_subgradient(system, best_x)))
    status = simproj.CONVERGED if best_f == 0.0 or cert <= cert_tol else simproj.NONCONVERGED
    return ResidualSolution(best_x, float(best_f), cert, status, iters, system.p)


def _residual(S: SublevelSet, x) -> float:
    return max(float(S.func.value(x)) - S.b, 0.0)


def ascoli_lower(S: SublevelSet, x) -> float:
    """[g(x) - b]_+ / ||s||, s the least-norm subgradient at x; never exceeds d_S(x)."""
    x = as_vector(x, "x", S.dim)
    r = _residual(S, x)
    if r == 0.0:
        return 0.0
    nrm = float(np.linalg.norm(S.func.min_norm_subgradient(x)))
    if nrm == 0.0:
        # x minimizes g yet g(x) > b: S would be empty
        raise PreconditionError("zero subgradient at a point outside a nonempty sublevel set")
    return r / nrm


def ascoli_upper(S: SublevelSet, x, uniform=False) -> float:
    """[g(x) - b]_+ / ||s*||, s* the least-norm subgradient at P_S(x); at least d_S(x).

    Needs a Slater point (g < b somewhere). With ``uniform=True`` the
    denominator is replaced by the catalog's lower bound delta(b) on
    subgradient norms over the level curve {g = b}, a weaker bound that
    avoids the projection.
    """
    if S.slater_point is None:
        raise PreconditionError("the upper Ascoli bound needs a Slater point (g < b)")
    x = as_vector(x, "x", S.dim)
    r = _residual(S, x)
    if r == 0.0:
        return 0.0
    if uniform:
        return r / level_curve_gradient_bound(S.func, S.b)
    nrm = float(np.linalg.norm(S.func.min_norm_subgradient(S.project(x))))
    if nrm == 0.0:
        raise PreconditionError("zero subgradient on the boundary despite a Slater point")
    return r / nrm


def level_curve_gradient_bound(func: ConvexFunctionOracle, b) -> float:
    """delta(b): the least subgradient norm over {g = b}, for catalog entries that know it."""
    if isinstance(func, SumExp):
        return func.delta(b)
    if isinstance(func, Linear) and np.any(func.a):
        return float(np.linalg.norm(func.a))
    if isinstance(func, NormSquared) and b > 0:
        return 2.0 * math.sqrt(b)
    raise DomainError(f"no level-curve gradient bound known for {func.kind!r}")


def catalog_lower_bound(func: ConvexFunctionOracle, b) -> Optional[float]:
    """A valid l_i for the lower bound path, or None if the catalog has none.

    Beyond the level curve of a convex function, the subgradients at the
    projection point are bounded below by the same delta(b).
    """
    try:
        return level_curve_gradient_bound(func, b)
    except DomainError:
        return None


@dataclass(frozen=True)
class BoundData:
    """User-supplied constants for ``bound_distance``.

    ``u[i]`` must dominate the least subgradient norm of g_i on C (C = None
    means all of R^n); ``l[i] > 0`` must be dominated by the least subgradient
    norm of g_i at P_{S_i}(x) for every x outside S_i.
    """

    u: np.ndarray
    l: np.ndarray
    C: Optional[ConvexSet] = None
    slater_points: Optional[tuple] = None

    def __post_init__(self):
        u = as_vector(self.u, "u")
        l = as_vector(self.l, "l", u.shape[0])
        if np.any(u < 0):
            raise InvalidInputError("u must be nonnegative")
        if np.any(l <= 0):
            raise InvalidInputError("l must be strictly positive")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "l", l)
        if self.slater_points is not None:
            object.__setattr__(self, "slater_points",
                               tuple(None if s is None else as_vector(s) for s in self.slater_points))


@dataclass
class DistanceBounds:
    lower: Optional[float]
    upper: float
    lower_vector: Optional[np.ndarray]
    upper_vector: np.ndarray
    argmin_points: dict
    status: str = simproj.CONVERGED
    messages: tuple = ()


def _is_vacuous(g, b) -> bool:
    return isinstance(g, Linear) and not np.any(g.a) and g.c <= b


def _weighted_min(sets, weights, p, C, x0, options):
    """argmin of sum w_i^p d_{S_i}^p (+ I_C) -> (point, status, iterations)."""
    if len(sets) == 0:
        x = x0 if C is None else C.project(x0)
        return x, simproj.CONVERGED, 0
    if len(sets) == 1:
        S = sets[0]
        if C is None:
            return S.project(x0), simproj.CONVERGED, 0
        try:
            a, _, it, _ = simproj._alternate(C, S, x0, simproj.P1_TOL,
                                             int(options.get("max_iter", simproj.MAX_ITER)))
        except ConvergenceError as exc:
            return exc.best[0], simproj.NONCONVERGED, exc.iterations
        return a, simproj.CONVERGED, it
    alpha = np.asarray(weights, dtype=float) ** p
    if np.all(alpha == 0):
        alpha = np.ones_like(alpha)
    # zero weights drop out of the objective
    keep = alpha > 0
    sub = [S for S, k in zip(sets, keep) if k]
    if len(sub) < 2:
        return _weighted_min(sub, np.ones(len(sub)), p, C, x0, options)
    problem = simproj.SimProjProblem.build(sub, alpha[keep], p)
    sol = simproj.solve_fixed_point(problem, x0=x0, constraint=C, **options)
    return sol.point, sol.status, sol.iterations


def bound_distance(system: ConvexSystem, data: BoundData, x0=None, **options) -> DistanceBounds:
    """Bracket d_p(b) between ||d^-||_p and ||d^+||_p.

    Upper: minimize sum u_i^p d_{S_i}^p over C, d^+_i = u_i d_{S_i}(x+).
    Lower: minimize sum l_i^p d_{S_i}^p over R^n, d^-_i = l_i d_{S_i}(x-);
    needs a Slater point for every constraint, otherwise ``lower`` is None.
    Vacuous constraints (S_i = R^n) contribute zero and are skipped.
    """
    if data.u.shape[0] != system.m:
        raise InvalidInputError(f"bound data has {data.u.shape[0]} entries for {system.m} constraints")
    if data.C is not None and data.C.dim != system.dim:
        raise InvalidInputError("C lives in a different dimension than the system")
    p = system.p
    active = [i for i, (g, b) in enumerate(zip(system.constraints, system.rhs))
              if not _is_vacuous(g, b)]
    sets = [system.sets[i] for i in active]
    x0 = system.start_point() if x0 is None else as_vector(x0, "x0", system.dim)
    messages = []
    status = simproj.CONVERGED

    x_up, st_up, it_up = _weighted_min(sets, data.u[active], p, data.C, x0, options)
    d_plus = np.zeros(system.m)
    for i in active:
        d_plus[i] = data.u[i] * float(system.sets[i].distance(x_up))
    if st_up != simproj.CONVERGED:
        status = st_up
        messages.append(f"upper-path solve {st_up} after {it_up} iterations")

    slater = data.slater_points
    has_slater = []
    for k, i in enumerate(active):
        pt = None if slater is None else slater[i]
        if pt is None:
            has_slater.append(system.sets[i].slater_point is not None)
        else:
            has_slater.append(float(system.constraints[i].value(pt)) < system.rhs[i])
    lower = lower_vec = x_low = None
    if all(has_slater):
        x_low, st_low, it_low = _weighted_min(sets, data.l[active], p, None, x0, options)
        lower_vec = np.zeros(system.m)
        for i in active:
            lower_vec[i] = data.l[i] * float(system.sets[i].distance(x_low))
        lower = pnorm(lower_vec, p)
        if st_low != simproj.CONVERGED:
            if status == simproj.CONVERGED:
                status = st_low
            messages.append(f"lower-path solve {st_low} after {it_low} iterations")
    else:
        missing = [active[k] for k, ok in enumerate(has_slater) if not ok]
        messages.append(f"no Slater point for constraints {missing}: lower bound skipped")

    return DistanceBounds(lower, pnorm(d_plus, p), lower_vec, d_plus,
                          {"upper": x_up, "lower": x_low}, status, tuple(messages))


def sample_region(C: Optional[ConvexSet], n, count, rng, center=None, scale=1.0) -> np.ndarray:
    """Sample points of C: uniform for boxes and balls, projected Gaussians otherwise."""
    if isinstance(C, Box):
        return rng.uniform(C.lower, C.upper, size=(count, n))
    if isinstance(C, Ball):
        v = rng.standard_normal((count, n))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        r = C.radius * rng.uniform(size=(count, 1)) ** (1.0 / n)
        return C.center + r * v
    center = np.zeros(n) if center is None else center
    pts = center + scale * rng.standard_normal((count, n))
    return pts if C is None else C.project(pts)


def estimate_upper_bounds(system: ConvexSystem, C: Optional[ConvexSet] = None,
                          samples=2000, seed=0, margin=1.0) -> np.ndarray:
    """Heuristic u_i: the largest least-norm subgradient of g_i over sampled points of C.

    Sampling can miss the true supremum, so the result is not guaranteed;
    ``margin`` multiplies it for safety. Prefer analytic bounds when known.
    """
    rng = np.random.default_rng(seed)
    spread = 1.0 + float(np.max(np.ptp(np.array(system.witnesses), axis=0)))
    pts = sample_region(C, system.dim, samples, rng, system.start_point(), spread)
    u = np.zeros(system.m)
    for i, g in enumerate(system.constraints):
        u[i] = max(float(np.linalg.norm(g.min_norm_subgradient(x))) for x in pts)
    return margin * u


def validate_bound_data(system: ConvexSystem, data: BoundData, samples=200, seed=0,
                        tol=1e-12) -> tuple[bool, list]:
    """Spot-check the hypotheses on (u, l, C) by sampling.

    Returns ``(ok, violations)``, each violation a message naming the
    constraint, the sampled point and the offending norm.
    """
    rng = np.random.default_rng(seed)
    spread = 1.0 + float(np.max(np.ptp(np.array(system.witnesses), axis=0)))
    violations = []
    pts = sample_region(data.C, system.dim, samples, rng, system.start_point(), spread)
    for i, g in enumerate(system.constraints):
        for x in pts:
            nrm = float(np.linalg.norm(g.min_norm_subgradient(x)))
            if nrm > data.u[i] * (1 + tol) + tol:
                violations.append(f"u[{i}] = {data.u[i]:.6g} < subgradient norm {nrm:.6g} at {x.tolist()}")
                break
    outside = sample_region(None, system.dim, samples, rng, system.start_point(), 3 * spread)
    for i, (g, S) in enumerate(zip(system.constraints, system.sets)):
        if _is_vacuous(g, system.rhs[i]):
            continue
        for x in outside:
            if float(g.value(x)) <= S.b:
                continue
            P = S.project(x)
            nrm = float(np.linalg.norm(g.min_norm_subgradient(P)))
            if nrm < data.l[i] * (1 - tol) - tol:
                violations.append(f"l[{i}] = {data.l[i]:.6g} > subgradient norm {nrm:.6g} "
                                  f"at projection of {x.tolist()}")
                break
    return not violations, violations


def per_constraint_distances(system: ConvexSystem, points: Sequence) -> np.ndarray:
    """d_{S_i}(x) for each point (rows) and constraint (columns)."""
    return np.array([[float(S.distance(as_vector(x, dim=system.dim))) for S in system.sets]
                     for x in points])
