"""Minimal weighted distance to a family of convex sets, and the smallest
translations of the sets that make them intersect.

The objective is ``f(x) = sum_i alpha_i d(x, S_i)^p``. Supported regimes:

* ``p == 1, m == 2`` -- alternating projections between the two sets;
* ``1 < p, m == 2`` -- fixed points of a weighted average of P_1 and P_2;
* ``p >= 2, any m`` -- weighted projection averaging (with an Armijo
  gradient-descent fallback when the averaging step fails to decrease f).

A minimizer x gives translations u_i = x - P_i(x); x lies in every S_i + u_i.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .convexsets import ConvexSet
from .coremath import WeightedPNorm, as_vector, weighted_pnorm
from .errors import ConvergenceError, DomainError, InvalidInputError

STEP_TOL = 1e-10
CERT_TOL = 1e-7
MAX_ITER = 100_000
BLOWUP_FACTOR = 1e8
CONSTANCY_TOL = 1e-6
P1_TOL = 1e-12

CONVERGED = "converged"
NONCONVERGED = "nonconverged"
NONATTAINMENT = "nonattainment-suspected"


@dataclass(frozen=True)
class SimProjProblem:
    sets: tuple
    weights: WeightedPNorm

    def __post_init__(self):
        sets = tuple(self.sets)
        object.__setattr__(self, "sets", sets)
        if len(sets) < 2:
            raise InvalidInputError("need at least two sets")
        if len(sets) != self.weights.m:
            raise InvalidInputError(f"{len(sets)} sets but {self.weights.m} weights")
        dims = {S.dim for S in sets}
        if len(dims) != 1:
            raise InvalidInputError(f"sets live in different dimensions {sorted(dims)}")
        p, m = self.weights.power, len(sets)
        if p < 2 and m > 2:
            raise DomainError(f"p = {p} with m = {m} sets is unsupported (needs m = 2 or p >= 2)")

    @classmethod
    def build(cls, sets: Sequence[ConvexSet], alpha=None, p=2.0):
        if alpha is None:
            alpha = [1.0] * len(sets)
        return cls(tuple(sets), WeightedPNorm(tuple(alpha), p))

    @property
    def dim(self) -> int:
        return self.sets[0].dim

    @property
    def m(self) -> int:
        return len(self.sets)

    @property
    def p(self) -> float:
        return self.weights.power

    @property
    def alpha(self) -> np.ndarray:
        return self.weights.as_array()

    def start_point(self) -> np.ndarray:
        return np.mean([S.witness() for S in self.sets], axis=0)


@dataclass
class SimProjSolution:
    problem: SimProjProblem
    point: np.ndarray
    value: float
    translations: tuple
    status: str = CONVERGED
    iterations: int = 0
    step_residual: float = 0.0
    gradient_residual: Optional[float] = None
    fixed_point_residual: Optional[float] = None
    method: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def translated_witness(self) -> np.ndarray:
        return self.point


def objective(problem: SimProjProblem, x):
    """sum_i alpha_i d(x, S_i)^p; accepts a point or a stack of points."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for a, S in zip(problem.alpha, problem.sets):
        total = total + a * np.asarray(S.distance(x)) ** problem.p
    return total


def grad_dist_pow(S: ConvexSet, x, p) -> np.ndarray:
    """Gradient of d_S^p: p d_S(x)^(p-2) (x - P_S(x)).

    Defined everywhere for p >= 2; for 1 < p < 2 only off the set.
    """
    p = float(p)
    if p <= 1:
        raise DomainError("d_S^p is not differentiable on the boundary for p <= 1")
    x = as_vector(x, dim=S.dim)
    disp = x - S.project(x)
    d = np.linalg.norm(disp)
    if d == 0.0:
        if p < 2:
            raise DomainError(f"gradient of d_S^{p} undefined at points of S")
        return np.zeros_like(x)
    return p * d ** (p - 2.0) * disp


def gradient_residual(problem: SimProjProblem, x) -> float:
    """||sum_i alpha_i grad d_i^p(x)||; inf where the gradient is undefined."""
    x = as_vector(x, dim=problem.dim)
    g = np.zeros_like(x)
    for a, S in zip(problem.alpha, problem.sets):
        try:
            g += a * grad_dist_pow(S, x, problem.p)
        except DomainError:
            return float("inf")
    return float(np.linalg.norm(g))


def pair_weights(alpha, p) -> np.ndarray:
    """alpha_i^(1/(p-1)), normalized: weights of the two-set fixed-point map."""
    c = np.asarray(alpha, dtype=float) ** (1.0 / (p - 1.0))
    return c / c.sum()


def fixed_point_map(problem: SimProjProblem, x) -> np.ndarray:
    """c_1 P_1(x) + c_2 P_2(x) with c from ``pair_weights`` (two sets, p > 1)."""
    if problem.m != 2 or problem.p <= 1:
        raise DomainError("the fixed-point map is defined for two sets and p > 1")
    x = as_vector(x, dim=problem.dim)
    c = pair_weights(problem.alpha, problem.p)
    return c[0] * problem.sets[0].project(x) + c[1] * problem.sets[1].project(x)


def _make_solution(problem, x, status, iterations, step, method, **kw):
    x = np.asarray(x, dtype=float)
    translations = tuple(x - S.project(x) for S in problem.sets)
    value = float(sum(a * np.linalg.norm(u) ** problem.p
                      for a, u in zip(problem.alpha, translations)))
    fpr = None
    if problem.m == 2 and problem.p > 1:
        fpr = float(np.linalg.norm(x - fixed_point_map(problem, x)))
    gres = gradient_residual(problem, x) if problem.p > 1 else None
    return SimProjSolution(problem, x, value, translations, status, iterations, float(step),
                           gres, fpr, method, kw)


def _alternate(S1: ConvexSet, S2: ConvexSet, x0, tol, max_iter):
    """Alternating projections seeded in S1; returns (a in S1, P_2(a), iters, step)."""
    x = S1.project(as_vector(x0, dim=S1.dim))
    step = np.inf
    for k in range(1, max_iter + 1):
        y = S2.project(x)
        x_new = S1.project(y)
        step = float(np.linalg.norm(x_new - x))
        x = x_new
        if step <= tol * max(1.0, np.linalg.norm(x)):
            return x, S2.project(x), k, step
    raise ConvergenceError(
        f"alternating projections did not settle in {max_iter} iterations "
        f"(the minimal gap may not be attained)",
        best=(x, S2.project(x)), iterations=max_iter,
    )


def set_gap(S1: ConvexSet, S2: ConvexSet, x0=None, tol=P1_TOL, max_iter=MAX_ITER) -> float:
    """d(S1, S2) via alternating projections."""
    x0 = S1.witness() if x0 is None else x0
    a, b, _, _ = _alternate(S1, S2, x0, tol, max_iter)
    return float(np.linalg.norm(a - b))


def solve_p1_unequal(S1: ConvexSet, S2: ConvexSet, alpha=(0.75, 0.25), x0=None,
                     tol=P1_TOL, max_iter=MAX_ITER) -> SimProjSolution:
    """p = 1, alpha_1 > alpha_2: minimizers are the points of S1 nearest to S2."""
    a1, a2 = (float(a) for a in alpha)
    if not (a1 > a2 > 0):
        raise InvalidInputError("solve_p1_unequal needs alpha_1 > alpha_2 > 0")
    problem = SimProjProblem.build([S1, S2], [a1, a2], 1.0)
    x0 = S1.witness() if x0 is None else x0
    try:
        a, _, iters, step = _alternate(S1, S2, x0, tol, max_iter)
    except ConvergenceError as exc:
        best = _make_solution(problem, exc.best[0], NONCONVERGED, max_iter, np.nan,
                              "alternating-projections")
        raise ConvergenceError(str(exc), best=best, iterations=max_iter) from None
    return _make_solution(problem, a, CONVERGED, iters, step, "alternating-projections")


def solve_p1_equal(S1: ConvexSet, S2: ConvexSet, x0=None, tol=P1_TOL,
                   max_iter=MAX_ITER) -> SimProjSolution:
    """p = 1, equal weights: value d(S1, S2)/2, midpoint of a nearest pair returned."""
    problem = SimProjProblem.build([S1, S2], [0.5, 0.5], 1.0)
    x0 = S1.witness() if x0 is None else x0
    try:
        a, b, iters, step = _alternate(S1, S2, x0, tol, max_iter)
    except ConvergenceError as exc:
        a, b = exc.best
        best = _make_solution(problem, 0.5 * (a + b), NONCONVERGED, max_iter, np.nan,
                              "alternating-projections-midpoint")
        raise ConvergenceError(str(exc), best=best, iterations=max_iter) from None
    sol = _make_solution(problem, 0.5 * (a + b), CONVERGED, iters, step,
                         "alternating-projections-midpoint", nearest_pair=(a, b))
    sol.extra["gap"] = float(np.linalg.norm(a - b))
    return sol


def membership_p1_equal(S1: ConvexSet, S2: ConvexSet, x, tol=1e-8, gap=None) -> bool:
    """Whether x minimizes (d_1 + d_2)/2.

    True when x sits strictly between P_1(x) and P_2(x), or x is in one set
    and attains half the gap between the sets.
    """
    x = as_vector(x, dim=S1.dim)
    p1, p2 = S1.project(x), S2.project(x)
    d1, d2 = np.linalg.norm(x - p1), np.linalg.norm(x - p2)
    if d1 > tol and d2 > tol and d1 + d2 - np.linalg.norm(p1 - p2) <= tol:
        return True
    if d1 > tol and d2 > tol:
        return False
    if gap is None:
        gap = set_gap(S1, S2)
    return bool(abs(0.5 * (d1 + d2) - 0.5 * gap) <= tol)


def _weighted_average_step(problem, x, proj, pair_map=True):
    """One averaging step; weights follow the stationarity condition."""
    p, alpha = problem.p, problem.alpha
    if problem.m == 2 and pair_map:
        c = pair_weights(alpha, p)
    elif p == 2.0:
        c = alpha
    else:
        d = np.array([np.linalg.norm(x - P) for P in proj])
        c = alpha * d ** (p - 2.0)
        if c.sum() == 0.0:
            return x
        c = c / c.sum()
    return sum(ci * P for ci, P in zip(c, proj))


def _value_from(problem, x, proj) -> float:
    return float(sum(a * np.linalg.norm(x - P) ** problem.p
                     for a, P in zip(problem.alpha, proj)))


def _full_gradient(problem, x, proj):
    g = np.zeros_like(x)
    for a, P in zip(problem.alpha, proj):
        disp = x - P
        d = np.linalg.norm(disp)
        if d > 0:
            g += a * problem.p * d ** (problem.p - 2.0) * disp
    return g


def _curvature(problem, x, proj) -> float:
    """p * sum alpha_i d_i^(p-2): inverse of the averaging step length."""
    d = np.array([np.linalg.norm(x - P) for P in proj])
    if problem.p == 2.0:
        return 2.0 * float(problem.alpha.sum())
    return problem.p * float(np.sum(problem.alpha * d ** (problem.p - 2.0)))


def projected_gradient_residual(problem: SimProjProblem, constraint: ConvexSet, x) -> float:
    """Norm of the projected-gradient mapping of f + I_C at x (zero iff x is optimal)."""
    x = constraint.project(as_vector(x, dim=problem.dim))
    proj = [S.project(x) for S in problem.sets]
    curv = _curvature(problem, x, proj)
    if curv == 0.0:
        return 0.0
    t = 1.0 / curv
    g = _full_gradient(problem, x, proj)
    return float(np.linalg.norm(x - constraint.project(x - t * g)) / t)


def solve_fixed_point(problem: SimProjProblem, x0=None, tol=STEP_TOL, cert_tol=CERT_TOL,
                      max_iter=MAX_ITER, blowup_factor=BLOWUP_FACTOR,
                      constraint: Optional[ConvexSet] = None) -> SimProjSolution:
    """Minimize sum alpha_i d_i^p for (p > 1, m = 2) or (p >= 2, any m).

    Two sets: iterate x <- c_1 P_1(x) + c_2 P_2(x), c_i proportional to
    alpha_i^(1/(p-1)); its fixed points are exactly the minimizers. More sets:
    x <- sum w_i(x) P_i(x) with w_i proportional to alpha_i d_i(x)^(p-2),
    falling back to Armijo gradient descent once a step fails to decrease f.

    With ``constraint`` (a set C) the minimization is over C: every averaging
    step is followed by a projection onto C, and the certificate is the
    projected-gradient residual.

    A run is ``converged`` when the step is below ``tol`` and the certificate
    below ``cert_tol``; ``nonattainment-suspected`` when the iterate drifts
    farther than ``blowup_factor`` times the initial scale, or keeps escaping
    when the budget runs out.
    """
    p, m = problem.p, problem.m
    if p <= 1:
        raise DomainError("solve_fixed_point needs p > 1; use the p = 1 solvers")
    if constraint is not None and p < 2:
        raise DomainError("the constrained variant needs p >= 2")
    x = problem.start_point() if x0 is None else as_vector(x0, "x0", problem.dim).copy()
    C = constraint
    if C is not None:
        x = C.project(x)
    start = x.copy()
    scale = max(1.0, float(np.linalg.norm(start)),
                max(float(np.linalg.norm(S.witness() - start)) for S in problem.sets))
    pair_map = m == 2 and C is None
    method = "pair-fixed-point" if pair_map else "weighted-averaging"
    if C is not None:
        method += "+projection"

    def certificate(x):
        if C is None:
            return gradient_residual(problem, x)
        return projected_gradient_residual(problem, C, x)

    def finish(x, status, k, step):
        sol = _make_solution(problem, x, status, k, step, method)
        if C is not None:
            sol.gradient_residual = certificate(x)
            sol.extra["constraint"] = C
        return sol

    use_descent = False
    proj = [S.project(x) for S in problem.sets]
    f_x = _value_from(problem, x, proj)
    step = np.inf
    # (iteration, distance from start, objective) at powers of two
    checkpoints = []
    for k in range(1, max_iter + 1):
        if use_descent:
            x_new, proj_new, f_new = _armijo_step(problem, x, proj, f_x, C)
        else:
            x_new = _weighted_average_step(problem, x, proj, pair_map)
            if C is not None:
                x_new = C.project(x_new)
            proj_new = [S.project(x_new) for S in problem.sets]
            f_new = _value_from(problem, x_new, proj_new)
            # no strict decrease on a real move: averaging may be cycling
            moved = np.linalg.norm(x_new - x) > tol
            if not pair_map and (f_new > f_x * (1 + 1e-12) or (moved and f_new >= f_x)):
                use_descent = True
                method = "armijo-descent" + ("+projection" if C is not None else "")
                x_new, proj_new, f_new = _armijo_step(problem, x, proj, f_x, C)
        step = float(np.linalg.norm(x_new - x))
        x, proj, f_x = x_new, proj_new, f_new
        drift = float(np.linalg.norm(x - start))
        if drift > blowup_factor * scale:
            return finish(x, NONATTAINMENT, k, step)
        if k & (k - 1) == 0:
            checkpoints.append((k, drift, f_x))
        if step <= tol or step <= 1e-15 * np.linalg.norm(x):
            if certificate(x) <= cert_tol:
                return finish(x, CONVERGED, k, step)
            if step == 0.0:
                break
    checkpoints.append((k, float(np.linalg.norm(x - start)), f_x))
    status = NONATTAINMENT if _drifting(checkpoints, scale) else NONCONVERGED
    return finish(x, status, k, step)


def _drifting(checkpoints, scale) -> bool:
    """Budget ran out while the iterate kept escaping.

    Over the last three doubling checkpoints the distance from the start grew
    by non-decaying increments, exceeded the problem scale, and the objective
    kept falling. A converging sequence has geometrically shrinking
    increments instead.
    """
    if len(checkpoints) < 3:
        return False
    (_, d0, f0), (_, d1, f1), (_, d2, f2) = checkpoints[-3:]
    inc_prev, inc_last = d1 - d0, d2 - d1
    return (inc_prev > 0 and inc_last >= 0.5 * inc_prev and d2 > scale
            and f2 < f1 < f0)


def _armijo_step(problem, x, proj, f_x, C=None, sigma=1e-4):
    g = _full_gradient(problem, x, proj)
    if not np.any(g):
        return x, proj, f_x
    curv = _curvature(problem, x, proj)
    t = 1.0 / curv if curv > 0 else 1.0
    noise = 64 * np.finfo(float).eps * max(1.0, abs(f_x))
    trials = []
    for _ in range(60):
        x_new = x - t * g
        if C is not None:
            x_new = C.project(x_new)
        if np.array_equal(x_new, x):
            break
        proj_new = [S.project(x_new) for S in problem.sets]
        f_new = _value_from(problem, x_new, proj_new)
        # compare the decrease itself: f_x + tiny rounds back to f_x near the minimum
        if f_new - f_x <= sigma * float(g @ (x_new - x)):
            return x_new, proj_new, f_new
        trials.append((x_new, proj_new, f_new))
        t *= 0.5
    # f cannot resolve the remaining decrease: settle for a smaller gradient
    g_norm = np.linalg.norm(g)
    for x_new, proj_new, f_new in trials:
        if abs(f_new - f_x) <= noise and \
                np.linalg.norm(_full_gradient(problem, x_new, proj_new)) <= 0.9 * g_norm:
            return x_new, proj_new, f_new
    return x, proj, f_x


def solve(problem: SimProjProblem, x0=None, **options) -> SimProjSolution:
    """Dispatch to the solver for the problem's regime."""
    if problem.p == 1.0:
        if problem.m != 2:
            raise DomainError("p = 1 is supported for two sets only")
        a1, a2 = problem.alpha
        S1, S2 = problem.sets
        p1_opts = {k: v for k, v in options.items() if k in ("tol", "max_iter")}
        if abs(a1 - a2) <= 1e-12:
            return solve_p1_equal(S1, S2, x0=x0, **p1_opts)
        if a1 > a2:
            return solve_p1_unequal(S1, S2, (a1, a2), x0=x0, **p1_opts)
        sol = solve_p1_unequal(S2, S1, (a2, a1), x0=x0, **p1_opts)
        return _make_solution(problem, sol.point, sol.status, sol.iterations,
                              sol.step_residual, sol.method)
    return solve_fixed_point(problem, x0=x0, **options)


def extract_translations(solution: SimProjSolution) -> tuple:
    """u_i = x - P_i(x) at the solution point; the point lies in every S_i + u_i."""
    if not solution.converged:
        raise InvalidInputError(f"solution status is {solution.status!r}, not converged")
    x = solution.point
    return tuple(x - S.project(x) for S in solution.problem.sets)


def translation_norm(solution: SimProjSolution) -> float:
    """Weighted p-norm of the translations; equals value^(1/p) at a solution."""
    return weighted_pnorm(extract_translations(solution), solution.problem.weights)


def displacement_constancy_check(problem: SimProjProblem, points, cert_tol=CERT_TOL,
                                 tol=CONSTANCY_TOL):
    """Max over sets of the diameter of {x - P_i(x)} over certified minimizers.

    Returns ``(passed, deviation)``.
    """
    if problem.p <= 1:
        raise DomainError("displacement constancy is checked for p > 1 only")
    pts = [as_vector(x, dim=problem.dim) for x in points]
    for x in pts:
        r = gradient_residual(problem, x)
        if not r <= cert_tol:
            raise InvalidInputError(f"point {x} is not a certified minimizer (residual {r:.3e})")
    dev = 0.0
    for S in problem.sets:
        disp = np.array([x - S.project(x) for x in pts])
        for i in range(len(disp)):
            for j in range(i + 1, len(disp)):
                dev = max(dev, float(np.linalg.norm(disp[i] - disp[j])))
    return dev <= tol, dev
