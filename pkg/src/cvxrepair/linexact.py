"""Exact Euclidean distance to feasibility for linear inequality systems.

For Ax <= b the smallest right-hand-side increase h >= 0 that makes the
system consistent solves

    min <h, h>  s.t.  Ax <= b + h,  h >= 0,

and a pair (x0, h0) is optimal iff [A x0 - b]_+ = h0 and A' h0 = 0. Such an
x0 is a stationary point of sum_i ||a_i||^2 d(x, H_i)^2 over the halfspaces
H_i = {<a_i, .> <= b_i}, which ``solve_exact`` finds by weighted projection
averaging. h0 is unique even when x0 is not.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog

from .coremath import as_matrix, as_vector
from .errors import InvalidInputError, UnsupportedSizeError

ITERATE_TOL = 1e-12
CERT_TOL = 1e-8
KKT_TOL = 1e-7
MAX_ITER = 1_000_000
ENUM_CAP = 12
# try an active-set jump this often during the averaging iteration
NEWTON_EVERY = 25

CONVERGED = "converged"
NONCONVERGED = "nonconverged"


@dataclass(frozen=True)
class LinearSystem:
    """<a_i, x> <= b_i for the rows a_i of A.

    A zero row is accepted only with b_i > 0, where it is vacuous.
    """

    A: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        b = as_vector(self.rhs, "rhs", A.shape[0])
        zero = ~np.any(A, axis=1)
        bad = np.flatnonzero(zero & (b <= 0))
        if bad.size:
            raise InvalidInputError(f"rows {bad.tolist()} are zero with rhs <= 0 (empty or non-Slater constraint)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "rhs", b)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def slack(self, x) -> np.ndarray:
        return self.A @ as_vector(x, "x", self.n) - self.rhs

    def to_convex_system(self, p=2.0):
        from .cvxfeas import ConvexSystem

        return ConvexSystem.from_linear(self.A, self.rhs, p)

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.rhs.tolist()}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["A"], d["b"])
        except KeyError as exc:
            raise InvalidInputError(f"linear system missing field {exc}") from None


@dataclass
class RepairCertificate:
    x0: np.ndarray
    h0: np.ndarray
    repaired_rhs: np.ndarray
    status: str = CONVERGED
    iterations: int = 0
    fixed_point_residual: float = 0.0
    multipliers: Optional[tuple] = None

    def __post_init__(self):
        self.x0 = as_vector(self.x0, "x0")
        self.h0 = as_vector(self.h0, "h0")
        self.repaired_rhs = as_vector(self.repaired_rhs, "repaired_rhs", self.h0.shape[0])
        if self.multipliers is None:
            self.multipliers = (2.0 * self.h0, np.zeros_like(self.h0))

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.h0))

    @property
    def lam(self) -> np.ndarray:
        return self.multipliers[0]

    @property
    def mu(self) -> np.ndarray:
        return self.multipliers[1]

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def _averaging_step(A, b, row_sq, x):
    # sum_i w_i P_{H_i}(x) with w_i = ||a_i||^2 / sum ||a_j||^2
    r = np.maximum(A @ x - b, 0.0)
    return x - (A.T @ r) / row_sq.sum()


def _objective(A, b, x) -> float:
    r = np.maximum(A @ x - b, 0.0)
    return float(r @ r)


def _line_minimum(r, s) -> float:
    """argmin over t >= 0 of sum_i [r_i + t s_i]_+^2 (convex, piecewise quadratic)."""
    def slope(t):
        return float(s @ np.maximum(r + t * s, 0.0))

    if slope(0.0) >= 0.0:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        kinks = -r / s
    kinks = np.sort(kinks[np.isfinite(kinks) & (kinks > 0)])
    lo = 0.0
    for hi in np.append(kinks, np.inf):
        # the active rows do not change on (lo, hi), so the slope is affine there
        mid = lo + 1.0 if np.isinf(hi) else 0.5 * (lo + hi)
        act = r + mid * s > 0
        c2 = float(s[act] @ s[act])
        t = -float(s[act] @ r[act]) / c2 if c2 > 0 else np.inf
        if t <= hi:
            return max(t, lo)
        lo = hi
    return lo  # pragma: no cover - the slope is eventually nonnegative


def _active_set_jump(A, b, x):
    """Least-squares correction on the rows currently violated (or tight),
    with an exact line search along it."""
    r = A @ x - b
    idx = np.flatnonzero(r > -1e-12 * (1.0 + np.abs(b)))
    if idx.size == 0:
        return x
    d = -np.linalg.lstsq(A[idx], r[idx], rcond=None)[0]
    return x + _line_minimum(r, A @ d) * d


def solve_exact(system: LinearSystem, x_start=None, seed=None, tol=ITERATE_TOL,
                cert_tol=CERT_TOL, max_iter=MAX_ITER, accelerate=True) -> RepairCertificate:
    """Nearest consistent right-hand side b + h0 and a witness x0.

    Iterates x <- sum_i w_i P_{H_i}(x), w_i proportional to ||a_i||^2, whose
    fixed points are the stationary points of sum_i ||a_i||^2 d(x, H_i)^2.
    Every ``NEWTON_EVERY`` steps a least-squares jump on the currently
    violated rows is tried and kept only if it lowers the objective; this
    leaves the fixed points unchanged but skips the slow linear tail
    (``accelerate=False`` runs the plain iteration).
    """
    A, b = system.A, system.rhs
    keep = np.any(A, axis=1)  # zero rows are vacuous
    Ak, bk = A[keep], b[keep]
    n = system.n
    if x_start is not None:
        x = as_vector(x_start, "x_start", n).copy()
    elif seed is not None:
        scale = 1.0 + float(np.abs(b).max(initial=0.0))
        x = scale * np.random.default_rng(seed).standard_normal(n)
    else:
        x = np.zeros(n)
    if Ak.shape[0] == 0:
        return _certificate(system, x, CONVERGED, 0, 0.0)
    row_sq = np.sum(Ak * Ak, axis=1)
    step = np.inf
    for k in range(1, max_iter + 1):
        x_new = _averaging_step(Ak, bk, row_sq, x)
        if accelerate and k % NEWTON_EVERY == 0:
            x_jump = _active_set_jump(Ak, bk, x_new)
            if np.all(np.isfinite(x_jump)) and _objective(Ak, bk, x_jump) < _objective(Ak, bk, x_new):
                x_new = x_jump
        step = float(np.linalg.norm(x_new - x))
        x = x_new
        if step <= tol * (1.0 + np.linalg.norm(x)):
            fpr = float(np.linalg.norm(_averaging_step(Ak, bk, row_sq, x) - x))
            cert = _certificate(system, x, CONVERGED, k, fpr)
            if np.linalg.norm(A.T @ cert.h0) <= cert_tol:
                return cert
            if step == 0.0:
                cert.status = NONCONVERGED
                return cert
    fpr = float(np.linalg.norm(_averaging_step(Ak, bk, row_sq, x) - x))
    return _certificate(system, x, NONCONVERGED, max_iter, fpr)


def _certificate(system, x, status, iterations, fpr) -> RepairCertificate:
    h = np.maximum(system.A @ x - system.rhs, 0.0)
    return RepairCertificate(x, h, system.rhs + h, status, iterations, fpr)


def optimality_residuals(system: LinearSystem, cert: RepairCertificate) -> dict:
    """Residuals of [A x0 - b]_+ = h0, A' h0 = 0 and feasibility of x0 for b + h0."""
    A, b = system.A, system.rhs
    return {
        "positive_part": float(np.max(np.abs(np.maximum(A @ cert.x0 - b, 0.0) - cert.h0), initial=0.0)),
        "balance": float(np.linalg.norm(A.T @ cert.h0)),
        "repaired_feasibility": float(np.max(A @ cert.x0 - b - cert.h0, initial=0.0)),
    }


@dataclass
class KKTReport:
    residuals: dict
    tol: float
    violated: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violated

    def summary(self) -> str:
        if self.passed:
            return "KKT conditions hold"
        parts = [f"{k} ({self.residuals[k]:.3e})" for k in self.violated]
        return "KKT violated: " + ", ".join(parts)


def verify_kkt(system: LinearSystem, cert: RepairCertificate, tol=KKT_TOL):
    """Check the KKT system of min <h,h> s.t. Ax - b - h <= 0, -h <= 0.

    Multipliers lambda (first block) and mu (second) come from the
    certificate, normally lambda = 2 h0 and mu = 0. Returns ``(passed, report)``.
    """
    A, b = system.A, system.rhs
    x0 = as_vector(cert.x0, "x0", system.n)
    h0 = as_vector(cert.h0, "h0", system.m)
    lam = as_vector(cert.lam, "lambda", system.m)
    mu = as_vector(cert.mu, "mu", system.m)
    g = A @ x0 - b - h0
    res = {
        "stationarity": float(max(np.linalg.norm(A.T @ lam), np.linalg.norm(2.0 * h0 - lam - mu))),
        "complementary_slackness": float(max(abs(g @ lam), abs(h0 @ mu))),
        "primal_feasibility": float(max(np.max(g, initial=0.0), np.max(-h0, initial=0.0))),
        "dual_feasibility": float(max(np.max(-lam, initial=0.0), np.max(-mu, initial=0.0))),
    }
    report = KKTReport(res, tol, [k for k, v in res.items() if not v <= tol])
    return report.passed, report


def solve_qp_reference(system: LinearSystem, cap=ENUM_CAP):
    """Brute-force minimizer of <h,h> s.t. Ax <= b + h, h >= 0.

    For every candidate set I of violated rows, least squares on A_I x = b_I
    gives the only possible residual r_I = A_I x - b_I; the candidate is
    optimal when r_I >= 0 and some point of the least-squares solution set
    satisfies the remaining rows (an LP feasibility check). Returns ``(x, h)``.
    """
    A, b = system.A, system.rhs
    m, n = A.shape
    if m > cap:
        raise UnsupportedSizeError(f"m = {m} exceeds the enumeration cap {cap}; use solve_exact")
    best = None
    best_val = np.inf
    for size in range(0, m + 1):
        for I in itertools.combinations(range(m), size):
            I = list(I)
            J = [j for j in range(m) if j not in I]
            if I:
                AI = A[I]
                xI = np.linalg.lstsq(AI, b[I], rcond=None)[0]
                r = AI @ xI - b[I]
                if np.any(r < -1e-10 * (1.0 + np.abs(b[I]))):
                    continue
                val = float(r @ r)
                if val >= best_val - 1e-15:
                    continue
                N = null_space(AI)
            else:
                xI, val = np.zeros(n), 0.0
                N = np.eye(n)
            x = _feasible_point(A[J], b[J], xI, N)
            if x is None:
                continue
            best, best_val = x, val
        if best_val == 0.0:
            break
    if best is None:  # pragma: no cover - some candidate is always optimal
        raise InvalidInputError("no optimal active set found")
    h = np.maximum(A @ best - b, 0.0)
    return best, h


def _feasible_point(AJ, bJ, x, N, tol=1e-9):
    """A point x + N z with AJ (x + N z) <= bJ, or None."""
    if AJ.shape[0] == 0:
        return x
    base = AJ @ x - bJ
    if N.shape[1] == 0:
        return x if np.all(base <= tol * (1.0 + np.abs(bJ))) else None
    if np.all(base <= 0):
        return x
    res = linprog(np.zeros(N.shape[1]), A_ub=AJ @ N, b_ub=-base,
                  bounds=[(None, None)] * N.shape[1], method="highs")
    if res.status != 0:
        return None
    return x + N @ res.x
