"""Slow, obviously correct reference computations for tests.

``grid_argmin`` sweeps a box with iterative refinement; it is the ground
truth for the small dense examples. ``perturbation_grid_consistency``
searches a lattice of right-hand-side perturbations of a linear system for
a consistent one.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .coremath import as_vector
from .errors import InvalidInputError, UnsupportedSizeError
from .linexact import LinearSystem, solve_qp_reference

CHUNK = 1 << 20
MAX_GRID_DIM = 4


@dataclass(frozen=True)
class GridSpec:
    lower: np.ndarray
    upper: np.ndarray
    resolution: int = 401
    rounds: int = 3
    shrink: float = 10.0

    def __post_init__(self):
        lo = as_vector(self.lower, "lower")
        hi = as_vector(self.upper, "upper", lo.shape[0])
        if np.any(hi <= lo):
            raise InvalidInputError("grid box must be nondegenerate (upper > lower)")
        if int(self.resolution) < 3:
            raise InvalidInputError("resolution must be at least 3")
        if int(self.rounds) < 1:
            raise InvalidInputError("need at least one round")
        if lo.shape[0] > MAX_GRID_DIM:
            raise UnsupportedSizeError(f"grid search is limited to dimension {MAX_GRID_DIM}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "resolution", int(self.resolution))
        object.__setattr__(self, "rounds", int(self.rounds))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @classmethod
    def around(cls, points, inflate=5.0, min_halfwidth=1.0, **kw):
        """Box around ``points`` with half-widths inflated ``inflate`` times."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        center = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
        half = np.maximum(0.5 * (pts.max(axis=0) - pts.min(axis=0)), min_halfwidth) * inflate
        return cls(center - half, center + half, **kw)


def default_grid(sets, **kw) -> GridSpec:
    """Witness points of the sets, boxed and inflated five-fold."""
    return GridSpec.around([S.witness() for S in sets], **kw)


def _evaluate(objective, pts):
    try:
        vals = np.asarray(objective(pts), dtype=float)
        if vals.shape != (pts.shape[0],):
            raise ValueError
    except (ValueError, TypeError, IndexError):
        vals = np.array([float(objective(x)) for x in pts])
    if not np.all(np.isfinite(vals)):
        raise InvalidInputError("objective returned a non-finite value on the grid")
    return vals


def _sweep(objective, lo, hi, res):
    axes = [np.linspace(a, b, res) for a, b in zip(lo, hi)]
    best_x, best_v = None, np.inf
    n = len(axes)
    # chunk along the first axis so memory stays bounded
    per_slice = res ** (n - 1)
    step = max(1, CHUNK // per_slice)
    for start in range(0, res, step):
        sub = [axes[0][start:start + step]] + axes[1:]
        pts = np.stack(np.meshgrid(*sub, indexing="ij"), axis=-1).reshape(-1, n)
        vals = _evaluate(objective, pts)
        j = int(np.argmin(vals))
        if vals[j] < best_v:
            best_x, best_v = pts[j].copy(), float(vals[j])
    return best_x, best_v


def grid_argmin(objective, spec: GridSpec):
    """Exhaustive grid minimization with refinement; returns ``(x, value)``.

    ``objective`` is called on an ``(N, n)`` array when it accepts one,
    otherwise point by point. Each round recenters a box ``shrink`` times
    smaller on the incumbent, kept inside the original box.
    """
    lo, hi = spec.lower.copy(), spec.upper.copy()
    x, v = _sweep(objective, lo, hi, spec.resolution)
    half = 0.5 * (hi - lo)
    for _ in range(spec.rounds - 1):
        half = half / spec.shrink
        c = np.clip(x, spec.lower + half, spec.upper - half)
        x2, v2 = _sweep(objective, c - half, c + half, spec.resolution)
        if v2 <= v:
            x, v = x2, v2
    return x, v


def farkas_rays(A) -> np.ndarray:
    """Extreme rays of {y >= 0 : A'y = 0}, normalized to unit sum.

    Each has a support S whose rows have a one-dimensional left null space
    spanned by a positive vector; enumerating supports is fine at desk scale.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    rays = []
    for size in range(1, min(m, n + 1) + 1):
        for S in itertools.combinations(range(m), size):
            AS = A[list(S)]
            _, sv, vt = np.linalg.svd(AS.T)
            rank = int(np.sum(sv > 1e-10 * max(1.0, sv.max(initial=0.0))))
            if size - rank != 1:
                continue
            y = vt[-1]
            if np.all(y > 1e-12) or np.all(y < -1e-12):
                full = np.zeros(m)
                full[list(S)] = np.abs(y)
                rays.append(full / full.sum())
    if not rays:
        return np.zeros((0, m))
    return np.unique(np.round(np.array(rays), 12), axis=0)


def perturbation_grid_consistency(system: LinearSystem, radius, lattice_step,
                                  tol=1e-9) -> bool:
    """Is some lattice perturbation D with ||D||_2 <= radius making A x <= b + D consistent?

    Consistency is decided by Farkas' lemma over the extreme rays y
    (consistent iff y'(b + D) >= 0 for all of them); the first consistent
    lattice point found is confirmed with ``solve_qp_reference``. Only the
    nonnegative orthant is scanned: replacing D by its positive part keeps
    it on the lattice, shrinks its norm and preserves consistency.
    """
    A, b = system.A, system.rhs
    m, n = A.shape
    if n > 3 or m > 6:
        raise UnsupportedSizeError(f"lattice search is limited to n <= 3, m <= 6 (got n={n}, m={m})")
    radius = float(radius)
    step = float(lattice_step)
    if radius < 0 or step <= 0:
        raise InvalidInputError("radius must be >= 0 and lattice_step > 0")
    Y = farkas_rays(A)
    if Y.shape[0] == 0:
        return True
    k_max = int(np.floor(radius / step + 1e-12))
    ticks = np.arange(k_max + 1) * step
    base = Y @ b
    # iterate over the first coordinate, vectorize over the rest
    rest = np.stack(np.meshgrid(*([ticks] * (m - 1)), indexing="ij"), axis=-1).reshape(-1, m - 1) \
        if m > 1 else np.zeros((1, 0))
    rest_sq = np.sum(rest * rest, axis=1)
    for t0 in ticks:
        inside = rest_sq + t0 * t0 <= radius * radius * (1 + 1e-12)
        if not np.any(inside):
            continue
        D = np.hstack([np.full((int(inside.sum()), 1), t0), rest[inside]])
        ok = np.all(base + D @ Y.T >= -tol, axis=1)
        for j in np.flatnonzero(ok):
            _, h = solve_qp_reference(LinearSystem(A, b + D[j]))
            if np.linalg.norm(h) <= 1e-7:
                return True
    return False
