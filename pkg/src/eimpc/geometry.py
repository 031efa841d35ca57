"""Halfspace polytopes: redundancy removal, support functions and sampling."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import InvalidArgumentError

# slack allowed when deciding a row adds nothing to the remaining rows
REDUNDANCY_TOL = 1e-9


@dataclass(frozen=True)
class Polytope:
    """The set {v : A v <= b}."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise InvalidArgumentError(
                f"row count mismatch: A has {A.shape[0]} rows, b has {b.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self):
        return self.A.shape[1]

    @property
    def n_rows(self):
        return self.A.shape[0]

    @classmethod
    def box(cls, upper, lower=None):
        """Axis-aligned box ``lower <= v <= upper`` (``lower`` defaults to ``-upper``)."""
        upper = np.asarray(upper, dtype=float)
        lower = -upper if lower is None else np.asarray(lower, dtype=float)
        d = upper.size
        return cls(np.vstack([np.eye(d), -np.eye(d)]), np.concatenate([upper, -lower]))

    def contains(self, v, tol=1e-9):
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            return bool(np.all(self.A @ v <= self.b + tol))
        return np.all(v @ self.A.T <= self.b + tol, axis=1)

    def normalized(self):
        """Same set with every row scaled to unit Euclidean norm; zero rows dropped."""
        norms = np.linalg.norm(self.A, axis=1)
        keep = norms > 0
        if np.any(~keep & (self.b < 0)):
            raise InvalidArgumentError("polytope is empty (0 <= negative)")
        return Polytope(self.A[keep] / norms[keep, None], self.b[keep] / norms[keep])

    def intersect(self, other):
        return Polytope(np.vstack([self.A, other.A]), np.concatenate([self.b, other.b]))

    def support(self, direction):
        """max direction' v over the polytope (``inf`` when unbounded)."""
        return support(self.A, self.b, direction)

    def box_bounds(self):
        """Return (lower, upper) if the polytope is an axis-aligned box, else None."""
        P = self.normalized()
        d = P.dim
        lo = np.full(d, -np.inf)
        hi = np.full(d, np.inf)
        for a, beta in zip(P.A, P.b):
            nz = np.flatnonzero(np.abs(a) > 1e-12)
            if nz.size != 1 or abs(abs(a[nz[0]]) - 1.0) > 1e-12:
                return None
            j = nz[0]
            if a[j] > 0:
                hi[j] = min(hi[j], beta)
            else:
                lo[j] = max(lo[j], -beta)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            return None
        return lo, hi

    def chebyshev_center(self):
        """Center and radius of the largest inscribed ball."""
        norms = np.linalg.norm(self.A, axis=1)
        d = self.dim
        c = np.zeros(d + 1)
        c[-1] = -1.0
        res = linprog(c, A_ub=np.hstack([self.A, norms[:, None]]), b_ub=self.b,
                      bounds=[(None, None)] * d + [(0, None)], method="highs")
        if res.status != 0:
            raise InvalidArgumentError(f"Chebyshev center LP failed: {res.message}")
        return res.x[:d], res.x[-1]


def support(A, b, direction):
    res = linprog(-np.asarray(direction, dtype=float), A_ub=A, b_ub=b,
                  bounds=[(None, None)] * A.shape[1], method="highs")
    if res.status == 3:
        return np.inf
    if res.status != 0:
        raise InvalidArgumentError(f"support LP failed: {res.message}")
    return -res.fun


def remove_redundant(P, tol=REDUNDANCY_TOL):
    """Minimal halfspace representation of a bounded full-dimensional polytope.

    Rows are normalized first. Row i is dropped when max a_i'v over the
    remaining (not yet dropped) rows does not exceed b_i + tol; dropping is
    sequential so duplicated rows keep exactly one copy.
    """
    P = P.normalized()
    A, b = P.A, P.b
    keep = np.ones(A.shape[0], dtype=bool)
    # ties between duplicate rows resolve toward the earliest index
    for i in range(A.shape[0] - 1, -1, -1):
        keep[i] = False
        others = np.flatnonzero(keep)
        # bounding the tested row keeps the LP finite
        A_lp = np.vstack([A[others], A[i]])
        b_lp = np.concatenate([b[others], [b[i] + 1.0]])
        val = support(A_lp, b_lp, A[i])
        keep[i] = val > b[i] + tol
    return Polytope(A[keep], b[keep])


def hit_and_run(P, n_samples, rng, x0=None, burn_in=200, thin=5):
    """Approximately uniform samples from a bounded polytope by hit-and-run.

    Each move picks a uniformly random direction, computes the chord through
    the current point, and jumps to a uniform point on it.
    """
    A, b = P.A, P.b
    x = P.chebyshev_center()[0] if x0 is None else np.asarray(x0, dtype=float).copy()
    if not P.contains(x):
        raise InvalidArgumentError("hit-and-run start point is outside the polytope")
    out = np.empty((n_samples, P.dim))
    total = burn_in + n_samples * thin
    k = 0
    for step in range(total):
        d = rng.standard_normal(P.dim)
        d /= np.linalg.norm(d)
        ad = A @ d
        slack = b - A @ x
        with np.errstate(divide="ignore"):
            ratios = slack / ad
        t_hi = np.min(ratios[ad > 1e-14], initial=np.inf)
        t_lo = np.max(ratios[ad < -1e-14], initial=-np.inf)
        if not (np.isfinite(t_hi) and np.isfinite(t_lo)):
            raise InvalidArgumentError("polytope is unbounded")
        x = x + rng.uniform(t_lo, t_hi) * d
        if step >= burn_in and (step - burn_in) % thin == thin - 1:
            out[k] = x
            k += 1
    return out
