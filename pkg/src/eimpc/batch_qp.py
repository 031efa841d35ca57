"""Batch (horizon-stacked) QP parameterized by the initial state.

For a problem with horizon ``N`` the decision vector is
``z = [x_1, ..., x_N, u_0, ..., u_{N-1}]`` and the QP reads::

    minimize    z' H z + x' Q x
    subject to  G_eq z  = E_eq x
                G_in z <= w_in + E_in x

The first ``c_x`` inequality rows constrain the given state ``x`` only, so
their ``G_in`` block is zero and ``E_in`` carries ``-A_x``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import CertificatePreconditionError, InvalidArgumentError

FEAS_TOL = 1e-8


@dataclass(frozen=True)
class BatchDims:
    n: int
    m: int
    N: int
    d_p: int
    d_eq: int
    d_in: int


@dataclass(frozen=True, eq=False)
class BatchQp:
    """Dense parametric QP data.

    Attributes
    ----------
    H : ndarray, shape (d_p, d_p)
        Positive definite quadratic weight.
    Qx : ndarray, shape (n, n)
        Weight of the constant ``x' Q x`` term.
    G_eq, E_eq : ndarray
        Equality data, ``G_eq z = E_eq x``.
    G_in, E_in, w_in : ndarray
        Inequality data, ``G_in z <= w_in + E_in x``.
    dims : BatchDims
    """

    H: np.ndarray
    Qx: np.ndarray
    G_eq: np.ndarray
    E_eq: np.ndarray
    G_in: np.ndarray
    E_in: np.ndarray
    w_in: np.ndarray
    dims: BatchDims

    def __post_init__(self):
        d_p, d_eq, d_in, n = self.dims.d_p, self.dims.d_eq, self.dims.d_in, self.dims.n
        shapes = {"H": (d_p, d_p), "Qx": (n, n), "G_eq": (d_eq, d_p), "E_eq": (d_eq, n),
                  "G_in": (d_in, d_p), "E_in": (d_in, n), "w_in": (d_in,)}
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise InvalidArgumentError(f"{name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_matrices(cls, H, G_eq, E_eq, G_in, E_in, w_in, Qx=None):
        """Wrap generic QP data (``n`` is taken from the parameter matrices)."""
        H = np.atleast_2d(np.asarray(H, dtype=float))
        d_p = H.shape[0]
        G_eq = np.atleast_2d(np.asarray(G_eq, dtype=float))
        G_in = np.atleast_2d(np.asarray(G_in, dtype=float))
        for name, M in (("G_eq", G_eq), ("G_in", G_in)):
            if M.size and M.shape[1] != d_p:
                raise InvalidArgumentError(f"{name} has {M.shape[1]} columns, expected {d_p}")
        G_eq, G_in = G_eq.reshape(-1, d_p), G_in.reshape(-1, d_p)
        E_eq = np.atleast_2d(np.asarray(E_eq, dtype=float))
        E_in = np.atleast_2d(np.asarray(E_in, dtype=float))
        n = max(E_eq.shape[1] if E_eq.size else 0, E_in.shape[1] if E_in.size else 0)
        E_eq = E_eq.reshape(G_eq.shape[0], n) if E_eq.size else np.zeros((G_eq.shape[0], n))
        E_in = E_in.reshape(G_in.shape[0], n) if E_in.size else np.zeros((G_in.shape[0], n))
        Qx = np.zeros((n, n)) if Qx is None else np.atleast_2d(np.asarray(Qx, dtype=float))
        dims = BatchDims(n, 0, 0, d_p, G_eq.shape[0], G_in.shape[0])
        return cls(H, Qx, G_eq, E_eq, G_in, E_in, np.asarray(w_in, dtype=float).reshape(-1), dims)

    @cached_property
    def H_chol(self):
        try:
            return scipy.linalg.cho_factor(self.H, lower=True)
        except np.linalg.LinAlgError:
            raise InvalidArgumentError("H is not positive definite") from None

    @cached_property
    def G(self):
        """Stacked constraint matrix ``[G_eq; G_in]``."""
        return np.vstack([self.G_eq, self.G_in])

    @cached_property
    def H_inv_Gt(self):
        """``0.5 H^{-1} [G_eq; G_in]'``, formed once and reused by the dual objective."""
        return 0.5 * scipy.linalg.cho_solve(self.H_chol, self.G.T)

    def eq_rhs(self, x):
        return self.E_eq @ x if self.dims.n else np.zeros(self.dims.d_eq)

    def in_rhs(self, x):
        """Right-hand side ``h(x) = w_in + E_in x`` of the inequalities."""
        return self.w_in + (self.E_in @ x if self.dims.n else 0.0)

    def const(self, x):
        return float(x @ self.Qx @ x) if self.dims.n else 0.0

    def split(self, z):
        """Return the state and input trajectories ``(X, U)`` of shapes (N, n), (N, m)."""
        n, m, N = self.dims.n, self.dims.m, self.dims.N
        return z[:N * n].reshape(N, n), z[N * n:].reshape(N, m)

    def first_input(self, z):
        n, m, N = self.dims.n, self.dims.m, self.dims.N
        return z[N * n:N * n + m]


def assemble_batch(spec):
    """Condense ``spec`` into batch QP form.

    Parameters
    ----------
    spec : LtiProblemSpec

    Returns
    -------
    BatchQp
    """
    A, B = spec.model.A, spec.model.B
    n, m, N = spec.n, spec.m, spec.N
    Ax, bx = spec.X.A, spec.X.b
    Au, bu = spec.U.A, spec.U.b
    Af, bf = spec.Xf.A, spec.Xf.b
    c_x, c_u, c_f = Ax.shape[0], Au.shape[0], Af.shape[0]
    d_p, d_eq = N * (n + m), N * n
    d_in = N * c_x + c_f + N * c_u

    H = scipy.linalg.block_diag(np.kron(np.eye(N - 1), spec.Q), spec.P,
                                np.kron(np.eye(N), spec.R))
    L = np.eye(N, k=-1)
    G_eq = np.hstack([np.eye(N * n) - np.kron(L, A), -np.kron(np.eye(N), B)])
    E_eq = np.zeros((d_eq, n))
    E_eq[:n] = A

    G_in = np.zeros((d_in, d_p))
    G_in[c_x:N * c_x, :(N - 1) * n] = np.kron(np.eye(N - 1), Ax)
    G_in[N * c_x:N * c_x + c_f, (N - 1) * n:N * n] = Af
    G_in[N * c_x + c_f:, N * n:] = np.kron(np.eye(N), Au)
    E_in = np.zeros((d_in, n))
    E_in[:c_x] = -Ax
    w_in = np.concatenate([np.tile(bx, N), bf, np.tile(bu, N)])

    dims = BatchDims(n, m, N, d_p, d_eq, d_in)
    return BatchQp(H, spec.Q, G_eq, E_eq, G_in, E_in, w_in, dims)


def rollout(spec, x, inputs):
    """Simulate the model from ``x`` and stack the result into ``z``."""
    inputs = np.asarray(inputs, dtype=float).reshape(spec.N, spec.m)
    states = np.empty((spec.N, spec.n))
    cur = np.asarray(x, dtype=float)
    for k in range(spec.N):
        cur = spec.model.step(cur, inputs[k])
        states[k] = cur
    return np.concatenate([states.ravel(), inputs.ravel()])


def objective(qp, z, x):
    """``J(z|x) = z' H z + x' Q x``."""
    return float(z @ qp.H @ z) + qp.const(x)


def lagrangian(qp, z, nu, lam, x):
    return (objective(qp, z, x)
            + float(nu @ (qp.G_eq @ z - qp.eq_rhs(x)))
            + float(lam @ (qp.G_in @ z - qp.in_rhs(x))))


def dual_objective(qp, nu, lam, x):
    """Closed-form dual function and its feasibility flag.

    Returns
    -------
    d : float
        Infimum of the Lagrangian over ``z``.
    dual_feasible : bool
        Whether ``lam >= 0``.
    """
    mu = np.concatenate([nu, lam])
    g = qp.G.T @ mu
    t = qp.H_inv_Gt @ mu
    d = (-0.5 * float(g @ t) + qp.const(x)
         - float(nu @ qp.eq_rhs(x)) - float(lam @ qp.in_rhs(x)))
    return d, bool(np.all(lam >= 0))


def primal_violation(qp, z, x):
    """Largest equality residual and largest inequality excess (both >= 0)."""
    eq = np.abs(qp.G_eq @ z - qp.eq_rhs(x)).max(initial=0.0)
    ineq = max(0.0, (qp.G_in @ z - qp.in_rhs(x)).max(initial=0.0))
    return float(eq), float(ineq)


def check_primal_feasible(qp, z, x, tol=FEAS_TOL):
    """Return ``(feasible, max_violation)``."""
    v = max(primal_violation(qp, z, x))
    return v <= tol, v


def duality_gap(qp, z, nu, lam, x, tol=FEAS_TOL):
    """``eta = J(z|x) - d(nu, lam|x)`` for primal-feasible ``z`` and ``lam >= 0``.

    Raises
    ------
    CertificatePreconditionError
        If ``z`` violates a constraint by more than ``tol`` or ``lam`` has a
        negative entry.
    """
    ok, viol = check_primal_feasible(qp, z, x, tol)
    if not ok:
        raise CertificatePreconditionError(f"z is not primal feasible (violation {viol:.3e})")
    if np.any(lam < 0):
        raise CertificatePreconditionError("lambda has negative entries")
    d, _ = dual_objective(qp, nu, lam, x)
    return objective(qp, z, x) - d


def suboptimality(qp, z, x, z_star, tol=FEAS_TOL):
    """``sigma = J(z|x) - J(z*|x)`` for two feasible points."""
    for name, v in (("z", z), ("z_star", z_star)):
        ok, viol = check_primal_feasible(qp, v, x, tol)
        if not ok:
            raise CertificatePreconditionError(
                f"{name} is not primal feasible (violation {viol:.3e})")
    return objective(qp, z, x) - objective(qp, z_star, x)
