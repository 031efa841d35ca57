"""Linear time-invariant models, terminal ingredients and the benchmark problems.

The four benchmarks are

1. a double integrator (n=2, m=1, N=10),
2. a quadrotor in flat outputs, Euler-discretized (n=12, m=3, N=20),
3. six oscillating masses, sampled with a 0.5 s hold (n=12, m=3, N=30),
4. the same oscillator scaled to 18 masses (n=36, m=9, N=50).

Every benchmark uses the Riccati solution as terminal cost and the maximal
positively invariant set of the LQR closed loop as terminal set.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InvalidArgumentError, NonConvergenceError
from .geometry import Polytope, remove_redundant, support

DARE_MAX_ITER = 10_000
INVARIANT_MAX_SWEEPS = 500


@dataclass(frozen=True)
class ContinuousLti:
    """Continuous-time model ``dx/dt = A_c x + B_c u``."""

    A_c: np.ndarray
    B_c: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A_c, dtype=float))
        B = np.asarray(self.B_c, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1]:
            raise InvalidArgumentError(f"A_c must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise InvalidArgumentError(
                f"B_c has {B.shape[0]} rows, expected {A.shape[0]}")
        object.__setattr__(self, "A_c", A)
        object.__setattr__(self, "B_c", B)


@dataclass(frozen=True)
class DiscreteLti:
    """Discrete-time model ``x(t+1) = A x(t) + B u(t)`` with step ``tau``."""

    A: np.ndarray
    B: np.ndarray
    tau: float = 1.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1]:
            raise InvalidArgumentError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise InvalidArgumentError(f"B has {B.shape[0]} rows, expected {A.shape[0]}")
        if not self.tau > 0:
            raise InvalidArgumentError(f"tau must be positive, got {self.tau}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def step(self, x, u):
        return self.A @ x + self.B @ np.atleast_1d(u)


def _check_spd(M, name):
    if not np.allclose(M, M.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise InvalidArgumentError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise InvalidArgumentError(f"{name} is not positive definite") from None


@dataclass(frozen=True)
class LtiProblemSpec:
    """Constrained linear-quadratic MPC problem over horizon ``N``.

    Attributes
    ----------
    model : DiscreteLti
    X, U, Xf : Polytope
        State, input and terminal sets.
    Q, R, P : ndarray
        Stage state, stage input and terminal weights (all positive definite).
    N : int
        Horizon length.
    name : str
        Free-form label.
    K : ndarray or None
        LQR gain associated with ``P``, if known.
    """

    model: DiscreteLti
    X: Polytope
    U: Polytope
    Xf: Polytope
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    N: int
    name: str = ""
    K: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        n, m = self.model.n, self.model.m
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        for M, name, d in ((Q, "Q", n), (R, "R", m), (P, "P", n)):
            if M.shape != (d, d):
                raise InvalidArgumentError(f"{name} has shape {M.shape}, expected {(d, d)}")
            _check_spd(M, name)
        for S, name, d in ((self.X, "X", n), (self.U, "U", m), (self.Xf, "Xf", n)):
            if S.dim != d:
                raise InvalidArgumentError(f"{name} has dimension {S.dim}, expected {d}")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidArgumentError(f"horizon must be a positive integer, got {self.N}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "N", int(self.N))

    @property
    def n(self):
        return self.model.n

    @property
    def m(self):
        return self.model.m

    def lqr_gain(self):
        if self.K is not None:
            return self.K
        return lqr_gain(self.model.A, self.model.B, self.R, self.P)


def discretize_euler(sys, tau):
    """Forward-Euler discretization: ``A = I + tau A_c``, ``B = tau B_c``."""
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    n = sys.A_c.shape[0]
    return DiscreteLti(np.eye(n) + tau * sys.A_c, tau * sys.B_c, tau)


def discretize_foh(sys, tau):
    """Triangle-hold (first-order hold) discretization.

    The input is linearly interpolated between consecutive samples. With
    ``E = expm([[A_c tau, B_c tau, 0], [0, 0, I], [0, 0, 0]])`` and the blocks
    ``Phi = E11``, ``G1 = E12``, ``G2 = E13`` this returns ``A = Phi`` and
    ``B = G1 + Phi G2 - G2``.
    """
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    A_c, B_c = sys.A_c, sys.B_c
    n, m = B_c.shape
    M = np.zeros((n + 2 * m, n + 2 * m))
    M[:n, :n] = A_c * tau
    M[:n, n:n + m] = B_c * tau
    M[n:n + m, n + m:] = np.eye(m)
    E = scipy.linalg.expm(M)
    Phi = E[:n, :n]
    G1 = E[:n, n:n + m]
    G2 = E[:n, n + m:]
    return DiscreteLti(Phi, G1 + Phi @ G2 - G2, tau)


def discretize_zoh(sys, tau):
    """Zero-order-hold discretization (input held constant over each step)."""
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    n, m = sys.B_c.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = sys.A_c * tau
    M[:n, n:] = sys.B_c * tau
    E = scipy.linalg.expm(M)
    return DiscreteLti(E[:n, :n], E[:n, n:], tau)


def dare_residual(A, B, Q, R, P):
    BtP = B.T @ P
    res = A.T @ P @ A + Q - A.T @ P @ B @ np.linalg.solve(BtP @ B + R, BtP @ A) - P
    return np.abs(res).max()


def solve_dare(A, B, Q, R, max_iter=DARE_MAX_ITER):
    """Stabilizing solution of the discrete algebraic Riccati equation.

    Iterates the Riccati map from ``P = Q`` until successive iterates differ
    by at most ``1e-12 (1 + ||P||_inf)``.

    Raises
    ------
    NonConvergenceError
        If the iteration does not settle within ``max_iter`` steps, which
        happens when (A, B) is not stabilizable or badly conditioned.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    B = B.reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        P_next = A.T @ P @ A + Q - (A.T @ P @ B) @ np.linalg.solve(BtP @ B + R, BtP @ A)
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            break
        diff = np.abs(P_next - P).max()
        P = P_next
        if diff <= 1e-12 * (1.0 + np.abs(P).sum(axis=1).max()):
            return P
    raise NonConvergenceError(
        "Riccati iteration did not converge; (A, B) may not be stabilizable")


def lqr_gain(A, B, R, P):
    """Gain ``K`` of the regulator ``u = -K x`` for terminal weight ``P``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    BtP = B.T @ P
    return np.linalg.solve(BtP @ B + R, BtP @ A)


def max_pos_invariant_set(A_cl, S, max_sweeps=INVARIANT_MAX_SWEEPS):
    """Maximal positively invariant subset of ``S`` under ``x -> A_cl x``.

    Starting from the normalized rows of ``S``, each sweep propagates the
    rows added in the previous sweep through ``A_cl`` and keeps those that
    cut the current set. The iteration stops once a sweep adds nothing;
    the result is then reduced to a minimal representation.

    Parameters
    ----------
    A_cl : ndarray, shape (n, n)
        Closed-loop matrix, assumed Schur stable.
    S : Polytope
        Bounded constraint set with the origin in its interior.

    Returns
    -------
    Polytope
        Rows normalized to unit Euclidean norm.

    Raises
    ------
    NonConvergenceError
        If more than ``max_sweeps`` sweeps are needed.
    """
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    base = remove_redundant(S)
    A_om, b_om = base.A, base.b
    frontier_A, frontier_b = A_om, b_om
    for _ in range(max_sweeps):
        cand = frontier_A @ A_cl
        norms = np.linalg.norm(cand, axis=1)
        new_A, new_b = [], []
        for a, nrm, beta in zip(cand, norms, frontier_b):
            # a zero row means A_cl maps everything to a point satisfying it
            if nrm <= 1e-14:
                continue
            a, beta = a / nrm, beta / nrm
            cur_A = np.vstack([A_om] + new_A) if new_A else A_om
            cur_b = np.concatenate([b_om] + new_b) if new_b else b_om
            if support(cur_A, cur_b, a) > beta + 1e-9:
                new_A.append(a[None, :])
                new_b.append(np.array([beta]))
        if not new_A:
            return remove_redundant(Polytope(A_om, b_om))
        frontier_A = np.vstack(new_A)
        frontier_b = np.concatenate(new_b)
        A_om = np.vstack([A_om, frontier_A])
        b_om = np.concatenate([b_om, frontier_b])
    raise NonConvergenceError(
        f"invariant set iteration exceeded {max_sweeps} sweeps")


def terminal_ingredients(model, X, U, Q, R):
    """Riccati weight, LQR gain and LQR invariant set for the given model."""
    P = solve_dare(model.A, model.B, Q, R)
    K = lqr_gain(model.A, model.B, R, P)
    A_cl = model.A - model.B @ K
    S = Polytope(np.vstack([X.A, -U.A @ K]), np.concatenate([X.b, U.b]))
    return P, K, max_pos_invariant_set(A_cl, S)


def make_problem(model, X, U, Q, R, N, name=""):
    """Assemble a problem whose terminal cost and set come from the LQR."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P, K, Xf = terminal_ingredients(model, X, U, Q, R)
    return LtiProblemSpec(model, X, U, Xf, Q, R, P, N, name=name, K=K)


def _lower_shift(k):
    return np.eye(k, k=-1)


def quadrotor_continuous():
    """Jerk-input integrator chain; blocks are position, velocity, acceleration, jerk.

    Each block integrates the next, so the block coupling sits on the
    superdiagonal.
    """
    A_c = np.kron(_lower_shift(4).T, np.eye(3))
    B_c = np.kron(np.eye(4)[:, [3]], np.eye(3))
    return ContinuousLti(A_c, B_c)


def _force_matrix(opposing=True):
    # rows are masses, columns are actuators; each actuator pushes two masses
    e = np.eye(3)
    last = -e[2] if opposing else e[2]
    return np.vstack([e[0], -e[0], e[1], e[2], -e[1], last])


def oscillating_masses_continuous(n_masses=6, c=1.0, d=0.1, b=None, opposing=True):
    """Chain of unit masses coupled by springs (``c``) and dampers (``d``).

    ``n_masses`` must be a multiple of 6; each group of six masses is driven
    by three actuators through the same force pattern. The diagonal damping
    ``b`` defaults to ``-2 d``.
    """
    if n_masses % 6:
        raise InvalidArgumentError("n_masses must be a multiple of 6")
    k = n_masses
    a = -2.0 * c
    b = -2.0 * d if b is None else b
    L = _lower_shift(k)
    I = np.eye(k)
    A_c = np.block([
        [np.zeros((k, k)), I],
        [a * I + c * (L + L.T), b * I + d * (L + L.T)],
    ])
    F = np.kron(np.eye(k // 6), _force_matrix(opposing))
    B_c = np.vstack([np.zeros((k, F.shape[1])), F])
    return ContinuousLti(A_c, B_c)


BENCHMARK_VARIANTS = ("reconciled", "literal")


def build_benchmark(sys_id, variant="reconciled"):
    """Return benchmark problem ``sys_id`` (1, 2, 3 or 4).

    Parameters
    ----------
    sys_id : int or str
        1 to 4, or "Sys1" to "Sys4".
    variant : {"reconciled", "literal"}
        ``"reconciled"`` (default) uses the model data that reproduce the
        reference terminal-set facet counts and Sys. 1 feasibility rate:
        Sys. 1 with ``B = [0.5, 1]'`` and ``|u| <= 1``; Sys. 3/4 with damping
        ``-2 d``, opposing actuator pairs and zero-order hold. ``"literal"``
        uses ``B = [0.5, 0.1]'``, ``|u| <= 2`` and damping ``-2``, same-sign
        last actuator and first-order hold. Sys. 2 is identical in both.
    """
    if variant not in BENCHMARK_VARIANTS:
        raise InvalidArgumentError(f"unknown benchmark variant {variant!r}")
    literal = variant == "literal"
    if isinstance(sys_id, str) and sys_id in ("Sys1", "Sys2", "Sys3", "Sys4"):
        sys_id = int(sys_id[-1])
    if sys_id == 1:
        B = [[0.5], [0.1]] if literal else [[0.5], [1.0]]
        model = DiscreteLti(np.array([[1.0, 1.0], [0.0, 1.0]]), np.array(B))
        X = Polytope.box([5.0, 1.0])
        U = Polytope.box([2.0 if literal else 1.0])
        return make_problem(model, X, U, np.eye(2), np.eye(1), 10, name="Sys1")
    if sys_id == 2:
        model = discretize_euler(quadrotor_continuous(), 0.1)
        X = Polytope.box(np.repeat([10.0, 5.0, 3.0, 1.0], 3))
        U = Polytope.box(np.ones(3))
        return make_problem(model, X, U, np.eye(12), np.eye(3), 20, name="Sys2")
    if sys_id in (3, 4):
        k = 6 if sys_id == 3 else 18
        if literal:
            cont = oscillating_masses_continuous(k, b=-2.0, opposing=False)
            model = discretize_foh(cont, 0.5)
        else:
            model = discretize_zoh(oscillating_masses_continuous(k), 0.5)
        X = Polytope.box(4.0 * np.ones(2 * k))
        U = Polytope.box(0.5 * np.ones(model.m))
        N = 30 if sys_id == 3 else 50
        return make_problem(model, X, U, np.eye(2 * k), np.eye(model.m), N,
                            name=f"Sys{sys_id}")
    raise InvalidArgumentError(f"unknown benchmark {sys_id!r}")
