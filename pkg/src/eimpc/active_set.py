"""Dense primal active-set solver for the parametric batch QP.

Equality constraints are eliminated once per QP with a null-space basis
``Z`` of ``G_eq``, and the reduced Hessian is whitened by its Cholesky
factor, so every iteration works on::

    minimize    ||w||^2 + 2 c(x)' w
    subject to  M w <= d(x)

with ``z = z_p(x) + T w``. Phase I minimizes the total violation of the
inequality rows (an elastic piecewise-linear program); Phase II is the
textbook primal active-set method started from the Phase I point. Both
phases count one iteration per update of the iterate (including
zero-length steps that only add a row); releasing a row is bookkept
separately in ``SolveResult.drops``.
"""

import enum
import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InvalidArgumentError, IterationLimitError


class Status(enum.Enum):
    FEASIBLE = "feasible"
    CERTIFIED = "certified"
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class Termination:
    """When to stop: after Phase I, on a certificate, at a fixed gap, or at optimality."""

    kind: str
    threshold: float = 0.0

    KINDS = ("pf", "pfsub", "gap", "optimal")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidArgumentError(f"unknown termination kind {self.kind!r}")
        if self.kind == "gap" and not (np.isfinite(self.threshold) and self.threshold >= 0):
            raise InvalidArgumentError("gap threshold must be finite and non-negative")

    @classmethod
    def primal_feasible(cls):
        return cls("pf")

    @classmethod
    def feasible_and_suboptimal(cls):
        return cls("pfsub")

    @classmethod
    def fixed_gap(cls, threshold):
        return cls("gap", float(threshold))

    @classmethod
    def optimal(cls):
        return cls("optimal")

    @classmethod
    def parse(cls, text):
        """Parse ``pf``, ``pfsub``, ``gap:<t>`` or ``optimal``."""
        text = text.strip().lower()
        if text.startswith("gap:"):
            try:
                return cls.fixed_gap(float(text[4:]))
            except ValueError:
                raise InvalidArgumentError(f"bad gap threshold in {text!r}") from None
        aliases = {"p.f.": "pf", "p.f.+sub": "pfsub", "p.f.+sub.": "pfsub"}
        return cls(aliases.get(text, text))

    def __str__(self):
        return f"gap:{self.threshold:g}" if self.kind == "gap" else self.kind

    @property
    def needs_certificate(self):
        return self.kind in ("pfsub", "gap")


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances of the active-set solver.

    Attributes
    ----------
    feas_tol : float
        Constraint violation accepted as feasible.
    active_tol : float
        Slack below which a row counts as active when building a working set.
    step_tol : float
        Relative step norm below which Phase II stops moving.
    mult_tol : float
        Multipliers above ``-mult_tol`` count as non-negative.
    ratio_tol : float
        Minimum ``row . step`` for a row to block a step.
    indep_tol : float
        Relative residual below which a row is dependent on the working set.
    max_iter_factor : int
        Iteration limit per phase is ``max_iter_factor * d_p``.
    cycle_repeats : int
        Zero-length steps from the same working set tolerated before perturbing.
    perturbation : float
        Relative right-hand-side relaxation applied to break cycling.
    temporary_bounds : bool
        Start Phase II from a vertex: the working set is completed with
        temporary rows that fix decision variables (inputs first) at their
        current values, and these rows are released one at a time. This is
        the classical cold-start behaviour of reduced-gradient QP codes.
        When False, Phase II starts from the active rows only.
    """

    feas_tol: float = 1e-8
    active_tol: float = 1e-7
    step_tol: float = 1e-9
    mult_tol: float = 1e-9
    ratio_tol: float = 1e-12
    indep_tol: float = 1e-10
    max_iter_factor: int = 50
    cycle_repeats: int = 3
    perturbation: float = 1e-10
    temporary_bounds: bool = True


@dataclass
class SolveResult:
    """Outcome of one solve.

    ``nu`` and ``lam`` are the solver's own multipliers. They are exact KKT
    multipliers only when ``status`` is OPTIMAL; otherwise they are zero.
    """

    z: np.ndarray
    nu: np.ndarray
    lam: np.ndarray
    status: Status
    phase1_iters: int = 0
    phase2_iters: int = 0
    working: tuple = ()
    certificate: object = None
    farkas: tuple = None
    perturbations: int = 0
    phase1_skipped: bool = False
    drops: int = 0

    @property
    def iterations(self):
        return self.phase1_iters + self.phase2_iters

    @property
    def feasible(self):
        return self.status is not Status.INFEASIBLE


class ReducedQp:
    """Equality-eliminated, whitened form of a BatchQp (x-independent part)."""

    def __init__(self, qp, zero_row_tol=1e-12):
        self.qp = qp
        d_p, d_eq = qp.dims.d_p, qp.dims.d_eq
        if d_eq:
            Qf, Rf, piv = scipy.linalg.qr(qp.G_eq.T, pivoting=True)
            diag = np.abs(np.diag(Rf))
            rank = int(np.sum(diag > 1e-12 * max(diag.max(initial=0.0), 1.0)))
        else:
            Qf, Rf, piv, rank = np.eye(d_p), np.zeros((d_p, 0)), np.arange(0), 0
        self.eq_rank = rank
        self.Q1 = Qf[:, :rank]
        self.Z = Qf[:, rank:]
        self._R1 = Rf[:rank, :rank]
        self._piv = piv[:rank]
        self.full_rank_eq = rank == d_eq
        # minimum-norm particular solution z_p = Q1 R1^{-T} (E_eq x)[piv]
        E_piv = qp.E_eq[self._piv] if d_eq else np.zeros((0, qp.dims.n))
        self.Zp_map = self.Q1 @ scipy.linalg.solve_triangular(self._R1, E_piv, trans="T") \
            if rank else np.zeros((d_p, qp.dims.n))
        Hr = self.Z.T @ qp.H @ self.Z
        self.nz = Hr.shape[0]
        self.Lr = np.linalg.cholesky(Hr) if self.nz else np.zeros((0, 0))
        # T maps whitened coordinates back to z
        self.T = scipy.linalg.solve_triangular(self.Lr, self.Z.T, lower=True).T \
            if self.nz else np.zeros((d_p, 0))
        M = qp.G_in @ self.T
        norms = np.linalg.norm(M, axis=1)
        self.M = M
        self.M_norms = norms
        self.zero_rows = np.flatnonzero(norms <= zero_row_tol * max(1.0, norms.max(initial=0.0)))
        self.live = np.ones(qp.dims.d_in, dtype=bool)
        self.live[self.zero_rows] = False
        # temporary rows fix z coordinates; inputs come first since they are
        # the free variables of the batch problem
        d_in = qp.dims.d_in
        n_states = qp.dims.N * qp.dims.n
        order = np.concatenate([np.arange(n_states, d_p), np.arange(n_states)])
        self.M_ext = np.vstack([M, self.T[order]])
        self.ext_norms = np.linalg.norm(self.M_ext, axis=1)
        self.n_real = d_in
        self.D_map = qp.E_in - qp.G_in @ self.Zp_map
        self.C_map = self.T.T @ qp.H @ self.Zp_map

    def zp(self, x):
        return self.Zp_map @ x if self.qp.dims.n else np.zeros(self.qp.dims.d_p)

    def d(self, x):
        return self.qp.w_in + (self.D_map @ x if self.qp.dims.n else 0.0)

    def c(self, x):
        return self.C_map @ x if self.qp.dims.n else np.zeros(self.nz)

    def eq_consistent(self, x, tol):
        if self.full_rank_eq:
            return True
        zp = self.zp(x)
        return np.abs(self.qp.G_eq @ zp - self.qp.eq_rhs(x)).max(initial=0.0) <= tol

    def to_w(self, z, zp):
        """Whitened coordinates of the projection of ``z`` onto the equality set."""
        return self.Lr.T @ (self.Z.T @ (z - zp))

    def to_z(self, w, zp):
        return zp + self.T @ w

    def equality_multipliers(self, z, lam):
        """``nu`` solving ``G_eq' nu = -(2 H z + G_in' lam)`` in least squares."""
        qp = self.qp
        rhs = -(2.0 * qp.H @ z + qp.G_in.T @ lam)
        if not qp.dims.d_eq:
            return np.zeros(0)
        if self.full_rank_eq:
            nu = np.empty(qp.dims.d_eq)
            nu[self._piv] = scipy.linalg.solve_triangular(self._R1, self.Q1.T @ rhs)
            return nu
        return scipy.linalg.lstsq(qp.G_eq.T, rhs)[0]


class _WorkingSet:
    """Ordered inequality rows treated as equalities, with a QR of ``M_W'``.

    Adds and drops update the factors in place; a fresh factorization every
    ``REFACTOR_EVERY`` updates bounds the accumulated rounding.
    """

    REFACTOR_EVERY = 50

    def __init__(self, M, indices=()):
        self.M = M
        self.indices = list(indices)
        self._factor()

    def _factor(self):
        nz = self.M.shape[1]
        self._updates = 0
        if self.indices:
            self.Q, self._Rf = scipy.linalg.qr(self.M[self.indices].T)
        else:
            self.Q = np.eye(nz)
            self._Rf = np.zeros((nz, 0))

    @property
    def R(self):
        k = len(self.indices)
        return self._Rf[:k, :k]

    def _updated(self):
        self._updates += 1
        if self._updates >= self.REFACTOR_EVERY:
            self._factor()

    def __len__(self):
        return len(self.indices)

    def __contains__(self, i):
        return i in self.indices

    def add(self, i):
        k = len(self.indices)
        if k >= self.M.shape[1]:
            self.indices.append(int(i))
            self._factor()
            return
        self.Q, self._Rf = scipy.linalg.qr_insert(self.Q, self._Rf, self.M[i], k, which="col")
        self.indices.append(int(i))
        self._updated()

    def remove_at(self, pos):
        self.Q, self._Rf = scipy.linalg.qr_delete(self.Q, self._Rf, pos, which="col")
        self.indices.pop(pos)
        self._updated()

    def project(self, v):
        """Orthogonal projection of ``v`` onto the null space of ``M_W``."""
        Q2 = self.Q[:, len(self.indices):]
        return Q2 @ (Q2.T @ v)

    def solve_transpose(self, v):
        """Least-squares ``mu`` with ``M_W' mu = v``."""
        k = len(self.indices)
        if not k:
            return np.zeros(0)
        return scipy.linalg.solve_triangular(self.R, self.Q[:, :k].T @ v)

    def key(self):
        return tuple(sorted(self.indices))


class _Cycling:
    def __init__(self, repeats):
        self.repeats = repeats
        self.seen = {}

    def zero_step(self, key):
        self.seen[key] = self.seen.get(key, 0) + 1
        return self.seen[key] >= self.repeats

    def reset(self):
        self.seen.clear()


class ActiveSetSolver:
    """Primal active-set solver bound to one BatchQp.

    Parameters
    ----------
    qp : BatchQp
    options : SolverOptions, optional
    """

    def __init__(self, qp, options=None):
        self.qp = qp
        self.options = options or SolverOptions()
        self.red = ReducedQp(qp)
        self.max_iter = self.options.max_iter_factor * max(qp.dims.d_p, 1)

    # -- helpers -----------------------------------------------------------

    def _constant_rows_ok(self, d):
        zr = self.red.zero_rows
        return zr.size == 0 or d[zr].min() >= -self.options.feas_tol

    def _farkas_cut(self, y_in, x):
        """Turn ``y >= 0`` with ``y' G_in Z = 0`` into a cut ``a' x < beta`` of infeasible states."""
        qp, red = self.qp, self.red
        # nu solves G_eq' nu = -G_in' y, so y' G_in z + nu' G_eq z = 0 for all z
        nu = red.equality_multipliers(np.zeros(qp.dims.d_p), y_in)
        a = qp.E_in.T @ y_in + (qp.E_eq.T @ nu if qp.dims.d_eq else 0.0)
        beta = -float(y_in @ qp.w_in)
        return a, beta

    def init_working_set(self, w, d, candidates=None):
        """Independent subset of the rows active at ``w`` (ascending index order)."""
        opts, red = self.options, self.red
        if candidates is None:
            slack = d - red.M @ w
            candidates = np.flatnonzero(red.live & (np.abs(slack) <= opts.active_tol))
        candidates = [int(i) for i in candidates if red.live[int(i)]]
        return _WorkingSet(red.M_ext, self._independent(candidates, []))

    def _independent(self, candidates, current):
        """Greedily extend ``current`` by rows of ``candidates`` that keep full row rank."""
        opts, red = self.options, self.red
        basis = []
        for i in current:
            v = red.M_ext[i].copy()
            for q in basis:
                v -= (q @ v) * q
            basis.append(v / np.linalg.norm(v))
        chosen = list(current)
        for i in candidates:
            if len(chosen) >= red.nz:
                break
            v = red.M_ext[i].copy()
            for _ in range(2):
                for q in basis:
                    v -= (q @ v) * q
            nv = np.linalg.norm(v)
            if nv > opts.indep_tol * red.ext_norms[i]:
                basis.append(v / nv)
                chosen.append(int(i))
        return chosen

    def _add_temporaries(self, ws):
        red = self.red
        temps = range(red.n_real, red.M_ext.shape[0])
        return _WorkingSet(red.M_ext, self._independent(temps, ws.indices))

    # -- phase I -----------------------------------------------------------

    def phase1(self, w, d):
        """Drive ``w`` into ``{M w <= d}`` by minimizing the total violation.

        Returns
        -------
        w : ndarray
            Final point.
        ws : _WorkingSet or None
            Working set at the final point (None when already feasible).
        iters : int
        farkas : ndarray or None
            Non-negative row weights ``y`` with ``y' M = 0`` and ``y' d < 0``
            when the rows are inconsistent.
        """
        opts, red = self.options, self.red
        M = red.M
        live = red.live
        d = d.copy()
        excess = M @ w - d
        violated = live & (excess > opts.feas_tol)
        if not violated.any():
            return w, None, 0, None
        ws = _WorkingSet(red.M_ext)
        cyc = _Cycling(opts.cycle_repeats)
        iters = 0
        passes = 0
        while violated.any():
            passes += 1
            if passes > self.max_iter:
                raise IterationLimitError(f"phase I exceeded {self.max_iter} iterations")
            g = M[violated].sum(axis=0)
            p = -ws.project(g)
            stationary = np.linalg.norm(p) <= opts.step_tol * (1.0 + np.linalg.norm(g))
            Mp = M @ p
            # every violated row flat along p: nothing to gain, same as stationary
            if not stationary and not (violated & (Mp < -opts.ratio_tol * red.M_norms)).any():
                stationary = True
            if stationary:
                mu = ws.solve_transpose(-g)
                if mu.size and mu.min() < -opts.mult_tol:
                    ws.remove_at(int(np.argmin(mu)))
                    continue
                y = np.zeros(M.shape[0])
                y[violated] = 1.0
                if mu.size:
                    y[ws.indices] += np.maximum(mu, 0.0)
                return w, ws, iters, y
            excess = M @ w - d
            hard = live & ~violated
            hard[ws.indices] = False
            block = hard & (Mp > opts.ratio_tol * red.M_norms)
            alpha_hard = np.inf
            i_hard = -1
            if block.any():
                idx = np.flatnonzero(block)
                ratios = np.maximum(-excess[idx], 0.0) / Mp[idx]
                j = int(np.argmin(ratios))
                alpha_hard, i_hard = ratios[j], int(idx[j])
            # breakpoints where violated rows become satisfied, in order
            vidx = np.flatnonzero(violated & (Mp < -opts.ratio_tol * red.M_norms))
            bp = excess[vidx] / -Mp[vidx]
            order = np.lexsort((vidx, bp))
            slope = float(g @ p)
            alpha = alpha_hard
            stop_row = i_hard
            passed = []
            for o in order:
                if bp[o] >= alpha_hard:
                    break
                passed.append(vidx[o])
                slope -= Mp[vidx[o]]
                if slope >= 0.0:
                    alpha = bp[o]
                    stop_row = int(vidx[o])
                    break
            if not np.isfinite(alpha):
                # rounding kept the slope marginally negative past the last breakpoint
                alpha = bp[order[len(passed) - 1]]
                stop_row = int(passed[-1])
            w = w + alpha * p
            violated[passed] = False
            if stop_row >= 0:
                ws.add(stop_row)
            iters += 1
            if alpha == 0.0 and cyc.zero_step(ws.key()):
                self._perturb(d, w, ws)
                cyc.reset()
            excess = M @ w - d
            violated &= excess > opts.feas_tol
        return w, ws, iters, None

    # -- phase II ----------------------------------------------------------

    def phase2_step(self, w, c, d, ws, z_inf):
        """One Phase II step.

        Returns ``(kind, w, info)`` with ``kind`` one of ``"moved"``,
        ``"blocked"``, ``"dropped"``, ``"converged"``; for ``"converged"``
        ``info`` holds the multipliers of the working set rows.
        """
        opts, red = self.options, self.red
        grad = w + c
        p = -ws.project(grad)
        pz = red.T @ p
        if np.abs(pz).max(initial=0.0) <= opts.step_tol * (1.0 + z_inf):
            lam_w = ws.solve_transpose(-2.0 * grad)
            if lam_w.size:
                temp = np.asarray(ws.indices) >= red.n_real
                # temporary rows are released on a multiplier of either sign
                temp_tol = opts.mult_tol * (1.0 + 2.0 * np.abs(grad).max(initial=0.0))
                score = np.where(temp, np.abs(lam_w) - temp_tol, -lam_w - opts.mult_tol)
                pos = int(np.argmax(score))
                if score[pos] > 0.0:
                    row = ws.indices[pos]
                    ws.remove_at(pos)
                    return "dropped", w, row
            return "converged", w, lam_w
        Mp = red.M @ p
        cand = red.live.copy()
        cand[[i for i in ws.indices if i < red.n_real]] = False
        cand &= Mp > opts.ratio_tol * red.M_norms
        if cand.any():
            idx = np.flatnonzero(cand)
            slack = np.maximum(d[idx] - red.M[idx] @ w, 0.0)
            ratios = slack / Mp[idx]
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                ws.add(int(idx[j]))
                return "blocked", w + ratios[j] * p, int(idx[j])
        return "moved", w + p, None

    # -- driver ------------------------------------------------------------

    def solve(self, x, z_init=None, criterion=None, certifier=None,
              working_hint=None, callback=None):
        """Solve the QP at state ``x``.

        Parameters
        ----------
        x : ndarray
            Parameter (initial state).
        z_init : ndarray, optional
            Warm start; zero (cold start) by default.
        criterion : Termination, optional
            Defaults to optimality.
        certifier : callable, optional
            ``certifier(qp, z, x) -> Certificate``; required behaviour for
            ``pfsub`` and ``gap``. Defaults to ``certificates.certify``.
        working_hint : sequence of int, optional
            Working set of a nearby solved instance (hot start).
        callback : callable, optional
            Called as ``callback(z, phase, iteration)`` at every iterate.

        Returns
        -------
        SolveResult

        Raises
        ------
        IterationLimitError
            When a phase exceeds ``max_iter_factor * d_p`` iterations.
        """
        qp, red, opts = self.qp, self.red, self.options
        x = np.asarray(x, dtype=float).reshape(qp.dims.n)
        criterion = criterion or Termination.optimal()
        if criterion.needs_certificate and certifier is None:
            from .certificates import certify
            certifier = certify
        z_init = np.zeros(qp.dims.d_p) if z_init is None else np.asarray(z_init, dtype=float)
        if z_init.shape != (qp.dims.d_p,):
            raise InvalidArgumentError(f"z_init has shape {z_init.shape}, expected {(qp.dims.d_p,)}")

        d = red.d(x)
        c = red.c(x)
        zp = red.zp(x)
        infeasible = SolveResult(z_init.copy(), np.zeros(qp.dims.d_eq), np.zeros(qp.dims.d_in),
                                 Status.INFEASIBLE)
        if not self._constant_rows_ok(d):
            # a row independent of z is violated: d_i(x) < 0 is itself the cut
            i = int(red.zero_rows[np.argmin(d[red.zero_rows])])
            infeasible.farkas = (red.D_map[i].copy(), -float(qp.w_in[i]))
            return infeasible
        if not red.eq_consistent(x, opts.feas_tol):
            return infeasible

        already = self._is_feasible(z_init, x)
        ws = None
        p1 = 0
        if already:
            z = z_init.copy()
            w = red.to_w(z, zp)
        else:
            w = None
            if working_hint is not None:
                w, ws = self._hot_start(working_hint, c, d)
            if w is None:
                w = red.to_w(z_init, zp)
                w, ws, p1, farkas = self.phase1(w, d)
                if farkas is not None:
                    infeasible.phase1_iters = p1
                    infeasible.farkas = self._farkas_cut(farkas, x)
                    return infeasible
            z = red.to_z(w, zp)
        if ws is None:
            ws = self.init_working_set(w, d)
        result = SolveResult(z, np.zeros(qp.dims.d_eq), np.zeros(qp.dims.d_in),
                             Status.FEASIBLE, phase1_iters=p1, phase1_skipped=already)
        if callback is not None:
            callback(z, 1, p1)
        if criterion.kind == "pf":
            result.working = self._real(ws)
            return result
        if criterion.needs_certificate and self._certified(criterion, certifier, z, x, result):
            result.working = self._real(ws)
            return result
        # temporary bounds emulate a cold-start vertex; a hinted working set is kept as is
        if opts.temporary_bounds and working_hint is None:
            ws = self._add_temporaries(ws)

        cyc = _Cycling(opts.cycle_repeats)
        d_work = d.copy()
        k = 0
        passes = 0
        while True:
            passes += 1
            if passes > self.max_iter:
                raise IterationLimitError(f"phase II exceeded {self.max_iter} iterations")
            kind, w_new, info = self.phase2_step(w, c, d_work, ws, np.abs(z).max(initial=0.0))
            if kind == "converged":
                lam = np.zeros(qp.dims.d_in)
                real = np.asarray(ws.indices) < red.n_real
                lam[np.asarray(ws.indices, dtype=int)[real]] = np.maximum(info[real], 0.0)
                z = red.to_z(w, zp)
                result.z = z
                result.lam = lam
                result.nu = red.equality_multipliers(z, lam)
                result.status = Status.OPTIMAL
                result.phase2_iters = k
                result.working = self._real(ws)
                return result
            if kind == "dropped":
                result.drops += 1
                continue
            k += 1
            if kind == "blocked" and np.array_equal(w_new, w):
                if cyc.zero_step(ws.key()):
                    self._perturb(d_work, w, ws)
                    result.perturbations += 1
                    cyc.reset()
            w = w_new
            z = red.to_z(w, zp)
            result.z = z
            result.phase2_iters = k
            if callback is not None:
                callback(z, 2, k)
            if criterion.needs_certificate and self._certified(criterion, certifier, z, x, result):
                result.working = self._real(ws)
                return result

    def _real(self, ws):
        return tuple(i for i in ws.indices if i < self.red.n_real)

    def _is_feasible(self, z, x):
        qp, tol = self.qp, self.options.feas_tol
        if qp.dims.d_eq and np.abs(qp.G_eq @ z - qp.eq_rhs(x)).max() > tol:
            return False
        return bool((qp.G_in @ z - qp.in_rhs(x)).max(initial=-np.inf) <= tol)

    def _certified(self, criterion, certifier, z, x, result):
        cert = certifier(self.qp, z, x)
        result.certificate = cert
        if criterion.kind == "pfsub":
            ok = cert.passed
        else:
            ok = cert.feasible and cert.eta <= criterion.threshold
        if ok:
            result.status = Status.CERTIFIED
        return ok

    def _perturb(self, d, w, ws):
        opts, red = self.options, self.red
        slack = d - red.M @ w
        rows = red.live & (np.abs(slack) <= opts.feas_tol)
        rows[list(self._real(ws))] = False
        d[rows] += opts.perturbation * (1.0 + np.abs(d[rows]))

    def _hot_start(self, hint, c, d):
        """Equality-constrained minimizer on the hinted working set, if feasible."""
        red = self.red
        hint = [int(i) for i in hint if 0 <= int(i) < red.M.shape[0] and red.live[int(i)]]
        ws = self.init_working_set(np.zeros(red.nz), d, candidates=sorted(set(hint)))
        k = len(ws)
        if k:
            # min ||w + c||^2 s.t. M_W w = d_W
            Q1 = ws.Q[:, :k]
            w_part = Q1 @ scipy.linalg.solve_triangular(ws.R, d[ws.indices], trans="T")
            w = w_part + ws.project(-c - w_part)
        else:
            w = -c
        if (red.M[red.live] @ w - d[red.live]).max(initial=-np.inf) > self.options.feas_tol:
            return None, None
        return w, ws


_SOLVERS = weakref.WeakKeyDictionary()


def get_solver(qp, options=None):
    """Cached solver for ``qp`` (default options only are cached)."""
    if options is not None:
        return ActiveSetSolver(qp, options)
    solver = _SOLVERS.get(qp)
    if solver is None:
        solver = ActiveSetSolver(qp)
        _SOLVERS[qp] = solver
    return solver


def solve(qp, x, z_init=None, criterion=None, certifier=None, working_hint=None,
          callback=None, options=None):
    """Convenience wrapper around :meth:`ActiveSetSolver.solve`."""
    return get_solver(qp, options).solve(x, z_init, criterion, certifier, working_hint, callback)
