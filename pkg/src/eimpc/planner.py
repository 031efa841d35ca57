"""Network-initialized planner, receding-horizon simulation and evaluation metrics."""

import time
from dataclasses import dataclass, field

import numpy as np

from .active_set import Status, Termination, get_solver
from .batch_qp import objective
from .certificates import certify
from .errors import InfeasibleError, InvalidArgumentError, RecursiveFeasibilityError
from .neural import forward

CONSTRAINT_TOL = 1e-8


@dataclass
class PlanResult:
    z: np.ndarray
    u0: np.ndarray
    nn_used: bool
    phase1_iters: int
    phase2_iters: int
    eta: float
    certified: bool
    status: Status

    @property
    def iterations(self):
        return self.phase1_iters + self.phase2_iters


def explicit_implicit_plan(qp, x, model=None, criterion=None, solver=None):
    """Plan from the network guess, correcting it with the active-set solver.

    The guess is accepted as is when it is feasible and certified; otherwise
    the solver restores feasibility and iterates until ``criterion`` holds.

    Parameters
    ----------
    qp : BatchQp
    x : ndarray
    model : MlpModel, optional
        Without a model the solver starts from zero.
    criterion : Termination, optional
        Defaults to feasibility plus the suboptimality certificate.

    Raises
    ------
    InfeasibleError
        If the QP at ``x`` has no feasible point.
    """
    solver = solver or get_solver(qp)
    criterion = criterion or Termination.parse("pfsub")
    x = np.asarray(x, dtype=float)
    z_init = forward(model, x) if model is not None else None
    res = solver.solve(x, z_init=z_init, criterion=criterion)
    if res.status == Status.INFEASIBLE:
        raise InfeasibleError(f"no feasible plan at x = {x}")
    cert = res.certificate
    if res.status == Status.OPTIMAL or cert is None:
        eta = np.nan
        certified = False
    else:
        eta, certified = cert.eta, cert.passed
    return PlanResult(res.z, qp.first_input(res.z).copy(), model is not None,
                      res.phase1_iters, res.phase2_iters, eta, certified, res.status)


# -- open loop ------------------------------------------------------------

def _stats(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return np.nan, np.nan
    return float(v.mean()), float(v.max())


def open_loop_eval(qp, records, model, criteria, modes=("nn", "cold"), solver=None):
    """Iterations and relative suboptimality per (initialization, criterion).

    Returns
    -------
    list of dict
        Keys ``init, criterion, n, mean_iter, max_iter, mean_sigma,
        max_sigma, excluded``; ``sigma = (J - J*) / J*`` with records whose
        ``|J*| <= 1e-9`` left out and counted in ``excluded``.
    """
    solver = solver or get_solver(qp)
    rows = []
    for mode in modes:
        if mode == "nn" and model is None:
            continue
        for crit in criteria:
            crit = Termination.parse(crit) if isinstance(crit, str) else crit
            iters, sig = [], []
            excluded = 0
            for r in records:
                plan = explicit_implicit_plan(qp, r.x, model if mode == "nn" else None, crit, solver)
                iters.append(plan.iterations)
                J_star = objective(qp, r.z, r.x)
                if abs(J_star) <= 1e-9:
                    excluded += 1
                    continue
                sig.append((objective(qp, plan.z, r.x) - J_star) / J_star)
            mi, xi = _stats(iters)
            ms, xs = _stats(sig)
            rows.append(dict(init=mode, criterion=str(crit), n=len(records), mean_iter=mi,
                             max_iter=xi, mean_sigma=ms, max_sigma=xs, excluded=excluded))
    return rows


# -- closed loop ----------------------------------------------------------

@dataclass
class Trajectory:
    states: np.ndarray
    inputs: np.ndarray
    iterations: list
    entered_Xf_at: int = None
    J_cl: float = np.nan
    violations: int = 0
    certified: list = field(default_factory=list)

    @property
    def reached(self):
        return self.entered_Xf_at is not None


def _violation(A, b, v):
    return float((A @ v - b).max(initial=-np.inf))


def closed_loop_simulate(spec, qp, x0, model=None, criterion=None, solver=None, max_steps=500):
    """Receding-horizon simulation until the state enters the terminal set.

    Inside ``X_f`` the LQR law takes over, whose cost from there on is
    exactly ``x' P x``; the simulation therefore stops at entry and adds
    that term to the accumulated stage cost.

    Raises
    ------
    InfeasibleError
        If ``x0`` itself is infeasible.
    RecursiveFeasibilityError
        If the QP becomes infeasible after the first step.
    """
    solver = solver or get_solver(qp)
    criterion = criterion or Termination.parse("pfsub")
    x = np.asarray(x0, dtype=float).copy()
    states, inputs, iters, certs = [x.copy()], [], [], []
    J = 0.0
    violations = 0
    entered = None
    for t in range(max_steps + 1):
        if _violation(spec.X.A, spec.X.b, x) > CONSTRAINT_TOL:
            violations += 1
        if spec.Xf.contains(x, tol=0.0):
            entered = t
            J += float(x @ spec.P @ x)
            break
        if t == max_steps:
            break
        try:
            plan = explicit_implicit_plan(qp, x, model, criterion, solver)
        except InfeasibleError:
            if t == 0:
                raise
            raise RecursiveFeasibilityError(f"QP infeasible at step {t}, x = {x}") from None
        u = plan.u0
        if _violation(spec.U.A, spec.U.b, u) > CONSTRAINT_TOL:
            violations += 1
        iters.append(plan.iterations)
        certs.append(plan.certified)
        J += float(x @ spec.Q @ x + u @ spec.R @ u)
        x = spec.model.step(x, u)
        states.append(x.copy())
        inputs.append(u.copy())
    m = spec.m
    return Trajectory(np.array(states), np.array(inputs).reshape(-1, m), iters, entered, J,
                      violations, certs)


@dataclass(frozen=True)
class Method:
    """Closed-loop method: initialization ``"nn"`` or ``"cold"`` plus a criterion."""

    init: str
    criterion: str

    def __post_init__(self):
        if self.init not in ("nn", "cold"):
            raise InvalidArgumentError(f"unknown initialization {self.init!r}")
        Termination.parse(self.criterion)

    @property
    def name(self):
        return f"{self.init}/{self.criterion}"


def closed_loop_eval(spec, qp, model, methods, x0s, solver=None, max_steps=500):
    """Closed-loop iteration counts and cost excess per method.

    The reference cost of each initial state comes from a cold-started run
    solved to optimality.

    Returns
    -------
    rows : list of dict
    trajectories : dict
        Method name to list of Trajectory, including ``"cold/optimal"``.
    """
    solver = solver or get_solver(qp)
    x0s = [np.asarray(x, dtype=float) for x in x0s]
    if not x0s:
        return [], {}
    ref_method = Method("cold", "optimal")
    runs = {}

    def run(meth):
        if meth.name not in runs:
            mdl = model if meth.init == "nn" else None
            crit = Termination.parse(meth.criterion)
            t0 = time.perf_counter()
            trajs = [closed_loop_simulate(spec, qp, x, mdl, crit, solver, max_steps) for x in x0s]
            runs[meth.name] = (trajs, time.perf_counter() - t0)
        return runs[meth.name]

    ref, _ = run(ref_method)
    rows = []
    for meth in methods:
        if meth.init == "nn" and model is None:
            continue
        trajs, elapsed = run(meth)
        first = [t.iterations[0] for t in trajs if t.iterations]
        rest = [k for t in trajs for k in t.iterations[1:]]
        sig = [(t.J_cl - r.J_cl) / r.J_cl for t, r in zip(trajs, ref) if r.J_cl > 1e-9]
        rows.append(dict(
            method=meth.name, n=len(trajs),
            mean_iter_x0=_stats(first)[0], max_iter_x0=_stats(first)[1],
            mean_iter_rest=_stats(rest)[0], max_iter_rest=_stats(rest)[1],
            mean_sigma_cl=_stats(sig)[0], max_sigma_cl=_stats(sig)[1],
            reached=sum(t.reached for t in trajs), violations=sum(t.violations for t in trajs),
            seconds=elapsed))
    return rows, {k: v[0] for k, v in runs.items()}
