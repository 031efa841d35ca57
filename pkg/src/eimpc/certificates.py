"""Dual recovery from a primal point and the duality-gap suboptimality check.

A feasible plan ``z`` is accepted when the duality gap of ``z`` and the
recovered multipliers does not exceed ``x' Q x``. The gap bounds the true
suboptimality from above, so an accepted plan is never worse than that.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .batch_qp import FEAS_TOL, check_primal_feasible, duality_gap, objective

ACTIVE_TOL = 1e-7


@dataclass(frozen=True)
class Certificate:
    """Result of :func:`certify`.

    ``eta`` is ``inf`` and ``feasible`` is False when ``z`` violates a
    constraint; ``passed`` is then False.
    """

    eta: float
    threshold: float
    passed: bool
    nu: np.ndarray
    lam: np.ndarray
    feasible: bool = True
    reason: str = ""


def active_rows(qp, z, x, tol=ACTIVE_TOL):
    """Inequality rows with ``|G_in z - h(x)| <= tol``."""
    return np.flatnonzero(np.abs(qp.G_in @ z - qp.in_rhs(x)) <= tol)


def recover_duals(qp, z, A, x=None):
    """Multipliers consistent with stationarity on the rows ``A``.

    Solves ``G_S H^{-1} G_S' mu = -2 G_S z`` with ``G_S = [G_eq; G_in[A]]``
    (minimum-norm least squares when singular), zeroes the multipliers of
    rows outside ``A`` and clips negative inequality multipliers to zero.

    Returns
    -------
    nu, lam : ndarray
    """
    A = np.asarray(A, dtype=int)
    d_eq = qp.dims.d_eq
    rows = np.concatenate([np.arange(d_eq), d_eq + A])
    G_S = qp.G[rows]
    # H_inv_Gt holds 0.5 H^{-1} G', hence the factor 2
    gram = 2.0 * G_S @ qp.H_inv_Gt[:, rows]
    rhs = -2.0 * G_S @ z
    try:
        c = scipy.linalg.cho_factor(gram, lower=True)
        mu = scipy.linalg.cho_solve(c, rhs)
        if not np.all(np.isfinite(mu)):
            raise np.linalg.LinAlgError
    except (np.linalg.LinAlgError, ValueError):
        mu = scipy.linalg.lstsq(gram, rhs, lapack_driver="gelsd")[0]
    nu = mu[:d_eq]
    lam = np.zeros(qp.dims.d_in)
    lam[A] = np.maximum(mu[d_eq:], 0.0)
    return nu, lam


def certify(qp, z, x, eps_abs=0.0, active_tol=ACTIVE_TOL, feas_tol=FEAS_TOL):
    """Check ``eta(z, nu, lam | x) <= max(x' Q x, eps_abs)``.

    Parameters
    ----------
    qp : BatchQp
    z, x : ndarray
    eps_abs : float
        Floor on the threshold; zero keeps the strict bound.

    Returns
    -------
    Certificate
    """
    ok, viol = check_primal_feasible(qp, z, x, feas_tol)
    threshold = max(qp.const(x), eps_abs)
    if not ok:
        return Certificate(np.inf, threshold, False, np.zeros(qp.dims.d_eq),
                           np.zeros(qp.dims.d_in), feasible=False,
                           reason=f"infeasible (violation {viol:.3e})")
    nu, lam = recover_duals(qp, z, active_rows(qp, z, x, active_tol), x)
    eta = duality_gap(qp, z, nu, lam, x, feas_tol)
    return Certificate(eta, threshold, bool(eta <= threshold), nu, lam)


def certificate_margin(qp, z, x):
    """``threshold - eta`` (positive when certified); convenience for reports."""
    cert = certify(qp, z, x)
    return cert.threshold - cert.eta, objective(qp, z, x)
