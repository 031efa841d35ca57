"""Watch the suboptimality certificate along active-set iterates.

For one Sys. 1 state the solver is run to optimality while every iterate is
recorded. At each feasible iterate the duality gap ``eta`` is compared with the
true suboptimality ``sigma`` and with the stopping threshold ``x'Qx``.
"""

import numpy as np

from eimpc.active_set import get_solver
from eimpc.batch_qp import assemble_batch, objective
from eimpc.certificates import certify
from eimpc.systems import build_benchmark


def main():
    spec = build_benchmark(1)
    qp = assemble_batch(spec)
    x = np.array([-4.0, 0.5])
    iterates = []
    res = get_solver(qp).solve(x, callback=lambda z, phase, k: iterates.append((phase, z.copy())))
    J_star = objective(qp, res.z, x)
    thr = x @ qp.Qx @ x
    print(f"x = {x}, J* = {J_star:.6f}, threshold x'Qx = {thr:.4f}")
    print(f"{'k':>3} {'phase':>5} {'sigma':>12} {'eta':>12}  certified")
    for k, (phase, z) in enumerate(iterates):
        cert = certify(qp, z, x)
        if not cert.feasible:
            print(f"{k:>3} {phase:>5} {'infeasible':>12}")
            continue
        sigma = objective(qp, z, x) - J_star
        print(f"{k:>3} {phase:>5} {sigma:12.4e} {cert.eta:12.4e}  {cert.passed}")
    # eta bounds sigma from above, so a passing certificate is a guarantee


if __name__ == "__main__":
    main()
