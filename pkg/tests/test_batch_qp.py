import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import benchmark
from eimpc.active_set import get_solver
from eimpc.batch_qp import (BatchQp, assemble_batch, check_primal_feasible, dual_objective,
                            duality_gap, lagrangian, objective, rollout, suboptimality)
from eimpc.errors import CertificatePreconditionError, InvalidArgumentError

J_SYS1_AT_1_0 = 2.3671014909478783  # enumeration oracle; equals P[0, 0] since (1, 0) lies in X_f


def _random_feasible(spec, qp, rng, x=None):
    """A feasible (x, z) from the optimal plan at a random state, perturbed inward."""
    solver = get_solver(qp)
    lo, hi = spec.X.box_bounds()
    while True:
        x = rng.uniform(lo, hi) * 0.5 if x is None else x
        res = solver.solve(x)
        if res.feasible:
            return x, res
        x = None


class TestAssembly:
    def test_block_structure_sys1(self, sys1):
        spec, qp = sys1
        n, m, N = 2, 1, 10
        H = qp.H
        np.testing.assert_array_equal(H[:n, :n], spec.Q)
        np.testing.assert_array_equal(H[(N - 1) * n:N * n, (N - 1) * n:N * n], spec.P)
        np.testing.assert_array_equal(H[N * n:, N * n:], np.eye(N) * spec.R[0, 0])
        np.testing.assert_array_equal(qp.G_in[:4], 0.0)
        np.testing.assert_array_equal(qp.E_in[:4], -spec.X.A)
        np.testing.assert_array_equal(qp.E_eq[:n], spec.model.A)
        np.testing.assert_array_equal(qp.E_eq[n:], 0.0)

    @pytest.mark.parametrize("sys_id,dims", [(1, (30, 66, 20)), (2, (300, 846, 240)),
                                             (3, (450, 1004, 360))])
    def test_dimensions(self, sys_id, dims):
        _, qp = benchmark(sys_id)
        assert (qp.dims.d_p, qp.dims.d_in, qp.dims.d_eq) == dims

    @pytest.mark.parametrize("sys_id", [1, 2, 3])
    def test_rollout_satisfies_dynamics(self, sys_id, rng):
        spec, qp = benchmark(sys_id)
        for _ in range(100):
            x = rng.standard_normal(spec.n)
            z = rollout(spec, x, rng.standard_normal(spec.N * spec.m))
            assert np.abs(qp.G_eq @ z - qp.E_eq @ x).max() <= 1e-12 * (1 + np.abs(z).max())

    @pytest.mark.parametrize("sys_id", [1, 2, 3])
    def test_precompute_consistency(self, sys_id):
        _, qp = benchmark(sys_id)
        lhs = 2.0 * qp.H @ qp.H_inv_Gt
        assert np.abs(lhs - qp.G.T).max() <= 1e-10 * max(1.0, np.abs(qp.G).max())

    def test_shape_validation(self):
        with pytest.raises(InvalidArgumentError):
            BatchQp.from_matrices(np.eye(2), np.ones((1, 3)), [[1.0]], np.ones((1, 2)), [[0.0]], [1.0])

    def test_arrays_read_only(self, sys1):
        _, qp = sys1
        with pytest.raises(ValueError):
            qp.H[0, 0] = 5.0


class TestEvaluations:
    def test_objective_trivial(self, sys1):
        spec, qp = sys1
        x = np.array([1.0, -0.5])
        assert objective(qp, np.zeros(30), x) == pytest.approx(x @ spec.Q @ x)
        assert objective(qp, np.zeros(30), np.zeros(2)) == 0.0

    def test_objective_at_oracle_optimum(self, sys1):
        _, qp = sys1
        x = np.array([1.0, 0.0])
        z = get_solver(qp).solve(x).z
        assert objective(qp, z, x) == pytest.approx(J_SYS1_AT_1_0, abs=1e-8)

    def test_lagrangian_identities(self, sys1, rng):
        spec, qp = sys1
        x, res = _random_feasible(spec, qp, rng)
        J = objective(qp, res.z, x)
        zeros = np.zeros(qp.dims.d_eq), np.zeros(qp.dims.d_in)
        assert lagrangian(qp, res.z, *zeros, x) == pytest.approx(J)
        # complementary slackness at the optimum
        assert lagrangian(qp, res.z, res.nu, res.lam, x) == pytest.approx(J, abs=1e-8)

    def test_dual_objective_trivial(self, sys1):
        spec, qp = sys1
        x = np.array([0.3, 0.2])
        d, ok = dual_objective(qp, np.zeros(20), np.zeros(66), x)
        assert ok and d == pytest.approx(x @ spec.Q @ x)
        _, ok = dual_objective(qp, np.zeros(20), -np.ones(66), x)
        assert not ok

    @pytest.mark.parametrize("sys_id", [1, 2, 3])
    def test_strong_duality_at_optimum(self, sys_id, rng):
        spec, qp = benchmark(sys_id)
        x, res = _random_feasible(spec, qp, rng, x=np.zeros(spec.n) + 0.05)
        J = objective(qp, res.z, x)
        d, ok = dual_objective(qp, res.nu, res.lam, x)
        assert ok
        assert abs(d - J) <= 1e-7 * (1 + abs(J))

    @pytest.mark.parametrize("sys_id", [1, 2, 3])
    def test_weak_duality(self, sys_id, rng):
        spec, qp = benchmark(sys_id)
        x, res = _random_feasible(spec, qp, rng, x=np.zeros(spec.n) + 0.05)
        J = objective(qp, res.z, x)
        for _ in range(1000):
            nu = rng.standard_normal(qp.dims.d_eq) * rng.exponential()
            lam = rng.exponential(size=qp.dims.d_in) * (rng.random(qp.dims.d_in) < 0.2)
            d, ok = dual_objective(qp, nu, lam, x)
            assert ok and d <= J + 1e-8

    def test_duality_gap_cases(self, sys1):
        _, qp = sys1
        x = np.array([1.0, 0.0])
        res = get_solver(qp).solve(x)
        assert abs(duality_gap(qp, res.z, res.nu, res.lam, x)) <= 1e-7
        eta0 = duality_gap(qp, res.z, np.zeros(20), np.zeros(66), x)
        assert eta0 == pytest.approx(res.z @ qp.H @ res.z)
        with pytest.raises(CertificatePreconditionError):
            duality_gap(qp, 100 * res.z, res.nu, res.lam, x)
        with pytest.raises(CertificatePreconditionError):
            duality_gap(qp, res.z, res.nu, -np.ones(66), x)

    def test_suboptimality(self, sys1):
        spec, qp = sys1
        x = np.array([1.0, 0.0])
        z_star = get_solver(qp).solve(x).z
        assert suboptimality(qp, z_star, x, z_star) == 0.0
        # the zero plan is feasible only if the origin rollout is; use the LQR rollout instead
        K = spec.lqr_gain()
        u, cur = [], x.copy()
        for _ in range(spec.N):
            u.append(-K @ cur)
            cur = spec.model.step(cur, u[-1])
        z = rollout(spec, x, np.array(u))
        assert check_primal_feasible(qp, z, x)[0]
        assert suboptimality(qp, z, x, z_star) >= -1e-9

    def test_feasibility_check(self, sys1):
        spec, qp = sys1
        x = np.array([1.0, 0.0])
        z = get_solver(qp).solve(x).z
        ok, viol = check_primal_feasible(qp, z, x)
        assert ok and viol <= 1e-8
        ok, viol = check_primal_feasible(qp, 100 * z, x)
        assert not ok and viol > 0

    @given(seed=st.integers(0, 2**31))
    def test_zero_multiplier_gap_is_quadratic(self, seed):
        # eta(z, 0, 0) = z'Hz for any feasible z
        spec, qp = benchmark(1)
        rng = np.random.default_rng(seed)
        x = rng.uniform(-0.5, 0.5, 2)
        u = rng.uniform(-0.05, 0.05, spec.N)
        z = rollout(spec, x, u)
        if check_primal_feasible(qp, z, x)[0]:
            assert duality_gap(qp, z, np.zeros(20), np.zeros(66), x) == pytest.approx(z @ qp.H @ z)
