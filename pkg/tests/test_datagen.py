import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import lp_feasible, sobol_gray
from eimpc.active_set import get_solver
from eimpc.batch_qp import check_primal_feasible, objective
from eimpc.datagen import (MAX_SOBOL_DIM, SampleRecord, WalkConfig, dataset_bytes, default_step,
                           generate_data, line_solve, manifest_text, parse_dataset, random_walk,
                           read_dataset, rejection_rate, solve_record, sobol, write_dataset)
from eimpc.errors import FormatError, InfeasibleError, InvalidArgumentError


@pytest.fixture(scope="module")
def origin_seed(sys1):
    _, qp = sys1
    rec, _ = solve_record(get_solver(qp), np.zeros(2))
    return rec


@pytest.fixture(scope="module")
def small_data(sys1):
    spec, qp = sys1
    return generate_data(spec, WalkConfig(40, 10, 10, seed=3), qp)


def _check_record(qp, r):
    """Re-check a record from scratch against a cold solve."""
    ok, _ = check_primal_feasible(qp, r.z, r.x)
    assert ok
    assert r.lam.min() >= 0.0
    kkt = 2 * qp.H @ r.z + qp.G_eq.T @ r.nu + qp.G_in.T @ r.lam
    assert np.abs(kkt).max() <= 1e-6 * (1 + np.abs(qp.H @ r.z).max())
    cold = get_solver(qp).solve(r.x)
    J, Jc = objective(qp, r.z, r.x), objective(qp, cold.z, r.x)
    assert abs(J - Jc) <= 1e-6 * (1 + abs(J))


class TestSobol:
    def test_first_points(self):
        np.testing.assert_array_equal(sobol(1, 3)[:, 0], [0.5, 0.75, 0.25])
        np.testing.assert_array_equal(sobol(2, 1), [[0.5, 0.5]])

    @pytest.mark.parametrize("dim", [1, 2, 5, 10])
    def test_matches_gray_code_oracle(self, dim):
        np.testing.assert_array_equal(sobol(dim, 64), sobol_gray(65, dim)[1:])

    @pytest.mark.parametrize("dim", [1, 3, 12])
    def test_dyadic_bins(self, dim):
        # points 1 .. 2^k - 1 together with the skipped zero point fill every bin once
        for k in range(1, 7):
            u = sobol(dim, 2 ** k - 1)[:, 0]
            bins = np.concatenate([[0], np.floor(u * 2 ** k).astype(int)])
            assert sorted(bins) == list(range(2 ** k))

    @settings(max_examples=30)
    @given(dim=st.integers(1, MAX_SOBOL_DIM), count=st.integers(0, 50),
           lo=st.floats(-10, 0), width=st.floats(0.1, 10))
    def test_inside_box(self, dim, count, lo, width):
        pts = sobol(dim, count, np.full(dim, lo), np.full(dim, lo + width))
        assert pts.shape == (count, dim)
        assert np.all(pts >= lo) and np.all(pts <= lo + width)

    def test_dimension_limit(self):
        with pytest.raises(InvalidArgumentError):
            sobol(MAX_SOBOL_DIM + 1, 1)
        with pytest.raises(InvalidArgumentError):
            sobol(0, 1)

    def test_deterministic(self):
        np.testing.assert_array_equal(sobol(7, 20), sobol(7, 20))


class TestLineSolve:
    def test_zero_length(self, sys1, origin_seed):
        _, qp = sys1
        assert line_solve(origin_seed, np.zeros(2), 0.25, qp) == []

    def test_interior_goal(self, sys1, origin_seed):
        _, qp = sys1
        recs = line_solve(origin_seed, np.array([2.0, 0.0]), 0.25, qp)
        assert len(recs) == 8
        np.testing.assert_allclose(recs[-1].x, [2.0, 0.0])
        for i, r in enumerate(recs, start=1):
            np.testing.assert_allclose(r.x, [0.25 * i, 0.0], atol=1e-15)
            _check_record(qp, r)

    def test_partial_final_step_is_clamped(self, sys1, origin_seed):
        _, qp = sys1
        recs = line_solve(origin_seed, np.array([0.6, 0.0]), 0.25, qp)
        assert [r.x[0] for r in recs] == [0.25, 0.5, 0.6]

    def test_infeasible_goal_stops_at_boundary(self, sys1, origin_seed):
        _, qp = sys1
        goal = np.array([5.0, 1.0])
        d = 0.25
        recs = line_solve(origin_seed, goal, d, qp)
        n_steps = math.ceil(np.linalg.norm(goal) / d)
        assert 0 < len(recs) < n_steps
        # bisection oracle for the boundary along the ray
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if lp_feasible(qp, mid * goal) else (lo, mid)
        t_last = np.linalg.norm(recs[-1].x) / np.linalg.norm(goal)
        t_next = (len(recs) + 1) * d / np.linalg.norm(goal)
        assert t_last <= hi + 1e-12
        assert t_next >= lo - 1e-12
        assert not lp_feasible(qp, min(t_next, 1.0) * goal)

    def test_step_spacing_and_hot_start_gain(self, sys1, origin_seed):
        _, qp = sys1
        solver = get_solver(qp)
        rng = np.random.default_rng(8)
        hot, cold = [], []
        while len(hot) < 500:
            goal = rng.uniform([-5, -5], [5, 5])
            stats = []
            recs = line_solve(origin_seed, goal, 0.25, qp, solver, stats)
            xs = [origin_seed.x] + [r.x for r in recs]
            for a, b in zip(xs[:-2], xs[1:-1]):
                assert abs(np.linalg.norm(b - a) - 0.25) <= 1e-12
            hot.extend(stats[:len(recs)])
            cold.extend(solver.solve(r.x).iterations for r in recs)
        assert np.mean(hot) < np.mean(cold)


class TestRandomWalk:
    def test_zero_goals(self, sys1, origin_seed):
        _, qp = sys1
        seeds, recs = random_walk([], [origin_seed], 0.25, qp, rng=0)
        assert seeds == [origin_seed] and recs == []

    def test_goal_at_seed(self, sys1, origin_seed):
        _, qp = sys1
        seeds, recs = random_walk([np.zeros(2)], [origin_seed], 0.25, qp, rng=0)
        assert seeds == [origin_seed] and recs == []

    def test_empty_pool_rejected(self, sys1):
        _, qp = sys1
        with pytest.raises(InvalidArgumentError):
            random_walk([np.ones(2)], [], 0.25, qp)

    def test_records_feasible_against_cold_solve(self, sys1, origin_seed):
        spec, qp = sys1
        goals = sobol(2, 100, [-5, -5], [5, 5])
        seeds, recs = random_walk(goals, [origin_seed], 0.25, qp, rng=1)
        assert len(seeds) > 1 and len(recs) > 100
        solver = get_solver(qp)
        for r in recs:
            assert solver.solve(r.x).feasible

    def test_deterministic(self, sys1, origin_seed):
        _, qp = sys1
        goals = sobol(2, 20, [-5, -5], [5, 5])
        a = random_walk(goals, [origin_seed], 0.25, qp, rng=4)[1]
        b = random_walk(goals, [origin_seed], 0.25, qp, rng=4)[1]
        assert [r.x.tobytes() for r in a] == [r.x.tobytes() for r in b]


class TestGenerateData:
    def test_zero_goals(self, sys1):
        spec, qp = sys1
        out = generate_data(spec, WalkConfig(0, 0, 0), qp)
        assert len(out.train) == 1 and out.test == []
        np.testing.assert_array_equal(out.train[0].x, 0.0)

    def test_train_test_disjoint(self, small_data):
        tr = {r.x.tobytes() for r in small_data.train}
        te = {r.x.tobytes() for r in small_data.test}
        assert tr and te and not tr & te

    def test_records_recheck(self, sys1, small_data):
        _, qp = sys1
        for r in small_data.train[::5] + small_data.test[::5]:
            _check_record(qp, r)

    def test_manifest(self, sys1, small_data):
        spec, _ = sys1
        m = small_data.manifest
        assert m["goals"] == [40, 10, 10] and m["seed"] == 3
        # X is |x1| <= 5, |x2| <= 1: one twentieth of the shorter edge
        assert m["step_d"] == default_step(spec) == 0.1
        assert m["train_records"] == len(small_data.train)

    def test_manifest_timestamp(self, monkeypatch, small_data):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
        assert "generated = 1700000000" in manifest_text(small_data.manifest)
        monkeypatch.delenv("SOURCE_DATE_EPOCH")
        assert "generated = unset" in manifest_text(small_data.manifest)

    def test_byte_identical_reruns(self, sys1, small_data):
        spec, qp = sys1
        again = generate_data(spec, WalkConfig(40, 10, 10, seed=3), qp)
        d = small_data.dims
        assert dataset_bytes(again.train, d) == dataset_bytes(small_data.train, d)
        assert dataset_bytes(again.test, d) == dataset_bytes(small_data.test, d)

    def test_infeasible_origin(self, sys1):
        spec, qp = sys1
        with pytest.raises(InfeasibleError):
            generate_data(spec, WalkConfig(1, 0, 0), qp, x0=np.array([5.0, 1.0]))

    def test_config_validation(self):
        with pytest.raises(InvalidArgumentError):
            WalkConfig(-1, 0, 0)
        with pytest.raises(InvalidArgumentError):
            WalkConfig(1, 1, 1, step_d=0.0)


class TestDatasetFormat:
    def test_roundtrip(self, tmp_path, small_data):
        path = tmp_path / "d.mpcd"
        write_dataset(path, small_data.train, small_data.dims)
        dims, recs = read_dataset(path)
        assert dims == small_data.dims and len(recs) == len(small_data.train)
        for a, b in zip(recs, small_data.train):
            for f in ("x", "z", "nu", "lam"):
                assert np.array_equal(getattr(a, f), getattr(b, f))
            assert a.aux == b.aux

    def test_layout(self):
        r = SampleRecord(np.array([1.0]), np.array([2.0, 3.0]), np.zeros(0), np.array([4.0]), (7,))
        buf = dataset_bytes([r], (1, 2, 0, 1))
        assert buf[:5] == b"MPCD\x01"
        assert len(buf) == 5 + 20 + 8 * 4 + 4 + 4
        assert np.frombuffer(buf, "<f8", 4, 25).tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_corruption_offsets(self, small_data):
        buf = dataset_bytes(small_data.train[:3], small_data.dims)
        with pytest.raises(FormatError) as e:
            parse_dataset(b"XXXX" + buf[4:])
        assert e.value.offset == 0
        with pytest.raises(FormatError) as e:
            parse_dataset(buf[:4] + b"\x09" + buf[5:])
        assert e.value.offset == 4
        with pytest.raises(FormatError) as e:
            parse_dataset(buf[:-3])
        assert 25 <= e.value.offset < len(buf)
        with pytest.raises(FormatError) as e:
            parse_dataset(buf + b"\x00")
        assert e.value.offset == len(buf)
        with pytest.raises(FormatError):
            parse_dataset(buf[:10])

    def test_dimension_mismatch(self):
        r = SampleRecord(np.ones(2), np.ones(3), np.zeros(0), np.zeros(0))
        with pytest.raises(InvalidArgumentError):
            dataset_bytes([r], (2, 4, 0, 0))


class TestRejection:
    def test_sys1_small_sample(self, sys1):
        spec, qp = sys1
        res = rejection_rate(spec, 2000, rng=0, qp=qp)
        assert abs(res.fraction - 0.986) <= 0.01
        assert res.half_width == pytest.approx(1.96 * math.sqrt(res.fraction * (1 - res.fraction) / 2000))

    def test_cuts_do_not_change_outcome(self, sys1):
        spec, qp = sys1
        a = rejection_rate(spec, 500, rng=2, qp=qp, use_cuts=True)
        b = rejection_rate(spec, 500, rng=2, qp=qp, use_cuts=False)
        assert a.feasible == b.feasible and b.cut_hits == 0

    def test_agrees_with_lp_oracle(self, sys1):
        spec, qp = sys1
        # same draws as the sampler: uniform on the state box
        rng = np.random.default_rng(6)
        xs = rng.uniform([-5, -1], [5, 1], (400, 2))
        expect = sum(lp_feasible(qp, x) for x in xs)
        res = rejection_rate(spec, 400, rng=6, qp=qp)
        assert res.feasible == expect

    def test_invalid_count(self, sys1):
        spec, qp = sys1
        with pytest.raises(InvalidArgumentError):
            rejection_rate(spec, 0, qp=qp)
