import numpy as np
import pytest

from conftest import rel_err
from flatplan import BoundaryState, FlatTrajectory, OutOfRange, Segment, control_effort, minco_backprop, minco_solve
from flatplan.poly_traj import basis


def rest(p):
    return BoundaryState(np.array(p, float), np.zeros(2), np.zeros(2))


MINJERK_X = np.array([0.0, 0.0, 0.0, 10.0, -15.0, 6.0])


def dense_solve(head, tail, waypoints, duration):
    """Independent dense oracle for the coefficient system."""
    waypoints = np.asarray(waypoints, float).reshape(-1, 2)
    m = waypoints.shape[0] + 1
    dt = duration / m
    n = 6 * m
    a = np.zeros((n, n))
    b = np.zeros((n, 2))
    for d in range(3):
        a[d, :6] = basis(0.0, d)
    b[0:3] = head.as_rows()
    r = 3
    for j in range(m - 1):
        c0, c1 = 6 * j, 6 * (j + 1)
        a[r, c0 : c0 + 6] = basis(dt, 0)
        b[r] = waypoints[j]
        r += 1
        for d in range(5):
            a[r, c0 : c0 + 6] = basis(dt, d)
            a[r, c1 : c1 + 6] = -basis(0.0, d)
            r += 1
    for d in range(3):
        a[r, -6:] = basis(dt, d)
        b[r] = tail.as_rows()[d]
        r += 1
    return np.linalg.solve(a, b).reshape(m, 6, 2), dt


class TestMincoSolve:
    def test_min_jerk_quintic(self):
        seg = minco_solve(rest((0, 0)), rest((1, 0)), np.empty((0, 2)), 1.0)
        assert np.abs(seg.coeffs[0, :, 0] - MINJERK_X).max() < 1e-9
        assert np.abs(seg.coeffs[0, :, 1]).max() < 1e-9

    def test_zero_boundary_gives_zero(self):
        seg = minco_solve(rest((0, 0)), rest((0, 0)), np.empty((0, 2)), 1.0)
        assert np.abs(seg.coeffs).max() == 0.0

    def test_two_piece_waypoint_and_continuity(self):
        seg = minco_solve(rest((0, 0)), rest((1, 0)), np.array([[0.5, 0.0]]), 2.0)
        assert np.allclose(seg.eval_local(1.0, 0), [0.5, 0.0], atol=1e-9)
        for d in range(5):
            left = basis(seg.delta_t, d) @ seg.coeffs[0]
            right = basis(0.0, d) @ seg.coeffs[1]
            assert np.abs(left - right).max() < 1e-8

    def test_matches_dense_oracle_random(self, rng):
        for _ in range(25):
            m = int(rng.integers(1, 6))
            head = BoundaryState(rng.normal(size=2), rng.normal(size=2), rng.normal(size=2))
            tail = BoundaryState(rng.normal(size=2), rng.normal(size=2), rng.normal(size=2))
            q = rng.normal(size=(m - 1, 2)) * 2
            T = float(rng.uniform(0.4, 5.0))
            seg = minco_solve(head, tail, q, T)
            ref, dt = dense_solve(head, tail, q, T)
            assert np.abs(seg.coeffs - ref).max() < 1e-7
            assert seg.delta_t == pytest.approx(dt)

    def test_boundary_conditions_exact(self, rng):
        for _ in range(20):
            m = int(rng.integers(1, 5))
            head = BoundaryState(rng.normal(size=2), rng.normal(size=2), rng.normal(size=2))
            tail = BoundaryState(rng.normal(size=2), rng.normal(size=2), rng.normal(size=2))
            q = rng.normal(size=(m - 1, 2))
            seg = minco_solve(head, tail, q, float(rng.uniform(0.5, 4.0)))
            hb = head.as_rows()
            tb = tail.as_rows()
            for d in range(3):
                assert np.abs(basis(0.0, d) @ seg.coeffs[0] - hb[d]).max() < 1e-9
                assert np.abs(basis(seg.duration - (m - 1) * seg.delta_t, d) @ seg.coeffs[-1] - tb[d]).max() < 1e-8
            for j in range(m - 1):
                assert np.abs(seg.eval_local((j + 1) * seg.delta_t, 0) - q[j]).max() < 1e-9


class TestEval:
    def traj(self):
        seg = Segment(coeffs=MINJERK_X.reshape(1, 6, 1) * np.array([1.0, 0.0]), delta_t=1.0)
        return FlatTrajectory([seg])

    def test_final_instant(self):
        t = self.traj()
        assert np.allclose(t.eval(1.0, 0), [1.0, 0.0])

    def test_rest_boundary(self):
        assert np.allclose(self.traj().eval(0.0, 1), [0.0, 0.0])

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            self.traj().eval(1.1)
        with pytest.raises(OutOfRange):
            self.traj().eval(-0.1)

    def test_multisegment_stamps(self):
        s1 = minco_solve(rest((0, 0)), rest((1, 0)), np.empty((0, 2)), 1.0)
        s2 = minco_solve(rest((1, 0)), rest((1, 1)), np.empty((0, 2)), 2.0, eta=-1)
        traj = FlatTrajectory([s1, s2])
        assert traj.total_duration == pytest.approx(3.0)
        assert np.allclose(traj.eval(1.0), [1.0, 0.0], atol=1e-9)
        assert np.allclose(traj.eval(3.0), [1.0, 1.0], atol=1e-9)


class TestControlEffort:
    def test_zero_coeffs(self):
        seg = Segment(coeffs=np.zeros((2, 6, 2)), delta_t=0.7)
        cost, gc, gt = control_effort(seg)
        assert cost == 0.0
        assert np.abs(gc).max() == 0.0
        assert gt == 0.0

    def test_min_jerk_cost_720(self):
        seg = minco_solve(rest((0, 0)), rest((1, 0)), np.empty((0, 2)), 1.0)
        cost, _, _ = control_effort(seg)
        assert cost == pytest.approx(720.0, rel=1e-9)

    def test_grad_t_finite_difference(self, rng):
        coeffs = rng.normal(size=(3, 6, 2))
        dt = 0.83

        def cost_of(dt_val):
            return control_effort(Segment(coeffs.copy(), float(dt_val)))[0]

        _, _, gt = control_effort(Segment(coeffs.copy(), dt))
        # direct partial in the piece duration; duration T = M*dt
        h = 1e-6
        fd = (cost_of(dt + h / 3) - cost_of(dt - h / 3)) / (2 * h / 3) / 3.0
        assert rel_err(gt, fd) < 1e-6

    def test_grad_c_finite_difference(self, rng):
        coeffs = rng.normal(size=(2, 6, 2))
        seg = Segment(coeffs.copy(), 1.2)
        _, gc, _ = control_effort(seg)
        h = 1e-6
        for idx in [(0, 3, 0), (1, 5, 1), (0, 0, 0), (1, 4, 0)]:
            cp = coeffs.copy()
            cp[idx] += h
            cm = coeffs.copy()
            cm[idx] -= h
            fd = (control_effort(Segment(cp, 1.2))[0] - control_effort(Segment(cm, 1.2))[0]) / (2 * h)
            assert rel_err(gc[idx], fd) < 1e-6

    def test_translation_invariance(self, rng):
        head = BoundaryState(rng.normal(size=2), rng.normal(size=2), rng.normal(size=2))
        tail = BoundaryState(rng.normal(size=2), rng.normal(size=2), rng.normal(size=2))
        q = rng.normal(size=(2, 2))
        shift = np.array([13.7, -4.2])
        c0 = control_effort(minco_solve(head, tail, q, 2.5))[0]
        head2 = BoundaryState(head.position + shift, head.velocity, head.acceleration)
        tail2 = BoundaryState(tail.position + shift, tail.velocity, tail.acceleration)
        c1 = control_effort(minco_solve(head2, tail2, q + shift, 2.5))[0]
        assert c1 == pytest.approx(c0, rel=1e-9, abs=1e-9)


class TestBackprop:
    def test_zero_gradient(self):
        seg = minco_solve(rest((0, 0)), rest((1, 1)), np.array([[0.4, 0.6]]), 2.0)
        gq, gt, gh, gtail = minco_backprop(seg, np.zeros_like(seg.coeffs), 0.0)
        assert np.abs(gq).max() == 0.0
        assert gt == 0.0
        assert np.abs(gh).max() == 0.0
        assert np.abs(gtail).max() == 0.0

    def test_waypoint_gradient_fd(self, rng):
        head = BoundaryState(np.zeros(2), np.array([1.0, 0.0]), np.zeros(2))
        tail = BoundaryState(np.array([3.0, 1.0]), np.array([0.5, 0.2]), np.zeros(2))
        q0 = np.array([[1.0, 0.3], [2.0, 0.8]])
        T = 3.0
        gc = rng.normal(size=(3, 6, 2))

        def cost(q):
            seg = minco_solve(head, tail, q.reshape(-1, 2), T)
            return float(np.sum(gc * seg.coeffs))

        seg = minco_solve(head, tail, q0, T)
        gq, _, _, _ = minco_backprop(seg, gc, 0.0)
        h = 1e-6
        for k in range(q0.size):
            qp = q0.copy().ravel()
            qp[k] += h
            qm = q0.copy().ravel()
            qm[k] -= h
            fd = (cost(qp) - cost(qm)) / (2 * h)
            assert rel_err(gq.ravel()[k], fd) < 1e-6

    def test_duration_gradient_fd(self, rng):
        head = BoundaryState(np.zeros(2), np.array([1.0, 0.0]), np.zeros(2))
        tail = BoundaryState(np.array([4.0, -1.0]), np.array([0.2, 0.0]), np.zeros(2))
        q0 = np.array([[1.5, 0.5]])
        gc = rng.normal(size=(2, 6, 2))

        def cost(T):
            seg = minco_solve(head, tail, q0, float(T))
            return float(np.sum(gc * seg.coeffs))

        seg = minco_solve(head, tail, q0, 2.0)
        _, gt, _, _ = minco_backprop(seg, gc, 0.0)
        h = 1e-6
        fd = (cost(2.0 + h) - cost(2.0 - h)) / (2 * h)
        assert rel_err(gt, fd) < 1e-5

    def test_boundary_gradient_fd(self, rng):
        head = BoundaryState(np.zeros(2), np.array([0.5, 0.0]), np.zeros(2))
        tail0 = np.array([2.0, 1.0])
        gc = rng.normal(size=(1, 6, 2))

        def cost(tp):
            seg = minco_solve(head, BoundaryState(tp, np.array([0.1, 0.0]), np.zeros(2)), np.empty((0, 2)), 1.5)
            return float(np.sum(gc * seg.coeffs))

        seg = minco_solve(head, BoundaryState(tail0, np.array([0.1, 0.0]), np.zeros(2)), np.empty((0, 2)), 1.5)
        _, _, gh, gtail = minco_backprop(seg, gc, 0.0)
        h = 1e-6
        for k in range(2):
            tp = tail0.copy()
            tp[k] += h
            tm = tail0.copy()
            tm[k] -= h
            fd = (cost(tp) - cost(tm)) / (2 * h)
            assert rel_err(gtail[0, k], fd) < 1e-6

    def test_full_effort_duration_gradient(self, rng):
        # combined check: d/dT of control_effort(minco_solve(..., T))
        head = BoundaryState(np.zeros(2), np.array([1.0, 0.2]), np.zeros(2))
        tail = BoundaryState(np.array([5.0, 2.0]), np.array([0.8, 0.0]), np.zeros(2))
        q0 = rng.normal(size=(3, 2)) + np.array([2.0, 1.0])

        def cost(T):
            return control_effort(minco_solve(head, tail, q0, float(T)))[0]

        T0 = 2.7
        seg = minco_solve(head, tail, q0, T0)
        _, gc, gt_direct = control_effort(seg)
        _, gt, _, _ = minco_backprop(seg, gc, gt_direct)
        h = 1e-6
        fd = (cost(T0 + h) - cost(T0 - h)) / (2 * h)
        assert rel_err(gt, fd) < 1e-5
