"""Velocity field: feedback, feed-forward, obstacle terms, modulation, gating."""

import numpy as np
import pytest

from comanip.demos import Demonstration
from comanip.errors import DegeneratePositionError
from comanip.motion import (
    MotionParams,
    ObstacleSphere,
    angle_diff,
    feedback_velocity,
    feedforward_velocity,
    generate,
    obstacle_velocity,
    reference_angular_velocity,
    reference_velocity,
    reference_wrench,
)
from comanip.shapes import make_leaf
from comanip.transform import compute_alignment, transform_demo


@pytest.fixture(scope="module")
def leaf_td():
    demo = make_leaf(n=400)
    return transform_demo(
        demo, compute_alignment(demo, demo.positions[:, 0], demo.positions[:, -1])
    )


def demo_with_channels():
    T = 20
    positions = np.zeros((3, T))
    positions[0] = np.linspace(0.0, 1.0, T)
    eulers = np.zeros((3, T))
    eulers[2] = np.linspace(0.0, 0.5, T)
    lin_vels = np.zeros((3, T))
    lin_vels[0] = 0.3
    ang_vels = np.zeros((3, T))
    ang_vels[1] = 0.25
    wrenches = np.zeros((6, T))
    wrenches[0] = 20.0
    demo = Demonstration(
        positions=positions,
        eulers=eulers,
        lin_vels=lin_vels,
        ang_vels=ang_vels,
        wrenches=wrenches,
        sample_dt=0.05,
    )
    return transform_demo(demo, compute_alignment(demo, positions[:, 0], positions[:, -1]))


class TestAngleDiff:
    def test_wraps_large_offsets(self):
        # +350 degrees of error acts as -10 degrees
        a = np.array([np.deg2rad(350.0), 0.0, 0.0])
        b = np.zeros(3)
        assert angle_diff(a, b)[0] == pytest.approx(np.deg2rad(-10.0), abs=1e-12)

    def test_boundary_maps_to_pi(self):
        assert angle_diff(np.array([np.pi, 0, 0]), np.zeros(3))[0] == pytest.approx(np.pi)
        assert angle_diff(np.array([-np.pi, 0, 0]), np.zeros(3))[0] == pytest.approx(np.pi)


class TestFeedback:
    def test_zero_on_trajectory(self):
        td = demo_with_channels()
        k = 7
        v_fb, w_fb = feedback_velocity(
            td.positions[:, k], td.eulers[:, k], td, k, MotionParams()
        )
        assert np.allclose(v_fb, 0.0, atol=1e-12)
        assert np.allclose(w_fb, 0.0, atol=1e-12)

    def test_linear_law(self):
        # offset +0.1 m in x with gain 2I pulls back at -0.2 m/s
        td = demo_with_channels()
        p = MotionParams(lambda_lin=2.0 * np.eye(3))
        x = td.positions[:, 3] + np.array([0.1, 0.0, 0.0])
        v_fb, _ = feedback_velocity(x, td.eulers[:, 3], td, 3, p)
        assert np.allclose(v_fb, [-0.2, 0.0, 0.0], atol=1e-12)

    def test_angular_error_wraps(self):
        td = demo_with_channels()
        p = MotionParams(lambda_ang=1.0 * np.eye(3))
        theta = td.eulers[:, 0] - np.array([np.deg2rad(350.0), 0.0, 0.0])
        _, w_fb = feedback_velocity(td.positions[:, 0], theta, td, 0, p)
        assert w_fb[0] == pytest.approx(np.deg2rad(-10.0), abs=1e-12)


class TestFeedforward:
    def test_lookup(self):
        td = demo_with_channels()
        v_ff, w_ff = feedforward_velocity(td, 5)
        assert np.allclose(v_ff, [0.3, 0.0, 0.0])
        assert np.allclose(w_ff, [0.0, 0.25, 0.0])

    def test_table_lookup_oracle(self, leaf_td):
        rng = np.random.default_rng(5)
        for _ in range(100):
            k = int(rng.integers(0, leaf_td.num_samples))
            v_ff, w_ff = feedforward_velocity(leaf_td, k)
            assert np.array_equal(v_ff, leaf_td.lin_vels[:, k])
            assert np.array_equal(w_ff, leaf_td.ang_vels[:, k])


class TestObstacle:
    def test_far_field_repulsion_only(self):
        # 10 m outside the surface with outbound feed-forward: 0.1/s gain,
        # guidance off
        obs = ObstacleSphere(center=np.zeros(3), radius=0.5, v_dir=[0, 0, 1])
        x = np.array([10.5, 0.0, 0.0])
        v_ff = np.array([0.2, 0.0, 0.0])  # pointing away: dot(v_ff, n_o) > 0
        v = obstacle_velocity(x, v_ff, obs, MotionParams())
        assert np.allclose(v, [0.1, 0.0, 0.0], atol=1e-12)

    def test_head_on_projection_drops_feedforward(self):
        # feed-forward straight at the center: its projection vanishes and
        # only the projected preferred direction remains
        obs = ObstacleSphere(center=np.zeros(3), radius=0.1, v_dir=[0, 0, 1])
        x = np.array([1.1, 0.0, 0.0])
        v_ff = np.array([-0.4, 0.0, 0.0])
        p = MotionParams()
        v = obstacle_velocity(x, v_ff, obs, p)
        lam = 1.0 / (1.1 - 0.1)
        # v_dir (0,0,1) is orthogonal to n_o (1,0,0): projects to itself
        expected = lam * np.array([1.0, 0.0, 0.0]) + lam * np.array([0.0, 0.0, 1.0])
        assert np.allclose(v, expected, atol=1e-12)

    def test_gain_cap_engages_near_surface(self):
        obs = ObstacleSphere(center=np.zeros(3), radius=0.2, v_dir=[0, 0, 1])
        p = MotionParams(lambda_cap=50.0)
        v_ff = np.array([1.0, 0.0, 0.0])
        for gap in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
            x = np.array([0.2 + gap, 0.0, 0.0])
            v = obstacle_velocity(x, v_ff, obs, p)
            expected_gain = min(1.0 / gap, 50.0)
            assert np.dot(v, [1.0, 0.0, 0.0]) == pytest.approx(expected_gain, rel=1e-9)
        # inside the sphere the gain is pinned at the cap
        v_in = obstacle_velocity(np.array([0.05, 0.0, 0.0]), v_ff, obs, p)
        assert np.dot(v_in, [1.0, 0.0, 0.0]) == pytest.approx(50.0)

    def test_guidance_boundary_is_active(self):
        # dot(v_ff, n_o) == 0 belongs to the active case
        obs = ObstacleSphere(center=np.zeros(3), radius=0.1, v_dir=[0, 0, 1])
        x = np.array([0.6, 0.0, 0.0])
        v_ff = np.array([0.0, 0.3, 0.0])  # orthogonal to n_o
        v = obstacle_velocity(x, v_ff, obs, MotionParams())
        lam = 2.0
        expected = lam * np.array([1.0, 0.0, 0.0]) + lam * (np.array([0.0, 1.0, 0.0]) + np.array([0.0, 0.0, 1.0]))
        assert np.allclose(v, expected, atol=1e-12)

    def test_stationary_feedforward_keeps_direction_term(self):
        obs = ObstacleSphere(center=np.zeros(3), radius=0.1, v_dir=[0, 0, 1])
        x = np.array([0.35, 0.0, 0.0])
        v = obstacle_velocity(x, np.zeros(3), obs, MotionParams())
        lam = 4.0
        expected = lam * np.array([1.0, 0.0, 0.0]) + lam * np.array([0.0, 0.0, 1.0])
        assert np.allclose(v, expected, atol=1e-12)

    def test_center_coincidence_rejected(self):
        obs = ObstacleSphere(center=np.array([1.0, 2.0, 3.0]), radius=0.1)
        with pytest.raises(DegeneratePositionError):
            obstacle_velocity(np.array([1.0, 2.0, 3.0]), np.ones(3), obs, MotionParams())


class TestReferenceVelocity:
    def test_full_human_authority_zeroes_output(self):
        p = MotionParams()
        v = reference_velocity(1.0, [9.0, 0, 0], [5.0, 1, 0], [0, 2, 0], p)
        assert np.array_equal(v, np.zeros(3))

    def test_below_threshold_unchanged(self):
        p = MotionParams(v_th=0.5)
        v = reference_velocity(0.0, [0.1, 0.0, 0.0], [0.1, 0.1, 0.0], [0.0, 0.0, 0.0], p)
        assert np.allclose(v, [0.2, 0.1, 0.0], atol=1e-12)

    def test_clamped_to_norm_exactly(self):
        p = MotionParams(v_th=0.5)
        v = reference_velocity(0.0, [1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0], p)
        assert np.linalg.norm(v) == pytest.approx(0.5, rel=1e-12)
        assert np.allclose(v / np.linalg.norm(v), [1.0, 0.0, 0.0])

    def test_norm_bound_holds_for_random_inputs(self):
        rng = np.random.default_rng(11)
        p = MotionParams(v_th=0.5)
        for _ in range(2000):
            v = reference_velocity(
                rng.uniform(0, 1),
                rng.normal(scale=5.0, size=3),
                rng.normal(scale=5.0, size=3),
                rng.normal(scale=50.0, size=3),
                p,
            )
            assert np.linalg.norm(v) <= 0.5 + 1e-12

    def test_continuous_in_alpha_and_zero_at_one(self, leaf_td):
        p = MotionParams()
        x = leaf_td.positions[:, 100] + np.array([0.01, 0.0, 0.0])
        alphas = np.linspace(0.0, 1.0, 101)
        prev = None
        for a in alphas:
            out = generate(x, np.zeros(3), leaf_td, [], a, p)
            v = np.concatenate([out.x_dot_ref, out.theta_dot_ref])
            if prev is not None:
                assert np.linalg.norm(v - prev) < 0.05
            prev = v
        assert np.allclose(prev, 0.0, atol=1e-15)


class TestReferenceAngular:
    @pytest.mark.parametrize("alpha,factor", [(1.0, 0.0), (0.0, 1.0), (0.5, 0.25)])
    def test_scaling(self, alpha, factor):
        td = demo_with_channels()
        w = reference_angular_velocity(alpha, td, 4)
        assert np.allclose(w, factor * td.ang_vels[:, 4], atol=1e-15)


class TestReferenceWrench:
    def test_gate_closed_far_from_trajectory(self):
        td = demo_with_channels()
        p = MotionParams(w_th=0.05)
        x = td.positions[:, 2] + np.array([0.1, 0.0, 0.0])
        w, beta = reference_wrench(0.0, x, td.eulers[:, 2], td, 2, p)
        assert beta == 0.0
        assert np.array_equal(w, np.zeros(6))

    def test_full_robot_authority_plays_channel(self):
        td = demo_with_channels()
        p = MotionParams(w_th=0.05)
        w, beta = reference_wrench(0.0, td.positions[:, 2], td.eulers[:, 2], td, 2, p)
        assert beta == 1.0
        assert np.allclose(w, td.wrenches[:, 2])

    def test_partial_authority_scales_quadratically(self):
        td = demo_with_channels()  # wrench channel (20,0,...)
        p = MotionParams(w_th=0.05)
        w, beta = reference_wrench(0.5, td.positions[:, 2], td.eulers[:, 2], td, 2, p)
        assert beta == pytest.approx(0.25)
        assert np.allclose(w, [5.0, 0, 0, 0, 0, 0])

    def test_orientation_error_counts_toward_gate(self):
        td = demo_with_channels()
        p = MotionParams(w_th=0.05)
        theta = td.eulers[:, 2] + np.array([0.06, 0.0, 0.0])
        w, beta = reference_wrench(0.0, td.positions[:, 2], theta, td, 2, p)
        assert beta == 0.0
        assert np.array_equal(w, np.zeros(6))


class TestGenerate:
    def test_on_trajectory_zero_feedback(self, leaf_td):
        p = MotionParams()
        k = 150
        out = generate(leaf_td.positions[:, k], leaf_td.eulers[:, k], leaf_td, [], 0.0, p)
        assert out.i_min == k
        v_ff, _ = feedforward_velocity(leaf_td, k)
        expected = v_ff if np.linalg.norm(v_ff) <= p.v_th else v_ff * p.v_th / np.linalg.norm(v_ff)
        assert np.allclose(out.x_dot_ref, expected, atol=1e-12)

    def test_full_human_authority_all_zero(self, leaf_td):
        out = generate(
            leaf_td.positions[:, 10] + 0.01,
            np.array([0.2, 0.0, 0.0]),
            leaf_td,
            [ObstacleSphere(center=[0.05, 0.05, 0.0], radius=0.02)],
            1.0,
            MotionParams(),
        )
        assert np.array_equal(out.x_dot_ref, np.zeros(3))
        assert np.array_equal(out.theta_dot_ref, np.zeros(3))
        assert np.array_equal(out.w_ref, np.zeros(6))
        assert out.beta == 0.0

    def test_feedback_only_field_contracts(self, leaf_td):
        # with feed-forward suppressed, distance to the trajectory strictly
        # decreases under the feedback term (rate ~ exp(-4t) at gain 4)
        p = MotionParams()
        x = leaf_td.positions[:, 200] + np.array([0.03, 0.02, 0.01])
        dt = 1e-3
        dist_prev = None
        for _ in range(2000):
            out = generate(x, np.zeros(3), leaf_td, [], 0.0, p)
            v_fb, _ = feedback_velocity(x, np.zeros(3), leaf_td, out.i_min, p)
            x = x + np.clip(v_fb, -p.v_th, p.v_th) * dt
            d = float(np.linalg.norm(leaf_td.positions - x[:, None], axis=0).min())
            if dist_prev is not None and dist_prev > 1e-6:
                assert d < dist_prev + 1e-15
            dist_prev = d
        assert dist_prev < 1e-4

    def test_obstacle_straddling_path_is_cleared(self, leaf_td):
        # sphere overlapping the path on the homeward edge: the integrated
        # field must stay outside the sphere, keep the guidance term active on
        # the approach, and still settle at the goal. The repulsion gain has a
        # floor of lambda_cap across the whole desk (1/(d-r) stays above any
        # usable cap), so the feedback gain and cap are chosen together: the
        # goal hover offset is about lambda_cap / lambda_lin.
        p = MotionParams(lambda_lin=6.0 * np.eye(3), lambda_cap=0.06)
        sample = int(0.585 * leaf_td.num_samples)
        tang = leaf_td.positions[:, sample + 1] - leaf_td.positions[:, sample - 1]
        tang /= np.linalg.norm(tang)
        perp = np.cross(tang, [0.0, 0.0, 1.0])
        perp /= np.linalg.norm(perp)
        radius = 0.02
        center = leaf_td.positions[:, sample] + perp * (radius - 0.001)
        obs = ObstacleSphere(center=center, radius=radius, v_dir=[0.0, 0.0, 1.0])
        x = leaf_td.positions[:, 0].copy()
        dt = 2e-3
        min_clearance = np.inf
        guidance_active = False
        reached = False
        for _ in range(int(40.0 / dt)):
            out = generate(x, np.zeros(3), leaf_td, [obs], 0.0, p)
            v_ff, _ = feedforward_velocity(leaf_td, out.i_min)
            n_o = (x - center) / np.linalg.norm(x - center)
            if np.dot(v_ff, n_o) <= 0:
                guidance_active = True
            x = x + out.x_dot_ref * dt
            min_clearance = min(min_clearance, float(np.linalg.norm(x - center)))
            if (
                np.linalg.norm(x - leaf_td.goal) < 0.02
                and out.i_min > leaf_td.num_samples * 0.9
            ):
                reached = True
                break
        assert min_clearance >= obs.radius
        assert guidance_active
        assert reached
