import numpy as np
import pytest

from intercept_sim import so3


def random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def expm_series(m, terms=30):
    """Matrix exponential by truncated power series; oracle for exp_so3."""
    out = np.eye(3)
    acc = np.eye(3)
    for k in range(1, terms):
        acc = acc @ m / k
        out = out + acc
    return out


class TestHatVex:
    def test_zero(self):
        assert np.array_equal(so3.hat(np.zeros(3)), np.zeros((3, 3)))
        assert np.array_equal(so3.vex(np.zeros((3, 3))), np.zeros(3))

    def test_e1_cross_e2(self):
        np.testing.assert_allclose(so3.hat(so3.EX) @ so3.EY, so3.EZ, atol=1e-15)

    def test_layout(self):
        m = so3.hat(np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(m, np.array([[0, -3, 2], [3, 0, -1], [-2, 1, 0]], dtype=float))

    def test_vex_inverts_hat(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.normal(size=3)
            np.testing.assert_allclose(so3.vex(so3.hat(x)), x, atol=1e-15)
            y = rng.normal(size=3)
            np.testing.assert_allclose(so3.hat(x) @ y, np.cross(x, y), atol=1e-13)

    def test_skew_part_matches_elementwise_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            m = rng.normal(size=(3, 3))
            skew = 0.5 * (m - m.T)
            # Oracle: read the defining elements straight off the skew part.
            expect = np.array([skew[2, 1], skew[0, 2], skew[1, 0]])
            np.testing.assert_allclose(so3.vex(skew), expect, atol=1e-15)

    def test_rejects_non_skew(self):
        with pytest.raises(ValueError):
            so3.vex(np.eye(3))


class TestExpLog:
    def test_zero_angle_identity(self):
        np.testing.assert_array_equal(so3.exp_so3(np.array([0.3, 0.1, 0.9]), 0.0), np.eye(3))

    def test_quarter_turn(self):
        r = so3.exp_so3(so3.EZ, np.pi / 2)
        np.testing.assert_allclose(r @ so3.EX, so3.EY, atol=1e-15)

    def test_matches_series_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            axis = random_unit(rng)
            angle = rng.uniform(-np.pi, np.pi)
            np.testing.assert_allclose(
                so3.exp_so3(axis, angle), expm_series(angle * so3.hat(axis)), atol=1e-9
            )

    def test_log_identity_convention(self):
        angle, axis = so3.log_so3(np.eye(3))
        assert angle == 0.0
        np.testing.assert_array_equal(axis, so3.EX)

    def test_log_round_trip(self):
        angle, axis = so3.log_so3(so3.exp_so3(so3.EY, 0.3))
        assert angle == pytest.approx(0.3, abs=1e-12)
        np.testing.assert_allclose(axis, so3.EY, atol=1e-12)

    def test_log_near_pi(self):
        r = so3.exp_so3(so3.EZ, np.pi)
        angle, axis = so3.log_so3(r)
        assert angle == pytest.approx(np.pi, abs=1e-9)
        assert abs(abs(axis[2]) - 1.0) < 1e-9
        np.testing.assert_allclose(so3.exp_so3(axis, angle), r, atol=1e-7)

    def test_log_exp_recovers_over_angle_range(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            axis = random_unit(rng)
            angle = rng.uniform(1e-6, np.pi)
            got_angle, got_axis = so3.log_so3(so3.exp_so3(axis, angle))
            assert got_angle == pytest.approx(angle, abs=1e-7)
            if angle > np.pi - 1e-6:
                assert min(np.linalg.norm(got_axis - axis), np.linalg.norm(got_axis + axis)) < 1e-6
            else:
                np.testing.assert_allclose(got_axis, axis, atol=1e-6)

    def test_outputs_stay_orthonormal(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            r = so3.exp_so3(random_unit(rng), rng.uniform(0, np.pi))
            assert np.linalg.norm(r.T @ r - np.eye(3)) < 1e-8


class TestQuat:
    def test_identity(self):
        np.testing.assert_array_equal(so3.quat_to_rotmat(np.array([1.0, 0, 0, 0])), np.eye(3))

    def test_quarter_turn_about_z(self):
        q = so3.quat_from_axis_angle(so3.EZ, np.pi / 2)
        np.testing.assert_allclose(so3.quat_to_rotmat(q) @ so3.EX, so3.EY, atol=1e-15)

    def test_mul_matches_matrix_product(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            a = so3.quat_from_axis_angle(random_unit(rng), rng.uniform(-np.pi, np.pi))
            b = so3.quat_from_axis_angle(random_unit(rng), rng.uniform(-np.pi, np.pi))
            np.testing.assert_allclose(
                so3.quat_to_rotmat(so3.quat_mul(a, b)),
                so3.quat_to_rotmat(a) @ so3.quat_to_rotmat(b),
                atol=1e-9,
            )

    def test_double_cover_round_trip(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            q = so3.quat_normalize(rng.normal(size=4))
            back = so3.rotmat_to_quat(so3.quat_to_rotmat(q))
            err = min(np.linalg.norm(back - q), np.linalg.norm(back + q))
            assert err < 1e-9


class TestSaturate:
    def test_inside_bound_unchanged(self):
        np.testing.assert_array_equal(so3.saturate(np.array([1.0, 0, 0]), 2.0), [1, 0, 0])

    def test_scales_to_bound(self):
        np.testing.assert_allclose(so3.saturate(np.array([3.0, 4.0, 0.0]), 2.5), [1.5, 2.0, 0.0])

    def test_zero_stays_zero(self):
        np.testing.assert_array_equal(so3.saturate(np.zeros(3), 0.7), np.zeros(3))

    def test_never_grows_never_turns(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            a = rng.normal(size=3) * rng.uniform(0, 10)
            a_m = rng.uniform(0.1, 5.0)
            out = so3.saturate(a, a_m)
            assert np.linalg.norm(out) <= a_m + 1e-12
            assert np.linalg.norm(out) <= np.linalg.norm(a) + 1e-12
            if np.linalg.norm(a) > 1e-9:
                cosang = np.dot(out, a) / (np.linalg.norm(out) * np.linalg.norm(a) + 1e-300)
                assert cosang > 1.0 - 1e-12

    def test_rejects_bad_bound(self):
        with pytest.raises(ValueError):
            so3.saturate(np.ones(3), 0.0)
