import numpy as np
import pytest

from invdesc import se3


def series_expm(A, terms=20):
    """Truncated matrix-power series oracle for the matrix exponential."""
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for n in range(1, terms + 1):
        term = term @ A / n
        out = out + term
    return out


def test_skew_zero():
    assert np.array_equal(se3.skew(np.zeros(3)), np.zeros((3, 3)))


def test_skew_definition():
    expected = np.array([[0, -3, 2], [3, 0, -1], [-2, 1, 0]], dtype=float)
    assert np.array_equal(se3.skew(np.array([1.0, 2.0, 3.0])), expected)


def test_skew_cross_product():
    assert np.allclose(se3.skew([1, 0, 0]) @ [0, 1, 0], [0, 0, 1])
    rng = np.random.default_rng(0)
    for _ in range(20):
        v, u = rng.normal(size=3), rng.normal(size=3)
        assert np.allclose(se3.skew(v) @ u, np.cross(v, u))


def test_skew_is_skew_symmetric():
    rng = np.random.default_rng(1)
    for _ in range(50):
        W = se3.skew(rng.normal(size=3) * rng.choice([1e-8, 1.0, 1e6]))
        assert np.allclose(W, -W.T)


def test_rot_exp_identity():
    assert np.allclose(se3.rot_exp(np.zeros(3)), np.eye(3))


def test_rot_exp_quarter_turn_maps_x_to_y():
    R = se3.rot_exp([0.0, 0.0, np.pi / 2])
    assert np.allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-12)


def test_rot_exp_inverse_matches_series_oracle():
    v = np.array([0.3, -0.7, 1.1])
    R = se3.rot_exp(v) @ se3.rot_exp(-v)
    assert np.allclose(R, np.eye(3), atol=1e-12)
    # compare the map itself against the truncated series
    assert np.allclose(se3.rot_exp(v), series_expm(se3.skew(v)), atol=1e-12)


def test_rot_exp_stays_on_group():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        if n > np.pi:
            v *= rng.uniform(0, np.pi) / n
        R = se3.rot_exp(v)
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-10)
        assert abs(np.linalg.det(R) - 1.0) < 1e-10


def test_rot_exp_small_angle_branch():
    v = np.array([1e-9, -2e-9, 5e-10])
    assert np.allclose(se3.rot_exp(v), series_expm(se3.skew(v)), atol=1e-18)


def test_rot_log_roundtrip():
    rng = np.random.default_rng(3)
    for _ in range(200):
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        v *= rng.uniform(0, np.pi - 1e-3) / n
        assert np.allclose(se3.rot_log(se3.rot_exp(v)), v, atol=1e-9)
    # half-turn edge case
    v = np.array([0.0, 0.0, np.pi])
    assert np.allclose(np.abs(se3.rot_log(se3.rot_exp(v))), np.abs(v), atol=1e-7)


def test_se3_exp_zero_is_identity():
    assert np.allclose(se3.se3_exp(np.zeros(6)), np.eye(4))


def test_se3_exp_pure_translation():
    T = se3.se3_exp(np.array([0, 0, 0, 1.0, 0, 0]), 1.0)
    assert np.allclose(T[:3, :3], np.eye(3))
    assert np.allclose(T[:3, 3], [1, 0, 0])


def test_se3_exp_half_turn():
    T = se3.se3_exp(np.array([0, 0, np.pi, 0, 0, 0]), 1.0)
    assert np.allclose(T[:3, :3], np.diag([-1.0, -1.0, 1.0]), atol=1e-12)
    assert np.allclose(T[:3, 3], 0.0, atol=1e-12)


def test_se3_exp_matches_series_oracle():
    rng = np.random.default_rng(4)
    for _ in range(50):
        xi = rng.normal(size=6)
        assert np.allclose(se3.se3_exp(xi), series_expm(se3.se3_hat(xi), 30), atol=1e-10)


def test_se3_exp_one_parameter_subgroup():
    rng = np.random.default_rng(5)
    s = rng.normal(size=6)
    for d1, d2 in [(0.3, 0.5), (0.01, 0.02), (1.0, -0.4)]:
        lhs = se3.se3_exp(s, d1) @ se3.se3_exp(s, d2)
        rhs = se3.se3_exp(s, d1 + d2)
        assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_screw_transform_identity():
    assert np.allclose(se3.screw_transform(np.eye(4)), np.eye(6))


def test_screw_transform_offset_twist():
    T = np.eye(4)
    T[:3, 3] = [0, 0, 1.0]
    t = se3.screw_transform(T) @ np.array([1.0, 0, 0, 0, 0, 0])
    assert np.allclose(t, [1, 0, 0, 0, 1, 0])


def test_screw_transform_is_homomorphism():
    rng = np.random.default_rng(6)
    for _ in range(20):
        T1 = se3.se3_exp(rng.normal(size=6))
        T2 = se3.se3_exp(rng.normal(size=6))
        lhs = se3.screw_transform(T1 @ T2)
        rhs = se3.screw_transform(T1) @ se3.screw_transform(T2)
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_screw_transform_inverse_consistency():
    rng = np.random.default_rng(7)
    for _ in range(20):
        T = se3.se3_exp(rng.normal(size=6))
        lhs = np.linalg.inv(se3.screw_transform(T))
        rhs = se3.screw_transform(se3.pose_inverse(T))
        assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_apply_screw_transform_matches_matrix():
    rng = np.random.default_rng(8)
    for _ in range(20):
        T = se3.se3_exp(rng.normal(size=6))
        s = rng.normal(size=6)
        assert np.allclose(se3.apply_screw_transform(T, s), se3.screw_transform(T) @ s)


def test_rot_distance_zero_on_equal():
    R = se3.rot_exp([0.2, 0.1, -0.4])
    assert se3.rot_distance(R, R) == pytest.approx(0.0, abs=1e-15)


def test_rot_distance_half_turn_is_eight():
    # R^T Rb = diag(-1,-1,1); ||diag(-2,-2,0)||_F^2 = 8 by direct evaluation
    assert se3.rot_distance(np.eye(3), se3.rot_exp([0, 0, np.pi])) == pytest.approx(8.0)


def test_rot_distance_symmetric():
    rng = np.random.default_rng(9)
    Ra, Rb = se3.rot_exp(rng.normal(size=3)), se3.rot_exp(rng.normal(size=3))
    assert se3.rot_distance(Ra, Rb) == pytest.approx(se3.rot_distance(Rb, Ra))


def test_rotation_mse_bound_matches_brute_force():
    # identity check for the angle <-> Frobenius conversion constant
    rng = np.random.default_rng(10)
    for _ in range(100):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        ang = rng.uniform(0, np.pi)
        R = se3.rot_exp(axis * ang)
        d = se3.rot_distance(np.eye(3), R)
        assert d == pytest.approx(se3.rotation_mse_bound(ang), rel=1e-12, abs=1e-12)


def test_so3_jac_right_finite_difference():
    rng = np.random.default_rng(11)
    h = 1e-7
    for _ in range(20):
        w = rng.normal(size=3)
        J = se3.so3_jac_right(w)
        for j in range(3):
            dw = np.zeros(3)
            dw[j] = h
            num = se3.rot_log(se3.rot_exp(w).T @ se3.rot_exp(w + dw)) / h
            assert np.allclose(J[:, j], num, atol=1e-6)


def test_se3_jac_right_finite_difference():
    rng = np.random.default_rng(12)
    h = 1e-6
    for _ in range(10):
        xi = rng.normal(size=6) * 0.5
        J = se3.se3_jac_right(xi)
        T0 = se3.se3_exp(xi)
        for j in range(6):
            dxi = np.zeros(6)
            dxi[j] = h
            D = se3.pose_inverse(T0) @ se3.se3_exp(xi + dxi)
            w = se3.rot_log(D[:3, :3])
            v = np.linalg.solve(se3.so3_v_matrix(w), D[:3, 3])
            assert np.allclose(J[:, j], np.concatenate([w, v]) / h, atol=1e-5)


def test_project_rotation():
    rng = np.random.default_rng(13)
    R = se3.rot_exp(rng.normal(size=3))
    noisy = R + 1e-3 * rng.normal(size=(3, 3))
    P = se3.project_rotation(noisy)
    assert se3.is_rotation(P)
    assert np.max(np.abs(P - R)) < 5e-3


def test_pose_dataclass():
    T = se3.se3_exp(np.array([0.1, -0.2, 0.3, 1.0, 2.0, -0.5]))
    p = se3.Pose.from_matrix(T)
    assert p.is_valid()
    assert np.allclose(p.matrix, T)
    assert np.allclose(p.compose(p.inverse()).matrix, np.eye(4), atol=1e-14)


def test_screw_kind_is_immutable():
    s = se3.Screw([1, 0, 0], [0, 0, 0], se3.WRENCH)
    with pytest.raises(Exception):
        s.kind = se3.TWIST
    with pytest.raises(ValueError):
        se3.Screw([1, 0, 0], [0, 0, 0], "banana")
    with pytest.raises(ValueError):
        se3.Screw([np.inf, 0, 0], [0, 0, 0])


def test_batched_helpers_match_scalar():
    rng = np.random.default_rng(14)
    w = rng.normal(size=(40, 3))
    w[0] = 0.0
    w[1] = 1e-10
    xi = rng.normal(size=(40, 6))
    xi[0] = 0.0
    T = np.array([se3.se3_exp(x) for x in xi])
    assert np.allclose(se3.rot_exp_many(w), np.array([se3.rot_exp(v) for v in w]), atol=1e-14)
    assert np.allclose(se3.se3_exp_many(xi, 0.3),
                       np.array([se3.se3_exp(x, 0.3) for x in xi]), atol=1e-14)
    assert np.allclose(se3.ad_se3_many(xi), np.array([se3.ad_se3(x) for x in xi]))
    assert np.allclose(se3.se3_jac_right_many(0.3 * xi),
                       np.array([se3.se3_jac_right(0.3 * x) for x in xi]), atol=1e-13)
    assert np.allclose(se3.pose_inverse_many(T), np.array([se3.pose_inverse(t) for t in T]), atol=1e-14)
    assert np.allclose(se3.screw_transform_many(T),
                       np.array([se3.screw_transform(t) for t in T]), atol=1e-14)


def test_screw_transformed_preserves_kind():
    s = se3.Screw([0, 0, 2.0], [0.1, 0, 0], se3.WRENCH)
    T = se3.se3_exp(np.array([0, 0.3, 0, 1.0, 0, 0]))
    st = s.transformed(T)
    assert st.kind == se3.WRENCH
    assert np.allclose(st.array, se3.screw_transform(T) @ s.array)
