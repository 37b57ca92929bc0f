import numpy as np
import pytest

from odtmotion import so3


def test_angle_of_identity():
    assert so3.angle_of(np.eye(3)) == 0.0


def test_angle_of_half_turn():
    assert so3.angle_of(so3.rot_z(np.pi)) == pytest.approx(np.pi)


def test_angle_of_y_rotation():
    assert so3.angle_of(so3.rot_y(0.7)) == pytest.approx(0.7)


def test_angle_clamps_roundoff():
    R = so3.rot_z(1e-9)
    assert np.isfinite(so3.angle_of(R))


def test_distance_self_zero():
    R = so3.rot_y(0.4) @ so3.rot_z(1.1)
    assert so3.distance(R, R) == pytest.approx(0.0, abs=1e-12)


def test_distance_identity_to_z():
    assert so3.distance(np.eye(3), so3.rot_z(0.3)) == pytest.approx(0.3)


def test_distance_z_rotations_compose():
    # closed form: z-rotations compose additively
    assert so3.distance(so3.rot_z(0.1), so3.rot_z(0.4)) == pytest.approx(0.3)


def test_distance_symmetry_and_bi_invariance():
    rng = np.random.default_rng(0)
    for _ in range(50):
        R1, R2, Q = (so3.random_rotation(rng) for _ in range(3))
        d = so3.distance(R1, R2)
        assert so3.distance(R2, R1) == pytest.approx(d, abs=1e-10)
        assert so3.distance(Q @ R1, Q @ R2) == pytest.approx(d, abs=1e-10)


def test_euler_identity():
    assert np.allclose(so3.euler_to_rotation((0, 0, 0)), np.eye(3))


def test_euler_theta_zero_collapses():
    R = so3.euler_to_rotation((0.5, 0.0, 0.9))
    assert np.allclose(R, so3.rot_z(1.4), atol=1e-12)


def test_euler_pure_y():
    R = so3.euler_to_rotation((0.0, np.pi / 2, 0.0))
    expected = np.array([[0, 0, 1], [0, 1, 0], [-1, 0, 0]], dtype=float)
    assert np.allclose(R, expected, atol=1e-12)


def test_rotation_to_euler_identity():
    e = so3.rotation_to_euler(np.eye(3))
    assert e == (0.0, 0.0, 0.0)


def test_rotation_to_euler_pure_theta():
    e = so3.rotation_to_euler(so3.rot_y(1.0))
    assert e.phi == pytest.approx(0.0, abs=1e-12)
    assert e.theta == pytest.approx(1.0)
    assert e.psi == pytest.approx(0.0, abs=1e-12)


def test_euler_round_trip_random():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        R = so3.random_rotation(rng)
        e = so3.rotation_to_euler(R)
        assert np.linalg.norm(so3.euler_to_rotation(e) - R) < 1e-9
        assert 0.0 <= e.phi < 2 * np.pi
        assert 0.0 <= e.theta <= np.pi
        assert 0.0 <= e.psi < 2 * np.pi


def test_rotation_to_euler_gimbal_lock():
    R = so3.rot_z(0.8)   # theta = 0
    e = so3.rotation_to_euler(R)
    assert e.psi == 0.0
    assert e.phi == pytest.approx(0.8)
    R2 = so3.rot_z(0.5) @ so3.rot_y(np.pi) @ so3.rot_z(0.1)
    e2 = so3.rotation_to_euler(R2)
    assert e2.psi == 0.0
    assert np.linalg.norm(so3.euler_to_rotation(e2) - R2) < 1e-9


def test_skew_printed_form():
    W = so3.skew((0, 0, 1))
    assert np.array_equal(W, np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]]))


def test_skew_zero():
    assert np.array_equal(so3.skew((0, 0, 0)), np.zeros((3, 3)))


def test_skew_cross_product():
    rng = np.random.default_rng(2)
    for _ in range(100):
        w, y = rng.normal(size=3), rng.normal(size=3)
        assert np.allclose(so3.skew(w) @ y, np.cross(w, y), atol=1e-14)


def test_polar_project_fixes_rotations():
    rng = np.random.default_rng(3)
    R = so3.random_rotation(rng)
    assert np.allclose(so3.polar_project(R), R, atol=1e-12)


def test_polar_project_diagonal():
    assert np.allclose(so3.polar_project(np.diag([2.0, 3.0, 4.0])), np.eye(3))


def test_polar_project_nearest_rotation():
    # grid-search oracle: no sampled rotation near R is closer to A
    rng = np.random.default_rng(4)
    R = so3.random_rotation(rng)
    A = R + 1e-3 * rng.normal(size=(3, 3))
    P = so3.polar_project(A)
    best = np.linalg.norm(A - P)
    for _ in range(500):
        w = rng.normal(size=3)
        w *= rng.uniform(0, 5e-3) / np.linalg.norm(w)
        Q = R @ so3.rotation_exp(w)
        assert np.linalg.norm(A - Q) >= best - 1e-12


def test_polar_project_idempotent():
    rng = np.random.default_rng(5)
    A = so3.random_rotation(rng) + 0.05 * rng.normal(size=(3, 3))
    P1 = so3.polar_project(A)
    assert np.allclose(so3.polar_project(P1), P1, atol=1e-12)


def test_polar_project_degenerate_raises():
    with pytest.raises(ValueError, match="degenerate polar projection"):
        so3.polar_project(np.diag([1.0, 1.0, 0.0]))


def test_integrate_zero_omega():
    rng = np.random.default_rng(6)
    R0 = so3.random_rotation(rng)
    traj = so3.integrate_trajectory(np.zeros((10, 3)), R0)
    assert len(traj) == 10
    for t in range(10):
        assert np.allclose(traj.rotations[t], R0)


def test_integrate_constant_z_full_turn():
    T = 2000
    alpha = 2 * np.pi / T
    omegas = np.tile([0.0, 0.0, alpha], (T + 1, 1))
    traj = so3.integrate_trajectory(omegas, np.eye(3))
    # after T steps the Rodrigues closed form returns to the start
    err = so3.distance(traj.rotations[T], np.eye(3))
    assert np.degrees(err) < 0.2


def test_integrate_matches_rodrigues_family():
    T = 500
    beta = 1.5 / T
    omegas = np.tile([0.0, beta, 0.0], (T, 1))
    traj = so3.integrate_trajectory(omegas, np.eye(3))
    for t in range(0, T, 50):
        closed = so3.rot_y(beta * t)
        assert so3.distance(traj.rotations[t], closed) < 10.0 / T


def test_integrate_frames_stay_on_so3():
    rng = np.random.default_rng(7)
    omegas = rng.normal(scale=0.1, size=(200, 3))
    traj = so3.integrate_trajectory(omegas, np.eye(3))
    for R in traj.rotations:
        assert so3.is_rotation(R, tol=1e-11)


def test_slerp_endpoints():
    rng = np.random.default_rng(8)
    Ra, Rb = so3.random_rotation(rng), so3.random_rotation(rng)
    assert np.allclose(so3.slerp(Ra, Rb, 0.0), Ra, atol=1e-12)
    assert np.allclose(so3.slerp(Ra, Rb, 1.0), Rb, atol=1e-10)


def test_slerp_single_axis():
    got = so3.slerp(np.eye(3), so3.rot_z(0.8), 0.5)
    assert np.allclose(got, so3.rot_z(0.4), atol=1e-12)


def test_slerp_geodesic_linearity():
    rng = np.random.default_rng(9)
    for _ in range(30):
        Ra, Rb = so3.random_rotation(rng), so3.random_rotation(rng)
        if so3.distance(Ra, Rb) > np.pi - 1e-3:
            continue
        tau = rng.uniform()
        mid = so3.slerp(Ra, Rb, tau)
        assert so3.angle_of(Ra.T @ mid) == pytest.approx(
            tau * so3.distance(Ra, Rb), abs=1e-10)


def test_slerp_antipodal_raises():
    with pytest.raises(ValueError, match="antipodal"):
        so3.slerp(np.eye(3), so3.rot_z(np.pi), 0.5)


def test_mean_filter_constant():
    R = so3.rot_y(0.3)
    traj = so3.RotationTrajectory(np.tile(R, (20, 1, 1)))
    out = so3.mean_filter(traj, 5)
    for t in range(20):
        assert np.allclose(out.rotations[t], R, atol=1e-12)


def test_mean_filter_window_one_is_identity():
    rng = np.random.default_rng(10)
    traj = so3.RotationTrajectory(
        np.stack([so3.random_rotation(rng) for _ in range(7)]))
    out = so3.mean_filter(traj, 1)
    assert np.allclose(out.rotations, traj.rotations, atol=1e-12)


def test_mean_filter_smooth_trajectory_barely_moves():
    T = 60
    traj = so3.RotationTrajectory(
        np.stack([so3.rot_y(2 * np.pi * t / 400) for t in range(T)]))
    out = so3.mean_filter(traj, 5)
    for t in range(T):
        assert np.degrees(so3.distance(out.rotations[t], traj.rotations[t])) < 1.0


def test_mean_filter_averages_translations():
    rng = np.random.default_rng(11)
    R = np.tile(np.eye(3), (6, 1, 1))
    d = rng.normal(size=(6, 3))
    out = so3.mean_filter(so3.RotationTrajectory(R, d), 3)
    assert np.allclose(out.translations[2], d[1:4].mean(axis=0))


def test_quaternion_identity():
    assert np.allclose(so3.to_quaternion(np.eye(3)), [1, 0, 0, 0])


def test_quaternion_z_quarter_turn():
    q = so3.to_quaternion(so3.rot_z(np.pi / 2))
    assert np.allclose(q, [np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)],
                       atol=1e-12)


def test_quaternion_round_trip():
    rng = np.random.default_rng(12)
    for _ in range(500):
        R = so3.random_rotation(rng)
        q = so3.to_quaternion(R)
        assert np.linalg.norm(so3.from_quaternion(q) - R) < 1e-10
        assert q[0] >= 0.0
        assert np.sum(q**2) == pytest.approx(1.0, abs=1e-12)


def test_quaternion_sign_convention_half_turn():
    # q0 == 0 for half turns; the first nonzero component must be positive
    q = so3.to_quaternion(so3.rot_y(np.pi))
    assert q[0] == pytest.approx(0.0, abs=1e-12)
    nz = q[np.abs(q) > 1e-9]
    assert nz[0] > 0
