import numpy as np
import pytest
import sympy as sp

from invdesc import preprocess as pp
from invdesc import se3


def make_poses(positions, rotations=None):
    n = len(positions)
    T = np.tile(np.eye(4), (n, 1, 1))
    T[:, :3, 3] = positions
    if rotations is not None:
        T[:, :3, :3] = rotations
    return T


def straight_line_traj(n=200, speed=0.5, duration=2.0, force=25.0):
    t = np.linspace(0, duration, n)
    p = np.zeros((n, 3))
    p[:, 0] = speed * t
    w = np.zeros((n, 6))
    w[:, 2] = force
    return pp.TimedTrajectory(t, make_poses(p), w)


def test_timed_trajectory_validation():
    t = np.linspace(0, 1, 10)
    with pytest.raises(ValueError):
        pp.TimedTrajectory(t)  # no channels
    with pytest.raises(ValueError):
        pp.TimedTrajectory(t[::-1], wrenches=np.zeros((10, 6)))
    with pytest.raises(ValueError):
        pp.TimedTrajectory(t[:3], wrenches=np.zeros((3, 6)))


def test_segment_contact_start_index():
    n = 200
    t = np.linspace(0, 2, n)
    p = np.zeros((n, 3))
    p[:, 0] = 0.5 * t
    w = np.zeros((n, 6))
    w[100:, 2] = 25.0
    traj = pp.TimedTrajectory(t, make_poses(p), w)
    start, stop = pp.segment_contact(traj, f_thresh=5.0, v_thresh=0.05)
    assert start == 100
    assert stop == n


def test_segment_contact_no_contact():
    traj = straight_line_traj(force=1.0)
    with pytest.raises(pp.NoContact):
        pp.segment_contact(traj, f_thresh=5.0, v_thresh=0.05)


def test_segment_contact_trims_stationary_head():
    n = 200
    t = np.linspace(0, 20, n)
    p = np.zeros((n, 3))
    # stationary at 0.01 m/s for the first 50 samples, then 0.2 m/s
    slow = 0.01 * t[:50]
    fast = slow[-1] + 0.2 * (t[50:] - t[50])
    p[:, 0] = np.concatenate([slow, fast])
    w = np.zeros((n, 6))
    w[:, 2] = 25.0
    traj = pp.TimedTrajectory(t, make_poses(p), w)
    start, stop = pp.segment_contact(traj, f_thresh=5.0, v_thresh=0.05)
    assert 49 <= start <= 52  # finite differences blur the corner slightly
    assert stop == n


def test_segment_contact_too_short():
    n = 50
    t = np.linspace(0, 1, n)
    p = np.zeros((n, 3))
    w = np.zeros((n, 6))
    w[20:23, 0] = 30.0
    traj = pp.TimedTrajectory(t, make_poses(p), w)
    with pytest.raises(pp.TooShort):
        pp.segment_contact(traj, f_thresh=5.0, v_thresh=-1.0)


def test_compute_progress_translation_only():
    t = np.linspace(0, 2, 100)
    v = np.zeros((100, 3))
    v[:, 1] = 0.5
    xi = pp.compute_progress(t, v=v, w=0.0)
    assert np.allclose(xi, 0.5 * t)
    assert xi[-1] == pytest.approx(1.0)


def test_compute_progress_rotation_only():
    t = np.linspace(0, np.pi, 80)
    om = np.zeros((80, 3))
    om[:, 2] = 1.0
    xi = pp.compute_progress(t, omega=om, w=1.0)
    assert np.allclose(xi, t)


def test_compute_progress_mixed_matches_trapezoid_oracle():
    rng = np.random.default_rng(0)
    t = np.sort(rng.uniform(0, 1, 60))
    t[0], t[-1] = 0.0, 1.0
    om = np.tile([1.0, 0, 0], (60, 1))
    v = np.tile([0, 1.0, 0], (60, 1))
    xi = pp.compute_progress(t, omega=om, v=v, w=0.5)
    # independent trapezoid accumulation of 0.5*1 + 0.5*1 = 1.0
    expected = np.concatenate([[0.0], np.cumsum(np.diff(t))])
    assert np.allclose(xi, expected, atol=1e-12)
    assert xi[-1] == pytest.approx(1.0)


def test_compute_progress_degenerate():
    t = np.linspace(0, 1, 10)
    with pytest.raises(pp.DegenerateProgress):
        pp.compute_progress(t, v=np.zeros((10, 3)), w=0.0)


def test_reparameterize_straight_line_constant_tangent():
    traj = straight_line_traj()
    v = pp.point_velocities(traj)
    xi = pp.compute_progress(traj.timestamps, v=v, w=0.0)
    out = pp.reparameterize(traj, xi, m=100)
    # arc-length progress: velocity channel is the unit tangent times scale
    assert out.scale == pytest.approx(1.0, rel=1e-9)
    assert np.allclose(out.velocities, np.tile([1.0, 0, 0], (100, 1)), atol=1e-6)
    assert np.allclose(out.xi, np.linspace(0, 1, 100))
    assert np.all(np.diff(out.xi) > 0)
    assert np.ptp(np.diff(out.xi)) < 1e-9


def test_reparameterize_time_warp_invariance():
    # the same geometric path under t -> t^2 gives the same resampled poses
    n = 2000
    u = np.linspace(0, 1, n)

    def build(ts):
        p = np.stack([np.sin(u), np.cos(2 * u), u**2], axis=1)
        R = np.array([se3.rot_exp([0.3 * ui, 0.5 * ui, -0.2 * ui**2]) for ui in u])
        return pp.TimedTrajectory(ts, make_poses(p, R))

    a = build(u)
    b = build((u + 0.5) ** 2)  # same sample values, warped clock
    outs = []
    for traj in (a, b):
        v = pp.point_velocities(traj)
        xi = pp.compute_progress(traj.timestamps, v=v, w=0.0)
        outs.append(pp.reparameterize(traj, xi, m=200))
    assert np.max(np.abs(outs[0].poses - outs[1].poses)) < 1e-5
    assert outs[0].scale == pytest.approx(outs[1].scale, rel=1e-6)
    assert np.max(np.abs(outs[0].twists - outs[1].twists)) < 1e-3


def test_reparameterize_plateau_dropped():
    n = 300
    t = np.linspace(0, 3, n)
    p = np.zeros((n, 3))
    third = n // 3
    p[:third, 0] = t[:third]
    p[third:2 * third, 0] = p[third - 1, 0]  # dead stop
    p[2 * third:, 0] = p[third - 1, 0] + (t[2 * third:] - t[2 * third])
    traj = pp.TimedTrajectory(t, make_poses(p))
    v = pp.point_velocities(traj)
    xi = pp.compute_progress(traj.timestamps, v=v, w=0.0)
    out = pp.reparameterize(traj, xi, m=120)
    assert np.all(np.diff(out.xi) > 0)
    # positions still span the full path
    assert out.poses[-1, 0, 3] == pytest.approx(p[-1, 0], abs=1e-6)


def test_twist_rescaling_matches_chain_rule_oracle():
    # cubic polynomial path, progress = arc length; oracle via sympy
    ts = sp.symbols("t")
    px = 0.3 * ts + 0.2 * ts**3
    py = 0.5 * ts**2
    pz = -0.1 * ts**3 + 0.4 * ts
    vel = [sp.diff(c, ts) for c in (px, py, pz)]
    speed = sp.sqrt(sum(v**2 for v in vel))

    n = 800
    t = np.linspace(0, 1, n)
    pfun = sp.lambdify(ts, [px, py, pz], "numpy")
    vfun = sp.lambdify(ts, vel, "numpy")
    sfun = sp.lambdify(ts, speed, "numpy")
    p = np.stack(pfun(t), axis=1)
    traj = pp.TimedTrajectory(t, make_poses(p))
    v = pp.point_velocities(traj)
    xi = pp.compute_progress(traj.timestamps, v=v, w=0.0)
    out = pp.reparameterize(traj, xi, m=400)

    # oracle: dp/dxi_norm = v(t) / xi_dot(t) with xi_dot = speed / scale
    arc = np.concatenate([[0.0], np.cumsum(
        0.5 * (sfun(t)[1:] + sfun(t)[:-1]) * np.diff(t))])
    total = arc[-1]
    assert out.scale == pytest.approx(total, rel=1e-6)
    t_of_xi = np.interp(out.xi, arc / total, t)
    oracle = np.stack(vfun(t_of_xi), axis=1) / sfun(t_of_xi)[:, None] * total
    err = np.max(np.abs(out.velocities[2:-2] - oracle[2:-2]))
    assert err < 1e-4


def test_twists_match_pose_finite_difference():
    n = 300
    u = np.linspace(0, 1, n)
    p = np.stack([np.cos(u), np.sin(u), 0.2 * u], axis=1)
    R = np.array([se3.rot_exp([0.0, 0.0, ui]) for ui in u])
    traj = pp.TimedTrajectory(u, make_poses(p, R))
    v = pp.point_velocities(traj)
    xi = pp.compute_progress(traj.timestamps, v=v, w=0.0)
    out = pp.reparameterize(traj, xi, m=200)
    ref = pp.spatial_twists(out.poses, out.xi)
    assert np.allclose(out.twists, ref)
