"""Contact segmentation and reparameterization from time to geometric progress.

A raw recording is a function of time; descriptors are computed on a uniform
grid of a geometric progress variable xi in [0, 1] so that they become
independent of the motion profile and of the trajectory scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import se3


class NoContact(Exception):
    """No sample exceeds the contact force threshold."""


class TooShort(Exception):
    """Segmented range has fewer than the minimum number of samples."""


class DegenerateProgress(Exception):
    """Total progress is (numerically) zero; the grid cannot be inverted."""


MIN_SAMPLES = 5
PLATEAU_REL_RATE = 1e-6


@dataclass
class TimedTrajectory:
    """Sampled pose and/or wrench signals versus time.

    poses is (N, 4, 4), wrenches is (N, 6) with rows (fx fy fz mx my mz);
    either may be None but not both.
    """

    timestamps: np.ndarray
    poses: np.ndarray | None = None
    wrenches: np.ndarray | None = None

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        n = len(self.timestamps)
        if n < MIN_SAMPLES:
            raise ValueError(f"need at least {MIN_SAMPLES} samples, got {n}")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if self.poses is None and self.wrenches is None:
            raise ValueError("need at least one of poses/wrenches")
        if self.poses is not None:
            self.poses = np.asarray(self.poses, dtype=float)
            if self.poses.shape != (n, 4, 4):
                raise ValueError("poses must be (N, 4, 4)")
        if self.wrenches is not None:
            self.wrenches = np.asarray(self.wrenches, dtype=float)
            if self.wrenches.shape != (n, 6):
                raise ValueError("wrenches must be (N, 6)")

    def __len__(self) -> int:
        return len(self.timestamps)

    def sliced(self, start: int, stop: int) -> "TimedTrajectory":
        return TimedTrajectory(
            self.timestamps[start:stop],
            None if self.poses is None else self.poses[start:stop],
            None if self.wrenches is None else self.wrenches[start:stop],
        )


@dataclass
class ProgressTrajectory:
    """Channels resampled on a uniform progress grid xi in [0, 1].

    ``scale`` is the total geometric length before normalization, so
    ``scale`` times any per-unit-xi velocity channel recovers the physical
    rate per unit of unnormalized progress.
    """

    xi: np.ndarray
    poses: np.ndarray | None = None
    wrenches: np.ndarray | None = None
    twists: np.ndarray | None = None          # spatial twists, per unit xi
    velocities: np.ndarray | None = None      # dp/dxi of the pose origin
    angular_velocities: np.ndarray | None = None
    progress_rate: np.ndarray | None = None   # xi_dot(t) on the original grid
    scale: float = 1.0

    def __len__(self) -> int:
        return len(self.xi)

    @property
    def dxi(self) -> float:
        return float(self.xi[1] - self.xi[0])


def point_velocities(traj: TimedTrajectory, point_in_body: np.ndarray | None = None) -> np.ndarray:
    """Translational velocity [m/s] of a body-fixed point, by central differences."""
    if traj.poses is None:
        raise ValueError("pose channel required")
    pts = traj.poses[:, :3, 3]
    if point_in_body is not None:
        pts = pts + np.einsum("nij,j->ni", traj.poses[:, :3, :3], point_in_body)
    return _gradient_nonuniform(pts, traj.timestamps)


def _gradient_nonuniform(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    """2nd-order gradient on a possibly nonuniform grid (one-sided at ends)."""
    return np.gradient(y, t, axis=0, edge_order=2)


def segment_contact(
    traj: TimedTrajectory,
    f_thresh: float,
    v_thresh: float,
    point_in_body: np.ndarray | None = None,
) -> tuple[int, int]:
    """Find the in-contact, moving portion of a recording.

    Returns the half-open index range of the longest contiguous run with
    ||f|| >= f_thresh, trimmed at both ends while the translational speed of
    the reference point stays below v_thresh.
    """
    if traj.wrenches is None or traj.poses is None:
        raise ValueError("segmentation needs both wrench and pose channels")
    fmag = np.linalg.norm(traj.wrenches[:, :3], axis=1)
    mask = fmag >= f_thresh
    if not np.any(mask):
        raise NoContact(f"no sample reaches {f_thresh} N")

    # longest contiguous True run
    best_len, best = 0, (0, 0)
    i = 0
    n = len(mask)
    while i < n:
        if mask[i]:
            j = i
            while j < n and mask[j]:
                j += 1
            if j - i > best_len:
                best_len, best = j - i, (i, j)
            i = j
        else:
            i += 1
    start, stop = best

    speed = np.linalg.norm(point_velocities(traj, point_in_body), axis=1)
    while start < stop and speed[start] < v_thresh:
        start += 1
    while stop > start and speed[stop - 1] < v_thresh:
        stop -= 1
    if stop - start < MIN_SAMPLES:
        raise TooShort(f"only {stop - start} samples remain after trimming")
    return start, stop


def compute_progress(
    timestamps: np.ndarray,
    omega: np.ndarray | None = None,
    v: np.ndarray | None = None,
    w: float = 0.0,
) -> np.ndarray:
    """Progress samples xi(t): trapezoidal integral of w||omega|| + (1-w)||v||."""
    t = np.asarray(timestamps, dtype=float)
    rate = np.zeros(len(t))
    if w != 0.0:
        if omega is None:
            raise ValueError("w > 0 requires rotational velocities")
        rate = rate + w * np.linalg.norm(omega, axis=1)
    if w != 1.0:
        if v is None:
            raise ValueError("w < 1 requires translational velocities")
        rate = rate + (1.0 - w) * np.linalg.norm(v, axis=1)
    xi = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(t))])
    if xi[-1] < 1e-9:
        raise DegenerateProgress(f"total progress {xi[-1]:g} is below 1e-9")
    return xi


def _interp_rotations(Rs: np.ndarray, x: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Geodesic interpolation of a rotation sequence onto a new grid."""
    idx = np.clip(np.searchsorted(x, grid, side="right") - 1, 0, len(x) - 2)
    out = np.empty((len(grid), 3, 3))
    for k, (j, g) in enumerate(zip(idx, grid)):
        a = (g - x[j]) / (x[j + 1] - x[j])
        out[k] = se3.rot_interp(Rs[j], Rs[j + 1], float(np.clip(a, 0.0, 1.0)))
    return out


def _interp_columns(y: np.ndarray, x: np.ndarray, grid: np.ndarray) -> np.ndarray:
    out = np.empty((len(grid), y.shape[1]))
    for c in range(y.shape[1]):
        out[:, c] = np.interp(grid, x, y[:, c])
    return out


def spatial_twists(poses: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Spatial twists per unit xi from logs of relative poses (2nd order).

    Using log(T_next T_prev^-1) makes the estimate commute exactly with
    fixed world and body transforms of the pose sequence, which raw
    componentwise differentiation does not.
    """
    n = len(poses)
    dxi = float(xi[1] - xi[0])
    out = np.empty((n, 6))
    inv = se3.pose_inverse_many(poses)
    for k in range(1, n - 1):
        out[k] = se3.se3_log(poses[k + 1] @ inv[k - 1]) / (2 * dxi)
    # 2nd-order one-sided ends by Richardson extrapolation of one/two steps
    out[0] = (4.0 * se3.se3_log(poses[1] @ inv[0])
              - se3.se3_log(poses[2] @ inv[0])) / (2 * dxi)
    out[-1] = (4.0 * se3.se3_log(poses[-1] @ inv[-2])
               - se3.se3_log(poses[-1] @ inv[-3])) / (2 * dxi)
    return out


def reparameterize(
    traj: TimedTrajectory,
    xi_t: np.ndarray,
    m: int = 100,
    point_in_body: np.ndarray | None = None,
) -> ProgressTrajectory:
    """Resample all channels onto a uniform normalized progress grid.

    Samples on plateaus where the progress rate is below PLATEAU_REL_RATE of
    its mean are dropped first so xi(t) is invertible.  Positions and
    wrenches are interpolated componentwise, rotations geodesically; twist
    and velocity channels are per-unit-xi rates (chain rule through xi_dot).
    """
    xi_t = np.asarray(xi_t, dtype=float)
    t = traj.timestamps
    rate = np.gradient(xi_t, t, edge_order=2)
    keep = rate > PLATEAU_REL_RATE * np.mean(np.abs(rate))
    keep[0] = keep[-1] = True
    # rate thresholding blurs plateau corners; also force xi strictly increasing
    total = xi_t[-1] - xi_t[0]
    last = xi_t[0]
    for i in range(1, len(keep)):
        if keep[i]:
            if xi_t[i] - last <= 1e-12 * max(total, 1e-30) and i < len(keep) - 1:
                keep[i] = False
            else:
                last = xi_t[i]
    if keep[-1] and xi_t[-1] - xi_t[np.nonzero(keep[:-1])[0][-1]] <= 0:
        keep[np.nonzero(keep[:-1])[0][-1]] = False
    if np.count_nonzero(keep) < MIN_SAMPLES:
        raise DegenerateProgress("fewer than 5 samples with nonzero progress rate")
    sub = traj.sliced(0, len(traj)) if np.all(keep) else TimedTrajectory(
        t[keep],
        None if traj.poses is None else traj.poses[keep],
        None if traj.wrenches is None else traj.wrenches[keep],
    )
    xi_k = xi_t[keep]
    if np.any(np.diff(xi_k) <= 0):
        raise DegenerateProgress("progress not strictly increasing after plateau removal")

    scale = float(xi_k[-1] - xi_k[0])
    xin = (xi_k - xi_k[0]) / scale
    grid = np.linspace(0.0, 1.0, m)

    out = ProgressTrajectory(xi=grid, scale=scale, progress_rate=rate)
    if sub.wrenches is not None:
        out.wrenches = _interp_columns(sub.wrenches, xin, grid)
    if sub.poses is not None:
        R = _interp_rotations(sub.poses[:, :3, :3], xin, grid)
        p = _interp_columns(sub.poses[:, :3, 3], xin, grid)
        poses = np.tile(np.eye(4), (m, 1, 1))
        poses[:, :3, :3] = R
        poses[:, :3, 3] = p
        out.poses = poses
        out.twists = spatial_twists(poses, grid)
        out.angular_velocities = out.twists[:, :3]
        pts = p
        if point_in_body is not None:
            pts = p + np.einsum("nij,j->ni", R, point_in_body)
        out.velocities = np.gradient(pts, grid, axis=0, edge_order=2)
    return out
