"""Robust invariant computation by tolerance-constrained optimization.

Five problem variants: vector trajectories plain / from positions / from
rotations, and screw trajectories plain / from poses.  Each minimizes the
squared moving-frame invariants subject to the reconstruction staying
within a user tolerance of the measurements; initialization uses an
average moving frame from the measurement covariance so that the whole
computation (not just its optimum) is independent of the coordinate frame
the data arrived in.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import analytic, se3
from .descriptors import ScrewDescriptor, VectorDescriptor
from .preprocess import spatial_twists
from .rollouts import (MEASUREMENT, MOVING, ScrewModel, ScrewPoseModel,
                       VectorModel, VectorPositionModel, VectorRotationModel)
from .solver import SolveReport, SolverOptions, solve

DEG2 = np.deg2rad(2.0)


@dataclass
class OcpConfig:
    """Tolerances, length scale and solver settings.

    Tolerances follow the noise level of the respective sensor: position
    [m], rotation [rad], force [N], moment [N m].  L [m] weighs the
    translational against the rotational moving-frame invariants.
    sign_window is the leading fraction of samples used to disambiguate
    the average-frame eigenvector signs (symmetric profiles can average to
    zero over the full horizon).  residual_frame picks where screw fit
    errors are measured: "moving" anchors them to the rolled-out axis frame
    (fully frame-independent), "measurement" uses raw coordinates.
    """

    eps_p: float = 0.002
    eps_R: float = DEG2
    eps_f: float = 0.8
    eps_m: float = 0.16
    L: float = 0.5
    sign_window: float = 0.75
    residual_frame: str = MOVING
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        for name in ("eps_p", "eps_R", "eps_f", "eps_m", "L"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def moment_bound(self) -> float:
        """Mean-squared bound for the screw moment-part residual.

        In the "moving" frame the moment residual is taken about the screw
        axis; a direction-part residual within eps_f seen from a reference
        point up to L away contributes up to eps_f * L of moment, so that
        allowance is added in quadrature.
        """
        if self.residual_frame == MOVING:
            return self.eps_m**2 + (self.eps_f * self.L) ** 2
        return self.eps_m**2

    def position_bound(self) -> float:
        """Mean-squared bound for the pose-problem position residual.

        A rotation residual within eps_R displaces a point at distance L by
        up to 2 sin(eps_R/2) L; in the "moving" frame (position error taken
        at the screw axis) that allowance is added in quadrature.
        """
        if self.residual_frame == MOVING:
            return self.eps_p**2 + 0.5 * se3.rotation_mse_bound(self.eps_R) * self.L**2
        return self.eps_p**2

    def rotation_bound(self) -> float:
        return se3.rotation_mse_bound(self.eps_R)


@dataclass
class InitialGuess:
    """Average-frame initialization: constant frames, zero frame invariants,
    object invariants by projection onto the first frame axis."""

    frame: np.ndarray                 # 3x3 or 4x4 average moving frame
    object_invariant: np.ndarray      # (N,) or (N, 2)
    degenerate: bool = False
    parallel_axes: bool = False
    from_moment_part: bool = False


@dataclass
class OcpResult:
    descriptor: VectorDescriptor | ScrewDescriptor
    reconstructed: np.ndarray
    report: SolveReport
    initial_guess: InitialGuess
    extras: dict = field(default_factory=dict)


class SolverFailure(Exception):
    def __init__(self, report: SolveReport):
        super().__init__(f"solver finished with status {report.status}")
        self.report = report


def _mean_window(values: np.ndarray, fraction: float) -> np.ndarray:
    m = max(1, int(round(fraction * len(values))))
    return np.mean(values[:m], axis=0)


def average_frame(meas: np.ndarray, sign_window: float = 0.75):
    """Eigenvector frame of the sample covariance with disambiguated signs.

    Returns (U, degenerate): the first two eigenvector signs are fixed by a
    positive mean projection of the measurements over the leading window;
    the third axis is their cross product.
    """
    meas = np.asarray(meas, dtype=float)
    n = len(meas)
    C = meas.T @ meas / n
    evals, evecs = np.linalg.eigh(C)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    scale = np.sqrt(max(evals[0], 1e-300))
    mean = _mean_window(meas, sign_window)
    degenerate = False
    u = [evecs[:, 0], evecs[:, 1]]
    for i in (0, 1):
        proj = float(mean @ u[i])
        if abs(proj) > 1e-9 * scale:
            if proj < 0:
                u[i] = -u[i]
        elif evals[min(i + 1, 2)] / max(evals[0], 1e-300) < 1e-12:
            # direction carries no signal and the mean cannot break the tie
            degenerate = True
    U = np.column_stack([u[0], u[1], np.cross(u[0], u[1])])
    if degenerate:
        U = analytic._complete_frame(u[0])
    return U, degenerate


def init_vector(meas: np.ndarray, sign_window: float = 0.75) -> InitialGuess:
    """Invariant initialization for the vector problems."""
    meas = np.asarray(meas, dtype=float)
    if len(meas) < 5:
        raise ValueError("need at least 5 samples")
    U, degenerate = average_frame(meas, sign_window)
    return InitialGuess(frame=U, object_invariant=meas @ U[:, 0],
                        degenerate=degenerate)


def init_screw(meas: np.ndarray, sign_window: float = 0.75) -> InitialGuess:
    """Invariant initialization for the screw problems.

    Orientation from the direction-part covariance (moment part if the
    directions all vanish); origin at the least-squares intersection point
    of the per-sample screw axes; object invariants by pulling the measured
    screws into that average frame.
    """
    meas = np.asarray(meas, dtype=float)
    if len(meas) < 5:
        raise ValueError("need at least 5 samples")
    a = meas[:, :3]
    na = np.linalg.norm(a, axis=1)
    from_moment = np.max(na) < 1e-12 or np.all(na <= analytic.REL_TOL * np.max(na))
    dir_part = meas[:, 3:] if from_moment else a
    U, degenerate = average_frame(dir_part, sign_window)

    valid = na > analytic.REL_TOL * max(np.max(na), 1e-300)
    parallel = False
    if np.any(valid) and not from_moment:
        pts = np.array([analytic.perp_point(s) for s in meas[valid]])
        dirs = a[valid] / na[valid][:, None]
        A = np.zeros((3, 3))
        rhs = np.zeros(3)
        for e, q in zip(dirs, pts):
            P = np.eye(3) - np.outer(e, e)
            A += P
            rhs += P @ q
        evals = np.linalg.eigvalsh(A)
        parallel = evals[0] < 1e-9 * max(evals[-1], 1e-300)
        center = np.mean(pts, axis=0)
        origin = center + np.linalg.pinv(A, rcond=1e-9) @ (rhs - A @ center)
    else:
        origin = np.zeros(3)
        parallel = True

    T = np.eye(4)
    T[:3, :3] = U
    T[:3, 3] = origin
    Sinv = se3.screw_transform(se3.pose_inverse(T))
    pulled = meas @ Sinv.T
    ab = pulled[:, [0, 3]]
    return InitialGuess(frame=T, object_invariant=ab, degenerate=degenerate,
                        parallel_axes=parallel, from_moment_part=from_moment)


def _check(report: SolveReport) -> SolveReport:
    if report.status == "Infeasible":
        raise SolverFailure(report)
    return report


def _stage1_opts(opts: SolverOptions) -> SolverOptions:
    return replace(opts, max_iter=min(opts.max_iter, 80), kkt_tol=1e-5)


def _warm_vector(vel: np.ndarray, dxi: float, cfg: OcpConfig):
    """Loose vector solve on differentiated data: a basin-finding warm start
    for the position/rotation problems (shooting from a stationary frame
    diverges on strongly curving trajectories)."""
    guess = init_vector(vel, cfg.sign_window)
    rms = np.sqrt(np.mean(np.sum(vel**2, axis=1)))
    eps1 = max(0.05 * rms, 1e-9)
    model = VectorModel(vel, dxi, eps1**2, guess.frame)
    x, _ = solve(model.problem(), np.zeros(model.n), _stage1_opts(cfg.solver))
    frames, _ = model.rollout(x)
    iv = x[model.blocks["invariants"]].reshape(-1, 2)
    return guess, frames[0], iv, model.object_values(x)


def _warm_screw(twists: np.ndarray, dxi: float, cfg: OcpConfig):
    """Loose screw solve on differentiated twists, warm start for poses."""
    guess = init_screw(twists, cfg.sign_window)
    # tolerance scales from frame-independent magnitudes (direction norms
    # are rotation-invariant; moment norms are taken about the average axis)
    pulled = twists @ se3.screw_transform(se3.pose_inverse(guess.frame)).T
    rms_a = np.sqrt(np.mean(np.sum(pulled[:, :3] ** 2, axis=1)))
    rms_b = np.sqrt(np.mean(np.sum(pulled[:, 3:] ** 2, axis=1)))
    eps_a1 = max(0.05 * rms_a, 1e-9)
    eps_b1 = max(0.05 * rms_b, 1e-9)
    bound_b = eps_b1**2 + (eps_a1 * cfg.L) ** 2 if cfg.residual_frame == MOVING \
        else eps_b1**2
    model = ScrewModel(twists, dxi, eps_a1**2, bound_b, guess.frame, cfg.L,
                       cfg.residual_frame)
    x0 = np.zeros(model.n)
    if "object" in model.blocks:
        x0[model.blocks["object"]] = guess.object_invariant.ravel()
    x, _ = solve(model.problem(), x0, _stage1_opts(cfg.solver))
    frames, _ = model.rollout(x)
    iv = x[model.blocks["invariants"]].reshape(-1, 4)
    return guess, frames[0], iv, model.object_values(x)


def _grid(n: int, xi) -> tuple[np.ndarray, float]:
    if xi is None:
        xi = np.linspace(0.0, 1.0, n)
    xi = np.asarray(xi, dtype=float)
    steps = np.diff(xi)
    if np.ptp(steps) > 1e-9 * abs(steps[0]):
        raise ValueError("xi grid must be uniform")
    return xi, float(steps[0])


def solve_vector_ocp(meas: np.ndarray, eps: float, cfg: OcpConfig | None = None,
                     xi: np.ndarray | None = None) -> OcpResult:
    """Vector invariants of measured 3-vector samples, within tolerance eps."""
    cfg = cfg or OcpConfig()
    meas = np.asarray(meas, dtype=float)
    xi, dxi = _grid(len(meas), xi)
    guess = init_vector(meas, cfg.sign_window)
    model = VectorModel(meas, dxi, eps**2, guess.frame)
    x0 = np.zeros(model.n)
    x, report = solve(model.problem(), x0, cfg.solver)
    _check(report)
    frames, recon = model.rollout(x)
    desc = VectorDescriptor(
        xi=xi,
        object_invariant=model.object_values(x),
        frame_invariant=x[model.blocks["invariants"]].reshape(-1, 2).copy(),
        frames=frames)
    return OcpResult(desc, recon, report, guess)


def solve_vector_ocp_position(meas_p: np.ndarray, eps_p: float | None = None,
                              cfg: OcpConfig | None = None,
                              xi: np.ndarray | None = None) -> OcpResult:
    """Vector invariants of a position trajectory (object invariant is the
    translational velocity in the moving frame)."""
    cfg = cfg or OcpConfig()
    eps_p = cfg.eps_p if eps_p is None else eps_p
    meas_p = np.asarray(meas_p, dtype=float)
    xi, dxi = _grid(len(meas_p), xi)
    vel = np.gradient(meas_p, xi, axis=0, edge_order=2)
    guess, frame0, iv0, c0 = _warm_vector(vel, dxi, cfg)
    model = VectorPositionModel(meas_p, dxi, eps_p**2, frame0, meas_p[0])
    x0 = np.zeros(model.n)
    x0[model.blocks["object"]] = c0[:-1]
    x0[model.blocks["invariants"]] = iv0.ravel()
    x, report = solve(model.problem(), x0, cfg.solver)
    _check(report)
    frames, recon = model.rollout(x)
    obj = x[model.blocks["object"]]
    desc = VectorDescriptor(
        xi=xi,
        object_invariant=np.concatenate([obj, obj[-1:]]),
        frame_invariant=x[model.blocks["invariants"]].reshape(-1, 2).copy(),
        frames=frames)
    return OcpResult(desc, recon, report, guess)


def angular_velocities(meas_R: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Rotational velocity samples (world frame, per unit xi) from rotations."""
    Rd = np.gradient(meas_R, xi, axis=0, edge_order=2)
    W = np.einsum("nij,nkj->nik", Rd, meas_R)
    return 0.5 * np.stack(
        [W[:, 2, 1] - W[:, 1, 2], W[:, 0, 2] - W[:, 2, 0], W[:, 1, 0] - W[:, 0, 1]],
        axis=1)


def solve_vector_ocp_rotation(meas_R: np.ndarray, eps_R: float | None = None,
                              cfg: OcpConfig | None = None,
                              xi: np.ndarray | None = None) -> OcpResult:
    """Vector invariants of an orientation trajectory (object invariant is
    the rotational velocity in the moving frame)."""
    cfg = cfg or OcpConfig()
    eps_R = cfg.eps_R if eps_R is None else eps_R
    meas_R = np.asarray(meas_R, dtype=float)
    xi, dxi = _grid(len(meas_R), xi)
    omega = angular_velocities(meas_R, xi)
    guess, frame0, iv0, c0 = _warm_vector(omega, dxi, cfg)
    model = VectorRotationModel(meas_R, dxi, se3.rotation_mse_bound(eps_R),
                                frame0, meas_R[0])
    x0 = np.zeros(model.n)
    x0[model.blocks["object"]] = c0[:-1]
    x0[model.blocks["invariants"]] = iv0.ravel()
    x, report = solve(model.problem(), x0, cfg.solver)
    _check(report)
    frames, recon = model.rollout(x)
    obj = x[model.blocks["object"]]
    desc = VectorDescriptor(
        xi=xi,
        object_invariant=np.concatenate([obj, obj[-1:]]),
        frame_invariant=x[model.blocks["invariants"]].reshape(-1, 2).copy(),
        frames=frames)
    return OcpResult(desc, recon, report, guess)


def solve_screw_ocp(meas: np.ndarray, eps_a: float | None = None,
                    eps_b: float | None = None, cfg: OcpConfig | None = None,
                    xi: np.ndarray | None = None,
                    kind: str = "wrench") -> OcpResult:
    """Screw invariants of measured twist or wrench samples.

    eps_a bounds the direction-part fit (force [N] / rotational velocity),
    eps_b the moment part; defaults come from cfg according to ``kind``.
    """
    cfg = cfg or OcpConfig()
    if eps_a is None:
        eps_a = cfg.eps_f if kind == "wrench" else cfg.eps_R
    if eps_b is None:
        eps_b = cfg.eps_m if kind == "wrench" else cfg.eps_p
    cfg_eff = replace(cfg, eps_f=eps_a, eps_m=eps_b)
    meas = np.asarray(meas, dtype=float)
    xi, dxi = _grid(len(meas), xi)
    guess = init_screw(meas, cfg.sign_window)
    bound_b = eps_b**2 + (eps_a * cfg.L) ** 2 if cfg.residual_frame == MOVING else eps_b**2
    model = ScrewModel(meas, dxi, eps_a**2, bound_b, guess.frame, cfg.L,
                       cfg.residual_frame)
    x0 = np.zeros(model.n)
    if "object" in model.blocks:
        x0[model.blocks["object"]] = guess.object_invariant.ravel()
    x, report = solve(model.problem(), x0, cfg.solver)
    _check(report)
    frames, recon = model.rollout(x)
    desc = ScrewDescriptor(
        xi=xi,
        object_invariant=model.object_values(x),
        frame_invariant=x[model.blocks["invariants"]].reshape(-1, 4).copy(),
        frames=frames)
    return OcpResult(desc, recon, report, guess)


def solve_screw_ocp_pose(meas_T: np.ndarray, eps_p: float | None = None,
                         eps_R: float | None = None, cfg: OcpConfig | None = None,
                         xi: np.ndarray | None = None) -> OcpResult:
    """Screw invariants of a pose trajectory; the reconstructed twist also
    drives an object-pose rollout fitted to the measured poses."""
    cfg = cfg or OcpConfig()
    eps_p = cfg.eps_p if eps_p is None else eps_p
    eps_R = cfg.eps_R if eps_R is None else eps_R
    cfg_eff = replace(cfg, eps_p=eps_p, eps_R=eps_R)
    meas_T = np.asarray(meas_T, dtype=float)
    xi, dxi = _grid(len(meas_T), xi)
    twists = spatial_twists(meas_T, xi)
    guess, frame0, iv0, ab0 = _warm_screw(twists, dxi, cfg)
    model = ScrewPoseModel(meas_T, dxi, cfg_eff.rotation_bound(),
                           cfg_eff.position_bound(), frame0, cfg.L,
                           cfg.residual_frame)
    x0 = np.zeros(model.n)
    x0[model.blocks["object"]] = ab0[:-1].ravel()
    x0[model.blocks["invariants"]] = iv0.ravel()
    x, report = solve(model.problem(), x0, cfg.solver)
    _check(report)
    frames, poses, screws = model.rollout(x)
    obj = x[model.blocks["object"]].reshape(-1, 2)
    desc = ScrewDescriptor(
        xi=xi,
        object_invariant=np.concatenate([obj, obj[-1:]]),
        frame_invariant=x[model.blocks["invariants"]].reshape(-1, 4).copy(),
        frames=frames)
    return OcpResult(desc, poses, report, guess, extras={"screws": screws})
