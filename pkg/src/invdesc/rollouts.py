"""Single-shooting rollouts of the descriptor recursions, with Jacobians.

Each model eliminates the frame-recursion equality constraints of its
optimization problem: the decision variables are only the initial-frame
chart parameters and the per-step invariants, and the reconstructed
trajectory is a deterministic rollout of them.  Orthonormality of every
rolled-out frame is automatic because integration happens through the
exponential map.

Jacobians are propagated forward analytically.  Frame perturbations are
tracked in the body of the rolled-out frame (delta T = T [dchi]x), object
channels integrated by left multiplication use spatial perturbations
(delta T = [dpsi]x T); the chain rules are the standard adjoint/right-
Jacobian recursions of the exponential map.  Step exponentials, adjoints
and right Jacobians are precomputed in batch; the sequential loop is
GEMM-only.
"""

from __future__ import annotations

import numpy as np

from . import se3
from .solver import ConstraintEval, Evaluation, NlpProblem

# embeddings of the reduced invariant vectors into so(3)/se(3) coordinates
P3 = np.zeros((3, 2))
P3[0, 0] = 1.0  # omega_tau
P3[2, 1] = 1.0  # omega_kappa
P6 = np.zeros((6, 4))
P6[0, 0] = 1.0  # omega_tau
P6[2, 1] = 1.0  # omega_kappa
P6[3, 2] = 1.0  # v_t
P6[5, 3] = 1.0  # v_b
E1X = se3.skew(np.array([1.0, 0.0, 0.0]))
K_BASIS = [se3.skew(e) for e in np.eye(3)]

MOVING = "moving"
MEASUREMENT = "measurement"


def _blocks(sizes: dict[str, int]) -> dict[str, slice]:
    out = {}
    start = 0
    for name, size in sizes.items():
        out[name] = slice(start, start + size)
        start += size
    return out


def _check_residual_frame(residual_frame: str) -> str:
    if residual_frame not in (MOVING, MEASUREMENT):
        raise ValueError(f"unknown residual frame {residual_frame!r}")
    return residual_frame


def _rot_basis_rows(Rm: np.ndarray, Ro: np.ndarray) -> np.ndarray:
    """(M, 9, 3) maps a spatial rotation perturbation to d(Rm^T Ro - I)."""
    M = len(Rm)
    RmT = np.swapaxes(Rm, -1, -2)
    B = np.empty((M, 9, 3))
    for j in range(3):
        B[:, :, j] = (RmT @ (K_BASIS[j] @ Ro)).reshape(M, 9)
    return B


class _ModelBase:
    def problem(self) -> NlpProblem:
        return NlpProblem(n=self.n, evaluate=self.evaluate, blocks=self.blocks)

    def _init_objective(self, weights_row: np.ndarray, n_steps: int):
        self.obj_weights = np.tile(weights_row, n_steps)
        m = len(self.obj_weights)
        J = np.zeros((m, self.n))
        sl = self.blocks["invariants"]
        J[np.arange(m), np.arange(sl.start, sl.stop)] = self.obj_weights
        self.obj_jac = J
        jtj = np.zeros(self.n)
        jtj[sl] = self.obj_weights**2
        self.obj_jtj = 2.0 * np.diag(jtj)

    def _obj_eval(self, x: np.ndarray, need_jac: bool):
        r = self.obj_weights * x[self.blocks["invariants"]]
        return r, (self.obj_jac if need_jac else None)


class VectorModel(_ModelBase):
    """Vector-trajectory problem: fit measured 3-vectors.

    Decision blocks: frame (3 chart parameters on the initial moving frame)
    and invariants (N-1 pairs).  The tangential magnitudes are separable
    (each appears in exactly one sample residual, never in the objective)
    and are eliminated: given the frames, the optimal magnitude is the
    tangential projection of the measurement, leaving its rejection as the
    fit residual.
    """

    def __init__(self, meas: np.ndarray, dxi: float, bound: float, frame0: np.ndarray):
        self.meas = np.asarray(meas, dtype=float)
        self.N = len(self.meas)
        self.dxi = float(dxi)
        self.bound = float(bound)
        self.frame0 = np.asarray(frame0, dtype=float)
        self.blocks = _blocks({"frame": 3, "invariants": 2 * (self.N - 1)})
        self.n = self.blocks["invariants"].stop
        self._init_objective(np.ones(2), self.N - 1)

    def _frames(self, x: np.ndarray):
        N = self.N
        iv = x[self.blocks["invariants"]].reshape(N - 1, 2)
        E = se3.rot_exp_many(iv @ P3.T * self.dxi)
        frames = np.empty((N, 3, 3))
        frames[0] = self.frame0 @ se3.rot_exp(x[self.blocks["frame"]])
        for k in range(N - 1):
            frames[k + 1] = frames[k] @ E[k]
        return frames, E, iv

    def object_values(self, x: np.ndarray) -> np.ndarray:
        frames, _, _ = self._frames(x)
        return np.einsum("ki,ki->k", self.meas, frames[:, :, 0])

    def rollout(self, x: np.ndarray):
        frames, _, _ = self._frames(x)
        c = np.einsum("ki,ki->k", self.meas, frames[:, :, 0])
        return frames, c[:, None] * frames[:, :, 0]

    def evaluate(self, x: np.ndarray, need_jac: bool = True) -> Evaluation:
        N, n, dxi = self.N, self.n, self.dxi
        frames, E, iv = self._frames(x)
        t = frames[:, :, 0]
        c = np.einsum("ki,ki->k", self.meas, t)
        e = (c[:, None] * t - self.meas).ravel()
        Je = None
        if need_jac:
            sl_inv = self.blocks["invariants"]
            JrP = np.einsum("kij,jl->kil",
                            _so3_jac_right_many(iv @ P3.T * dxi), P3) * dxi
            # d(c_opt t - m) = (t m^T + c I) dt, dt = -R [e1]x dphi
            A = -np.einsum("ki,kj->kij", t, self.meas)
            A -= c[:, None, None] * np.eye(3)
            A = A @ (frames @ E1X)
            Je = np.zeros((3 * N, n))
            Phi = np.zeros((3, n))
            Phi[:, self.blocks["frame"]] = se3.so3_jac_right(x[self.blocks["frame"]])
            for k in range(N):
                Je[3 * k:3 * k + 3] = A[k] @ Phi
                if k < N - 1:
                    Phi = E[k].T @ Phi
                    Phi[:, sl_inv.start + 2 * k:sl_inv.start + 2 * k + 2] += JrP[k]
        r, Jr = self._obj_eval(x, need_jac)
        return Evaluation(r, Jr, [ConstraintEval(e, Je, N, self.bound)],
                          obj_jtj=self.obj_jtj)


def _so3_jac_right_many(w: np.ndarray) -> np.ndarray:
    """Batched right Jacobian of the SO(3) exponential."""
    w = np.asarray(w, dtype=float)
    th2 = np.einsum("...i,...i->...", w, w)
    th = np.sqrt(th2)
    small = th < se3.SMALL_ANGLE
    th2s = np.where(small, 1.0, th2)
    a = np.where(small, 0.5 - th2 / 24.0, (1.0 - np.cos(th)) / th2s)
    b = np.where(small, 1.0 / 6.0 - th2 / 120.0,
                 (th - np.sin(th)) / (th2s * np.where(small, 1.0, th)))
    W = se3.skew_many(w)
    return np.eye(3) - a[..., None, None] * W + b[..., None, None] * (W @ W)


class VectorPositionModel(_ModelBase):
    """Position-trajectory problem: the object invariant is the translational
    velocity in the moving frame and positions come from the augmented
    4x4 integrator."""

    def __init__(self, meas_p: np.ndarray, dxi: float, bound: float,
                 frame0: np.ndarray, p0: np.ndarray):
        self.meas = np.asarray(meas_p, dtype=float)
        self.N = len(self.meas)
        self.dxi = float(dxi)
        self.bound = float(bound)
        self.frame0 = np.asarray(frame0, dtype=float)
        self.p0 = np.asarray(p0, dtype=float)
        self.blocks = _blocks({"frame": 3, "origin": 3, "object": self.N - 1,
                               "invariants": 2 * (self.N - 1)})
        self.n = self.blocks["invariants"].stop
        self._init_objective(np.ones(2), self.N - 1)

    def _steps(self, x):
        N = self.N
        zetas = np.zeros((N - 1, 6))
        zetas[:, [0, 2]] = x[self.blocks["invariants"]].reshape(N - 1, 2)
        zetas[:, 3] = x[self.blocks["object"]]
        return zetas

    def _sequences(self, x):
        N = self.N
        zetas = self._steps(x)
        X = se3.se3_exp_many(zetas, self.dxi)
        frames = np.empty((N, 3, 3))
        pos = np.empty((N, 3))
        frames[0] = self.frame0 @ se3.rot_exp(x[self.blocks["frame"]])
        pos[0] = self.p0 + x[self.blocks["origin"]]
        for k in range(N - 1):
            pos[k + 1] = pos[k] + frames[k] @ X[k, :3, 3]
            frames[k + 1] = frames[k] @ X[k, :3, :3]
        return frames, pos, X, zetas

    def rollout(self, x: np.ndarray):
        frames, pos, _, _ = self._sequences(x)
        return frames, pos

    def evaluate(self, x: np.ndarray, need_jac: bool = True) -> Evaluation:
        N, n, dxi = self.N, self.n, self.dxi
        frames, pos, X, zetas = self._sequences(x)
        e = (pos - self.meas).ravel()
        Je = None
        if need_jac:
            sl_obj = self.blocks["object"]
            sl_inv = self.blocks["invariants"]
            Ainv = se3.screw_transform_many(se3.pose_inverse_many(X))
            Jr = se3.se3_jac_right_many(zetas * dxi) * dxi
            Je = np.zeros((3 * N, n))
            chi = np.zeros((6, n))
            chi[:3, self.blocks["frame"]] = se3.so3_jac_right(x[self.blocks["frame"]])
            chi[3:, self.blocks["origin"]] = frames[0].T
            for k in range(N):
                Je[3 * k:3 * k + 3] = frames[k] @ chi[3:]
                if k < N - 1:
                    chi = Ainv[k] @ chi
                    cols = [sl_inv.start + 2 * k, sl_inv.start + 2 * k + 1]
                    chi[:, cols] += Jr[k][:, [0, 2]]
                    chi[:, sl_obj.start + k] += Jr[k][:, 3]
        r, Jr_ = self._obj_eval(x, need_jac)
        return Evaluation(r, Jr_, [ConstraintEval(e, Je, N, self.bound)],
                          obj_jtj=self.obj_jtj)


class VectorRotationModel(_ModelBase):
    """Orientation-trajectory problem: the object invariant is the rotational
    velocity in the moving frame; rotations integrate on the left."""

    def __init__(self, meas_R: np.ndarray, dxi: float, bound: float,
                 frame0: np.ndarray, R0: np.ndarray):
        self.meas = np.asarray(meas_R, dtype=float)
        self.N = len(self.meas)
        self.dxi = float(dxi)
        self.bound = float(bound)
        self.frame0 = np.asarray(frame0, dtype=float)
        self.R0 = np.asarray(R0, dtype=float)
        self.blocks = _blocks({"frame": 3, "origin": 3, "object": self.N - 1,
                               "invariants": 2 * (self.N - 1)})
        self.n = self.blocks["invariants"].stop
        self._init_objective(np.ones(2), self.N - 1)

    def _sequences(self, x):
        N, dxi = self.N, self.dxi
        c = x[self.blocks["object"]]
        iv = x[self.blocks["invariants"]].reshape(N - 1, 2)
        Ef = se3.rot_exp_many(iv @ P3.T * dxi)
        frames = np.empty((N, 3, 3))
        rots = np.empty((N, 3, 3))
        frames[0] = self.frame0 @ se3.rot_exp(x[self.blocks["frame"]])
        rots[0] = self.R0 @ se3.rot_exp(x[self.blocks["origin"]])
        gammas = np.empty((N - 1, 3))
        for k in range(N - 1):
            gammas[k] = c[k] * frames[k][:, 0]
            rots[k + 1] = se3.rot_exp(gammas[k] * dxi) @ rots[k]
            frames[k + 1] = frames[k] @ Ef[k]
        return frames, rots, Ef, gammas, c, iv

    def rollout(self, x: np.ndarray):
        frames, rots, *_ = self._sequences(x)
        return frames, rots

    def evaluate(self, x: np.ndarray, need_jac: bool = True) -> Evaluation:
        N, n, dxi = self.N, self.n, self.dxi
        frames, rots, Ef, gammas, c, iv = self._sequences(x)
        RmT_Ro = np.swapaxes(self.meas, -1, -2) @ rots
        e = (RmT_Ro - np.eye(3)).reshape(N, 9).ravel()
        Je = None
        if need_jac:
            sl_obj = self.blocks["object"]
            sl_inv = self.blocks["invariants"]
            B = _rot_basis_rows(self.meas, rots)
            E = se3.rot_exp_many(gammas * dxi)
            Jl = _so3_jac_right_many(-gammas * dxi) * dxi
            JrP = np.einsum("kij,jl->kil",
                            _so3_jac_right_many(iv @ P3.T * dxi), P3) * dxi
            A = -(c[:, None, None] * (frames[:-1] @ E1X))
            Je = np.zeros((9 * N, n))
            Psi = np.zeros((3 * N, n))
            Phi = np.zeros((3, n))
            Phi[:, self.blocks["frame"]] = se3.so3_jac_right(x[self.blocks["frame"]])
            psi = np.zeros((3, n))
            psi[:, self.blocks["origin"]] = rots[0] @ se3.so3_jac_right(
                x[self.blocks["origin"]])
            for k in range(N):
                Je[9 * k:9 * k + 9] = B[k] @ psi
                Psi[3 * k:3 * k + 3] = psi
                if k < N - 1:
                    dgamma = A[k] @ Phi
                    dgamma[:, sl_obj.start + k] += frames[k][:, 0]
                    psi = E[k] @ psi + Jl[k] @ dgamma
                    Phi = Ef[k].T @ Phi
                    Phi[:, sl_inv.start + 2 * k:sl_inv.start + 2 * k + 2] += JrP[k]
        r, Jr = self._obj_eval(x, need_jac)
        # B_k^T B_k = 2 I exactly, so J^T J = 2 Psi^T Psi
        con = ConstraintEval(e, Je, N, self.bound,
                             gram_factor=None if Je is None else Psi, gram_scale=2.0)
        return Evaluation(r, Jr, [con], obj_jtj=self.obj_jtj)


class ScrewModel(_ModelBase):
    """Screw-trajectory problem: fit measured twists/wrenches.

    The fit error is split into a direction part and a moment part with
    separate bounds.  With residual_frame="moving" both parts are expressed
    in the rolled-out axis frame, which makes the whole problem (and its
    iterates) independent of the frame the measurements came in; with
    "measurement" they are the raw coordinate residuals.
    """

    def __init__(self, meas: np.ndarray, dxi: float, bound_dir: float,
                 bound_mom: float, frame0: np.ndarray, length_scale: float,
                 residual_frame: str = MOVING):
        self.meas = np.asarray(meas, dtype=float)
        self.N = len(self.meas)
        self.dxi = float(dxi)
        self.bound_dir = float(bound_dir)
        self.bound_mom = float(bound_mom)
        self.frame0 = np.asarray(frame0, dtype=float)
        self.L = float(length_scale)
        self.residual_frame = _check_residual_frame(residual_frame)
        if self.residual_frame == MOVING:
            # the axial components are separable (one residual entry each,
            # absent from the objective): eliminate them; the remaining
            # residuals are the off-axis components of the pulled-in screws
            self.blocks = _blocks({"frame": 6, "invariants": 4 * (self.N - 1)})
        else:
            self.blocks = _blocks({"frame": 6, "object": 2 * self.N,
                                   "invariants": 4 * (self.N - 1)})
        self.n = self.blocks["invariants"].stop
        self._init_objective(np.array([1.0, 1.0, 1.0 / self.L, 1.0 / self.L]),
                             self.N - 1)

    def _frames(self, x):
        N = self.N
        iv = x[self.blocks["invariants"]].reshape(N - 1, 4)
        X = se3.se3_exp_many(iv @ P6.T, self.dxi)
        frames = np.empty((N, 4, 4))
        frames[0] = self.frame0 @ se3.se3_exp(x[self.blocks["frame"]])
        for k in range(N - 1):
            frames[k + 1] = frames[k] @ X[k]
        return frames, X, iv

    def _pulled_in(self, frames):
        Sinv = se3.screw_transform_many(se3.pose_inverse_many(frames))
        return np.einsum("kij,kj->ki", Sinv, self.meas)

    def object_values(self, x: np.ndarray) -> np.ndarray:
        if self.residual_frame == MEASUREMENT:
            return x[self.blocks["object"]].reshape(self.N, 2).copy()
        frames, _, _ = self._frames(x)
        return self._pulled_in(frames)[:, [0, 3]]

    def rollout(self, x: np.ndarray):
        frames, _, _ = self._frames(x)
        ab = self.object_values(x)
        st = np.zeros((self.N, 6))
        st[:, 0] = ab[:, 0]
        st[:, 3] = ab[:, 1]
        S = se3.screw_transform_many(frames)
        return frames, np.einsum("kij,kj->ki", S, st)

    def evaluate(self, x: np.ndarray, need_jac: bool = True) -> Evaluation:
        N, n, dxi = self.N, self.n, self.dxi
        frames, X, iv = self._frames(x)
        sl_inv = self.blocks["invariants"]
        moving = self.residual_frame == MOVING
        if moving:
            shat = self._pulled_in(frames)
            ea = -shat[:, 1:3].ravel()
            eb = -shat[:, 4:6].ravel()
        else:
            st = np.zeros((N, 6))
            ab = x[self.blocks["object"]].reshape(N, 2)
            st[:, 0] = ab[:, 0]
            st[:, 3] = ab[:, 1]
            S = se3.screw_transform_many(frames)
            e6 = np.einsum("kij,kj->ki", S, st) - self.meas
            ea = e6[:, :3].ravel()
            eb = e6[:, 3:].ravel()
        Ja = Jb = None
        if need_jac:
            Ainv = se3.screw_transform_many(se3.pose_inverse_many(X))
            JrP = se3.se3_jac_right_many(iv @ P6.T * dxi) @ P6 * dxi
            chi = np.zeros((6, n))
            chi[:, self.blocks["frame"]] = se3.se3_jac_right(x[self.blocks["frame"]])
            rows_per = 2 if moving else 3
            Ja = np.zeros((rows_per * N, n))
            Jb = np.zeros((rows_per * N, n))
            if moving:
                AD = se3.ad_se3_many(shat)
                for k in range(N):
                    J6 = AD[k] @ chi  # d(-shat) = -ad(shat) chi, e = -shat[off]
                    Ja[2 * k:2 * k + 2] = -J6[1:3]
                    Jb[2 * k:2 * k + 2] = -J6[4:6]
                    if k < N - 1:
                        chi = Ainv[k] @ chi
                        chi[:, sl_inv.start + 4 * k:sl_inv.start + 4 * k + 4] += JrP[k]
            else:
                sl_obj = self.blocks["object"]
                AD = se3.ad_se3_many(st)
                for k in range(N):
                    D = -AD[k] @ chi
                    D[0, sl_obj.start + 2 * k] += 1.0
                    D[3, sl_obj.start + 2 * k + 1] += 1.0
                    J6 = S[k] @ D
                    Ja[3 * k:3 * k + 3] = J6[:3]
                    Jb[3 * k:3 * k + 3] = J6[3:]
                    if k < N - 1:
                        chi = Ainv[k] @ chi
                        chi[:, sl_inv.start + 4 * k:sl_inv.start + 4 * k + 4] += JrP[k]
        r, Jr = self._obj_eval(x, need_jac)
        return Evaluation(r, Jr, [
            ConstraintEval(ea, Ja, N, self.bound_dir),
            ConstraintEval(eb, Jb, N, self.bound_mom),
        ], obj_jtj=self.obj_jtj)


class ScrewPoseModel(_ModelBase):
    """Pose-measurement screw problem: the reconstructed twist drives an
    object-pose rollout and the fit error is on rotations and positions.

    With residual_frame="moving" the position error is evaluated at the
    body-fixed point currently on the screw axis (plus the usual rotation
    error), which is invariant to both the world frame and the body frame
    of the supplied poses; "measurement" uses the raw body-origin positions.
    """

    def __init__(self, meas_T: np.ndarray, dxi: float, bound_rot: float,
                 bound_pos: float, frame0: np.ndarray, length_scale: float,
                 residual_frame: str = MOVING):
        self.meas = np.asarray(meas_T, dtype=float)
        self.N = len(self.meas)
        self.dxi = float(dxi)
        self.bound_rot = float(bound_rot)
        self.bound_pos = float(bound_pos)
        self.frame0 = np.asarray(frame0, dtype=float)
        self.L = float(length_scale)
        self.residual_frame = _check_residual_frame(residual_frame)
        self.blocks = _blocks({"frame": 6, "origin": 6, "object": 2 * (self.N - 1),
                               "invariants": 4 * (self.N - 1)})
        self.n = self.blocks["invariants"].stop
        self._init_objective(np.array([1.0, 1.0, 1.0 / self.L, 1.0 / self.L]),
                             self.N - 1)

    def _sequences(self, x):
        N, dxi = self.N, self.dxi
        iv = x[self.blocks["invariants"]].reshape(N - 1, 4)
        ab = x[self.blocks["object"]].reshape(N - 1, 2)
        st = np.zeros((N - 1, 6))
        st[:, 0] = ab[:, 0]
        st[:, 3] = ab[:, 1]
        Xf = se3.se3_exp_many(iv @ P6.T, dxi)
        frames = np.empty((N, 4, 4))
        frames[0] = self.frame0 @ se3.se3_exp(x[self.blocks["frame"]])
        for k in range(N - 1):
            frames[k + 1] = frames[k] @ Xf[k]
        Sf = se3.screw_transform_many(frames[:-1])
        screws = np.einsum("kij,kj->ki", Sf, st)
        Xo = se3.se3_exp_many(screws, dxi)
        poses = np.empty((N, 4, 4))
        # initial-pose chart conjugated through the axis frame: commutes with
        # both world and body transforms of the measurements, so the whole
        # iterate path (not only the optimum) is frame-independent
        C = frames[0]
        W = C @ se3.se3_exp(x[self.blocks["origin"]]) @ se3.pose_inverse(C)
        poses[0] = W @ self.meas[0]
        for k in range(N - 1):
            poses[k + 1] = Xo[k] @ poses[k]
        return frames, poses, Xf, Xo, Sf, st, screws, iv, W

    def rollout(self, x: np.ndarray):
        frames, poses, _, _, _, _, screws, _, _ = self._sequences(x)
        screws_full = np.concatenate([screws, screws[-1:]], axis=0)
        return frames, poses, screws_full

    def evaluate(self, x: np.ndarray, need_jac: bool = True) -> Evaluation:
        N, n, dxi = self.N, self.n, self.dxi
        frames, poses, Xf, Xo, Sf, st, screws, iv, W = self._sequences(x)
        sl_obj = self.blocks["object"]
        sl_inv = self.blocks["invariants"]
        moving = self.residual_frame == MOVING

        Rm = self.meas[:, :3, :3]
        pm = self.meas[:, :3, 3]
        Ro = poses[:, :3, :3]
        po = poses[:, :3, 3]
        er = (np.swapaxes(Rm, -1, -2) @ Ro - np.eye(3)).reshape(N, 9).ravel()
        if moving:
            Xk = np.einsum("kji,kj->ki", Rm, frames[:, :3, 3] - pm)
            RoXk = np.einsum("kij,kj->ki", Ro - Rm, Xk)
            ep = ((po - pm) + RoXk).ravel()
        else:
            ep = (po - pm).ravel()

        Jr_rows = Jp_rows = None
        if need_jac:
            B = _rot_basis_rows(Rm, Ro)
            AdXo = se3.screw_transform_many(Xo)
            Jl = se3.se3_jac_right_many(-screws * dxi) * dxi
            Ainv = se3.screw_transform_many(se3.pose_inverse_many(Xf))
            JrP = se3.se3_jac_right_many(iv @ P6.T * dxi) @ P6 * dxi
            ADst = se3.ad_se3_many(st)
            skew_po = se3.skew_many(po)
            if moving:
                skew_rx = se3.skew_many(np.einsum("kij,kj->ki", Ro, Xk))
                lever = (Ro - Rm) @ np.swapaxes(Rm, -1, -2) @ frames[:, :3, :3]
            Jr_rows = np.zeros((9 * N, n))
            Jp_rows = np.zeros((3 * N, n))
            Psi = np.zeros((3 * N, n))
            chi = np.zeros((6, n))
            chi[:, self.blocks["frame"]] = se3.se3_jac_right(x[self.blocks["frame"]])
            # conjugated chart: dpsi0 = Ad(C) J_l dtheta_pose
            #                        + (I - Ad(W)) Ad(C) dchi_frame
            AdC = se3.screw_transform(frames[0])
            psi = np.zeros((6, n))
            psi[:, self.blocks["origin"]] = AdC @ se3.se3_jac_left(
                x[self.blocks["origin"]])
            psi[:, self.blocks["frame"]] = (
                (np.eye(6) - se3.screw_transform(W)) @ AdC
                @ se3.se3_jac_right(x[self.blocks["frame"]]))
            for k in range(N):
                Jr_rows[9 * k:9 * k + 9] = B[k] @ psi[:3]
                Psi[3 * k:3 * k + 3] = psi[:3]
                if moving:
                    rows = (-skew_po[k] - skew_rx[k]) @ psi[:3] + psi[3:]
                    rows += lever[k] @ chi[3:]
                else:
                    rows = -skew_po[k] @ psi[:3] + psi[3:]
                Jp_rows[3 * k:3 * k + 3] = rows
                if k < N - 1:
                    D = -ADst[k] @ chi
                    D[0, sl_obj.start + 2 * k] += 1.0
                    D[3, sl_obj.start + 2 * k + 1] += 1.0
                    ds = Sf[k] @ D
                    psi = AdXo[k] @ psi + Jl[k] @ ds
                    chi = Ainv[k] @ chi
                    chi[:, sl_inv.start + 4 * k:sl_inv.start + 4 * k + 4] += JrP[k]
        r, Jo = self._obj_eval(x, need_jac)
        # B_k^T B_k = 2 I exactly, so the rotation block's J^T J = 2 Psi^T Psi
        con_rot = ConstraintEval(er, Jr_rows, N, self.bound_rot,
                                 gram_factor=None if Jr_rows is None else Psi,
                                 gram_scale=2.0)
        return Evaluation(r, Jo, [
            con_rot,
            ConstraintEval(ep, Jp_rows, N, self.bound_pos),
        ], obj_jtj=self.obj_jtj)
