"""Constrained nonlinear least squares sized for the descriptor problems.

Equality constraints are already eliminated by the single-shooting rollouts
(see ``rollouts``), so what remains is

    minimize    ||r(x)||^2
    subject to  mean_k ||e_jk||^2 <= bound_j        (a few scalar inequalities)

handled with an augmented-Lagrangian outer loop and Levenberg-Marquardt
style damped Gauss-Newton inner steps.  Everything is dense and
deterministic: same inputs, same iterates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

CONVERGED = "Converged"
MAX_ITER = "MaxIter"
INFEASIBLE = "Infeasible"


@dataclass
class ConstraintEval:
    """One mean-squared inequality: mean over n_samples of ||e_k||^2 <= bound.

    gram_factor (optional) is a matrix G with J^T J = gram_scale * G^T G,
    used to build the Gauss-Newton term cheaper when the full Jacobian has
    redundant rows (e.g. 9-entry rotation residuals with 3 degrees of
    freedom); the full jacobian stays authoritative for gradients.
    """

    residuals: np.ndarray
    jacobian: np.ndarray | None
    n_samples: int
    bound: float
    gram_factor: np.ndarray | None = None
    gram_scale: float = 1.0

    @property
    def mse(self) -> float:
        return float(self.residuals @ self.residuals) / self.n_samples

    @property
    def g(self) -> float:
        """Normalized constraint value; feasible iff g <= 0."""
        return self.mse / self.bound - 1.0


@dataclass
class Evaluation:
    obj_residuals: np.ndarray
    obj_jacobian: np.ndarray | None
    constraints: list[ConstraintEval]
    obj_jtj: np.ndarray | None = None  # optional cached 2 J^T J of the objective

    @property
    def objective(self) -> float:
        return float(self.obj_residuals @ self.obj_residuals)


@dataclass
class NlpProblem:
    """Rollout-backed problem: ``evaluate`` returns residuals and Jacobians.

    blocks names the segments of the decision vector (initial-frame
    parameters, per-sample invariants, ...) for reporting and tests.
    """

    n: int
    evaluate: Callable[[np.ndarray, bool], Evaluation]
    blocks: dict[str, slice] = field(default_factory=dict)

    def objective(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        ev = self.evaluate(x, True)
        return ev.objective, 2.0 * ev.obj_jacobian.T @ ev.obj_residuals

    def constraint_values(self, x: np.ndarray) -> np.ndarray:
        ev = self.evaluate(x, False)
        return np.array([c.g for c in ev.constraints])


@dataclass
class SolverOptions:
    max_iter: int = 300            # accepted inner steps, totalled over outers
    kkt_tol: float = 1e-7          # stationarity, relative to max(1, |F|)
    feas_tol: float = 1e-8         # on the normalized (bound-scaled) constraints
    mu0: float = 10.0
    mu_growth: float = 10.0
    mu_max: float = 1e12
    max_outer: int = 30
    nu0: float = 1e-6              # initial LM damping, relative to diag(H)
    step_tol: float = 1e-15
    verbose: int = 0


@dataclass
class SolveReport:
    status: str
    iterations: int
    objective: float
    max_violation: float
    wall_time: float
    kkt_residual: float = 0.0
    outer_iterations: int = 0
    constraint_mse: list[float] = field(default_factory=list)
    constraint_bounds: list[float] = field(default_factory=list)
    multipliers: list[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def _al_terms(ev: Evaluation, lam: np.ndarray, mu: np.ndarray):
    """Augmented-Lagrangian value pieces for the current evaluation."""
    f = ev.objective
    pen = 0.0
    for j, c in enumerate(ev.constraints):
        t = lam[j] / mu[j] + c.g
        if t > 0.0:
            pen += 0.5 * mu[j] * t * t
    return f + pen


def _gram(J: np.ndarray) -> np.ndarray:
    return J.T @ J


def _al_grad_hess(ev: Evaluation, lam: np.ndarray, mu: np.ndarray):
    J = ev.obj_jacobian
    r = ev.obj_residuals
    grad = 2.0 * J.T @ r
    H = (2.0 * _gram(J)) if ev.obj_jtj is None else ev.obj_jtj.copy()
    for j, c in enumerate(ev.constraints):
        t = lam[j] / mu[j] + c.g
        if t <= 0.0:
            continue
        scale = 2.0 / (c.n_samples * c.bound)
        gj = scale * (c.jacobian.T @ c.residuals)
        grad += mu[j] * t * gj
        # Gauss-Newton curvature of the active penalty
        H += (mu[j] * gj)[:, None] * gj[None, :]
        if c.gram_factor is not None:
            H += (mu[j] * t * scale * c.gram_scale) * _gram(c.gram_factor)
        else:
            H += (mu[j] * t * scale) * _gram(c.jacobian)
    return grad, H


def solve(problem: NlpProblem, x0: np.ndarray, opts: SolverOptions | None = None
          ) -> tuple[np.ndarray, SolveReport]:
    """Minimize the problem from x0; returns the solution and a report."""
    opts = opts or SolverOptions()
    t_start = time.perf_counter()
    x = np.array(x0, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"x0 must have shape ({problem.n},)")

    ev = problem.evaluate(x, True)
    if not np.all(np.isfinite(ev.obj_residuals)) or not all(
            np.all(np.isfinite(c.residuals)) for c in ev.constraints):
        raise ValueError("objective/constraints not finite at the initial guess")

    m = len(ev.constraints)
    lam = np.zeros(m)
    # penalty starts at the objective's scale: a weak penalty would let the
    # first inner solves trade large constraint violations for objective
    mu = np.full(m, max(opts.mu0, ev.objective))
    iters = 0
    status = MAX_ITER
    kkt = np.inf
    prev_viol = np.inf
    stalled_outers = 0
    # loose-to-tight inner stationarity schedule (classic AL practice):
    # early multiplier updates do not need a fully converged subproblem
    omega = 1e-2 if m else opts.kkt_tol

    for outer in range(1, opts.max_outer + 1):
        # ---- inner: damped Gauss-Newton on the augmented objective ----
        F = _al_terms(ev, lam, mu)
        grad, H = _al_grad_hess(ev, lam, mu)
        nu = opts.nu0
        inner_tol = max(omega, opts.kkt_tol)
        inner_done = False
        while not inner_done:
            kkt = float(np.max(np.abs(grad)))
            if kkt <= inner_tol * max(1.0, abs(F)):
                break
            if iters >= opts.max_iter:
                break
            # Marquardt scaling: damp along diag(H) so badly scaled blocks
            # do not stall the step
            dH = np.diag(H)
            D = np.clip(dH, 1e-8 * max(float(np.max(dH)), 1e-300), None)
            solved = False
            for _ in range(60):
                try:
                    cf = cho_factor(H + np.diag(nu * D), lower=True, check_finite=False)
                    step = -cho_solve(cf, grad, check_finite=False)
                    solved = True
                    break
                except np.linalg.LinAlgError:
                    nu = max(nu * 10.0, 1e-12)
            if not solved:
                break
            if np.linalg.norm(step) <= opts.step_tol * (1.0 + np.linalg.norm(x)):
                break
            ev_try = problem.evaluate(x + step, False)
            F_try = _al_terms(ev_try, lam, mu)
            pred = -(grad @ step) - 0.5 * step @ (H @ step)
            rho = (F - F_try) / pred if pred > 0 else -1.0
            if F_try < F:
                x = x + step
                iters += 1
                ev = problem.evaluate(x, True)
                F = _al_terms(ev, lam, mu)
                grad, H = _al_grad_hess(ev, lam, mu)
                nu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            else:
                nu *= 4.0
                if nu > 1e16:
                    inner_done = True

        g = np.array([c.g for c in ev.constraints])
        viol = float(np.max(np.maximum(g, 0.0), initial=0.0))
        if opts.verbose:
            print(f"[al] outer {outer:2d} iters={iters:4d} f={ev.objective:.6g} "
                  f"F={F:.6g} kkt={kkt:.2e} viol={viol:.2e} "
                  f"mu={np.array2string(mu, precision=1)} "
                  f"lam={np.array2string(lam, precision=2)}")
        if viol <= opts.feas_tol:
            if omega <= opts.kkt_tol and kkt <= opts.kkt_tol * max(1.0, abs(F)):
                status = CONVERGED
                break
            if iters >= opts.max_iter:
                status = MAX_ITER
                break
            # feasible but not yet fully resolved: tighten and continue
        if iters >= opts.max_iter:
            status = MAX_ITER
            break
        omega = max(omega * 0.1, opts.kkt_tol)

        # ---- outer: multiplier and penalty updates ----
        lam = np.maximum(0.0, lam + mu * g)
        if viol > 0.25 * prev_viol and viol > opts.feas_tol:
            grow = mu * opts.mu_growth
            capped = np.all(mu >= opts.mu_max)
            mu = np.minimum(grow, opts.mu_max)
            if capped:
                stalled_outers += 1
                if stalled_outers >= 3:
                    status = INFEASIBLE
                    break
        else:
            stalled_outers = 0
        prev_viol = viol
    else:
        g = np.array([c.g for c in ev.constraints])
        viol = float(np.max(np.maximum(g, 0.0), initial=0.0))
        status = CONVERGED if (viol <= opts.feas_tol and
                               kkt <= opts.kkt_tol * max(1.0, abs(F))) else MAX_ITER

    g = np.array([c.g for c in ev.constraints])
    viol = float(np.max(np.maximum(g, 0.0), initial=0.0))
    if status == CONVERGED and viol > opts.feas_tol:
        status = MAX_ITER
    report = SolveReport(
        status=status,
        iterations=iters,
        objective=ev.objective,
        max_violation=viol,
        wall_time=time.perf_counter() - t_start,
        kkt_residual=kkt,
        outer_iterations=outer if m else 1,
        constraint_mse=[c.mse for c in ev.constraints],
        constraint_bounds=[c.bound for c in ev.constraints],
        multipliers=list(lam),
    )
    return x, report


def check_gradients(problem: NlpProblem, x: np.ndarray, h: float = 1e-6) -> float:
    """Max relative mismatch between analytic Jacobians and central differences.

    The relative scale is the largest analytic entry of each Jacobian (with a
    floor of 1), so the audit is meaningful for both tiny and large rows.
    """
    ev = problem.evaluate(x, True)
    jacs = [ev.obj_jacobian] + [c.jacobian for c in ev.constraints]
    worst = 0.0
    n = len(x)
    fd = [np.zeros_like(J) for J in jacs]
    for j in range(n):
        dx = np.zeros(n)
        dx[j] = h
        ev_p = problem.evaluate(x + dx, False)
        ev_m = problem.evaluate(x - dx, False)
        cols = [(ev_p.obj_residuals - ev_m.obj_residuals) / (2 * h)] + [
            (cp.residuals - cm.residuals) / (2 * h)
            for cp, cm in zip(ev_p.constraints, ev_m.constraints)
        ]
        for J, col in zip(fd, cols):
            J[:, j] = col
    for J, Jfd in zip(jacs, fd):
        scale = max(1.0, float(np.max(np.abs(J))))
        worst = max(worst, float(np.max(np.abs(J - Jfd))) / scale)
    return worst
