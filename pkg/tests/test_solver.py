import numpy as np
import pytest

from invdesc import rollouts, se3, solver


def quadratic_problem(target):
    target = np.asarray(target, dtype=float)
    n = len(target)
    eye = np.eye(n)

    def evaluate(x, need_jac=True):
        return solver.Evaluation(x - target, eye if need_jac else None, [])

    return solver.NlpProblem(n=n, evaluate=evaluate, blocks={"all": slice(0, n)})


def test_unconstrained_quadratic_two_iterations():
    prob = quadratic_problem([1.0, -2.0, 0.5])
    x, rep = solver.solve(prob, np.zeros(3))
    assert rep.converged
    assert rep.iterations <= 2
    assert np.allclose(x, [1.0, -2.0, 0.5], atol=1e-10)


def test_scalar_kkt_case():
    # minimize x^2 subject to (x-1)^2 <= 0.25: KKT by hand gives x* = 0.5
    def evaluate(x, need_jac=True):
        J = np.eye(1) if need_jac else None
        con = solver.ConstraintEval(x - 1.0, J, 1, 0.25)
        return solver.Evaluation(x.copy(), J, [con])

    prob = solver.NlpProblem(n=1, evaluate=evaluate)
    x, rep = solver.solve(prob, np.array([2.0]))
    assert rep.converged
    assert x[0] == pytest.approx(0.5, abs=1e-6)
    assert rep.max_violation <= 1e-8


def test_infeasible_pair_detected():
    def evaluate(x, need_jac=True):
        J = np.eye(1) if need_jac else None
        c1 = solver.ConstraintEval(x - 1.0, J, 1, 0.01)
        c2 = solver.ConstraintEval(x + 1.0, J, 1, 0.01)
        return solver.Evaluation(0.0 * x, np.zeros((1, 1)) if need_jac else None,
                                 [c1, c2])

    prob = solver.NlpProblem(n=1, evaluate=evaluate)
    opts = solver.SolverOptions(mu_max=1e8, max_outer=25)
    x, rep = solver.solve(prob, np.array([0.0]), opts)
    assert rep.status == solver.INFEASIBLE


def test_nonfinite_initial_guess_rejected():
    prob = quadratic_problem([0.0])

    def bad_eval(x, need_jac=True):
        return solver.Evaluation(np.array([np.nan]), np.eye(1), [])

    bad = solver.NlpProblem(n=1, evaluate=bad_eval)
    with pytest.raises(ValueError):
        solver.solve(bad, np.zeros(1))


def test_deterministic_iterates():
    def evaluate(x, need_jac=True):
        r = np.array([x[0] ** 2 - x[1], x[1] - 1.0, 0.1 * x[0]])
        J = None
        if need_jac:
            J = np.array([[2 * x[0], -1.0], [0.0, 1.0], [0.1, 0.0]])
        con = solver.ConstraintEval(x - 0.2, np.eye(2) if need_jac else None, 2, 0.5)
        return solver.Evaluation(r, J, [con])

    prob = solver.NlpProblem(n=2, evaluate=evaluate)
    x1, r1 = solver.solve(prob, np.array([1.3, -0.4]))
    x2, r2 = solver.solve(prob, np.array([1.3, -0.4]))
    assert np.array_equal(x1, x2)
    assert r1.iterations == r2.iterations
    assert r1.objective == r2.objective


def _smooth_poses(n, seed=0):
    rng = np.random.default_rng(seed)
    T = se3.se3_exp(rng.normal(size=6) * 0.2)
    out = np.empty((n, 4, 4))
    xi = np.linspace(0, 1, n)
    for k, u in enumerate(xi):
        s = np.array([0.8 * np.cos(u), 0.5, 0.3 * np.sin(2 * u),
                      0.4, -0.2 * u, 0.1])
        out[k] = T @ se3.se3_exp(s * u)
    return out


def _random_x(model, rng, scale=0.5):
    x = rng.normal(size=model.n) * scale
    return x


MODEL_BUILDERS = {}


def _register_builders():
    rng = np.random.default_rng(42)
    n = 8
    xi = np.linspace(0, 1, n)
    dxi = xi[1] - xi[0]
    vec = np.stack([np.cos(xi), np.sin(xi), 0.3 + 0.2 * xi], axis=1)
    pos = np.stack([xi, 0.2 * xi**2, 0.1 * np.sin(xi)], axis=1)
    rots = np.array([se3.rot_exp([0.4 * u, 0.2, -0.3 * u]) for u in xi])
    screws = np.concatenate([vec, 0.3 * pos + 0.1], axis=1)
    poses = _smooth_poses(n)
    frame0 = se3.rot_exp([0.1, -0.2, 0.3])
    tframe0 = se3.se3_exp(np.array([0.1, -0.2, 0.3, 0.2, 0.0, -0.1]))

    MODEL_BUILDERS["vector"] = lambda rf: rollouts.VectorModel(vec, dxi, 1e-4, frame0)
    MODEL_BUILDERS["vector_position"] = lambda rf: rollouts.VectorPositionModel(
        pos, dxi, 1e-6, frame0, pos[0])
    MODEL_BUILDERS["vector_rotation"] = lambda rf: rollouts.VectorRotationModel(
        rots, dxi, 1e-3, frame0, rots[0])
    MODEL_BUILDERS["screw_moving"] = lambda rf: rollouts.ScrewModel(
        screws, dxi, 0.01, 0.02, tframe0, 0.5, rollouts.MOVING)
    MODEL_BUILDERS["screw_measurement"] = lambda rf: rollouts.ScrewModel(
        screws, dxi, 0.01, 0.02, tframe0, 0.5, rollouts.MEASUREMENT)
    MODEL_BUILDERS["screw_pose_moving"] = lambda rf: rollouts.ScrewPoseModel(
        poses, dxi, 1e-3, 1e-4, tframe0, 0.5, rollouts.MOVING)
    MODEL_BUILDERS["screw_pose_measurement"] = lambda rf: rollouts.ScrewPoseModel(
        poses, dxi, 1e-3, 1e-4, tframe0, 0.5, rollouts.MEASUREMENT)


_register_builders()


@pytest.mark.parametrize("name", sorted(MODEL_BUILDERS))
def test_rollout_jacobians_match_finite_differences(name):
    rng = np.random.default_rng(7)
    model = MODEL_BUILDERS[name](None)
    prob = model.problem()
    for _ in range(5):
        x = _random_x(model, rng, scale=0.3)
        err = solver.check_gradients(prob, x)
        assert err < 1e-5, f"{name}: gradient mismatch {err:g}"


def test_solver_on_vector_model_smoke():
    n = 20
    xi = np.linspace(0, 1, n)
    dxi = xi[1] - xi[0]
    # constant vector: zero-invariant solution is feasible and optimal
    meas = np.tile([0.0, 2.0, 0.0], (n, 1))
    frame0 = np.column_stack([[0, 1, 0], [1, 0, 0], [0, 0, -1.0]])
    model = rollouts.VectorModel(meas, dxi, 1e-6, frame0)
    x, rep = solver.solve(model.problem(), np.zeros(model.n))
    assert rep.converged
    assert rep.objective < 1e-12
    assert np.allclose(x[model.blocks["invariants"]], 0.0, atol=1e-7)
    assert np.allclose(model.object_values(x), 2.0, atol=1e-9)
