"""History-allocation solver: derivatives, boundary regimes, oracle match.

The analytic gradient and curvature are validated against central finite
differences; the solver is validated against an exhaustive grid oracle on
small instances, including binding-capacity and cost-dominated draws.
"""

import dataclasses

import numpy as np
import pytest

from diten.alloc import (
    AllocProblem,
    brute_force_oracle,
    cross_check,
    neg_objective_grad_hess,
    objective_value,
    random_problem,
    solve,
)
from diten.config import ScenarioConfig
from diten.costs import EnergyParams
from diten.env import nearest_association, sample_scenario
from diten.utility import DEFAULT_COEFFICIENTS, norm_cost_derivatives


def hand_problem(w0=1.0, w1=0.0):
    """Two users on separate servers with controllable cost weights."""
    return AllocProblem(
        fresh=np.array([800.0, 500.0]),
        prev=np.array([1200.0, 900.0]),
        emd=np.array([0.2, 0.4]),
        host=np.array([0, 1]),
        w_cost=np.array([w0, w1]),
        w_cmp=np.array([0.1, 0.1]),
        base_cost=np.array([5.0, 3.0]),
        base_cmp=np.array([1.0, 1.0]),
        compute_capacity=np.array([1400.0, 1450.0]),
        beta1=0.3,
        beta2=0.7,
        f0=200.0,
    )


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for i in range(60):
        problem = random_problem(
            rng,
            tight_capacity=(i % 4 == 1),
            cost_scale=40.0 if i % 4 == 2 else 1.0,
            migration=(i % 4 == 3),
        )
        gamma = rng.uniform(0.05, 0.95, size=problem.n_users)
        _, grad, _ = neg_objective_grad_hess(problem, gamma)
        h = 1e-6
        for u in range(problem.n_users):
            e = np.zeros(problem.n_users)
            e[u] = h
            up = neg_objective_grad_hess(problem, gamma + e)[0]
            dn = neg_objective_grad_hess(problem, gamma - e)[0]
            fd = (up - dn) / (2 * h)
            scale = max(abs(grad[u]), abs(fd), 1e-10)
            assert abs(grad[u] - fd) / scale < 1e-5


def test_curvature_matches_finite_differences():
    rng = np.random.default_rng(1)
    for i in range(40):
        problem = random_problem(rng, migration=(i % 2 == 1))
        gamma = rng.uniform(0.05, 0.95, size=problem.n_users)
        _, _, hess = neg_objective_grad_hess(problem, gamma)
        # second differences lose ~eps*|f|/h^2 to roundoff, so the step is
        # kept larger than for first derivatives
        h = 1e-3
        for u in range(problem.n_users):
            e = np.zeros(problem.n_users)
            e[u] = h
            up = neg_objective_grad_hess(problem, gamma + e)[0]
            mid = neg_objective_grad_hess(problem, gamma)[0]
            dn = neg_objective_grad_hess(problem, gamma - e)[0]
            fd = (up - 2 * mid + dn) / h**2
            scale = max(abs(hess[u]), abs(fd), 1e-10)
            assert abs(hess[u] - fd) / scale < 1e-4


def test_mixed_partials_negligible_in_steady_state():
    # the squash couples co-hosted users at cs * Norm'' * w_u * w_v, which
    # stays below 1e-8 at the deployment shape (20 users over 15 servers);
    # packing many heavy users on few servers would breach that, so the
    # check runs on nearest-feasible placements of the default scenario
    rng = np.random.default_rng(2)
    cfg = ScenarioConfig()
    params = EnergyParams.from_config(cfg)
    h = 1e-3
    checked_pairs = 0
    for _ in range(20):
        state = sample_scenario(cfg, rng)
        assoc, _ = nearest_association(state, params)
        problem = AllocProblem.from_state(state, params, assoc, assoc)
        gamma = rng.uniform(0.1, 0.9, size=problem.n_users)
        n2 = norm_cost_derivatives(problem.server_load(gamma), problem.f0)[2]
        cs = problem.beta2 / problem.n_servers

        def f(g):
            return neg_objective_grad_hess(problem, g)[0]

        for u in range(problem.n_users):
            for v in range(u):
                if problem.host[u] != problem.host[v]:
                    continue
                e_u = np.zeros(problem.n_users)
                e_v = np.zeros(problem.n_users)
                e_u[u] = h
                e_v[v] = h
                mixed = (
                    f(gamma + e_u + e_v)
                    - f(gamma + e_u - e_v)
                    - f(gamma - e_u + e_v)
                    + f(gamma - e_u - e_v)
                ) / (4 * h * h)
                assert abs(mixed) < 1e-8
                exact = cs * n2[problem.host[u]] * problem.w_cost[u] * problem.w_cost[v]
                assert mixed == pytest.approx(exact, abs=5e-11)
                checked_pairs += 1
    assert checked_pairs >= 20  # placements must actually share servers


def test_midpoint_convexity_in_steady_state():
    rng = np.random.default_rng(3)
    for _ in range(200):
        problem = random_problem(rng, tight_capacity=bool(rng.integers(2)))
        a = rng.uniform(0.0, 1.0, size=3)
        b = rng.uniform(0.0, 1.0, size=3)
        f_a = neg_objective_grad_hess(problem, a)[0]
        f_b = neg_objective_grad_hess(problem, b)[0]
        f_m = neg_objective_grad_hess(problem, (a + b) / 2.0)[0]
        assert f_m <= (f_a + f_b) / 2.0 + 1e-10


def test_value_is_negated_objective():
    rng = np.random.default_rng(4)
    problem = random_problem(rng)
    gamma = rng.uniform(0.0, 1.0, size=3)
    value = neg_objective_grad_hess(problem, gamma)[0]
    assert value == pytest.approx(-objective_value(problem, gamma), abs=1e-15)


def test_zero_cost_pushes_gamma_to_one():
    # utility strictly increasing in data: no cost, slack capacity -> 1
    problem = hand_problem(w0=0.0, w1=0.0)
    sol = solve(problem)
    assert sol.status == "optimal"
    assert np.all(sol.gamma > 1.0 - 1e-4)


def test_dominant_cost_pushes_gamma_to_zero():
    problem = hand_problem(w0=5e3, w1=4e3)
    sol = solve(problem)
    assert sol.status == "optimal"
    assert np.all(sol.gamma < 1e-3)


def test_oracle_distinguishes_users():
    # regression: per-user axes must be independent, not a shared diagonal
    problem = hand_problem(w0=5e3, w1=0.0)
    g, v = brute_force_oracle(problem, step=0.01)
    assert g[0] == pytest.approx(0.0, abs=1e-12)
    assert g[1] == pytest.approx(1.0, abs=1e-12)
    sol = solve(problem)
    assert abs(sol.gamma[0] - g[0]) < 0.02
    assert abs(sol.gamma[1] - g[1]) < 0.02
    assert sol.objective >= v - 1e-4


def test_oracle_enumeration_guard():
    problem = random_problem(np.random.default_rng(5), n_users=3)
    with pytest.raises(ValueError):
        brute_force_oracle(problem, step=0.001)  # 1001^3 > 1e7 points


def test_oracle_step_one_checks_corners():
    problem = hand_problem(w0=5e3, w1=0.0)
    g, v = brute_force_oracle(problem, step=1.0)
    assert set(np.unique(g)) <= {0.0, 1.0}
    corners = [
        objective_value(problem, np.array(c, dtype=float))
        for c in [(0, 0), (0, 1), (1, 0), (1, 1)]
    ]
    assert v == pytest.approx(max(corners))


def test_oracle_result_is_feasible():
    rng = np.random.default_rng(6)
    for _ in range(20):
        problem = random_problem(rng, tight_capacity=True)
        g, _ = brute_force_oracle(problem, step=0.05)
        load = problem.compute_load(g)
        assert np.all(load <= problem.compute_capacity + 1e-9)


def test_solver_matches_oracle_on_mixed_instances():
    report = cross_check(n_instances=45, seed=7)
    assert report["passed"], report
    assert report["max_objective_gap"] < 1e-4
    assert report["max_gamma_gap"] < 0.02


def test_solver_detects_infeasible_base_load():
    problem = hand_problem()
    problem = dataclasses.replace(
        problem, compute_capacity=np.array([0.5, 1450.0])
    )  # below the gamma = 0 load of server 0
    sol = solve(problem)
    assert sol.status == "infeasible"
    assert np.all(sol.gamma == 0.0)


def test_solver_is_deterministic():
    problem = random_problem(np.random.default_rng(8), tight_capacity=True)
    a = solve(problem)
    b = solve(problem)
    assert np.array_equal(a.gamma, b.gamma)
    assert a.objective == b.objective
    assert a.n_iterations == b.n_iterations


def test_kkt_residual_within_tolerance_when_optimal():
    rng = np.random.default_rng(9)
    for i in range(30):
        problem = random_problem(
            rng,
            tight_capacity=(i % 3 == 1),
            cost_scale=40.0 if i % 3 == 2 else 1.0,
        )
        sol = solve(problem)
        if sol.status == "optimal":
            assert sol.kkt_residual <= 1e-6


def test_warm_start_reaches_same_optimum():
    rng = np.random.default_rng(10)
    problem = random_problem(rng)
    cold = solve(problem)
    warm = solve(problem, gamma0=cold.gamma)
    assert warm.status == "optimal"
    assert np.abs(warm.gamma - cold.gamma).max() < 1e-4
    assert warm.n_iterations <= cold.n_iterations


def test_solver_feasible_and_stationary_with_migration():
    # off the steady-state regime the problem can lose convexity; the
    # safeguarded steps must still land on a feasible stationary point
    rng = np.random.default_rng(11)
    for _ in range(25):
        problem = random_problem(rng, migration=True)
        sol = solve(problem)
        assert np.all(sol.gamma >= 0.0) and np.all(sol.gamma <= 1.0)
        load = problem.compute_load(sol.gamma)
        assert np.all(load <= problem.compute_capacity + 1e-9)
        if sol.status == "optimal":
            assert sol.kkt_residual <= 1e-6
        corners = [
            objective_value(problem, np.zeros(3)),
            objective_value(problem, np.ones(3)),
        ]
        # never worse than the trivial all-or-nothing policies, when they
        # are feasible
        feasible_corners = [
            v
            for v, g in zip(corners, [np.zeros(3), np.ones(3)])
            if np.all(problem.compute_load(g) <= problem.compute_capacity)
        ]
        if feasible_corners and sol.status == "optimal":
            assert sol.objective >= max(feasible_corners) - 1e-6


def test_problem_from_state_uses_default_coefficients():
    problem = random_problem(np.random.default_rng(12))
    assert problem.coeffs is DEFAULT_COEFFICIENTS
