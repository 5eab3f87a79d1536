"""Per-slot optimization of the history-participation vector gamma.

With the association fixed, the slot objective depends on gamma only through
each user's participating sample count (utility side) and through affine
per-server energy loads (cost side).  Cross-user curvature enters only via
the squashed per-server totals and is negligible at operating scale, so
Newton steps use the analytic diagonal curvature plus the exact rank-one
barrier terms of the compute-capacity rows.  The solver is a standard
log-barrier interior-point method with damped (backtracking) Newton steps.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .costs import EnergyParams, manhattan, shannon_rate
from .utility import (
    DEFAULT_COEFFICIENTS,
    UtilityCoefficients,
    data_utility_derivatives,
    norm_cost,
    norm_cost_derivatives,
)

__all__ = [
    "AllocProblem",
    "AllocSolution",
    "neg_objective_grad_hess",
    "objective_value",
    "solve",
    "brute_force_oracle",
    "random_problem",
    "cross_check",
]

_EDGE = 1e-9  # strict-interior margin for the box constraints


@dataclass(frozen=True)
class AllocProblem:
    """Slot data reduced to what the gamma decision can influence.

    w_cost[u] is dC_{host(u)}/dgamma_u (migration bits plus compute samples),
    w_cmp[u] the compute-only part that enters the capacity constraint, and
    base_cost / base_cmp the per-server loads at gamma = 0 (sync included in
    base_cost; it cannot be influenced by gamma but shifts the squash point).
    """

    fresh: np.ndarray        # (U,)
    prev: np.ndarray         # (U,)
    emd: np.ndarray          # (U,)
    host: np.ndarray         # (U,) server index per user
    w_cost: np.ndarray       # (U,)
    w_cmp: np.ndarray        # (U,)
    base_cost: np.ndarray    # (S,)
    base_cmp: np.ndarray     # (S,)
    compute_capacity: np.ndarray  # (S,)
    beta1: float
    beta2: float
    f0: float
    coeffs: UtilityCoefficients = DEFAULT_COEFFICIENTS

    @property
    def n_users(self) -> int:
        return self.fresh.size

    @property
    def n_servers(self) -> int:
        return self.base_cost.size

    @classmethod
    def from_state(cls, state, params: EnergyParams, assoc, prev_assoc):
        """Freeze one slot's association decision into a gamma problem."""
        idx = np.asarray(assoc).argmax(axis=1)
        prev_idx = np.asarray(prev_assoc).argmax(axis=1)
        s = state.n_servers
        hop = manhattan(state.server_positions, state.server_positions)[
            idx, prev_idx
        ]
        energy = params.server_energy_per_sample + params.user_energy_per_sample
        cmp_rate = params.n_cmp * state.cpu_power[idx] * energy
        mig_rate = params.n_mig * hop * params.bits_per_sample

        dist = manhattan(state.user_positions, state.server_positions)[
            np.arange(state.n_users), idx
        ]
        seconds = (
            state.fresh_samples * params.bits_per_sample / shannon_rate(params)
        )
        sync_user = params.n_syn * seconds * dist
        mig_base = params.n_mig * hop * (
            state.fresh_samples * params.bits_per_sample + state.twin_sizes
        )
        cmp_base = cmp_rate * state.fresh_samples

        def per_server(values):
            return np.bincount(idx, weights=values, minlength=s)

        return cls(
            fresh=state.fresh_samples.astype(float),
            prev=state.prev_samples.astype(float),
            emd=state.emd_levels.astype(float),
            host=idx,
            w_cost=(mig_rate + cmp_rate) * state.prev_samples,
            w_cmp=cmp_rate * state.prev_samples,
            base_cost=per_server(mig_base + sync_user + cmp_base),
            base_cmp=per_server(cmp_base),
            compute_capacity=state.compute_capacity.astype(float),
            beta1=params.beta1,
            beta2=params.beta2,
            f0=params.f0,
        )

    def server_load(self, gamma):
        """Total per-server energy C_s(gamma); affine in gamma."""
        return self.base_cost + np.bincount(
            self.host, weights=self.w_cost * gamma, minlength=self.n_servers
        )

    def compute_load(self, gamma):
        """Per-server compute energy; the capacity-constrained part."""
        return self.base_cmp + np.bincount(
            self.host, weights=self.w_cmp * gamma, minlength=self.n_servers
        )


def neg_objective_grad_hess(problem: AllocProblem, gamma):
    """Value, gradient, and diagonal curvature of -objective(gamma).

    The gradient chains through d d_bar/d gamma_u = prev_u and the affine
    load rows; the returned Hessian is the analytic diagonal (utility
    curvature plus the squash's own-coordinate curvature), which the solver
    pairs with the exact rank-one barrier blocks.
    """
    gamma = np.asarray(gamma, dtype=float)
    d_bar = problem.fresh + gamma * problem.prev
    rho, rho1, rho2 = data_utility_derivatives(
        problem.emd, d_bar, problem.coeffs
    )
    load = problem.server_load(gamma)
    n, n1, n2 = norm_cost_derivatives(load, problem.f0)
    cu = problem.beta1 / problem.n_users
    cs = problem.beta2 / problem.n_servers
    value = -cu * rho.sum() + cs * n.sum()
    grad = -cu * rho1 * problem.prev + cs * n1[problem.host] * problem.w_cost
    hess = (
        -cu * rho2 * problem.prev**2
        + cs * n2[problem.host] * problem.w_cost**2
    )
    return float(value), grad, hess


def objective_value(problem: AllocProblem, gamma) -> float:
    """Slot objective at gamma (the maximized sign convention)."""
    gamma = np.asarray(gamma, dtype=float)
    d_bar = problem.fresh + gamma * problem.prev
    rho, _, _ = data_utility_derivatives(problem.emd, d_bar, problem.coeffs)
    load = problem.server_load(gamma)
    return float(
        problem.beta1 * rho.sum() / problem.n_users
        - problem.beta2 * norm_cost(load, problem.f0).sum() / problem.n_servers
    )


@dataclass(frozen=True)
class AllocSolution:
    gamma: np.ndarray
    objective: float          # maximized sign convention
    status: str               # "optimal", "infeasible", or "max_iter"
    n_iterations: int
    kkt_residual: float


def _barrier_parts(problem: AllocProblem, gamma, mu, active):
    """Gradient/curvature pieces of the log-barrier at gamma."""
    slack_cap = problem.compute_capacity - problem.compute_load(gamma)
    g_box = mu * (-1.0 / gamma + 1.0 / (1.0 - gamma))
    h_box = mu * (1.0 / gamma**2 + 1.0 / (1.0 - gamma) ** 2)
    lam_cap = np.where(active, mu / np.maximum(slack_cap, 1e-300), 0.0)
    g_cap = lam_cap[problem.host] * problem.w_cmp
    c_rank1 = np.where(active, mu / np.maximum(slack_cap, 1e-300) ** 2, 0.0)
    return slack_cap, g_box + g_cap, h_box, c_rank1


def _barrier_value(problem, gamma, mu, active, f_value):
    slack_cap = problem.compute_capacity - problem.compute_load(gamma)
    if np.any(gamma <= 0) or np.any(gamma >= 1):
        return np.inf
    if np.any(slack_cap[active] <= 0):
        return np.inf
    value = f_value - mu * (np.log(gamma).sum() + np.log(1.0 - gamma).sum())
    if active.any():
        value -= mu * np.log(slack_cap[active]).sum()
    return value


def solve(
    problem: AllocProblem,
    *,
    tol: float = 1e-8,
    max_iter: int = 400,
    gamma0=None,
) -> AllocSolution:
    """Maximize the slot objective over gamma in [0, 1]^U under capacity.

    Path-following log barrier (weight shrinks by 0.2 per stage) with damped
    Newton inner steps; the Newton system is the clamped diagonal curvature
    plus per-server rank-one barrier blocks, solved in closed form.  Returns
    status "infeasible" when even gamma = 0 overflows some compute capacity,
    "max_iter" when the iteration budget runs out before the KKT residual
    falls below tol.  A warm start ``gamma0`` shortens the barrier path.
    """
    u = problem.n_users
    slack0 = problem.compute_capacity - problem.base_cmp
    if np.min(slack0) < 0:
        zeros = np.zeros(u)
        return AllocSolution(
            zeros, objective_value(problem, zeros), "infeasible", 0, np.inf
        )
    row_sum = np.bincount(
        problem.host, weights=problem.w_cmp, minlength=problem.n_servers
    )
    active = row_sum > 0  # capacity rows gamma can actually influence
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(active, slack0 / np.maximum(row_sum, 1e-300), np.inf)
    c_max = float(ratios.min()) if active.any() else np.inf

    gamma = np.full(u, np.clip(min(0.5, 0.9 * c_max), _EDGE, 1.0 - _EDGE))
    mu = 1.0
    if gamma0 is not None:
        cand = np.clip(np.asarray(gamma0, dtype=float), 1e-6, 1.0 - 1e-6)
        if np.all(problem.compute_capacity - problem.compute_load(cand) > 0):
            gamma = cand
            # resume the path where this point is roughly central: a stage
            # optimum satisfies grad f = -mu * b1, so fit mu by least squares
            f_grad = neg_objective_grad_hess(problem, cand)[1]
            b1 = _barrier_parts(problem, cand, 1.0, active)[1]
            denom = float(b1 @ b1)
            mu_fit = -float(f_grad @ b1) / denom if denom > 0 else 1e-2
            mu = float(np.clip(mu_fit, 10.0 * tol, 1e-2))
    if c_max <= 1e-8:
        # capacity already tight at gamma = 0: no interior to walk
        zeros = np.zeros(u)
        return AllocSolution(
            zeros, objective_value(problem, zeros), "max_iter", 0, np.inf
        )

    iterations = 0
    mu_min = tol / 4.0
    residual = np.inf
    while True:
        last_stage = mu * 0.2 < mu_min
        g_target = max(tol / 4.0, 1e-12) if last_stage else max(mu * 1e-2, 1e-10)
        for _ in range(60):
            if iterations >= max_iter:
                return AllocSolution(
                    gamma, objective_value(problem, gamma), "max_iter",
                    iterations, residual,
                )
            f_value, f_grad, f_hess = neg_objective_grad_hess(problem, gamma)
            slack_cap, b_grad, b_hess, c_rank1 = _barrier_parts(
                problem, gamma, mu, active
            )
            grad = f_grad + b_grad
            residual = float(np.abs(grad).max())
            if residual <= g_target:
                break
            # clamp keeps the Newton model positive definite off-regime
            diag = np.maximum(f_hess, 1e-12) + b_hess
            y = grad / diag
            t_num = np.bincount(
                problem.host, weights=problem.w_cmp * y,
                minlength=problem.n_servers,
            )
            t_den = 1.0 + c_rank1 * np.bincount(
                problem.host, weights=problem.w_cmp**2 / diag,
                minlength=problem.n_servers,
            )
            coef = (c_rank1 * t_num / t_den)[problem.host]
            step = -(y - coef * problem.w_cmp / diag)
            decrement = float(-grad @ step)
            if decrement <= 0.0:
                break
            # longest feasible move, then Armijo backtracking
            with np.errstate(divide="ignore"):
                t_box = np.min(
                    np.where(
                        step > 0,
                        (1.0 - _EDGE - gamma) / np.where(step > 0, step, 1.0),
                        np.where(
                            step < 0,
                            (gamma - _EDGE) / np.where(step < 0, -step, 1.0),
                            np.inf,
                        ),
                    )
                )
            load_step = np.bincount(
                problem.host, weights=problem.w_cmp * step,
                minlength=problem.n_servers,
            )
            rising = active & (load_step > 0)
            t_cap = (
                float((slack_cap[rising] / load_step[rising]).min())
                if rising.any()
                else np.inf
            )
            t = min(1.0, 0.99 * min(t_box, t_cap))
            phi0 = _barrier_value(problem, gamma, mu, active, f_value)
            slope = float(grad @ step)
            # merit differences below float resolution cannot be ranked;
            # the noise floor lets machine-precision steps through
            noise = 1e-14 * max(1.0, abs(phi0))
            accepted = False
            for _ in range(50):
                trial = gamma + t * step
                f_trial = neg_objective_grad_hess(problem, trial)[0]
                phi = _barrier_value(problem, trial, mu, active, f_trial)
                if phi <= phi0 + 1e-4 * t * slope + noise:
                    gamma = trial
                    accepted = True
                    break
                t *= 0.5
            iterations += 1
            if not accepted:
                break
        if last_stage:
            break
        mu *= 0.2

    kkt = max(residual, mu)
    status = "optimal" if kkt <= tol else "max_iter"
    return AllocSolution(
        gamma, objective_value(problem, gamma), status, iterations, kkt
    )


def brute_force_oracle(problem: AllocProblem, step: float = 0.01):
    """Exhaustive grid search over gamma; the solver's ground truth.

    Evaluates the objective on a uniform grid with the given step, masking
    grid points that overflow compute capacity.  Refuses more than three
    users or more than 1e7 grid points, because cost grows exponentially.
    Returns (gamma, objective) at the best feasible grid point.
    """
    u = problem.n_users
    axis = np.round(np.arange(0.0, 1.0 + step / 2.0, step), 12)
    if u > 3 or float(axis.size) ** u > 1e7:
        raise ValueError("grid oracle limited to U <= 3 and <= 1e7 points")
    axes = []
    for i in range(u):
        shape = [1] * u
        shape[i] = axis.size
        axes.append(axis.reshape(shape))

    util = np.zeros(())
    for i in range(u):
        d_bar = problem.fresh[i] + axes[i] * problem.prev[i]
        rho, _, _ = data_utility_derivatives(
            problem.emd[i], d_bar, problem.coeffs
        )
        util = util + rho
    value = problem.beta1 * util / u

    feasible = np.ones((1,) * u, dtype=bool)
    for s in range(problem.n_servers):
        members = np.flatnonzero(problem.host == s)
        load = np.zeros(())
        cmp_load = np.zeros(())
        for i in members:
            load = load + problem.w_cost[i] * axes[i]
            cmp_load = cmp_load + problem.w_cmp[i] * axes[i]
        value = value - problem.beta2 * norm_cost(
            problem.base_cost[s] + load, problem.f0
        ) / problem.n_servers
        feasible = feasible & (
            problem.base_cmp[s] + cmp_load
            <= problem.compute_capacity[s] + 1e-12
        )

    value = np.broadcast_to(value, (axis.size,) * u).copy()
    value[~np.broadcast_to(feasible, value.shape)] = -np.inf
    flat = int(np.argmax(value))
    best = np.unravel_index(flat, value.shape)
    gamma = np.array([axis[j] for j in best])
    return gamma, float(value[best])


def random_problem(
    rng,
    n_users: int = 3,
    n_servers: int = 2,
    *,
    tight_capacity: bool = False,
    cost_scale: float = 1.0,
    migration: bool = False,
) -> AllocProblem:
    """Sample a gamma problem from a random small scenario.

    The association is the steady-state greedy nearest placement (twins
    already sit where they are hosted), which is the regime the per-slot
    gamma step runs in.  ``tight_capacity`` hosts one user per server and
    shrinks the compute budgets so every capacity row binds on exactly one
    user; a shared binding row makes the constrained optimum slide along a
    capacity face between grid planes, which no grid oracle can certify.
    ``cost_scale`` multiplies the energy rates to move the utility/cost
    trade-off; ``migration`` relocates every twin from a random previous
    host, exercising the solver off the convex regime.
    """
    from .config import ScenarioConfig
    from .env import association_from_indices, nearest_association, sample_scenario

    cfg = ScenarioConfig(
        n_users=n_users,
        n_servers=n_users if tight_capacity else n_servers,
        emd_level=float(rng.uniform(0.0, 0.8)),
    )
    state = sample_scenario(cfg, rng)
    params = EnergyParams.from_config(cfg)
    if cost_scale != 1.0:
        params = replace(
            params,
            n_mig=params.n_mig * cost_scale,
            n_cmp=params.n_cmp * cost_scale,
        )
    if tight_capacity:
        assoc = association_from_indices(np.arange(n_users), n_users)
    else:
        assoc, _ = nearest_association(state, params)
    prev_assoc = assoc
    if migration:
        prev_assoc = association_from_indices(
            rng.integers(0, n_servers, size=n_users), n_servers
        )
    problem = AllocProblem.from_state(state, params, assoc, prev_assoc)
    if tight_capacity:
        # budget somewhere between the gamma = 0 and gamma = 1 loads
        span = problem.compute_load(np.ones(n_users)) - problem.base_cmp
        q = problem.base_cmp + rng.uniform(
            0.15, 1.1, size=problem.n_servers
        ) * np.maximum(span, 1e-6)
        problem = replace(problem, compute_capacity=q)
    return problem


def cross_check(
    n_instances: int = 200,
    seed: int = 0,
    *,
    step: float = 0.01,
    obj_tol: float = 1e-4,
    gamma_tol: float = 0.02,
) -> dict:
    """Solver-versus-grid-oracle sweep over random three-user instances.

    Alternates plain, tight-capacity, and cost-dominated instances.  Passes
    when every solve is at least oracle - obj_tol in objective and within
    gamma_tol of the oracle's argmax in max-norm.
    """
    rng = np.random.default_rng(seed)
    worst_obj = 0.0
    worst_gamma = 0.0
    failures = 0
    for i in range(n_instances):
        problem = random_problem(
            rng,
            tight_capacity=(i % 3 == 1),
            cost_scale=50.0 if i % 3 == 2 else 1.0,
        )
        sol = solve(problem)
        g_star, v_star = brute_force_oracle(problem, step)
        obj_gap = v_star - sol.objective
        gamma_gap = float(np.abs(sol.gamma - g_star).max())
        worst_obj = max(worst_obj, obj_gap)
        worst_gamma = max(worst_gamma, gamma_gap)
        if obj_gap > obj_tol or gamma_gap > gamma_tol or sol.status != "optimal":
            failures += 1
    return {
        "instances": n_instances,
        "failures": failures,
        "max_objective_gap": worst_obj,
        "max_gamma_gap": worst_gamma,
        "passed": failures == 0,
    }
