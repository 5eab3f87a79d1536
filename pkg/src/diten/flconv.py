"""Federated gradient descent on quadratic shards, with provable-rate checks.

Each shard holds a strongly convex quadratic loss (an SPD matrix, a center,
and a sample count); the global loss is the sample-weighted mean.  One
federated round broadcasts the global parameter, lets every shard take one
local gradient step, and size-weight-averages the results, which for these
losses is algebraically one centralized gradient step on the global loss.
``verify_bound`` checks the measured optimality gap against the geometric
rate implied by smoothness L and strong convexity psi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConvexShard",
    "FlTrace",
    "shard_loss",
    "shard_grad",
    "global_loss",
    "global_grad",
    "smoothness_bounds",
    "global_minimum",
    "aggregate",
    "fed_round",
    "centralized_step",
    "run_rounds",
    "verify_bound",
    "fine_tune",
    "random_shards",
]


@dataclass(frozen=True)
class ConvexShard:
    """One participant's quadratic loss 0.5 (w - c)^T A (w - c), A SPD."""

    quad: np.ndarray     # (d, d) symmetric positive definite
    center: np.ndarray   # (d,)
    count: int           # sample count; the aggregation weight

    def __post_init__(self):
        if self.count <= 0:
            raise ValueError("shard sample count must be positive")


def shard_loss(shard: ConvexShard, w) -> float:
    r = np.asarray(w, dtype=float) - shard.center
    return float(0.5 * r @ shard.quad @ r)


def shard_grad(shard: ConvexShard, w):
    return shard.quad @ (np.asarray(w, dtype=float) - shard.center)


def _weights(shards):
    counts = np.array([s.count for s in shards], dtype=float)
    return counts / counts.sum()


def global_loss(shards, w) -> float:
    """Sample-weighted mean of the shard losses."""
    return float(
        sum(wt * shard_loss(s, w) for wt, s in zip(_weights(shards), shards))
    )


def global_grad(shards, w):
    return sum(wt * shard_grad(s, w) for wt, s in zip(_weights(shards), shards))


def smoothness_bounds(shards):
    """(L, psi): largest/smallest eigenvalue of the global quadratic."""
    quad = sum(wt * s.quad for wt, s in zip(_weights(shards), shards))
    eig = np.linalg.eigvalsh(quad)
    return float(eig[-1]), float(eig[0])


def global_minimum(shards):
    """Minimizer and minimum value of the global loss (direct solve)."""
    weights = _weights(shards)
    quad = sum(wt * s.quad for wt, s in zip(weights, shards))
    rhs = sum(wt * s.quad @ s.center for wt, s in zip(weights, shards))
    w_star = np.linalg.solve(quad, rhs)
    return w_star, global_loss(shards, w_star)


def aggregate(parameters, counts):
    """Sample-weighted mean of parameter vectors (the fusion step)."""
    parameters = np.asarray(parameters, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if np.any(counts <= 0):
        raise ValueError("aggregation weights must be positive")
    return (counts[:, None] * parameters).sum(axis=0) / counts.sum()


def fed_round(w, shards, lr: float):
    """One broadcast / local-step / aggregate cycle.

    Every shard starts from the same global w and descends its own loss
    once; the results are sample-weight-averaged.  Equals one centralized
    gradient step on the global loss, up to float rounding.
    """
    w = np.asarray(w, dtype=float)
    locals_ = [w - lr * shard_grad(s, w) for s in shards]
    return aggregate(locals_, [s.count for s in shards])


def centralized_step(w, shards, lr: float):
    """One plain gradient step on the global loss; the fusion identity's
    right-hand side."""
    w = np.asarray(w, dtype=float)
    return w - lr * global_grad(shards, w)


@dataclass(frozen=True)
class FlTrace:
    """Optimality gaps along a descent run plus the instance's constants."""

    gaps: np.ndarray     # (rounds + 1,), gap[0] is the starting gap
    smoothness: float    # L
    convexity: float     # psi
    lr: float            # step size chi


def run_rounds(w0, shards, lr: float, rounds: int) -> FlTrace:
    """Run federated rounds and record the global optimality gap."""
    _, f_star = global_minimum(shards)
    l_const, psi = smoothness_bounds(shards)
    w = np.asarray(w0, dtype=float)
    gaps = [global_loss(shards, w) - f_star]
    for _ in range(rounds):
        w = fed_round(w, shards, lr)
        gaps.append(global_loss(shards, w) - f_star)
    return FlTrace(np.array(gaps), l_const, psi, lr)


def verify_bound(trace: FlTrace, tol: float = 1e-10):
    """Check each round's gap against the geometric convergence bound.

    The bound is gap_i <= exp(-i (2 psi chi - L psi chi^2)) * gap_0 and is
    only claimed for chi < 2 / L; a larger step raises.  Returns a list of
    (round, gap, bound, ok) rows; ok allows ``tol`` of slack.
    """
    if trace.lr >= 2.0 / trace.smoothness:
        raise ValueError("bound requires lr < 2 / L")
    exponent = (
        2.0 * trace.convexity * trace.lr
        - trace.smoothness * trace.convexity * trace.lr**2
    )
    rows = []
    for i, gap in enumerate(trace.gaps[1:], start=1):
        bound = float(np.exp(-i * exponent) * trace.gaps[0])
        rows.append((i, float(gap), bound, gap <= bound + tol))
    return rows


def fine_tune(w, shard: ConvexShard, lr: float, rounds: int) -> FlTrace:
    """Descend one shard's own loss, tracking its local optimality gap.

    Models per-participant specialization after fusion; the same geometric
    bound applies with the shard's own curvature constants.
    """
    eig = np.linalg.eigvalsh(shard.quad)
    w = np.asarray(w, dtype=float)
    gaps = [shard_loss(shard, w)]  # the shard's minimum value is 0
    for _ in range(rounds):
        w = w - lr * shard_grad(shard, w)
        gaps.append(shard_loss(shard, w))
    return FlTrace(np.array(gaps), float(eig[-1]), float(eig[0]), lr)


def random_shards(rng, dim: int = 5, n_shards: int = 4, eig_range=(0.5, 5.0)):
    """Random SPD-quadratic shards with uniform eigenvalues and centers."""
    shards = []
    for _ in range(n_shards):
        basis, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        eigs = rng.uniform(*eig_range, size=dim)
        quad = basis @ np.diag(eigs) @ basis.T
        quad = 0.5 * (quad + quad.T)  # kill asymmetry from rounding
        shards.append(
            ConvexShard(
                quad=quad,
                center=rng.normal(scale=2.0, size=dim),
                count=int(rng.integers(50, 500)),
            )
        )
    return shards
