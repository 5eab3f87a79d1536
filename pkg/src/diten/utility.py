"""Training-data utility curves and the energy-cost normalization.

A twin's training data is worth more when there is more of it and when its
label mix matches the population.  ``data_utility`` maps (label skew,
participating sample count) to a scalar accuracy proxy through a fitted
double-exponential curve; ``norm_cost`` squashes raw per-server energy onto
(-1, 1) so utility and cost are comparable inside one objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "UtilityCoefficients",
    "DEFAULT_COEFFICIENTS",
    "emd",
    "skewed_distribution",
    "upsilon",
    "data_utility",
    "data_utility_derivatives",
    "norm_cost",
    "norm_cost_derivatives",
]


@dataclass(frozen=True)
class UtilityCoefficients:
    """Fitted coefficients of the accuracy-proxy utility curve.

    a1..a3 shape the sample-count saturation, a4..a6 the skew penalty.
    a5 is negative: the fit's peak sits at a small negative skew, so the
    curve is already slightly below its maximum at zero skew.
    """

    a1: float = 0.8862
    a2: float = 6.8382
    a3: float = 0.0006
    a4: float = 0.9172
    a5: float = -0.0231
    a6: float = 0.8366


DEFAULT_COEFFICIENTS = UtilityCoefficients()


def _check_distribution(p, name):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {p.shape}")
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} must sum to 1 (got {p.sum()!r})")
    return p


def emd(p_user, p_all) -> float:
    """L1 divergence sum_y |p_user(y) - p_all(y)| between label distributions.

    Both inputs are 1-D probability vectors over the same label set.  The
    result lies in [0, 2]; 0 means identical mixes, 2 disjoint support.
    """
    p_user = _check_distribution(p_user, "p_user")
    p_all = _check_distribution(p_all, "p_all")
    if p_user.shape != p_all.shape:
        raise ValueError("label distributions must share a label set")
    return float(np.abs(p_user - p_all).sum())


def skewed_distribution(p_all, target_emd):
    """Construct a distribution at L1 distance ``target_emd`` from ``p_all``.

    Mass target_emd / 2 is drained from the tail labels (last first) and
    piled onto label 0.  Raises if ``p_all`` cannot absorb the shift.
    """
    p_all = _check_distribution(p_all, "p_all")
    delta = target_emd / 2.0
    if delta < 0 or delta > p_all[1:].sum() + 1e-12:
        raise ValueError(f"target EMD {target_emd} not reachable from p_all")
    p = p_all.copy()
    remaining = delta
    for y in range(p.size - 1, 0, -1):
        take = min(p[y], remaining)
        p[y] -= take
        remaining -= take
        if remaining <= 0:
            break
    p[0] += delta
    return p


def upsilon(phi, coeffs: UtilityCoefficients = DEFAULT_COEFFICIENTS):
    """Skew factor of the utility curve; decreasing in the EMD level phi.

    phi may be a scalar or array in [0, 2]; the result lies in (0, a4].
    """
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < 0) or np.any(phi > 2):
        raise ValueError("EMD level must lie in [0, 2]")
    return coeffs.a4 * np.exp(-(((coeffs.a5 + phi) / coeffs.a6) ** 2))


def data_utility(phi, d_bar, coeffs: UtilityCoefficients = DEFAULT_COEFFICIENTS):
    """Accuracy proxy of training on d_bar samples with label skew phi.

    d_bar counts participating samples (fresh plus scaled history) and must
    be positive.  Increasing in d_bar, decreasing in phi, saturating at
    upsilon(phi).  The raw value may dip below 0 for tiny d_bar; callers
    that report utilities clamp to [0, 1], optimizers use the raw curve.
    """
    d_bar = np.asarray(d_bar, dtype=float)
    if np.any(d_bar <= 0):
        raise ValueError("sample count d_bar must be positive")
    ups = upsilon(phi, coeffs)
    return ups - coeffs.a1 * np.exp(-coeffs.a2 * (coeffs.a3 * d_bar) ** ups)


def data_utility_derivatives(
    phi, d_bar, coeffs: UtilityCoefficients = DEFAULT_COEFFICIENTS
):
    """Value, first and second derivative of data_utility w.r.t. d_bar.

    Broadcasts elementwise.  With g = a2 * (a3 * d_bar)**upsilon:
    d rho / d d_bar = a1 * exp(-g) * g', g' = g * upsilon / d_bar, and
    d2 rho = a1 * exp(-g) * (g'' - g'^2), g'' = g' * (upsilon - 1) / d_bar.
    The second derivative is negative wherever upsilon < 1: more data always
    helps, with diminishing returns.
    """
    d_bar = np.asarray(d_bar, dtype=float)
    if np.any(d_bar <= 0):
        raise ValueError("sample count d_bar must be positive")
    ups = upsilon(phi, coeffs)
    g = coeffs.a2 * (coeffs.a3 * d_bar) ** ups
    g1 = g * ups / d_bar
    g2 = g1 * (ups - 1.0) / d_bar
    decay = coeffs.a1 * np.exp(-g)
    value = ups - decay
    d1 = decay * g1
    d2 = decay * (g2 - g1 * g1)
    return value, d1, d2


def norm_cost(x, f0: float = 200.0):
    """Squash raw energy x onto (-1, 1): 2 / (1 + exp(-x / (2 f0))) - 1.

    Algebraically equal to tanh(x / (4 f0)), which is how it is evaluated
    (stable for large |x|).  f0 sets the energy scale that maps to mid-range
    output; norm_cost(0) = 0 and norm_cost(2 f0 ln 3) = 0.5.
    """
    if f0 <= 0:
        raise ValueError("normalization scale f0 must be positive")
    return np.tanh(np.asarray(x, dtype=float) / (4.0 * f0))


def norm_cost_derivatives(x, f0: float = 200.0):
    """Value, first and second derivative of norm_cost w.r.t. x.

    n' = (1 - n^2) / (4 f0) > 0 and n'' = -n (1 - n^2) / (8 f0^2), so the
    squash is strictly increasing and concave for x > 0.
    """
    n = norm_cost(x, f0)
    one_minus_sq = 1.0 - n * n
    d1 = one_minus_sq / (4.0 * f0)
    d2 = -n * one_minus_sq / (8.0 * f0 * f0)
    return n, d1, d2
