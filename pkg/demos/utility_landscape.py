"""Walk the data-utility surface.

Prints the accuracy predictor as a function of label skew and dataset
size: the size curve saturating toward its ceiling, the skew curve with
its small bump just above zero, and the squash that turns raw energy
into a bounded per-server cost.
"""

import numpy as np

from diten.utility import (
    DEFAULT_COEFFICIENTS,
    data_utility,
    norm_cost,
    upsilon,
)


def main():
    coef = DEFAULT_COEFFICIENTS
    print("skew ceiling upsilon(phi) and utility rho(phi, samples)")
    print(f"{'phi':>6} {'ceiling':>10} {'rho@200':>10} {'rho@2000':>10}")
    for phi in (0.0, 0.0231, 0.1, 0.2, 0.4, 0.6, 1.0):
        print(
            f"{phi:6.3f} {upsilon(phi):10.6f} "
            f"{data_utility(phi, 200.0):10.6f} "
            f"{data_utility(phi, 2000.0):10.6f}"
        )
    bump = -coef.a5
    print(f"\nthe ceiling peaks at phi = {bump:.4f}, not at zero:")
    print(f"  rho(0, 2000)      = {data_utility(0.0, 2000.0):.9f}")
    print(f"  rho({bump:.4f}, 2000) = {data_utility(bump, 2000.0):.9f}")

    print("\nutility saturates in the sample count (phi = 0.2):")
    for d in (50, 200, 1000, 2000, 10000, 100000):
        print(f"  samples {d:>7d}: rho = {data_utility(0.2, float(d)):.6f}")

    print("\nenergy squash Norm(x) = tanh(x / (4 f0)), f0 = 200:")
    for x in (0.0, 100.0, 2.0 * 200.0 * np.log(3.0), 2000.0, 10000.0):
        print(f"  Norm({x:8.1f}) = {norm_cost(x, 200.0):.6f}")
    print("the landmark 2 f0 ln 3 maps exactly to one half")


if __name__ == "__main__":
    main()
