"""Solve the two-good uniform case and cross-check it against the LP oracle."""

import numpy as np

from bundleopt import certify_mixed_2d, iid_model, lp_oracle, make_marginal, solve_two_good


def main():
    model = iid_model(make_marginal("uniform", {}))
    res = solve_two_good(model, 1.0)
    print(f"class {res.menu.label}, revenue {res.revenue:.6f}")
    for e in res.menu.entries:
        print(f"  bundle ({e.q1:.3f}, {e.q2:.3f}) at {e.price:.6f}")
    print(f"closed form bundle price {(4 - np.sqrt(2)) / 3:.6f}")
    print("mixed-bundling certificate:", certify_mixed_2d(model).verdict.value)
    for n in (6, 11):
        print(f"LP on {n}x{n} lattice: {lp_oracle(model, n, 1.0).revenue:.6f}")


if __name__ == "__main__":
    main()
