"""Follow the optimal menu of truncated-Pareto goods as eta grows."""

import numpy as np

from bundleopt import certify_pure_2d, iid_model, make_marginal, solve_two_good


def main():
    for eta in np.arange(2.5, 3.0001, 0.1):
        model = iid_model(make_marginal("trunc_pareto", {"eta": float(eta)}))
        res = solve_two_good(model, 1.0)
        cert = certify_pure_2d(model)
        print(f"eta={eta:.1f}  {res.menu.label:<22} revenue {res.revenue:.6f}  pure2d {cert.verdict.value}")


if __name__ == "__main__":
    main()
