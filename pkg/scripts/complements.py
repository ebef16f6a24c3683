"""Pure-bundling certificate for uniform goods as complementarity k grows."""

import numpy as np

from bundleopt import certify_pure_2d, iid_model, make_marginal

model = iid_model(make_marginal("uniform", {}))
for k in np.arange(1.6, 2.01, 0.05):
    cert = certify_pure_2d(model, k=float(k))
    print(f"k={k:.2f}  necessary residual {cert.residuals['necessary']:+.4f}  {cert.verdict.value}")
print(f"threshold 1 + sqrt(2/3) = {1 + np.sqrt(2 / 3):.4f}")
