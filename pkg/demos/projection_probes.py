"""Numerical probes of the projection inequalities behind the analysis.

Two properties of the nearest-point projection onto the Stiefel manifold
drive the consensus rate and the descent lemmas:

* a 2-Lipschitz bound inside the half-radius tube, and
* second-order agreement with the tangent projection,
  ||P(x+u) - x - P_T(u)|| = O(||u||^2).

Both are measured on random samples, together with the quadratic gap
between the Euclidean mean of a cluster and its projection (the
induced-mean inequality).
"""

import numpy as np

import decmanopt as dm
from decmanopt.manifolds import check_projection_lipschitz

def main():
    spec = dm.stiefel(10, 5)
    report = check_projection_lipschitz(spec, trials=1000, noise_scale=0.5, seed=0)
    print(f"perturbations up to the tube radius 0.5 ({report.trials} trials):")
    print(f"  max Lipschitz ratio  {report.max_ratio_lip:.4f}   (provable bound 2)")
    print(f"  max quadratic ratio  {report.max_ratio_quad:.4f}\n")

    print("quadratic ratio across shrinking perturbation scales (should stay flat):")
    for scale in (1e-1, 1e-2, 1e-3, 1e-4):
        rep = check_projection_lipschitz(spec, trials=300, noise_scale=scale, seed=1)
        print(f"  |u| <= {scale:7.0e}:  {rep.max_ratio_quad:.4f}")

    print("\ninduced-mean gap ||xbar - xhat|| / mean squared scatter (quadratic order):")
    rng = np.random.default_rng(2)
    x0 = spec.random_point(rng)
    dirs = np.stack([spec.random_tangent(x0, rng, 1.0) for _ in range(8)])
    for delta in (0.2, 0.1, 0.05):
        points = spec.project_stack(x0 + delta * dirs)
        x_hat, x_bar = dm.induced_mean(spec, points)
        ratio = np.linalg.norm(x_bar - x_hat) / dm.consensus_error(points, x_bar)
        print(f"  scatter {delta:4.2f}:  {ratio:.4f}")


if __name__ == "__main__":
    main()
