"""The untracked method's consensus error plateaus at an O(alpha^2) level.

Running decentralized projected descent with constant steps alpha and
alpha/2 on the same PCA instance: the plateau of the squared consensus
error drops by roughly 4x when the step halves, the quadratic scaling the
consensus analysis predicts.
"""

import numpy as np

import decmanopt as dm


def plateau(alpha, iters=2000):
    problem, truth = dm.gen_pca_data(8, 1000, 10, 5, 0.8, seed=7)
    mixing = dm.metropolis_weights(dm.build_graph("er", 8, seed=3, p=0.6))
    system = dm.init_system(problem, "identical", seed=11)
    cfg = dm.RunConfig(algorithm="dprgd",
                       schedule=dm.StepSchedule("constant", alpha),
                       max_iters=iters, trace_every=10)
    trace = dm.run(cfg, problem, mixing, system, truth)
    ces = np.array([r.consensus_error for r in trace.records])
    return float(np.median(ces[int(0.9 * len(ces)):]))


def main():
    alphas = [0.8, 0.4, 0.2, 0.1]
    plateaus = [plateau(a) for a in alphas]
    print(f"{'alpha':>6}  {'plateau consensus error':>24}")
    for a, p in zip(alphas, plateaus):
        print(f"{a:6.2f}  {p:24.3e}")
    print("\nhalving ratios (target 4):",
          "  ".join(f"{plateaus[i] / plateaus[i + 1]:.2f}" for i in range(len(alphas) - 1)))


if __name__ == "__main__":
    main()
