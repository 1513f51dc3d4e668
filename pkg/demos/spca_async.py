"""Sparse PCA with stale gradients: the stationarity measure still vanishes.

The loss is nonconvex, so EDANNI's master needs rho above its local
Lipschitz bound (here twice that bound).  Starting from a random unit
vector, we run with Bernoulli arrivals and staleness up to 3, then report
when the proximal-gradient norm first drops below each tolerance and how
large the last few steps were.

    python demos/spca_async.py
"""

import numpy as np

from edanni import (ArrivalModel, InexactnessSpec, RunConfig, SpcaGenSpec, generate_spca,
                    run_edanni, split_probs)
from edanni.telemetry import fit_sublinear_bound, trailing_max


def main():
    prob = generate_spca(SpcaGenSpec(m=3, n=5, p=30, q=60, nnz=60, theta=0.1, seed=0))
    x0 = np.random.default_rng(1).standard_normal(prob.p)
    x0 /= np.linalg.norm(x0)
    rho = 2 * prob.losses[0].lipschitz_bound
    arrival = ArrivalModel("bernoulli", 3, split_probs(3), seed=0)
    grid = [1e-1, 1e-2, 1e-3, 1e-4]

    for label, inexact in (("exact master solves", InexactnessSpec()),
                           ("injected error, c1 = 0.1", InexactnessSpec(0.1, "injected", seed=0))):
        res = run_edanni(prob, RunConfig(rho=rho, max_rounds=20000, target_pg_norm=1e-10,
                                         arrival=arrival, x0=x0, inexact=inexact))
        fit = fit_sublinear_bound(res.records, grid)
        tail = trailing_max([r.delta_norm for r in res.records[1:]], 10)[-1]
        print(f"{label}: {res.rounds} rounds, final objective {res.records[-1].objective:.6f}")
        for eps in grid:
            print(f"  first round with pg_norm < {eps:g}: {fit.table[eps]}")
        print(f"  max over T of T(eps)*eps = {fit.C_hat:.3f}")
        print(f"  largest of the last 10 steps: {tail:.2e}")
        print(f"  nonzeros in the solution: {int(np.sum(np.abs(res.x) > 1e-10))} of {prob.p}\n")


if __name__ == "__main__":
    main()
