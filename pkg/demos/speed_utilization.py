"""Letting workers fall behind keeps them busy.

Ten machines get compute costs drawn uniformly from [1, 10] virtual seconds.
With tau = 0 every round waits for the slowest one; larger tau lets the
master proceed with whoever has finished.  Utilization is compute time over
compute plus idle time, averaged over the workers.

    python demos/speed_utilization.py
"""

from edanni import ArrivalModel, RunConfig, generate_strongly_convex_quadratic, run_edanni


def main():
    prob = generate_strongly_convex_quadratic(10, 5, 1.0, 0)
    rho = 8 * prob.losses.lipschitz_bound
    print("seed  " + "  ".join(f"tau={tau}" for tau in (0, 1, 2, 3)) + "   virtual time at tau=0 / 3")
    for seed in range(3):
        utils, clocks = [], []
        for tau in (0, 1, 2, 3):
            res = run_edanni(prob, RunConfig(rho=rho, max_rounds=200, target_pg_norm=1e-300,
                                             arrival=ArrivalModel("speed", tau, seed=seed)))
            utils.append(res.time_table.mean_utilization)
            clocks.append(res.records[-1].virtual_time)
        print(f"{seed:4d}  " + "  ".join(f"{u:5.3f}" for u in utils)
              + f"   {clocks[0]:8.1f} / {clocks[-1]:8.1f}")


if __name__ == "__main__":
    main()
