"""The perfect-forecast benchmark.

Knowing the whole day in advance, the cheapest feasible schedule is a single
optimisation over all 24 hours. The quadratic fuel cost is replaced by its
tightest convex piecewise-linear over-estimate, so the model cost sits a known
small amount above the true cost of the schedule it returns. An independent
audit replays the schedule through the unit formulas.
"""

from mipdqn import HorizonProblem, default_system, solve_horizon, validate_schedule
from mipdqn.profiles import synthesize


def main():
    cfg = default_system()
    day = synthesize(seed=2, n_days=1)[0]
    for k in (2, 8, 32):
        prob = HorizonProblem(cfg, day, (0.5,), k_seg=k)
        s = solve_horizon(prob)
        print(f"k_seg={k:2d}: true cost {s.total_cost:9.2f} $, model cost {s.model_cost:9.2f} $, "
              f"bound on the gap {prob.linearization_bound():.2f} $")

    prob = HorizonProblem(cfg, day, (0.5,))
    sched = solve_horizon(prob)
    audit = validate_schedule(sched, prob)
    print(f"\naudit: residuals {audit.residuals}")
    print("hour  DG kW                      storage  grid   SOC")
    for t in range(0, 24, 4):
        print(f"{t:4d}  {sched.p_dg[t].round(1)!s:26s} {sched.p_ess[t, 0]:7.1f} {sched.p_grid[t]:6.1f} "
              f"{sched.soc[t + 1, 0]:.3f}")


if __name__ == "__main__":
    main()
