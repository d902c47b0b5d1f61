"""One hour of the microgrid, by hand.

The environment takes a requested action (three DG set-points and a storage
power), clips it to what the units can physically do, sends whatever is left
over to the grid up to its limit, and charges for fuel and exchange. Anything
the grid cannot absorb is power unbalance, and the reward penalises it.
"""

from mipdqn import Action, MicrogridEnv, default_system
from mipdqn.microgrid import dg_cost, exchange_cost, soc_update
from mipdqn.profiles import synthesize


def main():
    cfg = default_system()
    print("DG units (a, b, c, p_min, p_max, ramp):")
    for u in cfg.dgs:
        print(f"  {u.a_cost:g} {u.b_cost:g} {u.c_cost:g}  [{u.p_min:g}, {u.p_max:g}] kW  ramp {u.ramp_up:g} kW/h")
    print(f"storage: {cfg.esss[0].capacity:g} kWh, +-{cfg.esss[0].p_limit:g} kW, efficiency {cfg.esss[0].efficiency}")
    print(f"grid exchange limited to +-{cfg.grid_limit:g} kW\n")

    # The unit formulas on their own.
    print("fuel cost of DG1 at 100 kW:", dg_cost(cfg.dgs[0], 100.0))
    print("importing 10 kW at 1 $/kWh:", exchange_cost(10.0, 1.0, cfg.sell_coeff))
    print("exporting 10 kW at 1 $/kWh:", exchange_cost(-10.0, 1.0, cfg.sell_coeff))
    print("SOC after charging 100 kW for an hour from 0.5:", soc_update(cfg.esss[0], 0.5, 100.0, 1.0), "\n")

    day = synthesize(seed=0, n_days=1)[0]
    env = MicrogridEnv(cfg)
    state = env.reset(day, init_soc=(0.5,))
    print(f"{day.day} hour 0: load {state.load:.1f} kW, pv {state.pv:.1f} kW, price {state.price:.3f} $/kWh")

    # Ask DG1 for far more than its ramp allows; the environment clips it.
    out = env.step(Action(p_dg=(150.0, 50.0, 100.0), p_ess=(-20.0,)))
    print("requested DG1 150 kW, executed", out.executed.p_dg[0], "kW (ramp from p_min)")
    print(f"grid {out.grid_power:.1f} kW, unbalance {out.unbalance:.1f} kW, cost {out.operating_cost:.2f} $, "
          f"reward {out.reward:.2f}")


if __name__ == "__main__":
    main()
