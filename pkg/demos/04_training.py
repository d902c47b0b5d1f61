"""Training the Q-network and policy.

Episodes are single days. A deterministic tanh policy proposes actions, with
Gaussian exploration noise that decays over the first half of training; the
Q-network is fitted to one-step Bellman targets from slowly updated target
copies. The learning curve shows episode reward, cost and power unbalance.
The run below is short; the default is 500 episodes.
"""

from mipdqn import TrainConfig, default_system, train
from mipdqn.microgrid import RewardParams
from mipdqn.profiles import split_train_test, synthesize


def main():
    cfg = default_system()
    data = split_train_test(synthesize(seed=0, n_days=90))
    tc = TrainConfig(epochs=120, hidden=(64, 64, 64), seed=0)
    result = train(cfg, data.train, tc, RewardParams(sigma1=0.01, sigma2=20.0))

    print("episode   reward      cost $   unbalance kW")
    for row in result.curves[::10]:
        print(f"{row.episode:7d} {row.reward_mean:9.2f} {row.cost_mean:11.1f} {row.unbalance_kw:12.1f}")
    first = sum(r.unbalance_kw for r in result.curves[:10]) / 10
    last = sum(r.unbalance_kw for r in result.curves[-10:]) / 10
    print(f"\nmean unbalance: first 10 episodes {first:.1f} kW, last 10 {last:.1f} kW")
    print("the policy alone still violates the balance; the MIP dispatcher is what removes that")


if __name__ == "__main__":
    main()
