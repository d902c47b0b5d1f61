"""Synthetic load, PV and price profiles.

Days are generated from a seeded generator with seasonal PV and load levels
and a time-of-use tariff. Days 1-21 of each month are used for training and
the rest for testing. Profiles round-trip through a plain CSV file so real
data can be dropped in instead.
"""

import tempfile
from pathlib import Path

import numpy as np

from mipdqn.profiles import load_csv, split_train_test, synthesize, write_csv


def main():
    days = synthesize(seed=7, n_days=365)
    data = split_train_test(days)
    print(f"{len(days)} days -> {len(data.train)} train, {len(data.test)} test")

    summer = [d for d in days if d.day.month == 7]
    winter = [d for d in days if d.day.month == 1]
    noon = lambda ds: np.mean([d.pv[12] for d in ds])
    print(f"mean PV at noon: July {noon(summer):.1f} kW, January {noon(winter):.1f} kW")

    d = days[0]
    print("\nhour  load    pv   price")
    for h in range(0, 24, 3):
        print(f"{h:4d} {d.load[h]:6.1f} {d.pv[h]:5.1f} {d.price[h]:6.3f}")

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "profiles.csv"
        write_csv(path, days[:10])
        back = load_csv(path)
        same = all(np.allclose(a.load, b.load) and np.allclose(a.pv, b.pv) for a, b in zip(days, back))
        print(f"\nwrote and re-read {len(back)} days, identical: {same}")


if __name__ == "__main__":
    main()
