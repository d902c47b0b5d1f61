"""The full pipeline through the ``mipdqn`` command line.

Each step below is what a shell user would type, run in-process. A small run
configuration keeps it quick: generate data, train, compare the MIP
dispatcher with the raw policy and the perfect-forecast oracle, and export
one hour's max-Q model as an LP file for an outside solver.
"""

import json
import tempfile
from pathlib import Path

from mipdqn.cli import run


def sh(*argv):
    print("$ mipdqn", " ".join(argv), flush=True)
    code = run(list(argv))
    print(f"[exit {code}]\n", flush=True)


def main():
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        config = {"training": {"epochs": 60, "hidden": [32, 32]}, "data": {"csv": "profiles.csv"}}
        (root / "run.json").write_text(json.dumps(config))
        cfg = str(root / "run.json")

        sh("synth-data", "--seed", "1", "--days", "60", "--out", str(root / "profiles.csv"))
        sh("train", "--config", cfg, "--seed", "0", "--out", str(root / "agent"))
        sh("compare", "--config", cfg, "--checkpoint", str(root / "agent" / "seed_0"),
           "--days", "2", "--out", str(root / "compare"))
        print("report.csv:")
        print((root / "compare" / "report.csv").read_text())

        state = {"t": 18, "pv": 0.0, "load": 420.0, "price": 9.0, "dg_prev": [60, 150, 200], "soc": [0.45]}
        (root / "state.json").write_text(json.dumps(state))
        sh("export-mip", "--config", cfg, "--checkpoint", str(root / "agent" / "seed_0"),
           "--state", str(root / "state.json"), "--out", str(root / "hour18.lp"))
        sh("evaluate", "--config", str(root / "missing.json"))


if __name__ == "__main__":
    main()
