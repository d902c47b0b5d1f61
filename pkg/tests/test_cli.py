import json
from dataclasses import replace

import highspy
import numpy as np
import pytest

from mipdqn.bench import parse_state
from mipdqn.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, run
from mipdqn.config import load_config
from mipdqn.dispatch import DispatchContext, dispatch_step
from mipdqn.neural import forward
from mipdqn.profiles import load_csv, write_csv
from mipdqn.training import load_agent

STATE = {"t": 18, "pv": 0.0, "load": 420.0, "price": 9.0, "dg_prev": [60, 150, 200], "soc": [0.45]}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run(["synth-data", "--seed", "4", "--days", "35", "--out", str(root / "data.csv")]) == EXIT_OK
    cfg = {"training": {"epochs": 4, "hidden": [8, 8], "batch_size": 16, "buffer_capacity": 500},
           "data": {"csv": "data.csv"}, "bench": {"out": "runs"}}
    (root / "run.json").write_text(json.dumps(cfg))
    assert run(["train", "--config", str(root / "run.json"), "--seed", "1"]) == EXIT_OK
    return root


def test_synth_data_is_seeded(tmp_path):
    assert run(["synth-data", "--seed", "9", "--days", "3", "--out", str(tmp_path)]) == EXIT_OK
    assert run(["synth-data", "--seed", "9", "--days", "3", "--out", str(tmp_path / "b.csv")]) == EXIT_OK
    assert (tmp_path / "profiles.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert len(load_csv(tmp_path / "b.csv")) == 3


def test_bad_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"training": {"epocks": 3}}))
    assert run(["train", "--config", str(bad)]) == EXIT_CONFIG
    assert "epocks" in capsys.readouterr().err
    assert run(["evaluate", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert run(["evaluate", "--checkpoint", str(tmp_path / "nothing"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_unknown_command_and_seed_range():
    with pytest.raises(SystemExit):
        run(["fly"])
    with pytest.raises(SystemExit):
        run(["train", "--seed", str(2 ** 64)])


def test_train_writes_checkpoint(workspace):
    ckpt = workspace / "runs" / "seed_1"
    assert (ckpt / "q_net.json").exists() and (ckpt / "curves.csv").exists()


def test_evaluate_reports_error(workspace, capsys):
    ckpt = workspace / "runs" / "seed_1"
    code = run(["evaluate", "--config", str(workspace / "run.json"), "--checkpoint", str(ckpt),
                "--days", "1", "--out", str(workspace / "ev")])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "mip-dqn" in out and "error=" in out
    assert (workspace / "ev" / "report.csv").exists()


def test_infeasible_day_exits_4(workspace, tmp_path):
    days = load_csv(workspace / "data.csv")
    test_days = [d for d in days if d.day.day > 21]
    bad = replace(test_days[0], load=[5000.0 if h == 3 else v for h, v in enumerate(test_days[0].load)])
    write_csv(tmp_path / "bad.csv", [bad if d is test_days[0] else d for d in days])
    cfg = json.loads((workspace / "run.json").read_text())
    cfg["data"]["csv"] = str(tmp_path / "bad.csv")
    (tmp_path / "run.json").write_text(json.dumps(cfg))
    code = run(["evaluate", "--config", str(tmp_path / "run.json"), "--days", "1",
                "--checkpoint", str(workspace / "runs" / "seed_1"), "--out", str(tmp_path / "o")])
    assert code == EXIT_INFEASIBLE


def test_invalid_state_exits_2(workspace, tmp_path):
    (tmp_path / "s.json").write_text(json.dumps({**STATE, "soc": [1.5]}))
    code = run(["export-mip", "--config", str(workspace / "run.json"), "--checkpoint",
                str(workspace / "runs" / "seed_1"), "--state", str(tmp_path / "s.json"), "--out", str(tmp_path)])
    assert code == EXIT_CONFIG


def test_exported_model_solves_to_internal_action(workspace, tmp_path):
    (tmp_path / "s.json").write_text(json.dumps(STATE))
    args = ["export-mip", "--config", str(workspace / "run.json"), "--checkpoint",
            str(workspace / "runs" / "seed_1"), "--state", str(tmp_path / "s.json")]
    assert run(args + ["--out", str(tmp_path / "a.lp")]) == EXIT_OK
    assert run(args + ["--out", str(tmp_path / "b.lp")]) == EXIT_OK
    assert (tmp_path / "a.lp").read_bytes() == (tmp_path / "b.lp").read_bytes()
    names = json.loads((tmp_path / "a.lp.names.json").read_text())

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    assert h.readModel(str(tmp_path / "a.lp")) == highspy.HighsStatus.kOk
    h.run()
    assert h.getModelStatus() == highspy.HighsModelStatus.kOptimal
    # The file names columns v<k> in model order; the sidecar maps k to the semantic name.
    value = dict(zip(h.getLp().col_names_, h.getSolution().col_value))
    pos = {v["name"]: k for k, v in enumerate(names["variables"])}
    external = np.array([value[f"v{pos[n]}"] for n in names["inputs"] if n.startswith("action_")])

    bc = load_config(workspace / "run.json")
    q, _, fmap = load_agent(workspace / "runs" / "seed_1", bc.system)
    state = parse_state(STATE, bc.system)
    internal = dispatch_step(DispatchContext(q, bc.system, fmap, state=state))
    s = fmap.featurize(state)
    assert float(forward(q, np.concatenate([s, external]))[0]) == pytest.approx(internal.predicted_q, abs=1e-6)
    assert external == pytest.approx(internal.a_norm, abs=1e-5)
