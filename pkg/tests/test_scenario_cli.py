import json
import os

import numpy as np
import pytest

from gridjac.cli import main
from gridjac.errors import ScenarioError
from gridjac.scenario import (REPRO_NAMES, Scenario, data_path,
                              packaged_scenario_path, run_scenario)
from gridjac.swing import Trajectory


def write_scenario(path, **kw):
    d = {
        "name": kw.pop("name", "tiny"),
        "case": kw.pop("case", "wscc9.json"),
        "dt": 0.001,
        "t_end": kw.pop("t_end", 2.0),
        "record_every": 10,
        "seed": kw.pop("seed", 5),
        "events": kw.pop("events", []),
        "windows": kw.pop("windows", []),
        "analyses": kw.pop("analyses", {}),
    }
    d.update(kw)
    with open(path, "w") as f:
        json.dump(d, f)
    return path


class TestScenarioParsing:
    def test_packaged_scenarios_parse(self):
        for name in REPRO_NAMES:
            scn = Scenario.from_json(packaged_scenario_path(name))
            assert scn.name == name
            assert os.path.exists(scn.case_path)

    def test_window_straddling_event_refused(self, tmp_path):
        p = write_scenario(
            tmp_path / "s.json",
            events=[{"t": 1.0, "type": "set_pm", "gen": "G1", "value": 0.7}],
            windows=[[0.0, 2.0]])
        scn = Scenario.from_json(p)
        with pytest.raises(ScenarioError, match="straddles.*t=1.0"):
            run_scenario(scn, str(tmp_path / "out"))

    def test_straddle_override_flag(self, tmp_path):
        p = write_scenario(
            tmp_path / "s.json",
            events=[{"t": 1.0, "type": "set_pm", "gen": "G1", "value": 0.7}],
            windows=[[0.0, 2.0]], allow_window_events=True)
        res = run_scenario(Scenario.from_json(p), str(tmp_path / "out"),
                           make_figures=False)
        assert res.values["status"] == "ok"

    def test_unknown_repro_name(self):
        with pytest.raises(ScenarioError, match="valid names"):
            packaged_scenario_path("bogus")


class TestRunScenario:
    def test_noise_free_no_analyses(self, tmp_path):
        p = write_scenario(tmp_path / "s.json", sigma=0.0)
        res = run_scenario(Scenario.from_json(p), str(tmp_path / "out"),
                           make_figures=False)
        traj = Trajectory.from_csv(os.path.join(res.out_dir,
                                                "trajectory.csv"))
        # flat signals around the equilibrium
        assert np.max(np.abs(traj.data - traj.data[0])) < 1e-8
        assert not os.path.exists(os.path.join(res.out_dir,
                                               "estimates.json"))

    def test_outputs_reparse(self, tmp_path):
        p = write_scenario(
            tmp_path / "s.json", t_end=20.0,
            windows=[[0.0, 20.0]],
            analyses={"estimate": True, "modal": True,
                      "prony": {"signal": "dtilde_1", "window": [0.0, 20.0],
                                "order": 6, "preprocess": "none"}})
        res = run_scenario(Scenario.from_json(p), str(tmp_path / "out"),
                           make_figures=True)
        traj = Trajectory.from_csv(os.path.join(res.out_dir,
                                                "trajectory.csv"))
        assert traj.n_samples == 2001
        with open(os.path.join(res.out_dir, "estimates.json")) as f:
            doc = json.load(f)
        K = np.array(doc["windows"][0]["K_star"])
        assert K.shape == (2, 2)
        modes = np.loadtxt(os.path.join(res.out_dir, "modes.csv"),
                           delimiter=",", skiprows=1,
                           usecols=(1, 2, 3, 4))
        assert modes.shape[1] == 4
        prony = np.loadtxt(os.path.join(res.out_dir, "prony.csv"),
                           delimiter=",", skiprows=1)
        assert prony.shape[1] == 7
        for fig in ("trajectory.png", "modes.png", "prony.png"):
            assert os.path.getsize(
                os.path.join(res.out_dir, "figures", fig)) > 0
        assert os.path.exists(os.path.join(res.out_dir, "report.txt"))

    def test_byte_identical_reruns(self, tmp_path):
        p = write_scenario(tmp_path / "s.json", t_end=10.0,
                           windows=[[0.0, 10.0]],
                           analyses={"estimate": True})
        blobs = []
        for sub in ("a", "b"):
            res = run_scenario(Scenario.from_json(p),
                               str(tmp_path / sub), make_figures=False)
            data = {}
            for fn in ("trajectory.csv", "estimates.json", "report.txt"):
                with open(os.path.join(res.out_dir, fn), "rb") as f:
                    data[fn] = f.read()
            blobs.append(data)
        assert blobs[0] == blobs[1]

    def test_repro_rerun_byte_identical(self, tmp_path):
        from gridjac.scenario import repro
        blobs = []
        for sub in ("r1", "r2"):
            res = repro("9bus", str(tmp_path / sub), make_figures=False)
            data = {}
            for fn in ("trajectory.csv", "estimates.json", "modes.csv",
                       "participation.csv", "report.txt"):
                with open(os.path.join(res.out_dir, fn), "rb") as f:
                    data[fn] = f.read()
            blobs.append(data)
        assert blobs[0] == blobs[1]

    def test_seed_override_changes_output(self, tmp_path):
        p = write_scenario(tmp_path / "s.json", t_end=5.0)
        r1 = run_scenario(Scenario.from_json(p), str(tmp_path / "o1"),
                          make_figures=False)
        r2 = run_scenario(Scenario.from_json(p), str(tmp_path / "o2"),
                          seed=99, make_figures=False)
        t1 = Trajectory.from_csv(os.path.join(r1.out_dir, "trajectory.csv"))
        t2 = Trajectory.from_csv(os.path.join(r2.out_dir, "trajectory.csv"))
        assert not np.array_equal(t1.data, t2.data)


class TestCli:
    def test_simulate_and_stage_commands(self, tmp_path):
        scn = write_scenario(tmp_path / "s.json", t_end=20.0,
                             windows=[[0.0, 20.0]],
                             analyses={"estimate": True})
        out = str(tmp_path / "out")
        assert main(["simulate", "--scenario", str(scn), "--out", out,
                     "--no-figures"]) == 0
        traj = os.path.join(out, "trajectory.csv")
        case = str(data_path("wscc9.json"))

        out2 = str(tmp_path / "est")
        assert main(["estimate", "--traj", traj, "--case", case,
                     "--window", "0,20", "--out", out2]) == 0
        est = os.path.join(out2, "estimates.json")
        assert main(["modal", "--estimates", est, "--out",
                     str(tmp_path / "modal")]) == 0
        assert main(["prony", "--traj", traj, "--signal", "dtilde_1",
                     "--window", "0,20", "--order", "6", "--out",
                     str(tmp_path / "prony")]) == 0
        assert main(["damping", "--traj", traj, "--case", case,
                     "--window", "0,20", "--out",
                     str(tmp_path / "damp")]) == 0
        assert os.path.exists(os.path.join(str(tmp_path / "damp"),
                                           "damping.csv"))

    def test_packaged_case_name_resolution(self, tmp_path, monkeypatch):
        scn = write_scenario(tmp_path / "s.json", t_end=5.0)
        out = str(tmp_path / "out")
        main(["simulate", "--scenario", str(scn), "--out", out,
              "--no-figures"])
        monkeypatch.chdir(tmp_path)   # bare case names work from anywhere
        assert main(["estimate", "--traj", os.path.join(out, "trajectory.csv"),
                     "--case", "wscc9.json", "--window", "0,5",
                     "--out", str(tmp_path / "e")]) == 0

    def test_redispatch_command(self, tmp_path):
        case = str(data_path("newengland39.json"))
        out = str(tmp_path / "rd")
        assert main(["redispatch", "--case", case, "--gen", "G1",
                     "--xdprime", "0.426998", "--step", "1.0",
                     "--out", out]) == 0
        with open(os.path.join(out, "redispatch.json")) as f:
            doc = json.load(f)
        assert doc["ranking_machines"][0] == 1
        assert doc["lambda_c_after"]["re"] < doc["critical_eigenvalue"]["re"]

    def test_unknown_repro_exits_2(self, capsys):
        assert main(["repro", "bogus", "--out", "/tmp/x"]) == 2
        err = capsys.readouterr().err
        for name in REPRO_NAMES:
            assert name in err

    def test_missing_file_exits_2(self):
        assert main(["estimate", "--traj", "/nonexistent.csv", "--case",
                     str(data_path("wscc9.json")), "--window", "0,1",
                     "--out", "/tmp/x"]) == 2

    def test_numerical_failure_exits_3(self, tmp_path):
        scn = write_scenario(tmp_path / "s.json", t_end=1.0)
        out = str(tmp_path / "out")
        main(["simulate", "--scenario", str(scn), "--out", out,
              "--no-figures"])
        # two-sample window: angle covariance is singular
        rc = main(["estimate", "--traj", os.path.join(out, "trajectory.csv"),
                   "--case", str(data_path("wscc9.json")),
                   "--window", "0,0.01", "--out", str(tmp_path / "e")])
        assert rc == 3

    def test_band_failure_exits_4(self, tmp_path):
        # a '9bus'-named scenario with windows far too short to pass the
        # registered accuracy bands
        scn = write_scenario(
            tmp_path / "s.json", name="9bus", t_end=6.0,
            events=[{"t": 3.01, "type": "set_xd_prime", "gen": "G1",
                     "value": 0.1824}],
            windows=[[0.0, 3.0], [3.02, 6.0]],
            analyses={"estimate": True, "modal": True})
        out = str(tmp_path / "out")
        scn_obj = Scenario.from_json(scn)
        res = run_scenario(scn_obj, out, make_figures=False)
        assert not res.passed
        rc = main(["simulate", "--scenario", str(scn), "--out", out,
                   "--no-figures"])
        assert rc == 0   # simulate reports but does not gate
        # repro gates on the checks; emulate via the repro path
        from gridjac import cli
        import gridjac.scenario as sc

        class FakeArgs:
            pass
        FakeArgs.name = "9bus"
        FakeArgs.out = out
        FakeArgs.seed = None
        FakeArgs.no_figures = True
        orig = sc.packaged_scenario_path
        sc.packaged_scenario_path = lambda name: scn
        try:
            rc = cli.cmd_repro(FakeArgs())
        finally:
            sc.packaged_scenario_path = orig
        assert rc == 4
