import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from dissemination import cli, transient_means
from dissemination.applications.wealth import build_wealth_spec, transient_preset
from dissemination.scenario import ScenarioError, build_spec, load_scenario, parse_scenario, spec_to_dict

STORAGE = {
    "model": {"type": "preset", "name": "storage", "params": {"lam": 1.0, "gamma": 2.0}},
    "run": {"t_end": 2.0, "step": 0.01, "sample_times": [0.0, 0.5, 1.0, 2.0]},
    "simulate": {"runs": 2000, "seed": 7},
}

CUSTOM = {
    "model": {
        "type": "custom",
        "n_agents": 2,
        "chain": {"Q": [[-0.5, 0.5], [0.3, -0.3]], "initial": 0},
        "arrivals": [{"targets": [0], "rates": [1.0, 0.4]}],
        "shock_rates": [0.8, 0.6],
        "kernels": [
            [{"type": "multinomial_leak", "probs": [0.5, 0.3]},
             {"type": "amplified", "alpha": 0.3, "inner": {"type": "multinomial_leak", "probs": [0.3, 0.3]}}],
            [{"type": "table", "support": [[[0, 0], 0.3], [[1, 0], 0.3], [[0, 1], 0.3], [[1, 1], 0.1]]},
             {"type": "multinomial_leak", "probs": [0.2, 0.6]}],
        ],
        "initial_wealth": [1, 0],
    },
    "run": {"t_end": 1.0, "step": 0.01, "sample_times": [0.0, 1.0]},
    "oracle": {"cap": [12, 12]},
}


def write(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


# parsing

def test_minimal_storage_parses():
    sc = parse_scenario({"model": {"type": "preset", "name": "storage", "params": {"lam": 1.0}}})
    assert sc.run == {} and build_spec(sc).n_agents == 2


def test_unknown_key_pointer():
    doc = json.loads(json.dumps(STORAGE))
    doc["model"]["params"]["gamma_typo"] = 1.0
    with pytest.raises(ScenarioError) as err:
        parse_scenario(doc)
    assert ("/model/params/gamma_typo", "unknown key 'gamma_typo'") in err.value.errors


def test_nested_kernel_error_pointer():
    doc = json.loads(json.dumps(CUSTOM))
    doc["model"]["kernels"][1][0]["support"][0][1] = "x"
    with pytest.raises(ScenarioError) as err:
        parse_scenario(doc)
    assert any(p.startswith("/model/kernels/1/0") for p, _ in err.value.errors)


def test_non_finite_rejected():
    doc = json.loads(json.dumps(STORAGE))
    doc["model"]["params"]["lam"] = float("inf")
    with pytest.raises(ScenarioError) as err:
        parse_scenario(doc)
    assert any(p == "/model/params/lam" for p, _ in err.value.errors)


def test_wealth_preset_builds_transient_spec():
    sc = parse_scenario({"model": {"type": "preset", "name": "wealth", "params": {"n_agents": 30}}})
    spec = build_spec(sc)
    ref = build_wealth_spec(transient_preset(30))
    a = transient_means(spec, 5.0, 0.01).m[-1]
    b = transient_means(ref, 5.0, 0.01).m[-1]
    np.testing.assert_array_equal(a, b)


def test_wealth_preset_with_leaks():
    params = {"n_agents": 30, "q12": 0.01, "q21": 0.05, "lam": [3, 1], "gamma": [2, 1], "p": [0.3, 0.6],
              "leader_leak": [0.05, 0.01], "follower_leak": [0.05, 0.10]}
    spec = build_spec(parse_scenario({"model": {"type": "preset", "name": "wealth", "params": params}}))
    ref = build_wealth_spec(transient_preset(30))
    np.testing.assert_allclose(spec.shocks[0].mean_matrices(), ref.shocks[0].mean_matrices(), atol=1e-15)


def test_custom_roundtrip():
    spec = build_spec(parse_scenario(CUSTOM))
    again = build_spec(parse_scenario({"model": spec_to_dict(spec)}))
    np.testing.assert_array_equal(transient_means(spec, 1.0, 0.1).m, transient_means(again, 1.0, 0.1).m)


def test_load_scenario_file(tmp_path):
    sc = load_scenario(write(tmp_path, STORAGE))
    assert sc.simulate["seed"] == 7


# commands

def test_every_command_runs(tmp_path):
    doc = {"model": {"type": "preset", "name": "storage",
                     "params": {"lam": 1.0, "gamma": 2.0, "kappa_backup": 0.3, "kappa_uncopied": 4.0}},
           "run": {"t_end": 1.0, "step": 0.01, "sample_times": [0.0, 1.0]},
           "simulate": {"runs": 20, "seed": 1}, "oracle": {"cap": [10, 20]}}
    path = write(tmp_path, doc)
    expected = {"moments": "means.csv", "second-moments": "seconds.csv", "stationary": "stationary.json",
                "stability": "stationary.json", "simulate": "ensemble.csv", "oracle": "oracle.csv",
                "storage-optimize": "optimum.json", "preset-emit": "spec.json"}
    assert cli.run_command("validate", path, tmp_path / "v") == 0
    for command, product in expected.items():
        out = tmp_path / command
        assert cli.run_command(command, path, out) == 0, command
        assert (out / product).exists()


def test_means_csv_layout(tmp_path):
    out = tmp_path / "out"
    assert cli.run_command("moments", write(tmp_path, CUSTOM), out) == 0
    header, data = read_csv(out / "means.csv")
    assert header == ["t", "m_0_0", "m_0_1", "m_1_0", "m_1_1", "M_0", "M_1"]
    spec = build_spec(parse_scenario(CUSTOM))
    ref = transient_means(spec, 1.0, 0.01)
    np.testing.assert_array_equal(data[:, 1:5], ref.m)
    np.testing.assert_array_equal(data[:, 5:], ref.agent_means())


def test_seventeen_digits_roundtrip(tmp_path):
    out = tmp_path / "out"
    cli.run_command("second-moments", write(tmp_path, CUSTOM), out)
    text = (out / "seconds.csv").read_text().splitlines()
    values = [v for line in text[1:] for v in line.split(",")]
    assert all(cli.fmt(float(v)) == v for v in values)


def test_byte_identical_outputs(tmp_path):
    path = write(tmp_path, dict(STORAGE, simulate={"runs": 50, "seed": 3}))
    for command, product in (("simulate", "ensemble.csv"), ("moments", "means.csv"),
                             ("stationary", "stationary.json")):
        cli.run_command(command, path, tmp_path / "a")
        cli.run_command(command, path, tmp_path / "b")
        assert (tmp_path / "a" / product).read_bytes() == (tmp_path / "b" / product).read_bytes()


def test_seed_override_changes_ensemble(tmp_path):
    path = write(tmp_path, dict(STORAGE, simulate={"runs": 50, "seed": 3}))
    cli.run_command("simulate", path, tmp_path / "a")
    cli.run_command("simulate", path, tmp_path / "b", seed=4)
    assert (tmp_path / "a" / "ensemble.csv").read_bytes() != (tmp_path / "b" / "ensemble.csv").read_bytes()


def test_stability_on_opinion_preset(tmp_path):
    path = write(tmp_path, {"model": {"type": "preset", "name": "opinion"}})
    assert cli.run_command("stability", path, tmp_path) == 0
    data = json.loads((tmp_path / "stationary.json").read_text())
    assert abs(data["omega"]) <= 1e-8 and data["ergodic_sufficient"] is False


def test_optimize_boundary(tmp_path):
    doc = {"model": {"type": "preset", "name": "storage",
                     "params": {"lam": 1.0, "horizon": 1.0, "kappa_backup": 2.1, "kappa_uncopied": 4.0}}}
    assert cli.run_command("storage-optimize", write(tmp_path, doc), tmp_path) == 0
    data = json.loads((tmp_path / "optimum.json").read_text())
    assert data == {"gamma_star": 0, "F": 4, "boundary": True}


def test_moments_then_simulate_pipeline(tmp_path):
    path = write(tmp_path, STORAGE)
    assert cli.run_command("moments", path, tmp_path, step=0.5) == 0
    assert cli.run_command("simulate", path, tmp_path) == 0
    mh, means = read_csv(tmp_path / "means.csv")
    _, ens = read_csv(tmp_path / "ensemble.csv")
    for t, agent, mean, se, _ in ens:
        row = means[np.isclose(means[:, 0], t)][0]
        ode = row[mh.index(f"M_{int(agent)}")]
        assert abs(mean - ode) <= 3 * se + 1e-12


def test_stationary_json_fields(tmp_path):
    path = write(tmp_path, {"model": {"type": "preset", "name": "wealth", "params": {"n_agents": 4}}})
    assert cli.run_command("stationary", path, tmp_path) == 0
    data = json.loads((tmp_path / "stationary.json").read_text())
    assert set(data) >= {"omega", "ergodic_sufficient", "means"}
    assert data["ergodic_sufficient"] is True and len(data["means"]) == 8


def test_preset_emit_is_a_scenario(tmp_path):
    path = write(tmp_path, {"model": {"type": "preset", "name": "opinion", "params": {"alpha": 0.1}}})
    assert cli.run_command("preset-emit", path, tmp_path) == 0
    emitted = load_scenario(tmp_path / "spec.json")
    assert emitted.model["type"] == "custom" and emitted.model["n_agents"] == 40


# exit codes

def test_exit_code_schema_error(tmp_path, capsys):
    doc = json.loads(json.dumps(STORAGE))
    doc["model"]["params"]["gamma_typo"] = 1
    assert cli.run_command("moments", write(tmp_path, doc), tmp_path) == 2
    assert "/model/params/gamma_typo" in capsys.readouterr().err


def test_exit_code_missing_file(tmp_path):
    assert cli.run_command("moments", tmp_path / "nope.json", tmp_path) == 2


def test_exit_code_invalid_model(tmp_path, capsys):
    doc = json.loads(json.dumps(CUSTOM))
    doc["model"]["chain"]["Q"] = [[-1.0, 1.0], [0.0, 0.0]]
    assert cli.run_command("moments", write(tmp_path, doc), tmp_path) == 2
    assert "irreducible" in capsys.readouterr().err


def test_exit_code_optimize_without_costs(tmp_path):
    assert cli.run_command("storage-optimize", write(tmp_path, STORAGE), tmp_path) == 2


def test_exit_code_oracle_budget(tmp_path):
    doc = json.loads(json.dumps(CUSTOM))
    doc["oracle"] = {"cap": [300, 300], "budget": 1000}
    assert cli.run_command("oracle", write(tmp_path, doc), tmp_path) == 1


def test_exit_code_unstable_runtime(tmp_path):
    # an exploding model overflows the integrator
    doc = {"model": {"type": "custom", "n_agents": 1, "chain": {"Q": [[0.0]]},
                     "shock_rates": [50.0],
                     "kernels": [[{"type": "deterministic", "vector": [3]}]], "initial_wealth": [1]},
           "run": {"t_end": 100.0, "step": 0.01}}
    assert cli.run_command("moments", write(tmp_path, doc), tmp_path) == 1


def test_console_entry_point(tmp_path):
    path = write(tmp_path, STORAGE)
    ok = subprocess.run([sys.executable, "-m", "dissemination", "validate", "--scenario", str(path)],
                        capture_output=True, text=True)
    assert ok.returncode == 0 and ok.stdout == ""
    bad = subprocess.run([sys.executable, "-m", "dissemination", "frobnicate", "--scenario", str(path)],
                         capture_output=True, text=True)
    assert bad.returncode == 2
