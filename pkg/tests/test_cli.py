import csv
import json

import numpy as np
import pytest

from ebp import cli
from ebp.baselines import dti_fit
from ebp.bench import bench_csv
from ebp.io import load_model, manifest_path, save_model
from ebp.kernels import TensorKernel, TensorParams
from ebp.metrics import evaluate
from ebp.model import MixtureModel
from ebp.simulate import (Dataset, GroundTruth, SimulationConfig,
                          dataset_to_dict, generate, load_dataset,
                          save_dataset)
from ebp.sphere import coulomb_energy, geodesic_sphere, hemisphere, normalize


def run(*argv):
    return cli.main([str(a) for a in argv])


def _json(path):
    with open(path) as fh:
        return json.load(fh)


def test_simulate_round_trip(tmp_path):
    out = tmp_path / "ds.json"
    assert run("simulate", "--seed", 1, "--out", out) == 0
    ds = load_dataset(out)
    ref = generate(SimulationConfig(seed=1))
    assert dataset_to_dict(ds) == dataset_to_dict(ref)
    man = _json(manifest_path(out))
    assert man["command"] == "simulate" and man["seed"] == 1
    assert "version" in _json(out)


def test_simulate_noiseless_and_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("simulate", "--sigma2", 0, "--out", a) == 0
    ds = load_dataset(a)
    np.testing.assert_array_equal(ds.signal, ds.truth.clean)
    for p in (a, b):
        assert run("simulate", "--fascicles", 3, "--seed", 42, "--out", p) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_rejects_bad_flags(tmp_path, capsys):
    assert run("simulate", "--directions", 1, "--out",
               tmp_path / "x.json") == 1
    assert "directions" in capsys.readouterr().err
    with pytest.raises(SystemExit) as err:
        run("simulate", "--sigma2", -1, "--out", tmp_path / "x.json")
    assert err.value.code != 0


def _single_tensor_dataset(path):
    ds = generate(SimulationConfig(seed=0, noise_sigma2=0.0))
    v = normalize(np.array([0.3, 0.4, -0.8]))
    truth = MixtureModel([1.0], [TensorParams(v, 1.7, 0.0)],
                         TensorKernel(ds.scheme))
    clean = truth.predict()
    save_dataset(Dataset(ds.scheme, clean, ds.partition,
                         GroundTruth(truth, clean)), path)
    return v


def test_fit_dti_recovers_tensor(tmp_path):
    data = tmp_path / "ds.json"
    v = _single_tensor_dataset(data)
    out = tmp_path / "dti.json"
    assert run("fit", "--method", "dti", "--input", data, "--out", out) == 0
    d = _json(out)
    assert d["method"] == "dti"
    lam, vecs = np.linalg.eigh(np.array(d["tensor"]))
    np.testing.assert_allclose(lam[::-1], [1.7, 0.0, 0.0], atol=1e-6)
    assert abs(vecs[:, -1] @ v) > 1 - 1e-6
    assert d["s0"] == pytest.approx(1.0, abs=1e-6)


def test_fit_ebp_writes_monotone_trace(tmp_path):
    data = tmp_path / "ds.json"
    run("simulate", "--seed", 3, "--out", data)
    out = tmp_path / "ebp.json"
    assert run("fit", "--method", "ebp", "--input", data, "--out", out) == 0
    trace = tmp_path / "ebp.trace.csv"
    with open(trace) as fh:
        rows = list(csv.DictReader(fh))
    mse = [float(r["train_mse"]) for r in rows]
    assert all(a >= b for a, b in zip(mse, mse[1:]))
    model = _json(out)
    assert model["method"] == "ebp" and model["components"]
    assert model["lambda"] == 1.0 and model["c"] == 1.0
    assert str(trace) in _json(manifest_path(out))["outputs"]


@pytest.mark.parametrize("method", ["nnls", "cbp"])
def test_fit_other_methods(tmp_path, method):
    data = tmp_path / "ds.json"
    run("simulate", "--seed", 3, "--out", data)
    out = tmp_path / f"{method}.json"
    assert run("fit", "--method", method, "--input", data, "--out", out) == 0
    ds = load_dataset(data)
    model = load_model(out, ds.scheme)
    assert model.n_components >= 1
    assert not (tmp_path / f"{method}.trace.csv").exists()


@pytest.mark.slow
def test_ebp_beats_nnls_on_most_seeds(tmp_path, capsys):
    wins = 0
    for seed in range(50):
        data = tmp_path / f"ds{seed}.json"
        run("simulate", "--seed", seed, "--out", data)
        emd = {}
        for method in ("ebp", "nnls"):
            model = tmp_path / f"{method}{seed}.json"
            assert run("fit", "--method", method, "--input", data,
                       "--seed", seed, "--out", model) == 0
            capsys.readouterr()
            run("evaluate", "--model", model, "--dataset", data)
            emd[method] = json.loads(capsys.readouterr().out)["emd"]
        wins += emd["ebp"] <= emd["nnls"]
    print(f"ebp emd <= nnls emd on {wins} of 50 seeds")
    assert wins > 25


def test_fit_errors(tmp_path, capsys):
    assert run("fit", "--method", "ebp", "--input", tmp_path / "none.json",
               "--out", tmp_path / "m.json") == 1
    assert "cannot read" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        run("fit", "--method", "magic", "--input", "x", "--out", "y")
    data = tmp_path / "ds.json"
    run("simulate", "--seed", 3, "--out", data)
    d = _json(data)
    d["signal"][d["partition"]["train"][0]] = 0.0
    with open(data, "w") as fh:
        json.dump(d, fh)
    assert run("fit", "--method", "dti", "--input", data,
               "--out", tmp_path / "m.json") == 1


def test_evaluate_truth_model_is_perfect(tmp_path, capsys):
    data = tmp_path / "ds.json"
    run("simulate", "--sigma2", 0, "--seed", 2, "--out", data)
    ds = load_dataset(data)
    model = tmp_path / "truth.json"
    save_model(ds.truth.model, "truth", model)
    out = tmp_path / "metrics.json"
    assert run("evaluate", "--model", model, "--dataset", data,
               "--out", out) == 0
    m = _json(out)
    assert m["version"]
    for key in ("train_rmse", "test_rmse", "emd"):
        assert m[key] == pytest.approx(0.0, abs=1e-12)


def test_evaluate_matches_library_and_handles_missing_truth(tmp_path, capsys):
    data = tmp_path / "ds.json"
    run("simulate", "--seed", 4, "--out", data)
    fitted = tmp_path / "nnls.json"
    run("fit", "--method", "nnls", "--input", data, "--out", fitted)
    capsys.readouterr()
    assert run("evaluate", "--model", fitted, "--dataset", data) == 0
    got = json.loads(capsys.readouterr().out)
    ds = load_dataset(data)
    ref = evaluate(load_model(fitted, ds.scheme), ds)
    for key, val in ref.items():
        assert got[key] == val

    d = _json(data)
    del d["truth"]
    with open(data, "w") as fh:
        json.dump(d, fh)
    assert run("evaluate", "--model", fitted, "--dataset", data) == 0
    got = json.loads(capsys.readouterr().out)
    assert "emd" not in got and "test_rmse" in got


def test_evaluate_rejects_unknown_major_version(tmp_path, capsys):
    data = tmp_path / "ds.json"
    run("simulate", "--seed", 4, "--out", data)
    model = tmp_path / "m.json"
    save_model(load_dataset(data).truth.model, "truth", model)
    d = _json(model)
    d["version"] = "9.0"
    with open(model, "w") as fh:
        json.dump(d, fh)
    assert run("evaluate", "--model", model, "--dataset", data) == 1
    assert "version" in capsys.readouterr().err


def test_bench_single_trial_equals_evaluate(tmp_path):
    out = tmp_path / "bench"
    assert run("bench", "--trials", 1, "--seed", 5, "--out-dir", out) == 0
    with open(out / "bench.csv") as fh:
        rows = list(csv.DictReader(fh))
    per_trial = [r for r in rows if r["trial"] == "0"]
    means = [r for r in rows if r["trial"] == "mean"]
    assert [r["method"] for r in per_trial] == ["ebp", "nnls", "dti"]
    for r, m in zip(per_trial, means):
        for col in ("train_rmse", "test_rmse", "emd", "K_final"):
            assert float(r[col]) == float(m[col])
        assert r["wall_ms"] == ""
    # the dti row is reproducible through the fit and evaluate commands
    ds = generate(SimulationConfig(seed=5))
    ref = evaluate(dti_fit(ds.scheme.subset(ds.train), ds.signal[ds.train]),
                   ds)
    assert float(per_trial[2]["test_rmse"]) == ref["test_rmse"]
    assert float(per_trial[2]["emd"]) == ref["emd"]
    assert (out / "trials" / "trial_0000.csv").exists()
    with open(out / "timing.csv") as fh:
        timing = list(csv.DictReader(fh))
    assert float(timing[0]["wall_ms"]) > 0


def test_bench_jobs_do_not_change_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["bench", "--trials", 3, "--methods", "nnls,dti", "--seed", 1]
    assert run(*args, "--jobs", 1, "--out-dir", a) == 0
    assert run(*args, "--jobs", 3, "--out-dir", b) == 0
    assert (a / "bench.csv").read_bytes() == (b / "bench.csv").read_bytes()


def test_bench_reports_failures(tmp_path, monkeypatch):
    def failing(trials, seed, methods, sim, cfg, jobs):
        return [{"trial": t, "method": "dti", "train_rmse": float("nan"),
                 "test_rmse": float("nan"), "emd": float("nan"),
                 "K_final": 0, "iterations": 0, "wall_ms": float("nan"),
                 "status": "failed" if t < 2 else "ok"}
                for t in range(trials)]
    monkeypatch.setattr(cli, "run_bench", failing)
    out = tmp_path / "bench"
    assert run("bench", "--trials", 10, "--methods", "dti",
               "--out-dir", out) == 1
    text = (out / "bench.csv").read_text()
    assert text.count(",failed") == 2
    assert _json(manifest_path(out / "bench.csv"))["failed_rows"] == 2
    assert "n=8" in bench_csv(failing(10, 0, None, None, None, 1), ["dti"])


def test_bench_rejects_unknown_method(tmp_path):
    assert run("bench", "--methods", "ebp,foo", "--out-dir", tmp_path) == 1


def _directions(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r[k]) for k in "xyz"] for r in rows])


def test_directions_command(tmp_path):
    out = tmp_path / "dirs.csv"
    assert run("directions", "--n", 2, "--out", out) == 0
    pts = _directions(out)
    assert abs(pts[0] @ pts[1]) < 1e-4
    assert run("directions", "--n", 6, "--out", out) == 0
    pts = _directions(out)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-9)
    energy = _json(manifest_path(out))["energy"]
    # six axes settle on the icosahedron's axes
    assert energy == pytest.approx(coulomb_energy(hemisphere(
        geodesic_sphere(1))), rel=1e-8)
    assert run("directions", "--n", 1, "--out", out) == 1


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as err:
        run("--version")
    assert err.value.code == 0
    assert "0.1.0" in capsys.readouterr().out
