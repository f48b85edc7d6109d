import json

import numpy as np
import pytest

from pnrecon import cli
from pnrecon import io as pio
from pnrecon.config import ConfigError, RunConfig
from pnrecon.fock_kernel import OscillatorGrid, ResponseKernel
from pnrecon.states import QuadratureHistogram


def run(*argv):
    return cli.main([str(a) for a in argv])


def files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


@pytest.fixture(scope="module")
def small_synth(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert run("synth", "--mean", 6, "--n-samples", 20000, "--seed", 4, "--out", out) == 0
    return out


def toy_histogram(directory, counts=(5, 5), dx=12.0):
    grid = OscillatorGrid.symmetric(dx * len(counts) / 2, dx)
    hist = QuadratureHistogram(grid, np.array(counts))
    path, _ = pio.write_histogram(hist, directory / "histogram.csv", seed=0, state_descriptor="toy")
    return path


def test_synth_coherent_writes_files(tmp_path, capsys):
    assert run("synth", "--out", tmp_path, "--state", "coherent", "--mean", 30,
               "--eta", 0.85, "--n-samples", 10**6, "--seed", 1) == 0
    printed = capsys.readouterr().out
    assert "N: 1000000" in printed and "dropped: 0" in printed
    meta = json.loads((tmp_path / "histogram.json").read_text())
    assert meta["n_total"] == 10**6 and meta["n_dropped"] == 0 and meta["seed"] == 1
    assert meta["eta"] == 0.85 and meta["state_descriptor"].startswith("coherent")
    hist, _ = pio.read_histogram(tmp_path / "histogram.csv")
    assert hist.total == 10**6


def test_synth_is_byte_identical(tmp_path, small_synth):
    assert run("synth", "--mean", 6, "--n-samples", 20000, "--seed", 4, "--out", tmp_path) == 0
    assert files(tmp_path) == files(small_synth)


def test_synth_rejects_zero_samples(tmp_path, capsys):
    assert run("synth", "--n-samples", 0, "--out", tmp_path) == 1
    assert "n_samples" in capsys.readouterr().err
    assert not (tmp_path / "histogram.csv").exists()


@pytest.mark.parametrize("argv", [["synth", "--mean", -1], ["synth", "--state", "cat"], ["bogus"],
                                  ["synth", "--state", "thermal", "--squeeze", 0.5]])
def test_usage_errors(tmp_path, argv):
    with pytest.raises(SystemExit) as info:
        code = run(*argv, "--out", tmp_path)
        raise SystemExit(code)
    assert info.value.code == 1


def test_outdir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTDIR_ENV, str(tmp_path))
    assert run("synth", "--mean", 2, "--n-samples", 1000) == 0
    assert (tmp_path / "histogram.csv").is_file()


@pytest.fixture
def toy_kernel(monkeypatch):
    # the 2x2 toy response matrix of the estimator tests, injected behind the
    # sidecar grid: a two-bin physical kernel cannot resolve the identity
    def build(grid, eta, dimension):
        return ResponseKernel(np.array([[0.6, 0.2], [0.4, 0.8]]), grid, eta)

    monkeypatch.setattr(cli, "build_kernel", build)


def test_fit_toy_fixture(tmp_path, capsys, toy_kernel):
    path = toy_histogram(tmp_path, counts=(4, 6))
    assert run("fit", path, "--out", tmp_path) == 0
    rec = json.loads((tmp_path / "fit.json").read_text())
    assert abs(rec["K"]) < 1e-15
    assert rec["converged"] and rec["n_edge"] == 2
    np.testing.assert_allclose(rec["estimate"], [0.5, 0.5], atol=1e-15)
    refit = (tmp_path / "refit.csv").read_text().splitlines()
    assert refit[0] == "x,f,q" and len(refit) == 3
    assert "K_over_S_pct:" in capsys.readouterr().out


def test_fit_det_toy_fixture(tmp_path, toy_kernel):
    path = toy_histogram(tmp_path, counts=(4, 6))
    assert run("fit-det", path, "--out", tmp_path) == 0
    rec = json.loads((tmp_path / "fit_det.json").read_text())
    assert rec["negative_count"] == 0 and rec["k_defined"] and abs(rec["K"]) < 1e-14


def test_malformed_row_names_line(tmp_path, capsys):
    path = toy_histogram(tmp_path, counts=(1, 2, 3, 4), dx=1.0)
    lines = path.read_text().splitlines()
    lines[3] = "0.5,three"
    path.write_text("\n".join(lines) + "\n")
    assert run("fit", path, "--out", tmp_path) == 2
    assert "line 4" in capsys.readouterr().err


def test_missing_sidecar(tmp_path, capsys):
    path = toy_histogram(tmp_path)
    pio.sidecar_path(path).unlink()
    assert run("fit", path, "--out", tmp_path) == 2
    assert "sidecar" in capsys.readouterr().err


def test_count_mismatch_is_data_error(tmp_path):
    path = toy_histogram(tmp_path)
    path.write_text(path.read_text().replace(",5\n", ",6\n", 1))
    assert run("fit", path, "--out", tmp_path) == 2


def test_no_trusted_subspace(tmp_path, capsys):
    grid = OscillatorGrid.symmetric(1.0, 0.1)
    path, _ = pio.write_histogram(QuadratureHistogram(grid, np.full(grid.count, 3)), tmp_path / "h.csv")
    assert run("fit", path, "--tau", 0.999999, "--out", tmp_path) == 2
    assert "no trusted subspace" in capsys.readouterr().err


def test_kernel_and_report(tmp_path, small_synth):
    hist = small_synth / "histogram.csv"
    assert run("kernel", hist, "--kernel-dimension", 20, "--out", tmp_path) == 0
    assert run("report", hist, "--kernel-dimension", 20, "--out", tmp_path) == 0
    header = (tmp_path / "kernel.csv").read_text().splitlines()[0]
    assert header == "x," + ",".join(f"n{i}" for i in range(20))
    meta = json.loads((tmp_path / "kernel.json").read_text())
    assert meta["eta"] == 0.85 and meta["dimension"] == 20
    rows = (tmp_path / "identity.csv").read_text().splitlines()
    assert rows[0] == "n,R" and len(rows) == 21
    assert json.loads((tmp_path / "report.config.json").read_text())["kernel_dimension"] == 20


def test_non_convergence_exits_zero(tmp_path, small_synth, capsys):
    assert run("fit", small_synth / "histogram.csv", "--max-iterations", 2, "--out", tmp_path) == 0
    assert "converged: False" in capsys.readouterr().out
    rec = json.loads((tmp_path / "fit.json").read_text())
    assert rec["converged"] is False and rec["iterations"] == 2


def test_ensemble_single_restart(tmp_path, small_synth, capsys):
    assert run("ensemble", small_synth / "histogram.csv", "--restarts", 1,
               "--max-iterations", 200, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    for k in (1, 10, 50):
        assert f"spread{k}: 0\n" in out
    rows = (tmp_path / "ensemble_summary.csv").read_text().splitlines()
    assert rows[0] == "restart,K,K_over_S_pct,m1,m10,m50,dev1,dev10,dev50"
    assert len(rows) == 2
    assert (tmp_path / "k_histogram.csv").read_text().startswith("K_low,K_high,count")


def test_ensemble_is_deterministic(tmp_path, small_synth):
    a, b = tmp_path / "a", tmp_path / "b"
    for d, workers in ((a, 1), (b, 3)):
        d.mkdir()
        assert run("ensemble", small_synth / "histogram.csv", "--restarts", 4, "--workers", workers,
                   "--max-iterations", 300, "--out", d) == 0
    fa, fb = files(a), files(b)
    fa.pop("ensemble.config.json"), fb.pop("ensemble.config.json")
    assert fa == fb


def test_fit_det_no_eta_scales_mean(tmp_path):
    assert run("synth", "--mean", 30, "--n-samples", 10**6, "--seed", 2, "--out", tmp_path) == 0
    assert run("fit-det", tmp_path / "histogram.csv", "--no-eta", "--out", tmp_path) == 0
    rec = json.loads((tmp_path / "fit_det.json").read_text())
    assert rec["eta"] == 1.0
    assert rec["mean"] == pytest.approx(0.85 * 30, rel=0.02)
    assert rec["mean_corrected"] == pytest.approx(rec["mean"] / 0.85, rel=1e-15)


def test_config_round_trip(tmp_path):
    cfg = RunConfig.from_dict({"state": {"kind": "squeezed_vacuum", "squeeze": 1.5}, "eta": 0.85,
                               "grid": {"min": -5.0, "max": 5.0, "dx": 0.05}, "moment_orders": [1, 5]})
    again = RunConfig.from_dict(json.loads(cfg.dumps()))
    assert again == cfg and again.dumps() == cfg.dumps()
    (tmp_path / "c.json").write_text(cfg.dumps())
    assert RunConfig.load(tmp_path / "c.json") == cfg


@pytest.mark.parametrize("bad", [{"colour": 1}, {"eta": 0}, {"tau": 1.0}, {"grid": {"min": -1}},
                                 {"fit": {"restarts": 0}}, {"moment_orders": [51]},
                                 {"state": {"kind": "coherent", "mean": 30, "squeeze": 1}}])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_bad_config_file_exit_code(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    assert run("synth", "--config", tmp_path / "c.json", "--out", tmp_path) == 1


@pytest.mark.parametrize("command", ["kernel", "report", "fit", "fit-det", "ensemble"])
def test_rerun_from_emitted_config(tmp_path, small_synth, command):
    hist = small_synth / "histogram.csv"
    first, second = tmp_path / "first", tmp_path / "second"
    first.mkdir(), second.mkdir()
    extra = ["--max-iterations", 500, "--restarts", 3] if command == "ensemble" else ["--max-iterations", 500]
    if command in ("kernel", "report", "fit-det"):
        extra = ["--kernel-dimension", 40]
    assert run(command, hist, *extra, "--out", first) == 0
    emitted = first / f"{command}.config.json"
    assert run(command, hist, "--config", emitted, "--out", second) == 0
    assert files(first) == files(second)


def test_synth_rerun_from_emitted_config(tmp_path, small_synth):
    assert run("synth", "--config", small_synth / "synth.config.json", "--out", tmp_path) == 0
    assert files(tmp_path) == files(small_synth)


def test_json_uses_round_trip_floats(tmp_path):
    path = pio.write_json(tmp_path / "x.json", {"v": np.float64(0.1) + 0.2, "a": np.arange(2.0)})
    data = json.loads(path.read_text())
    assert data == {"v": 0.30000000000000004, "a": [0.0, 1.0]}
    assert pio.fmt17(1 / 3) == "0.33333333333333331"
