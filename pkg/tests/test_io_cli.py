import json

import numpy as np
import pytest

from lsirm.cli import main
from lsirm.io import load_draws, load_response_csv, save_draws, save_response_csv
from lsirm.model import InputError
from lsirm.sampler import ChainSchedule, ModelConfig, run_chains
from lsirm.simulate import generate_lsirm


class TestResponseCsv:
    def test_round_trip_with_missing(self, tmp_path):
        rng = np.random.default_rng(0)
        data, _ = generate_lsirm(12, 5, rng)
        data.observed[3, 2] = False
        data.values[3, 2] = 0.0
        path = tmp_path / "data.csv"
        save_response_csv(path, data)
        loaded = load_response_csv(path)
        assert np.array_equal(loaded.values, data.values)
        assert np.array_equal(loaded.observed, data.observed)

    def test_headerless_file(self, tmp_path):
        path = tmp_path / "plain.csv"
        path.write_text("1,0,NA\n0,1,1\n")
        loaded = load_response_csv(path)
        assert loaded.n_respondents == 2 and loaded.n_items == 3
        assert not loaded.observed[0, 2]

    def test_header_detection(self, tmp_path):
        path = tmp_path / "with_header.csv"
        path.write_text("q1,q2,q3\n1,0,1\n0,1,0\n")
        loaded = load_response_csv(path)
        assert loaded.n_respondents == 2

    def test_bad_cell_reports_location(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,0\n2,1\n")
        with pytest.raises(InputError, match="bad.csv:2"):
            load_response_csv(path)

    def test_ragged_rows_rejected(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("1,0,1\n0,1\n")
        with pytest.raises(InputError, match="expected 3 cells"):
            load_response_csv(path)

    def test_all_missing_column_rejected(self, tmp_path):
        path = tmp_path / "empty_col.csv"
        path.write_text("1,NA\n0,NA\n")
        with pytest.raises(InputError, match="item"):
            load_response_csv(path)


class TestDrawsBundle:
    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        data, _ = generate_lsirm(10, 5, rng)
        schedule = ChainSchedule(40, 20, 1, 2, seed=2)
        chains = run_chains(data, ModelConfig(tune=False), schedule)
        path = tmp_path / "draws.npz"
        save_draws(path, chains, n_observed=50, gamma_fixed=None)
        loaded, meta = load_draws(path, with_meta=True)
        assert meta == {"n_observed": 50, "gamma_fixed": None}
        for a, b in zip(chains, loaded):
            assert np.array_equal(a.alpha, b.alpha)
            assert np.array_equal(a.gamma, b.gamma)
            assert a.acceptance == b.acceptance
            assert a.kernel_kind == b.kernel_kind and a.metric == b.metric


def write_dataset(tmp_path, n=25, i=6, seed=3):
    rng = np.random.default_rng(seed)
    data, _ = generate_lsirm(n, i, rng)
    path = tmp_path / "data.csv"
    save_response_csv(path, data)
    return path


FAST_FIT = ["--iters", "200", "--burnin", "100", "--chains", "2", "--seed", "11"]


class TestCliFit:
    def test_fit_writes_bundle(self, tmp_path):
        data_path = write_dataset(tmp_path)
        out = tmp_path / "fit"
        assert main(["fit", "--input", str(data_path), "--out-dir", str(out)]
                    + FAST_FIT) == 0
        for name in ("summary.json", "positions.csv", "traces.csv",
                     "draws.npz", "manifest.json"):
            assert (out / name).exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["schema"] == 1
        assert len(summary["alpha"]["mean"]) == 25
        positions = (out / "positions.csv").read_text().splitlines()
        assert positions[0].startswith("id,type,x,y")
        assert len(positions) == 1 + 25 + 6
        cells = positions[1].split(",")
        assert cells[1] == "respondent"
        float(cells[2])  # plain parseable numbers
        traces = (out / "traces.csv").read_text().splitlines()
        for cell in traces[1].split(",")[2:]:
            float(cell)

    def test_reruns_are_byte_identical(self, tmp_path):
        data_path = write_dataset(tmp_path)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["fit", "--input", str(data_path), "--out-dir", str(out)]
                        + FAST_FIT) == 0
            outs.append(out)
        for name in ("summary.json", "positions.csv", "traces.csv", "draws.npz"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_rerun_from_manifest_reproduces_outputs(self, tmp_path):
        data_path = write_dataset(tmp_path)
        first = tmp_path / "first"
        assert main(["fit", "--input", str(data_path), "--out-dir", str(first)]
                    + FAST_FIT) == 0
        manifest = json.loads((first / "manifest.json").read_text())
        config = manifest["config"]
        second = tmp_path / "second"
        argv = ["fit", "--input", config["input"], "--out-dir", str(second),
                "--iters", str(config["iters"]), "--burnin", str(config["burnin"]),
                "--thin", str(config["thin"]), "--chains", str(config["chains"]),
                "--dim", str(config["dim"]), "--metric", config["metric"],
                "--kernel", config["kernel"], "--seed", str(config["seed"])]
        if config["no_tune"]:
            argv.append("--no-tune")
        assert main(argv) == 0
        for name in manifest["outputs"]:
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_gamma_fixed_zero_gives_rasch_fit(self, tmp_path):
        data_path = write_dataset(tmp_path)
        out = tmp_path / "rasch"
        assert main(["fit", "--input", str(data_path), "--out-dir", str(out),
                     "--gamma-fixed", "0"] + FAST_FIT) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["model"]["kernel"] == "none"
        assert summary["gamma"] is None

    def test_missing_file_exit_2(self, tmp_path, capsys):
        assert main(["fit", "--input", str(tmp_path / "nope.csv"),
                     "--out-dir", str(tmp_path / "out")] + FAST_FIT) == 2
        assert "input error" in capsys.readouterr().err

    def test_malformed_csv_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2\n0,1\n")
        assert main(["fit", "--input", str(bad),
                     "--out-dir", str(tmp_path / "out")] + FAST_FIT) == 2
        err = capsys.readouterr().err
        assert "input error" in err and "bad.csv" in err

    def test_strict_flags_non_convergence(self, tmp_path):
        data_path = write_dataset(tmp_path)
        out = tmp_path / "short"
        code = main(["fit", "--input", str(data_path), "--out-dir", str(out),
                     "--iters", "30", "--burnin", "10", "--chains", "3",
                     "--no-tune", "--seed", "1", "--strict"])
        assert code == 4

    def test_config_file_sets_defaults_flags_override(self, tmp_path):
        data_path = write_dataset(tmp_path)
        config = tmp_path / "run.cfg"
        config.write_text(
            "iters=200\nburnin=100\nchains=2\nseed=11\n"
            f"input={data_path}\n"
        )
        out1 = tmp_path / "cfgrun"
        assert main(["--config", str(config), "fit", "--out-dir", str(out1)]) == 0
        manifest = json.loads((out1 / "manifest.json").read_text())
        assert manifest["config"]["iters"] == 200
        out2 = tmp_path / "cfgrun2"
        assert main(["--config", str(config), "fit", "--out-dir", str(out2),
                     "--iters", "240"]) == 0
        manifest2 = json.loads((out2 / "manifest.json").read_text())
        assert manifest2["config"]["iters"] == 240


class TestCliSelectSimulatePpc:
    def test_simulate_then_select(self, tmp_path, capsys):
        sim = tmp_path / "sim"
        assert main(["simulate", "--scenario", "two-cluster", "--n", "40",
                     "--i", "6", "--out-dir", str(sim), "--seed", "5"]) == 0
        assert (sim / "data.csv").exists() and (sim / "truth.json").exists()
        sel = tmp_path / "sel"
        assert main(["select", "--input", str(sim / "data.csv"),
                     "--out-dir", str(sel), "--iters", "1200", "--burnin", "600",
                     "--seed", "7"]) == 0
        result = json.loads((sel / "selection.json").read_text())
        assert result["chosen_model"] == "latent_space"
        assert result["inclusion_probability"] > 0.9
        # three-decimal formatting contract on the printed probability
        out = capsys.readouterr().out
        assert "inclusion probability 1.000" in out or "inclusion probability 0.9" in out
        printed = out.splitlines()[-1].split()[2]
        assert len(printed.split(".")[1]) == 3
        traces = (sel / "traces.csv").read_text().splitlines()
        assert traces[0] == "chain,draw,gamma,sigma2,log_posterior,delta,omega"

    def test_two_cluster_with_random_flag_is_noisy_variant(self, tmp_path):
        sim = tmp_path / "fig2b"
        assert main(["simulate", "--scenario", "two-cluster", "--n", "100",
                     "--i", "6", "--random", "20", "--out-dir", str(sim),
                     "--seed", "4"]) == 0
        truth = json.loads((sim / "truth.json").read_text())
        assert truth["kind"] == "two_cluster_noisy"
        assert truth["n_random"] == 20
        rows = (sim / "data.csv").read_text().splitlines()[1:]
        assert rows[0] == "1,1,1,0,0,0"
        assert rows[79] == "0,0,0,1,1,1"

    def test_simulate_reps_write_numbered_files(self, tmp_path):
        sim = tmp_path / "reps"
        assert main(["simulate", "--scenario", "rasch", "--n", "10", "--i", "4",
                     "--reps", "3", "--out-dir", str(sim), "--seed", "2"]) == 0
        for rep in range(3):
            assert (sim / f"data_{rep:03d}.csv").exists()
            assert (sim / f"truth_{rep:03d}.json").exists()

    def test_ppc_and_summarize_flow(self, tmp_path):
        data_path = write_dataset(tmp_path)
        fit_dir = tmp_path / "fit"
        assert main(["fit", "--input", str(data_path), "--out-dir", str(fit_dir),
                     "--iters", "600", "--burnin", "300", "--chains", "2",
                     "--seed", "11"]) == 0
        ppc_dir = tmp_path / "ppc"
        assert main(["ppc", "--fit", str(fit_dir), "--input", str(data_path),
                     "--out-dir", str(ppc_dir), "--replications", "300",
                     "--seed", "3"]) == 0
        report = json.loads((ppc_dir / "ppc.json").read_text())
        assert len(report["observed_proportion"]) == 6
        assert report["n_replications"] == 300
        # the check of a fit against its own training data flags nothing
        assert report["flagged_items"] == []

        resum = tmp_path / "resum"
        assert main(["summarize", "--fit", str(fit_dir),
                     "--out-dir", str(resum)]) == 0
        assert ((fit_dir / "summary.json").read_bytes()
                == (resum / "summary.json").read_bytes())
        assert ((fit_dir / "positions.csv").read_bytes()
                == (resum / "positions.csv").read_bytes())

    def test_numeric_failure_exit_3(self, tmp_path, monkeypatch, capsys):
        import lsirm.cli as cli_mod
        from lsirm.model import NumericError

        def explode(*args, **kwargs):
            raise NumericError("non-finite log posterior at initialization")

        monkeypatch.setattr(cli_mod, "run_chains", explode)
        data_path = write_dataset(tmp_path)
        assert main(["fit", "--input", str(data_path),
                     "--out-dir", str(tmp_path / "out")] + FAST_FIT) == 3
        assert "numeric failure" in capsys.readouterr().err

    def test_fit_defaults_match_study_settings(self):
        from lsirm.cli import build_parser

        args = build_parser().parse_args(["fit", "--input", "x.csv",
                                          "--out-dir", "out"])
        assert args.iters == 20000 and args.burnin == 10000
        assert args.chains == 3 and args.dim == 2 and args.metric == "l2"
        ppc_args = build_parser().parse_args(["ppc", "--fit", "f",
                                              "--input", "x.csv",
                                              "--out-dir", "out"])
        assert ppc_args.replications == 10000

    def test_manifest_versions_and_checksums(self, tmp_path):
        data_path = write_dataset(tmp_path)
        out = tmp_path / "fit"
        assert main(["fit", "--input", str(data_path), "--out-dir", str(out)]
                    + FAST_FIT) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["versions"]) == {"lsirm", "numpy", "scipy", "python"}
        digest = next(iter(manifest["inputs"].values()))
        assert len(digest) == 64
        assert manifest["timing_seconds"] >= 0.0
