import csv
import json
import os

import numpy as np
import pytest

from metaprior import graph
from metaprior.cli import (ConfigError, draw_functions, dump_embeddings,
                           main, parse_overrides, resolve_config,
                           run_experiment, sample_weight_correlations)
from metaprior.dist import softplus_inv
from metaprior.meta import (Architecture, MetaPriorModel, save_checkpoint)

TINY_CUBIC = ["--steps", "250", "--hidden_units", "10", "--eval_samples", "8",
              "--grid_n", "25"]


def run_cli(args):
    return main(args)


@pytest.fixture(scope="module")
def cubic_run(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("cubic"))
    code = run_cli(["run", "cubic", "--out", out] + TINY_CUBIC)
    assert code == 0
    return out


class TestRun:
    def test_cubic_artifacts(self, cubic_run):
        names = set(os.listdir(cubic_run))
        assert {"config.json", "trace.csv", "metrics.json",
                "checkpoint.json", "fit.csv"} <= names
        with open(os.path.join(cubic_run, "fit.csv")) as f:
            rows = list(csv.DictReader(f))
        assert list(rows[0]) == ["x", "pred_mean", "pred_std"]
        xs = [float(r["x"]) for r in rows]
        assert min(xs) == -6.0 and max(xs) == 6.0

    def test_metrics_schema(self, cubic_run):
        doc = json.load(open(os.path.join(cubic_run, "metrics.json")))
        assert set(doc) == {"experiment", "model", "seed", "test_rmse",
                            "test_nll", "elbo_final", "wall_seconds"}

    def test_halfmoon_mf_metrics(self, tmp_path):
        out = str(tmp_path / "hm")
        code = run_cli(["run", "halfmoon", "--out", out, "--model", "mf",
                        "--steps", "200", "--hidden_units", "10",
                        "--n_data", "240", "--eval_samples", "8"])
        assert code == 0
        doc = json.load(open(os.path.join(out, "metrics.json")))
        assert "test_accuracy" in doc and doc["model"] == "mf"

    def test_same_config_same_seed_reproduces(self, tmp_path):
        outs = []
        for tag in ("a", "b"):
            out = str(tmp_path / tag)
            assert run_cli(["run", "cubic", "--out", out, "--steps", "60",
                            "--hidden_units", "6", "--eval_samples", "4",
                            "--grid_n", "9"]) == 0
            outs.append(out)
        docs = [json.load(open(os.path.join(o, "metrics.json"))) for o in outs]
        for d in docs:
            d.pop("wall_seconds")  # the one wall-clock field
        assert docs[0] == docs[1]
        fits = [open(os.path.join(o, "fit.csv")).read() for o in outs]
        assert fits[0] == fits[1]

    def test_unknown_key_exits_2(self, tmp_path):
        code = run_cli(["run", "cubic", "--out", str(tmp_path / "x"),
                        "--not_a_key", "1"])
        assert code == 2

    def test_unknown_config_file_key_exits_2(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"bogus_field": 3}))
        code = run_cli(["run", "cubic", "--config", str(cfg_path),
                        "--out", str(tmp_path / "x")])
        assert code == 2

    def test_divergence_exits_1(self, tmp_path):
        code = run_cli(["run", "cubic", "--out", str(tmp_path / "d"),
                        "--steps", "150", "--hidden_units", "6",
                        "--lr", "10000.0"])
        assert code == 1

    def test_overrides_beat_config_file(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"experiment": "cubic", "steps": 10}))
        cfg = resolve_config("cubic", json.load(open(cfg_path)), {"steps": 20})
        assert cfg["steps"] == 20

    def test_parse_overrides_types(self):
        out = parse_overrides(["--steps", "50", "--lr", "0.01",
                               "--hyper_hidden", "[8,4]", "--mode", "em"])
        assert out == {"steps": 50, "lr": 0.01, "hyper_hidden": [8, 4],
                       "mode": "em"}
        with pytest.raises(ConfigError):
            parse_overrides(["--steps"])

    def test_fewshot_grid_artifact(self, tmp_path):
        out = str(tmp_path / "fs")
        code = run_cli(["few-shot", "--out", out, "--dataset", "digits",
                        "--n_train", "240", "--n_test", "160",
                        "--hidden_units", "12", "--steps", "120",
                        "--shots", "[0,40]", "--budgets", "[0,15]",
                        "--eval_size", "80", "--grid_eval_samples", "4",
                        "--eval_samples", "4"])
        assert code == 0
        with open(os.path.join(out, "grid.csv")) as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 4
        assert list(rows[0]) == ["mask", "shots", "budget", "permuted_acc",
                                 "clean_acc", "seed"]
        cfg = json.load(open(os.path.join(out, "config.json")))
        assert cfg["dataset"] == "digits"


class TestDrawFunctions:
    def test_offset_zero_is_posterior_mean_curve(self, cubic_run, tmp_path):
        from metaprior import net
        from metaprior.meta import load_checkpoint, generate_weights
        from metaprior.dist import RngStream

        out_csv = str(tmp_path / "draws.csv")
        rows = draw_functions(os.path.join(cubic_run, "checkpoint.json"),
                              out_csv, offsets=[0.0, 2.0], unit=3,
                              direction="basis0", grid=(-6, 6, 13), seed=0)
        model, _ = load_checkpoint(os.path.join(cubic_run, "checkpoint.json"))
        z, zs = model.mean_codes()
        w = generate_weights(model.arch, z, model.hyper, RngStream(0),
                             mode="mean", global_code=zs)
        xs = np.linspace(-6, 6, 13)[:, None]
        expected = net.forward(model.arch, w, xs).value
        got = np.array([r[2] for r in rows if r[0] == 0.0])
        np.testing.assert_allclose(got, expected[:, 0], rtol=1e-12)

    def test_nonzero_offset_changes_curve(self, cubic_run, tmp_path):
        rows = draw_functions(os.path.join(cubic_run, "checkpoint.json"),
                              str(tmp_path / "d.csv"), offsets=[0.0, 3.0],
                              unit=0, direction="basis0", grid=(-6, 6, 13),
                              seed=0)
        zero = np.array([r[2] for r in rows if r[0] == 0.0])
        three = np.array([r[2] for r in rows if r[0] == 3.0])
        assert np.max(np.abs(zero - three)) > 0

    def test_mf_prior_draw_analogue(self, tmp_path):
        out = str(tmp_path / "mfrun")
        assert run_cli(["run", "cubic", "--out", out, "--model", "mf",
                        "--steps", "60", "--hidden_units", "8",
                        "--eval_samples", "4", "--grid_n", "9"]) == 0
        rows = draw_functions(os.path.join(out, "checkpoint.json"),
                              str(tmp_path / "mfd.csv"), offsets=[0, 1, 2],
                              grid=(-6, 6, 9), seed=1, mf_weights=10)
        curves = {r[0] for r in rows}
        assert curves == {0.0, 1.0, 2.0}

    def test_unit_out_of_range(self, cubic_run, tmp_path):
        with pytest.raises(ConfigError):
            draw_functions(os.path.join(cubic_run, "checkpoint.json"),
                           str(tmp_path / "x.csv"), offsets=[0.0], unit=999,
                           grid=(-6, 6, 5))


class TestWeightCorrelations:
    def test_zero_variance_posterior_all_samples_identical(self, tmp_path):
        arch = Architecture([1, 4, 1], "tanh")
        model = MetaPriorModel.create(arch, dim=2, hyper_hidden=[8], seed=0,
                                      likelihood="gaussian")
        for q in model.codes.layers:
            q.rho.value[:] = -40.0  # point-mass posteriors
        # point-mass generator head as well
        w_head, b_head = model.hyper.params[-1]
        b_head.value[1] = -40.0
        w_head.value[:, 1] = 0.0
        path = tmp_path / "degenerate.json"
        save_checkpoint(path, model)
        rows, header = sample_weight_correlations(path, tmp_path / "c.csv",
                                                  layer=1, unit=0,
                                                  n_samples=6, seed=0)
        assert header[:2] == ["offset_0", "offset_1"]
        np.testing.assert_allclose(rows - rows[0], 0.0, atol=1e-15)

    def test_row_layout(self, cubic_run, tmp_path):
        rows, header = sample_weight_correlations(
            os.path.join(cubic_run, "checkpoint.json"), tmp_path / "c.csv",
            layer=1, unit=2, n_samples=8, seed=3)
        assert rows.shape == (8, 2 + 1 + 1)  # D=2 offsets, 1 in, 1 out
        assert header == ["offset_0", "offset_1", "in_0", "out_0"]


class TestDumpEmbeddings:
    def test_row_count_and_onehot_basis(self, tmp_path):
        arch = Architecture([3, 4, 2], "tanh")
        model = MetaPriorModel.create(arch, kind="onehot", hyper_hidden=[8],
                                      seed=0, likelihood="categorical")
        path = tmp_path / "oh.json"
        save_checkpoint(path, model)
        means, sigmas, proj = dump_embeddings(path, tmp_path / "emb.csv")
        assert means.shape == (9, 9)
        np.testing.assert_array_equal(means, np.eye(9))
        with open(tmp_path / "emb.csv") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 9
        assert rows[3]["layer"] == "1" and rows[3]["index"] == "0"
