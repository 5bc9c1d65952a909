import numpy as np
import pytest

from lsmder import bench, cli
from lsmder.config import apply_overrides, task_defaults

TINY = {"liquid.num_neurons": "24", "p_patterns": "6", "trainer.n_t": "4", "trainer.n_r": "5",
        "trainer.max_iter": "20", "ppr.epochs": "3", "task1.t_max": "0.2", "task2.duration": "0.2",
        "der.m": "2", "der.k": "3", "trials": "0,1"}


def tiny(task="spike_classification", **extra):
    return apply_overrides(task_defaults(task), {**TINY, **{k.replace("__", "."): v for k, v in extra.items()}})


@pytest.fixture(scope="module")
def trial1():
    cfg = tiny()
    return cfg, bench.prepare_trial(cfg, 0)


class TestTrial:
    def test_streams_independent_and_reproducible(self):
        a, b = bench.trial_streams(3), bench.trial_streams(3)
        assert a["data"].random() == b["data"].random()
        assert a["liquid"].random() != bench.trial_streams(3)["data"].random()

    def test_shapes_and_balance(self, trial1):
        cfg, tr = trial1
        assert tr.X_train.shape == tr.X_test.shape == (6 * 8, 24)
        assert tr.samples_per_pattern == 8
        assert np.bincount(tr.labels_test).tolist() == [3, 3]
        np.testing.assert_array_equal(tr.t_train, np.repeat([0, 1, 0, 1, 0, 1], 8))

    def test_train_test_separate(self, trial1):
        _, tr = trial1
        assert not np.array_equal(tr.X_train, tr.X_test)

    def test_deterministic(self, trial1):
        cfg, tr = trial1
        again = bench.prepare_trial(cfg, 0)
        np.testing.assert_array_equal(again.X_train, tr.X_train)
        assert again.x_thr == tr.x_thr

    def test_approximation_targets(self):
        cfg = tiny("sum_of_rates")
        tr = bench.prepare_trial(cfg, 0)
        assert tr.labels_test is None and tr.x_thr == 80.0
        assert np.all((tr.t_train >= 0) & (tr.t_train <= 1))


class TestReadouts:
    def test_der_result(self, trial1):
        cfg, tr = trial1
        res = bench.train_der(cfg, tr)
        assert res.pair.positive.m == 2 and len(res.trace.mae) == 20
        assert res.train_mae == pytest.approx(res.trace.best_mae)
        assert 0 <= res.pattern_test_mae <= 1

    def test_ppr_result(self, trial1):
        cfg, tr = trial1
        res = bench.train_ppr(cfg, tr, n=3)
        assert res.bank.n == 3 and len(res.trace) == 4 and res.squash == "sign01"

    def test_ppr_approximation_mapping(self):
        cfg = tiny("sum_of_rates")
        tr = bench.prepare_trial(cfg, 0)
        res = bench.train_ppr(cfg, tr, n=4)
        assert res.squash == "clipped"
        # trace is in target units: the stored best equals the scored training error
        assert min(res.trace) == pytest.approx(res.train_mae)

    def test_ppr_sigmoid_matched_mode(self):
        cfg = tiny("sum_of_rates", ppr__approx_squash="sigmoid_half")
        tr = bench.prepare_trial(cfg, 0)
        res = bench.train_ppr(cfg, tr, n=4)
        assert res.squash == "sigmoid_half"
        assert min(res.trace) == pytest.approx(res.train_mae)
        out = bench.ppr_outputs(cfg, res.bank, tr.X_test, res.squash, res.variant, res.nl)
        assert np.all((out > 0) & (out < 1))

    def test_square_variant_defaults_nl(self, trial1):
        cfg, tr = trial1
        res = bench.train_ppr(cfg, tr, n=2, variant="square")
        assert res.nl is not None and res.nl.x_thr == tr.x_thr


class TestExperiment:
    def test_records_and_files(self, tmp_path):
        cfg = tiny()
        writer = bench.RecordWriter(tmp_path)
        recs = bench.run_experiment(cfg, writer)
        assert [(r.seed, r.readout) for r in recs] == [(0, "der"), (0, "ppr"), (1, "der"), (1, "ppr")]
        back = bench.read_records(tmp_path / "records.jsonl")
        assert back == recs
        assert all((tmp_path / r.trace).exists() for r in recs)
        assert {r.digest for r in recs} == {cfg.digest()}

    def test_single_seed_one_record_per_readout(self):
        recs = bench.run_experiment(tiny(trials="3"))
        assert sorted(r.readout for r in recs) == ["der", "ppr"]

    def test_rerun_identical(self):
        cfg = tiny(trials="4")
        a = bench.run_experiment(cfg)
        b = bench.run_experiment(cfg)
        assert [(r.train_mae, r.test_mae) for r in a] == [(r.train_mae, r.test_mae) for r in b]

    def test_workers_match_serial(self):
        cfg = tiny()
        serial = bench.run_experiment(cfg)
        par = bench.run_experiment(apply_overrides(cfg, {"workers": "2"}))
        assert [(r.seed, r.test_mae) for r in serial] == [(r.seed, r.test_mae) for r in par]

    def test_mean_mae(self):
        recs = bench.run_experiment(tiny(trials="0", readouts="der"))
        assert bench.mean_mae(recs, "der") == recs[0].test_mae
        with pytest.raises(ValueError):
            bench.mean_mae(recs, "ppr")


class TestMarkers:
    def test_worked_example(self):
        ppr = [1.0, 0.6, 0.5, 0.5, 0.5, 0.5]
        der = [1.1, 0.8, 0.55, 0.45, 0.3]
        mk = bench.convergence_markers(der, ppr, window=2, tol=1e-4)
        assert mk == bench.Markers(n0=3, n1=4, n2=5)

    def test_identical_traces(self):
        assert bench.convergence_markers([0.5, 0.4], [0.5, 0.4]).n1 == 1

    def test_decreasing_der_minimum_is_last(self):
        assert bench.convergence_markers([0.5, 0.4, 0.3, 0.2], [0.9]).n2 == 4

    def test_never_crosses(self):
        mk = bench.convergence_markers([0.9, 0.8], [0.1, 0.1, 0.1], window=5)
        assert mk.n1 is None and mk.n2 == 2

    def test_hold_last_value(self):
        # the PPR curve ends at 0.4; DER drops below it only after the PPR trace is over
        mk = bench.convergence_markers([0.9, 0.9, 0.9, 0.3], [0.5, 0.4], window=5)
        assert mk.n1 == 4

    def test_empty(self):
        with pytest.raises(ValueError):
            bench.convergence_markers([], [1.0])


class TestSweeps:
    def test_dendrite_shapes(self):
        assert bench.dendrite_shapes("fixed_k", [1, 3], 7, 10) == [(1, 10), (3, 10)]
        assert bench.dendrite_shapes("fixed_s", [2, 35], 7, 10) == [(2, 35), (35, 2)]
        with pytest.raises(ValueError):
            bench.dendrite_shapes("fixed_s", [3], 7, 10)
        with pytest.raises(ValueError):
            bench.dendrite_shapes("other", [1], 7, 10)

    def test_sweep_n_has_reference(self):
        recs = bench.sweep_ppr_n(tiny(trials="0"), [1, 2])
        assert [(r.readout, r.params.get("n"), r.params.get("sweep")) for r in recs] == \
               [("der", None, "reference"), ("ppr", 1, None), ("ppr", 2, None)]
        table = bench.sweep_table(recs, "n")
        assert ("der", "reference") in [row[:2] for row in table]

    def test_sweep_n_single_value(self):
        recs = bench.sweep_ppr_n(tiny(trials="0"), [3])
        assert [r.readout for r in recs].count("ppr") == 1

    def test_sweep_xsat(self):
        recs = bench.sweep_xsat(tiny(trials="0"), [1.0, float("inf")])
        assert [r.params["x_sat"] for r in recs] == [1.0, float("inf")]

    def test_sweep_dendrites_bits(self):
        recs = bench.sweep_dendrites(tiny(trials="0"), "fixed_s", [1, 6])
        assert [(r.params["m"], r.params["k"]) for r in recs] == [(1, 6), (6, 1)]
        assert all(r.params["bits"] > 0 for r in recs)


class TestRobustness:
    def test_rows_and_deltas(self):
        rows = bench.robustness(tiny(trials="0"), ("tau", "all"))
        modes = [(m, r) for m, r, _, _ in rows]
        assert modes[:2] == [("none", "der"), ("none", "ppr")]
        assert ("all", "ppr") in modes and ("tau", "der") in modes
        deltas = bench.robustness_deltas(rows, "all")
        assert set(deltas) == {"der", "ppr"}

    def test_none_row_matches_plain_evaluation(self):
        cfg = tiny(trials="0")
        tr = bench.prepare_trial(cfg, 0)
        der = bench.train_der(cfg, tr)
        rows = bench.robustness_rows(cfg, tr, der, ())
        assert rows[0][3] == pytest.approx(der.test_mae, abs=1e-12)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            bench.robustness(tiny(trials="0"), ("heat",))


class TestCli:
    def args(self, tmp_path, *extra):
        sets = [a for k, v in TINY.items() if k != "trials" for a in ("--set", f"{k}={v}")]
        return [*extra, "--out", str(tmp_path), "--seed", "0", "--trials", "1", *sets]

    def test_run(self, tmp_path, capsys):
        assert cli.main(["run", *self.args(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "der: mean train MAE" in out and (tmp_path / "records.jsonl").exists()
        assert (tmp_path / "config.txt").exists()

    def test_show_config(self, capsys):
        assert cli.main(["show-config", "--task", "sum_of_rates"]) == 0
        assert "der.x_thr = 80.0" in capsys.readouterr().out

    def test_capacity(self, tmp_path, capsys):
        assert cli.main(["capacity", "--out", str(tmp_path)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "m,k,bits" and len(lines) == 9

    def test_bad_key(self, capsys):
        assert cli.main(["run", "--set", "bogus=1"]) == 2
        assert "config error" in capsys.readouterr().err

    def test_bad_set_syntax(self):
        assert cli.main(["run", "--set", "noequals"]) == 2

    def test_bad_trials(self):
        assert cli.main(["run", "--trials", "0"]) == 2

    def test_bad_sweep_value(self, tmp_path):
        assert cli.main(["sweep-dendrites", "--mode", "fixed_s", "--values", "4", *self.args(tmp_path)]) == 2

    def test_config_file_conflict(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("task = sum_of_rates\n")
        assert cli.main(["show-config", "--config", str(path), "--task", "spike_classification"]) == 2

    def test_markers(self, tmp_path, capsys):
        assert cli.main(["markers", *self.args(tmp_path)]) == 0
        assert capsys.readouterr().out.startswith("seed,n0,n1,n2")

    def test_sweep_n(self, tmp_path, capsys):
        assert cli.main(["sweep-n", "--values", "1,2", *self.args(tmp_path)]) == 0
        assert (tmp_path / "sweep_n.csv").exists()

    def test_robustness(self, tmp_path, capsys):
        assert cli.main(["robustness", "--modes", "cni", *self.args(tmp_path)]) == 0
        assert capsys.readouterr().out.startswith("cni: delta der")
