import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rct_lab.errors import DomainError, EmptyTrainingSetError, TraceFormatError
from rct_lab.evaluation import (
    SERIES_COLUMNS,
    EvaluationReport,
    read_series_csv,
    report_from_files,
    rmse,
    run_experiment,
    samples_from_trace,
    train_model,
    write_series_csv,
)
from rct_lab.profile import partition_cc
from rct_lab.resistance import build_model, voltage_mse
from rct_lab.scenarios import scenario_cc, scenario_cv, training_setups
from rct_lab.simulation import ChargerModel

finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestRmse:
    def test_identical(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_hand_value(self):
        assert rmse([3.0, 4.0], [0.0, 0.0]) == pytest.approx(np.sqrt(25 / 2), abs=1e-12)
        assert rmse([3.0, 4.0], [0.0, 0.0]) == pytest.approx(3.53553, abs=1e-5)

    @given(st.lists(finite, min_size=1, max_size=50), finite)
    def test_constant_bias(self, truth, bias):
        est = [t + bias for t in truth]
        assert rmse(est, truth) == pytest.approx(abs(bias), rel=1e-9, abs=1e-9)

    @given(st.lists(st.tuples(finite, finite), min_size=1, max_size=50))
    def test_non_negative(self, pairs):
        e, t = zip(*pairs)
        assert rmse(e, t) >= 0

    @pytest.mark.parametrize("e, t", [([], []), ([1.0], [1.0, 2.0])])
    def test_bad_shapes(self, e, t):
        with pytest.raises(DomainError):
            rmse(e, t)


@pytest.fixture(scope="module")
def cc_report(tmp_path_factory):
    return run_experiment(scenario_cc(), out_dir=tmp_path_factory.mktemp("cc"))


@pytest.fixture(scope="module")
def cv_report(trained_model):
    return run_experiment(scenario_cv(), model=trained_model)


class TestReports:
    def test_cc_improvement(self, cc_report):
        assert cc_report.improvement_percent >= 60.0
        assert cc_report.passed

    def test_cv_improvement(self, cv_report):
        assert cv_report.improvement_percent >= 70.0
        assert cv_report.baseline_under_fraction >= 0.9

    def test_improvement_at_most_100(self, cc_report, cv_report):
        assert cc_report.improvement_percent <= 100 and cv_report.improvement_percent <= 100

    def test_self_consistency(self, cc_report, tmp_path):
        report_path, series_path = cc_report.write(tmp_path)
        summary = json.loads(report_path.read_text())
        series = read_series_csv(series_path)
        assert summary["rmse_minutes"]["proposed"] == rmse(series["est_proposed_min"], series["true_rct_min"])
        assert summary["rmse_minutes"]["baseline"] == rmse(series["est_baseline_min"], series["true_rct_min"])
        assert summary["schema_version"] == 1
        again = report_from_files(report_path)
        assert again.checks == cc_report.checks

    @pytest.mark.parametrize("name", ["cc_report", "cv_report"])
    def test_terminal_convergence(self, name, request):
        rep = request.getfixturevalue(name)
        tick_min = rep.tick_s / 60.0
        assert abs(rep.errors_proposed[-1]) <= tick_min
        assert abs(rep.errors_baseline[-1]) <= tick_min

    def test_ticks_every_ten_seconds(self, cc_report):
        assert np.all(np.diff(cc_report.series["time_s"]) == 10.0)

    def test_cc_estimate_is_smooth(self, cc_report):
        """Tick-to-tick change is bounded by one tick of charging plus the accuracy update."""
        s = cc_report.series
        est, eta = s["est_proposed_min"], s["eta_cc"]
        tick_min = cc_report.tick_s / 60.0
        max_ratio = 0.85 * 1.05  # highest realized accuracy in the scenario
        for k in range(len(est) - 1):
            charge_work = est[k] * eta[k]  # remaining time at unit accuracy
            bound = tick_min * max_ratio / eta[k + 1] + charge_work * abs(1 / eta[k + 1] - 1 / eta[k])
            assert abs(est[k + 1] - est[k]) <= bound + 1e-9

    def test_perfect_charger_and_model(self):
        setup = replace(scenario_cc(), charger=ChargerModel(10.0, ((0.0, 1.0),)), initial_eta=1.0, thresholds={})
        rep = run_experiment(setup, model=setup.law)
        shortest = min(d / r for d, r in partition_cc(setup.profile, setup.start_soc, setup.target_soc).segments) * 60
        assert rep.rmse_proposed < shortest and rep.rmse_baseline < shortest

    def test_unknown_threshold(self):
        setup = replace(scenario_cc(), thresholds={"bogus": 1.0})
        with pytest.raises(DomainError):
            run_experiment(setup, model=setup.law)


class TestSeriesFiles:
    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_experiment(scenario_cc(seed=7), out_dir=a)
        run_experiment(scenario_cc(seed=7), out_dir=b)
        assert (a / "cc_series.csv").read_bytes() == (b / "cc_series.csv").read_bytes()

    def test_schema_line(self, tmp_path):
        path = tmp_path / "s.csv"
        write_series_csv(path, {c: np.array([1.0]) for c in SERIES_COLUMNS})
        assert path.read_text().splitlines()[0] == "# schema_version=1"

    def test_corrupt_row_named(self, tmp_path):
        path = tmp_path / "s.csv"
        write_series_csv(path, {c: np.array([1.0, 2.0]) for c in SERIES_COLUMNS})
        text = path.read_text().replace("2.0,2.0,2.0", "2.0,oops,2.0", 1)
        path.write_text(text)
        with pytest.raises(TraceFormatError, match=":4:"):
            read_series_csv(path)

    def test_wrong_columns(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(TraceFormatError):
            read_series_csv(path)


@pytest.fixture(scope="module")
def training_traces():
    setups = training_setups()
    return [s.run() for s in setups], setups[0].ocv


class TestTraining:
    def test_held_out_voltage_error(self, training_traces):
        traces, ocv = training_traces
        samples = [s for tr in traces for s in samples_from_trace(tr, ocv)]
        held_out, kept = samples[::5], [s for k, s in enumerate(samples) if k % 5]
        fit = build_model(kept)
        assert np.sqrt(voltage_mse(fit.model, held_out)) < 2e-3

    def test_single_unit_is_worse(self, training_traces):
        traces, ocv = training_traces
        one = train_model(traces, ocv, n_hidden=1)
        many = train_model(traces, ocv, n_hidden=25)
        assert one.mse_v2 > many.mse_v2

    def test_writes_model(self, training_traces, tmp_path):
        traces, ocv = training_traces
        path = tmp_path / "m.json"
        summary = train_model(traces[:3], ocv, n_hidden=5, out_model_file=path)
        assert json.loads(path.read_text())["n_hidden"] == 5
        assert summary.n_samples > 0

    def test_no_cv_rows(self):
        trace = scenario_cc().run()
        with pytest.raises(EmptyTrainingSetError):
            train_model([trace], scenario_cc().ocv)

    def test_samples_only_from_cv(self, training_traces):
        traces, ocv = training_traces
        samples = samples_from_trace(traces[0], ocv)
        assert min(s.soc for s in samples) >= traces[0].turning_soc
