import pytest

from src.experiment_runner import ExperimentRunner, run_campaign, run_experiment
from src.models.experiment import ExperimentConfig


def small_cp(**overrides):
    settings = dict(problem="cp-synthetic", method="als", size=5, rank=2, max_iters=3, seed=9)
    settings.update(overrides)
    return ExperimentConfig(**settings)


def test_zero_iteration_trial_reports_no_records():
    summary, records = ExperimentRunner().run_trial(small_cp(max_iters=0).resolved(), 0)
    assert records == []
    assert summary.iterations == 0
    assert summary.stop_reason == "max-iters"
    assert not summary.converged
    assert summary.error is None


def test_trials_are_reproducible():
    config = small_cp(method="lbfgs", precond="lp", m=2, trials=2).resolved()
    runner = ExperimentRunner()
    first, first_traces = runner.run_variant(config)
    second, second_traces = runner.run_variant(config)
    assert [t.iterations for t in first.trials] == [t.iterations for t in second.trials]
    for a, b in zip(first_traces, second_traces):
        assert [r.f for r in a] == [r.f for r in b]
    assert [r.f for r in first_traces[0]] != [r.f for r in first_traces[1]]


def test_threaded_trials_match_sequential():
    config = small_cp(trials=3).resolved()
    sequential, seq_traces = ExperimentRunner(max_workers=1).run_variant(config)
    threaded, thr_traces = ExperimentRunner(max_workers=3).run_variant(config)
    assert [t.trial for t in threaded.trials] == [0, 1, 2]
    for a, b in zip(seq_traces, thr_traces):
        assert [r.f for r in a] == [r.f for r in b]


def test_missing_tensor_file_is_a_failed_trial(tmp_path):
    config = ExperimentConfig(problem="tensor-file", method="hooi", tensor_path=str(tmp_path / "absent.dtns"),
                              tucker_ranks=[2, 2, 2])
    result = run_experiment(config)
    variant = result.summary.variants[0]
    trial = variant.trials[0]
    assert trial.stop_reason == "error"
    assert not trial.converged
    assert trial.error
    assert variant.table_cell() == "*0.0"
    assert not result.summary.all_converged


def test_duplicate_labels_are_numbered():
    config = small_cp()
    result = run_campaign([config, config, config])
    labels = [v.label for v in result.summary.variants]
    assert labels == ["ALS", "ALS #2", "ALS #3"]
    assert set(result.traces) == set(labels)


def test_variant_summary_counts():
    result = run_experiment(small_cp(trials=2, max_iters=2))
    variant = result.summary.variants[0]
    assert variant.converged_trials == 0
    assert variant.mean_iterations == pytest.approx(2.0)
    assert variant.table_cell() == "*2.0"
    assert variant.config.sweep == "f"
    assert [len(t) for t in result.traces["ALS"]] == [2, 2]
