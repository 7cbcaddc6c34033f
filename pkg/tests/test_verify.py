import pytest

from mpssm import verify
from mpssm.config import load_config
from mpssm.exceptions import UsageError, VerificationError
from mpssm.sensitivity import CheckResult


@pytest.fixture
def config():
    return load_config()


def test_default_checks_skip_training():
    assert {"training", "ladder"} <= set(verify.CHECKS)
    assert set(verify.DEFAULT_CHECKS) == set(verify.CHECKS) - {"training", "ladder"}


def test_run_jacobian(config):
    report = verify.run_suite(config, seed=0, only=["jacobian"])
    assert report["passed"]
    (row,) = report["checks"]
    assert row["name"] == "jacobian"
    assert row["detail"]["max_relative_error"] < verify.JACOBIAN_TOL
    assert row["seconds"] >= 0.0


def test_run_locality(config):
    report = verify.run_suite(config, seed=1, only=["locality"])
    assert [row["name"] for row in report["checks"]] == ["receptive_field", "equivariance"]
    assert report["passed"]


def test_run_gradients(config):
    report = verify.run_suite(config, seed=0, only=["gradients"])
    assert [row["name"] for row in report["checks"]] == [
        "gradients_sequential", "gradients_fast_merged"]
    assert report["passed"]


def test_run_global_bound(config, mocker):
    spy = mocker.spy(verify, "sensitivity_profile")
    report = verify.run_suite(config, seed=0, only=["global_bound"])
    assert report["passed"]
    bound, tight = report["checks"]
    assert bound["detail"]["reports"] == 20 * 5 * 65
    assert bound["detail"]["failures"] == []
    assert spy.call_count == 20 * 5 * 65 + 64
    widths = {call.args[1].shape[0] for call in spy.call_args_list[:-64]}
    assert len(widths) > 1
    assert tight["passed"]


def test_run_min_bound_on_tight_graphs(config):
    report = verify.run_suite(config, seed=1, only=["min_bound"])
    rows = {row["name"]: row for row in report["checks"]}
    assert rows["min_bound"]["passed"]
    assert rows["min_bound"]["detail"]["delta"] == 200
    clique_chain = rows["clique_chain"]["detail"]
    assert clique_chain["delta"] == config["verify.bottleneck_delta"]
    assert clique_chain["tolerance"] == verify.BOTTLENECK_TOL


def test_ladder_check(config, mocker):
    scores = {"gcn": -1.0, "linear_gcn": -1.5, "mpssm": -2.5}
    ladder = mocker.patch("mpssm.train.ablation_ladder", return_value=scores)
    mocker.patch.object(verify, "_training_dataset", return_value="dataset")
    (result,) = verify.check_ladder(config, 4)
    assert result.passed
    assert result.detail == {"log10_mse": scores}
    assert len(ladder.call_args.kwargs["seeds"]) == config["verify.train_seeds"]

    ladder.return_value = dict(scores, linear_gcn=-3.0)
    (result,) = verify.check_ladder(config, 4)
    assert not result.passed


def test_unknown_check(config):
    with pytest.raises(UsageError):
        verify.run_suite(config, only=["jacobian", "telepathy"])


def test_failed_check_is_reported(config, mocker):
    failing = mocker.Mock(return_value=[CheckResult("always_fails", False, {"why": "mocked"})])
    mocker.patch.dict(verify.CHECKS, {"jacobian": failing})
    report = verify.run_suite(config, seed=3, only=["jacobian"])
    failing.assert_called_once_with(config, 3)
    assert not report["passed"]
    with pytest.raises(VerificationError) as excinfo:
        verify.raise_for_failures(report)
    assert excinfo.value.failed == ["always_fails"]


def test_raise_for_failures_passes():
    verify.raise_for_failures({"checks": [{"name": "jacobian", "passed": True}]})


@pytest.mark.slow
def test_default_suite_passes(config):
    report = verify.run_suite(config, seed=0)
    failed = [row["name"] for row in report["checks"] if not row["passed"]]
    assert failed == []
