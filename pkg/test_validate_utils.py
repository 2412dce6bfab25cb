import json

import numpy as np
import pytest

from file_utils import read_report_json, read_samples_csv
from gaussian_utils import RngStream
from oracle_utils import ConfigurationError, DomainError
import validate_utils
from validate_utils import (
    CheckResult,
    RunConfig,
    bench,
    check_accelerated_kappa_scaling,
    json_safe,
    mean_within_se,
    ratio_spread_check,
    run,
    run_chains,
    two_sample_test,
    validate,
)


def small_config(tmp_path=None, chains=4, **overrides):
    data = {
        "model": {"kind": "gaussian", "dim": 2, "params": {"eigenvalues": [1.0, 2.0]}},
        "sampler": "reduction_direct",
        "eps": 0.1,
        "seed": 11,
        "chains": chains,
        "constants": {"iteration_constant": 0.5},
    }
    if tmp_path is not None:
        data["samples_path"] = str(tmp_path / "samples.csv")
        data["report_path"] = str(tmp_path / "report.json")
    data.update(overrides)
    return RunConfig.from_dict(data)


def test_config_lists_every_problem():
    with pytest.raises(ConfigurationError) as e:
        RunConfig.from_dict({"model": {"kind": "gaussian"}, "sampler": "wellcond"})
    problems = " ".join(e.value.problems)
    assert "'eps'" in problems and "'seed'" in problems


def test_config_rejects_incompatible_sampler():
    with pytest.raises(ConfigurationError) as e:
        RunConfig.from_dict({"model": {"kind": "logistic_finitesum", "dim": 2}, "sampler": "wellcond",
                             "eps": 0.1, "seed": 0})
    assert any("cannot run" in p for p in e.value.problems)


def test_config_rejects_bad_values():
    with pytest.raises(ConfigurationError) as e:
        RunConfig.from_dict({"model": {"kind": "gaussian"}, "sampler": "wellcond", "eps": 1.5, "seed": -1,
                             "chains": 0, "constants": {"c_unknown": 1.0}, "colour": "red"})
    assert len(e.value.problems) == 5


def test_config_round_trip():
    config = small_config()
    assert RunConfig.from_dict(config.to_dict()) == config


def test_json_safe():
    out = json_safe({"a": np.float64(1.5), "b": np.array([1, 2]), "c": float("inf"), 3: np.bool_(True)})
    assert out == {"a": 1.5, "b": [1, 2], "c": "inf", "3": True}
    json.dumps(out)


def test_run_writes_samples_and_report(tmp_path):
    config = small_config(tmp_path)
    report = run(config, workers=2, progress=False)
    assert report.samples.shape == (4, 2)
    np.testing.assert_array_equal(read_samples_csv(config.samples_path), report.samples)
    saved = read_report_json(config.report_path)
    assert saved["chains"] == 4
    assert "wall_time" not in saved
    assert saved["queries_total"]["rgo"] > 0
    assert saved["iterations_mean"] > 0
    assert saved["optimizer_tol"] > 0


def test_chains_do_not_depend_on_worker_count():
    config = small_config(chains=3)
    serial = run_chains(config, workers=1, progress=False)
    threaded = run_chains(config, workers=3, progress=False)
    for a, b in zip(serial, threaded):
        np.testing.assert_array_equal(a.sample, b.sample)
        assert a.queries == b.queries


def test_two_sample_identical_inputs():
    a = RngStream(1).normal((300, 2))
    result = two_sample_test(a, a.copy(), RngStream(2), permutations=99)
    assert result.p_value == 1.0


def test_two_sample_detects_shift():
    a = RngStream(3).normal((400, 1))
    b = RngStream(4).normal((400, 1)) + 0.5
    result = two_sample_test(a, b, RngStream(5), permutations=199)
    assert result.p_value < 0.01


def test_two_sample_dimension_mismatch():
    with pytest.raises(DomainError):
        two_sample_test(np.zeros((10, 2)), np.zeros((10, 3)))


def test_check_helpers():
    assert mean_within_se("m", [0.9, 1.1, 1.0, 1.0], 1.0).passed
    assert not mean_within_se("m", [2.0, 2.1, 1.9, 2.0], 1.0).passed
    result = ratio_spread_check("r", [1.0, 2.0, 4.0], [3.0, 12.0, 48.0], power=2.0)
    assert result.passed
    assert result.details["slope"] == pytest.approx(2.0)
    assert CheckResult("c", passed=True).to_dict()["retried"] is False


def test_unknown_suite_and_sweep():
    with pytest.raises(ConfigurationError):
        validate("nonsense")
    with pytest.raises(ConfigurationError):
        bench("temperature")


def test_structural_suite_passes():
    report = validate("structural", seed=7, scale=0.2)
    assert report.tests
    failed = [t.name for t in report.tests if not t.passed]
    assert report.passed, failed


def test_accelerated_scaling_reads_tallies_not_outer_calls(monkeypatch):
    # outer calls grow like kappa, but the measured work per inner iteration grows like kappa^3
    monkeypatch.setattr(validate_utils, "accelerated_iterations",
                        lambda kappa, seed, path: (int(kappa), kappa ** 3, 1.0))
    result = check_accelerated_kappa_scaling(RngStream(0), 0.1, 0.01)
    assert not result.passed
    assert result.details["finitesum_accel_kappa"]["slope"] == pytest.approx(3.0)


def test_accelerated_scaling_divides_out_inner_cost(monkeypatch):
    monkeypatch.setattr(validate_utils, "accelerated_iterations",
                        lambda kappa, seed, path: (int(kappa), 10.0 * kappa * kappa, kappa))
    result = check_accelerated_kappa_scaling(RngStream(0), 0.1, 0.01)
    assert result.passed
    assert result.details["composite_accel_kappa"]["slope"] == pytest.approx(1.0)
