import dataclasses

import numpy as np
import pytest

from cfisac.harness import (
    MULTI,
    SINGLE,
    CampaignConfig,
    TrialError,
    compare_modes,
    comparison_summary,
    compute_cdf,
    grid_points,
    run_campaign,
    run_trial,
    trial_seed,
)
from cfisac.scenario import ScenarioConfig

from oracles import CHI3_MEDIAN, chi3_median

COMPACT = ScenarioConfig(volume=(400.0, 400.0, 60.0))


def _config(**kw):
    base = dict(scenario=COMPACT, trials=5, sigma_ranges=(0.5,), accuracies=(0.9,))
    base.update(kw)
    return CampaignConfig(**base)


def test_cdf_examples():
    assert compute_cdf([4, 1, 3, 2]).quantile(0.5) == 2.5
    assert compute_cdf([1, 2, 3, 4]).median == 2.5
    c = compute_cdf([1.7] * 9)
    assert all(c.quantile(q) == 1.7 for q in (0, 0.1, 0.5, 0.99, 1))
    with pytest.raises(ValueError):
        compute_cdf([])
    cdf = compute_cdf([3.0, 1.0, 2.0])
    assert np.all(np.diff(cdf.values) >= 0)
    assert cdf.cdf(2.0) == pytest.approx(2 / 3)


def test_chi3_oracle_frozen():
    assert chi3_median() == pytest.approx(CHI3_MEDIAN, abs=1e-9)


def test_chi3_median_of_gaussian_norms():
    draws = np.linalg.norm(np.random.default_rng(0).standard_normal((10_000, 3)), axis=1)
    assert compute_cdf(draws).median == pytest.approx(CHI3_MEDIAN, rel=0.02)


def test_zero_injection_trial_exact():
    cfg = _config(classifier="perfect", sigma_ranges=(0.0,))
    result = run_trial(cfg, 0, 0.0)
    assert result.n_targets == 3 and len(result.errors) == 3
    assert max(result.errors) < 1e-6
    assert result.misses == 0 and result.false_alarms == 0


def test_non_idle_trial_skipped():
    cfg = _config(scenario=dataclasses.replace(COMPACT, n_ue=1, ue_active=True))
    result = run_trial(cfg, 0)
    assert result.idle is False
    assert result.errors == () and result.misses == result.n_targets


def test_signal_level_idle_gate():
    idle = run_trial(_config(signal_level=True, n_symbols=64), 1)
    busy = run_trial(_config(signal_level=True, n_symbols=64,
                             scenario=dataclasses.replace(COMPACT, n_ue=1, ue_active=True)), 1)
    assert idle.idle and not busy.idle


def test_single_trial_campaign_equals_trial():
    cfg = _config(trials=1)
    report = run_campaign(cfg)
    (only,) = report.results[(0.5, 0.9)]
    assert only == run_trial(cfg, 0, 0.5, 0.9)
    point = report.point(0.5, 0.9)
    assert point.n_errors == len(only.errors)
    if only.errors:
        assert point.mean_error == pytest.approx(np.mean(only.errors))


def test_conservation_of_detections():
    report = run_campaign(_config(trials=20, sigma_ranges=(0.1, 1.0), accuracies=(0.9, 0.98)))
    for results in report.results.values():
        for r in results:
            assert r.misses + len(r.errors) == r.n_targets
            assert r.misses >= 0 and r.false_alarms >= 0
            assert all(np.isfinite(r.errors))


def test_reproducible_and_order_independent():
    cfg = _config(trials=6, sigma_ranges=(0.25, 0.5))
    a = run_campaign(cfg)
    b = run_campaign(cfg)
    assert a.points_csv() == b.points_csv() and a.errors_csv() == b.errors_csv()
    # a trial's result depends only on its own index
    assert run_trial(cfg, 4, 0.5, 0.9) == a.results[(0.5, 0.9)][4]
    reversed_grid = run_campaign(cfg, grid=[(0.5, 0.9), (0.25, 0.9)])
    assert reversed_grid.point(0.25, 0.9) == a.point(0.25, 0.9)


def test_parallel_matches_serial():
    cfg = _config(trials=4)
    assert run_campaign(cfg).errors_csv() == run_campaign(dataclasses.replace(cfg, workers=2)).errors_csv()


def test_trial_seeds_distinct():
    states = {tuple(trial_seed(0, t).generate_state(2)) for t in range(100)}
    assert len(states) == 100


def test_grid_points():
    cfg = _config(sigma_ranges=(0.1, 0.5), accuracies=(0.98, 0.9))
    assert grid_points(cfg) == [(0.1, 0.98), (0.1, 0.9), (0.5, 0.98), (0.5, 0.9)]
    assert grid_points(dataclasses.replace(cfg, mode=SINGLE)) == [(0.1, None), (0.5, None)]


def test_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        _config(trials=0)
    with pytest.raises(ValueError):
        _config(sigma_ranges=())
    with pytest.raises(ValueError):
        _config(mode="both")
    cfg = _config(seed=7)
    assert CampaignConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        CampaignConfig.from_dict({"trails": 3})


def test_trial_errors_carry_context():
    cfg = _config(scenario=dataclasses.replace(COMPACT, n_rru=1))
    with pytest.raises(TrialError, match="trial 3"):
        run_trial(cfg, 3)


def test_compare_modes_shares_seeds():
    multi, single = compare_modes(_config(trials=10), 0.5, 0.9)
    assert multi.config.mode == MULTI and single.config.mode == SINGLE
    assert [r.n_targets for r in multi.results[(0.5, 0.9)]] == [r.n_targets for r in single.results[(0.5, None)]]
    summary = comparison_summary(multi, single)
    assert summary["median_ratio"] == pytest.approx(multi.points[0].median_error / single.points[0].median_error)
