"""End-to-end smoke tests for the python package."""

import math

import pytest

import mmfl


def test_version_string():
    assert isinstance(mmfl.__version__, str) and mmfl.__version__


def test_alpha_fair_probabilities():
    p = mmfl.alpha_fair_probabilities([0.9, 0.3], 3.0)
    assert p[0] == pytest.approx(0.9, abs=1e-12)
    assert p[1] == pytest.approx(0.1, abs=1e-12)
    uniform = mmfl.alpha_fair_probabilities([2.0, 5.0, 1.0], 1.0)
    assert uniform == pytest.approx([1 / 3] * 3, abs=1e-12)


def test_proportional_share_worked_example():
    out = mmfl.proportional_share([1.0, 2.0, 3.0, 4.0], 6.0)
    assert out["take_up"] == [pytest.approx(2.0)]
    assert out["payments"][0][0] == pytest.approx(3.0)
    assert out["payments"][1][0] == pytest.approx(3.0)
    assert out["x"][2][0] == 0.0


def test_maxmin_auction_worked_example():
    bids = [[0.2, None], [0.3, None], [0.9, None], [None, 0.6], [None, 1.4]]
    out = mmfl.run_auction("maxmin", bids, 2.0)["outcome"]
    assert out["take_up"][0] == pytest.approx(2.0)
    assert out["take_up"][1] == pytest.approx(9.0 / 7.0)
    assert out["min_take_up"] == pytest.approx(9.0 / 7.0)
    assert out["payments"][0][0] == pytest.approx(0.3)
    assert out["payments"][3][1] == pytest.approx(1.0)
    assert out["x"][4][1] == pytest.approx(2.0 / 7.0)


def test_fairness_metrics_keys():
    rep = mmfl.fairness_metrics([1.0, 3.0])
    assert rep["mean"] == pytest.approx(2.0)
    assert rep["variance"] == pytest.approx(1.0)
    assert rep["min"] == pytest.approx(1.0)
    assert rep["cosine_ratio"] == pytest.approx(4.0 / math.sqrt(10.0))


def test_starvation_closed_forms():
    mm = mmfl.starvation_probability_exponential(1.0, 2.0, 2, "maxmin")
    bf = mmfl.starvation_probability_exponential(1.0, 2.0, 2, "budget-fair")
    assert mm == pytest.approx(0.4060058497098381, abs=1e-12)
    assert bf == pytest.approx(0.600423599106272, abs=1e-12)
    assert mm < bf


def test_expected_inverse_selection_size():
    assert mmfl.expected_inverse_selection_size([1.0, 1.0], 2.0, 2) == pytest.approx(0.625)


def test_brute_force_optimum():
    out = mmfl.brute_force_alpha_fair_optimum([[3.0, 2.0, 1.0], [5.0, 4.0, 3.9]], 2, 1.0)
    assert out["counts"] == [1, 1]
    assert out["objective"] == pytest.approx(6.0)


def test_presets_parse():
    names = mmfl.preset_names()
    assert len(names) == 6
    for name in names:
        cfg = mmfl.preset_config(name)
        assert cfg["tasks"] and cfg["seeds"]


TINY_CONFIG = {
    "name": "smoke",
    "tasks": [{"difficulty": 1.0, "input_dim": 2, "n_classes": 2, "loss_kind": "least_squares"}],
    "n_clients": 4,
    "points_per_client": [6, 6],
    "noniid_fraction": 0.0,
    "test_points_per_task": 16,
    "participation": 1.0,
    "training": {"tau": 1, "batch_size": 8, "rounds": 3, "lr": {"kind": "constant", "eta": 0.1}},
    "policies": [{"kind": "random"}],
    "seeds": [3],
}


def test_simulate_analyze_roundtrip(tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    files = mmfl.simulate(TINY_CONFIG, out_a)
    names = sorted(p.split("/")[-1] for p in files)
    assert "random_seed3.csv" in names
    assert "random_aggregate.csv" in names

    report = mmfl.analyze(out_a)
    policy = report["policies"]["random"]
    assert policy["seeds"] == 1
    # One seed-averaged final accuracy per task.
    assert all(0.0 <= a <= 1.0 for a in policy["mean_final_accuracy"])
    assert 0.0 <= policy["mean_min_accuracy"] <= 1.0
    assert "cosine_ratio" in policy["fairness"]

    mmfl.simulate(TINY_CONFIG, out_b)
    csv_a = (out_a / "random_seed3.csv").read_bytes()
    csv_b = (out_b / "random_seed3.csv").read_bytes()
    assert csv_a == csv_b and csv_a.startswith(b"round,task_id,loss,accuracy,n_selected\n")


def test_unknown_config_key_rejected(tmp_path):
    bad = dict(TINY_CONFIG)
    bad["bogus"] = 1
    with pytest.raises(Exception, match="unknown key 'bogus'"):
        mmfl.simulate(bad, tmp_path / "x")
