import json

import pandas as pd
import pytest

from bid_shading.benchmarks import PolicyContext, create_policy
from bid_shading.config import OUTPUT_DIR_VARIABLE, ExperimentConfig, PolicyConfig, load_config
from bid_shading.errors import ConfigError
from bid_shading.landscape import FeedbackRecord
from bid_shading.main import main, run_experiment
from bid_shading.storage import read_json, save_policy, write_feedback
from bid_shading.winrate import FeatureVector, WinRateModel

SMALL = {
    "n_train": 100,
    "n_eval": 100,
    "policies": ["fixed", "mpp"],
    "baseline": "mpp",
    "seed": 3,
    "grid_n": 1000
}


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    monkeypatch.delenv(OUTPUT_DIR_VARIABLE, raising=False)
    monkeypatch.chdir(tmp_path)


def _config(tmp_path, **overrides):
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps({**SMALL, **overrides}))
    return str(path)


def _lines(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def test_simulate_writes_streams(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", _config(tmp_path), "--out", str(out)]) == 0
    train = _lines(out / "train_feedback.jsonl")
    assert len(train) == 100
    assert all(row["v"] == 1 and "min_bid_to_win" in row for row in train)
    assert len(_lines(out / "eval_requests.jsonl")) == 100
    assert (out / "vocabulary.json").exists()


def test_simulate_hides_mbtw(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", _config(tmp_path), "--out", str(out), "--no-reveal-mbtw"]) == 0
    assert all("min_bid_to_win" not in row for row in _lines(out / "train_feedback.jsonl"))


def test_simulate_is_deterministic(tmp_path):
    config = _config(tmp_path)
    main(["simulate", "--config", config, "--out", str(tmp_path / "a")])
    main(["simulate", "--config", config, "--out", str(tmp_path / "b")])
    for name in ("train_feedback.jsonl", "eval_feedback.jsonl", "eval_requests.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    main(["simulate", "--config", config, "--out", str(tmp_path / "c"), "--seed", "4"])
    assert (tmp_path / "a" / "train_feedback.jsonl").read_bytes() != (tmp_path / "c" / "train_feedback.jsonl").read_bytes()


def test_invalid_landscape_exits_with_config_code(tmp_path, capsys):
    config = _config(tmp_path, landscape={"kind": "pareto", "params": {}})
    assert main(["simulate", "--config", config]) == 2
    assert "landscape.kind" in capsys.readouterr().err


def test_unwritable_output_exits_with_config_code(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["simulate", "--config", _config(tmp_path), "--out", str(blocker / "out")]) == 2


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "absent.json")]) == 2


def test_train_winrate_policy(tmp_path, capsys):
    sim, models = tmp_path / "sim", tmp_path / "models"
    main(["simulate", "--config", _config(tmp_path, n_train=2000), "--out", str(sim)])
    code = main(["train", "--policy", "wr", "--feedback", str(sim / "train_feedback.jsonl"), "--out", str(models)])
    assert code == 0
    document = read_json(models / "wr.policy.json")
    assert document["format"] == "bid_shading.policy"
    assert document["state"]["model"]["beta"] > 0
    assert "beta" in capsys.readouterr().out


def test_train_unknown_policy(tmp_path):
    feedback = write_feedback(tmp_path / "feedback.jsonl", [FeedbackRecord(FeatureVector(dimension=1), 0.5, 1.0, True)])
    assert main(["train", "--policy", "nope", "--feedback", str(feedback)]) == 2


def test_train_on_all_wins_is_degenerate(tmp_path):
    records = [FeedbackRecord(FeatureVector(dimension=1), b, 2.0, True) for b in (0.5, 1.0, 1.5)]
    feedback = write_feedback(tmp_path / "feedback.jsonl", records)
    assert main(["train", "--policy", "wr", "--feedback", str(feedback), "--out", str(tmp_path)]) == 3


def test_train_missing_feedback(tmp_path):
    assert main(["train", "--policy", "wr", "--feedback", str(tmp_path / "absent.jsonl")]) == 2


def test_shade_round_trip(tmp_path):
    sim, models = tmp_path / "sim", tmp_path / "models"
    main(["simulate", "--config", _config(tmp_path, n_train=2000), "--out", str(sim)])
    main(["train", "--policy", "wr", "--feedback", str(sim / "train_feedback.jsonl"), "--out", str(models)])
    code = main(["shade", "--model", str(models / "wr.policy.json"),
                 "--requests", str(sim / "eval_requests.jsonl"), "--out", str(tmp_path / "shaded")])
    assert code == 0
    requests = _lines(sim / "eval_requests.jsonl")
    decisions = _lines(tmp_path / "shaded" / "decisions.jsonl")
    assert len(decisions) == len(requests)
    for request, decision in zip(requests, decisions):
        assert 0 < decision["bid"] < request["value"]
        assert 0 <= decision["expected_win_rate"] <= 1


def test_shade_empty_requests(tmp_path):
    model = save_policy(tmp_path / "fixed.policy.json", create_policy("fixed", PolicyContext()))
    requests = tmp_path / "requests.jsonl"
    requests.write_text("")
    assert main(["shade", "--model", str(model), "--requests", str(requests), "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "decisions.jsonl").read_text() == ""


def test_shade_corrupt_model(tmp_path):
    model = tmp_path / "broken.policy.json"
    model.write_text("{")
    requests = tmp_path / "requests.jsonl"
    requests.write_text("")
    assert main(["shade", "--model", str(model), "--requests", str(requests)]) == 4


def test_shade_model_with_nonpositive_beta(tmp_path):
    policy = create_policy("wr", PolicyContext())
    policy.model = WinRateModel(w0=0.0, weights=[0.0], beta=1.0)
    document = policy.to_dict()
    document["state"]["model"]["beta"] = -1.0
    model = tmp_path / "wr.policy.json"
    model.write_text(json.dumps(document))
    requests = tmp_path / "requests.jsonl"
    requests.write_text("")
    assert main(["shade", "--model", str(model), "--requests", str(requests)]) == 4



def test_evaluate_is_deterministic(tmp_path):
    config = _config(tmp_path, n_train=1000, n_eval=500, policies=["wr", "mpp", "fixed"])
    for name in ("a", "b"):
        assert main(["evaluate", "--config", config, "--out", str(tmp_path / name)]) == 0
    for name in ("reports.json", "metrics.csv", "comparison.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_evaluate_single_policy_baseline(tmp_path):
    config = _config(tmp_path)
    out = tmp_path / "out"
    assert main(["evaluate", "--config", config, "--policy", "fixed", "--baseline", "fixed",
                 "--factor", "0.8", "--out", str(out)]) == 0
    table = pd.read_csv(out / "comparison.csv", index_col="policy")
    assert list(table.index) == ["fixed"]
    assert (table.loc["fixed", ["surplus", "spend", "win_rate"]] == 0).all()
    reports = read_json(out / "reports.json")
    assert reports["policies"]["fixed"]["mean_shading_factor"] == pytest.approx(0.8)


def test_evaluate_baseline_not_compared(tmp_path):
    assert main(["evaluate", "--config", _config(tmp_path), "--baseline", "oracle"]) == 2


@pytest.fixture(scope="module")
def experiment():
    config = ExperimentConfig(
        n_train=20_000,
        n_eval=100_000,
        policies=[PolicyConfig(name) for name in ("wr", "mpp", "oracle", "fixed")],
        baseline="mpp",
        grid_n=2000
    )
    return run_experiment(config)


def test_winrate_policy_beats_most_probable_price(experiment):
    paired = experiment["paired"]["wr"]
    assert paired["mean"] > 3 * paired["se"]
    assert experiment["comparison"].loc["wr", "surplus"] > 0


def test_oracle_reaches_optimum(experiment):
    reports = experiment["reports"]
    assert reports["oracle"].pct_of_optimal == pytest.approx(1.0, abs=0.02)
    assert all(report.pct_of_optimal <= 1.02 for report in reports.values())
    assert reports["fixed"].pct_of_optimal < reports["wr"].pct_of_optimal


def test_winrate_model_diagnostics(experiment):
    diagnostics = experiment["diagnostics"]["wr"]
    assert diagnostics["beta"] > 0


def test_price_estimators_report_regression_metrics():
    config = ExperimentConfig(
        n_train=3000,
        n_eval=2000,
        policies=[PolicyConfig(name) for name in ("point-est", "factor-lr", "fixed")],
        baseline="fixed",
        grid_n=1000
    )
    reports = run_experiment(config)["reports"]
    for name in ("point-est", "factor-lr"):
        assert reports[name].price_mse >= 0
        assert reports[name].price_r2 <= 1
    assert reports["fixed"].price_mse is None


def test_regression_metrics_need_revealed_prices():
    config = ExperimentConfig(n_train=500, n_eval=500, policies=[PolicyConfig("fixed")], baseline="fixed",
                              grid_n=1000, reveal_mbtw=False)
    assert run_experiment(config)["reports"]["fixed"].price_r2 is None



def test_config_rejects_unknown_policy():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"policies": ["nope"]})


@pytest.mark.parametrize("data", [{"n_train": 0}, {"grid_n": 10}, {"shading": {"cut": "golden"}},
                                  {"train_bid_policy": {"low": 0.9, "high": 0.1}}, {"unknown_field": 1}])
def test_config_rejects_invalid_values(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_config_landscape_from_file(tmp_path):
    (tmp_path / "landscape.json").write_text(json.dumps({"kind": "uniform", "params": {"b0": 0.1, "b1": 0.9}}))
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps({"landscape": "landscape.json"}))
    assert load_config(path).landscape_spec().b1 == 0.9


def test_output_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(OUTPUT_DIR_VARIABLE, str(tmp_path / "env_out"))
    assert load_config().output_dir == str(tmp_path / "env_out")
