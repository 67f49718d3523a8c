import numpy as np
import pytest
from scipy import stats

from bid_shading.errors import ConfigError, DomainError
from bid_shading.landscape import (
    LandscapeSpec, generate_feedback, generate_requests, log_uniform_factor_policy,
    oracle_optimal_bid, sample_highest_bid, sample_highest_bids, true_cdf
)
from bid_shading.shading import uniform_closed_form
from bid_shading.winrate import FeatureVector, Vocabulary

EMPTY = FeatureVector(dimension=1)


def _stream(n, value=1.0):
    return [(EMPTY, value)] * n


def test_uniform_cdf_known_values():
    spec = LandscapeSpec.uniform(0, 1)
    assert true_cdf(spec, EMPTY, 0.5) == 0.5
    assert true_cdf(spec, EMPTY, 0.0) == 0.0
    assert true_cdf(LandscapeSpec.uniform(2, 4), EMPTY, 3.0) == 0.5


def test_uniform_cdf_matches_sampling():
    spec = LandscapeSpec.uniform(2, 4)
    draws = sample_highest_bids(spec, EMPTY, np.random.default_rng(0), 1_000_000)
    assert np.mean(draws < 3.0) == pytest.approx(0.5, abs=0.002)


@pytest.mark.parametrize("build", [
    lambda: LandscapeSpec.uniform(1, 1),
    lambda: LandscapeSpec.uniform(-1, 1),
    lambda: LandscapeSpec.lognormal(0, 0),
    lambda: LandscapeSpec.spiked(LandscapeSpec.uniform(0, 1), [(0.5, 0.7), (1.0, 0.6)]),
    lambda: LandscapeSpec.spiked(LandscapeSpec.uniform(0, 1), [(0.5, -0.1)]),
    lambda: LandscapeSpec("gamma"),
])
def test_invalid_specs_fail_at_construction(build):
    with pytest.raises(ConfigError):
        build()


def test_unknown_kind_message_names_field():
    with pytest.raises(ConfigError, match="landscape.kind"):
        LandscapeSpec.from_dict({"kind": "pareto", "params": {}})


def test_negative_price_rejected():
    with pytest.raises(DomainError):
        true_cdf(LandscapeSpec.uniform(0, 1), EMPTY, -0.1)


def test_uniform_samples_in_support_and_mean():
    spec = LandscapeSpec.uniform(0, 1)
    rng = np.random.default_rng(3)
    assert 0 <= sample_highest_bid(spec, EMPTY, rng) < 1
    draws = sample_highest_bids(spec, EMPTY, rng, 1_000_000)
    assert draws.min() >= 0 and draws.max() < 1
    assert draws.mean() == pytest.approx(0.5, abs=0.002)


def test_sampling_is_deterministic_per_seed():
    spec = LandscapeSpec.lognormal(-1, 0.5)
    first = [sample_highest_bid(spec, EMPTY, np.random.default_rng(42)) for _ in range(3)]
    rng_a, rng_b = np.random.default_rng(9), np.random.default_rng(9)
    assert [sample_highest_bid(spec, EMPTY, rng_a) for _ in range(50)] == \
        [sample_highest_bid(spec, EMPTY, rng_b) for _ in range(50)]
    assert len(set(first)) == 1


@pytest.mark.parametrize("spec", [LandscapeSpec.uniform(0.5, 2.0), LandscapeSpec.lognormal(-1.0, 0.5)])
def test_kolmogorov_smirnov_continuous(spec):
    draws = sample_highest_bids(spec, EMPTY, np.random.default_rng(1), 100_000)
    result = stats.kstest(draws, lambda b: true_cdf(spec, EMPTY, np.asarray(b)))
    assert result.statistic <= 0.01


def test_spiked_empirical_cdf_close_to_truth():
    spec = LandscapeSpec.spiked(LandscapeSpec.uniform(0, 1), [(0.25, 0.1), (0.5, 0.2)])
    draws = np.sort(sample_highest_bids(spec, EMPTY, np.random.default_rng(2), 100_000))
    points = np.linspace(0, 1.2, 241)
    empirical = np.searchsorted(draws, points, side="left") / len(draws)
    assert np.max(np.abs(empirical - true_cdf(spec, EMPTY, points))) <= 0.01
    # les pics sont des prix exacts
    assert np.mean(draws == 0.5) == pytest.approx(0.2, abs=0.01)


def test_cdf_monotone_over_random_specs():
    rng = np.random.default_rng(4)
    for _ in range(50):
        b0 = rng.uniform(0, 2)
        specs = [
            LandscapeSpec.uniform(b0, b0 + rng.uniform(0.1, 3)),
            LandscapeSpec.lognormal(rng.uniform(-3, 1), rng.uniform(0.1, 2)),
            LandscapeSpec.spiked(LandscapeSpec.lognormal(0, 1), [(rng.uniform(0.1, 2), 0.3)]),
        ]
        prices = np.sort(rng.uniform(0, 5, 200))
        for spec in specs:
            values = true_cdf(spec, EMPTY, prices)
            assert np.all(np.diff(values) >= 0)
            assert true_cdf(spec, EMPTY, 0.0) == 0.0
            assert true_cdf(spec, EMPTY, 1e9) == pytest.approx(1.0)


def test_uniform_shift_preserves_width_and_floors_at_zero():
    vocabulary = Vocabulary(["exchange=a", "exchange=b"])
    spec = LandscapeSpec.from_dict(
        {"kind": "uniform", "params": {"b0": 0.2, "b1": 1.2}, "feature_shift": {"exchange=a": -0.5, "2": 0.3}},
        vocabulary
    )
    assert spec.uniform_bounds(FeatureVector((1,), (1.0,), 3)) == (0.0, 1.0)
    low, high = spec.uniform_bounds(FeatureVector((2,), (1.0,), 3))
    assert (low, high) == (pytest.approx(0.5), pytest.approx(1.5))


def test_unknown_shift_feature_rejected():
    with pytest.raises(ConfigError, match="feature_shift"):
        LandscapeSpec.from_dict({"kind": "lognormal", "params": {"mu": 0, "sigma": 1},
                                 "feature_shift": {"domain=x": 1.0}}, Vocabulary())


def test_truthful_overbid_always_wins():
    batch = generate_feedback(LandscapeSpec.uniform(0, 1), lambda f, v: v, _stream(500, 2.0),
                              False, np.random.default_rng(0))
    assert len(batch) == 500
    assert all(r.won for r in batch)


def test_fixed_bid_win_fraction():
    batch = generate_feedback(LandscapeSpec.uniform(0, 1), lambda f, v: 0.25, _stream(100_000),
                              False, np.random.default_rng(5))
    assert np.mean([r.won for r in batch]) == pytest.approx(0.25, abs=0.01)


def test_reveal_flag_contract():
    spec = LandscapeSpec.lognormal(-1, 0.5)
    hidden = generate_feedback(spec, lambda f, v: 0.4, _stream(200), False, np.random.default_rng(0))
    assert all(r.min_bid_to_win is None for r in hidden)
    shown = generate_feedback(spec, lambda f, v: 0.4, _stream(200), True, np.random.default_rng(0))
    assert all(r.won == (r.bid > r.min_bid_to_win) for r in shown)


def test_common_random_numbers_across_policies():
    spec = LandscapeSpec.uniform(0, 1)
    low = generate_feedback(spec, lambda f, v: 0.2, _stream(300), True, np.random.default_rng(8))
    high = generate_feedback(spec, lambda f, v: 0.8, _stream(300), True, np.random.default_rng(8))
    assert [r.min_bid_to_win for r in low] == [r.min_bid_to_win for r in high]


def test_nonpositive_bids_rejected_and_counted():
    bids = iter([0.5, 0.0, -1.0, 0.3])
    batch = generate_feedback(LandscapeSpec.uniform(0, 1), lambda f, v: next(bids), _stream(4),
                              False, np.random.default_rng(0))
    assert len(batch) == 2
    assert batch.rejected == 2


@pytest.mark.parametrize("spec, value, bid, surplus", [
    (LandscapeSpec.uniform(0, 1), 1.0, 0.5, 0.25),
    (LandscapeSpec.uniform(0, 1), 3.0, 1.0, 2.0),
    (LandscapeSpec.uniform(1, 2), 2.0, 1.5, 0.25),
])
def test_oracle_known_values(spec, value, bid, surplus):
    found_bid, found_surplus = oracle_optimal_bid(spec, EMPTY, value)
    step = value / 10_000
    assert found_bid == pytest.approx(bid, abs=step)
    assert found_surplus == pytest.approx(surplus, abs=step)


def test_oracle_agrees_with_closed_form():
    rng = np.random.default_rng(6)
    for _ in range(20):
        b0 = rng.uniform(0, 1)
        b1 = b0 + rng.uniform(0.1, 2)
        value = rng.uniform(b0 + 0.01, 3 * b1)
        bid, _ = oracle_optimal_bid(LandscapeSpec.uniform(b0, b1), EMPTY, value)
        assert bid == pytest.approx(uniform_closed_form(value, b0, b1)[0], abs=value / 10_000)


def test_request_stream_is_deterministic():
    categories = {"exchange": ["a", "b"], "domain": ["x", "y", "z"]}
    vocabulary = Vocabulary.from_categories(categories)
    first = generate_requests(categories, vocabulary, 0.0, 0.3, 50, np.random.default_rng(1))
    second = generate_requests(categories, vocabulary, 0.0, 0.3, 50, np.random.default_rng(1))
    assert [(r.features, r.value) for r in first] == [(r.features, r.value) for r in second]
    assert all(len(r.features.indices) == 2 for r in first)


def test_exploration_policy_range():
    policy = log_uniform_factor_policy(0.1, 0.5, np.random.default_rng(0))
    bids = [policy(EMPTY, 2.0) for _ in range(1000)]
    assert min(bids) >= 0.2 and max(bids) <= 1.0
    with pytest.raises(ConfigError):
        log_uniform_factor_policy(0.5, 0.1, np.random.default_rng(0))
