"""Observation statistics, CCA, metrics, and the split harness."""

import numpy as np
import pytest

from emoinf.analysis import (
    binary_metrics,
    cca,
    evaluate,
    sampling_test,
    social_correlation,
    split_labeled_images,
    temporal_correlation,
    write_variant_metrics_csv,
)
from emoinf.network import EmotionCategory, ImageRecord, TimeVaryingNetwork
from emoinf.synth import SynthConfig, generate

CAT = EmotionCategory.HAPPINESS
FEAT = [0.0] * 21


def labeled_img(iid, owner, t, label):
    return ImageRecord(iid, owner, t, FEAT, {CAT: label})


def net_with_labels(user_slice_labels, users=None, edges=(), horizon=None):
    """Network where each (user, slice) carries one image labeled as given."""
    images = [labeled_img(f"{u}_{t}", u, t, lab)
              for (u, t), lab in user_slice_labels.items()]
    if users is None:
        users = sorted({u for (u, _) in user_slice_labels})
    if horizon is None:
        horizon = max(t for (_, t) in user_slice_labels) + 1
    return TimeVaryingNetwork(users, horizon, edges, images)


class TestSamplingTest:
    def test_nobody_has_emotion(self):
        labels = {(u, t): -1 for u in ("a", "b", "c", "d") for t in range(4)}
        net = net_with_labels(labels, edges=[("a", "b", t) for t in range(4)])
        report = sampling_test(net, CAT, group_size=10, repetitions=3,
                               deltas=(1,), seed=0)
        for cells in (report.friend_independent, report.friends_1_2):
            value = cells[1].ratio
            assert value == 0.0 or np.isnan(value)

    def test_everybody_has_emotion(self):
        users = [f"u{i}" for i in range(6)]
        labels = {(u, t): 1 for u in users for t in range(4)}
        edges = [(users[i], users[j], t) for t in range(4)
                 for i in range(6) for j in range(i + 1, 6)]
        net = net_with_labels(labels, edges=edges)
        with pytest.warns(UserWarning, match="usable reference slices"):
            report = sampling_test(net, CAT, group_size=10, repetitions=3,
                                   deltas=(1, 2), seed=1)
        for d in (1, 2):
            assert report.friends_3_plus[d].ratio == 1.0
        assert all(np.isnan(report.friend_independent[d].ratio) or
                   report.friend_independent[d].ratio == 1.0 for d in (1, 2))

    def test_groups_disjoint_by_construction(self):
        # friend-related requires >= 1 emotional friend, independent requires 0;
        # verify on a deterministic two-camp network
        users = ["happy1", "happy2", "isolated"]
        labels = {("happy1", 0): 1, ("happy2", 0): 1, ("happy2", 1): 1,
                  ("happy1", 1): 1, ("isolated", 1): -1, ("isolated", 0): -1}
        net = net_with_labels(labels, edges=[("happy1", "happy2", 0),
                                             ("happy1", "happy2", 1)])
        report = sampling_test(net, CAT, group_size=5, repetitions=1,
                               deltas=(1,), seed=0)
        # the two friends see each other's emotion; the isolated user cannot
        assert report.friends_1_2[1].ratio == 1.0
        assert report.friend_independent[1].ratio == 0.0

    def test_horizon_too_short(self):
        net = net_with_labels({("a", 0): 1})
        with pytest.raises(ValueError, match="horizon"):
            sampling_test(net, CAT, deltas=(3,))

    def test_deterministic_given_seed(self):
        cfg = SynthConfig(seed=6, n_users=20, horizon=6, label_rate=1.0)
        net, _ = generate(cfg)
        r1 = sampling_test(net, CAT, group_size=10, repetitions=4, seed=9,
                           deltas=(1, 2))
        r2 = sampling_test(net, CAT, group_size=10, repetitions=4, seed=9,
                           deltas=(1, 2))
        assert r1.to_rows() == r2.to_rows()


class TestTemporalCorrelation:
    def test_constant_user_rate_one(self):
        labels = {("u", t): 1 for t in range(5)}
        net = net_with_labels(labels)
        rates, _ = temporal_correlation(net, CAT, max_delta=3)
        for d in (1, 2, 3):
            assert rates[d] == 1.0

    def test_alternating_user_parity(self):
        labels = {("u", t): (1 if t % 2 == 0 else -1) for t in range(6)}
        net = net_with_labels(labels)
        rates, _ = temporal_correlation(net, CAT, max_delta=2)
        assert rates[1] == 0.0
        assert rates[2] == 1.0

    def test_excluded_users_counted(self):
        labels = {("a", 0): 1, ("a", 1): 1, ("b", 0): 1}
        net = net_with_labels(labels)
        rates, excluded = temporal_correlation(net, CAT, max_delta=1)
        assert excluded == 1  # "b" has a single active slice
        assert rates[1] == 1.0


class TestSocialCorrelation:
    def test_friends_sharing_emotion(self):
        labels = {("u", 0): 1, ("f1", 1): 1, ("f2", 1): 1}
        net = net_with_labels(labels, horizon=2,
                              edges=[("u", "f1", 0), ("u", "f2", 0)])
        rates, _ = social_correlation(net, CAT, deltas=(1,), mode="friends")
        assert rates[1] == 1.0

    def test_member_without_label_counts_not_same(self):
        labels = {("u", 0): 1, ("f1", 1): 1}
        net = net_with_labels(labels, users=["u", "f1", "f2"], horizon=2,
                              edges=[("u", "f1", 0), ("u", "f2", 0)])
        rates, _ = social_correlation(net, CAT, deltas=(1,), mode="friends")
        assert rates[1] == 0.5

    def test_random_mode_on_absent_emotion(self):
        labels = {(u, t): -1 for u in ("a", "b", "c") for t in range(3)}
        net = net_with_labels(labels, edges=[("a", "b", t) for t in range(3)])
        rates, _ = social_correlation(net, CAT, deltas=(1,), mode="random", seed=0)
        assert np.isnan(rates[1]) or rates[1] == 0.0

    def test_bad_mode(self):
        net = net_with_labels({("a", 0): 1})
        with pytest.raises(ValueError):
            social_correlation(net, CAT, mode="strangers")


class TestCca:
    def test_perfect_dependence(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(10_000, 2))
        Y = np.column_stack([X[:, 0], rng.normal(size=10_000)])
        result = cca(X, Y)
        assert result.correlations[0] >= 0.999
        assert result.correlations.shape == (2,)

    def test_independent_noise(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(10_000, 2))
        Y = rng.normal(size=(10_000, 2))
        assert cca(X, Y).correlations[0] <= 0.05

    def test_descending_in_unit_interval(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(500, 5))
        Y = 0.5 * X[:, :3] + rng.normal(size=(500, 3))
        corr = cca(X, Y).correlations
        assert np.all(np.diff(corr) <= 1e-12)
        assert np.all((corr >= 0) & (corr <= 1))

    def test_affine_invariance_of_correlations(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(2000, 4))
        Y = X[:, :2] @ rng.normal(size=(2, 3)) + 0.3 * rng.normal(size=(2000, 3))
        base = cca(X, Y).correlations
        scale = np.diag([3.0, 0.5, 10.0, 1.5])
        shifted = X @ scale + np.array([5.0, -2.0, 0.1, 7.0])
        again = cca(shifted, Y).correlations
        np.testing.assert_allclose(base, again, atol=1e-6)

    def test_degenerate_column_flagged_not_fatal(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(1000, 3))
        X[:, 2] = 2.5  # constant column
        Y = rng.normal(size=(1000, 2))
        result = cca(X, Y)
        assert result.rank_deficient
        assert np.all(np.isfinite(result.correlations))

    def test_too_few_rows(self):
        with pytest.raises(ValueError, match="rows"):
            cca(np.zeros((5, 3)), np.zeros((5, 3)))


class TestMetrics:
    def test_perfect(self):
        preds = {f"i{k}": 0.9 if k % 2 else 0.1 for k in range(10)}
        truth = {f"i{k}": 1 if k % 2 else -1 for k in range(10)}
        m = binary_metrics(preds, truth)
        assert m.accuracy == 1.0 and m.f1 == 1.0

    def test_all_negative_on_balanced(self):
        preds = {f"i{k}": 0.2 for k in range(10)}
        truth = {f"i{k}": 1 if k % 2 else -1 for k in range(10)}
        m = binary_metrics(preds, truth)
        assert m.accuracy == 0.5
        assert m.f1 == 0.0

    def test_hand_computed_confusion(self):
        # 20 fixtures: 6 TP, 4 FN, 3 FP, 7 TN
        preds, truth = {}, {}
        k = 0
        for _ in range(6):
            preds[f"i{k}"], truth[f"i{k}"] = 0.9, 1
            k += 1
        for _ in range(4):
            preds[f"i{k}"], truth[f"i{k}"] = 0.1, 1
            k += 1
        for _ in range(3):
            preds[f"i{k}"], truth[f"i{k}"] = 0.9, -1
            k += 1
        for _ in range(7):
            preds[f"i{k}"], truth[f"i{k}"] = 0.1, -1
            k += 1
        m = binary_metrics(preds, truth)
        assert (m.tp, m.fn, m.fp, m.tn) == (6, 4, 3, 7)
        assert m.accuracy == pytest.approx(13 / 20)
        assert m.precision == pytest.approx(6 / 9)
        assert m.recall == pytest.approx(6 / 10)
        assert m.f1 == pytest.approx(2 * (6 / 9) * (6 / 10) / ((6 / 9) + (6 / 10)))

    def test_threshold_is_exclusive(self):
        m = binary_metrics({"a": 0.5}, {"a": -1})
        assert m.tn == 1  # exactly at threshold counts negative

    def test_evaluate_macro_average(self):
        preds = {CAT: {"a": 0.9}, EmotionCategory.FEAR: {"a": 0.1}}
        truth = {CAT: {"a": 1}, EmotionCategory.FEAR: {"a": 1}}
        report = evaluate(preds, truth)
        assert report.average.accuracy == pytest.approx(0.5)

    def test_empty_truth_rejected(self):
        with pytest.raises(ValueError):
            evaluate({}, {})

    def test_variant_csv_layout(self, tmp_path):
        preds = {CAT: {"a": 0.9, "b": 0.2}}
        truth = {CAT: {"a": 1, "b": -1}}
        rep = evaluate(preds, truth)
        path = tmp_path / "metrics.csv"
        write_variant_metrics_csv({"model": rep, "baseline": rep}, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "category,accuracy_model,accuracy_baseline,f1_model,f1_baseline"
        assert lines[1].startswith("happiness,")
        assert lines[-1].startswith("average,")


class TestSplit:
    def test_deterministic_and_disjoint(self):
        cfg = SynthConfig(seed=2, n_users=10, horizon=3, label_rate=1.0)
        net, _ = generate(cfg)
        train1, test1 = split_labeled_images(net, CAT, 0.2, seed=5)
        train2, test2 = split_labeled_images(net, CAT, 0.2, seed=5)
        assert (train1, test1) == (train2, test2)
        assert not set(train1) & set(test1)
        total = len(net.labeled_images(CAT))
        assert len(train1) + len(test1) == total
        assert len(test1) == int(round(0.2 * total))


class TestPlantedFixtureTrends:
    """Qualitative patterns on strong-contagion synthetic networks."""

    def observation_net(self, seed=0):
        cfg = SynthConfig(seed=seed, n_users=80, horizon=12, mean_degree=6.0,
                          images_per_slice=3.0, influence_density=0.5,
                          label_rate=1.0, social_weight=2.0,
                          temporal_weight=0.9, temporal_decay=0.5,
                          owner_coupling=2.0, emotion_bias=-0.8)
        return generate(cfg)[0]

    def test_sampling_ordering_under_strong_influence(self):
        net = self.observation_net()
        report = sampling_test(net, CAT, group_size=50, repetitions=8,
                               deltas=(1,), seed=0)
        gi = report.friend_independent[1].ratio
        small = report.friends_1_2[1].ratio
        big = report.friends_3_plus[1].ratio
        assert big > small > gi

    def test_social_rate_friends_above_random(self):
        net = self.observation_net()
        friends, _ = social_correlation(net, CAT, deltas=(1, 2, 3, 4),
                                        mode="friends", seed=0)
        randoms, _ = social_correlation(net, CAT, deltas=(1, 2, 3, 4),
                                        mode="random", seed=0)
        assert np.mean(list(friends.values())) > np.mean(list(randoms.values()))

    def test_temporal_rate_decreasing_trend(self):
        # persistence-only network: same-label rate decays with the gap
        cfg = SynthConfig(seed=1, n_users=50, horizon=10, mean_degree=0.0,
                          images_per_slice=3.0, influence_density=0.0,
                          label_rate=1.0, temporal_weight=0.9,
                          temporal_decay=0.35, owner_coupling=2.0)
        net, _ = generate(cfg)
        rates, _ = temporal_correlation(net, CAT, max_delta=6)
        deltas = sorted(rates)
        values = [rates[d] for d in deltas]
        rho = np.corrcoef(np.argsort(np.argsort(deltas)),
                          np.argsort(np.argsort(values)))[0, 1]
        assert rho < 0
