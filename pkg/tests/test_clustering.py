from __future__ import annotations

import numpy as np
import pytest

from conftest import START, profiles_through_store
from meterwatch.clustering import (
    kmeans_fit,
    mean_cluster_profiles,
    select_k,
)
from meterwatch.personas import build_persona
from meterwatch.simulator import simulate_period
from oracles import exact_min_inertia, profiles_from_matrix


def matrix(*rows):
    return np.array([np.full(96, float(r)) if np.isscalar(r) else r for r in rows])


def test_two_points_two_clusters_is_exact():
    profiles = profiles_from_matrix(matrix(0.0, 10.0))
    model = kmeans_fit(profiles, 2, seed=1, restarts=5)
    assert model.inertia == pytest.approx(0.0, abs=1e-12)
    got = {tuple(c) for c in model.centroids}
    assert got == {(0.0,) * 96, (10.0,) * 96}


def test_three_level_instance_matches_exhaustive_partition():
    X = matrix(0.0, 2.0, 10.0)
    profiles = profiles_from_matrix(X)
    model = kmeans_fit(profiles, 2, seed=0, restarts=50)
    # optimal partition is {0, 2} vs {10}: 96 * (1^2 + 1^2) = 192
    assert model.inertia == pytest.approx(192.0, abs=1e-9)
    assert model.inertia == pytest.approx(exact_min_inertia(X, 2), abs=1e-9)
    labels = [model.assignments[p.day] for p in profiles]
    assert labels[0] == labels[1] != labels[2]


def test_k1_closed_form():
    rng = np.random.default_rng(5)
    X = rng.uniform(0, 100, size=(12, 96))
    profiles = profiles_from_matrix(X)
    model = kmeans_fit(profiles, 1, seed=3, restarts=3)
    assert np.allclose(model.centroids[0], X.mean(axis=0))
    expected = float(((X - X.mean(axis=0)) ** 2).sum())
    assert model.inertia == pytest.approx(expected, rel=1e-12)


def test_fewer_profiles_than_k_is_an_error():
    profiles = profiles_from_matrix(matrix(0.0, 1.0))
    with pytest.raises(ValueError):
        kmeans_fit(profiles, 3, seed=0)


def test_k_out_of_range_is_an_error():
    profiles = profiles_from_matrix(np.zeros((8, 96)))
    with pytest.raises(ValueError):
        kmeans_fit(profiles, 0, seed=0)
    with pytest.raises(ValueError):
        kmeans_fit(profiles, 7, seed=0)


def test_fit_is_deterministic():
    rng = np.random.default_rng(9)
    profiles = profiles_from_matrix(rng.uniform(0, 500, size=(20, 96)))
    a = kmeans_fit(profiles, 3, seed=17, restarts=8)
    b = kmeans_fit(profiles, 3, seed=17, restarts=8)
    assert a.assignments == b.assignments
    assert a.inertia == b.inertia
    assert np.array_equal(a.centroids, b.centroids)
    assert a.restart_index == b.restart_index


def test_lloyd_objective_never_increases():
    rng = np.random.default_rng(2)
    profiles = profiles_from_matrix(rng.uniform(0, 300, size=(24, 96)))
    model = kmeans_fit(profiles, 3, seed=4, restarts=6)
    history = model.inertia_history
    assert len(history) >= 1
    assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))
    assert history[-1] == pytest.approx(model.inertia, rel=1e-12)


def test_termination_is_a_fixed_point():
    rng = np.random.default_rng(3)
    X = rng.uniform(0, 300, size=(18, 96))
    profiles = profiles_from_matrix(X)
    model = kmeans_fit(profiles, 3, seed=8, restarts=4)
    d2 = ((X[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
    relabels = d2.argmin(axis=1)
    assert [model.assignments[p.day] for p in profiles] == list(relabels)


def test_model_invariants_hold_after_fit():
    rng = np.random.default_rng(7)
    X = rng.uniform(0, 300, size=(15, 96))
    profiles = profiles_from_matrix(X)
    model = kmeans_fit(profiles, 3, seed=2, restarts=5)
    labels = np.array([model.assignments[p.day] for p in profiles])
    # every assignment points at the nearest centroid, lowest index on ties
    d2 = ((X[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
    assert np.array_equal(labels, d2.argmin(axis=1))
    # each centroid is the mean of its members and no cluster is empty
    for cluster in range(model.k):
        members = X[labels == cluster]
        assert len(members) > 0
        assert np.allclose(model.centroids[cluster], members.mean(axis=0))
    # inertia is recomputable from the fields
    recomputed = float(((X - model.centroids[labels]) ** 2).sum())
    assert model.inertia == pytest.approx(recomputed, rel=1e-12)


def test_small_instances_reach_the_exhaustive_optimum():
    rng = np.random.default_rng(123)
    for _ in range(20):
        n = int(rng.integers(2, 9))
        k = int(rng.integers(1, min(3, n) + 1))
        X = rng.uniform(0, 100, size=(n, 96))
        achieved = kmeans_fit(profiles_from_matrix(X), k, seed=int(rng.integers(2**32)), restarts=50).inertia
        optimal = exact_min_inertia(X, k)
        assert achieved <= optimal * (1 + 1e-9) + 1e-9


def test_duplicate_points_need_no_special_handling():
    X = matrix(5.0, 5.0, 5.0, 9.0)
    model = kmeans_fit(profiles_from_matrix(X), 3, seed=0, restarts=10)
    assert model.inertia == pytest.approx(0.0, abs=1e-9)
    assert sorted(model.counts(), reverse=True) == [2, 1, 1]


def test_identical_profiles_recommend_one_cluster():
    profiles = profiles_from_matrix(np.full((10, 96), 7.0))
    report = select_k(profiles, seed=1, restarts=3)
    assert report.recommended_k == 1
    assert all(i == pytest.approx(0.0, abs=1e-9) for i in report.inertias)


def test_three_separated_routines_recommend_three():
    rng = np.random.default_rng(11)
    groups = []
    for level_slots in [(20, 28), (44, 52), (70, 78)]:
        for _ in range(8):
            row = rng.normal(40.0, 5.0, 96)
            row[level_slots[0] : level_slots[1]] += 1500.0
            groups.append(row)
    profiles = profiles_from_matrix(np.abs(np.array(groups)))
    report = select_k(profiles, seed=5, restarts=10)
    assert report.recommended_k == 3


def test_quiet_household_needs_at_most_two_clusters():
    sim = simulate_period(build_persona("S3"), START, 30, seed=5)
    profiles, _, _ = profiles_through_store(sim)
    report = select_k(profiles, seed=5, restarts=10)
    assert report.recommended_k <= 2


def test_select_k_requires_six_profiles():
    with pytest.raises(ValueError):
        select_k(profiles_from_matrix(np.zeros((5, 96))), seed=0)


def test_select_k_inertia_is_non_increasing(s4_profiles):
    report = select_k(s4_profiles, seed=3, restarts=10)
    assert all(b <= a + 1e-6 for a, b in zip(report.inertias, report.inertias[1:]))


def test_mean_profiles_k1_is_global_mean():
    X = np.random.default_rng(1).uniform(0, 10, (7, 96))
    model = kmeans_fit(profiles_from_matrix(X), 1, seed=0, restarts=2)
    summary = mean_cluster_profiles(model)
    assert summary.counts == [7]
    assert summary.most_populated == 0
    assert np.allclose(summary.centroids[0], X.mean(axis=0))


def test_mean_profiles_symmetric_groups_have_equal_counts():
    X = matrix(*([0.0] * 5 + [500.0] * 5))
    model = kmeans_fit(profiles_from_matrix(X), 2, seed=2, restarts=5)
    summary = mean_cluster_profiles(model)
    assert sorted(summary.counts) == [5, 5]


def test_most_typical_s4_routine_peaks_morning_and_evening(s4_profiles):
    model = kmeans_fit(s4_profiles, 3, seed=7, restarts=10)
    summary = mean_cluster_profiles(model)
    centroid = summary.centroids[summary.most_populated]
    assert summary.counts[summary.most_populated] == max(summary.counts)
    morning = centroid[30:37].max()
    assert morning > centroid[24:30].max()
    assert morning > centroid[38:44].max()
    evening = centroid[80:89].max()
    assert evening > centroid[68:78].max()
    assert evening > centroid[92:].max()


def test_model_serializes_to_plain_json(s4_profiles):
    model = kmeans_fit(s4_profiles[:10], 2, seed=1, restarts=3)
    data = model.to_json_dict()
    assert data["k"] == 2
    assert len(data["centroids"]) == 2
    assert len(data["centroids"][0]) == 96
    assert len(data["assignments"]) == 10
    rebuilt_inertia = data["inertia"]
    assert rebuilt_inertia == pytest.approx(model.inertia)


def test_select_k_never_gives_an_outlier_its_own_cluster():
    rng = np.random.default_rng(21)
    rows = []
    for level_slots in [(20, 28), (44, 52), (70, 78)]:
        for _ in range(9):
            row = rng.normal(40.0, 5.0, 96)
            row[level_slots[0] : level_slots[1]] += 1500.0
            rows.append(row)
    outlier = rng.normal(40.0, 5.0, 96)
    outlier[80:92] += 2500.0
    rows.append(outlier)
    profiles = profiles_from_matrix(np.abs(np.array(rows)))
    report = select_k(profiles, seed=2, restarts=10)
    assert report.recommended_k == 3
    model = kmeans_fit(profiles, report.recommended_k, seed=2, restarts=10)
    assert min(model.counts()) >= 2
    from meterwatch.anomaly import anomaly_scores

    ranked = anomaly_scores(model, profiles).ranked_days
    assert ranked[0] == profiles[-1].day
