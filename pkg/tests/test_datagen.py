import numpy as np
import pytest
from scipy import stats

from cyclic_rca.datagen import (
    SCENARIO_NODES,
    AnomalousSample,
    Dataset,
    GraphGenConfig,
    generate_graph,
    random_perturbation,
    sample_anomalous,
    sample_normal,
    scenario_forward,
    scenario_modal_noise,
    scenario_sem_dict,
    semisynthetic_scenario,
)
from cyclic_rca.sem_model import LinearSem, PerturbationSpec, population_covariance
from conftest import figure1_sem, unit_sem


def realized_degree(sem):
    return 2 * np.count_nonzero(sem.A) / sem.size


def test_config_validation():
    with pytest.raises(ValueError):
        GraphGenConfig(p=1)
    with pytest.raises(ValueError):
        GraphGenConfig(p=5, expected_degree=0)
    with pytest.raises(ValueError):
        GraphGenConfig(p=5, weight_range=((-1, 0.1), (0.5, 2)))


def test_edge_probability_by_mode():
    assert GraphGenConfig(p=11).edge_probability() == pytest.approx(3 / 10)
    assert GraphGenConfig(p=11, cyclic=True).edge_probability() == pytest.approx(3 / 20)
    assert GraphGenConfig(p=2, expected_degree=2).edge_probability() == 1.0


def test_two_node_forced_edge(rng):
    for _ in range(20):
        sem = generate_graph(GraphGenConfig(p=2, expected_degree=2), rng)
        w = sem.A[np.nonzero(sem.A)]
        assert w.size == 1 and 0.5 <= abs(w[0]) <= 2


def test_degree_calibration_acyclic():
    rng = np.random.default_rng(0)
    deg = [realized_degree(generate_graph(GraphGenConfig(p=50), rng)) for _ in range(10_000)]
    assert 2.8 <= np.mean(deg) <= 3.2


def test_degree_calibration_cyclic():
    rng = np.random.default_rng(1)
    deg = [realized_degree(generate_graph(GraphGenConfig(p=50, cyclic=True), rng)) for _ in range(2_000)]
    assert 2.8 <= np.mean(deg) <= 3.2


def test_seed_determinism():
    cfg = GraphGenConfig(p=12, n_latent=3, cyclic=True, seed=99)
    a, b = generate_graph(cfg), generate_graph(cfg)
    np.testing.assert_array_equal(a.A, b.A)
    assert a.noise == b.noise


def test_same_seed_gives_identical_data():
    def draw():
        rng = np.random.default_rng(5)
        sem = generate_graph(GraphGenConfig(p=8, n_latent=2, cyclic=True), rng)
        data = sample_normal(sem, 50, rng)
        sample = sample_anomalous(sem, random_perturbation(sem, 2, 10.0, rng), rng)
        return data.values, sample.values

    (d1, s1), (d2, s2) = draw(), draw()
    assert np.array_equal(d1, d2) and np.array_equal(s1, s2)


def test_acyclic_generation_is_triangular_up_to_permutation(rng):
    for _ in range(50):
        A = generate_graph(GraphGenConfig(p=12, n_latent=2), rng).A
        # peel off nodes without remaining parents
        remaining = set(range(A.shape[0]))
        while remaining:
            sources = [i for i in remaining if not any(A[i, j] for j in remaining)]
            assert sources, "directed cycle in acyclic mode"
            remaining -= set(sources)


def test_cyclic_generation_is_stable(rng):
    for _ in range(50):
        A = generate_graph(GraphGenConfig(p=15, cyclic=True, expected_degree=5), rng).A
        assert np.max(np.abs(np.linalg.eigvals(A))) <= 0.95 + 1e-12


def test_latents_take_last_indices(rng):
    sem = generate_graph(GraphGenConfig(p=6, n_latent=3), rng)
    assert sem.latent == (6, 7, 8)
    assert sem.observed_labels == tuple(f"X{i}" for i in range(1, 7))


def test_noise_scale_range(rng):
    sem = generate_graph(GraphGenConfig(p=40), rng)
    scales = np.array([n.scale for n in sem.noise])
    assert scales.min() >= 0.5 and scales.max() <= 2.0


def test_pure_noise_sample_covariance(rng):
    sem = unit_sem(np.zeros((3, 3)))
    X = sample_normal(sem, 100_000, rng).values
    S = np.cov(X, rowvar=False)
    assert np.all(np.abs(S - np.eye(3)) < 3 * np.sqrt(2 / 100_000) * 1.5)


def test_example_correlation_monte_carlo(rng):
    rho = 0.5
    sem = unit_sem([[0.0, 0.0], [rho, 0.0]], scales=[1.0, np.sqrt(1 - rho ** 2)])
    X = sample_normal(sem, 1_000_000, rng).values
    assert abs(np.corrcoef(X, rowvar=False)[0, 1] - rho) < 0.01


def test_lognormal_noise_is_right_skewed(rng):
    sem = LinearSem(np.zeros((2, 2)), tuple(__import__("cyclic_rca").NoiseSpec("lognormal", 1.0) for _ in range(2)))
    X = sample_normal(sem, 50_000, rng).values
    assert np.all(stats.skew(X, axis=0) > 0)


@pytest.mark.parametrize("family", ["gaussian", "uniform", "exponential", "lognormal"])
def test_noise_families_are_mean_zero(family):
    rng = np.random.default_rng(3)
    sem = generate_graph(GraphGenConfig(p=3, noise_family=family), rng)
    X = sample_normal(sem, 1_000_000, rng).values
    sd = X.std(axis=0)
    # lognormal tails inflate the sampling error of the mean
    k = 8 if family == "lognormal" else 4
    assert np.all(np.abs(X.mean(axis=0)) < k * sd / np.sqrt(X.shape[0]))


def test_identity_covariance_error_scale():
    # expected Frobenius error for Sigma = I is sqrt(p(p+1)/m), above 5/sqrt(m) at p=10
    rng = np.random.default_rng(2)
    m = 100_000
    err = np.linalg.norm(np.cov(rng.standard_normal((m, 10)), rowvar=False) - np.eye(10))
    assert err == pytest.approx(np.sqrt(110 / m), rel=0.2)


def test_sample_covariance_converges_to_population():
    rng = np.random.default_rng(11)
    cfg = GraphGenConfig(p=10, weight_range=((-0.8, -0.2), (0.2, 0.8)), cyclic=True)
    for _ in range(3):
        sem = generate_graph(cfg, rng)
        m = 100_000
        S = np.cov(sample_normal(sem, m, rng).values, rowvar=False)
        Sigma = population_covariance(sem)
        # sampling error scales with the covariance itself
        assert np.linalg.norm(S - Sigma) < 5 / np.sqrt(m) * np.linalg.norm(Sigma)


def test_anomalous_noise_free_example():
    rho, delta = 0.5, 3.0
    sem = unit_sem([[0.0, 0.0], [rho, 0.0]], scales=[1.0, np.sqrt(1 - rho ** 2)])
    x = sample_anomalous(sem, PerturbationSpec((0,), (delta,)), zero_noise=True)
    np.testing.assert_allclose(x.values, [delta, rho * delta])
    assert x.observable_roots == (0,)


def test_anomalous_rejects_missing_perturbation():
    sem = unit_sem(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        sample_anomalous(sem, None)
    with pytest.raises(ValueError):
        PerturbationSpec((0,), (0.0,))


def test_anomalous_latent_root_figure1():
    sem = figure1_sem()
    x = sample_anomalous(sem, PerturbationSpec((4,), (2.0,)), zero_noise=True)
    assert x.values[0] == 0
    assert x.values[1] != 0 and x.values[2] != 0
    assert x.observable_roots == (1,)


def test_random_perturbation_distinct_roots(rng):
    sem = generate_graph(GraphGenConfig(p=10, n_latent=2), rng)
    for _ in range(20):
        pert = random_perturbation(sem, 4, 5.0, rng)
        assert len(set(pert.root_causes)) == 4 and all(d == 5.0 for d in pert.deltas)
    pert = random_perturbation(sem, 3, 5.0, rng, include_latent=False)
    assert all(r < 10 for r in pert.root_causes)


def test_dataset_shapes_and_drop_column():
    d = Dataset(np.arange(6.0).reshape(3, 2), ("a", "b"))
    assert (d.m, d.p) == (3, 2)
    e = d.drop_column(0)
    assert e.column_labels == ("b",) and e.values.shape == (3, 1)
    s = AnomalousSample(np.array([1.0, 2.0, 3.0]), observable_roots=(2,))
    assert s.drop_column(0).observable_roots == (1,)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), ("a",))


def test_dataset_csv_roundtrip(tmp_path):
    from cyclic_rca.ingest import load_csv

    d = Dataset(np.array([[1.0, 2.0], [3.0, 4.5]]), ("u", "v"))
    d.to_csv(tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv")
    assert back.column_labels == ("u", "v")
    np.testing.assert_array_equal(back.values, d.values)


# -- semisynthetic scenario ---------------------------------------------------

def test_scenario_modal_noise_website_shift():
    noise = {k: np.array([v]) for k, v in scenario_modal_noise().items()}
    base = scenario_forward(noise, [1])[0]
    shifted = scenario_forward(noise, [1], {"Website": 2.0})[0]
    k = SCENARIO_NODES.index("Website")
    assert shifted[k] - base[k] >= 2.0
    np.testing.assert_array_equal(np.delete(shifted, k), np.delete(base, k))


def test_scenario_well_formed(rng):
    data, sample = semisynthetic_scenario("API", rng, m=10_000)
    assert data.values.shape == (10_000, 11)
    assert np.all(np.isfinite(data.values)) and np.all(np.isfinite(sample.values))


def test_scenario_caching_shift_raises_product_service(rng):
    k_cache, k_prod = SCENARIO_NODES.index("Caching Service"), SCENARIO_NODES.index("Product Service")
    from cyclic_rca.datagen import scenario_noise

    noise = scenario_noise(rng, 20_000)
    gate = rng.integers(0, 2, 20_000)
    base = scenario_forward(noise, gate)
    shifted = scenario_forward(noise, gate, {"Caching Service": 2.0})
    assert shifted[:, k_prod].mean() > base[:, k_prod].mean() + 0.5
    assert np.allclose(shifted[:, k_cache] - base[:, k_cache], 2.0)


def test_scenario_unknown_target(rng):
    with pytest.raises(ValueError, match="unknown scenario target"):
        semisynthetic_scenario("Payments", rng)


def test_scenario_graph_export():
    d = scenario_sem_dict()
    assert d["p"] == 11 and len(d["edges"]) == 13 and len(d["noise"]) == 11
