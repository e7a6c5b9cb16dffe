import numpy as np
import pytest
from scipy import stats

from hookrate.estimators import expected_counts
from hookrate.likelihoods import cell_probabilities
from hookrate.simulate import (
    SCENARIO_PRESETS,
    Scenario,
    SimulatedSet,
    simulate_dataset,
    simulate_pooled_batch,
    simulate_set,
)


BASE = Scenario(
    lambda_target=5e-4,
    lambda_nontarget=1e-3,
    p_target=0.1,
    p_nontarget=0.3,
    n_hooks=220,
    n_sets=4,
    soak_minutes=120.0,
    seed=42,
)


def test_determinism():
    ds1, truth1 = simulate_dataset(BASE, replicate_index=3)
    ds2, truth2 = simulate_dataset(BASE, replicate_index=3)
    assert ds1 == ds2
    assert truth1 == truth2


def test_replicates_differ():
    ds1, _ = simulate_dataset(BASE, replicate_index=0)
    ds2, _ = simulate_dataset(BASE, replicate_index=1)
    assert ds1 != ds2


def test_set_order_independent():
    # drawing set 2 alone matches its value inside the full replicate
    alone = simulate_set(BASE, set_index=2, replicate_index=5)
    _, truth = simulate_dataset(BASE, replicate_index=5)
    assert truth[2] == alone


def test_no_escape_means_no_empty_hooks():
    sc = Scenario(1e-3, 2e-3, p_target=0.0, p_nontarget=0.0, n_hooks=220, n_sets=1, soak_minutes=120, seed=1)
    for r in range(50):
        sim = simulate_set(sc, 0, r)
        assert sim.record.n_empty == 0
        assert sim.n_escaped_target == 0


def test_zero_target_rate():
    sc = Scenario(0.0, 2e-3, p_target=0.5, p_nontarget=0.2, n_hooks=220, n_sets=1, soak_minutes=120, seed=1)
    for r in range(50):
        sim = simulate_set(sc, 0, r)
        assert sim.record.n_target == 0
        assert sim.n_escaped_target == 0


def test_record_invariants_always_hold():
    for r in range(100):
        sim = simulate_set(BASE, 0, r)
        rec = sim.record
        assert rec.n_baited + rec.n_target + rec.n_nontarget + rec.n_empty == rec.n_hooks
        assert rec.n_empty == sim.n_escaped_target + sim.n_escaped_nontarget


def test_moments_match_expected_counts():
    sc = Scenario(2e-3, 4e-3, p_target=0.15, p_nontarget=0.35, n_hooks=100, n_sets=1, soak_minutes=120, seed=9)
    draws = 100_000
    batch = simulate_pooled_batch(sc, draws)
    expect = expected_counts(
        sc.lambda_target, sc.lambda_nontarget, sc.p_target, sc.p_nontarget, sc.n_hooks, sc.soak_minutes
    )
    for key, mean_expected in zip(("nb", "nt", "nnt", "ne"), expect):
        observed = batch[key].mean()
        se = batch[key].std(ddof=1) / np.sqrt(draws)
        assert abs(observed - mean_expected) < 3 * se + 1e-9, key


def test_chi_square_goodness_of_fit():
    sc = Scenario(2e-3, 4e-3, p_target=0.15, p_nontarget=0.35, n_hooks=50, n_sets=1, soak_minutes=120, seed=17)
    draws = 20_000
    batch = simulate_pooled_batch(sc, draws)
    probs = cell_probabilities(
        sc.lambda_target, sc.lambda_nontarget, sc.p_target, sc.p_nontarget, sc.soak_minutes
    )
    observed = np.array([batch[k].sum() for k in ("nb", "nt", "nnt", "ne")], dtype=float)
    total_hooks = draws * sc.n_hooks
    expected = np.array(probs) * total_hooks
    stat = ((observed - expected) ** 2 / expected).sum()
    p_value = stats.chi2.sf(stat, df=3)
    assert p_value > 1e-3


def test_conditional_target_split_is_binomial():
    # among touched hooks, the target share (caught plus escaped) is binomial
    sc = Scenario(2e-3, 4e-3, p_target=0.5, p_nontarget=0.5, n_hooks=200, n_sets=1, soak_minutes=120, seed=23)
    share = sc.lambda_target / (sc.lambda_target + sc.lambda_nontarget)
    hooked_t = []
    touched = []
    for r in range(4000):
        sim = simulate_set(sc, 0, r)
        touched.append(sim.record.n_hooks - sim.record.n_baited)
        hooked_t.append(sim.record.n_target + sim.n_escaped_target)
    total_touched = sum(touched)
    total_t = sum(hooked_t)
    # frequency test at 4 sigma
    se = np.sqrt(share * (1 - share) * total_touched)
    assert abs(total_t - share * total_touched) < 4 * se


def test_saturating_soak_exhausts_bait():
    sc = Scenario(0.05, 0.05, n_hooks=220, n_sets=1, soak_minutes=120, seed=3)
    batch = simulate_pooled_batch(sc, 2000)
    assert np.mean(batch["nb"] == 0) > 0.99


def test_batch_matches_per_set_distribution():
    # same cascade, different streams: compare means and variances
    draws = 30_000
    batch = simulate_pooled_batch(BASE, draws)
    per_set = np.array(
        [
            [s.record.n_baited for s in simulate_dataset(BASE, r)[1]]
            for r in range(3000)
        ]
    ).sum(axis=1)
    t_stat = (batch["nb"].mean() - per_set.mean()) / np.sqrt(
        batch["nb"].var() / draws + per_set.var() / 3000
    )
    assert abs(t_stat) < 4

    var_ratio = batch["nb"].var(ddof=1) / per_set.var(ddof=1)
    assert 0.9 < var_ratio < 1.1


def test_presets():
    assert SCENARIO_PRESETS["sc1"] == (0.0, 0.0)
    assert SCENARIO_PRESETS["sc2"] == (0.2, 0.2)
    assert SCENARIO_PRESETS["sc3"] == (0.02, 0.2)


def test_invalid_scenarios_rejected():
    with pytest.raises(ValueError):
        Scenario(-1e-3, 1e-3)
    with pytest.raises(ValueError):
        Scenario(1e-3, 1e-3, p_target=1.5)
    with pytest.raises(ValueError):
        Scenario(1e-3, 1e-3, n_sets=0)


def test_truth_consistency_enforced():
    ds, truth = simulate_dataset(BASE, 0)
    good = truth[0]
    with pytest.raises(ValueError):
        SimulatedSet(good.record, good.n_escaped_target + 1, good.n_escaped_nontarget)
