import math

import numpy as np
import pytest

from fadcm.experiment import ExperimentConfig, replication_streams, run_replication
from fadcm.model import Catalog, DiscountCurve, ModelDegenerateError, ModelParams
from fadcm.optimizer import optimal_slate
from fadcm.policies import ExploreThenExploit, FaDcm, FaDcmP, OraclePolicy, monotone_repair
from fadcm.simulator import ExitCause, InteractionRecord, extract_events, simulate_session


def record(slate, clicks, exhausted=None):
    n = len(clicks)
    if n == len(slate):
        cause = ExitCause.EXHAUSTED_SLATE
    else:
        cause = ExitCause.ABANDONED_AFTER_CLICK if clicks[-1] else ExitCause.ABANDONED_AFTER_SKIP
    return InteractionRecord(tuple(slate), n, tuple(clicks), cause)


# FA-DCM-P ---------------------------------------------------------------------

def test_fadcmp_unseen_items_have_unit_ucb():
    pol = FaDcmP(Catalog([0, 1]), DiscountCurve([1.0, 0.8]))
    assert pol.ucb(10).tolist() == [1.0, 1.0]


def test_fadcmp_ucb_formula():
    pol = FaDcmP(Catalog([0, 1]), DiscountCurve([1.0]))
    pol.counts[0], pol.sums[0] = 4, 2.0
    assert pol.ucb(math.exp(2))[0] == pytest.approx(0.5 + math.sqrt(2 * 2 / 4))
    assert pol.ucb(math.exp(2))[0] == pytest.approx(1.5)


def test_fadcmp_observe_reweights_by_discount():
    pol = FaDcmP(Catalog([0, 0, 1]), DiscountCurve([1.0, 0.8]))
    pol.observe(record((0, 1), [0, 1]), 1)
    assert pol.counts.tolist() == [1, 1, 0]
    assert pol.sums[1] == pytest.approx(1 / 0.8)
    assert pol.sums[1] == pytest.approx(1.25)


def test_fadcmp_no_clicks_only_counts():
    pol = FaDcmP(Catalog([0, 1, 0, 1]), DiscountCurve([1.0, 0.5]))
    pol.observe(record((3, 2, 1, 0), [0, 0, 0]), 1)
    assert pol.counts.tolist() == [0, 1, 1, 1]
    assert pol.sums.tolist() == [0, 0, 0, 0]


def test_fadcmp_zero_discount_is_degenerate():
    pol = FaDcmP(Catalog([0, 0]), DiscountCurve([1.0, 0.0]))
    with pytest.raises(ModelDegenerateError):
        pol.observe(record((0, 1), [0, 0]), 1)


def test_fadcmp_first_round_follows_discount_and_ids():
    pol = FaDcmP(Catalog([0, 0, 1, 1]), DiscountCurve([1.0, 0.5]))
    assert pol.select_slate(1) == (0, 2, 1, 3)


def test_fadcmp_single_category_sorts_ucb():
    pol = FaDcmP(Catalog([0, 0, 0]), DiscountCurve([1.0, 0.9, 0.8]))
    pol.u_ucb = np.array([0.2, 0.9, 0.5])
    assert pol.select_slate(5) == (1, 2, 0)


def test_fadcmp_estimator_unbiased():
    # conditional on exposure at index i, E[z / f(i)] = u_j
    rng = np.random.default_rng(11)
    truth = ModelParams.build([0, 0, 0], [0.5, 0.4, 0.3], [1.0, 0.7, 0.5], 1.0, 1.0)
    pol = FaDcmP(truth.catalog, truth.discount)
    slates = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
    n = 30_000
    for t in range(1, n + 1):
        pol.observe(simulate_session(slates[t % 3], truth, rng), t)
    est = pol.estimates()
    # per-sample variance of z/f is at most u / f_min
    se = np.sqrt(truth.u / 0.5 / pol.counts)
    assert np.all(np.abs(est - truth.u) <= 4 * se)


@pytest.mark.slow
def test_fadcmp_converges_to_optimal_slate():
    truth = ModelParams.build([0, 0, 1, 1], [0.9, 0.5, 0.7, 0.2], [1.0, 0.6], 0.9, 0.6)
    cfg = ExperimentConfig(n_categories=2, items_per_category=2,
                           relevance={"kind": "fixed", "values": truth.u.tolist()},
                           discount={"kind": "table", "values": [1.0, 0.6]},
                           g=0.9, q=0.6, horizon=20_000, replications=1, policy="fadcmp")
    _, pol = run_replication(cfg, 0, return_policy=True)
    assert pol.select_slate(20_001) == optimal_slate(truth.catalog, truth.u, truth.discount)


def test_fadcmp_counts_conserved():
    rng = np.random.default_rng(5)
    truth = ModelParams.build([0, 1, 0, 1, 2], rng.uniform(0, 0.6, 5), [1.0, 0.8], 0.8, 0.5)
    pol = FaDcmP(truth.catalog, truth.discount)
    examined = 0
    for t in range(1, 500):
        rec = simulate_session(pol.select_slate(t), truth, rng)
        examined += rec.examined_len
        pol.observe(rec, t)
    assert pol.counts.sum() == examined


# FA-DCM ------------------------------------------------------------------------

def fadcm_single_event_policy(delta_form="inverse"):
    pol = FaDcm(Catalog([0, 0]), horizon=100, delta_form=delta_form)
    for _ in range(50):
        pol.events.add(0, 0, 1)
        pol.events.add(0, 0, 0)
    pol.events.add(1, 0, 1)
    return pol


def test_fadcm_unobserved_index_has_unit_ucb():
    pol = FaDcm(Catalog([0, 0, 1]), horizon=100)
    u_ucb, f_ucb = pol.ucb(3)
    assert u_ucb.tolist() == [1.0, 1.0, 1.0]
    assert f_ucb.tolist() == [1.0] * 4


def test_fadcm_discount_bonus_example():
    pol = fadcm_single_event_policy()
    u_ucb, f_ucb = pol.ucb(math.e)
    eps = math.sqrt(1 / 100)
    term = (1 / 1) * (1 / 0.5 ** 2) * (1 - eps / 0.5) ** -1 * eps
    assert term == pytest.approx(0.5)
    assert f_ucb[1] == pytest.approx(1 / 0.5 + term + math.sqrt(1 / 1))
    assert f_ucb[1] == pytest.approx(3.5)
    assert u_ucb[0] == pytest.approx(0.5 + math.sqrt(2 / 100))
    assert monotone_repair(f_ucb)[1] == 1.0


def test_fadcm_printed_bonus_form():
    pol = fadcm_single_event_policy("printed")
    _, f_ucb = pol.ucb(math.e)
    assert f_ucb[1] == pytest.approx(2 + 4 * (1 - 0.2) * 0.1 + 1)


def test_fadcm_zero_relevance_estimate_skips_terms():
    pol = FaDcm(Catalog([0, 0]), horizon=100)
    for _ in range(10):
        pol.events.add(0, 0, 0)
    pol.events.add(1, 0, 1)
    _, f_ucb = pol.ucb(math.e)
    # f-hat contributes nothing; only the count bonus sqrt(log t / 1) is left
    assert f_ucb[1] == pytest.approx(1.0)


@pytest.mark.parametrize("given,expected", [
    ([1, 0.9, 0.95, 0.7], [1, 0.9, 0.9, 0.7]),
    ([1, 0.9, 0.8], [1, 0.9, 0.8]),
    ([1, 1.5, 1.2], [1, 1, 1]),
])
def test_monotone_repair(given, expected):
    assert monotone_repair(given).tolist() == expected


def test_fadcm_forced_insertion_front():
    cat = Catalog(np.repeat([0, 1], 5))
    pol = FaDcm(cat, horizon=1000, alpha=1.0)
    pol.events.T[0] = 1000
    pol.events.T[0, 7] = 2
    pol.u_ucb = np.linspace(0.9, 0.1, 10)
    base = optimal_slate(cat, pol.u_ucb, pol.f_ucb)
    slate = pol.select_slate(50)
    assert slate[0] == 7
    assert list(slate[1:]) == [i for i in base if i != 7]
    assert sorted(slate) == list(range(10))


def test_fadcm_no_insertion_when_counts_suffice():
    cat = Catalog([0, 0, 1])
    pol = FaDcm(cat, horizon=1000, alpha=1.0)
    pol.events.T[0] = 100
    pol.u_ucb = np.array([0.2, 0.4, 0.3])
    assert pol.select_slate(50) == optimal_slate(cat, pol.u_ucb, pol.f_ucb)
    assert pol.forced is None


def test_fadcm_cold_start_leads_with_item_zero():
    pol = FaDcm(Catalog([1, 0, 1, 0]), horizon=1000)
    assert pol.select_slate(1)[0] == 0


def test_fadcm_horizon_threshold_and_all_counts():
    pol = FaDcm(Catalog([0, 0]), horizon=1000, alpha=0.5, threshold="horizon",
                exploration_count="all")
    assert pol.exploration_threshold(1) == pytest.approx(0.5 * 1000 ** (2 / 3))
    pol.events.add(3, 1, 0)
    assert pol.exploration_counts().tolist() == [0, 1]


def test_fadcm_observe_forced_item_gives_first_event():
    cat = Catalog([0, 0, 0])
    pol = FaDcm(cat, horizon=1000)
    slate = pol.select_slate(1)
    pol.observe(record(slate, [1]), 1)
    assert pol.events.T[0, slate[0]] == 1
    assert pol.events.T.sum() == 1


def test_fadcm_plateau_pooling_matches_unpooled_sums():
    rng = np.random.default_rng(8)
    truth = ModelParams.build(np.zeros(6, dtype=int), rng.uniform(0.2, 0.8, 6),
                              [1.0, 0.8, 0.7], 1.0, 0.9)
    pooled = FaDcm(truth.catalog, horizon=100, plateau_index=2)
    full = FaDcm(truth.catalog, horizon=100)  # M = N, no pooling possible
    for t in range(1, 200):
        rec = simulate_session(tuple(rng.permutation(6).tolist()), truth, rng)
        pooled.observe(rec, t)
        full.observe(rec, t)
    np.testing.assert_array_equal(pooled.events.T[:2], full.events.T[:2])
    np.testing.assert_array_equal(pooled.events.T[2], full.events.T[2:].sum(axis=0))
    np.testing.assert_array_equal(pooled.events.C[2], full.events.C[2:].sum(axis=0))


def test_fadcm_invariants_along_a_run():
    cfg = ExperimentConfig(horizon=1500, replications=1, policy="fadcm", g=0.75, q=0.7)
    truth_rng, env_rng, _ = replication_streams(cfg.seed, 0)
    truth = cfg.draw_truth(truth_rng)
    pol = FaDcm(truth.catalog, cfg.horizon)
    examined = 0
    for t in range(1, cfg.horizon + 1):
        slate = pol.select_slate(t)
        assert len(set(slate)) == len(slate) == truth.catalog.n_items
        rec = simulate_session(slate, truth, env_rng)
        if pol.forced is not None:
            assert extract_events(rec, truth.catalog)[0].discount_index == 0
        examined += rec.examined_len
        pol.observe(rec, t)
        assert pol.f_ucb[0] == 1.0
        assert np.all(np.diff(pol.f_ucb) <= 0)
    assert pol.events.index_totals.sum() == examined


@pytest.mark.slow
def test_discount_statistic_with_true_relevance_concentrates():
    # pooled over three replications of the default instance (u drawn from U[0, 0.5])
    hits = total = 0
    for rep in range(3):
        cfg = ExperimentConfig(horizon=4000, replications=1, policy="fadcm", g=0.75, q=0.7)
        truth_rng, env_rng, _ = replication_streams(cfg.seed, rep)
        truth = cfg.draw_truth(truth_rng)
        pol = FaDcm(truth.catalog, cfg.horizon)
        for t in range(1, cfg.horizon + 1):
            pol.observe(simulate_session(pol.select_slate(t), truth, env_rng), t)
            if t % 100 == 0:
                v = pol.lemma_statistic(truth.u)
                counts = pol.events.index_totals
                for i in np.flatnonzero(counts > 0):
                    total += 1
                    hits += abs(v[i] - truth.discount(i)) <= math.sqrt(math.log(t) / counts[i])
    print(f"discount statistic coverage {hits / total:.4f} over {total} checkpoints")
    assert hits / total >= 0.98


def test_discount_statistic_matches_event_sums():
    rng = np.random.default_rng(4)
    truth = ModelParams.build([0, 0, 0, 1, 1], [0.4, 0.3, 0.5, 0.2, 0.6],
                              [1.0, 0.7, 0.4], 0.9, 0.6)
    pol = FaDcm(truth.catalog, horizon=500)
    num = np.zeros(pol.events.T.shape[0])
    den = np.zeros_like(num)
    for t in range(1, 300):
        rec = simulate_session(pol.select_slate(t), truth, rng)
        for ev in extract_events(rec, truth.catalog):
            num[ev.discount_index] += ev.click / truth.u[ev.item_id]
            den[ev.discount_index] += 1
        pol.observe(rec, t)
    seen = den > 0
    np.testing.assert_allclose(pol.lemma_statistic(truth.u)[seen], num[seen] / den[seen],
                               rtol=1e-12)


def test_discount_statistic_unbiased_on_fixed_rotation():
    rng = np.random.default_rng(21)
    f = [1.0, 0.8, 0.6]
    truth = ModelParams.build([0, 0, 0], [0.5, 0.4, 0.3], f, 1.0, 1.0)
    pol = FaDcm(truth.catalog, horizon=10)
    slates = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
    for t in range(1, 30_001):
        pol.observe(simulate_session(slates[t % 3], truth, rng), t)
    v = pol.lemma_statistic(truth.u)[:3]
    counts = pol.events.index_totals[:3]
    se = np.sqrt(np.array(f) / 0.3 / counts)
    assert np.all(np.abs(v - np.array(f)) <= 4 * se)


# ETE and oracle -------------------------------------------------------------------

def test_ete_first_round_explores():
    pol = ExploreThenExploit(Catalog([0, 1, 0]), np.random.default_rng(0), beta=5)
    assert pol.is_exploration_round(1)
    pol.select_slate(1)
    assert pol.n_explore == 1


def test_ete_beta_zero_is_greedy_after_round_one():
    pol = ExploreThenExploit(Catalog([0, 1, 0]), np.random.default_rng(0), beta=0)
    pol.select_slate(1)
    assert not any(pol.is_exploration_round(t) for t in range(2, 100))


def test_ete_exploration_budget():
    rng = np.random.default_rng(1)
    truth = ModelParams.build([0, 1, 0, 1], [0.3, 0.5, 0.2, 0.4], [1.0, 0.8], 0.8, 0.6)
    pol = ExploreThenExploit(truth.catalog, rng, beta=3)
    for t in range(1, 400):
        explore = pol.is_exploration_round(t)
        slate = pol.select_slate(t)
        if not explore:
            assert pol.n_explore >= math.ceil(3 * math.log(t))
        assert sorted(slate) == [0, 1, 2, 3]
        pol.observe(simulate_session(slate, truth, rng), t)


def test_ete_greedy_uses_empirical_means_with_unit_defaults():
    cat = Catalog([0, 0, 1])
    pol = ExploreThenExploit(cat, np.random.default_rng(0), beta=0)
    pol.select_slate(1)
    pol.observe(record((0, 2, 1), [1, 0, 0]), 1)
    u, f = pol.empirical_params()
    assert u.tolist() == [1.0, 1.0, 0.0]
    assert f[0] == 1.0 and f[1] == 0.0
    assert pol.select_slate(2) == optimal_slate(cat, u, f)


def test_oracle_policy_plays_optimum_with_zero_regret():
    cfg = ExperimentConfig(horizon=300, replications=1, policy="oracle")
    series = run_replication(cfg, 0)
    assert series.final == 0.0
    truth = cfg.draw_truth(replication_streams(cfg.seed, 0)[0])
    assert OraclePolicy(truth).select_slate(7) == optimal_slate(truth.catalog, truth.u, truth.discount)
