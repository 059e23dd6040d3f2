import numpy as np
import pytest

from mixclust import (
    Clustering,
    Hyperparams,
    IterativeSchedule,
    ModelParams,
    cooccurrence_score,
    dirichlet_init,
    e_step,
    generate_corpus,
    hard_assign,
    label_init,
    m_step,
    run_em,
    run_iterative,
    run_kmeans,
    run_restarts,
)
from mixclust.em import default_schedule
from mixclust.errors import InferenceError, InputError
from mixclust.synthetic import block_model

from conftest import make_counts


class TestEStep:
    def test_symmetric_model_uniform_rows(self, tiny_counts):
        params = ModelParams.from_probs([0.5, 0.5], np.ones((5, 2)))
        resp = e_step(tiny_counts, params)
        np.testing.assert_allclose(resp, 0.25 + resp * 0, atol=1)  # shape check
        np.testing.assert_allclose(resp, 0.5, atol=1e-12)

    def test_hand_ratio(self):
        counts = make_counts([[2, 0]])
        params = ModelParams.from_probs([0.5, 0.5], [[0.9, 0.1], [0.1, 0.9]])
        resp = e_step(counts, params)
        np.testing.assert_allclose(resp[0], [81 / 82, 1 / 82], rtol=1e-12)

    def test_empty_doc_gets_prior(self):
        counts = make_counts([[0, 0], [1, 1]])
        params = ModelParams.from_probs([0.3, 0.7], np.ones((2, 2)))
        resp = e_step(counts, params)
        np.testing.assert_allclose(resp[0], [0.3, 0.7], rtol=1e-12)

    def test_rows_normalize(self, rng, tiny_counts):
        params = ModelParams.from_probs(
            rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(5), size=3).T
        )
        resp = e_step(tiny_counts, params)
        np.testing.assert_allclose(resp.sum(axis=1), 1.0, atol=1e-10)
        assert resp.min() >= 0

    def test_impossible_doc_rejected(self):
        counts = make_counts([[0, 1]])
        params = ModelParams.from_probs([0.5, 0.5], [[1.0, 1.0], [0.0, 0.0]])
        with pytest.raises(InferenceError):
            e_step(counts, params)


class TestMStep:
    def test_single_theme_unsmoothed_is_frequencies(self, tiny_counts):
        resp = np.ones((4, 1))
        params = m_step(tiny_counts, resp, Hyperparams(1.0, 1.0))
        totals = np.asarray(tiny_counts.matrix.sum(axis=0)).ravel()
        np.testing.assert_allclose(
            np.exp(params.log_beta[:, 0]), totals / totals.sum(), rtol=1e-12
        )

    def test_uniform_resp_identical_columns(self, tiny_counts):
        resp = np.full((4, 2), 0.5)
        params = m_step(tiny_counts, resp, Hyperparams(1.0, 1.0))
        np.testing.assert_allclose(params.log_beta[:, 0], params.log_beta[:, 1], rtol=1e-12)

    def test_alpha_formula(self, tiny_counts):
        resp = np.array([[1, 0], [1, 0], [0, 1], [0.5, 0.5]])
        resp = resp / resp.sum(axis=1, keepdims=True)
        params = m_step(tiny_counts, resp, Hyperparams(1.0, 1.1))
        np.testing.assert_allclose(np.exp(params.log_alpha), [2.5 / 4, 1.5 / 4], rtol=1e-12)

    def test_empty_theme_unsmoothed_rejected(self, tiny_counts):
        resp = label_init(np.zeros(4, dtype=int), 2)
        with pytest.raises(InferenceError):
            m_step(tiny_counts, resp, Hyperparams(1.0, 1.0))

    def test_permutation_equivariance(self, rng, tiny_counts):
        resp = rng.dirichlet(np.ones(3), size=4)
        h = Hyperparams(1.2, 1.4)
        base = m_step(tiny_counts, resp, h)
        perm = rng.permutation(4)
        permuted_counts = make_counts(tiny_counts.matrix.toarray()[perm])
        again = m_step(permuted_counts, resp[perm], h)
        np.testing.assert_allclose(again.log_beta, base.log_beta, atol=1e-12)


class TestInits:
    def test_dirichlet_single_theme(self, rng):
        resp = dirichlet_init(5, 1, rng)
        np.testing.assert_array_equal(resp, np.ones((5, 1)))

    def test_dirichlet_rows_on_simplex(self, rng):
        resp = dirichlet_init(200, 4, rng)
        np.testing.assert_allclose(resp.sum(axis=1), 1.0, atol=1e-12)
        assert resp.min() >= 0

    def test_dirichlet_mean(self, rng):
        resp = dirichlet_init(10_000, 5, rng)
        np.testing.assert_allclose(resp.mean(axis=0), 0.2, atol=0.02)

    def test_label_init_one_hot(self):
        resp = label_init(np.array([0, 1]), 2)
        np.testing.assert_array_equal(resp, [[1, 0], [0, 1]])

    def test_label_init_roundtrip(self, rng):
        labels = rng.integers(0, 4, size=30)
        assert (np.argmax(label_init(labels, 4), axis=1) == labels).all()

    def test_label_init_range_check(self):
        with pytest.raises(InputError):
            label_init(np.array([0, 3]), 3)


class TestRunEM:
    def test_fixed_point_stays(self):
        # two symmetric docs, symmetric init: parameters must not move
        counts = make_counts([[2, 1], [1, 2]])
        init = np.full((2, 2), 0.5)
        trace = run_em(counts, init, Hyperparams(1.0, 1.0), 6)
        assert np.ptp(trace.log_posteriors) < 1e-12
        np.testing.assert_allclose(trace.responsibilities, 0.5, atol=1e-12)

    def test_recovers_separable_truth_from_labels(self, rng):
        params = block_model(3, 30, within=0.9)
        counts, themes = generate_corpus(params, 60, 40, rng)
        trace = run_em(counts, label_init(themes, 3), Hyperparams(), 5)
        found = Clustering.from_responsibilities(trace.responsibilities)
        truth = Clustering(labels=themes, n_clusters=3)
        assert cooccurrence_score(found, truth) == 1.0

    def test_monotone_log_posterior(self, rng):
        for _ in range(10):
            counts = make_counts(rng.integers(0, 5, size=(12, 7)))
            trace = run_em(
                counts, dirichlet_init(12, 3, rng), Hyperparams(1.0, 1.3), 15
            )
            assert (np.diff(trace.log_posteriors) >= -1e-8).all()

    def test_zero_iterations(self, tiny_counts, rng):
        trace = run_em(tiny_counts, dirichlet_init(4, 2, rng), Hyperparams(), 0)
        assert trace.params is None
        assert trace.n_iterations == 0

    def test_init_must_normalize(self, tiny_counts):
        bad = np.full((4, 2), 0.3)
        with pytest.raises(InputError):
            run_em(tiny_counts, bad, Hyperparams(), 3)

    def test_trace_lengths(self, tiny_counts, rng):
        trace = run_em(tiny_counts, dirichlet_init(4, 2, rng), Hyperparams(), 7)
        assert len(trace.log_posteriors) == 7
        assert len(trace.train_perplexities) == 7

    def test_tolerance_stops_early(self, rng):
        params = block_model(2, 10, within=0.95)
        counts, themes = generate_corpus(params, 30, 40, rng)
        trace = run_em(counts, label_init(themes, 2), Hyperparams(), 50, tol=1e-7)
        assert trace.n_iterations < 50

    def test_estep_vocabulary_permutation_equivariance(self, rng):
        counts = make_counts(rng.integers(0, 4, size=(10, 6)))
        alpha = rng.dirichlet(np.ones(3))
        beta = rng.dirichlet(np.ones(6), size=3).T
        params = ModelParams.from_probs(alpha, beta)
        base = e_step(counts, params)
        perm = rng.permutation(6)
        permuted_counts = make_counts(counts.matrix.toarray()[:, perm])
        permuted_params = ModelParams.from_probs(alpha, beta[perm])
        np.testing.assert_allclose(e_step(permuted_counts, permuted_params),
                                   base, atol=1e-12)


class TestHardAssign:
    def test_matching_doc_goes_to_its_theme(self):
        counts = make_counts([[4, 0], [0, 4]])
        params = ModelParams.from_probs([0.5, 0.5], [[0.9, 0.1], [0.1, 0.9]])
        np.testing.assert_array_equal(hard_assign(counts, params), [0, 1])

    def test_tie_goes_to_lowest(self, tiny_counts):
        params = ModelParams.from_probs([0.5, 0.5], np.ones((5, 2)))
        assert (hard_assign(tiny_counts, params) == 0).all()

    def test_equals_estep_argmax(self, rng):
        counts = make_counts(rng.integers(0, 5, size=(20, 6)))
        params = ModelParams.from_probs(
            rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(6), size=3).T
        )
        np.testing.assert_array_equal(
            hard_assign(counts, params), np.argmax(e_step(counts, params), axis=1)
        )


class TestRunKMeans:
    def test_fixed_point_terminates_immediately(self, rng):
        params = block_model(2, 10, within=0.95)
        counts, themes = generate_corpus(params, 20, 30, rng)
        trace = run_kmeans(counts, themes, Hyperparams(), 20, n_themes=2)
        assert trace.n_iterations <= 2
        np.testing.assert_array_equal(trace.hard_assignments[-1], themes)

    def test_recovers_separable_truth(self, rng):
        # start within the truth's basin of attraction: 25% of labels flipped
        params = block_model(3, 30, within=0.9)
        counts, themes = generate_corpus(params, 60, 40, rng)
        init = themes.copy()
        noisy = rng.random(60) < 0.25
        init[noisy] = rng.integers(0, 3, size=int(noisy.sum()))
        trace = run_kmeans(counts, init, Hyperparams(), 30, n_themes=3)
        found = Clustering(labels=trace.hard_assignments[-1], n_clusters=3)
        assert cooccurrence_score(found, Clustering(labels=themes, n_clusters=3)) == 1.0

    def test_reaches_fixed_point(self, rng):
        counts = make_counts(rng.integers(0, 4, size=(25, 8)))
        trace = run_kmeans(counts, rng.integers(0, 3, size=25), Hyperparams(), 100,
                           n_themes=3)
        # stopped early means the last two assignments agree
        assert trace.n_iterations < 100
        last = trace.hard_assignments[-1]
        prev = trace.hard_assignments[-2] if len(trace.hard_assignments) > 1 else last
        np.testing.assert_array_equal(last, prev)

    def test_empty_theme_at_flat_smoothing_rejected(self, tiny_counts):
        with pytest.raises(InferenceError):
            run_kmeans(tiny_counts, np.zeros(4, dtype=int), Hyperparams(1.0, 1.0), 5,
                       n_themes=2)

    def test_empty_theme_survives_with_smoothing(self, tiny_counts):
        trace = run_kmeans(tiny_counts, np.zeros(4, dtype=int), Hyperparams(1.0, 1.5), 5,
                           n_themes=2)
        assert trace.params.n_themes == 2

    def test_matches_soft_em_on_separated_corpus(self, rng):
        params = block_model(4, 2000, within=0.9)
        counts, themes = generate_corpus(params, 120, 80, rng)
        init = rng.integers(0, 4, size=120)
        em_trace = run_em(counts, label_init(init, 4), Hyperparams(), 5)
        km_trace = run_kmeans(counts, init, Hyperparams(), 5, n_themes=4)
        soft = Clustering.from_responsibilities(em_trace.responsibilities)
        hard = Clustering(labels=km_trace.hard_assignments[-1], n_clusters=4)
        assert cooccurrence_score(soft, hard) >= 0.99


class TestIterativeSchedule:
    def test_valid(self):
        IterativeSchedule(stages=[(10, 5), (50, 5), (None, 5)])

    def test_final_must_be_full(self):
        with pytest.raises(InputError):
            IterativeSchedule(stages=[(10, 5), (50, 5)])

    def test_sizes_non_decreasing(self):
        with pytest.raises(InputError):
            IterativeSchedule(stages=[(50, 5), (10, 5), (None, 5)])

    def test_default_schedule_shape(self):
        sched = default_schedule(40_000)
        sizes = [s for s, _ in sched.stages]
        assert sizes[-1] is None
        assert sizes[0] == 800
        assert all(a < b for a, b in zip(sizes[:-2], sizes[1:-1]))


class TestRunIterative:
    def test_single_full_stage_equals_run_em(self, rng, tiny_counts):
        init = dirichlet_init(4, 2, rng)
        sched = IterativeSchedule(stages=[(None, 6)])
        a = run_iterative(tiny_counts, sched, init, Hyperparams())
        b = run_em(tiny_counts, init, Hyperparams(), 6)
        np.testing.assert_array_equal(a.log_posteriors, b.log_posteriors)
        np.testing.assert_array_equal(a.responsibilities, b.responsibilities)

    def test_responsibilities_stay_normalized(self, rng):
        counts = make_counts(rng.integers(0, 4, size=(15, 12)))
        sched = IterativeSchedule(stages=[(3, 4), (6, 4), (None, 4)])
        trace = run_iterative(counts, sched, dirichlet_init(15, 2, rng), Hyperparams())
        np.testing.assert_allclose(trace.responsibilities.sum(axis=1), 1.0, atol=1e-10)
        assert trace.stage_boundaries == [4, 8, 12]

    def test_final_params_cover_full_vocabulary(self, rng):
        counts = make_counts(rng.integers(0, 4, size=(15, 12)))
        sched = IterativeSchedule(stages=[(3, 4), (None, 4)])
        trace = run_iterative(counts, sched, dirichlet_init(15, 2, rng), Hyperparams())
        assert trace.params.n_words == 12


class TestRunRestarts:
    def test_single_run_is_plain_em(self, rng, tiny_counts):
        rng_a = np.random.default_rng(5)
        rng_b = np.random.default_rng(5)
        best, traces = run_restarts(tiny_counts, 2, Hyperparams(), 1, rng_a, n_iters=4)
        direct = run_em(
            tiny_counts, dirichlet_init(4, 2, rng_b.spawn(1)[0]), Hyperparams(), 4
        )
        assert len(traces) == 1
        np.testing.assert_array_equal(best.log_posteriors, direct.log_posteriors)

    def test_selects_min_perplexity(self, rng):
        counts = make_counts(rng.integers(0, 4, size=(20, 10)))
        best, traces = run_restarts(counts, 3, Hyperparams(), 8, rng, n_iters=5)
        perps = [t.final_train_perplexity for t in traces]
        assert best.final_train_perplexity == min(perps)

    def test_n_runs_validated(self, rng, tiny_counts):
        with pytest.raises(InputError):
            run_restarts(tiny_counts, 2, Hyperparams(), 0, rng)
