"""Scikit-learn style estimator wrappers.

These compose the functional inference routines with the fit/predict
protocol (and `get_params`/`set_params` via BaseEstimator) so the model
plugs into pipelines, grid search, and the rest of the ecosystem.  X is a
document-by-word count matrix: a CountMatrix, a scipy sparse matrix, or a
dense array of non-negative integers.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin, ClusterMixin

from .core import Hyperparams, build_log_gamma_table, suff_stats
from .corpus import CountMatrix
from .em import (
    default_schedule,
    dirichlet_init,
    e_step,
    hard_assign,
    label_init,
    run_em,
    run_iterative,
    run_kmeans,
    run_restarts,
)
from .errors import InputError
from .evaluate import perplexity
from .gibbs import run_chain
from .supervised import classify

__all__ = [
    "MultinomialMixtureEM",
    "MultinomialMixtureKMeans",
    "CollapsedGibbsMixture",
    "ThemeClassifier",
    "as_count_matrix",
]


def as_count_matrix(X) -> CountMatrix:
    """Validate and convert estimator input into a CountMatrix."""
    if isinstance(X, CountMatrix):
        return X
    if sp.issparse(X):
        return CountMatrix(matrix=X.tocsr())
    arr = np.asarray(X)
    if arr.ndim != 2:
        raise InputError("X must be a 2-D document-by-word count matrix")
    if arr.size and arr.min() < 0:
        raise InputError("X must contain non-negative counts")
    return CountMatrix(matrix=sp.csr_matrix(arr))


def _as_generator(random_state):
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


class MultinomialMixtureEM(ClusterMixin, BaseEstimator):
    """Soft multinomial mixture clustering fitted by EM.

    Parameters mirror the underlying routines: `n_restarts` > 1 selects the
    run with the lowest final training perplexity; `schedule="auto"` (or an
    IterativeSchedule) grows the vocabulary incrementally across EM stages.
    """

    def __init__(self, n_themes=2, *, lambda_alpha=1.0, lambda_beta=1.1,
                 n_iter=30, schedule=None, n_restarts=1, random_state=None):
        self.n_themes = n_themes
        self.lambda_alpha = lambda_alpha
        self.lambda_beta = lambda_beta
        self.n_iter = n_iter
        self.schedule = schedule
        self.n_restarts = n_restarts
        self.random_state = random_state

    def _hyper(self) -> Hyperparams:
        return Hyperparams(lambda_alpha=self.lambda_alpha, lambda_beta=self.lambda_beta)

    def fit(self, X, y=None):
        """Fit the mixture.  When `y` is given it seeds the responsibilities
        (one-hot from hard labels, or a full soft matrix)."""
        counts = as_count_matrix(X)
        hyper = self._hyper()
        rng = _as_generator(self.random_state)
        schedule = self.schedule
        if schedule == "auto":
            schedule = default_schedule(counts.n_words)
        if self.n_restarts > 1:
            if y is not None:
                raise InputError("restarts draw their own initializations; y must be None")
            best, traces = run_restarts(
                counts, self.n_themes, hyper, self.n_restarts, rng,
                n_iters=self.n_iter, schedule=schedule,
            )
            self.trace_ = best
            self.all_traces_ = traces
        else:
            if y is None:
                init = dirichlet_init(counts.n_docs, self.n_themes, rng)
            else:
                y = np.asarray(y)
                init = y if y.ndim == 2 else label_init(y, self.n_themes)
            if schedule is None:
                self.trace_ = run_em(counts, init, hyper, self.n_iter)
            else:
                self.trace_ = run_iterative(counts, schedule, init, hyper)
        self.params_ = self.trace_.params
        self.responsibilities_ = self.trace_.responsibilities
        self.labels_ = np.argmax(self.responsibilities_, axis=1)
        self.n_features_in_ = counts.n_words
        return self

    def predict(self, X):
        return hard_assign(as_count_matrix(X), self.params_)

    def predict_proba(self, X):
        return e_step(as_count_matrix(X), self.params_)

    def perplexity(self, X) -> float:
        return perplexity(as_count_matrix(X), self.params_)

    def score(self, X, y=None) -> float:
        """Mean per-token log-likelihood (higher is better)."""
        return -float(np.log(self.perplexity(X)))


class MultinomialMixtureKMeans(ClusterMixin, BaseEstimator):
    """Hard-assignment (K-means style) variant of the mixture EM."""

    def __init__(self, n_themes=2, *, lambda_alpha=1.0, lambda_beta=1.1,
                 n_iter=30, random_state=None):
        self.n_themes = n_themes
        self.lambda_alpha = lambda_alpha
        self.lambda_beta = lambda_beta
        self.n_iter = n_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        counts = as_count_matrix(X)
        hyper = Hyperparams(lambda_alpha=self.lambda_alpha, lambda_beta=self.lambda_beta)
        rng = _as_generator(self.random_state)
        init = np.asarray(y, dtype=np.int64) if y is not None else rng.integers(
            0, self.n_themes, size=counts.n_docs
        )
        self.trace_ = run_kmeans(counts, init, hyper, self.n_iter,
                                 n_themes=self.n_themes)
        self.params_ = self.trace_.params
        self.labels_ = self.trace_.hard_assignments[-1]
        self.n_features_in_ = counts.n_words
        return self

    def predict(self, X):
        return hard_assign(as_count_matrix(X), self.params_)

    def perplexity(self, X) -> float:
        return perplexity(as_count_matrix(X), self.params_)


class CollapsedGibbsMixture(ClusterMixin, BaseEstimator):
    """Clustering by Rao-Blackwellized Gibbs sampling.

    `labels_` is the final sweep's assignment; `trace_` carries the retained
    samples and per-sweep training perplexity snapshots.
    """

    def __init__(self, n_themes=2, *, lambda_alpha=1.0, lambda_beta=1.1,
                 n_sweeps=200, burn_in=None, thin=1, snapshot_every=None,
                 random_state=None):
        self.n_themes = n_themes
        self.lambda_alpha = lambda_alpha
        self.lambda_beta = lambda_beta
        self.n_sweeps = n_sweeps
        self.burn_in = burn_in
        self.thin = thin
        self.snapshot_every = snapshot_every
        self.random_state = random_state

    def fit(self, X, y=None):
        counts = as_count_matrix(X)
        hyper = Hyperparams(lambda_alpha=self.lambda_alpha, lambda_beta=self.lambda_beta)
        rng = _as_generator(self.random_state)
        init = np.asarray(y, dtype=np.int64) if y is not None else rng.integers(
            0, self.n_themes, size=counts.n_docs
        )
        burn_in = self.burn_in if self.burn_in is not None else self.n_sweeps // 10
        self.trace_ = run_chain(
            counts, init, hyper, "collapsed", self.n_sweeps, burn_in, self.thin,
            rng, n_themes=self.n_themes, snapshot_every=self.snapshot_every,
        )
        self.labels_ = self.trace_.final_assignment
        self.stats_ = suff_stats(counts, self.labels_, self.n_themes)
        self.train_counts_ = counts
        self.n_features_in_ = counts.n_words
        return self

    def predict(self, X):
        """Classify new documents by the Dirichlet-multinomial predictive
        rule conditioned on the final training assignment."""
        counts = as_count_matrix(X)
        hyper = Hyperparams(lambda_alpha=self.lambda_alpha, lambda_beta=self.lambda_beta)
        table = build_log_gamma_table(
            hyper, self.stats_.n_words,
            int(self.stats_.K_tot.max(initial=0)) + int(counts.doc_lengths.max(initial=1)) + 1,
        )
        report = classify(counts, self.stats_, hyper, rule="bayes", table=table)
        return report.predicted


class ThemeClassifier(ClassifierMixin, BaseEstimator):
    """Supervised theme classification from labeled counts.

    rule="naive" applies the MAP plug-in (naive Bayes with Laplacian
    smoothing); rule="bayes" integrates the parameters out and scores with
    the Dirichlet-multinomial predictive distribution.
    """

    def __init__(self, rule="naive", *, lambda_alpha=None, lambda_beta=None):
        self.rule = rule
        self.lambda_alpha = lambda_alpha
        self.lambda_beta = lambda_beta

    def _hyper(self) -> Hyperparams:
        # Default smoothing follows the rule pairing: the MAP rule needs the
        # +1 offset to apply the same effective smoothing as the Bayesian one.
        if self.rule == "naive":
            la = 2.0 if self.lambda_alpha is None else self.lambda_alpha
            lb = 1.1 if self.lambda_beta is None else self.lambda_beta
        else:
            la = 1.0 if self.lambda_alpha is None else self.lambda_alpha
            lb = 0.1 if self.lambda_beta is None else self.lambda_beta
        return Hyperparams(lambda_alpha=la, lambda_beta=lb)

    def fit(self, X, y):
        if self.rule not in ("naive", "bayes"):
            raise InputError(f"unknown rule {self.rule!r}")
        counts = as_count_matrix(X)
        y = np.asarray(y)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        self.stats_ = suff_stats(counts, encoded, len(self.classes_))
        self.n_features_in_ = counts.n_words
        return self

    def predict_log_proba(self, X):
        counts = as_count_matrix(X)
        report = classify(counts, self.stats_, self._hyper(), rule=self.rule)
        return report.log_posteriors

    def predict_proba(self, X):
        return np.exp(self.predict_log_proba(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_log_proba(X), axis=1)]
