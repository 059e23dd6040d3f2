"""Supervised training and the two classification rules.

MAP estimation from labeled data yields the naive Bayes classifier; keeping
the full Dirichlet posterior instead of its mode yields the fully Bayesian
predictive rule, a Dirichlet-multinomial score computed entirely from
tabulated log-gamma lookups.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .corpus import CountMatrix
from .core import (
    Hyperparams,
    LogGammaTable,
    ModelParams,
    SuffStats,
    build_log_gamma_table,
    log_sum_exp,
    predictive_log_weights,
    suff_stats,
)
from .errors import InferenceError, InputError

__all__ = [
    "LabeledCorpus",
    "ClassificationReport",
    "RulePoint",
    "map_estimates",
    "naive_bayes_log_posterior",
    "bayes_predictive_log_posterior",
    "classify",
    "compare_rules",
]


@dataclass
class LabeledCorpus:
    """A count matrix plus one observed theme id per document."""

    counts: CountMatrix
    labels: np.ndarray
    theme_names: list[str]

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.counts.n_docs,):
            raise InputError("labels length must equal the document count")
        n_t = len(self.theme_names)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= n_t):
            raise InputError(f"label id outside [0, {n_t})")

    @property
    def n_themes(self) -> int:
        return len(self.theme_names)

    def stats(self) -> SuffStats:
        return suff_stats(self.counts, self.labels, self.n_themes)


@dataclass
class ClassificationReport:
    """Predictions plus normalized per-document log posteriors.

    Argmax ties go to the lowest theme id.  `error_rate` is None when no
    gold labels were supplied.
    """

    predicted: np.ndarray
    log_posteriors: np.ndarray = field(repr=False)
    error_rate: float | None = None
    gold: np.ndarray | None = field(default=None, repr=False)


def map_estimates(train: LabeledCorpus, hyper: Hyperparams) -> ModelParams:
    """MAP parameter estimates from labeled data:

        alpha_t = (S_t + la - 1) / (n_D + n_T (la - 1))
        beta_wt = (K_wt + lb - 1) / (K_t + n_W (lb - 1))
    """
    hyper.require_smoothed()
    stats = train.stats()
    n_w = train.counts.n_words
    if hyper.lambda_beta == 1.0 and np.any(stats.K_tot == 0):
        raise InferenceError(
            "a theme has no occurrences and lambda_beta=1 leaves its word "
            "distribution undefined"
        )
    alpha = stats.S + (hyper.lambda_alpha - 1.0)
    beta = stats.K + (hyper.lambda_beta - 1.0)
    return ModelParams.from_probs(alpha, beta)


def _doc_nonzeros(doc):
    """Word ids, counts, and length of a single document given as a dense
    vector, a 1 x n sparse row, or a (word_ids, counts) pair."""
    if isinstance(doc, tuple):
        ids = np.asarray(doc[0], dtype=np.int64)
        c = np.asarray(doc[1], dtype=np.int64)
    elif sp.issparse(doc):
        row = sp.csr_matrix(doc)
        if row.shape[0] != 1:
            raise InputError("expected a single document row")
        ids = row.indices.astype(np.int64)
        c = row.data.astype(np.int64)
    else:
        v = np.asarray(doc)
        if v.ndim != 1:
            raise InputError("expected a single document vector")
        ids = np.flatnonzero(v).astype(np.int64)
        c = v[ids].astype(np.int64)
    if np.any(c < 0):
        raise InputError("document counts must be non-negative")
    keep = c > 0
    ids, c = ids[keep], c[keep]
    return ids, c, int(c.sum())


def naive_bayes_log_posterior(doc, stats: SuffStats,
                              hyper: Hyperparams) -> np.ndarray:
    """Normalized log posterior over themes under the naive Bayes rule:

        (S_t + la - 1) * prod_w (K_wt + lb - 1)^{c_w} / (K_t + n_W (lb-1))^{l}
    """
    hyper.require_smoothed()
    if hyper.lambda_beta == 1.0 and np.any(stats.K_tot == 0):
        raise InferenceError(
            "a theme has no occurrences and lambda_beta=1 leaves the naive "
            "Bayes rule undefined"
        )
    ids, c, length = _doc_nonzeros(doc)
    if ids.size and int(ids.max()) >= stats.n_words:
        raise InputError("document contains a word id outside the vocabulary")
    with np.errstate(divide="ignore"):
        scores = np.log(stats.S + (hyper.lambda_alpha - 1.0))
        scores = scores - length * np.log(
            stats.K_tot + stats.n_words * (hyper.lambda_beta - 1.0)
        )
        if ids.size:
            scores = scores + c @ np.log(stats.K[ids, :] + (hyper.lambda_beta - 1.0))
    return _normalize_log(scores)


def bayes_predictive_log_posterior(doc, stats: SuffStats, hyper: Hyperparams,
                                   table: LogGammaTable) -> np.ndarray:
    """Normalized log posterior over themes under the fully Bayesian rule
    (Dirichlet-multinomial predictive):

        (S_t + la) * prod_w G(K_wt + c_w + lb)/G(K_wt + lb)
                   * G(K_t + nW*lb) / G(K_t + l + nW*lb)

    evaluated via log-gamma table lookups only.
    """
    ids, c, length = _doc_nonzeros(doc)
    scores = predictive_log_weights(stats, ids, c, length, hyper, table)
    return _normalize_log(scores)


def _normalize_log(scores: np.ndarray) -> np.ndarray:
    norm = log_sum_exp(scores)
    if not np.isfinite(norm):
        raise InferenceError("all themes have zero posterior weight for this document")
    return scores - norm


def classify(test: CountMatrix, stats: SuffStats, hyper: Hyperparams,
             rule: str = "naive", table: LogGammaTable | None = None,
             gold=None) -> ClassificationReport:
    """Classify every document of `test` with the chosen rule.

    The naive rule is fully vectorized; the Bayesian rule needs per-document
    gamma-ratio sums and a table covering K plus the largest test document.
    """
    n_docs = test.n_docs
    if rule == "naive":
        hyper.require_smoothed()
        if hyper.lambda_beta == 1.0 and np.any(stats.K_tot == 0):
            raise InferenceError("empty theme with lambda_beta=1: rule undefined")
        with np.errstate(divide="ignore"):
            log_num = np.log(stats.K + (hyper.lambda_beta - 1.0))
            scores = test.matrix @ log_num
            scores = scores - np.outer(
                test.doc_lengths,
                np.log(stats.K_tot + stats.n_words * (hyper.lambda_beta - 1.0)),
            )
            scores = scores + np.log(stats.S + (hyper.lambda_alpha - 1.0))[np.newaxis, :]
    elif rule == "bayes":
        if table is None:
            table = build_log_gamma_table(
                hyper, stats.n_words,
                int(stats.K_tot.max(initial=0)) + int(test.doc_lengths.max(initial=1)) + 1,
            )
        scores = np.empty((n_docs, stats.n_themes))
        for d in range(n_docs):
            ids, c = test.doc(d)
            scores[d] = predictive_log_weights(
                stats, ids, c, int(test.doc_lengths[d]), hyper, table
            )
    else:
        raise InputError(f"unknown classification rule {rule!r}")

    norms = log_sum_exp(scores, axis=1)
    if not np.all(np.isfinite(norms)):
        raise InferenceError("a document has zero posterior weight under every theme")
    log_post = scores - norms[:, np.newaxis]
    predicted = np.argmax(log_post, axis=1)
    error_rate = None
    gold_arr = None
    if gold is not None:
        gold_arr = np.asarray(gold, dtype=np.int64)
        error_rate = float(np.mean(predicted != gold_arr)) if n_docs else 0.0
    return ClassificationReport(
        predicted=predicted, log_posteriors=log_post,
        error_rate=error_rate, gold=gold_arr,
    )


@dataclass(frozen=True)
class RulePoint:
    """Error rates of both rules at one smoothing value."""

    lam: float
    naive_error: float
    bayes_error: float


def compare_rules(train: LabeledCorpus, test: LabeledCorpus,
                  lambda_grid) -> list[RulePoint]:
    """Error rate of naive Bayes versus the fully Bayesian rule over a grid
    of smoothing values, with the hyperparameters paired so the rules are
    comparable: naive uses (la-1=1, lb-1=lam), Bayesian uses (la=1, lb=lam).
    """
    stats = train.stats()
    results = []
    n_max = int(stats.K_tot.max(initial=0)) + int(test.counts.doc_lengths.max(initial=1)) + 1
    for lam in lambda_grid:
        if lam <= 0:
            raise InputError("smoothing values must be positive")
        hyper_naive = Hyperparams(lambda_alpha=2.0, lambda_beta=1.0 + lam)
        hyper_bayes = Hyperparams(lambda_alpha=1.0, lambda_beta=lam)
        table = build_log_gamma_table(hyper_bayes, stats.n_words, n_max)
        rep_n = classify(test.counts, stats, hyper_naive, rule="naive", gold=test.labels)
        rep_b = classify(test.counts, stats, hyper_bayes, rule="bayes",
                         table=table, gold=test.labels)
        results.append(RulePoint(lam=float(lam), naive_error=rep_n.error_rate,
                                 bayes_error=rep_b.error_rate))
    return results
