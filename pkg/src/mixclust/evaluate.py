"""Evaluation framework: perplexity, posterior objective, Hungarian-matched
cooccurrence between clusterings, exact enumeration for tiny instances, and
restart-quality reporting."""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaln
from scipy.stats import ConstantInputWarning, spearmanr

from .corpus import CountMatrix
from .core import Hyperparams, ModelParams, log_sum_exp, theme_log_likelihoods
from .errors import InputError

__all__ = [
    "Clustering",
    "EvalReport",
    "JointEnumeration",
    "RestartReport",
    "log_posterior",
    "perplexity",
    "hungarian",
    "contingency",
    "cooccurrence_score",
    "enumerate_joint",
    "restart_correlation_report",
]


def log_posterior(counts: CountMatrix, params: ModelParams,
                  hyper: Hyperparams) -> float:
    """Unnormalized log posterior density of the parameters given the corpus:
    mixture log-likelihood plus the Dirichlet prior log-densities (up to the
    constant normalizers, which the EM objective drops as well)."""
    if counts.n_docs == 0:
        total = 0.0
    else:
        loglik = log_sum_exp(theme_log_likelihoods(counts, params), axis=1)
        total = float(np.sum(loglik))
    # 0 * log(0) is 0 here: a vanished weight carries no prior mass at lambda=1.
    if hyper.lambda_alpha != 1.0:
        total += (hyper.lambda_alpha - 1.0) * float(np.sum(params.log_alpha))
    if hyper.lambda_beta != 1.0:
        total += (hyper.lambda_beta - 1.0) * float(np.sum(params.log_beta))
    return total


def perplexity(counts: CountMatrix, params: ModelParams) -> float:
    """exp of minus the per-token mixture log-likelihood.

    The normalization by total occurrences makes mixtures comparable with
    the plain unigram model (the n_themes=1 case).
    """
    total_length = counts.total_length
    if total_length == 0:
        raise InputError("perplexity undefined on a corpus with no occurrences")
    loglik = log_sum_exp(theme_log_likelihoods(counts, params), axis=1)
    return float(np.exp(-np.sum(loglik) / total_length))


def hungarian(weights) -> np.ndarray:
    """Permutation sigma maximizing sum_i weights[i, sigma(i)].

    Weighted bipartite matching; cubic worst case in the matrix dimension.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise InputError("hungarian needs a square matrix")
    if not np.all(np.isfinite(w)):
        raise InputError("hungarian needs finite weights")
    rows, cols = linear_sum_assignment(w, maximize=True)
    perm = np.empty(w.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


@dataclass
class Clustering:
    """A hard clustering: one label in [0, n_clusters) per document."""

    labels: np.ndarray
    n_clusters: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise InputError("clustering labels must be a vector")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.n_clusters
        ):
            raise InputError(f"cluster label outside [0, {self.n_clusters})")

    @classmethod
    def from_responsibilities(cls, resp) -> "Clustering":
        """Harden a soft clustering by row argmax (ties to the lowest id)."""
        resp = np.asarray(resp)
        return cls(labels=np.argmax(resp, axis=1), n_clusters=resp.shape[1])

    @property
    def n_docs(self) -> int:
        return self.labels.shape[0]


def contingency(a: Clustering, b: Clustering) -> np.ndarray:
    """k x k matrix of co-assignment counts between two clusterings."""
    if a.n_docs != b.n_docs:
        raise InputError("clusterings cover different document sets")
    if a.n_clusters != b.n_clusters:
        raise InputError(
            "cooccurrence comparison needs equal cluster counts "
            f"(got {a.n_clusters} and {b.n_clusters})"
        )
    k = a.n_clusters
    table = np.zeros((k, k), dtype=np.int64)
    np.add.at(table, (a.labels, b.labels), 1)
    return table


def cooccurrence_score(a: Clustering, b: Clustering) -> float:
    """Fraction of documents on which the clusterings agree after the best
    one-to-one cluster matching."""
    table = contingency(a, b)
    if a.n_docs == 0:
        raise InputError("cooccurrence of empty clusterings is undefined")
    perm = hungarian(table.astype(np.float64))
    matched = table[np.arange(a.n_clusters), perm].sum()
    return float(matched) / a.n_docs


ENUMERATION_GUARD = 10**6


@dataclass
class JointEnumeration:
    """Exact posterior over every possible theme assignment of a tiny corpus.

    Row i of `assignments` is the assignment whose mixed-radix index is i
    (document 0 is the most significant digit).
    """

    assignments: np.ndarray = field(repr=False)
    log_probs: np.ndarray = field(repr=False)
    n_themes: int

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def index_of(self, assignment) -> int:
        assignment = np.asarray(assignment, dtype=np.int64)
        idx = 0
        for t in assignment:
            idx = idx * self.n_themes + int(t)
        return idx

    def conditional(self, d: int, fixed) -> np.ndarray:
        """P(T_d = . | T_{-d} = fixed_{-d}, C): normalized slice over theme d."""
        fixed = np.asarray(fixed, dtype=np.int64)
        probe = fixed.copy()
        idx = []
        for t in range(self.n_themes):
            probe[d] = t
            idx.append(self.index_of(probe))
        lp = self.log_probs[idx]
        return np.exp(lp - log_sum_exp(lp))

    def marginal(self, d: int) -> np.ndarray:
        """P(T_d = . | C)."""
        out = np.zeros(self.n_themes)
        np.add.at(out, self.assignments[:, d], self.probs)
        return out


def enumerate_joint(counts: CountMatrix, hyper: Hyperparams,
                    n_themes: int) -> JointEnumeration:
    """Exact P(T | C) by brute force over all n_themes**n_docs assignments.

    The unnormalized log weight of an assignment is

        sum_t [ lnG(S_t + la) + sum_w lnG(K_wt + lb) - lnG(K_t + nW*lb) ]

    i.e. the Dirichlet normalization constants after integrating out the
    parameters.  Guarded to at most 10**6 assignments; this is the oracle
    the samplers are validated against, not a production path.
    """
    n_docs, n_words = counts.n_docs, counts.n_words
    size = n_themes**n_docs
    if size > ENUMERATION_GUARD:
        raise InputError(
            f"enumeration of {n_themes}**{n_docs} assignments exceeds the "
            f"{ENUMERATION_GUARD} guard"
        )
    dense = np.asarray(counts.matrix.todense(), dtype=np.int64)
    lam_a, lam_b = hyper.lambda_alpha, hyper.lambda_beta
    assignments = np.empty((size, n_docs), dtype=np.int64)
    log_w = np.empty(size)
    for i, assign in enumerate(itertools.product(range(n_themes), repeat=n_docs)):
        assignments[i] = assign
        K = np.zeros((n_words, n_themes))
        S = np.zeros(n_themes)
        for d, t in enumerate(assign):
            K[:, t] += dense[d]
            S[t] += 1
        log_w[i] = float(
            np.sum(gammaln(S + lam_a))
            + np.sum(gammaln(K + lam_b))
            - np.sum(gammaln(K.sum(axis=0) + n_words * lam_b))
        )
    log_probs = log_w - log_sum_exp(log_w)
    return JointEnumeration(assignments=assignments, log_probs=log_probs, n_themes=n_themes)


@dataclass
class RestartReport:
    """Per-restart (training perplexity, cooccurrence) pairs and their
    Spearman rank correlation."""

    train_perplexities: np.ndarray
    cooccurrences: np.ndarray
    spearman: float
    degenerate: bool = False

    def rows(self):
        return list(zip(self.train_perplexities.tolist(), self.cooccurrences.tolist()))


def restart_correlation_report(traces, reference: Clustering,
                               counts: CountMatrix | None = None) -> RestartReport:
    """Correlate each run's final training perplexity with its clustering
    quality against `reference`.

    When `counts` is given, each trace's final parameters cluster those
    documents (the held-out protocol); otherwise the traces' own final
    responsibilities are hardened and scored (training-side protocol).
    """
    from .em import hard_assign  # local import: em builds on evaluate

    if len(traces) < 3:
        raise InputError("need at least 3 traces to report a correlation")
    perps, coocs = [], []
    for trace in traces:
        perps.append(trace.final_train_perplexity)
        if counts is not None:
            labels = hard_assign(counts, trace.params)
            clustering = Clustering(labels=labels, n_clusters=trace.params.n_themes)
        else:
            clustering = Clustering.from_responsibilities(trace.responsibilities)
        coocs.append(cooccurrence_score(clustering, reference))
    perps = np.asarray(perps)
    coocs = np.asarray(coocs)
    with warnings.catch_warnings():
        # constant inputs are reported through the degenerate flag instead
        warnings.simplefilter("ignore", ConstantInputWarning)
        rho = spearmanr(perps, coocs).statistic
    degenerate = bool(np.isnan(rho))
    return RestartReport(
        train_perplexities=perps,
        cooccurrences=coocs,
        spearman=0.0 if degenerate else float(rho),
        degenerate=degenerate,
    )


@dataclass
class EvalReport:
    """Flat summary of one inference run's quality."""

    train_perplexity: float | None = None
    test_perplexity: float | None = None
    cooccurrence_train: float | None = None
    cooccurrence_test: float | None = None
    mapping: list | None = None
    metadata: dict = field(default_factory=dict)

    def to_text(self) -> str:
        flat = {
            "train_perplexity": self.train_perplexity,
            "test_perplexity": self.test_perplexity,
            "cooccurrence_train": self.cooccurrence_train,
            "cooccurrence_test": self.cooccurrence_test,
            "mapping": self.mapping,
        }
        flat.update(self.metadata)
        return json.dumps(flat, indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")
