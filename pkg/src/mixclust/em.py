"""Unsupervised inference by EM and its variants.

Soft EM alternates posterior theme probabilities (E-step) with smoothed
parameter re-estimation (M-step); the hard variant is a K-means algorithm
under the same model.  The incremental-vocabulary procedure and multiple
restarts with perplexity selection address EM's sensitivity to
initialization in high dimension.

Every procedure here starts from the M-step given initial responsibilities:
initializing a soft clustering needs no knowledge of the vocabulary, which
is what makes the staged vocabulary growth possible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import (
    CountMatrix,
    KeepMostFrequent,
    Vocabulary,
    reduce_vocabulary,
    restrict_counts,
)
from .core import (
    Hyperparams,
    ModelParams,
    log_sum_exp,
    theme_log_likelihoods,
)
from .errors import InferenceError, InputError
from .evaluate import log_posterior, perplexity

__all__ = [
    "EMTrace",
    "IterativeSchedule",
    "e_step",
    "m_step",
    "dirichlet_init",
    "label_init",
    "hard_assign",
    "run_em",
    "run_kmeans",
    "run_iterative",
    "run_restarts",
    "default_schedule",
]

MONOTONICITY_SLACK = 1e-8


def e_step(counts: CountMatrix, params: ModelParams) -> np.ndarray:
    """Posterior theme probabilities per document (rows sum to one)."""
    loglik = theme_log_likelihoods(counts, params)
    norms = log_sum_exp(loglik, axis=1)
    bad = ~np.isfinite(norms)
    if np.any(bad):
        raise InferenceError(
            f"document {int(np.flatnonzero(bad)[0])} has zero likelihood "
            "under every theme"
        )
    return np.exp(loglik - norms[:, np.newaxis])


def m_step(counts: CountMatrix, resp: np.ndarray,
           hyper: Hyperparams) -> ModelParams:
    """Smoothed parameter re-estimation from soft counts:

        alpha_t ~ la - 1 + sum_d resp_dt
        beta_wt ~ lb - 1 + sum_d C_wd resp_dt
    """
    hyper.require_smoothed()
    resp = np.asarray(resp, dtype=np.float64)
    if resp.shape[0] != counts.n_docs:
        raise InputError("responsibilities row count must equal the document count")
    alpha = (hyper.lambda_alpha - 1.0) + resp.sum(axis=0)
    beta = (hyper.lambda_beta - 1.0) + counts.matrix.T @ resp
    col = beta.sum(axis=0)
    if np.any(col <= 0):
        raise InferenceError(
            "a theme received no word mass (possible only at lambda_beta=1)"
        )
    return ModelParams.from_probs(alpha, beta)


def dirichlet_init(n_docs: int, n_themes: int, rng) -> np.ndarray:
    """Each document starts from an independent uniform draw on the theme
    simplex, so all clusters initially overlap."""
    return rng.dirichlet(np.ones(n_themes), size=n_docs)


def label_init(labels, n_themes: int) -> np.ndarray:
    """One-hot responsibilities from a hard labeling."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_themes):
        raise InputError(f"label outside [0, {n_themes})")
    resp = np.zeros((labels.shape[0], n_themes))
    resp[np.arange(labels.shape[0]), labels] = 1.0
    return resp


def hard_assign(counts: CountMatrix, params: ModelParams) -> np.ndarray:
    """Maximum-posterior theme per document (the K-means assignment step);
    ties go to the lowest theme id."""
    return np.argmax(theme_log_likelihoods(counts, params), axis=1)


@dataclass
class EMTrace:
    """Per-iteration objective values plus the final state of one run."""

    log_posteriors: np.ndarray
    train_perplexities: np.ndarray
    params: ModelParams | None
    responsibilities: np.ndarray = field(repr=False)
    hard_assignments: list | None = field(default=None, repr=False)
    seed: int | None = None
    config: dict = field(default_factory=dict)
    stage_boundaries: list | None = None

    @property
    def n_iterations(self) -> int:
        return len(self.log_posteriors)

    @property
    def final_train_perplexity(self) -> float:
        if len(self.train_perplexities) == 0:
            raise InputError("trace has no iterations")
        return float(self.train_perplexities[-1])


def _check_monotone(log_posts):
    lp = np.asarray(log_posts)
    if lp.size >= 2:
        drops = np.diff(lp)
        worst = drops.min(initial=0.0)
        if worst < -MONOTONICITY_SLACK:
            raise InferenceError(
                f"EM log-posterior decreased by {-worst:g} (beyond the "
                f"{MONOTONICITY_SLACK:g} slack): M/E-step bug"
            )


def run_em(counts: CountMatrix, init: np.ndarray, hyper: Hyperparams,
           n_iters: int, *, tol: float | None = None,
           record_assignments: bool = False,
           seed=None, config: dict | None = None) -> EMTrace:
    """Alternate M-step and E-step for `n_iters` iterations starting from the
    given responsibilities; the log-posterior sequence must be non-decreasing
    (up to numerical slack), which is checked.

    `tol` optionally stops early once the relative log-posterior improvement
    drops below it; the default is a fixed iteration count.
    """
    resp = np.asarray(init, dtype=np.float64)
    if resp.ndim != 2 or resp.shape[0] != counts.n_docs:
        raise InputError("init must be a responsibilities matrix (one row per doc)")
    row_err = np.abs(resp.sum(axis=1) - 1.0).max(initial=0.0)
    if row_err > 1e-8:
        raise InputError(f"initial responsibilities rows do not sum to one ({row_err:g})")
    log_posts, perps, hards = [], [], []
    params = None
    for _ in range(n_iters):
        params = m_step(counts, resp, hyper)
        loglik = theme_log_likelihoods(counts, params)
        norms = log_sum_exp(loglik, axis=1)
        if not np.all(np.isfinite(norms)):
            raise InferenceError("a document has zero likelihood under every theme")
        lp = float(np.sum(norms))
        if hyper.lambda_alpha != 1.0:
            lp += (hyper.lambda_alpha - 1.0) * float(np.sum(params.log_alpha))
        if hyper.lambda_beta != 1.0:
            lp += (hyper.lambda_beta - 1.0) * float(np.sum(params.log_beta))
        log_posts.append(lp)
        # perplexity is undefined on a corpus with no occurrences
        total = counts.total_length
        perps.append(float(np.exp(-np.sum(norms) / total)) if total else float("nan"))
        resp = np.exp(loglik - norms[:, np.newaxis])
        if record_assignments:
            hards.append(np.argmax(loglik, axis=1))
        if tol is not None and len(log_posts) >= 2:
            prev = log_posts[-2]
            if abs(log_posts[-1] - prev) <= tol * max(1.0, abs(prev)):
                break
    _check_monotone(log_posts)
    return EMTrace(
        log_posteriors=np.asarray(log_posts),
        train_perplexities=np.asarray(perps),
        params=params,
        responsibilities=resp,
        hard_assignments=hards if record_assignments else None,
        seed=seed,
        config=dict(config or {}),
    )


def run_kmeans(counts: CountMatrix, init, hyper: Hyperparams,
               n_iters: int, *, n_themes: int | None = None,
               seed=None, config: dict | None = None) -> EMTrace:
    """Hard (deterministic) clustering version of EM.

    The E-step assigns each document to its maximum-posterior theme; the
    M-step re-estimates from the resulting one-hot responsibilities.  Stops
    early once the assignment reaches a fixed point.
    """
    themes = np.asarray(init, dtype=np.int64)
    if n_themes is None:
        n_themes = int(themes.max(initial=0)) + 1
    log_posts, perps, hards = [], [], []
    params = None
    for _ in range(n_iters):
        resp = label_init(themes, n_themes)
        params = m_step(counts, resp, hyper)
        log_posts.append(log_posterior(counts, params, hyper))
        perps.append(perplexity(counts, params))
        new_themes = hard_assign(counts, params)
        hards.append(new_themes)
        if np.array_equal(new_themes, themes):
            break
        themes = new_themes
    return EMTrace(
        log_posteriors=np.asarray(log_posts),
        train_perplexities=np.asarray(perps),
        params=params,
        responsibilities=label_init(themes, n_themes),
        hard_assignments=hards,
        seed=seed,
        config=dict(config or {}),
    )


@dataclass
class IterativeSchedule:
    """Stages of (vocabulary size, EM iterations); None means the full
    vocabulary.  Sizes must be non-decreasing and the last stage full."""

    stages: list

    def __post_init__(self):
        if not self.stages:
            raise InputError("schedule needs at least one stage")
        sizes = [s for s, _ in self.stages]
        if sizes[-1] is not None:
            raise InputError("the final stage must use the full vocabulary (size None)")
        prev = 0
        for s in sizes:
            if s is None:
                continue
            if s <= 0 or s < prev:
                raise InputError("stage vocabulary sizes must be positive and non-decreasing")
            prev = s
        ints = [s for s in sizes if s is not None]
        if any(s is None for s in sizes[: len(ints)]):
            raise InputError("full-vocabulary stages must come last")
        for _, iters in self.stages:
            if iters < 0:
                raise InputError("stage iteration counts must be non-negative")


def default_schedule(n_words: int, iterations: int = 15) -> IterativeSchedule:
    """Four stages bracketing a ~2% starting vocabulary: n/50, n/16, n/5, full."""
    sizes = sorted({
        min(n_words, max(1, -(-n_words // 50))),
        min(n_words, max(1, -(-n_words // 16))),
        min(n_words, max(1, -(-n_words // 5))),
    })
    stages = [(s, iterations) for s in sizes if s < n_words]
    stages.append((None, iterations))
    return IterativeSchedule(stages=stages)


def run_iterative(counts: CountMatrix, schedule: IterativeSchedule,
                  init, hyper: Hyperparams, *,
                  vocab: Vocabulary | None = None,
                  seed=None, config: dict | None = None) -> EMTrace:
    """EM over a growing vocabulary.

    Each stage restricts the corpus to its most frequent words, runs EM from
    the carried-over responsibilities, and hands the responsibilities to the
    next (larger) stage.  Starting each stage from the M-step sidesteps
    initializing word probabilities for the newly admitted rare words: they
    enter at their responsibility-weighted corpus frequencies.
    """
    resp = np.asarray(init, dtype=np.float64)
    totals = np.asarray(counts.matrix.sum(axis=0)).ravel()
    # Frequency rank of each column; vocabulary reduction when word strings
    # are available, plain column ranking otherwise.
    log_posts, perps = [], []
    boundaries = []
    trace = None
    for size, iters in schedule.stages:
        if size is None or size >= counts.n_words:
            stage_counts = counts
        elif vocab is not None:
            stage_vocab = reduce_vocabulary(vocab, counts, KeepMostFrequent(size))
            stage_counts = restrict_counts(counts, vocab, stage_vocab)
        else:
            order = np.lexsort((np.arange(counts.n_words), -totals))
            cols = np.sort(order[:size])
            stage_counts = CountMatrix(matrix=counts.matrix[:, cols])
        trace = run_em(stage_counts, resp, hyper, iters)
        resp = trace.responsibilities
        log_posts.extend(trace.log_posteriors.tolist())
        perps.extend(trace.train_perplexities.tolist())
        boundaries.append(len(log_posts))
    return EMTrace(
        log_posteriors=np.asarray(log_posts),
        train_perplexities=np.asarray(perps),
        params=trace.params if trace is not None else None,
        responsibilities=resp,
        seed=seed,
        config=dict(config or {}),
        stage_boundaries=boundaries,
    )


def run_restarts(counts: CountMatrix, n_themes: int, hyper: Hyperparams,
                 n_runs: int, rng, *, n_iters: int = 30,
                 schedule: IterativeSchedule | None = None,
                 vocab: Vocabulary | None = None):
    """Independent Dirichlet-initialized runs; the returned best run is the
    one with the lowest final training perplexity, a reliable stand-in for
    clustering quality when no reference labels exist."""
    if n_runs < 1:
        raise InputError("n_runs must be at least 1")
    traces = []
    for child in rng.spawn(n_runs):
        resp0 = dirichlet_init(counts.n_docs, n_themes, child)
        if schedule is None:
            trace = run_em(counts, resp0, hyper, n_iters)
        else:
            trace = run_iterative(counts, schedule, resp0, hyper, vocab=vocab)
        traces.append(trace)
    best = min(traces, key=lambda tr: tr.final_train_perplexity)
    return best, traces
