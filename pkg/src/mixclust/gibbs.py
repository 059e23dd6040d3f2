"""Markov chain Monte Carlo inference: the naive Gibbs sampler built from
the EM update equations and the Rao-Blackwellized (collapsed) sampler that
integrates the continuous parameters out analytically.

The naive sampler must draw roughly n_words * n_themes Gamma variates per
sweep to refresh the parameters; the collapsed sampler replaces all of that
with per-document categorical draws whose weights come from tabulated
log-gamma lookups, which is what makes it markedly faster per sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import collapsed_sweep
from .corpus import CountMatrix
from .core import (
    Hyperparams,
    LogGammaTable,
    ModelParams,
    SuffStats,
    log_sum_exp,
    posterior_mean_params,
    predictive_log_weights,
    suff_stats,
    table_for,
    theme_log_likelihoods,
)
from .errors import InferenceError, InputError, TableRangeError
from .evaluate import Clustering, cooccurrence_score, perplexity

__all__ = [
    "ChainState",
    "ChainTrace",
    "initial_state",
    "collapsed_conditional",
    "collapsed_gibbs_sweep",
    "naive_gibbs_sweep",
    "run_chain",
]


@dataclass
class ChainState:
    """Mutable state of one Gibbs chain.

    The collapsed chain carries sufficient statistics kept in lockstep with
    the assignment; the naive chain carries sampled model parameters.
    """

    themes: np.ndarray
    stats: SuffStats | None = None
    params: ModelParams | None = field(default=None, repr=False)
    sweep: int = 0


def initial_state(counts: CountMatrix, init, kind: str,
                  hyper: Hyperparams, rng,
                  n_themes: int | None = None) -> ChainState:
    """Set up a chain from an initial hard assignment."""
    themes = np.ascontiguousarray(init, dtype=np.int64)
    if n_themes is None:
        n_themes = int(themes.max(initial=0)) + 1
    if themes.shape != (counts.n_docs,):
        raise InputError("initial assignment length must equal the document count")
    stats = suff_stats(counts, themes, n_themes)
    if kind == "collapsed":
        return ChainState(themes=themes, stats=stats)
    if kind == "naive":
        params = _sample_params(stats, hyper, rng)
        return ChainState(themes=themes, params=params)
    raise InputError(f"unknown chain kind {kind!r} (expected 'naive' or 'collapsed')")


def collapsed_conditional(stats_minus_d: SuffStats, doc, hyper: Hyperparams,
                          table: LogGammaTable) -> np.ndarray:
    """Normalized log conditional of one document's theme given all other
    assignments, with the document already removed from the statistics.

    This is the same Dirichlet-multinomial score as the supervised fully
    Bayesian rule; the S_t - 1 bookkeeping is implicit in using the
    deprived statistics.
    """
    from .supervised import _doc_nonzeros

    ids, c, length = _doc_nonzeros(doc)
    scores = predictive_log_weights(stats_minus_d, ids, c, length, hyper, table)
    return scores - log_sum_exp(scores)


def _require_table_capacity(table: LogGammaTable, counts: CountMatrix):
    # Every lookup during a sweep is bounded by the total corpus length, so a
    # single capacity check up front covers the whole chain.
    if table.n_max < counts.total_length:
        raise TableRangeError(
            f"log-gamma table covers [0, {table.n_max}] but sweeps may query "
            f"up to {counts.total_length}"
        )


def collapsed_gibbs_sweep(state: ChainState, counts: CountMatrix,
                          hyper: Hyperparams, table: LogGammaTable,
                          rng) -> ChainState:
    """One fixed-order pass of the Rao-Blackwellized sampler: each document
    in turn is removed from the statistics, resampled from the collapsed
    conditional, and added back under its new theme."""
    if state.stats is None:
        raise InputError("collapsed sweep needs a state carrying sufficient statistics")
    _require_table_capacity(table, counts)
    indptr, indices, data = counts.csr_arrays()
    collapsed_sweep(
        indptr,
        indices,
        data,
        counts.doc_lengths,
        state.themes,
        state.stats.S,
        state.stats.K,
        state.stats.K_tot,
        table.table_word,
        table.diff_word,
        table.table_theme,
        float(hyper.lambda_alpha),
        rng.random(counts.n_docs),
    )
    state.sweep += 1
    return state


def _sample_params(stats: SuffStats, hyper: Hyperparams, rng) -> ModelParams:
    """Draw (alpha, beta) from their Dirichlet conditionals given the current
    assignment.  The beta block is one Gamma draw per (word, theme) pair."""
    alpha = rng.dirichlet(hyper.lambda_alpha + stats.S) if stats.n_themes > 1 \
        else np.ones(1)
    g = rng.standard_gamma(hyper.lambda_beta + stats.K)
    beta = g / g.sum(axis=0)
    return ModelParams.from_probs(alpha, beta)


def naive_gibbs_sweep(state: ChainState, counts: CountMatrix,
                      hyper: Hyperparams, rng) -> ChainState:
    """One sweep of the sampler built from the EM formulas: sample every
    theme indicator from the current posterior probabilities, then refresh
    alpha and beta from their Dirichlet conditionals."""
    if state.params is None:
        raise InputError("naive sweep needs a state carrying model parameters")
    loglik = theme_log_likelihoods(counts, state.params)
    norms = log_sum_exp(loglik, axis=1)
    if not np.all(np.isfinite(norms)):
        raise InferenceError("a document has zero posterior weight under every theme")
    probs = np.exp(loglik - norms[:, np.newaxis])
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(counts.n_docs)
    themes = (cdf < u[:, np.newaxis]).sum(axis=1)
    np.minimum(themes, state.params.n_themes - 1, out=themes)
    state.themes = themes.astype(np.int64)
    stats = suff_stats(counts, state.themes, state.params.n_themes)
    state.params = _sample_params(stats, hyper, rng)
    state.sweep += 1
    return state


@dataclass
class ChainTrace:
    """Snapshots and retained samples of one chain run."""

    kind: str
    snapshot_sweeps: np.ndarray
    train_perplexities: np.ndarray
    cooccurrences: np.ndarray | None
    retained: np.ndarray = field(repr=False)
    final_assignment: np.ndarray
    metadata: dict = field(default_factory=dict)

    def theme_frequencies(self, n_themes: int) -> np.ndarray:
        """Per-document empirical theme frequencies over retained samples.

        Sensitive to label switching; meaningful only when the chain stays
        within one labeling mode.
        """
        if self.retained.shape[0] == 0:
            raise InputError("no retained samples")
        freq = np.zeros((self.retained.shape[1], n_themes))
        for sample in self.retained:
            freq[np.arange(sample.shape[0]), sample] += 1.0
        return freq / self.retained.shape[0]


def run_chain(counts: CountMatrix, init, hyper: Hyperparams, kind: str,
              n_sweeps: int, burn_in: int, thin: int, rng, *,
              n_themes: int | None = None,
              table: LogGammaTable | None = None,
              snapshot_every: int | None = 1,
              reference: Clustering | None = None) -> ChainTrace:
    """Run a Gibbs chain and record its trajectory.

    Assignments after `burn_in` sweeps are retained every `thin` sweeps.
    Training perplexity (and cooccurrence against `reference`, when given)
    is snapshotted every `snapshot_every` sweeps using posterior-mean
    plug-in parameters for the collapsed chain and the current sampled
    parameters for the naive chain.  The clustering output is the final
    sweep's assignment.
    """
    if burn_in < 0 or burn_in >= n_sweeps:
        raise InputError("need 0 <= burn_in < n_sweeps")
    if thin < 1:
        raise InputError("thin must be at least 1")
    if n_themes is None:
        n_themes = int(np.asarray(init).max(initial=0)) + 1
    state = initial_state(counts, init, kind, hyper, rng, n_themes=n_themes)
    if kind == "collapsed" and table is None:
        table = table_for(hyper, counts)
    retained = []
    snaps, perps, coocs = [], [], []
    for sweep in range(1, n_sweeps + 1):
        if kind == "collapsed":
            collapsed_gibbs_sweep(state, counts, hyper, table, rng)
        else:
            naive_gibbs_sweep(state, counts, hyper, rng)
        if sweep > burn_in and (sweep - burn_in - 1) % thin == 0:
            retained.append(state.themes.copy())
        if snapshot_every and sweep % snapshot_every == 0:
            params = state.params
            if params is None:
                params = posterior_mean_params(state.stats, hyper)
            snaps.append(sweep)
            perps.append(perplexity(counts, params))
            if reference is not None:
                clustering = Clustering(labels=state.themes, n_clusters=n_themes)
                coocs.append(cooccurrence_score(clustering, reference))
    return ChainTrace(
        kind=kind,
        snapshot_sweeps=np.asarray(snaps, dtype=np.int64),
        train_perplexities=np.asarray(perps),
        cooccurrences=np.asarray(coocs) if reference is not None else None,
        retained=np.asarray(retained, dtype=np.int64).reshape(len(retained), counts.n_docs),
        final_assignment=state.themes.copy(),
        metadata={"n_sweeps": n_sweeps, "burn_in": burn_in, "thin": thin, "kind": kind},
    )
