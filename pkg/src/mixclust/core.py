"""Shared numerical machinery for the multinomial mixture model.

Everything likelihood-shaped lives in the log domain: documents of a few
hundred words underflow 64-bit floats in the linear domain.  The multinomial
coefficient l_d!/prod_w C_wd! is omitted throughout because it cancels in
every posterior and in the perplexity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .corpus import CountMatrix
from .errors import InferenceError, InputError, TableRangeError

__all__ = [
    "RNG_ALGORITHM",
    "Hyperparams",
    "ModelParams",
    "SuffStats",
    "LogGammaTable",
    "log_sum_exp",
    "suff_stats",
    "sample_dirichlet",
    "generate_corpus",
    "build_log_gamma_table",
    "table_for",
    "theme_log_likelihoods",
    "predictive_log_weights",
    "posterior_mean_params",
    "save_model",
    "load_model",
]

# All randomness flows through numpy Generator objects seeded from user
# seeds; the algorithm identifier goes into run metadata so results can be
# reproduced across builds.
RNG_ALGORITHM = "numpy.random.Generator(PCG64)"

MODEL_MAGIC = "MIXCLUST-MODEL v1"


def log_sum_exp(values, axis=None):
    """log(sum(exp(values))) via the max-shift trick.

    Entries may be -inf; a slice that is all -inf yields -inf (not nan).
    An empty input is an error.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise InputError("log_sum_exp of an empty vector")
    m = np.max(v, axis=axis, keepdims=True)
    # Freeze -inf maxima at 0 so the shift never produces inf - inf = nan.
    shift = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - shift), axis=axis, keepdims=True)) + shift
    out = np.where(np.isfinite(m), out, m)
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


@dataclass(frozen=True)
class Hyperparams:
    """Dirichlet hyperparameters: lambda_alpha on the mixture weights,
    lambda_beta on each theme's word distribution.

    Defaults lambda_alpha=1.0, lambda_beta=1.1 correspond to no smoothing of
    the weights and 0.1 pseudo-occurrences per word.  MAP/EM formulas need
    lambda >= 1 (enforced by `require_smoothed`); the fully Bayesian rules
    only need lambda > 0.
    """

    lambda_alpha: float = 1.0
    lambda_beta: float = 1.1

    def __post_init__(self):
        if not (self.lambda_alpha > 0 and self.lambda_beta > 0):
            raise InputError("Dirichlet hyperparameters must be positive")

    def require_smoothed(self):
        if self.lambda_alpha < 1 or self.lambda_beta < 1:
            raise InputError(
                "MAP/EM formulas need lambda_alpha >= 1 and lambda_beta >= 1 "
                f"(got {self.lambda_alpha}, {self.lambda_beta})"
            )
        return self


ALPHA_TOL = 1e-12
BETA_TOL = 1e-10


@dataclass
class ModelParams:
    """Mixture weights and theme-word probabilities, stored as logs.

    log_alpha has shape (n_themes,); log_beta has shape (n_words, n_themes)
    and each column is a distribution over words.
    """

    log_alpha: np.ndarray
    log_beta: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.log_alpha = np.asarray(self.log_alpha, dtype=np.float64)
        self.log_beta = np.asarray(self.log_beta, dtype=np.float64)
        if self.log_alpha.ndim != 1 or self.log_beta.ndim != 2:
            raise InputError("log_alpha must be a vector and log_beta a matrix")
        if self.log_beta.shape[1] != self.log_alpha.shape[0]:
            raise InputError("log_beta must have one column per theme")
        err_a = abs(np.exp(self.log_alpha).sum() - 1.0)
        if err_a > ALPHA_TOL:
            raise InputError(f"mixture weights do not normalize (error {err_a:g})")
        err_b = np.abs(np.exp(self.log_beta).sum(axis=0) - 1.0).max()
        if err_b > BETA_TOL:
            raise InputError(f"a theme word distribution does not normalize (error {err_b:g})")

    @property
    def n_themes(self) -> int:
        return self.log_alpha.shape[0]

    @property
    def n_words(self) -> int:
        return self.log_beta.shape[0]

    @classmethod
    def from_probs(cls, alpha, beta) -> "ModelParams":
        """Build from linear-domain weights, normalizing defensively."""
        alpha = np.asarray(alpha, dtype=np.float64)
        beta = np.asarray(beta, dtype=np.float64)
        if np.any(alpha < 0) or np.any(beta < 0):
            raise InputError("probabilities must be non-negative")
        with np.errstate(divide="ignore"):
            log_alpha = np.log(alpha / alpha.sum())
            log_beta = np.log(beta / beta.sum(axis=0))
        return cls(log_alpha=log_alpha, log_beta=log_beta)


@dataclass
class SuffStats:
    """Per-theme sufficient statistics of a labeled/assigned corpus.

    S[t] counts documents in theme t, K[w, t] occurrences of word w in
    theme t, and K_tot[t] = sum_w K[w, t].  Supports incremental updates so
    a collapsed Gibbs sweep can move one document at a time.
    """

    S: np.ndarray
    K: np.ndarray = field(repr=False)
    K_tot: np.ndarray

    def __post_init__(self):
        self.S = np.ascontiguousarray(self.S, dtype=np.int64)
        self.K = np.ascontiguousarray(self.K, dtype=np.int64)
        self.K_tot = np.ascontiguousarray(self.K_tot, dtype=np.int64)
        if self.K.ndim != 2 or self.S.ndim != 1 or self.K_tot.ndim != 1:
            raise InputError("bad sufficient statistics shapes")
        if self.K.shape[1] != self.S.shape[0] or self.K_tot.shape[0] != self.S.shape[0]:
            raise InputError("sufficient statistics theme dimensions disagree")
        if self.S.min(initial=0) < 0 or (self.K.size and self.K.min() < 0):
            raise InputError("sufficient statistics must be non-negative")
        if not np.array_equal(self.K.sum(axis=0), self.K_tot):
            raise InputError("K_tot is not the column sum of K")

    @property
    def n_themes(self) -> int:
        return self.S.shape[0]

    @property
    def n_words(self) -> int:
        return self.K.shape[0]

    def copy(self) -> "SuffStats":
        return SuffStats(S=self.S.copy(), K=self.K.copy(), K_tot=self.K_tot.copy())

    def remove_doc(self, counts: CountMatrix, d: int, t: int) -> "SuffStats":
        """Subtract document `d` from theme `t`, in place."""
        ids, c = counts.doc(d)
        if self.S[t] < 1 or np.any(self.K[ids, t] < c):
            raise InferenceError(
                f"removing doc {d} from theme {t} would drive a count negative"
            )
        self.S[t] -= 1
        self.K[ids, t] -= c
        self.K_tot[t] -= int(c.sum())
        return self

    def add_doc(self, counts: CountMatrix, d: int, t: int) -> "SuffStats":
        """Add document `d` to theme `t`, in place.  Exact inverse of remove_doc."""
        if not 0 <= t < self.n_themes:
            raise InputError(f"theme id {t} out of range")
        ids, c = counts.doc(d)
        self.S[t] += 1
        self.K[ids, t] += c
        self.K_tot[t] += int(c.sum())
        return self


def suff_stats(counts: CountMatrix, themes, n_themes: int) -> SuffStats:
    """Compute sufficient statistics of `counts` under the hard assignment
    `themes` (one theme id per document)."""
    themes = np.asarray(themes, dtype=np.int64)
    if themes.shape != (counts.n_docs,):
        raise InputError("assignment length must equal the document count")
    if themes.size and (themes.min() < 0 or themes.max() >= n_themes):
        raise InputError(f"theme id out of range [0, {n_themes})")
    S = np.bincount(themes, minlength=n_themes).astype(np.int64)
    K = np.zeros((counts.n_words, n_themes), dtype=np.int64)
    m = counts.matrix.tocoo()
    np.add.at(K, (m.col, themes[m.row]), m.data)
    K_tot = np.bincount(themes, weights=counts.doc_lengths, minlength=n_themes)
    return SuffStats(S=S, K=K, K_tot=K_tot.astype(np.int64))


def sample_dirichlet(concentration, rng) -> np.ndarray:
    """One draw from Dirichlet(concentration), as normalized Gamma variates."""
    concentration = np.asarray(concentration, dtype=np.float64)
    if concentration.ndim != 1 or concentration.size == 0:
        raise InputError("concentration must be a nonempty vector")
    if np.any(concentration <= 0):
        raise InputError("Dirichlet concentrations must be positive")
    if concentration.size == 1:
        return np.ones(1)
    return rng.dirichlet(concentration)


def generate_corpus(model, n_docs: int, doc_lengths, rng, *,
                    n_themes: int | None = None, n_words: int | None = None):
    """Sample a corpus from the generative mechanism.

    `model` is either ModelParams (fixed alpha/beta) or Hyperparams, in which
    case alpha and each theme's beta are first drawn from their Dirichlet
    priors (requires `n_themes` and `n_words`).  Each document then draws a
    theme from alpha and `l_d` words from that theme's word distribution.

    Returns (CountMatrix, themes).
    """
    if isinstance(model, Hyperparams):
        if n_themes is None or n_words is None:
            raise InputError("n_themes and n_words are required when sampling from priors")
        alpha = sample_dirichlet(np.full(n_themes, model.lambda_alpha), rng)
        beta = np.column_stack(
            [sample_dirichlet(np.full(n_words, model.lambda_beta), rng) for _ in range(n_themes)]
        )
        params = ModelParams.from_probs(alpha, beta)
    elif isinstance(model, ModelParams):
        params = model
    else:
        raise InputError("model must be ModelParams or Hyperparams")

    lengths = np.broadcast_to(np.asarray(doc_lengths, dtype=np.int64), (n_docs,)).copy()
    if lengths.size and lengths.min() <= 0:
        raise InputError("document lengths must be positive")

    alpha = np.exp(params.log_alpha)
    theme_cdf = np.cumsum(alpha)
    theme_cdf[-1] = 1.0
    themes = np.searchsorted(theme_cdf, rng.random(n_docs), side="right")
    themes = np.minimum(themes, params.n_themes - 1).astype(np.int64)

    word_cdfs = np.cumsum(np.exp(params.log_beta), axis=0)
    word_cdfs[-1, :] = 1.0

    rows, cols, vals = [], [], []
    for d in range(n_docs):
        draws = np.searchsorted(word_cdfs[:, themes[d]], rng.random(lengths[d]), side="right")
        np.minimum(draws, params.n_words - 1, out=draws)
        ids, c = np.unique(draws, return_counts=True)
        rows.append(np.full(ids.size, d, dtype=np.int64))
        cols.append(ids.astype(np.int64))
        vals.append(c.astype(np.int64))
    m = sp.csr_matrix(
        (np.concatenate(vals) if vals else [],
         (np.concatenate(rows) if rows else [], np.concatenate(cols) if cols else [])),
        shape=(n_docs, params.n_words),
        dtype=np.int64,
    )
    return CountMatrix(matrix=m), themes


@dataclass
class LogGammaTable:
    """Tabulated lnGamma(n + lambda_beta) and lnGamma(n + n_words*lambda_beta).

    The Dirichlet-multinomial quantities only ever evaluate lnGamma at these
    two families of points, so a pair of lookup arrays replaces all special
    function calls in the inner loops.  `diff_word[n]` caches
    table_word[n+1] - table_word[n] = log(n + lambda_beta) for the common
    count-of-one case.
    """

    offset_word: float
    offset_theme: float
    table_word: np.ndarray = field(repr=False)
    table_theme: np.ndarray = field(repr=False)
    diff_word: np.ndarray = field(repr=False)

    @property
    def n_max(self) -> int:
        return self.table_word.shape[0] - 1

    def _check(self, n):
        n = np.asarray(n)
        if n.size and (int(n.min()) < 0 or int(n.max()) > self.n_max):
            raise TableRangeError(
                f"log-gamma table lookup outside [0, {self.n_max}]: "
                f"range [{n.min()}, {n.max()}]"
            )
        return n

    def log_gamma_word(self, n):
        """lnGamma(n + lambda_beta) for integer n (scalar or array)."""
        return self.table_word[self._check(n)]

    def log_gamma_theme(self, n):
        """lnGamma(n + n_words * lambda_beta) for integer n (scalar or array)."""
        return self.table_theme[self._check(n)]


def build_log_gamma_table(hyper: Hyperparams, n_words: int, n_max: int) -> LogGammaTable:
    """Tabulate lnGamma at n + lambda_beta and n + n_words*lambda_beta for
    n = 0..n_max.  `n_max` must cover every count total that will be queried."""
    if n_max < 1:
        raise InputError("n_max must be at least 1")
    n = np.arange(n_max + 1, dtype=np.float64)
    offset_word = hyper.lambda_beta
    offset_theme = n_words * hyper.lambda_beta
    table_word = gammaln(n + offset_word)
    table_theme = gammaln(n + offset_theme)
    # Exact consistency with two-lookup differences, by construction.
    diff_word = table_word[1:] - table_word[:-1]
    return LogGammaTable(
        offset_word=offset_word,
        offset_theme=offset_theme,
        table_word=table_word,
        table_theme=table_theme,
        diff_word=diff_word,
    )


def table_for(hyper: Hyperparams, train: CountMatrix,
              extra_doc_length: int = 0) -> LogGammaTable:
    """Build a table large enough to classify/sample against `train` stats,
    optionally leaving headroom for one extra document of the given length."""
    n_max = train.total_length + max(int(extra_doc_length), 1)
    return build_log_gamma_table(hyper, train.n_words, n_max)


def theme_log_likelihoods(counts: CountMatrix, params: ModelParams) -> np.ndarray:
    """log alpha_t + sum_w C_wd log beta_wt for every document and theme.

    The sparse product only touches stored entries, so -inf values of
    log beta for words a document does not contain cannot poison the sum.
    """
    if counts.n_words != params.n_words:
        raise InputError("counts and parameters disagree on vocabulary size")
    return counts.matrix @ params.log_beta + params.log_alpha[np.newaxis, :]


def predictive_log_weights(stats: SuffStats, word_ids, word_counts,
                           doc_length: int, hyper: Hyperparams,
                           table: LogGammaTable) -> np.ndarray:
    """Unnormalized log Dirichlet-multinomial predictive scores over themes.

    For each theme t:

        log(S_t + lambda_alpha)
        + sum_w [lnG(K_wt + c_w + lb) - lnG(K_wt + lb)]
        + lnG(K_t + nW*lb) - lnG(K_t + l_d + nW*lb)

    computed purely from table lookups.  Both the supervised fully Bayesian
    classification rule and the collapsed Gibbs conditional are this
    quantity (the latter with the document removed from the stats first).
    """
    word_ids = np.asarray(word_ids, dtype=np.int64)
    word_counts = np.asarray(word_counts, dtype=np.int64)
    if word_ids.size and int(word_ids.max()) >= stats.n_words:
        raise InputError("document contains a word id outside the vocabulary")
    scores = np.log(stats.S + hyper.lambda_alpha)
    scores = scores + table.log_gamma_theme(stats.K_tot) - table.log_gamma_theme(
        stats.K_tot + int(doc_length)
    )
    if word_ids.size:
        k = stats.K[word_ids, :]
        scores = scores + (
            table.log_gamma_word(k + word_counts[:, np.newaxis]) - table.log_gamma_word(k)
        ).sum(axis=0)
    return scores


def posterior_mean_params(stats: SuffStats, hyper: Hyperparams) -> ModelParams:
    """Posterior-mean plug-in parameters given a hard assignment:
    alpha_t = (S_t+la)/(n_D+nT*la), beta_wt = (K_wt+lb)/(K_t+nW*lb)."""
    alpha = stats.S + hyper.lambda_alpha
    beta = stats.K + hyper.lambda_beta
    return ModelParams.from_probs(alpha, beta)


# ---------------------------------------------------------------------------
# model checkpoint persistence


def save_model(params: ModelParams, hyper: Hyperparams, path) -> None:
    """Write the `MIXCLUST-MODEL v1` text checkpoint (full-precision decimals)."""
    lines = [
        MODEL_MAGIC,
        f"{params.n_themes} {params.n_words} {hyper.lambda_alpha!r} {hyper.lambda_beta!r}",
        " ".join(repr(float(a)) for a in np.exp(params.log_alpha)),
    ]
    for t in range(params.n_themes):
        lines.append(" ".join(repr(float(v)) for v in params.log_beta[:, t]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> tuple[ModelParams, Hyperparams]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MODEL_MAGIC:
        raise InputError(f"{path}: not a {MODEL_MAGIC} checkpoint")
    try:
        n_t_str, n_w_str, la_str, lb_str = lines[1].split()
        n_t, n_w = int(n_t_str), int(n_w_str)
        hyper = Hyperparams(lambda_alpha=float(la_str), lambda_beta=float(lb_str))
        alpha = np.array([float(x) for x in lines[2].split()])
        log_beta = np.empty((n_w, n_t))
        for t in range(n_t):
            row = np.array([float(x) for x in lines[3 + t].split()])
            if row.shape[0] != n_w:
                raise ValueError(f"theme {t} has {row.shape[0]} values, expected {n_w}")
            log_beta[:, t] = row
    except (IndexError, ValueError) as exc:
        raise InputError(f"{path}: malformed model checkpoint: {exc}")
    with np.errstate(divide="ignore"):
        log_alpha = np.log(alpha)
    return ModelParams(log_alpha=log_alpha, log_beta=log_beta), hyper
