"""Compiled inner loop of the collapsed Gibbs sweep.

A sweep is inherently sequential (each document's conditional depends on the
statistics left by the previous update), so the per-document work runs as a
single jitted pass over the CSR arrays.  All randomness is consumed from a
pre-drawn vector of uniforms, one per document, keeping the generator state
in numpy where it is seedable and reproducible.

The conditional needs the statistics with the document removed.  Removal
only affects the document's own theme, so instead of physically removing and
re-adding it, the kernel scores every other theme from the live statistics
and applies the exact deprived-count correction to the current theme alone;
statistics are written only when the sampled theme actually changes.  The
table lookups are the same entries either way, so the sampled chain is
bit-identical to the remove/score/add formulation.
"""

import numba
import numpy as np

__all__ = ["collapsed_sweep"]


@numba.njit(cache=True, fastmath=False)
def collapsed_sweep(indptr, indices, data, doc_lengths, themes,
                    S, K, K_tot, table_word, diff_word, table_theme,
                    lam_alpha, uniforms):
    """One full fixed-order pass over the documents, resampling each theme
    indicator from its collapsed conditional.  Mutates `themes`, `S`, `K`,
    and `K_tot` in place."""
    n_docs = themes.shape[0]
    n_themes = S.shape[0]
    scores = np.empty(n_themes)
    for d in range(n_docs):
        lo = indptr[d]
        hi = indptr[d + 1]
        l_d = doc_lengths[d]
        t_old = themes[d]

        # log (S_t^{-d} + la) + lnG(K_t^{-d} + nW lb) - lnG(K_t^{-d} + l_d + nW lb)
        for t in range(n_themes):
            if t == t_old:
                kt = K_tot[t] - l_d
                s_t = S[t] - 1
            else:
                kt = K_tot[t]
                s_t = S[t]
            scores[t] = np.log(s_t + lam_alpha) + table_theme[kt] - table_theme[kt + l_d]
        # + sum_w [lnG(K_wt^{-d} + c + lb) - lnG(K_wt^{-d} + lb)]; diff_word
        # collapses the common c == 1 case to a single lookup.
        for j in range(lo, hi):
            w = indices[j]
            c = data[j]
            if c == 1:
                for t in range(n_themes):
                    kw = K[w, t]
                    if t == t_old:
                        kw -= 1
                    scores[t] += diff_word[kw]
            else:
                for t in range(n_themes):
                    kw = K[w, t]
                    if t == t_old:
                        kw -= c
                    scores[t] += table_word[kw + c] - table_word[kw]

        m = scores[0]
        for t in range(1, n_themes):
            if scores[t] > m:
                m = scores[t]
        total = 0.0
        for t in range(n_themes):
            scores[t] = np.exp(scores[t] - m)
            total += scores[t]
        u = uniforms[d] * total
        acc = 0.0
        t_new = n_themes - 1
        for t in range(n_themes):
            acc += scores[t]
            if u < acc:
                t_new = t
                break

        if t_new != t_old:
            S[t_old] -= 1
            S[t_new] += 1
            K_tot[t_old] -= l_d
            K_tot[t_new] += l_d
            for j in range(lo, hi):
                w = indices[j]
                c = data[j]
                K[w, t_old] -= c
                K[w, t_new] += c
            themes[d] = t_new
