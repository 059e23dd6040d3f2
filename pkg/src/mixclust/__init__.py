"""mixclust: multinomial mixture modeling for text clustering.

Supervised naive Bayes and fully Bayesian classification, unsupervised
inference by EM / hard EM / Gibbs sampling (naive and collapsed), and an
evaluation framework built on perplexity and Hungarian-matched cooccurrence
scores.
"""

from .core import (
    Hyperparams,
    LogGammaTable,
    ModelParams,
    SuffStats,
    build_log_gamma_table,
    generate_corpus,
    log_sum_exp,
    sample_dirichlet,
    suff_stats,
)
from .corpus import (
    CountMatrix,
    Document,
    DropMostFrequent,
    FoldSplit,
    KeepMostFrequent,
    Vocabulary,
    build_vocabulary,
    count_matrix,
    reduce_vocabulary,
    split_folds,
    tokenize,
)
from .em import (
    EMTrace,
    IterativeSchedule,
    dirichlet_init,
    e_step,
    hard_assign,
    label_init,
    m_step,
    run_em,
    run_iterative,
    run_kmeans,
    run_restarts,
)
from .errors import InferenceError, InputError, MixclustError, TableRangeError
from .estimators import (
    CollapsedGibbsMixture,
    MultinomialMixtureEM,
    MultinomialMixtureKMeans,
    ThemeClassifier,
)
from .evaluate import (
    Clustering,
    EvalReport,
    cooccurrence_score,
    enumerate_joint,
    hungarian,
    log_posterior,
    perplexity,
    restart_correlation_report,
)
from .gibbs import (
    ChainState,
    ChainTrace,
    collapsed_conditional,
    collapsed_gibbs_sweep,
    naive_gibbs_sweep,
    run_chain,
)
from .supervised import (
    ClassificationReport,
    LabeledCorpus,
    bayes_predictive_log_posterior,
    classify,
    compare_rules,
    map_estimates,
    naive_bayes_log_posterior,
)

__version__ = "0.1.0"
