"""Command-line interface: corpus ingestion, inference runs, evaluation,
and the named experiments that emit plot-ready CSV data.

Every run is a pure function of (config, seed, corpus bytes): rerunning with
the same inputs reproduces all numeric outputs byte for byte.  Exit codes:
0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    RNG_ALGORITHM,
    Hyperparams,
    generate_corpus,
    load_model,
    posterior_mean_params,
    save_model,
    suff_stats,
    table_for,
)
from .corpus import (
    CountMatrix,
    DropMostFrequent,
    KeepMostFrequent,
    count_matrix,
    build_vocabulary,
    load_counts,
    load_vocabulary,
    read_corpus_dir,
    read_corpus_tsv,
    reduce_vocabulary,
    restrict_counts,
    save_counts,
    save_vocabulary,
    split_folds,
)
from .em import (
    EMTrace,
    IterativeSchedule,
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
from .errors import InputError, MixclustError
from .evaluate import (
    Clustering,
    EvalReport,
    contingency,
    cooccurrence_score,
    hungarian,
    perplexity,
    restart_correlation_report,
)
from .gibbs import run_chain
from .supervised import LabeledCorpus, classify
from .synthetic import block_model, rare_tail_model

EXPERIMENTS = (
    "smoothing-sweep",
    "vocab-sweep",
    "iterative-vs-flat",
    "restart-correlation",
    "rule-comparison",
    "em-vs-kmeans",
    "gibbs-comparison",
)


def _fmt(x) -> str:
    """Full-precision, round-trippable decimal text for floats."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_group_summary(path, rows, n_key_cols, key_header, value_name):
    """Box-plot-ready aggregation: mean and quartiles of the last column of
    `rows`, grouped by the first `n_key_cols` columns."""
    groups = {}
    for row in rows:
        groups.setdefault(tuple(row[:n_key_cols]), []).append(float(row[-1]))
    out_rows = []
    for key in sorted(groups, key=str):
        values = np.asarray(groups[key])
        q1, med, q3 = np.percentile(values, [25, 50, 75])
        out_rows.append(
            (*key, values.mean(), q1, med, q3, values.min(), values.max())
        )
    _write_csv(
        path,
        list(key_header) + [f"{value_name}_{s}"
                            for s in ("mean", "q1", "median", "q3", "min", "max")],
        out_rows,
    )


# ---------------------------------------------------------------------------
# corpus loading helpers


def _read_corpus(path, fmt):
    if fmt == "tsv":
        return read_corpus_tsv(path)
    if fmt == "dir":
        return read_corpus_dir(path)
    raise InputError(f"unknown corpus format {fmt!r} (expected 'tsv' or 'dir')")


def _load_data_dir(path):
    """Read an ingest output directory: counts, vocabulary, doc table."""
    path = Path(path)
    counts = load_counts(path / "counts.txt")
    vocab = load_vocabulary(path / "vocab.txt") if (path / "vocab.txt").exists() else None
    doc_ids, labels = None, None
    docs_file = path / "docs.tsv"
    if docs_file.exists():
        doc_ids, labels = [], []
        for line in docs_file.read_text(encoding="utf-8").splitlines():
            doc_id, _, label = line.partition("\t")
            doc_ids.append(doc_id)
            labels.append(label or None)
    return counts, vocab, doc_ids, labels


def _labels_to_ids(labels):
    """Dense theme ids for string labels, ordered by sorted label name."""
    if labels is None or any(l is None for l in labels):
        return None, None
    names = sorted(set(labels))
    index = {name: i for i, name in enumerate(names)}
    return np.array([index[l] for l in labels], dtype=np.int64), names


# ---------------------------------------------------------------------------
# ingest


def cmd_ingest(args) -> int:
    docs = _read_corpus(args.input, args.format)
    if not docs:
        raise InputError(f"no documents found in {args.input}")
    vocab = build_vocabulary(docs)
    counts = count_matrix(docs, vocab)
    if args.keep_most_frequent is not None:
        vocab2 = reduce_vocabulary(vocab, counts, KeepMostFrequent(args.keep_most_frequent))
        counts = restrict_counts(counts, vocab, vocab2)
        vocab = vocab2
    elif args.drop_most_frequent is not None:
        vocab2 = reduce_vocabulary(vocab, counts, DropMostFrequent(args.drop_most_frequent))
        counts = restrict_counts(counts, vocab, vocab2)
        vocab = vocab2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_counts(counts, out / "counts.txt")
    save_vocabulary(vocab, out / "vocab.txt")
    doc_lines = [f"{d.id}\t{d.label or ''}" for d in docs]
    (out / "docs.tsv").write_text("\n".join(doc_lines) + "\n", encoding="utf-8")
    if args.folds:
        folds = split_folds([d.id for d in docs], args.folds, args.seed)
        fold_lines = [f"{d.id}\t{folds.assignments[d.id]}" for d in docs]
        (out / "folds.tsv").write_text("\n".join(fold_lines) + "\n", encoding="utf-8")
    print(
        f"ingested n_docs={counts.n_docs} n_words={counts.n_words} "
        f"total_length={counts.total_length} dropped_tokens={counts.dropped_tokens}"
    )
    return 0


# ---------------------------------------------------------------------------
# train


def _parse_schedule(text, n_words) -> IterativeSchedule:
    """Schedule syntax: 'SIZE:ITERS,...,full:ITERS'."""
    if text is None or text == "auto":
        return default_schedule(n_words)
    stages = []
    for part in text.split(","):
        size_s, _, iters_s = part.partition(":")
        if not iters_s:
            raise InputError(f"bad schedule stage {part!r} (expected SIZE:ITERS)")
        size = None if size_s.lower() == "full" else int(size_s)
        stages.append((size, int(iters_s)))
    return IterativeSchedule(stages=stages)


def _apply_config_file(args, parser):
    """key=value lines override flag values (lines starting with # ignored)."""
    if not getattr(args, "config", None):
        return args
    overrides = {}
    for i, line in enumerate(Path(args.config).read_text(encoding="utf-8").splitlines()):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{args.config}: line {i + 1} is not key=value")
        key, _, value = line.partition("=")
        overrides[key.strip().replace("-", "_")] = value.strip()
    for key, value in overrides.items():
        if not hasattr(args, key):
            raise InputError(f"{args.config}: unknown config key {key!r}")
        current = getattr(args, key)
        if isinstance(current, bool):
            setattr(args, key, value.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, key, int(value))
        elif isinstance(current, float):
            setattr(args, key, float(value))
        else:
            setattr(args, key, value)
    return args


def _validate_train_config(args):
    problems = []
    if args.method not in (
        "em", "kmeans", "iterative", "restarts", "gibbs-naive", "gibbs-collapsed"
    ):
        problems.append(f"unknown method {args.method!r}")
    if args.themes < 1:
        problems.append("--themes must be at least 1")
    if args.iterations < 0:
        problems.append("--iterations must be non-negative")
    if args.method == "restarts" and args.n_runs < 1:
        problems.append("--n-runs must be at least 1 for restarts")
    if args.method.startswith("gibbs"):
        if args.sweeps < 1:
            problems.append("--sweeps must be at least 1 for gibbs methods")
        burn = args.burn_in if args.burn_in is not None else args.sweeps // 10
        if burn >= args.sweeps:
            problems.append("--burn-in must be smaller than --sweeps")
    if args.lambda_alpha <= 0 or args.lambda_beta <= 0:
        problems.append("lambda hyperparameters must be positive")
    if problems:
        raise InputError("invalid train configuration: " + "; ".join(problems))


def _echo_config(args, keys) -> str:
    pairs = sorted((k, getattr(args, k)) for k in keys)
    return "\n".join(f"{k}={_fmt(v) if v is not None else ''}" for k, v in pairs) + "\n"


def _dump_em_trace(trace: EMTrace, out: Path):
    _write_csv(
        out / "trace.csv",
        ["iter", "log_posterior", "train_perplexity"],
        [
            (i + 1, lp, pp)
            for i, (lp, pp) in enumerate(
                zip(trace.log_posteriors, trace.train_perplexities)
            )
        ],
    )
    resp_lines = [
        "\t".join(_fmt(v) for v in row) for row in trace.responsibilities
    ]
    (out / "responsibilities.tsv").write_text(
        "\n".join(resp_lines) + "\n", encoding="utf-8"
    )
    labels = np.argmax(trace.responsibilities, axis=1)
    (out / "assignments.txt").write_text(
        "\n".join(str(int(t)) for t in labels) + "\n", encoding="utf-8"
    )


def cmd_train(args, parser=None) -> int:
    args = _apply_config_file(args, parser)
    _validate_train_config(args)
    if args.data:
        counts, vocab, _, labels = _load_data_dir(args.data)
    elif args.counts:
        counts = load_counts(args.counts)
        vocab = load_vocabulary(args.vocab) if args.vocab else None
        labels = None
    else:
        raise InputError("train needs --data or --counts")

    hyper = Hyperparams(lambda_alpha=args.lambda_alpha, lambda_beta=args.lambda_beta)
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()

    config_keys = [
        "method", "themes", "iterations", "sweeps", "burn_in", "thin", "n_runs",
        "schedule", "seed", "lambda_alpha", "lambda_beta",
    ]
    (out / "config.txt").write_text(_echo_config(args, config_keys), encoding="utf-8")
    save_counts(counts, out / "counts.txt")
    if vocab is not None:
        save_vocabulary(vocab, out / "vocab.txt")

    params = None
    if args.method in ("em", "iterative", "restarts"):
        # em/iterative draw their init through a spawned child stream so a
        # single-run `restarts` invocation reproduces `em` byte for byte.
        if args.method == "em":
            init = dirichlet_init(counts.n_docs, args.themes, rng.spawn(1)[0])
            trace = run_em(counts, init, hyper, args.iterations)
        elif args.method == "iterative":
            schedule = _parse_schedule(args.schedule, counts.n_words)
            init = dirichlet_init(counts.n_docs, args.themes, rng.spawn(1)[0])
            trace = run_iterative(counts, schedule, init, hyper, vocab=vocab)
        else:
            schedule = (
                _parse_schedule(args.schedule, counts.n_words) if args.schedule else None
            )
            trace, _ = run_restarts(
                counts, args.themes, hyper, args.n_runs, rng,
                n_iters=args.iterations, schedule=schedule, vocab=vocab,
            )
        _dump_em_trace(trace, out)
        params = trace.params
    elif args.method == "kmeans":
        init = rng.integers(0, args.themes, size=counts.n_docs)
        trace = run_kmeans(counts, init, hyper, args.iterations, n_themes=args.themes)
        _dump_em_trace(trace, out)
        params = trace.params
    else:
        kind = "collapsed" if args.method == "gibbs-collapsed" else "naive"
        burn = args.burn_in if args.burn_in is not None else args.sweeps // 10
        init = rng.integers(0, args.themes, size=counts.n_docs)
        chain = run_chain(
            counts, init, hyper, kind, args.sweeps, burn, args.thin, rng,
            n_themes=args.themes, snapshot_every=args.snapshot_every,
        )
        _write_csv(
            out / "chain.csv",
            ["sweep", "train_perplexity"],
            list(zip(chain.snapshot_sweeps.tolist(), chain.train_perplexities.tolist())),
        )
        sample_lines = [" ".join(str(int(t)) for t in row) for row in chain.retained]
        (out / "samples.txt").write_text("\n".join(sample_lines) + "\n", encoding="utf-8")
        (out / "assignments.txt").write_text(
            "\n".join(str(int(t)) for t in chain.final_assignment) + "\n",
            encoding="utf-8",
        )
        stats = suff_stats(counts, chain.final_assignment, args.themes)
        params = posterior_mean_params(stats, hyper)

    if params is not None:
        save_model(params, hyper, out / "model.txt")
    wall = time.perf_counter() - started
    (out / "meta.txt").write_text(
        f"rng_algorithm={RNG_ALGORITHM}\n"
        f"numpy_version={np.__version__}\n"
        f"mixclust_version={__version__}\n"
        f"wall_time_s={wall:.3f}\n",
        encoding="utf-8",
    )
    print(f"trained method={args.method} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# classify


def cmd_classify(args) -> int:
    hyper = Hyperparams(lambda_alpha=args.lambda_alpha, lambda_beta=args.lambda_beta)
    if args.model:
        if args.rule != "naive":
            raise InputError(
                "a model checkpoint stores only parameter estimates; the "
                "Bayesian rule needs training counts (use --train)"
            )
        if not args.vocab:
            raise InputError("--model needs --vocab to map test words to ids")
        params, _ = load_model(args.model)
        vocab = load_vocabulary(args.vocab)
        theme_names = [str(t) for t in range(params.n_themes)]
        test_docs = _read_corpus(args.test, args.format)
        test_counts = count_matrix(test_docs, vocab)
        loglik = e_step(test_counts, params)
        with np.errstate(divide="ignore"):
            log_post = np.log(loglik)
        predicted = np.argmax(log_post, axis=1)
    elif args.train:
        train_docs = _read_corpus(args.train, args.format)
        label_ids, theme_names = _labels_to_ids([d.label for d in train_docs])
        if label_ids is None:
            raise InputError("every training document needs a label")
        vocab = build_vocabulary(train_docs)
        train_counts = count_matrix(train_docs, vocab)
        stats = suff_stats(train_counts, label_ids, len(theme_names))
        test_docs = _read_corpus(args.test, args.format)
        test_counts = count_matrix(test_docs, vocab)
        table = None
        if args.rule == "bayes":
            table = table_for(hyper, train_counts,
                              extra_doc_length=int(test_counts.doc_lengths.max(initial=1)))
        report = classify(test_counts, stats, hyper, rule=args.rule, table=table)
        predicted = report.predicted
        log_post = report.log_posteriors
    else:
        raise InputError("classify needs --model or --train")

    lines = []
    for i, doc in enumerate(test_docs):
        posts = "\t".join(_fmt(v) for v in log_post[i])
        gold = doc.label or "-"
        lines.append(f"{doc.id}\t{theme_names[predicted[i]]}\t{gold}\t{posts}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    golds = [d.label for d in test_docs]
    if all(g is not None for g in golds):
        correct = sum(
            theme_names[predicted[i]] == golds[i] for i in range(len(test_docs))
        )
        print(
            f"# accuracy {correct}/{len(test_docs)} "
            f"error_rate={_fmt(1 - correct / len(test_docs))}",
            file=sys.stderr,
        )
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    artifact = Path(args.artifact)
    if not artifact.is_dir():
        raise InputError(f"artifact directory {artifact} does not exist")
    counts = load_counts(artifact / "counts.txt")
    params, hyper = load_model(artifact / "model.txt")
    assignments = np.array(
        [int(t) for t in (artifact / "assignments.txt").read_text().split()],
        dtype=np.int64,
    )
    found = Clustering(labels=assignments, n_clusters=params.n_themes)

    report = EvalReport(metadata={"artifact": str(artifact)})
    report.train_perplexity = perplexity(counts, params)

    if args.reference:
        ref_labels, _ = _labels_to_ids(_read_label_file(args.reference))
        if ref_labels is None:
            raise InputError(f"{args.reference} has unlabeled documents")
        reference = Clustering(labels=ref_labels, n_clusters=params.n_themes)
        report.cooccurrence_train = cooccurrence_score(found, reference)
        report.mapping = hungarian(
            contingency(found, reference).astype(float)
        ).tolist()

    if args.test:
        vocab_file = artifact / "vocab.txt"
        if args.test_counts:
            test_counts = load_counts(args.test)
        else:
            if not vocab_file.exists():
                raise InputError(
                    "artifact has no vocab.txt; ingest the test corpus separately "
                    "and pass --test-counts"
                )
            vocab = load_vocabulary(vocab_file)
            test_docs = _read_corpus(args.test, args.format)
            test_counts = count_matrix(test_docs, vocab)
        report.test_perplexity = perplexity(test_counts, params)
        test_clustering = Clustering(
            labels=hard_assign(test_counts, params), n_clusters=params.n_themes
        )
        if args.test_reference:
            ref_labels, _ = _labels_to_ids(_read_label_file(args.test_reference))
            if ref_labels is None:
                raise InputError(f"{args.test_reference} has unlabeled documents")
            reference = Clustering(labels=ref_labels, n_clusters=params.n_themes)
            report.cooccurrence_test = cooccurrence_score(test_clustering, reference)
            report.mapping = hungarian(
                contingency(test_clustering, reference).astype(float)
            ).tolist()

    text = report.to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _read_label_file(path):
    """Labels from a docs.tsv (docid<TAB>label) or one-label-per-line file."""
    labels = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "\t" in line:
            _, _, label = line.partition("\t")
        else:
            label = line.strip()
        labels.append(label or None)
    return labels


# ---------------------------------------------------------------------------
# experiments


def _experiment_corpus(args, rng):
    """Synthetic train/test pair (or user-supplied data) with true labels."""
    if args.data:
        counts, vocab, _, labels = _load_data_dir(args.data)
        label_ids, _ = _labels_to_ids(labels)
        if label_ids is None:
            raise InputError("experiments need labeled data as the reference clustering")
        # split: even docs train, odd docs test
        idx = np.arange(counts.n_docs)
        train_idx, test_idx = idx[idx % 2 == 0], idx[idx % 2 == 1]
        train = CountMatrix(matrix=counts.matrix[train_idx])
        test = CountMatrix(matrix=counts.matrix[test_idx])
        return train, label_ids[train_idx], test, label_ids[test_idx], vocab
    if args.corpus_kind == "block":
        params = block_model(args.themes, args.words, within=0.9)
    else:
        params = rare_tail_model(
            args.themes, args.head_words, args.words - args.head_words, rng
        )
    train, train_themes = generate_corpus(params, args.docs, args.doc_length, rng)
    test, test_themes = generate_corpus(params, args.test_docs, args.doc_length, rng)
    return train, train_themes, test, test_themes, None


def _test_cooccurrence(test_counts, test_themes, params, n_themes) -> float:
    found = Clustering(labels=hard_assign(test_counts, params), n_clusters=n_themes)
    return cooccurrence_score(found, Clustering(labels=test_themes, n_clusters=n_themes))


def _grid(text, default):
    if not text:
        return list(default)
    return [float(x) for x in text.split(",")]


def cmd_experiment(args) -> int:
    if args.name not in EXPERIMENTS:
        raise InputError(
            f"unknown experiment {args.name!r}; valid names: {', '.join(EXPERIMENTS)}"
        )
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train, train_themes, test, test_themes, vocab = _experiment_corpus(args, rng)
    n_t = args.themes
    getattr(sys.modules[__name__], "_exp_" + args.name.replace("-", "_"))(
        args, rng, out, train, train_themes, test, test_themes, vocab, n_t
    )
    print(f"experiment {args.name} -> {out}")
    return 0


def _exp_smoothing_sweep(args, rng, out, train, train_themes, test, test_themes,
                         vocab, n_t):
    grid = _grid(args.lambdas, (0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 0.75, 1.0, 2.0, 5.0))
    rows = []
    for lam in grid:
        hyper = Hyperparams(lambda_alpha=1.0, lambda_beta=1.0 + lam)
        for run in range(args.runs):
            tr = run_em(train, dirichlet_init(train.n_docs, n_t, rng), hyper,
                        args.iterations)
            rows.append((lam, "dirichlet", run, tr.final_train_perplexity,
                         _test_cooccurrence(test, test_themes, tr.params, n_t)))
        tr = run_em(train, label_init(train_themes, n_t), hyper, args.iterations)
        rows.append((lam, "labels", 0, tr.final_train_perplexity,
                     _test_cooccurrence(test, test_themes, tr.params, n_t)))
    _write_csv(out / "smoothing_sweep.csv",
               ["lambda_beta_minus_1", "init", "run", "train_perplexity",
                "test_cooccurrence"], rows)
    _write_group_summary(out / "smoothing_sweep_summary.csv",
                         [(r[0], r[1], r[4]) for r in rows], 2,
                         ["lambda_beta_minus_1", "init"], "test_cooccurrence")


def _exp_vocab_sweep(args, rng, out, train, train_themes, test, test_themes,
                     vocab, n_t):
    sizes = [int(s) for s in _grid(args.sizes, ())] or None
    n_w = train.n_words
    if sizes is None:
        sizes = sorted({max(1, n_w // f) for f in (40, 16, 8, 4, 2)} | {n_w})
    totals = np.asarray(train.matrix.sum(axis=0)).ravel()
    order = np.lexsort((np.arange(n_w), -totals))
    hyper = Hyperparams(lambda_alpha=args.lambda_alpha, lambda_beta=args.lambda_beta)
    rows = []
    for strategy in ("keep-frequent", "drop-frequent"):
        for size in sizes:
            if size > n_w or (strategy == "drop-frequent" and size == n_w):
                continue
            cols = np.sort(order[:size] if strategy == "keep-frequent" else order[n_w - size:])
            sub_train = CountMatrix(matrix=train.matrix[:, cols])
            sub_test = CountMatrix(matrix=test.matrix[:, cols])
            if sub_train.total_length == 0:
                continue
            for run in range(args.runs):
                tr = run_em(sub_train, dirichlet_init(train.n_docs, n_t, rng), hyper,
                            args.iterations)
                rows.append((strategy, size, run,
                             _test_cooccurrence(sub_test, test_themes, tr.params, n_t)))
    _write_csv(out / "vocab_sweep.csv",
               ["strategy", "size", "run", "test_cooccurrence"], rows)
    _write_group_summary(out / "vocab_sweep_summary.csv",
                         [(r[0], r[1], r[3]) for r in rows], 2,
                         ["strategy", "size"], "test_cooccurrence")


def _exp_iterative_vs_flat(args, rng, out, train, train_themes, test, test_themes,
                           vocab, n_t):
    hyper = Hyperparams(lambda_alpha=args.lambda_alpha, lambda_beta=args.lambda_beta)
    schedule = _parse_schedule(args.schedule, train.n_words)
    total_iters = sum(it for _, it in schedule.stages)
    rows = []
    for seed in range(args.runs):
        child = np.random.default_rng(np.random.SeedSequence([args.seed, seed]))
        init = dirichlet_init(train.n_docs, n_t, child)
        flat = run_em(train, init, hyper, total_iters)
        rows.append((seed, "flat", flat.final_train_perplexity,
                     _test_cooccurrence(test, test_themes, flat.params, n_t)))
        iterative = run_iterative(train, schedule, init, hyper)
        rows.append((seed, "iterative", iterative.final_train_perplexity,
                     _test_cooccurrence(test, test_themes, iterative.params, n_t)))
    _write_csv(out / "iterative_vs_flat.csv",
               ["seed", "method", "train_perplexity", "test_cooccurrence"], rows)
    _write_group_summary(out / "iterative_vs_flat_summary.csv",
                         [(r[1], r[3]) for r in rows], 1,
                         ["method"], "test_cooccurrence")


def _exp_restart_correlation(args, rng, out, train, train_themes, test, test_themes,
                             vocab, n_t):
    hyper = Hyperparams(lambda_alpha=args.lambda_alpha, lambda_beta=args.lambda_beta)
    _, traces = run_restarts(train, n_t, hyper, args.runs, rng, n_iters=args.iterations)
    reference = Clustering(labels=test_themes, n_clusters=n_t)
    report = restart_correlation_report(traces, reference, counts=test)
    rows = [
        (i, p, c) for i, (p, c) in enumerate(report.rows())
    ]
    _write_csv(out / "restart_correlation.csv",
               ["run", "train_perplexity", "test_cooccurrence"], rows)
    (out / "spearman.txt").write_text(
        f"spearman={_fmt(report.spearman)}\ndegenerate={report.degenerate}\n",
        encoding="utf-8",
    )


def _exp_rule_comparison(args, rng, out, train, train_themes, test, test_themes,
                         vocab, n_t):
    from .supervised import compare_rules

    names = [str(t) for t in range(n_t)]
    train_lc = LabeledCorpus(counts=train, labels=train_themes, theme_names=names)
    test_lc = LabeledCorpus(counts=test, labels=test_themes, theme_names=names)
    grid = _grid(args.lambdas, (0.01, 0.03, 0.1, 0.3, 1.0, 3.0))
    points = compare_rules(train_lc, test_lc, grid)
    _write_csv(out / "rule_comparison.csv",
               ["lambda", "naive_error", "bayes_error"],
               [(p.lam, p.naive_error, p.bayes_error) for p in points])


def _exp_em_vs_kmeans(args, rng, out, train, train_themes, test, test_themes,
                      vocab, n_t):
    hyper = Hyperparams(lambda_alpha=args.lambda_alpha, lambda_beta=args.lambda_beta)
    init = rng.integers(0, n_t, size=train.n_docs)
    em_trace = run_em(train, label_init(init, n_t), hyper, args.iterations,
                      record_assignments=True)
    km_trace = run_kmeans(train, init, hyper, args.iterations, n_themes=n_t)
    truth = Clustering(labels=train_themes, n_clusters=n_t)
    rows = []
    for i in range(args.iterations):
        soft = em_trace.hard_assignments[i]
        hard = km_trace.hard_assignments[min(i, len(km_trace.hard_assignments) - 1)]
        a = Clustering(labels=soft, n_clusters=n_t)
        b = Clustering(labels=hard, n_clusters=n_t)
        rows.append((i + 1, cooccurrence_score(a, b), cooccurrence_score(a, truth),
                     cooccurrence_score(b, truth)))
    _write_csv(out / "em_vs_kmeans.csv",
               ["iteration", "cooccurrence_soft_hard", "soft_vs_truth",
                "hard_vs_truth"], rows)


def _exp_gibbs_comparison(args, rng, out, train, train_themes, test, test_themes,
                          vocab, n_t):
    hyper = Hyperparams(lambda_alpha=args.lambda_alpha, lambda_beta=args.lambda_beta)
    reference = Clustering(labels=train_themes, n_clusters=n_t)
    init = rng.integers(0, n_t, size=train.n_docs)
    timings = {}
    for kind in ("collapsed", "naive"):
        # warm up the jitted kernel so timings reflect steady-state sweeps
        run_chain(train, init.copy(), hyper, kind, 1, 0, 1,
                  np.random.default_rng(0), n_themes=n_t, snapshot_every=None)
        t0 = time.perf_counter()
        chain = run_chain(
            train, init.copy(), hyper, kind, args.sweeps,
            args.sweeps // 10, 1, np.random.default_rng(args.seed + 1),
            n_themes=n_t, snapshot_every=max(1, args.sweeps // 100),
            reference=reference,
        )
        timings[kind] = time.perf_counter() - t0
        _write_csv(out / f"chain_{kind}.csv",
                   ["sweep", "train_perplexity", "cooccurrence"],
                   list(zip(chain.snapshot_sweeps.tolist(),
                            chain.train_perplexities.tolist(),
                            chain.cooccurrences.tolist())))
    (out / "timing.txt").write_text(
        "".join(f"{k}_seconds={_fmt(v)}\n" for k, v in sorted(timings.items())),
        encoding="utf-8",
    )


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits with 2 on usage errors; the CLI contract wants 1.
        raise InputError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mixclust",
                     description="Multinomial mixture text clustering toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--themes", type=int, default=5)
        p.add_argument("--lambda-alpha", type=float, default=1.0)
        p.add_argument("--lambda-beta", type=float, default=1.1)
        p.add_argument("--out", required=True)

    p_ingest = sub.add_parser("ingest", help="tokenize a corpus into counts")
    p_ingest.add_argument("--input", required=True)
    p_ingest.add_argument("--format", choices=("tsv", "dir"), default="tsv")
    p_ingest.add_argument("--out", required=True)
    p_ingest.add_argument("--keep-most-frequent", type=int, default=None)
    p_ingest.add_argument("--drop-most-frequent", type=int, default=None)
    p_ingest.add_argument("--folds", type=int, default=None,
                          help="also write a balanced random fold split")
    p_ingest.add_argument("--seed", type=int, default=0)
    p_ingest.set_defaults(func=cmd_ingest)

    p_train = sub.add_parser("train", help="run unsupervised inference")
    common(p_train)
    p_train.add_argument("--data", help="ingest output directory")
    p_train.add_argument("--counts", help="counts file (MIXCLUST-COUNTS v1)")
    p_train.add_argument("--vocab", help="vocabulary file")
    p_train.add_argument(
        "--method", required=True,
        choices=("em", "kmeans", "iterative", "restarts", "gibbs-naive",
                 "gibbs-collapsed"),
    )
    p_train.add_argument("--iterations", type=int, default=30)
    p_train.add_argument("--sweeps", type=int, default=1000)
    p_train.add_argument("--burn-in", type=int, default=None)
    p_train.add_argument("--thin", type=int, default=1)
    p_train.add_argument("--snapshot-every", type=int, default=1)
    p_train.add_argument("--n-runs", type=int, default=10)
    p_train.add_argument("--schedule", default=None,
                         help="iterative stages SIZE:ITERS,...,full:ITERS or 'auto'")
    p_train.add_argument("--config", default=None,
                         help="key=value file overriding flags")
    p_train.set_defaults(func=cmd_train)

    p_cls = sub.add_parser("classify", help="supervised classification")
    p_cls.add_argument("--model", help="model checkpoint (naive rule only)")
    p_cls.add_argument("--vocab", help="vocabulary for --model")
    p_cls.add_argument("--train", help="labeled training corpus")
    p_cls.add_argument("--rule", choices=("naive", "bayes"), default="naive")
    p_cls.add_argument("--test", required=True)
    p_cls.add_argument("--format", choices=("tsv", "dir"), default="tsv")
    p_cls.add_argument("--lambda-alpha", type=float, default=1.0)
    p_cls.add_argument("--lambda-beta", type=float, default=1.1)
    p_cls.add_argument("--out", default=None)
    p_cls.set_defaults(func=cmd_classify)

    p_eval = sub.add_parser("eval", help="evaluate a run artifact")
    p_eval.add_argument("--artifact", required=True)
    p_eval.add_argument("--reference", help="training reference labels (docs.tsv)")
    p_eval.add_argument("--test", help="test corpus path")
    p_eval.add_argument("--test-counts", action="store_true",
                        help="treat --test as a MIXCLUST-COUNTS file")
    p_eval.add_argument("--test-reference", help="test reference labels")
    p_eval.add_argument("--format", choices=("tsv", "dir"), default="tsv")
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_exp = sub.add_parser("experiment", help="run a named experiment")
    common(p_exp)
    p_exp.add_argument("--name", required=True)
    p_exp.add_argument("--data", help="ingest output directory (labeled)")
    p_exp.add_argument("--corpus-kind", choices=("block", "rare-tail"),
                       default="rare-tail")
    p_exp.add_argument("--docs", type=int, default=300)
    p_exp.add_argument("--test-docs", type=int, default=300)
    p_exp.add_argument("--words", type=int, default=4000)
    p_exp.add_argument("--head-words", type=int, default=150)
    p_exp.add_argument("--doc-length", type=int, default=60)
    p_exp.add_argument("--iterations", type=int, default=30)
    p_exp.add_argument("--sweeps", type=int, default=200)
    p_exp.add_argument("--runs", type=int, default=10)
    p_exp.add_argument("--lambdas", default=None, help="comma grid")
    p_exp.add_argument("--sizes", default=None, help="comma grid of vocab sizes")
    p_exp.add_argument("--schedule", default=None)
    p_exp.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.func is cmd_train:
            return args.func(args, parser)
        return args.func(args)
    except InputError as exc:
        print(f"mixclust: {exc}", file=sys.stderr)
        return 1
    except MixclustError as exc:
        print(f"mixclust: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"mixclust: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
