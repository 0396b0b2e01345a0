"""Command-line interface.

Subcommands:
  build   construct a forest index from a dataset file and save it
  query   run approximate k-NN against a saved index, emit CSV
  oracle  compute exact ground truth into a reusable truth table
  eval    recall/cost measurement for one tree count
  sweep   recall/cost across several tree counts (one build per trial)

Exit codes: 0 success; 2 bad usage or parameter values; 3 file system
errors; 4 malformed data or file contents; 5 index/dataset mismatches;
1 anything unexpected.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from . import __version__, io
from .evaluation import ground_truth, sweep
from .exceptions import (
    DataValidationError,
    DimensionMismatchError,
    FileFormatError,
    IndexMismatchError,
    ParameterError,
)
from .forest import ForestParams, build_forest
from .metrics import normalize_unit
from .validation import check_queries

log = logging.getLogger("annforest")

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_MISMATCH = 5


def _add_data_args(p: argparse.ArgumentParser, queries: bool) -> None:
    p.add_argument("--data", required=True, help="dataset file (index rows)")
    p.add_argument(
        "--format",
        choices=("idx", "raw"),
        default="idx",
        help="file format for --data and --queries (default idx)",
    )
    p.add_argument(
        "--normalize",
        action="store_true",
        help="scale data and query rows to unit Euclidean norm",
    )
    if queries:
        p.add_argument("--queries", required=True, help="query vectors file")


def _add_metric_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--metric",
        choices=("euclidean", "chi2"),
        default="euclidean",
        help="distance used for scoring (default euclidean)",
    )


def _add_forest_args(p: argparse.ArgumentParser, trees_list: bool = False) -> None:
    if trees_list:
        p.add_argument(
            "--trees",
            metavar="L[,L...]",
            required=True,
            help="ascending comma-separated tree counts to evaluate",
        )
    else:
        p.add_argument(
            "--trees", metavar="L", type=int, required=True,
            help="number of trees",
        )
    p.add_argument(
        "--split-ratio", metavar="R", type=float, default=0.3,
        help="minimum fraction kept on each side of a split (default 0.3)",
    )
    p.add_argument(
        "--capacity", metavar="C", type=int, default=12,
        help="leaf capacity before a split (default 12)",
    )
    p.add_argument(
        "--proj-dims", metavar="K", type=int, default=1,
        help="coordinates per random hyperplane test (default 1)",
    )
    p.add_argument(
        "--seed", metavar="S", type=int, default=0, help="master seed (default 0)"
    )
    p.add_argument(
        "--threads", metavar="T", type=int, default=1,
        help="threads for tree construction (default 1)",
    )


def _load_matrix(path, fmt, normalize):
    X = io.load_vectors(path, fmt)
    if normalize:
        X = normalize_unit(X)
    return X


def _params_from(args) -> ForestParams:
    return ForestParams(
        n_trees=args.trees,
        split_ratio=args.split_ratio,
        leaf_capacity=args.capacity,
        proj_dims=args.proj_dims,
        seed=args.seed,
    )


def _log_config(args, **extra) -> None:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    cfg.update(extra)
    log.info("resolved config: %s", cfg)


def cmd_build(args) -> int:
    _log_config(args)
    X = _load_matrix(args.data, args.format, args.normalize)
    forest = build_forest(
        X, _params_from(args), metric=args.metric, n_threads=args.threads
    )
    io.save_index(args.out, forest)
    log.info(
        "built %d trees over %d points in %.2fs; mean leaf depth %.2f; saved %s",
        forest.n_trees, forest.n_samples_, forest.build_seconds_,
        forest.mean_leaf_depth_, args.out,
    )
    return 0


def cmd_query(args) -> int:
    _log_config(args)
    X = _load_matrix(args.data, args.format, args.normalize)
    forest = io.load_index(args.index, X)
    Q = _load_matrix(args.queries, args.format, args.normalize)
    Q = check_queries(Q, forest.n_features_in_, forest.metric)

    out = open(args.out, "w") if args.out else sys.stdout
    try:
        out.write("query_index,rank,id,distance,candidates_examined\n")
        t0 = time.perf_counter()
        for qi in range(Q.shape[0]):
            res = forest.query(Q[qi], args.k)
            if len(res) < args.k:
                log.warning(
                    "query %d: only %d of %d requested neighbors "
                    "(candidate pool %d)", qi, len(res), args.k, res.n_candidates,
                )
            for rank in range(len(res)):
                out.write(
                    f"{qi},{rank},{res.ids[rank]},{float(res.distances[rank])!r},"
                    f"{res.n_candidates}\n"
                )
        dt = time.perf_counter() - t0
    finally:
        if out is not sys.stdout:
            out.close()
    log.info(
        "%d queries in %.3fs (%.1f us/query)",
        Q.shape[0], dt, 1e6 * dt / max(1, Q.shape[0]),
    )
    return 0


def cmd_oracle(args) -> int:
    _log_config(args)
    X = _load_matrix(args.data, args.format, args.normalize)
    Q = _load_matrix(args.queries, args.format, args.normalize)
    t0 = time.perf_counter()
    ids, dists = ground_truth(X, Q, args.metric, k=args.k)
    io.save_truth(
        args.out, ids, dists, args.metric, io.content_hash(X), io.content_hash(Q)
    )
    log.info(
        "exact %d-NN for %d queries over %d points in %.1fs; saved %s",
        args.k, Q.shape[0], X.shape[0], time.perf_counter() - t0, args.out,
    )
    return 0


def _run_eval(args, tree_counts) -> int:
    X = _load_matrix(args.data, args.format, args.normalize)
    Q = _load_matrix(args.queries, args.format, args.normalize)
    params = ForestParams(
        n_trees=tree_counts[-1],
        split_ratio=args.split_ratio,
        leaf_capacity=args.capacity,
        proj_dims=args.proj_dims,
        seed=args.seed,
    )
    report = sweep(
        X, Q, params, tree_counts, metric=args.metric, trials=args.trials,
        cache_dir=args.cache_dir, n_threads=args.threads,
    )
    if args.out:
        report.write_csv(args.out)
        log.info("wrote %d records to %s", len(report.records), args.out)
    else:
        report.write_csv(sys.stdout)
    for l_cur in report.tree_counts():
        log.info(
            "L=%d recall@1=%.4f candidate_fraction=%.5f",
            l_cur, report.mean_recall(l_cur), report.mean_fraction(l_cur),
        )
    return 0


def cmd_eval(args) -> int:
    _log_config(args)
    return _run_eval(args, [args.trees])


def cmd_sweep(args) -> int:
    _log_config(args)
    try:
        counts = [int(v) for v in args.trees.split(",") if v.strip()]
    except ValueError as exc:
        raise ParameterError(f"bad --trees list {args.trees!r}: {exc}") from exc
    return _run_eval(args, counts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="annforest",
        description="Approximate nearest-neighbor search with random "
        "binary partition forests.",
        epilog="exit codes: 0 ok, 2 usage, 3 file system, 4 bad data, "
        "5 index/dataset mismatch, 1 unexpected",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="debug logging"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build and save an index")
    _add_data_args(p, queries=False)
    _add_metric_arg(p)
    _add_forest_args(p)
    p.add_argument("--out", required=True, help="output index file")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="approximate k-NN from a saved index")
    _add_data_args(p, queries=True)
    p.add_argument("--index", required=True, help="index file from `build`")
    p.add_argument("--k", type=int, default=1, help="neighbors per query")
    p.add_argument("--out", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("oracle", help="exact ground truth table")
    _add_data_args(p, queries=True)
    _add_metric_arg(p)
    p.add_argument("--k", type=int, default=1, help="neighbors per query")
    p.add_argument("--out", required=True, help="output truth table file")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("eval", help="recall/cost for one tree count")
    _add_data_args(p, queries=True)
    _add_metric_arg(p)
    _add_forest_args(p)
    p.add_argument("--trials", type=int, default=1, help="independent rebuilds")
    p.add_argument("--cache-dir", help="directory for ground-truth caching")
    p.add_argument("--out", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="recall/cost across tree counts")
    _add_data_args(p, queries=True)
    _add_metric_arg(p)
    _add_forest_args(p, trees_list=True)
    p.add_argument("--trials", type=int, default=1, help="independent rebuilds")
    p.add_argument("--cache-dir", help="directory for ground-truth caching")
    p.add_argument("--out", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ParameterError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (FileFormatError, DataValidationError) as exc:
        log.error("%s", exc)
        return EXIT_FORMAT
    except (IndexMismatchError, DimensionMismatchError) as exc:
        log.error("%s", exc)
        return EXIT_MISMATCH
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    except Exception:  # pragma: no cover - last resort
        log.exception("unexpected failure")
        return 1


if __name__ == "__main__":
    sys.exit(main())
