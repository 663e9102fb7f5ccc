"""
Командная строка SLIM.

    python slim_cli.py synth  --out-dir data/synth --num-docs 1000 --seed 7
    python slim_cli.py index  --corpus data/synth/corpus.jsonl --out data/index
    python slim_cli.py search --index data/index --queries data/synth/queries.jsonl --out data/run.txt
    python slim_cli.py eval   --run data/run.txt --qrels data/synth/qrels.txt
    python slim_cli.py sweep  --index data/index --queries ... --qrels ... --out data/sweep.csv

Сводка каждой команды - один JSON объект в stdout; диагностика - в stderr.

Коды выхода:
    0 - успех
    2 - неверные аргументы или конфигурация
    3 - ошибка ввода/вывода
    4 - нарушен контракт данных (формат, checksum, версия, бюджет памяти, длина запроса)
    5 - внутренняя несогласованность
"""
import sys
import json
import logging
import argparse
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

from corpus_reader import CorpusFormatError, default_manifest_path, read_corpus, read_manifest, read_queries
from evaluation import (
    DEFAULT_METRICS,
    QrelsFormatError,
    RunFormatError,
    SweepInconsistencyError,
    evaluate,
    parse_metric,
    read_qrels,
    read_run,
    sweep,
    write_sweep_csv,
)
from slim_config import (
    DEFAULT_BETA,
    DEFAULT_FINAL_K,
    DEFAULT_FIRST_STAGE_K,
    DEFAULT_IDF_GRID,
    DEFAULT_IDF_THRESHOLD,
    DEFAULT_K_GRID,
    DEFAULT_WEIGHT_THRESHOLD,
    setup_logging,
)
from slim_index import (
    IndexFormatError,
    MemoryBudgetExceeded,
    MissingManifestError,
    PruneConfig,
    build,
    prune,
    read_index,
    read_index_manifest,
    write_index,
)
from slim_search import QueryTooLongError, SearchConfig, SlimSearcher, StoreInconsistencyError, write_run
from sparse_model import InvalidVectorError, SlimError
from synthetic_corpus import SynthSettings, generate, write_collection

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_BAD_ARGS = 2
EXIT_IO = 3
EXIT_DATA = 4
EXIT_INTERNAL = 5


class BadArgumentsError(SlimError, ValueError):
    """Аргументы командной строки нарушают контракт"""
    pass


def _float_list(raw: str) -> List[float]:
    try:
        return [float(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"ожидается список чисел через запятую: {raw!r}")


def _int_list(raw: str) -> List[int]:
    try:
        return [int(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"ожидается список целых через запятую: {raw!r}")


def _add_search_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--beta", type=float, default=DEFAULT_BETA, help="вес нижней границы (default: %(default)s)")
    parser.add_argument("--final-k", type=int, default=DEFAULT_FINAL_K, help="глубина итогового списка (default: %(default)s)")


def _add_prune_flags(parser: argparse.ArgumentParser, with_idf: bool = True):
    parser.add_argument(
        "--weight-threshold", type=float, default=DEFAULT_WEIGHT_THRESHOLD,
        help="минимальный impact posting (default: %(default)s)"
    )
    if with_idf:
        parser.add_argument(
            "--idf-threshold", type=float, default=DEFAULT_IDF_THRESHOLD,
            help="минимальный IDF списка (default: %(default)s)"
        )


def build_parser() -> argparse.ArgumentParser:
    """Парсер аргументов со всеми подкомандами"""
    parser = argparse.ArgumentParser(prog="slim_cli.py", description="SLIM: sparse late interaction retrieval")
    parser.add_argument("--log-level", default=None, help="уровень логирования (по умолчанию SLIM_LOG)")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="сгенерировать синтетическую коллекцию")
    synth.add_argument("--out-dir", required=True)
    synth.add_argument("--num-docs", type=int, default=SynthSettings.num_docs)
    synth.add_argument("--vocab-size", type=int, default=SynthSettings.vocab_size)
    synth.add_argument("--num-queries", type=int, default=SynthSettings.num_queries)
    synth.add_argument("--judged-depth", type=int, default=SynthSettings.judged_depth)
    synth.add_argument("--seed", type=int, default=SynthSettings.seed)

    index = commands.add_parser("index", help="построить индекс")
    index.add_argument("--corpus", required=True)
    index.add_argument("--out", required=True)
    index.add_argument("--manifest", default=None, help="манифест корпуса (по умолчанию рядом с корпусом)")
    index.add_argument("--memory-budget-mb", type=int, default=None)
    _add_prune_flags(index)

    search = commands.add_parser("search", help="поиск по запросам, запись run")
    search.add_argument("--index", required=True)
    search.add_argument("--queries", required=True)
    search.add_argument("--out", required=True)
    search.add_argument("--first-stage-k", type=int, default=DEFAULT_FIRST_STAGE_K)
    search.add_argument("--no-refine", action="store_true", help="без точного пересчета")
    search.add_argument("--threads", type=int, default=1)
    search.add_argument("--tag", default="slim")
    _add_search_flags(search)

    evaluate_cmd = commands.add_parser("eval", help="оценить run по qrels")
    evaluate_cmd.add_argument("--run", required=True)
    evaluate_cmd.add_argument("--qrels", required=True)
    evaluate_cmd.add_argument("--metrics", default=",".join(DEFAULT_METRICS))

    sweep_cmd = commands.add_parser("sweep", help="sweep по порогу IDF и first_stage_k")
    sweep_cmd.add_argument("--index", required=True)
    sweep_cmd.add_argument("--queries", required=True)
    sweep_cmd.add_argument("--qrels", required=True)
    sweep_cmd.add_argument("--out", required=True)
    sweep_cmd.add_argument("--idf-grid", type=_float_list, default=list(DEFAULT_IDF_GRID))
    sweep_cmd.add_argument("--k-grid", type=_int_list, default=list(DEFAULT_K_GRID))
    sweep_cmd.add_argument("--paired", action="store_true", help="попарная сетка вместо декартова произведения")
    _add_prune_flags(sweep_cmd, with_idf=False)
    _add_search_flags(sweep_cmd)

    return parser


def _emit(summary: dict):
    print(json.dumps(summary, ensure_ascii=False, sort_keys=True))


def cmd_synth(args) -> int:
    settings = SynthSettings(
        num_docs=args.num_docs,
        vocab_size=args.vocab_size,
        num_queries=args.num_queries,
        judged_depth=args.judged_depth,
        seed=args.seed,
    )
    try:
        settings.validate()
    except ValueError as e:
        raise BadArgumentsError(str(e))
    collection = generate(settings)
    files = write_collection(collection, args.out_dir)
    _emit({
        'command': 'synth',
        'num_docs': len(collection.documents),
        'num_queries': len(collection.queries),
        'num_judgments': collection.qrels.num_judgments(),
        'vocab_size': collection.vocab_size,
        'seed': settings.seed,
        'files': files,
    })
    return EXIT_OK


def cmd_index(args) -> int:
    try:
        prune_config = PruneConfig(weight_threshold=args.weight_threshold, idf_threshold=args.idf_threshold)
    except ValueError as e:
        raise BadArgumentsError(str(e))
    if args.memory_budget_mb is not None and args.memory_budget_mb < 0:
        raise BadArgumentsError("--memory-budget-mb должен быть >= 0")

    manifest_path = Path(args.manifest) if args.manifest else default_manifest_path(args.corpus)
    manifest = read_manifest(manifest_path)
    index, store = build(read_corpus(args.corpus, manifest.vocab_size), manifest.vocab_size, args.memory_budget_mb)
    if index.num_docs != manifest.num_docs:
        raise CorpusFormatError(
            manifest_path, 1, "num_docs mismatch", f"манифест {manifest.num_docs}, корпус {index.num_docs}"
        )
    pruned = prune(index, prune_config)
    write_index(pruned, store, args.out)
    _emit({
        'command': 'index',
        'index': str(args.out),
        'num_tokens': int(store.tokens.shape[0]),
        'postings_before_prune': index.total_postings(),
        **pruned.get_stats(),
    })
    return EXIT_OK


def cmd_search(args) -> int:
    try:
        config = SearchConfig(
            beta=args.beta,
            first_stage_k=args.first_stage_k,
            final_k=args.final_k,
            refine=not args.no_refine,
        )
    except ValueError as e:
        raise BadArgumentsError(str(e))
    if args.threads < 1:
        raise BadArgumentsError("--threads должен быть >= 1")
    if any(ch.isspace() for ch in args.tag) or not args.tag:
        raise BadArgumentsError("--tag не должен быть пустым или содержать пробелы")

    index, store = read_index(args.index)
    queries = list(read_queries(args.queries, index.vocab_size))
    searcher = SlimSearcher(index, store, config)

    with ThreadPoolExecutor(max_workers=args.threads) as executor:
        results = list(executor.map(lambda query: (query.query_id, searcher.search(query.matrix)), queries))

    lines = write_run(args.out, results, tag=args.tag)
    stats = searcher.get_stats()
    _emit({
        'command': 'search',
        'run': str(args.out),
        'num_queries': len(queries),
        'lines': lines,
        'mean_stage1_ms': stats['mean_stage1_ms'],
        'mean_refine_ms': stats['mean_refine_ms'],
        'config': {
            'beta': config.beta,
            'first_stage_k': config.first_stage_k,
            'final_k': config.final_k,
            'refine': config.refine,
        },
    })
    return EXIT_OK


def cmd_eval(args) -> int:
    metrics = [name.strip() for name in args.metrics.split(",") if name.strip()]
    try:
        for name in metrics:
            parse_metric(name)
    except ValueError as e:
        raise BadArgumentsError(str(e))

    run = read_run(args.run)
    qrels = read_qrels(args.qrels)
    summary = evaluate(run, qrels, metrics)
    _emit({'command': 'eval', **summary})
    return EXIT_OK


def cmd_sweep(args) -> int:
    if not args.idf_grid or not args.k_grid:
        raise BadArgumentsError("--idf-grid и --k-grid не должны быть пустыми")
    if any(t < 0 for t in args.idf_grid) or any(k < 1 for k in args.k_grid):
        raise BadArgumentsError("пороги IDF должны быть >= 0, значения k >= 1")
    if args.paired and len(args.idf_grid) != len(args.k_grid):
        raise BadArgumentsError("--paired требует сетки одинаковой длины")
    try:
        SearchConfig(beta=args.beta, first_stage_k=max(args.k_grid), final_k=args.final_k, refine=False)
        PruneConfig(weight_threshold=args.weight_threshold, idf_threshold=0.0)
    except ValueError as e:
        raise BadArgumentsError(str(e))

    vocab_size = int(read_index_manifest(args.index)["vocab_size"])
    queries = list(read_queries(args.queries, vocab_size))
    if not queries:
        raise BadArgumentsError(f"{args.queries}: нет запросов для sweep")
    qrels = read_qrels(args.qrels)
    points = sweep(
        args.index,
        queries,
        qrels,
        idf_thresholds=args.idf_grid,
        k_values=args.k_grid,
        paired=args.paired,
        weight_threshold=args.weight_threshold,
        beta=args.beta,
        final_k=args.final_k,
    )
    write_sweep_csv(points, args.out)
    _emit({
        'command': 'sweep',
        'csv': str(args.out),
        'rows': len(points),
        'num_queries': len(queries),
    })
    return EXIT_OK


COMMANDS = {
    'synth': cmd_synth,
    'index': cmd_index,
    'search': cmd_search,
    'eval': cmd_eval,
    'sweep': cmd_sweep,
}


def exit_code_for(error: BaseException) -> int:
    """Код выхода для исключения"""
    if isinstance(error, BadArgumentsError):
        return EXIT_BAD_ARGS
    if isinstance(error, MissingManifestError):
        return EXIT_IO
    if isinstance(error, (
        IndexFormatError, CorpusFormatError, QrelsFormatError, RunFormatError,
        MemoryBudgetExceeded, QueryTooLongError, InvalidVectorError,
    )):
        return EXIT_DATA
    if isinstance(error, (StoreInconsistencyError, SweepInconsistencyError)):
        return EXIT_INTERNAL
    if isinstance(error, OSError):
        return EXIT_IO
    return EXIT_INTERNAL


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Точка входа CLI.

    Returns:
        Код выхода (0 при успехе)
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_BAD_ARGS

    setup_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        logger.error("[CLI] Прервано пользователем")
        return EXIT_INTERNAL
    except (SlimError, OSError) as e:
        code = exit_code_for(e)
        logger.error(f"[CLI] {args.command}: {e}")
        return code
    except Exception as e:
        logger.exception(f"[CLI] {args.command}: критическая ошибка: {e}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
