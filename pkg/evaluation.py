"""
Оценка качества поиска и sweep по порогам pruning.

Метрики (среднее по запросам run):
    - MRR@k: 1/rank первого релевантного (grade > 0) документа в top-k
    - nDCG@k: экспоненциальный gain 2^grade - 1, дисконт log2(rank + 1)
    - Recall@k: |релевантные ∩ top-k| / |релевантные|

Метрики считает ir_measures (бэкенд pytrec_eval). Запросы run без релевантных
документов в qrels исключаются и считаются предупреждениями. Метрика по пустому
множеству запросов - None, а не 0.

Форматы (TREC):
    qrels: qid 0 docid grade
    run:   qid Q0 docid rank score tag
"""
import time
import logging
from dataclasses import asdict, dataclass, field, fields
from itertools import product
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import ir_measures
import numpy as np
import pandas as pd
from tqdm import tqdm

from corpus_reader import QueryRecord
from slim_config import (
    DEFAULT_BETA,
    DEFAULT_FINAL_K,
    DEFAULT_IDF_GRID,
    DEFAULT_K_GRID,
    DEFAULT_WEIGHT_THRESHOLD,
)
from slim_index import PruneConfig, postings_from_store, prune, read_index
from slim_search import ScoredHit, SearchConfig, SlimSearcher
from sparse_model import SlimError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Ранжированный список doc_id по каждому запросу (rank 1 первым)
Run = Dict[str, List[str]]

DEFAULT_METRICS = ("mrr@10", "ndcg@10", "recall@1000")


class QrelsFormatError(SlimError, ValueError):
    """Файл qrels не соответствует формату"""
    pass


class RunFormatError(SlimError, ValueError):
    """Run файл не соответствует формату"""
    pass


class SweepInconsistencyError(SlimError):
    """Число postings выросло при увеличении порога IDF"""
    pass


@dataclass(frozen=True)
class Qrels:
    """
    Оценки релевантности: query_id → {doc_id: grade}.

    Attributes:
        judgments: grade >= 0 для каждой пары (запрос, документ)
    """
    judgments: Mapping[str, Mapping[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        for query_id, docs in self.judgments.items():
            for doc_id, grade in docs.items():
                if grade < 0:
                    raise QrelsFormatError(f"отрицательный grade {grade} для ({query_id}, {doc_id})")

    def __contains__(self, query_id: str) -> bool:
        return query_id in self.judgments

    def __len__(self) -> int:
        return len(self.judgments)

    def grades(self, query_id: str) -> Mapping[str, int]:
        return self.judgments.get(query_id, {})

    def relevant(self, query_id: str) -> Set[str]:
        """Документы с grade > 0"""
        return {doc_id for doc_id, grade in self.grades(query_id).items() if grade > 0}

    def num_judgments(self) -> int:
        return sum(len(docs) for docs in self.judgments.values())

    @classmethod
    def from_triples(cls, triples: Iterable[Tuple[str, str, int]]) -> "Qrels":
        judgments: Dict[str, Dict[str, int]] = {}
        for query_id, doc_id, grade in triples:
            judgments.setdefault(query_id, {})[doc_id] = int(grade)
        return cls(judgments)


@dataclass(frozen=True)
class MetricResult:
    """Значение метрики (None для пустого множества запросов)"""
    value: Optional[float]
    num_queries: int
    warnings: int


@dataclass(frozen=True)
class SweepPoint:
    """Строка sweep: одна точка сетки с refine или без"""
    idf_threshold: float
    first_stage_k: int
    refine: bool
    mrr10: Optional[float]
    recall1000: Optional[float]
    mean_latency_ms: float
    ndcg10: Optional[float] = None
    stage1_latency_ms: float = 0.0
    num_postings: int = 0


# ============================================================================
# МЕТРИКИ
# ============================================================================

def _judged_queries(run: Run, qrels: Qrels) -> Tuple[List[str], int]:
    """Запросы run с хотя бы одним релевантным документом и число исключенных"""
    judged = [query_id for query_id in run if qrels.relevant(query_id)]
    return judged, len(run) - len(judged)


def _mean(values: List[float], warnings: int) -> MetricResult:
    if not values:
        return MetricResult(None, 0, warnings)
    return MetricResult(float(np.mean(values)), len(values), warnings)


def _ranked_scores(docs: Sequence[str]) -> Dict[str, float]:
    """Скоры, убывающие по рангу: ir_measures сортирует по score, а не по порядку"""
    return {doc_id: float(len(docs) - rank) for rank, doc_id in enumerate(docs)}


def _calc(measure, run: Run, qrels: Qrels) -> MetricResult:
    """
    Среднее измерения ir_measures по оцененным запросам run.

    Запрос с пустым списком документов получает 0, а не исключается.
    """
    judged, warnings = _judged_queries(run, qrels)
    if not judged:
        return MetricResult(None, 0, warnings)
    qrels_dict = {query_id: dict(qrels.grades(query_id)) for query_id in judged}
    run_dict = {query_id: _ranked_scores(run[query_id]) for query_id in judged if run[query_id]}
    values = dict.fromkeys(judged, 0.0)
    if run_dict:
        for metric in ir_measures.iter_calc([measure], qrels_dict, run_dict):
            values[metric.query_id] = float(metric.value)
    return _mean([values[query_id] for query_id in judged], warnings)


def mrr_at_k(run: Run, qrels: Qrels, k: int = 10) -> MetricResult:
    """Mean reciprocal rank первого релевантного документа в top-k"""
    return _calc(ir_measures.RR@k, run, qrels)


def exponential_gains(qrels: Qrels) -> Dict[int, int]:
    """Gain 2^grade - 1 для каждого grade, встречающегося в qrels"""
    grades = {grade for docs in qrels.judgments.values() for grade in docs.values()}
    return {grade: 2 ** grade - 1 for grade in grades | {0}}


def ndcg_at_k(run: Run, qrels: Qrels, k: int = 10) -> MetricResult:
    """
    nDCG@k с экспоненциальным gain.

    Идеальное ранжирование строится из всех оценок запроса в qrels.
    """
    return _calc(ir_measures.nDCG(gains=exponential_gains(qrels))@k, run, qrels)


def recall_at_k(run: Run, qrels: Qrels, k: int = 1000) -> MetricResult:
    """Доля релевантных документов, попавших в top-k"""
    return _calc(ir_measures.R@k, run, qrels)


_METRIC_FUNCTIONS = {
    'mrr': mrr_at_k,
    'ndcg': ndcg_at_k,
    'recall': recall_at_k,
}


def parse_metric(name: str) -> Tuple[str, int]:
    """
    "mrr@10" → ("mrr", 10).

    Raises:
        ValueError: неизвестная метрика или битый cutoff
    """
    metric, sep, cutoff = name.strip().lower().partition("@")
    if metric not in _METRIC_FUNCTIONS or not sep:
        raise ValueError(f"неизвестная метрика: {name!r} (ожидается mrr@k, ndcg@k или recall@k)")
    try:
        k = int(cutoff)
    except ValueError:
        raise ValueError(f"cutoff метрики {name!r} должен быть целым")
    if k < 1:
        raise ValueError(f"cutoff метрики {name!r} должен быть >= 1")
    return metric, k


def evaluate(run: Run, qrels: Qrels, metrics: Sequence[str] = DEFAULT_METRICS) -> dict:
    """
    Считает набор метрик.

    Returns:
        {"mrr@10": 0.41, ..., "num_queries": 50, "warnings": 2}
    """
    parsed = [(name, *parse_metric(name)) for name in metrics]
    summary = {}
    num_queries = 0
    warnings = 0
    for name, metric, k in parsed:
        result = _METRIC_FUNCTIONS[metric](run, qrels, k)
        summary[name] = result.value
        num_queries = result.num_queries
        warnings = result.warnings
    if not parsed:
        judged, warnings = _judged_queries(run, qrels)
        num_queries = len(judged)
    summary['num_queries'] = num_queries
    summary['warnings'] = warnings
    if warnings:
        logger.warning(f"[Eval] {warnings} запрос(ов) run без релевантных документов в qrels исключены")
    return summary


def run_from_hits(results: Iterable[Tuple[str, List[ScoredHit]]]) -> Run:
    """Run из результатов поиска"""
    return {query_id: [hit.doc_id for hit in hits] for query_id, hits in results}


# ============================================================================
# TREC IO
# ============================================================================

def _read_whitespace_table(path: PathLike, names: List[str], error_cls) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, sep=r"\s+", header=None, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=names, dtype=str)
    except pd.errors.ParserError as e:
        raise error_cls(f"{path}: {e}")
    if frame.shape[1] != len(names):
        raise error_cls(f"{path}: ожидалось {len(names)} колонок, найдено {frame.shape[1]}")
    frame.columns = names
    missing = frame[names[-1]].isna() | (frame[names[-1]] == "")
    if missing.any():
        line = int(np.flatnonzero(missing.to_numpy())[0]) + 1
        raise error_cls(f"{path}: строка {line}: ожидалось {len(names)} колонок")
    return frame


def read_qrels(path: PathLike) -> Qrels:
    """
    Читает qrels в формате TREC: "qid 0 docid grade".

    Raises:
        QrelsFormatError: битая строка, нецелый или отрицательный grade, дубликат пары
    """
    frame = _read_whitespace_table(path, ['query_id', 'iteration', 'doc_id', 'grade'], QrelsFormatError)
    grades = pd.to_numeric(frame['grade'], errors='coerce')
    bad = grades.isna() | (grades < 0) | (grades != grades.round())
    if bad.any():
        line = int(np.flatnonzero(bad.to_numpy())[0]) + 1
        raise QrelsFormatError(f"{path}: строка {line}: grade должен быть целым >= 0")
    duplicated = frame.duplicated(subset=['query_id', 'doc_id'])
    if duplicated.any():
        line = int(np.flatnonzero(duplicated.to_numpy())[0]) + 1
        raise QrelsFormatError(f"{path}: строка {line}: повторная оценка пары (query, doc)")

    qrels = Qrels.from_triples(zip(frame['query_id'], frame['doc_id'], grades.astype(int)))
    logger.info(f"[Eval] qrels {path}: запросов={len(qrels)}, оценок={qrels.num_judgments()}")
    return qrels


def write_qrels(path: PathLike, qrels: Qrels) -> int:
    """Записывает qrels в формате TREC; возвращает число строк"""
    rows = [
        (query_id, 0, doc_id, grade)
        for query_id, docs in qrels.judgments.items()
        for doc_id, grade in docs.items()
    ]
    frame = pd.DataFrame(rows, columns=['query_id', 'iteration', 'doc_id', 'grade'])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, sep=" ", header=False, index=False)
    return len(frame)


def read_run(path: PathLike) -> Run:
    """
    Читает run в формате TREC: "qid Q0 docid rank score tag".

    Документы запроса упорядочиваются по rank.

    Raises:
        RunFormatError: битая строка, rank < 1, нечисловой score,
            повтор rank или doc_id внутри запроса
    """
    names = ['query_id', 'q0', 'doc_id', 'rank', 'score', 'tag']
    frame = _read_whitespace_table(path, names, RunFormatError)
    ranks = pd.to_numeric(frame['rank'], errors='coerce')
    scores = pd.to_numeric(frame['score'], errors='coerce')
    bad = ranks.isna() | (ranks < 1) | (ranks != ranks.round()) | scores.isna()
    if bad.any():
        line = int(np.flatnonzero(bad.to_numpy())[0]) + 1
        raise RunFormatError(f"{path}: строка {line}: rank должен быть целым >= 1, score - числом")
    frame = frame.assign(rank=ranks.astype(int))
    for column in ('rank', 'doc_id'):
        duplicated = frame.duplicated(subset=['query_id', column])
        if duplicated.any():
            line = int(np.flatnonzero(duplicated.to_numpy())[0]) + 1
            raise RunFormatError(f"{path}: строка {line}: повторный {column} внутри запроса")

    run: Run = {}
    for query_id, group in frame.groupby('query_id', sort=False):
        run[query_id] = group.sort_values('rank', kind='stable')['doc_id'].tolist()
    logger.info(f"[Eval] run {path}: запросов={len(run)}, строк={len(frame)}")
    return run


# ============================================================================
# SWEEP
# ============================================================================

def sweep_grid(
    idf_thresholds: Sequence[float] = DEFAULT_IDF_GRID,
    k_values: Sequence[int] = DEFAULT_K_GRID,
    paired: bool = False
) -> List[Tuple[float, int]]:
    """
    Точки сетки (idf_threshold, first_stage_k).

    По умолчанию декартово произведение; paired=True сопоставляет значения
    попарно (кривая из len(idf_thresholds) точек).
    """
    if paired:
        if len(idf_thresholds) != len(k_values):
            raise ValueError(
                f"paired сетка требует равных длин: {len(idf_thresholds)} порогов IDF и {len(k_values)} значений k"
            )
        return [(float(t), int(k)) for t, k in zip(idf_thresholds, k_values)]
    return [(float(t), int(k)) for t, k in product(idf_thresholds, k_values)]


def check_postings_monotone(counts: Mapping[float, int]):
    """
    Проверяет, что число postings не растет с порогом IDF.

    Raises:
        SweepInconsistencyError: нарушение монотонности
    """
    thresholds = sorted(counts)
    for lower, higher in zip(thresholds, thresholds[1:]):
        if counts[higher] > counts[lower]:
            raise SweepInconsistencyError(
                f"postings выросли с {counts[lower]} до {counts[higher]} при idf {lower} → {higher}"
            )


def _run_point(
    searcher: SlimSearcher,
    queries: Sequence[QueryRecord]
) -> Tuple[Run, float, float]:
    run: Run = {}
    stage1_total = 0.0
    latency_total = 0.0
    for query in queries:
        hits, stage1_ms, total_ms = searcher.search_timed(query.matrix)
        run[query.query_id] = [hit.doc_id for hit in hits]
        stage1_total += stage1_ms
        latency_total += total_ms
    return run, stage1_total / len(queries), latency_total / len(queries)


def sweep(
    index_dir: PathLike,
    queries: Sequence[QueryRecord],
    qrels: Qrels,
    idf_thresholds: Sequence[float] = DEFAULT_IDF_GRID,
    k_values: Sequence[int] = DEFAULT_K_GRID,
    paired: bool = False,
    weight_threshold: float = DEFAULT_WEIGHT_THRESHOLD,
    beta: float = DEFAULT_BETA,
    final_k: int = DEFAULT_FINAL_K,
    show_progress: bool = True
) -> List[SweepPoint]:
    """
    Effectiveness/efficiency sweep по порогу IDF и top-k первой стадии.

    Индекс читается один раз; для каждого порога IDF pruning применяется
    к полному индексу, восстановленному из DocStore. Каждая точка
    прогоняется с refine и без. Латентность - среднее по запросам
    (batch 1, один поток) после одного прогрева; точки выполняются
    последовательно.

    Args:
        index_dir: Каталог индекса
        queries: Запросы
        qrels: Оценки релевантности
        idf_thresholds: Пороги IDF
        k_values: Значения first_stage_k
        paired: Попарная сетка вместо декартова произведения
        weight_threshold: Порог веса (одинаковый для всех точек)
        beta: Вес нижней границы
        final_k: Глубина итогового списка (обрезается до first_stage_k)
        show_progress: Показывать tqdm прогресс

    Returns:
        Список SweepPoint: по две строки (refine False/True) на точку сетки

    Raises:
        ValueError: пустой набор запросов или paired сетка разной длины
        SweepInconsistencyError: число postings выросло с порогом IDF
    """
    if not queries:
        raise ValueError("sweep требует хотя бы один запрос: латентность по пустому набору не определена")
    grid = sweep_grid(idf_thresholds, k_values, paired)
    index, store = read_index(index_dir)
    full_index = postings_from_store(store, index.doc_table)

    pruned = {
        threshold: prune(full_index, PruneConfig(weight_threshold=weight_threshold, idf_threshold=threshold))
        for threshold in sorted({t for t, _ in grid})
    }
    posting_counts = {threshold: pruned_index.total_postings() for threshold, pruned_index in pruned.items()}
    check_postings_monotone(posting_counts)
    logger.info(f"[Sweep] точек сетки: {len(grid)}, запросов: {len(queries)}, postings: {posting_counts}")

    if grid:
        threshold, k = grid[0]
        warmup = SlimSearcher(pruned[threshold], store, SearchConfig(beta=beta, first_stage_k=k, final_k=min(final_k, k)))
        for query in queries:
            warmup.search(query.matrix)

    points: List[SweepPoint] = []
    configurations = [(t, k, refine) for t, k in grid for refine in (False, True)]
    for threshold, k, refine in tqdm(configurations, desc="Sweep", unit="point", disable=None if show_progress else True):
        config = SearchConfig(beta=beta, first_stage_k=k, final_k=min(final_k, k), refine=refine)
        searcher = SlimSearcher(pruned[threshold], store, config)
        started = time.perf_counter()
        run, stage1_ms, latency_ms = _run_point(searcher, queries)
        summary = evaluate(run, qrels, DEFAULT_METRICS)
        point = SweepPoint(
            idf_threshold=threshold,
            first_stage_k=k,
            refine=refine,
            mrr10=summary['mrr@10'],
            recall1000=summary['recall@1000'],
            mean_latency_ms=latency_ms,
            ndcg10=summary['ndcg@10'],
            stage1_latency_ms=stage1_ms,
            num_postings=posting_counts[threshold],
        )
        points.append(point)
        logger.info(
            f"[Sweep] idf={threshold}, k={k}, refine={refine}: mrr@10={point.mrr10}, "
            f"recall@1000={point.recall1000}, latency={latency_ms:.2f} ms "
            f"({time.perf_counter() - started:.1f} s)"
        )
    return points


def write_sweep_csv(points: Sequence[SweepPoint], path: PathLike) -> pd.DataFrame:
    """Сохраняет sweep в CSV (колонки в порядке полей SweepPoint)"""
    columns = [f.name for f in fields(SweepPoint)]
    frame = pd.DataFrame([asdict(point) for point in points], columns=columns)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return frame
