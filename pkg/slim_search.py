"""
Двухстадийный поиск SLIM.

Стадия 1: запрос сворачивается в один разреженный вектор
    fused = Σ_i (beta * argmax_mask(q_i) + (1 - beta) * q_i)
и скорится против max-pooled сводок документов обходом posting lists
(term-at-a-time, аккумуляторы только по затронутым документам).
Это beta * lower + (1 - beta) * upper.

Стадия 2 (refine): кандидаты пересчитываются точной формулой
    s(q, d) = Σ_i max_j q_i · d_j
по исходным (не pruned) матрицам токенов из DocStore.

Для тестов здесь же:
    - oracle_search: точная формула по всем документам
    - naive_search: поточечная схема "подзапрос на токен" со scatter-max
      по токенам документа и scatter-sum по токенам запроса
    - bounds: нижняя и верхняя граница для пары (q, d)

Тай-брейк везде: при равном скоре выше документ с меньшим ordinal.
"""
import time
import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix

from slim_config import (
    DEFAULT_BETA,
    DEFAULT_FINAL_K,
    DEFAULT_FIRST_STAGE_K,
    MAX_QUERY_TOKENS,
    REFINE_BLOCK_DOCS,
)
from slim_index import DocStore, InvertedIndex
from sparse_model import (
    InvalidVectorError,
    Score,
    ScoreKind,
    SlimError,
    SparseVector,
    TokenMatrix,
    argmax_mask,
    dot,
    max_pool,
    sum_rows,
    weighted_sum,
)

logger = logging.getLogger(__name__)


class QueryTooLongError(SlimError):
    """В запросе больше токенов, чем разрешено"""
    pass


class StoreInconsistencyError(SlimError):
    """Индекс и DocStore не согласованы"""
    pass


@dataclass(frozen=True)
class SearchConfig:
    """Настройки поиска"""
    beta: float = DEFAULT_BETA
    first_stage_k: int = DEFAULT_FIRST_STAGE_K
    final_k: int = DEFAULT_FINAL_K
    refine: bool = True
    max_query_tokens: int = MAX_QUERY_TOKENS

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta должен быть в [0, 1], получено {self.beta}")
        if self.first_stage_k < 1:
            raise ValueError(f"first_stage_k должен быть >= 1, получено {self.first_stage_k}")
        if self.final_k < 1:
            raise ValueError(f"final_k должен быть >= 1, получено {self.final_k}")
        if self.refine and self.final_k > self.first_stage_k:
            raise ValueError(
                f"final_k ({self.final_k}) не может превышать first_stage_k ({self.first_stage_k}) при refine"
            )
        if self.max_query_tokens < 1:
            raise ValueError(f"max_query_tokens должен быть >= 1, получено {self.max_query_tokens}")


@dataclass(frozen=True)
class FusedQuery:
    """Свернутый запрос для первой стадии"""
    vector: SparseVector


@dataclass(frozen=True)
class ScoredHit:
    """Документ в ранжированном списке (rank с 1)"""
    doc_id: str
    score: Score
    rank: int
    ordinal: int


def lower_query(q: TokenMatrix) -> SparseVector:
    """Σ_i argmax_mask(q_i) - сторона запроса нижней границы"""
    return weighted_sum([argmax_mask(row) for row in q.rows], [1.0] * len(q))


def fuse_query(q: TokenMatrix, beta: float) -> FusedQuery:
    """
    Линейная интерполяция нижней и верхней границ на стороне запроса.

    Args:
        q: Матрица токенов запроса
        beta: Вес нижней границы, 0 <= beta <= 1

    Returns:
        FusedQuery = Σ_i (beta * argmax_mask(q_i) + (1 - beta) * q_i)
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta должен быть в [0, 1], получено {beta}")
    masks = [argmax_mask(row) for row in q.rows]
    vectors = masks + list(q.rows)
    coeffs = [beta] * len(masks) + [1.0 - beta] * len(q)
    return FusedQuery(weighted_sum(vectors, coeffs))


def _top_k_order(scores: np.ndarray, ordinals: np.ndarray, k: int) -> np.ndarray:
    """
    Позиции top-k по (скор убывает, ordinal возрастает).

    Для k < n сначала отбираем кандидатов через partition, затем
    сортируем только их.
    """
    n = scores.size
    if n == 0 or k <= 0:
        return np.zeros(0, dtype=np.int64)
    if k < n:
        kth = np.partition(scores, n - k)[n - k]
        above = np.flatnonzero(scores > kth)
        tied = np.flatnonzero(scores == kth)
        tied = tied[np.argsort(ordinals[tied], kind='stable')][:k - above.size]
        selected = np.concatenate((above, tied))
    else:
        selected = np.arange(n)
    order = np.lexsort((ordinals[selected], -scores[selected]))
    return selected[order]


def _doc_id(doc_table: Optional[Sequence[str]], ordinal: int) -> str:
    return doc_table[ordinal] if doc_table is not None else str(ordinal)


def _make_hits(
    order: np.ndarray,
    scores: np.ndarray,
    ordinals: np.ndarray,
    doc_table: Optional[Sequence[str]],
    kind: ScoreKind
) -> List[ScoredHit]:
    hits = []
    for rank, position in enumerate(order, start=1):
        ordinal = int(ordinals[position])
        hits.append(ScoredHit(
            doc_id=_doc_id(doc_table, ordinal),
            score=Score(float(scores[position]), kind),
            rank=rank,
            ordinal=ordinal,
        ))
    return hits


def stage1(index: InvertedIndex, fq: FusedQuery, k: int) -> List[ScoredHit]:
    """
    Первая стадия: top-k документов по fused · max_pool(d) через posting lists.

    Документы с нулевым скором не возвращаются; термины, которых нет в
    индексе (в том числе удаленные pruning), дают 0.
    """
    doc_chunks = []
    contrib_chunks = []
    for term, weight in zip(fq.vector.terms, fq.vector.weights):
        posting_list = index.postings.get(int(term))
        if posting_list is None:
            continue
        doc_chunks.append(posting_list.docs)
        contrib_chunks.append(posting_list.impacts.astype(np.float64) * float(weight))
    if not doc_chunks:
        return []

    touched, inverse = np.unique(np.concatenate(doc_chunks), return_inverse=True)
    scores = np.bincount(inverse.reshape(-1), weights=np.concatenate(contrib_chunks), minlength=touched.size)
    ordinals = touched.astype(np.int64)
    positive = scores > 0
    if not positive.all():
        scores = scores[positive]
        ordinals = ordinals[positive]
    order = _top_k_order(scores, ordinals, k)
    return _make_hits(order, scores, ordinals, index.doc_table, ScoreKind.FUSED)


def _query_csr(q: TokenMatrix, vocab_size: int) -> csr_matrix:
    """CSR запроса шириной vocab_size; термины за пределами словаря ни с чем не совпадают"""
    q_csr = q.to_csr(vocab_size=max(vocab_size, q.max_term() + 1), dtype=np.float64)
    if q_csr.shape[1] > vocab_size:
        q_csr = q_csr[:, :vocab_size].tocsr()
    return q_csr


def _token_scores(query_rows: csr_matrix, token_rows: csr_matrix) -> np.ndarray:
    """
    Плотная матрица q_i · d_j (строки - токены запроса, столбцы - токены документов).

    Оба операнда float64; для фиксированной пары произведения суммируются
    в порядке терминов строки запроса, поэтому одна и та же пара токенов
    дает побитово одинаковый результат во всех путях поиска.
    """
    return (query_rows @ token_rows.T).toarray()


def _sum_over_query_tokens(maxima: np.ndarray) -> np.ndarray:
    """Σ_i по строкам последовательно (тот же порядок сложений, что в naive_search)"""
    total = np.zeros(maxima.shape[1], dtype=np.float64)
    for row in maxima:
        total += row
    return total


def exact_scores(
    store: DocStore,
    q: TokenMatrix,
    ordinals: Sequence[int],
    block_docs: Optional[int] = None
) -> np.ndarray:
    """
    Точные скоры s(q, d) для набора документов.

    Документы обрабатываются блоками: токены блока берутся из CSR DocStore,
    одно умножение дает все q_i · d_j, max по токенам документа - reduceat.

    Returns:
        float64 массив скоров в порядке ordinals
    """
    ordinals = np.asarray(ordinals, dtype=np.int64)
    scores = np.zeros(ordinals.size, dtype=np.float64)
    if len(q) == 0 or ordinals.size == 0:
        return scores

    block = block_docs or REFINE_BLOCK_DOCS
    q_csr = _query_csr(q, store.vocab_size)
    for start in range(0, ordinals.size, block):
        block_ordinals = ordinals[start:start + block]
        rows, counts = store.rows_for(block_ordinals)
        if rows.size == 0:
            continue
        token_block = store.tokens[rows].astype(np.float64)
        pair_scores = _token_scores(q_csr, token_block)
        nonempty = np.flatnonzero(counts > 0)
        segment_starts = (np.cumsum(counts) - counts)[nonempty]
        maxima = np.maximum.reduceat(pair_scores, segment_starts, axis=1)
        scores[start + nonempty] = _sum_over_query_tokens(maxima)
    return scores


def refine(
    store: DocStore,
    q: TokenMatrix,
    candidates: List[ScoredHit],
    final_k: int
) -> List[ScoredHit]:
    """
    Вторая стадия: точный пересчет кандидатов и обрезка до final_k.

    Raises:
        StoreInconsistencyError: ordinal кандидата отсутствует в DocStore
    """
    if not candidates:
        return []
    ordinals = np.fromiter((hit.ordinal for hit in candidates), dtype=np.int64, count=len(candidates))
    missing = ordinals[(ordinals < 0) | (ordinals >= store.num_docs)]
    if missing.size:
        raise StoreInconsistencyError(f"ordinal {int(missing[0])} отсутствует в DocStore ({store.num_docs} документов)")

    scores = exact_scores(store, q, ordinals)
    order = _top_k_order(scores, ordinals, final_k)
    doc_ids = [hit.doc_id for hit in candidates]
    hits = []
    for rank, position in enumerate(order, start=1):
        hits.append(ScoredHit(
            doc_id=doc_ids[position],
            score=Score(float(scores[position]), ScoreKind.EXACT),
            rank=rank,
            ordinal=int(ordinals[position]),
        ))
    return hits


def oracle_search(
    store: DocStore,
    q: TokenMatrix,
    k: int,
    doc_table: Optional[Sequence[str]] = None
) -> List[ScoredHit]:
    """Точная формула по всем документам; top-k с нулевыми скорами включительно"""
    ordinals = np.arange(store.num_docs, dtype=np.int64)
    scores = exact_scores(store, q, ordinals)
    order = _top_k_order(scores, ordinals, k)
    return _make_hits(order, scores, ordinals, doc_table, ScoreKind.EXACT)


def naive_search(
    store: DocStore,
    q: TokenMatrix,
    k: int,
    doc_table: Optional[Sequence[str]] = None
) -> List[ScoredHit]:
    """
    Наивная схема: каждый токен запроса - отдельный подзапрос по всем
    токенам всех документов, scatter-max по документу, затем scatter-sum
    по токенам запроса. Медленно; используется только как второй оракул.
    """
    num_docs = store.num_docs
    ordinals = np.arange(num_docs, dtype=np.int64)
    totals = np.zeros(num_docs, dtype=np.float64)
    if num_docs and len(q) and store.tokens.shape[0]:
        q_csr = _query_csr(q, store.vocab_size)
        all_tokens = store.tokens.astype(np.float64)
        token_doc = store.token_doc
        for i in range(q_csr.shape[0]):
            token_row_scores = _token_scores(q_csr[i], all_tokens)[0]
            per_doc = np.zeros(num_docs, dtype=np.float64)
            np.maximum.at(per_doc, token_doc, token_row_scores)
            totals += per_doc
    order = _top_k_order(totals, ordinals, k)
    return _make_hits(order, totals, ordinals, doc_table, ScoreKind.EXACT)


def bounds(store: DocStore, q: TokenMatrix, doc_ordinal: int) -> Tuple[Score, Score]:
    """
    Нижняя и верхняя границы точного скора для пары (q, d).

    Returns:
        (lower, upper), где lower = (Σ_i argmax_mask(q_i)) · max_pool(d),
        upper = (Σ_i q_i) · max_pool(d)
    """
    if doc_ordinal not in store:
        raise StoreInconsistencyError(f"ordinal {doc_ordinal} отсутствует в DocStore")
    pooled = max_pool(store.matrix(doc_ordinal)).vector
    lower = dot(lower_query(q), pooled)
    upper = dot(sum_rows(q), pooled)
    return Score(lower, ScoreKind.LOWER), Score(upper, ScoreKind.UPPER)


class SlimSearcher:
    """
    Двухстадийный поисковик поверх загруженного индекса.

    Индекс и DocStore только читаются, поэтому один экземпляр можно
    использовать из нескольких потоков; статистика защищена lock.
    """

    def __init__(self, index: InvertedIndex, store: DocStore, config: Optional[SearchConfig] = None):
        if index.num_docs != store.num_docs:
            raise StoreInconsistencyError(
                f"индекс ({index.num_docs} документов) и DocStore ({store.num_docs}) не согласованы"
            )
        self.index = index
        self.store = store
        self.config = config or SearchConfig()
        self.lock = threading.Lock()
        self.stats = {
            'queries': 0,
            'rejected_queries': 0,
            'stage1_ms': 0.0,
            'refine_ms': 0.0,
            'candidates': 0,
        }
        logger.info(
            f"[Search] beta={self.config.beta}, first_stage_k={self.config.first_stage_k}, "
            f"final_k={self.config.final_k}, refine={self.config.refine}"
        )

    def _check_query(self, q: TokenMatrix):
        if len(q) > self.config.max_query_tokens:
            with self.lock:
                self.stats['rejected_queries'] += 1
            raise QueryTooLongError(
                f"в запросе {len(q)} токенов, максимум {self.config.max_query_tokens}"
            )
        if q.max_term() >= self.index.vocab_size:
            raise InvalidVectorError("term >= vocab_size", f"{q.max_term()} >= {self.index.vocab_size}")

    def search_timed(self, q: TokenMatrix) -> Tuple[List[ScoredHit], float, float]:
        """
        Поиск с замером времени.

        Returns:
            (hits, stage1_ms, total_ms)
        """
        self._check_query(q)
        started = time.perf_counter()
        candidates = stage1(self.index, fuse_query(q, self.config.beta), self.config.first_stage_k)
        stage1_done = time.perf_counter()
        if self.config.refine:
            hits = refine(self.store, q, candidates, self.config.final_k)
        else:
            hits = candidates[:self.config.final_k]
        finished = time.perf_counter()

        stage1_ms = (stage1_done - started) * 1000.0
        total_ms = (finished - started) * 1000.0
        with self.lock:
            self.stats['queries'] += 1
            self.stats['stage1_ms'] += stage1_ms
            self.stats['refine_ms'] += total_ms - stage1_ms
            self.stats['candidates'] += len(candidates)
        return hits, stage1_ms, total_ms

    def search(self, q: TokenMatrix) -> List[ScoredHit]:
        """Двухстадийный поиск по одному запросу"""
        hits, _, _ = self.search_timed(q)
        return hits

    def get_stats(self) -> dict:
        """Статистика поисковика"""
        with self.lock:
            queries = self.stats['queries']
            return {
                **self.stats,
                'mean_stage1_ms': self.stats['stage1_ms'] / queries if queries else None,
                'mean_refine_ms': self.stats['refine_ms'] / queries if queries else None,
            }


def format_run_lines(query_id: str, hits: Iterable[ScoredHit], tag: str) -> List[str]:
    """Строки TREC run: qid Q0 docid rank score tag"""
    return [f"{query_id} Q0 {hit.doc_id} {hit.rank} {hit.score.value:.6f} {tag}" for hit in hits]


def write_run(
    path: Union[str, Path],
    results: Iterable[Tuple[str, List[ScoredHit]]],
    tag: str = "slim"
) -> int:
    """
    Записывает run файл в формате TREC.

    Returns:
        Количество записанных строк
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, 'w', encoding='utf-8') as f:
        for query_id, hits in results:
            for line in format_run_lines(query_id, hits, tag):
                f.write(line + "\n")
                count += 1
    return count
