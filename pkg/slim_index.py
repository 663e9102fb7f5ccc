"""
Индекс SLIM: инвертированный индекс по max-pooled сводкам документов
плюс хранилище исходных матриц токенов для точного rescoring.

Два артефакта:
    - InvertedIndex: term → postings (ordinal документа, impact), где impact -
      максимум веса термина по токенам документа
    - DocStore: все токены всех документов одной CSR матрицей (строка = токен),
      границы документов в offsets

Post-hoc pruning (только инвертированный индекс, DocStore не трогаем):
    1. удаляем postings с impact < weight_threshold
    2. удаляем целые списки с IDF = ln(num_docs / df) < idf_threshold,
       df считается после шага 1

Формат каталога индекса (little-endian):
    manifest.json  - версия, размеры, конфиг pruning, crc32 и размеры файлов
    postings.bin   - на термин: u32 term_id, u32 df, df × (u32 ordinal, f32 impact)
    docstore.bin   - на документ: u32 ordinal, u32 num_tokens,
                     на токен: u32 nnz, nnz × (u32 term_id, f32 weight)
    ids.tsv        - ordinal<TAB>doc_id
"""
import json
import math
import zlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix
from tqdm import tqdm

from corpus_reader import DocumentRecord
from slim_config import (
    DEFAULT_IDF_THRESHOLD,
    DEFAULT_WEIGHT_THRESHOLD,
    INDEX_FORMAT_VERSION,
    MEMORY_BUDGET_MB,
)
from sparse_model import SlimError, SparseVector, TokenMatrix, max_pool

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MANIFEST_NAME = "manifest.json"
POSTINGS_NAME = "postings.bin"
DOCSTORE_NAME = "docstore.bin"
IDS_NAME = "ids.tsv"
DATA_FILES = (POSTINGS_NAME, DOCSTORE_NAME, IDS_NAME)

PAIR_DTYPE = np.dtype([('doc', '<u4'), ('impact', '<f4')])

# Оценка памяти: posting = 8 байт, вес токена = 8 байт, строка токена = 8 байт
_BYTES_PER_POSTING = 8
_BYTES_PER_ENTRY = 8
_BYTES_PER_TOKEN = 8


class IndexFormatError(SlimError):
    """Каталог индекса не читается"""
    pass


class MissingManifestError(IndexFormatError):
    """В каталоге нет manifest.json"""
    pass


class IndexVersionError(IndexFormatError):
    """Версия формата не поддерживается"""
    pass


class IndexTruncatedError(IndexFormatError):
    """Файл индекса обрезан"""
    pass


class IndexChecksumError(IndexFormatError):
    """Контрольная сумма не совпала (файл поврежден)"""
    pass


class MemoryBudgetExceeded(SlimError):
    """Корпус не помещается в бюджет памяти"""
    pass


class Posting(NamedTuple):
    doc: int
    impact: float


@dataclass(frozen=True, eq=False)
class PostingList:
    """Список postings одного термина, отсортирован по ordinal"""
    docs: np.ndarray
    impacts: np.ndarray

    def __len__(self) -> int:
        return int(self.docs.size)

    def __iter__(self) -> Iterator[Posting]:
        return (Posting(int(d), float(w)) for d, w in zip(self.docs, self.impacts))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PostingList):
            return NotImplemented
        return (
            np.array_equal(self.docs, other.docs)
            and self.impacts.dtype == other.impacts.dtype
            and np.array_equal(self.impacts.view(np.uint32), other.impacts.view(np.uint32))
        )

    __hash__ = None


def _posting_list(docs: np.ndarray, impacts: np.ndarray) -> PostingList:
    docs = np.ascontiguousarray(docs, dtype=np.uint32)
    impacts = np.ascontiguousarray(impacts, dtype=np.float32)
    docs.flags.writeable = False
    impacts.flags.writeable = False
    return PostingList(docs, impacts)


@dataclass(frozen=True)
class PruneConfig:
    """Пороги post-hoc pruning (0 отключает соответствующий шаг)"""
    weight_threshold: float = DEFAULT_WEIGHT_THRESHOLD
    idf_threshold: float = DEFAULT_IDF_THRESHOLD

    def __post_init__(self):
        for name in ('weight_threshold', 'idf_threshold'):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or math.isnan(value) or value < 0:
                raise ValueError(f"{name} должен быть >= 0, получено {value!r}")

    @classmethod
    def disabled(cls) -> "PruneConfig":
        return cls(weight_threshold=0.0, idf_threshold=0.0)

    def to_dict(self) -> Dict[str, float]:
        return {'weight_threshold': float(self.weight_threshold), 'idf_threshold': float(self.idf_threshold)}


@dataclass(frozen=True, eq=False)
class InvertedIndex:
    """
    Инвертированный индекс по max-pooled сводкам документов.

    Attributes:
        postings: term_id → PostingList (только непустые списки)
        doc_table: ordinal → внешний doc_id
        num_docs: Количество документов
        vocab_size: Размер словаря
        prune_config: Какие пороги уже применены
    """
    postings: Dict[int, PostingList]
    doc_table: Tuple[str, ...]
    num_docs: int
    vocab_size: int
    prune_config: PruneConfig = field(default_factory=PruneConfig.disabled)

    def df(self, term: int) -> int:
        posting_list = self.postings.get(term)
        return len(posting_list) if posting_list is not None else 0

    def total_postings(self) -> int:
        return sum(len(p) for p in self.postings.values())

    def get_stats(self) -> dict:
        """Статистика индекса"""
        lengths = [len(p) for p in self.postings.values()]
        return {
            'num_docs': self.num_docs,
            'vocab_size': self.vocab_size,
            'num_lists': len(lengths),
            'total_postings': int(sum(lengths)),
            'max_df': int(max(lengths, default=0)),
            'prune': self.prune_config.to_dict(),
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, InvertedIndex):
            return NotImplemented
        if (
            self.num_docs != other.num_docs
            or self.vocab_size != other.vocab_size
            or tuple(self.doc_table) != tuple(other.doc_table)
            or self.prune_config != other.prune_config
            or set(self.postings) != set(other.postings)
        ):
            return False
        return all(self.postings[t] == other.postings[t] for t in self.postings)

    __hash__ = None


class DocStore:
    """
    Хранилище исходных (не pruned) матриц токенов.

    Все токены корпуса лежат в одной CSR матрице float32; токены документа
    с ordinal d - строки offsets[d]:offsets[d+1].
    """

    def __init__(self, tokens: csr_matrix, offsets: np.ndarray):
        offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        if offsets.size == 0 or offsets[0] != 0 or offsets[-1] != tokens.shape[0]:
            raise ValueError("offsets не согласованы с числом токенов")
        if np.any(np.diff(offsets) < 0):
            raise ValueError("offsets должны быть неубывающими")
        self.tokens = tokens
        self.offsets = offsets
        self._token_doc: Optional[np.ndarray] = None

    @property
    def num_docs(self) -> int:
        return int(self.offsets.size - 1)

    @property
    def vocab_size(self) -> int:
        return int(self.tokens.shape[1])

    def __len__(self) -> int:
        return self.num_docs

    def __contains__(self, ordinal: int) -> bool:
        return 0 <= ordinal < self.num_docs

    def num_tokens(self, ordinal: int) -> int:
        return int(self.offsets[ordinal + 1] - self.offsets[ordinal])

    @property
    def token_doc(self) -> np.ndarray:
        """ordinal документа для каждой строки-токена"""
        if self._token_doc is None:
            self._token_doc = np.repeat(np.arange(self.num_docs, dtype=np.int64), np.diff(self.offsets))
        return self._token_doc

    def matrix(self, ordinal: int) -> TokenMatrix:
        """
        Матрица токенов документа.

        Raises:
            KeyError: ordinal вне хранилища
        """
        if ordinal not in self:
            raise KeyError(ordinal)
        indptr = self.tokens.indptr
        rows = []
        for row in range(int(self.offsets[ordinal]), int(self.offsets[ordinal + 1])):
            start, end = int(indptr[row]), int(indptr[row + 1])
            rows.append(SparseVector._trusted(self.tokens.indices[start:end], self.tokens.data[start:end]))
        return TokenMatrix(tuple(rows))

    __getitem__ = matrix

    def rows_for(self, ordinals: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Индексы строк-токенов для набора документов.

        Returns:
            (rows, counts): номера строк подряд по документам и число токенов каждого
        """
        ordinals = np.asarray(ordinals, dtype=np.int64)
        starts = self.offsets[ordinals]
        counts = self.offsets[ordinals + 1] - starts
        total = int(counts.sum())
        if total == 0:
            return np.zeros(0, dtype=np.int64), counts
        segment_starts = np.repeat(starts - np.concatenate(([0], np.cumsum(counts)[:-1])), counts)
        return segment_starts + np.arange(total, dtype=np.int64), counts

    def nbytes(self) -> int:
        return int(self.tokens.data.nbytes + self.tokens.indices.nbytes + self.tokens.indptr.nbytes + self.offsets.nbytes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DocStore):
            return NotImplemented
        return (
            self.tokens.shape == other.tokens.shape
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.tokens.indptr, other.tokens.indptr)
            and np.array_equal(self.tokens.indices, other.tokens.indices)
            and self.tokens.data.dtype == other.tokens.data.dtype
            and np.array_equal(self.tokens.data.view(np.uint32), other.tokens.data.view(np.uint32))
        )

    __hash__ = None


def _assemble_postings(terms: np.ndarray, docs: np.ndarray, impacts: np.ndarray) -> Dict[int, PostingList]:
    """Группирует тройки (term, doc, impact) в posting lists, docs по возрастанию"""
    if terms.size == 0:
        return {}
    order = np.lexsort((docs, terms))
    terms = terms[order]
    docs = docs[order]
    impacts = impacts[order]
    boundaries = np.flatnonzero(np.diff(terms)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [terms.size]))
    return {
        int(terms[s]): _posting_list(docs[s:e], impacts[s:e])
        for s, e in zip(starts, ends)
    }


def build(
    corpus: Iterable[DocumentRecord],
    vocab_size: int,
    memory_budget_mb: Optional[int] = None,
    show_progress: bool = True
) -> Tuple[InvertedIndex, DocStore]:
    """
    Строит инвертированный индекс и DocStore.

    Каждый документ сворачивается max_pool, термины сводки становятся
    postings; ordinals выдаются в порядке поступления.

    Args:
        corpus: Поток документов (уже провалидирован ingest)
        vocab_size: Размер словаря
        memory_budget_mb: Бюджет памяти (по умолчанию SLIM_MEMORY_BUDGET_MB)
        show_progress: Показывать tqdm прогресс

    Returns:
        (InvertedIndex без pruning, DocStore)

    Raises:
        MemoryBudgetExceeded: корпус превысил бюджет (частичный индекс не возвращается)
        ValueError: повторяющийся doc_id
    """
    budget_mb = MEMORY_BUDGET_MB if memory_budget_mb is None else memory_budget_mb
    budget_bytes = budget_mb * 1024 * 1024

    doc_ids: List[str] = []
    seen = set()
    posting_terms: List[np.ndarray] = []
    posting_docs: List[np.ndarray] = []
    posting_impacts: List[np.ndarray] = []
    token_terms: List[np.ndarray] = []
    token_weights: List[np.ndarray] = []
    token_lengths: List[int] = []
    doc_token_counts: List[int] = []
    used_bytes = 0

    for record in tqdm(corpus, desc="Индексация", unit="doc", disable=None if show_progress else True):
        if record.doc_id in seen:
            raise ValueError(f"повторяющийся doc_id: {record.doc_id}")
        seen.add(record.doc_id)
        ordinal = len(doc_ids)
        doc_ids.append(record.doc_id)

        pooled = max_pool(record.matrix).vector
        if len(pooled):
            posting_terms.append(pooled.terms)
            posting_docs.append(np.full(len(pooled), ordinal, dtype=np.uint32))
            posting_impacts.append(pooled.weights.astype(np.float32))

        for row in record.matrix.rows:
            token_terms.append(row.terms)
            token_weights.append(row.weights.astype(np.float32))
            token_lengths.append(len(row))
        doc_token_counts.append(len(record.matrix))

        used_bytes += (
            len(pooled) * _BYTES_PER_POSTING
            + record.matrix.nnz() * _BYTES_PER_ENTRY
            + len(record.matrix) * _BYTES_PER_TOKEN
        )
        if used_bytes > budget_bytes:
            raise MemoryBudgetExceeded(
                f"корпус превысил бюджет памяти {budget_mb} MB на документе #{ordinal} ({record.doc_id})"
            )

    postings = _assemble_postings(
        np.concatenate(posting_terms) if posting_terms else np.zeros(0, dtype=np.uint32),
        np.concatenate(posting_docs) if posting_docs else np.zeros(0, dtype=np.uint32),
        np.concatenate(posting_impacts) if posting_impacts else np.zeros(0, dtype=np.float32),
    )

    indptr = np.zeros(len(token_lengths) + 1, dtype=np.int64)
    np.cumsum(np.asarray(token_lengths, dtype=np.int64), out=indptr[1:])
    tokens = csr_matrix(
        (
            np.concatenate(token_weights) if token_weights else np.zeros(0, dtype=np.float32),
            np.concatenate(token_terms).astype(np.int32) if token_terms else np.zeros(0, dtype=np.int32),
            indptr,
        ),
        shape=(len(token_lengths), vocab_size),
    )
    offsets = np.zeros(len(doc_ids) + 1, dtype=np.int64)
    np.cumsum(np.asarray(doc_token_counts, dtype=np.int64), out=offsets[1:])

    index = InvertedIndex(
        postings=postings,
        doc_table=tuple(doc_ids),
        num_docs=len(doc_ids),
        vocab_size=vocab_size,
    )
    store = DocStore(tokens, offsets)
    stats = index.get_stats()
    logger.info(
        f"[Index] Построен индекс: docs={stats['num_docs']}, lists={stats['num_lists']}, "
        f"postings={stats['total_postings']}, max_df={stats['max_df']}, tokens={tokens.shape[0]}"
    )
    return index, store


def postings_from_store(store: DocStore, doc_table: Sequence[str]) -> InvertedIndex:
    """
    Восстанавливает индекс без pruning из DocStore (векторизованный max-pool).

    Нужен sweep: pruning каждой точки сетки стартует с полного индекса,
    а DocStore хранит не pruned токены.
    """
    if len(doc_table) != store.num_docs:
        raise ValueError(f"doc_table ({len(doc_table)}) не совпадает с DocStore ({store.num_docs})")
    tokens = store.tokens
    entry_rows = np.repeat(np.arange(tokens.shape[0], dtype=np.int64), np.diff(tokens.indptr))
    entry_docs = store.token_doc[entry_rows]
    entry_terms = tokens.indices.astype(np.int64)
    weights = tokens.data

    if weights.size == 0:
        postings = {}
    else:
        keys = entry_docs * store.vocab_size + entry_terms
        # внутри группы ключа последний элемент - максимальный вес
        order = np.lexsort((weights, keys))
        keys = keys[order]
        last = np.concatenate((np.flatnonzero(np.diff(keys)), [keys.size - 1]))
        pooled_keys = keys[last]
        postings = _assemble_postings(
            (pooled_keys % store.vocab_size).astype(np.uint32),
            (pooled_keys // store.vocab_size).astype(np.uint32),
            weights[order][last],
        )

    return InvertedIndex(
        postings=postings,
        doc_table=tuple(doc_table),
        num_docs=store.num_docs,
        vocab_size=store.vocab_size,
    )


def prune(index: InvertedIndex, cfg: PruneConfig) -> InvertedIndex:
    """
    Post-hoc pruning; входной индекс не меняется.

    Шаг 1: удаляются postings с impact < weight_threshold.
    Шаг 2: удаляются списки с ln(num_docs / df) < idf_threshold, где df -
    длина списка после шага 1.

    Args:
        index: Индекс
        cfg: Пороги

    Returns:
        Новый InvertedIndex
    """
    pruned: Dict[int, PostingList] = {}
    removed_postings = 0
    removed_lists = 0

    for term, posting_list in index.postings.items():
        if cfg.weight_threshold > 0:
            keep = posting_list.impacts >= cfg.weight_threshold
            if not keep.all():
                removed_postings += int((~keep).sum())
                if not keep.any():
                    removed_lists += 1
                    continue
                posting_list = _posting_list(posting_list.docs[keep], posting_list.impacts[keep])

        if cfg.idf_threshold > 0 and index.num_docs > 0:
            idf = math.log(index.num_docs / len(posting_list))
            if idf < cfg.idf_threshold:
                removed_postings += len(posting_list)
                removed_lists += 1
                continue

        pruned[term] = posting_list

    applied = PruneConfig(
        weight_threshold=max(cfg.weight_threshold, index.prune_config.weight_threshold),
        idf_threshold=max(cfg.idf_threshold, index.prune_config.idf_threshold),
    )
    logger.info(
        f"[Prune] weight>={cfg.weight_threshold}, idf>={cfg.idf_threshold}: "
        f"удалено postings={removed_postings}, списков={removed_lists}"
    )
    return InvertedIndex(
        postings=pruned,
        doc_table=index.doc_table,
        num_docs=index.num_docs,
        vocab_size=index.vocab_size,
        prune_config=applied,
    )


# ============================================================================
# ПЕРСИСТЕНТНОСТЬ
# ============================================================================

def _crc32(data: bytes) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF


def _canonical_manifest_bytes(manifest: dict) -> bytes:
    body = {k: v for k, v in manifest.items() if k != 'checksum'}
    return json.dumps(body, sort_keys=True, separators=(',', ':')).encode('utf-8')


def _encode_postings(index: InvertedIndex) -> bytes:
    chunks = []
    for term in sorted(index.postings):
        posting_list = index.postings[term]
        chunks.append(np.array([term, len(posting_list)], dtype='<u4').tobytes())
        pairs = np.empty(len(posting_list), dtype=PAIR_DTYPE)
        pairs['doc'] = posting_list.docs
        pairs['impact'] = posting_list.impacts
        chunks.append(pairs.tobytes())
    return b"".join(chunks)


def _encode_docstore(store: DocStore) -> bytes:
    """
    Весь docstore.bin - поток 32-битных слов, поэтому собираем его одним
    массивом: позиции заголовков документов, токенов и пар считаются
    из offsets и indptr.
    """
    num_docs = store.num_docs
    num_rows = store.tokens.shape[0]
    indptr = store.tokens.indptr.astype(np.int64)
    nnz = int(indptr[-1])
    words = np.empty(2 * num_docs + num_rows + 2 * nnz, dtype='<u4')

    doc_index = np.arange(num_docs, dtype=np.int64)
    doc_start = 2 * doc_index + store.offsets[:-1] + 2 * indptr[store.offsets[:-1]]
    words[doc_start] = doc_index
    words[doc_start + 1] = np.diff(store.offsets)

    rows = np.arange(num_rows, dtype=np.int64)
    row_doc = store.token_doc
    token_start = 2 * row_doc + 2 + rows + 2 * indptr[:-1]
    words[token_start] = np.diff(indptr)

    if nnz:
        entries = np.arange(nnz, dtype=np.int64)
        entry_rows = np.repeat(rows, np.diff(indptr))
        entry_pos = 2 * row_doc[entry_rows] + 3 + entry_rows + 2 * entries
        words[entry_pos] = store.tokens.indices
        words[entry_pos + 1] = store.tokens.data.astype('<f4').view('<u4')
    return words.tobytes()


def _encode_ids(index: InvertedIndex) -> bytes:
    return "".join(f"{ordinal}\t{doc_id}\n" for ordinal, doc_id in enumerate(index.doc_table)).encode('utf-8')


def write_index(index: InvertedIndex, store: DocStore, directory: PathLike):
    """
    Сохраняет индекс и DocStore в каталог.

    Манифест пишется последним: каталог без манифеста считается неполным.
    """
    if index.num_docs != store.num_docs:
        raise ValueError(f"индекс ({index.num_docs}) и DocStore ({store.num_docs}) не согласованы")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    payloads = {
        POSTINGS_NAME: _encode_postings(index),
        DOCSTORE_NAME: _encode_docstore(store),
        IDS_NAME: _encode_ids(index),
    }
    files = {}
    for name, payload in payloads.items():
        (directory / name).write_bytes(payload)
        files[name] = {'crc32': _crc32(payload), 'bytes': len(payload)}

    manifest = {
        'version': INDEX_FORMAT_VERSION,
        'num_docs': index.num_docs,
        'vocab_size': index.vocab_size,
        'prune': index.prune_config.to_dict(),
        'files': files,
    }
    manifest['checksum'] = _crc32(_canonical_manifest_bytes(manifest))
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding='utf-8')
    logger.info(f"[Index] Индекс сохранен: {directory} ({sum(f['bytes'] for f in files.values())} байт)")


def read_index_manifest(directory: PathLike) -> dict:
    """
    Читает и проверяет manifest.json.

    Raises:
        MissingManifestError: манифеста нет
        IndexChecksumError: манифест поврежден
        IndexVersionError: неизвестная версия формата
    """
    path = Path(directory) / MANIFEST_NAME
    if not path.is_file():
        raise MissingManifestError(f"missing manifest: {path}")
    raw = path.read_bytes()
    try:
        manifest = json.loads(raw.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise IndexChecksumError(f"manifest поврежден: {e}")
    if not isinstance(manifest, dict) or 'checksum' not in manifest:
        raise IndexChecksumError("manifest поврежден: нет checksum")
    if manifest['checksum'] != _crc32(_canonical_manifest_bytes(manifest)):
        raise IndexChecksumError("checksum mismatch: manifest.json")
    if manifest.get('version') != INDEX_FORMAT_VERSION:
        raise IndexVersionError(
            f"version mismatch: файл версии {manifest.get('version')}, поддерживается {INDEX_FORMAT_VERSION}"
        )
    return manifest


def _read_checked(directory: Path, name: str, expected: dict) -> bytes:
    path = directory / name
    if not path.is_file():
        raise IndexTruncatedError(f"{name} отсутствует")
    payload = path.read_bytes()
    if len(payload) < expected['bytes']:
        raise IndexTruncatedError(f"truncated file: {name} ({len(payload)} < {expected['bytes']} байт)")
    if len(payload) != expected['bytes'] or _crc32(payload) != expected['crc32']:
        raise IndexChecksumError(f"checksum mismatch: {name}")
    return payload


def _decode_postings(payload: bytes, num_docs: int, vocab_size: int) -> Dict[int, PostingList]:
    postings: Dict[int, PostingList] = {}
    position = 0
    previous_term = -1
    while position < len(payload):
        if position + 8 > len(payload):
            raise IndexTruncatedError("truncated file: postings.bin (заголовок списка)")
        term, df = (int(x) for x in np.frombuffer(payload, dtype='<u4', count=2, offset=position))
        position += 8
        if position + df * PAIR_DTYPE.itemsize > len(payload):
            raise IndexTruncatedError(f"truncated file: postings.bin (список термина {term})")
        pairs = np.frombuffer(payload, dtype=PAIR_DTYPE, count=df, offset=position)
        position += df * PAIR_DTYPE.itemsize
        docs = pairs['doc'].astype(np.uint32)
        impacts = pairs['impact'].astype(np.float32)
        if (
            term <= previous_term or term >= vocab_size or df == 0
            or np.any(np.diff(docs.astype(np.int64)) <= 0) or int(docs[-1]) >= num_docs
            or not np.all(impacts > 0)
        ):
            raise IndexFormatError(f"postings.bin: нарушен инвариант списка термина {term}")
        previous_term = term
        postings[term] = _posting_list(docs, impacts)
    return postings


def _decode_docstore(payload: bytes, num_docs: int, vocab_size: int) -> DocStore:
    if len(payload) % 4:
        raise IndexTruncatedError("truncated file: docstore.bin (неполное слово)")
    words = np.frombuffer(payload, dtype='<u4')
    values = words.tolist()
    total = len(values)

    offsets = [0]
    row_starts: List[int] = []
    row_nnz: List[int] = []
    position = 0
    for ordinal in range(num_docs):
        if position + 2 > total:
            raise IndexTruncatedError(f"truncated file: docstore.bin (документ {ordinal})")
        if values[position] != ordinal:
            raise IndexFormatError(f"docstore.bin: ожидался ordinal {ordinal}, найден {values[position]}")
        num_tokens = values[position + 1]
        position += 2
        for _ in range(num_tokens):
            if position >= total:
                raise IndexTruncatedError(f"truncated file: docstore.bin (токены документа {ordinal})")
            nnz = values[position]
            row_starts.append(position + 1)
            row_nnz.append(nnz)
            position += 1 + 2 * nnz
            if position > total:
                raise IndexTruncatedError(f"truncated file: docstore.bin (веса документа {ordinal})")
        offsets.append(offsets[-1] + num_tokens)
    if position != total:
        raise IndexFormatError("docstore.bin: лишние данные в конце файла")

    counts = np.asarray(row_nnz, dtype=np.int64)
    indptr = np.zeros(counts.size + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    nnz_total = int(indptr[-1])
    if nnz_total:
        entry_rows = np.repeat(np.arange(counts.size, dtype=np.int64), counts)
        within = np.arange(nnz_total, dtype=np.int64) - indptr[:-1][entry_rows]
        entry_pos = np.asarray(row_starts, dtype=np.int64)[entry_rows] + 2 * within
        indices = words[entry_pos].astype(np.int64)
        data = words[entry_pos + 1].copy().view('<f4').astype(np.float32)
    else:
        indices = np.zeros(0, dtype=np.int64)
        data = np.zeros(0, dtype=np.float32)

    if indices.size and (indices.max() >= vocab_size or not np.all(data > 0) or not np.all(np.isfinite(data))):
        raise IndexFormatError("docstore.bin: вес или term_id вне контракта")
    if indices.size > 1:
        same_row = np.diff(np.repeat(np.arange(counts.size), counts)) == 0
        if np.any(np.diff(indices)[same_row] <= 0):
            raise IndexFormatError("docstore.bin: term_id токена не по возрастанию")

    tokens = csr_matrix((data, indices.astype(np.int32), indptr), shape=(counts.size, vocab_size))
    return DocStore(tokens, np.asarray(offsets, dtype=np.int64))


def _decode_ids(payload: bytes, num_docs: int) -> Tuple[str, ...]:
    try:
        lines = payload.decode('utf-8').split("\n")
    except UnicodeDecodeError as e:
        raise IndexFormatError(f"ids.tsv: {e}")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) != num_docs:
        raise IndexFormatError(f"ids.tsv: {len(lines)} строк, ожидалось {num_docs}")
    doc_ids = []
    for ordinal, line in enumerate(lines):
        number, _, doc_id = line.partition("\t")
        if number != str(ordinal) or not doc_id:
            raise IndexFormatError(f"ids.tsv: битая строка {ordinal + 1}")
        doc_ids.append(doc_id)
    return tuple(doc_ids)


def read_index(directory: PathLike) -> Tuple[InvertedIndex, DocStore]:
    """
    Загружает индекс и DocStore из каталога.

    Raises:
        MissingManifestError: нет manifest.json
        IndexVersionError: неподдерживаемая версия
        IndexTruncatedError: файл обрезан или отсутствует
        IndexChecksumError: файл поврежден
        IndexFormatError: содержимое нарушает инварианты
    """
    directory = Path(directory)
    manifest = read_index_manifest(directory)
    num_docs = int(manifest['num_docs'])
    vocab_size = int(manifest['vocab_size'])
    files = manifest.get('files', {})

    payloads = {}
    for name in DATA_FILES:
        if name not in files:
            raise IndexFormatError(f"manifest не описывает {name}")
        payloads[name] = _read_checked(directory, name, files[name])

    postings = _decode_postings(payloads[POSTINGS_NAME], num_docs, vocab_size)
    store = _decode_docstore(payloads[DOCSTORE_NAME], num_docs, vocab_size)
    doc_table = _decode_ids(payloads[IDS_NAME], num_docs)

    prune_dict = manifest.get('prune', {})
    index = InvertedIndex(
        postings=postings,
        doc_table=doc_table,
        num_docs=num_docs,
        vocab_size=vocab_size,
        prune_config=PruneConfig(
            weight_threshold=float(prune_dict.get('weight_threshold', 0.0)),
            idf_threshold=float(prune_dict.get('idf_threshold', 0.0)),
        ),
    )
    logger.info(f"[Index] Индекс загружен: {directory} (docs={num_docs}, lists={len(postings)})")
    return index, store
