"""
Чтение корпусов и запросов из файлов с предвычисленными векторами токенов.

Формат файла (UTF-8, одна запись на строку):
    {"id": "d1", "vectors": [[[term_id, weight], ...], ...]}
    - один внутренний список на токен
    - term_id: неотрицательное целое < vocab_size
    - weight: число >= 0 (нули отбрасываются)

Размер словаря объявляется в манифесте корпуса:
    {"vocab_size": 30522, "num_docs": 8841823}
По умолчанию манифест лежит рядом с корпусом: corpus.jsonl → corpus.manifest.json

Также здесь живет toy_encode - детерминированный "энкодер" на хешах,
чтобы репозиторий запускался без нейросети.
"""
import json
import hashlib
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Optional, Set, Tuple, Union

from sparse_model import InvalidVectorError, SlimError, SparseVector, TokenMatrix

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# toy_encode: 1-4 термина на токен, веса в [0.1, 3.0]
TOY_MIN_TERMS = 1
TOY_MAX_TERMS = 4
TOY_MIN_WEIGHT = 0.1
TOY_MAX_WEIGHT = 3.0


class CorpusFormatError(SlimError, ValueError):
    """Нарушен контракт файла корпуса/запросов"""

    def __init__(self, path: PathLike, line_number: int, invariant: str, detail: str = ""):
        self.path = str(path)
        self.line_number = line_number
        self.invariant = invariant
        suffix = f" ({detail})" if detail else ""
        super().__init__(f"{self.path}:{line_number}: {invariant}{suffix}")


@dataclass(frozen=True)
class DocumentRecord:
    """Документ корпуса: внешний id и матрица токенов"""
    doc_id: str
    matrix: TokenMatrix


@dataclass(frozen=True)
class QueryRecord:
    """Запрос: внешний id и матрица токенов"""
    query_id: str
    matrix: TokenMatrix


@dataclass(frozen=True)
class CorpusManifest:
    """Манифест корпуса"""
    vocab_size: int
    num_docs: int


def default_manifest_path(corpus_path: PathLike) -> Path:
    """corpus.jsonl → corpus.manifest.json"""
    corpus_path = Path(corpus_path)
    return corpus_path.with_name(f"{corpus_path.stem}.manifest.json")


def read_manifest(path: PathLike) -> CorpusManifest:
    """
    Читает манифест корпуса.

    Raises:
        FileNotFoundError: манифеста нет
        CorpusFormatError: манифест не валиден
    """
    path = Path(path)
    with open(path, 'r', encoding='utf-8') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise CorpusFormatError(path, e.lineno, "malformed manifest", str(e))

    vocab_size = data.get('vocab_size') if isinstance(data, dict) else None
    num_docs = data.get('num_docs') if isinstance(data, dict) else None
    if not _is_int(vocab_size) or vocab_size < 1:
        raise CorpusFormatError(path, 1, "vocab_size must be a positive integer", repr(vocab_size))
    if not _is_int(num_docs) or num_docs < 0:
        raise CorpusFormatError(path, 1, "num_docs must be a non-negative integer", repr(num_docs))
    return CorpusManifest(vocab_size=vocab_size, num_docs=num_docs)


def write_manifest(path: PathLike, manifest: CorpusManifest):
    """Записывает манифест корпуса"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump({'vocab_size': manifest.vocab_size, 'num_docs': manifest.num_docs}, f)
        f.write('\n')


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _parse_line(
    line: str,
    line_number: int,
    path: PathLike,
    vocab_size: int
) -> Tuple[str, TokenMatrix]:
    """Разбирает одну строку файла в (id, TokenMatrix) с проверкой инвариантов"""
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise CorpusFormatError(path, line_number, "malformed JSON", e.msg)

    if not isinstance(record, dict):
        raise CorpusFormatError(path, line_number, "record must be an object")

    record_id = record.get('id')
    if not isinstance(record_id, str) or not record_id:
        raise CorpusFormatError(path, line_number, "id must be a non-empty string")
    if any(ch.isspace() for ch in record_id):
        raise CorpusFormatError(path, line_number, "id contains whitespace", repr(record_id))

    vectors = record.get('vectors')
    if not isinstance(vectors, list):
        raise CorpusFormatError(path, line_number, "vectors must be a list")

    rows = []
    for position, token in enumerate(vectors):
        if not isinstance(token, list):
            raise CorpusFormatError(path, line_number, "token must be a list of pairs", f"token {position}")
        terms = []
        weights = []
        for pair in token:
            if not isinstance(pair, list) or len(pair) != 2:
                raise CorpusFormatError(path, line_number, "entry must be [term_id, weight]", f"token {position}")
            term, weight = pair
            if not _is_int(term):
                raise CorpusFormatError(path, line_number, "term id must be an integer", f"token {position}: {term!r}")
            if not _is_number(weight):
                raise CorpusFormatError(path, line_number, "weight must be a number", f"token {position}: {weight!r}")
            terms.append(term)
            weights.append(weight)
        try:
            rows.append(SparseVector(terms, weights, vocab_size=vocab_size))
        except InvalidVectorError as e:
            raise CorpusFormatError(path, line_number, e.invariant, f"token {position}")

    return record_id, TokenMatrix(tuple(rows))


def _resolve_vocab_size(path: PathLike, vocab_size: Optional[int]) -> int:
    if vocab_size is not None:
        return vocab_size
    return read_manifest(default_manifest_path(path)).vocab_size


def _iter_records(path: PathLike, vocab_size: int, kind: str) -> Iterator[Tuple[str, TokenMatrix]]:
    seen: Set[str] = set()
    count = 0
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            record_id, matrix = _parse_line(line, line_number, path, vocab_size)
            if record_id in seen:
                raise CorpusFormatError(path, line_number, f"duplicate {kind} id", record_id)
            seen.add(record_id)
            count += 1
            yield record_id, matrix
    logger.info(f"[Ingest] {path}: прочитано записей ({kind}): {count}")


def read_corpus(path: PathLike, vocab_size: Optional[int] = None) -> Iterator[DocumentRecord]:
    """
    Потоково читает корпус документов в порядке файла.

    Args:
        path: Путь к файлу корпуса
        vocab_size: Размер словаря (по умолчанию из манифеста рядом с корпусом)

    Yields:
        DocumentRecord

    Raises:
        CorpusFormatError: битая строка (с номером строки и нарушенным инвариантом)
            или повторяющийся doc_id
    """
    size = _resolve_vocab_size(path, vocab_size)
    for doc_id, matrix in _iter_records(path, size, 'doc'):
        yield DocumentRecord(doc_id=doc_id, matrix=matrix)


def read_queries(path: PathLike, vocab_size: int) -> Iterator[QueryRecord]:
    """Потоково читает запросы (тот же формат, что и корпус)"""
    for query_id, matrix in _iter_records(path, vocab_size, 'query'):
        yield QueryRecord(query_id=query_id, matrix=matrix)


def _format_weight(weight: float) -> str:
    # repr float64-значения float32-веса читается обратно в тот же float32
    return repr(float(weight))


def write_records(path: PathLike, records: Iterable[Union[DocumentRecord, QueryRecord]]) -> int:
    """
    Записывает документы или запросы в формат корпуса.

    Returns:
        Количество записанных записей
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, 'w', encoding='utf-8') as f:
        for record in records:
            record_id = record.doc_id if isinstance(record, DocumentRecord) else record.query_id
            tokens = ",".join(
                "[" + ",".join(f"[{int(t)},{_format_weight(w)}]" for t, w in zip(row.terms, row.weights)) + "]"
                for row in record.matrix.rows
            )
            f.write(f'{{"id":{json.dumps(record_id)},"vectors":[{tokens}]}}\n')
            count += 1
    return count


def _stable_hash(token: str, slot: str) -> int:
    digest = hashlib.blake2b(f"{token}\x1f{slot}".encode('utf-8'), digest_size=8).digest()
    return int.from_bytes(digest, 'little')


@lru_cache(maxsize=262144)
def _encode_token(token: str, vocab_size: int) -> SparseVector:
    num_terms = TOY_MIN_TERMS + _stable_hash(token, "n") % (TOY_MAX_TERMS - TOY_MIN_TERMS + 1)
    weights = {}
    for slot in range(num_terms):
        value = _stable_hash(token, str(slot))
        term = value % vocab_size
        fraction = (value >> 32) / float(1 << 32)
        weight = TOY_MIN_WEIGHT + (TOY_MAX_WEIGHT - TOY_MIN_WEIGHT) * fraction
        # коллизия термов внутри токена - оставляем больший вес
        weights[term] = max(weight, weights.get(term, 0.0))
    return SparseVector.from_dict(weights)


def toy_encode(text: str, vocab_size: int) -> TokenMatrix:
    """
    Детерминированный игрушечный энкодер.

    Разбивает текст по пробелам; каждый токен хешируется (blake2b) в 1-4
    term id с весами в [0.1, 3.0]. Результат одинаков между запусками и
    платформами.

    Args:
        text: Текст
        vocab_size: Размер словаря (>= 1)

    Returns:
        TokenMatrix по одному вектору на токен
    """
    if vocab_size < 1:
        raise ValueError(f"vocab_size должен быть >= 1, получено {vocab_size}")
    return TokenMatrix(tuple(_encode_token(token, vocab_size) for token in text.split()))
