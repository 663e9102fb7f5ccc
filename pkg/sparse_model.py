"""
Базовые разреженные типы SLIM и поэлементная алгебра над ними.

Каждый токен текста представлен разреженным вектором весов в лексическом
пространстве размера |V|. Все остальные модули (индекс, поиск, оценка)
собираются из четырех операций этого модуля:

    - dot: скалярное произведение двух векторов
    - max_pool: поэлементный максимум по токенам (сводка документа)
    - sum_rows: поэлементная сумма по токенам (верхняя граница, сторона запроса)
    - argmax_mask: оставляет только максимальный вес токена (нижняя граница)

Хранимые веса (документы, postings) - float32. Транзиентные агрегаты запроса
(sum_rows, weighted_sum) считаются и хранятся в float64.

Все типы неизменяемы после создания: numpy массивы помечаются read-only.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix

TermId = int

STORED_DTYPE = np.float32
QUERY_DTYPE = np.float64


class SlimError(Exception):
    """Базовое исключение SLIM"""
    pass


class InvalidVectorError(SlimError, ValueError):
    """Нарушен контракт разреженного вектора"""

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        message = f"{invariant}: {detail}" if detail else invariant
        super().__init__(message)


class ScoreKind(Enum):
    """Вид скора"""
    EXACT = "exact"  # s(q,d), точное позднее взаимодействие
    LOWER = "lower"  # sum_rows(argmax_mask(q)) · max_pool(d)
    UPPER = "upper"  # sum_rows(q) · max_pool(d)
    FUSED = "fused"  # beta * lower + (1 - beta) * upper


@dataclass(frozen=True)
class Score:
    """Скор документа с пометкой вида"""
    value: float
    kind: ScoreKind


def _freeze(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


class SparseVector:
    """
    Разреженный вектор весов над лексическим словарем.

    Инварианты:
        - terms строго возрастают, без дубликатов
        - каждый вес > 0 (нулевые веса отбрасываются при создании)

    Attributes:
        terms: uint32 массив term id
        weights: массив весов (float32 для хранимых векторов)
    """

    __slots__ = ('terms', 'weights')

    def __init__(
        self,
        terms: Sequence[int] = (),
        weights: Sequence[float] = (),
        dtype=STORED_DTYPE,
        vocab_size: Optional[int] = None
    ):
        """
        Создает вектор с проверкой инвариантов.

        Args:
            terms: Term id (в любом порядке)
            weights: Веса той же длины
            dtype: Тип хранения весов
            vocab_size: Если задан, term id обязаны быть < vocab_size

        Raises:
            InvalidVectorError: отрицательный вес, дубликат term id,
                term id вне словаря, нечисловой вес или вес вне диапазона dtype
        """
        raw_terms = np.asarray(terms, dtype=np.int64).reshape(-1)
        raw_weights = np.asarray(weights, dtype=np.float64).reshape(-1)

        if raw_terms.shape != raw_weights.shape:
            raise InvalidVectorError("length mismatch", f"{raw_terms.size} terms vs {raw_weights.size} weights")
        if raw_weights.size and not np.all(np.isfinite(raw_weights)):
            raise InvalidVectorError("non-finite weight")
        if raw_weights.size and raw_weights.min() < 0:
            raise InvalidVectorError("negative weight", f"{raw_weights.min()}")
        if raw_terms.size and raw_terms.min() < 0:
            raise InvalidVectorError("negative term", f"{raw_terms.min()}")
        if vocab_size is not None and raw_terms.size and raw_terms.max() >= vocab_size:
            raise InvalidVectorError("term >= vocab_size", f"{raw_terms.max()} >= {vocab_size}")

        if raw_terms.size > 1 and np.any(np.diff(raw_terms) <= 0):
            order = np.argsort(raw_terms, kind='stable')
            raw_terms = raw_terms[order]
            raw_weights = raw_weights[order]
            if np.any(np.diff(raw_terms) == 0):
                duplicates = raw_terms[1:][np.diff(raw_terms) == 0]
                raise InvalidVectorError("duplicate term", f"{int(duplicates[0])}")

        cast_weights = raw_weights.astype(dtype)
        if cast_weights.size and not np.all(np.isfinite(cast_weights)):
            raise InvalidVectorError("weight overflows float32", f"{raw_weights[~np.isfinite(cast_weights)][0]}")
        keep = cast_weights > 0
        self.terms = _freeze(raw_terms[keep].astype(np.uint32))
        self.weights = _freeze(cast_weights[keep])

    @classmethod
    def _trusted(cls, terms: np.ndarray, weights: np.ndarray) -> "SparseVector":
        """Создание из уже проверенных массивов (отсортированы, веса > 0)"""
        vector = cls.__new__(cls)
        vector.terms = _freeze(np.ascontiguousarray(terms, dtype=np.uint32))
        vector.weights = _freeze(np.ascontiguousarray(weights))
        return vector

    @classmethod
    def from_pairs(
        cls,
        pairs: Iterable[Tuple[int, float]],
        dtype=STORED_DTYPE,
        vocab_size: Optional[int] = None
    ) -> "SparseVector":
        """Создает вектор из пар (term_id, weight)"""
        pairs = list(pairs)
        if not pairs:
            return cls(dtype=dtype)
        terms, weights = zip(*pairs)
        return cls(terms, weights, dtype=dtype, vocab_size=vocab_size)

    @classmethod
    def from_dict(cls, mapping: Dict[int, float], dtype=STORED_DTYPE) -> "SparseVector":
        """Создает вектор из словаря {term_id: weight}"""
        return cls.from_pairs(mapping.items(), dtype=dtype)

    def to_pairs(self) -> List[Tuple[int, float]]:
        return [(int(t), float(w)) for t, w in zip(self.terms, self.weights)]

    def to_dict(self) -> Dict[int, float]:
        return dict(self.to_pairs())

    def __getitem__(self, term: int) -> float:
        """Вес термина (0 если термина нет)"""
        position = int(np.searchsorted(self.terms, term))
        if position < self.terms.size and int(self.terms[position]) == term:
            return float(self.weights[position])
        return 0.0

    def __len__(self) -> int:
        return int(self.terms.size)

    def __iter__(self) -> Iterator[Tuple[int, float]]:
        return iter(self.to_pairs())

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return np.array_equal(self.terms, other.terms) and np.array_equal(self.weights, other.weights)

    __hash__ = None

    def __repr__(self) -> str:
        body = ", ".join(f"{t}: {w:g}" for t, w in self.to_pairs())
        return f"SparseVector({{{body}}})"

    def l1(self) -> float:
        """Суммарная масса весов"""
        return float(self.weights.sum(dtype=np.float64))

    def max_term(self) -> int:
        """Максимальный term id (-1 для пустого вектора)"""
        return int(self.terms[-1]) if self.terms.size else -1


EMPTY_VECTOR = SparseVector()


@dataclass(frozen=True)
class TokenMatrix:
    """Упорядоченный список векторов токенов одного текста (может быть пустым)"""
    rows: Tuple[SparseVector, ...] = ()

    def __post_init__(self):
        if not isinstance(self.rows, tuple):
            object.__setattr__(self, 'rows', tuple(self.rows))

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[SparseVector]:
        return iter(self.rows)

    def __getitem__(self, position: int) -> SparseVector:
        return self.rows[position]

    def nnz(self) -> int:
        return sum(len(row) for row in self.rows)

    def max_term(self) -> int:
        return max((row.max_term() for row in self.rows), default=-1)

    def to_csr(self, vocab_size: Optional[int] = None, dtype=STORED_DTYPE) -> csr_matrix:
        """
        Складывает токены в CSR матрицу (одна строка на токен).

        Args:
            vocab_size: Число столбцов (по умолчанию max term + 1)
            dtype: Тип значений

        Returns:
            csr_matrix формы (len(rows), vocab_size)
        """
        width = vocab_size if vocab_size is not None else self.max_term() + 1
        lengths = np.fromiter((len(row) for row in self.rows), dtype=np.int64, count=len(self.rows))
        indptr = np.zeros(len(self.rows) + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        if self.rows:
            indices = np.concatenate([row.terms for row in self.rows]).astype(np.int32)
            data = np.concatenate([row.weights for row in self.rows]).astype(dtype)
        else:
            indices = np.zeros(0, dtype=np.int32)
            data = np.zeros(0, dtype=dtype)
        return csr_matrix((data, indices, indptr), shape=(len(self.rows), max(width, 0)))

    @classmethod
    def from_lists(cls, rows: Iterable[Iterable[Tuple[int, float]]]) -> "TokenMatrix":
        return cls(tuple(SparseVector.from_pairs(row) for row in rows))


@dataclass(frozen=True)
class PooledSummary:
    """Поэлементный максимум по токенам документа"""
    vector: SparseVector

    def __getitem__(self, term: int) -> float:
        return self.vector[term]

    def __len__(self) -> int:
        return len(self.vector)


def _concat(vectors: Sequence[SparseVector]) -> Tuple[np.ndarray, List[np.ndarray]]:
    terms = np.concatenate([v.terms for v in vectors]) if vectors else np.zeros(0, dtype=np.uint32)
    return terms, [v.weights for v in vectors]


def dot(a: SparseVector, b: SparseVector) -> float:
    """
    Скалярное произведение по общим терминам (0 при непересечении).

    Произведения суммируются в float64 в порядке возрастания term id,
    поэтому dot(a, b) == dot(b, a) побитово.
    """
    if not len(a) or not len(b):
        return 0.0
    _, ia, ib = np.intersect1d(a.terms, b.terms, assume_unique=True, return_indices=True)
    if ia.size == 0:
        return 0.0
    return float(np.dot(a.weights[ia].astype(np.float64), b.weights[ib].astype(np.float64)))


def max_pool(m: TokenMatrix) -> PooledSummary:
    """Сводка документа: для каждого термина максимум по всем токенам"""
    rows = [row for row in m.rows if len(row)]
    if not rows:
        return PooledSummary(EMPTY_VECTOR)
    if len(rows) == 1:
        return PooledSummary(rows[0])
    terms, weight_chunks = _concat(rows)
    weights = np.concatenate(weight_chunks)
    unique_terms, inverse = np.unique(terms, return_inverse=True)
    pooled = np.zeros(unique_terms.size, dtype=weights.dtype)
    np.maximum.at(pooled, inverse, weights)
    return PooledSummary(SparseVector._trusted(unique_terms, pooled))


def weighted_sum(vectors: Sequence[SparseVector], coeffs: Sequence[float]) -> SparseVector:
    """
    Σ coeffs[i] * vectors[i] в float64; нулевые результаты отбрасываются.

    Raises:
        ValueError: длины не совпадают или коэффициент отрицательный
    """
    if len(vectors) != len(coeffs):
        raise ValueError(f"{len(vectors)} векторов, но {len(coeffs)} коэффициентов")
    if any(c < 0 for c in coeffs):
        raise ValueError("коэффициенты должны быть неотрицательными")
    pairs = [(v, float(c)) for v, c in zip(vectors, coeffs) if len(v) and c > 0]
    if not pairs:
        return SparseVector(dtype=QUERY_DTYPE)
    terms = np.concatenate([v.terms for v, _ in pairs])
    weights = np.concatenate([v.weights.astype(np.float64) * c for v, c in pairs])
    unique_terms, inverse = np.unique(terms, return_inverse=True)
    summed = np.bincount(inverse, weights=weights, minlength=unique_terms.size)
    keep = summed > 0
    return SparseVector._trusted(unique_terms[keep], summed[keep].astype(QUERY_DTYPE))


def sum_rows(m: TokenMatrix) -> SparseVector:
    """Поэлементная сумма токенов (float64)"""
    return weighted_sum(m.rows, [1.0] * len(m.rows))


def argmax_mask(v: SparseVector) -> SparseVector:
    """
    Оставляет единственный максимальный вес вектора.

    При равных весах выигрывает наименьший term id: terms отсортированы,
    а np.argmax возвращает первое вхождение максимума.
    """
    if not len(v):
        return SparseVector._trusted(v.terms, v.weights)
    position = int(np.argmax(v.weights))
    return SparseVector._trusted(v.terms[position:position + 1], v.weights[position:position + 1])
