"""
Общие фикстуры тестов: случайные корпуса и плотные numpy оракулы.
"""
import sys
from pathlib import Path
from typing import List, Tuple

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from corpus_reader import DocumentRecord, QueryRecord  # noqa: E402
from sparse_model import SparseVector, TokenMatrix  # noqa: E402

# Буквенные термины из примеров
A, B, C = 0, 1, 2


def random_matrix(
    rng: np.random.Generator,
    vocab_size: int,
    max_tokens: int,
    max_terms: int = 6,
    min_tokens: int = 0
) -> TokenMatrix:
    """Случайная матрица токенов; веса из небольшого набора, чтобы были равенства"""
    rows = []
    for _ in range(int(rng.integers(min_tokens, max_tokens + 1))):
        nnz = int(rng.integers(0, min(max_terms, vocab_size) + 1))
        terms = rng.choice(vocab_size, size=nnz, replace=False)
        if rng.random() < 0.3:
            weights = rng.choice([0.25, 0.5, 1.0, 2.0], size=nnz)
        else:
            weights = rng.uniform(0.05, 3.0, size=nnz)
        rows.append(SparseVector(terms, weights))
    return TokenMatrix(tuple(rows))


def random_collection(
    seed: int,
    num_docs: int = 60,
    vocab_size: int = 40,
    max_doc_tokens: int = 12,
    num_queries: int = 5,
    max_query_tokens: int = 6
) -> Tuple[List[DocumentRecord], List[QueryRecord]]:
    """Случайный корпус и запросы (пустые документы и токены допускаются)"""
    rng = np.random.default_rng(seed)
    documents = [
        DocumentRecord(f"d{n}", random_matrix(rng, vocab_size, max_doc_tokens))
        for n in range(num_docs)
    ]
    queries = [
        QueryRecord(f"q{n}", random_matrix(rng, vocab_size, max_query_tokens, min_tokens=1))
        for n in range(num_queries)
    ]
    return documents, queries


def dense(matrix: TokenMatrix, vocab_size: int) -> np.ndarray:
    """Плотная float64 матрица (токены × словарь)"""
    out = np.zeros((len(matrix), vocab_size), dtype=np.float64)
    for i, row in enumerate(matrix.rows):
        out[i, row.terms.astype(np.int64)] = row.weights.astype(np.float64)
    return out


def dense_exact_score(q: TokenMatrix, d: TokenMatrix, vocab_size: int) -> float:
    """Σ_i max_j q_i · d_j плотными массивами"""
    if len(q) == 0 or len(d) == 0:
        return 0.0
    return float((dense(q, vocab_size) @ dense(d, vocab_size).T).max(axis=1).sum())


def dense_bounds(q: TokenMatrix, d: TokenMatrix, vocab_size: int) -> Tuple[float, float]:
    """(lower, upper) плотными массивами"""
    if len(q) == 0 or len(d) == 0:
        return 0.0, 0.0
    q_dense = dense(q, vocab_size)
    pooled = dense(d, vocab_size).max(axis=0)
    masks = np.zeros_like(q_dense)
    for i, row in enumerate(q_dense):
        if row.max() > 0:
            masks[i, int(np.argmax(row))] = row.max()
    return float(masks.sum(axis=0) @ pooled), float(q_dense.sum(axis=0) @ pooled)


@pytest.fixture
def make_collection():
    return random_collection


@pytest.fixture
def example_query() -> TokenMatrix:
    """q = [{A:1.0, B:0.5}, {B:2.0}]"""
    return TokenMatrix.from_lists([[(A, 1.0), (B, 0.5)], [(B, 2.0)]])


@pytest.fixture
def two_doc_corpus() -> List[DocumentRecord]:
    """d1 = [{A:1.0}], d2 = [{A:2.0}, {B:1.0}]"""
    return [
        DocumentRecord("d1", TokenMatrix.from_lists([[(A, 1.0)]])),
        DocumentRecord("d2", TokenMatrix.from_lists([[(A, 2.0)], [(B, 1.0)]])),
    ]
