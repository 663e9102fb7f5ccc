"""
Синтетические коллекции для тестов и sweep без внешних данных.

Слова документов берутся из распределения Зипфа над словарем "w0 w1 ...",
каждое слово кодируется toy_encode. Веса слова умножаются на множитель
редкости (-ln p слова, нормированный на самое частое слово, в степени
rarity_power): как у обученного sparse энкодера, частые слова весят
меньше редких. Запрос - несколько разных слов из документа-источника плюс
одно случайное слово. Оценки релевантности:
    - документ-источник: grade 2
    - следующие по точному скору документы (до judged_depth): grade 1

Все детерминировано при фиксированном seed.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
from tqdm import tqdm

from corpus_reader import (
    CorpusManifest,
    DocumentRecord,
    QueryRecord,
    default_manifest_path,
    toy_encode,
    write_manifest,
    write_records,
)
from evaluation import Qrels, write_qrels
from slim_index import build
from slim_search import oracle_search
from sparse_model import SparseVector, TokenMatrix

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CORPUS_NAME = "corpus.jsonl"
QUERIES_NAME = "queries.jsonl"
QRELS_NAME = "qrels.txt"


@dataclass
class SynthSettings:
    """Настройки синтетической коллекции"""
    num_docs: int = 1000
    vocab_size: int = 5000  # размер лексического словаря (term id)
    num_words: int = 20000  # размер словаря слов
    zipf_exponent: float = 1.1
    rarity_power: float = 1.5  # 0 - веса toy_encode без изменений
    min_doc_words: int = 8
    max_doc_words: int = 64
    num_queries: int = 50
    min_query_words: int = 4
    max_query_words: int = 8
    judged_depth: int = 3  # сколько документов после источника получают grade 1
    seed: int = 0

    def validate(self):
        """
        Проверяет настройки.

        Raises:
            ValueError: значение вне допустимого диапазона
        """
        if self.num_docs < 1:
            raise ValueError(f"num_docs должен быть >= 1, получено {self.num_docs}")
        if self.vocab_size < 1 or self.num_words < 2:
            raise ValueError("нужно vocab_size >= 1 и num_words >= 2")
        if self.zipf_exponent <= 0:
            raise ValueError(f"zipf_exponent должен быть > 0, получено {self.zipf_exponent}")
        if self.rarity_power < 0:
            raise ValueError(f"rarity_power должен быть >= 0, получено {self.rarity_power}")
        if not 1 <= self.min_doc_words <= self.max_doc_words:
            raise ValueError("нужно 1 <= min_doc_words <= max_doc_words")
        if not 1 <= self.min_query_words <= self.max_query_words:
            raise ValueError("нужно 1 <= min_query_words <= max_query_words")
        if self.num_queries < 0 or self.judged_depth < 0:
            raise ValueError("num_queries и judged_depth должны быть >= 0")


@dataclass
class SynthCollection:
    """Сгенерированная коллекция"""
    documents: List[DocumentRecord]
    queries: List[QueryRecord]
    qrels: Qrels
    vocab_size: int


def zipf_probabilities(num_words: int, exponent: float) -> np.ndarray:
    """p(rank) ∝ 1 / rank^exponent"""
    weights = 1.0 / np.power(np.arange(1, num_words + 1, dtype=np.float64), exponent)
    return weights / weights.sum()


def rarity_factors(probabilities: np.ndarray, power: float) -> np.ndarray:
    """Множитель весов слова: 1 для самого частого, растет с -ln p"""
    information = -np.log(probabilities)
    return np.power(information / information.min(), power)


class _WordEncoder:
    """toy_encode по одному слову с множителем редкости; векторы кешируются"""

    def __init__(self, vocab_size: int, factors: np.ndarray):
        self.vocab_size = vocab_size
        self.factors = factors
        self.cache: Dict[int, SparseVector] = {}

    def vector(self, word: int) -> SparseVector:
        vector = self.cache.get(word)
        if vector is None:
            (row,) = toy_encode(f"w{word}", self.vocab_size).rows
            vector = SparseVector(row.terms, row.weights.astype(np.float64) * self.factors[word])
            self.cache[word] = vector
        return vector

    def encode(self, words: np.ndarray) -> TokenMatrix:
        return TokenMatrix(tuple(self.vector(int(word)) for word in words))


def generate(settings: SynthSettings, show_progress: bool = True) -> SynthCollection:
    """
    Генерирует документы, запросы и qrels.

    Returns:
        SynthCollection
    """
    settings.validate()
    rng = np.random.default_rng(settings.seed)
    probabilities = zipf_probabilities(settings.num_words, settings.zipf_exponent)
    encoder = _WordEncoder(settings.vocab_size, rarity_factors(probabilities, settings.rarity_power))

    doc_words: List[np.ndarray] = []
    documents: List[DocumentRecord] = []
    for n in tqdm(range(settings.num_docs), desc="Документы", unit="doc", disable=None if show_progress else True):
        length = int(rng.integers(settings.min_doc_words, settings.max_doc_words + 1))
        words = rng.choice(settings.num_words, size=length, p=probabilities)
        doc_words.append(words)
        documents.append(DocumentRecord(doc_id=f"d{n}", matrix=encoder.encode(words)))

    sources: List[int] = []
    queries: List[QueryRecord] = []
    for n in range(settings.num_queries):
        source = int(rng.integers(settings.num_docs))
        distinct = np.unique(doc_words[source])
        length = int(rng.integers(settings.min_query_words, settings.max_query_words + 1))
        picked = rng.choice(distinct, size=min(length, distinct.size), replace=False)
        noise = rng.choice(settings.num_words, size=1, p=probabilities)
        matrix = encoder.encode(np.concatenate((picked, noise)))
        queries.append(QueryRecord(query_id=f"q{n}", matrix=matrix))
        sources.append(source)

    qrels = judge(documents, queries, sources, settings.vocab_size, settings.judged_depth)
    logger.info(
        f"[Synth] seed={settings.seed}: документов={len(documents)}, запросов={len(queries)}, "
        f"оценок={qrels.num_judgments()}"
    )
    return SynthCollection(documents=documents, queries=queries, qrels=qrels, vocab_size=settings.vocab_size)


def judge(
    documents: List[DocumentRecord],
    queries: List[QueryRecord],
    sources: List[int],
    vocab_size: int,
    judged_depth: int
) -> Qrels:
    """
    Оценки релевантности по точному скору.

    Документ-источник запроса - grade 2; лучшие по точному скору остальные
    документы с положительным скором (до judged_depth) - grade 1.
    """
    _, store = build(documents, vocab_size, show_progress=False)
    judgments: Dict[str, Dict[str, int]] = {}
    for query, source in zip(queries, sources):
        grades = {documents[source].doc_id: 2}
        if judged_depth:
            hits = oracle_search(store, query.matrix, judged_depth + 1)
            judged = [hit for hit in hits if hit.score.value > 0 and hit.ordinal != source][:judged_depth]
            for hit in judged:
                grades[documents[hit.ordinal].doc_id] = 1
        judgments[query.query_id] = grades
    return Qrels(judgments)


def write_collection(collection: SynthCollection, out_dir: PathLike) -> Dict[str, str]:
    """
    Сохраняет коллекцию: corpus.jsonl (+ манифест), queries.jsonl, qrels.txt.

    Returns:
        Пути записанных файлов
    """
    out_dir = Path(out_dir)
    corpus_path = out_dir / CORPUS_NAME
    manifest_path = default_manifest_path(corpus_path)
    queries_path = out_dir / QUERIES_NAME
    qrels_path = out_dir / QRELS_NAME

    write_records(corpus_path, collection.documents)
    write_manifest(manifest_path, CorpusManifest(vocab_size=collection.vocab_size, num_docs=len(collection.documents)))
    write_records(queries_path, collection.queries)
    write_qrels(qrels_path, collection.qrels)
    logger.info(f"[Synth] Коллекция сохранена: {out_dir}")
    return {
        'corpus': str(corpus_path),
        'manifest': str(manifest_path),
        'queries': str(queries_path),
        'qrels': str(qrels_path),
    }

