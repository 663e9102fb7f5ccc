import numpy as np
import pytest

from corpus_reader import read_corpus, read_queries
from evaluation import read_qrels
from slim_index import build
from slim_search import oracle_search
from synthetic_corpus import SynthSettings, generate, rarity_factors, write_collection, zipf_probabilities


@pytest.fixture(scope="module")
def collection():
    return generate(SynthSettings(num_docs=200, vocab_size=500, num_queries=12, seed=5), show_progress=False)


def test_zipf_probabilities():
    p = zipf_probabilities(100, 1.1)
    assert p.sum() == pytest.approx(1.0)
    assert np.all(np.diff(p) < 0)


def test_sizes(collection):
    assert len(collection.documents) == 200
    assert len(collection.queries) == 12
    assert len({d.doc_id for d in collection.documents}) == 200
    for doc in collection.documents:
        assert 8 <= len(doc.matrix) <= 64
        assert doc.matrix.max_term() < 500
    for query in collection.queries:
        assert 2 <= len(query.matrix) <= 9


def test_rarity_factors():
    p = zipf_probabilities(1000, 1.1)
    factors = rarity_factors(p, 1.5)
    assert factors[0] == pytest.approx(1.0)
    assert np.all(np.diff(factors) > 0)
    assert np.all(rarity_factors(p, 0.0) == 1.0)


def test_rare_words_outweigh_common_ones():
    collection = generate(SynthSettings(num_docs=5, vocab_size=500, num_queries=0, rarity_power=0.0, seed=2),
                          show_progress=False)
    for doc in collection.documents:
        for row in doc.matrix:
            assert row.weights.max() <= np.float32(3.0)

    scaled = generate(SynthSettings(num_docs=5, vocab_size=500, num_queries=0, seed=2), show_progress=False)
    for plain, weighted in zip(collection.documents, scaled.documents):
        for plain_row, weighted_row in zip(plain.matrix, weighted.matrix):
            assert np.array_equal(plain_row.terms, weighted_row.terms)
            assert np.all(weighted_row.weights >= plain_row.weights)


def test_query_words_are_distinct_source_words(collection):
    for query in collection.queries:
        picked = query.matrix.rows[:-1]
        for i, row in enumerate(picked):
            assert all(row != other for other in picked[i + 1:])


def test_deterministic(collection):
    again = generate(SynthSettings(num_docs=200, vocab_size=500, num_queries=12, seed=5), show_progress=False)
    assert again.documents == collection.documents
    assert again.queries == collection.queries
    assert again.qrels == collection.qrels


def test_seed_changes_collection(collection):
    other = generate(SynthSettings(num_docs=200, vocab_size=500, num_queries=12, seed=6), show_progress=False)
    assert other.documents != collection.documents


def test_graded_judgments(collection):
    _, store = build(collection.documents, collection.vocab_size, show_progress=False)
    doc_table = [d.doc_id for d in collection.documents]
    for query in collection.queries:
        grades = collection.qrels.grades(query.query_id)
        assert sorted(grades.values()).count(2) == 1
        assert len(grades) <= 1 + 3
        # лучший по точному скору документ всегда оценен
        top = oracle_search(store, query.matrix, 1, doc_table)[0]
        assert grades.get(top.doc_id, 0) > 0


def test_no_judged_depth():
    collection = generate(SynthSettings(num_docs=20, num_queries=3, judged_depth=0, seed=1), show_progress=False)
    for query in collection.queries:
        assert list(collection.qrels.grades(query.query_id).values()) == [2]


def test_write_collection(tmp_path, collection):
    files = write_collection(collection, tmp_path / "synth")
    assert list(read_corpus(files['corpus'])) == collection.documents
    assert list(read_queries(files['queries'], collection.vocab_size)) == collection.queries
    assert read_qrels(files['qrels']).judgments == collection.qrels.judgments


@pytest.mark.parametrize("field, value", [
    ("num_docs", 0),
    ("zipf_exponent", 0.0),
    ("min_doc_words", 0),
    ("max_query_words", 1),
    ("num_words", 1),
    ("rarity_power", -0.5),
    ("judged_depth", -1),
])
def test_invalid_settings(field, value):
    settings = SynthSettings(**{field: value})
    with pytest.raises(ValueError):
        settings.validate()
