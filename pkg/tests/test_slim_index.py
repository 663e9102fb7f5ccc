import json

import numpy as np
import pytest

from conftest import A, B, C, dense, random_collection
from corpus_reader import DocumentRecord
from slim_index import (
    DATA_FILES,
    MANIFEST_NAME,
    IndexChecksumError,
    IndexFormatError,
    IndexTruncatedError,
    IndexVersionError,
    InvertedIndex,
    MemoryBudgetExceeded,
    MissingManifestError,
    Posting,
    PruneConfig,
    _canonical_manifest_bytes,
    _crc32,
    _posting_list,
    build,
    postings_from_store,
    prune,
    read_index,
    write_index,
)
from sparse_model import TokenMatrix


def make_index(lists, num_docs, vocab_size=10):
    postings = {
        term: _posting_list(np.array([d for d, _ in pairs]), np.array([w for _, w in pairs]))
        for term, pairs in lists.items()
    }
    return InvertedIndex(postings=postings, doc_table=tuple(f"d{n}" for n in range(num_docs)),
                         num_docs=num_docs, vocab_size=vocab_size)


def as_lists(index):
    return {term: list(plist) for term, plist in index.postings.items()}


class TestBuild:
    def test_two_doc_example(self, two_doc_corpus):
        index, store = build(two_doc_corpus, vocab_size=5, show_progress=False)
        assert as_lists(index) == {
            A: [Posting(0, 1.0), Posting(1, 2.0)],
            B: [Posting(1, 1.0)],
        }
        assert index.doc_table == ("d1", "d2")
        assert store.matrix(1) == two_doc_corpus[1].matrix

    def test_empty_corpus(self):
        index, store = build([], vocab_size=5, show_progress=False)
        assert index.num_docs == 0
        assert index.postings == {}
        assert store.num_docs == 0

    def test_empty_document_occupies_ordinal(self):
        corpus = [
            DocumentRecord("empty", TokenMatrix()),
            DocumentRecord("full", TokenMatrix.from_lists([[(C, 0.7)]])),
        ]
        index, store = build(corpus, vocab_size=5, show_progress=False)
        assert index.num_docs == 2
        assert as_lists(index) == {C: [Posting(1, np.float32(0.7))]}
        assert len(store.matrix(0)) == 0

    def test_impacts_match_dense_max(self):
        documents, _ = random_collection(seed=4, num_docs=200, vocab_size=60)
        index, _ = build(documents, vocab_size=60, show_progress=False)
        expected = np.stack([
            dense(doc.matrix, 60).max(axis=0) if len(doc.matrix) else np.zeros(60)
            for doc in documents
        ])
        got = np.zeros_like(expected)
        for term, plist in index.postings.items():
            got[plist.docs.astype(int), term] = plist.impacts
            assert np.all(np.diff(plist.docs.astype(np.int64)) > 0)
        np.testing.assert_array_equal(got, expected)

    def test_postings_from_store_matches_build(self):
        documents, _ = random_collection(seed=9, num_docs=150, vocab_size=40)
        index, store = build(documents, vocab_size=40, show_progress=False)
        assert postings_from_store(store, index.doc_table) == index

    def test_memory_budget(self, two_doc_corpus):
        with pytest.raises(MemoryBudgetExceeded):
            build(two_doc_corpus, vocab_size=5, memory_budget_mb=0, show_progress=False)

    def test_store_rejects_unknown_ordinal(self, two_doc_corpus):
        _, store = build(two_doc_corpus, vocab_size=5, show_progress=False)
        with pytest.raises(KeyError):
            store.matrix(2)
        assert 1 in store and 2 not in store


class TestPrune:
    def test_weight_threshold(self):
        index = make_index({A: [(0, 0.3), (1, 2.0)]}, num_docs=2)
        pruned = prune(index, PruneConfig(weight_threshold=0.5, idf_threshold=0.0))
        assert as_lists(pruned) == {A: [Posting(1, 2.0)]}
        assert as_lists(index) == {A: [Posting(0, np.float32(0.3)), Posting(1, 2.0)]}

    def test_idf_threshold_removes_common_term(self):
        index = make_index({A: [(d, 1.0) for d in range(90)], B: [(0, 1.0)]}, num_docs=100)
        pruned = prune(index, PruneConfig(weight_threshold=0.0, idf_threshold=3.0))
        assert A not in pruned.postings
        assert B in pruned.postings

    def test_idf_uses_df_after_weight_pruning(self):
        # 90 postings, только 3 переживают порог веса: ln(100/3) > 3
        pairs = [(d, 1.0 if d < 3 else 0.1) for d in range(90)]
        index = make_index({A: pairs}, num_docs=100)
        pruned = prune(index, PruneConfig(weight_threshold=0.5, idf_threshold=3.0))
        assert len(pruned.postings[A]) == 3

    def test_disabled_is_identity(self):
        documents, _ = random_collection(seed=2)
        index, _ = build(documents, vocab_size=40, show_progress=False)
        assert prune(index, PruneConfig.disabled()) == index

    def test_records_applied_thresholds(self):
        index = make_index({A: [(0, 1.0)]}, num_docs=1)
        once = prune(index, PruneConfig(weight_threshold=0.5, idf_threshold=0.0))
        twice = prune(once, PruneConfig(weight_threshold=0.0, idf_threshold=1.0))
        assert twice.prune_config == PruneConfig(weight_threshold=0.5, idf_threshold=1.0)

    def test_monotone_in_idf_threshold(self):
        documents, _ = random_collection(seed=8, num_docs=300, vocab_size=50)
        index, _ = build(documents, vocab_size=50, show_progress=False)
        counts = [
            prune(index, PruneConfig(weight_threshold=0.5, idf_threshold=t)).total_postings()
            for t in (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
        ]
        assert counts == sorted(counts, reverse=True)

    def test_monotone_in_weight_threshold_without_idf(self):
        documents, _ = random_collection(seed=8, num_docs=300, vocab_size=50)
        index, _ = build(documents, vocab_size=50, show_progress=False)
        counts = [
            prune(index, PruneConfig(weight_threshold=w, idf_threshold=0.0)).total_postings()
            for w in (0.0, 0.25, 0.5, 1.0, 2.0)
        ]
        assert counts == sorted(counts, reverse=True)

    def test_rejects_negative_threshold(self):
        with pytest.raises(ValueError):
            PruneConfig(weight_threshold=-0.1)


class TestPersistence:
    def test_round_trip_two_doc_index(self, tmp_path, two_doc_corpus):
        index, store = build(two_doc_corpus, vocab_size=5, show_progress=False)
        write_index(index, store, tmp_path / "idx")
        loaded_index, loaded_store = read_index(tmp_path / "idx")
        assert loaded_index == index
        assert loaded_store == store

    @pytest.mark.parametrize("seed", range(100))
    def test_random_round_trips_are_bit_identical(self, tmp_path, seed):
        documents, _ = random_collection(seed=seed, num_docs=25, vocab_size=30)
        index, store = build(documents, vocab_size=30, show_progress=False)
        if seed % 2:
            index = prune(index, PruneConfig(weight_threshold=0.5, idf_threshold=0.5))
        write_index(index, store, tmp_path / "a")
        loaded_index, loaded_store = read_index(tmp_path / "a")
        assert loaded_index == index
        assert loaded_store == store

        write_index(loaded_index, loaded_store, tmp_path / "b")
        for name in DATA_FILES + (MANIFEST_NAME,):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_empty_dir_is_missing_manifest(self, tmp_path):
        with pytest.raises(MissingManifestError, match="missing manifest"):
            read_index(tmp_path)

    @pytest.mark.parametrize("name", DATA_FILES + (MANIFEST_NAME,))
    def test_single_byte_corruption_is_detected(self, tmp_path, name):
        documents, _ = random_collection(seed=13, num_docs=30, vocab_size=30)
        index, store = build(documents, vocab_size=30, show_progress=False)
        write_index(index, store, tmp_path)
        path = tmp_path / name
        original = path.read_bytes()
        rng = np.random.default_rng(1)
        for position in rng.choice(len(original), size=min(20, len(original)), replace=False):
            corrupted = bytearray(original)
            corrupted[position] ^= 0xFF
            path.write_bytes(bytes(corrupted))
            with pytest.raises(IndexFormatError):
                read_index(tmp_path)
        path.write_bytes(original)
        read_index(tmp_path)

    def test_flipped_postings_byte_is_checksum_error(self, tmp_path, two_doc_corpus):
        index, store = build(two_doc_corpus, vocab_size=5, show_progress=False)
        write_index(index, store, tmp_path)
        path = tmp_path / "postings.bin"
        data = bytearray(path.read_bytes())
        data[5] ^= 0x01
        path.write_bytes(bytes(data))
        with pytest.raises(IndexChecksumError, match="checksum mismatch"):
            read_index(tmp_path)

    def test_truncated_file(self, tmp_path, two_doc_corpus):
        index, store = build(two_doc_corpus, vocab_size=5, show_progress=False)
        write_index(index, store, tmp_path)
        path = tmp_path / "docstore.bin"
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(IndexTruncatedError):
            read_index(tmp_path)

    def test_version_mismatch(self, tmp_path, two_doc_corpus):
        index, store = build(two_doc_corpus, vocab_size=5, show_progress=False)
        write_index(index, store, tmp_path)
        manifest_path = tmp_path / MANIFEST_NAME
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        manifest["version"] = 99
        manifest["checksum"] = _crc32(_canonical_manifest_bytes(manifest))
        manifest_path.write_text(json.dumps(manifest), encoding="utf-8")
        with pytest.raises(IndexVersionError):
            read_index(tmp_path)
