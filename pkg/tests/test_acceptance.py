"""
Тренд effectiveness/efficiency на синтетической Zipf коллекции:
pruning по IDF ускоряет первую стадию, точный пересчет возвращает качество.
"""
import pytest

from evaluation import sweep
from slim_config import DEFAULT_IDF_GRID
from slim_index import PruneConfig, build, write_index
from synthetic_corpus import SynthSettings, generate


def sweep_collection(tmp_path, settings, k_values, final_k):
    collection = generate(settings, show_progress=False)
    index, store = build(collection.documents, collection.vocab_size, show_progress=False)
    write_index(index, store, tmp_path / "index")
    points = sweep(
        tmp_path / "index",
        collection.queries,
        collection.qrels,
        idf_thresholds=DEFAULT_IDF_GRID,
        k_values=k_values,
        final_k=final_k,
        show_progress=False,
    )
    unrefined = {p.idf_threshold: p for p in points if not p.refine}
    refined = {p.idf_threshold: p for p in points if p.refine}
    return unrefined, refined


def test_pruning_trend_small(tmp_path):
    settings = SynthSettings(num_docs=5000, vocab_size=5000, num_queries=40, seed=11)
    unrefined, refined = sweep_collection(tmp_path, settings, k_values=(1000,), final_k=1000)
    low, high = min(DEFAULT_IDF_GRID), max(DEFAULT_IDF_GRID)

    counts = [unrefined[t].num_postings for t in sorted(unrefined)]
    assert counts == sorted(counts, reverse=True)
    assert counts[-1] < counts[0]

    assert unrefined[high].mrr10 <= refined[high].mrr10
    refined_drop = refined[low].mrr10 - refined[high].mrr10
    unrefined_drop = unrefined[low].mrr10 - unrefined[high].mrr10
    assert refined_drop < unrefined_drop


@pytest.mark.slow
def test_pruning_trend_50k(tmp_path):
    settings = SynthSettings(num_docs=50000, vocab_size=30522, num_queries=50, seed=0)
    unrefined, refined = sweep_collection(tmp_path, settings, k_values=(4000,), final_k=1000)
    thresholds = sorted(unrefined)
    low, high = thresholds[0], thresholds[-1]

    latencies = [unrefined[t].stage1_latency_ms for t in thresholds]
    assert all(a > b for a, b in zip(latencies, latencies[1:]))

    refined_drop = refined[low].mrr10 - refined[high].mrr10
    unrefined_drop = unrefined[low].mrr10 - unrefined[high].mrr10
    assert refined_drop < unrefined_drop

    assert abs(refined[high].recall1000 - refined[low].recall1000) <= 0.02


def test_default_prune_config_is_sweep_endpoint():
    assert PruneConfig().idf_threshold == max(DEFAULT_IDF_GRID)
