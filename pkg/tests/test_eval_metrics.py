import math
import random

import pytest

from icr.errors import DataFormatError, MalformedRanking, UnknownQuery
from icr.eval_metrics import (
    all_recall_at_k,
    evaluate,
    load_qrels,
    load_run,
    ndcg_at_k,
    parse_listwise_ranking,
    recall_at_k,
    run_lines,
    success_rate,
    try_parse_listwise,
)


def _run(qid, *doc_ids):
    return {qid: [(d, float(len(doc_ids) - i)) for i, d in enumerate(doc_ids)]}


def test_ndcg_hand_cases():
    qrels = {"q": {"gold": 1}}
    assert ndcg_at_k(_run("q", "gold", "x", "y"), qrels, 10)["q"] == 1.0
    got = ndcg_at_k(_run("q", "x", "gold", "y"), qrels, 10)["q"]
    assert abs(got - 1.0 / math.log2(3)) <= 1e-12
    assert ndcg_at_k(_run("q", "x", "y"), qrels, 10)["q"] == 0.0
    # no relevant docs at all: judged but zero-graded -> 0.0, still reported
    assert ndcg_at_k(_run("q", "x"), {"q": {"x": 0}}, 10)["q"] == 0.0


def test_ndcg_ideal_uses_all_judged_docs():
    # the run only retrieved one of the two relevant docs; even though the
    # retrieved part is perfectly sorted, the ideal ranking has both
    qrels = {"q": {"a": 2, "b": 2}}
    got = ndcg_at_k(_run("q", "a", "x", "y"), qrels, 10)["q"]
    ideal = 2 / math.log2(2) + 2 / math.log2(3)
    assert abs(got - (2 / math.log2(2)) / ideal) <= 1e-12
    assert got < 1.0


def test_ndcg_respects_cutoff():
    qrels = {"q": {"gold": 1}}
    run = _run("q", "x1", "x2", "gold")
    assert ndcg_at_k(run, qrels, 2)["q"] == 0.0
    assert ndcg_at_k(run, qrels, 3)["q"] > 0.0


def test_recall_hand_examples():
    qrels = {"q": {"g1": 1, "g2": 1}}
    assert recall_at_k(_run("q", "g1", "x", "g2", "y", "z"), qrels, 5)["q"] == 1.0
    assert recall_at_k(_run("q", "g1", "x", "g2"), qrels, 2)["q"] == 0.5
    qrels3 = {"q": {"g1": 1, "g2": 1, "g3": 1}}
    run = _run("q", "g1", "x", "g2", "y", "z")
    assert recall_at_k(run, qrels3, 5)["q"] == pytest.approx(2 / 3)


def test_recall_skips_zero_relevant_queries():
    qrels = {"q": {"x": 0}, "r": {"gold": 1}}
    run = {**_run("q", "x"), **_run("r", "gold")}
    out = recall_at_k(run, qrels, 5)
    assert "q" not in out and out["r"] == 1.0
    assert "q" not in all_recall_at_k(run, qrels, 5)


def test_all_recall_cases():
    qrels = {"q": {"g1": 1, "g2": 1}}
    assert all_recall_at_k(_run("q", "g1", "g2", "x"), qrels, 5)["q"] == 1
    assert all_recall_at_k(_run("q", "g1", "x", "y", "z", "w", "g2"), qrels, 5)["q"] == 0
    # all_recall = 1 implies recall = 1
    run = _run("q", "g2", "g1")
    if all_recall_at_k(run, qrels, 2)["q"] == 1:
        assert recall_at_k(run, qrels, 2)["q"] == 1.0


def test_unknown_query():
    with pytest.raises(UnknownQuery):
        ndcg_at_k(_run("mystery", "a"), {"q": {"a": 1}}, 10)
    with pytest.raises(ValueError):
        ndcg_at_k(_run("q", "a"), {"q": {"a": 1}}, 0)


def test_parse_listwise_valid_forms():
    assert parse_listwise_ranking("[1] > [3] > [2]", 3) == [1, 3, 2]
    assert parse_listwise_ranking("1] > [3] > [2]", 3) == [1, 3, 2]  # primed "["
    assert parse_listwise_ranking("  [ 2 ]  >  [ 1 ] ", 2) == [2, 1]
    assert parse_listwise_ranking("[1]", 1) == [1]


def test_parse_listwise_rejections():
    for text in (
        "the ranking is unclear",
        "[2] > [1]",            # incomplete for n=3
        "[1] > [2] > [2]",      # duplicate
        "[1] > [2] > [4]",      # out of range
        "[1] > [2] > [3] done", # trailing junk
        "[1], [2], [3]",        # wrong separator
        "",
    ):
        with pytest.raises(MalformedRanking):
            parse_listwise_ranking(text, 3)
    assert try_parse_listwise("[2] > [1]", 3) is None
    assert try_parse_listwise("[2] > [1]", 2) == [2, 1]


def test_success_rate():
    assert success_rate([[1], [1], None, [1]]) == 0.75
    assert success_rate([[1, 2]]) == 1.0
    assert success_rate([None, None]) == 0.0
    with pytest.raises(ValueError):
        success_rate([])


def test_micro_macro_aggregation():
    run = {
        "a1": [("g", 1.0), ("x", 0.5)],
        "a2": [("x", 1.0), ("g", 0.5)],
        "b1": [("g", 1.0), ("x", 0.5)],
    }
    qrels = {q: {"g": 1} for q in run}
    tasks = {"a1": "A", "a2": "A", "b1": "B"}
    report = evaluate(run, qrels, ndcg_ks=(10,), recall_ks=(1,), all_recall_ks=(1,), task_of=tasks)
    ndcg2 = 1.0 / math.log2(3)
    micro = (1.0 + ndcg2 + 1.0) / 3
    macro = ((1.0 + ndcg2) / 2 + 1.0) / 2
    assert report.micro("ndcg@10") == pytest.approx(micro)
    assert report.macro("ndcg@10") == pytest.approx(macro)
    assert report.task_means("ndcg@10") == {
        "A": pytest.approx((1.0 + ndcg2) / 2),
        "B": 1.0,
    }
    # equal task sizes: micro equals macro
    report2 = evaluate(
        {q: run[q] for q in ("a1", "b1")},
        qrels,
        task_of={"a1": "A", "b1": "B"},
    )
    assert report2.micro("ndcg@10") == pytest.approx(report2.macro("ndcg@10"))
    as_dict = report.as_dict()
    assert set(as_dict) == {"metrics", "per_query", "task_means", "micro", "macro"}


def test_evaluate_rejects_empty_run():
    with pytest.raises(DataFormatError):
        evaluate({}, {"q": {"a": 1}})


def test_qrels_loader(tmp_path):
    p = tmp_path / "qrels.tsv"
    p.write_text("q1\t0\td1\t2\nq1\td2\t0\nq2 0 d9 1\n")
    qrels = load_qrels(p)
    assert qrels == {"q1": {"d1": 2, "d2": 0}, "q2": {"d9": 1}}
    bad = tmp_path / "bad.tsv"
    bad.write_text("q1 0 d1 two\n")
    with pytest.raises(DataFormatError) as err:
        load_qrels(bad)
    assert ":1:" in str(err.value)
    bad.write_text("q1 0 d1 -2\n")
    with pytest.raises(DataFormatError):
        load_qrels(bad)
    bad.write_text("q1 d1\n")
    with pytest.raises(DataFormatError):
        load_qrels(bad)


def test_run_loader(tmp_path):
    p = tmp_path / "run.txt"
    p.write_text("q1 Q0 d2 1 0.9 tag\nq1 Q0 d1 2 0.1 tag\n")
    run = load_run(p)
    assert run == {"q1": [("d2", 0.9), ("d1", 0.1)]}
    p.write_text("q1 Q0 d2 1 0.9 tag\nq1 Q0 d2 2 0.1 tag\n")
    with pytest.raises(DataFormatError) as err:
        load_run(p)
    assert ":2:" in str(err.value)
    p.write_text("")
    with pytest.raises(DataFormatError):
        load_run(p)


def test_run_lines_format():
    lines = run_lines("q7", [("a", 1.25), ("b", -0.5)], "tag")
    assert lines == ["q7 Q0 a 1 1.250000 tag", "q7 Q0 b 2 -0.500000 tag"]


def _brute_ndcg(ranked, grades, k):
    dcg = 0.0
    for i, d in enumerate(ranked[:k], start=1):
        g = grades.get(d, 0)
        if g:
            dcg += g / math.log2(i + 1)
    ideal = sorted(grades.values(), reverse=True)[:k]
    idcg = 0.0
    for i, g in enumerate(ideal, start=1):
        if g:
            idcg += g / math.log2(i + 1)
    return dcg / idcg if idcg > 0 else 0.0


def test_random_instances_match_brute_force():
    rng = random.Random(17)
    for trial in range(150):
        n = rng.randint(1, 10)
        doc_ids = [f"d{i}" for i in range(n)]
        grades = {d: rng.choice([0, 0, 1, 2, 3]) for d in doc_ids}
        ranked = doc_ids[:]
        rng.shuffle(ranked)
        run = {"q": [(d, float(n - i)) for i, d in enumerate(ranked)]}
        qrels = {"q": grades}
        k = rng.randint(1, 12)
        assert ndcg_at_k(run, qrels, k)["q"] == _brute_ndcg(ranked, grades, k)
        rel = {d for d, g in grades.items() if g > 0}
        if rel:
            top = set(ranked[:k])
            assert recall_at_k(run, qrels, k)["q"] == len(rel & top) / len(rel)
            assert all_recall_at_k(run, qrels, k)["q"] == (1 if rel <= top else 0)
        # sorting by true grade always achieves nDCG 1.0 when anything is relevant
        by_grade = sorted(doc_ids, key=lambda d: -grades[d])
        perfect = {"q": [(d, float(n - i)) for i, d in enumerate(by_grade)]}
        if rel:
            assert ndcg_at_k(perfect, qrels, max(n, 1))["q"] == pytest.approx(1.0)
