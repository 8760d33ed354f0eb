"""Ranking metrics, TREC-format I/O, and listwise-output parsing.

Metrics use linear nDCG gain (gain = grade) with a log2(i+1) discount,
the ndcg_cut convention of trec_eval; this is the only supported variant.
Queries with no relevant documents are skipped by the recall-type means
and scored 0.0 by nDCG (they still need at least one judged document,
otherwise the query is unknown to the qrels and that is an error).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .errors import DataFormatError, MalformedRanking, UnknownQuery

# run: qid -> ordered [(doc_id, score), ...]; qrels: qid -> {doc_id: grade}
Run = dict[str, list[tuple[str, float]]]
Qrels = dict[str, dict[str, int]]


def _require_known(run: Run, qrels: Qrels) -> None:
    for qid in run:
        if qid not in qrels:
            raise UnknownQuery(qid)


def _relevant(grades: Mapping[str, int]) -> set[str]:
    return {d for d, g in grades.items() if g > 0}


def ndcg_at_k(run: Run, qrels: Qrels, k: int = 10) -> dict[str, float]:
    """Per-query nDCG@k; 0.0 when the query has no relevant document."""
    if k < 1:
        raise ValueError("k must be >= 1")
    _require_known(run, qrels)
    out = {}
    for qid, ranked in run.items():
        grades = qrels[qid]
        dcg = 0.0
        for i, (doc_id, _score) in enumerate(ranked[:k], start=1):
            g = grades.get(doc_id, 0)
            if g:
                dcg += g / math.log2(i + 1)
        ideal = sorted(grades.values(), reverse=True)
        idcg = sum(
            g / math.log2(i + 1) for i, g in enumerate(ideal[:k], start=1) if g
        )
        out[qid] = dcg / idcg if idcg > 0.0 else 0.0
    return out


def recall_at_k(run: Run, qrels: Qrels, k: int) -> dict[str, float]:
    """Per-query fraction of relevant docs in the top k.

    Queries with no relevant document are omitted (recall is undefined
    there), which also keeps them out of any mean taken over the result.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    _require_known(run, qrels)
    out = {}
    for qid, ranked in run.items():
        rel = _relevant(qrels[qid])
        if not rel:
            continue
        top = {doc_id for doc_id, _ in ranked[:k]}
        out[qid] = len(rel & top) / len(rel)
    return out


def all_recall_at_k(run: Run, qrels: Qrels, k: int) -> dict[str, int]:
    """Per-query indicator: 1 iff every relevant doc is in the top k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    _require_known(run, qrels)
    out = {}
    for qid, ranked in run.items():
        rel = _relevant(qrels[qid])
        if not rel:
            continue
        top = {doc_id for doc_id, _ in ranked[:k]}
        out[qid] = 1 if rel <= top else 0
    return out


# The generation prompt primes the reply with "[", so the first identifier
# may arrive without its opening bracket.
_LISTWISE = re.compile(
    r"\s*\[?\s*\d+\s*\](?:\s*>\s*\[\s*\d+\s*\])*\s*"
)


def parse_listwise_ranking(text: str, n: int) -> list[int]:
    """Parse "[1] > [3] > [2]" into [1, 3, 2].

    Valid only when the identifiers form a permutation of 1..n; anything
    else (free text, duplicates, missing items, trailing junk) raises
    MalformedRanking, which callers count toward the failure rate and
    answer with the retriever's original order.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not _LISTWISE.fullmatch(text):
        raise MalformedRanking(f"unparseable ranking: {text[:60]!r}")
    ids = [int(m) for m in re.findall(r"\d+", text)]
    if sorted(ids) != list(range(1, n + 1)):
        raise MalformedRanking(f"ids {ids} are not a permutation of 1..{n}")
    return ids


def try_parse_listwise(text: str, n: int) -> Optional[list[int]]:
    try:
        return parse_listwise_ranking(text, n)
    except MalformedRanking:
        return None


def success_rate(parse_results: Sequence[Optional[list[int]]]) -> float:
    """Fraction of parse outcomes that produced a valid ranking."""
    if not parse_results:
        raise ValueError("need at least one parse result")
    ok = sum(1 for r in parse_results if r is not None)
    return ok / len(parse_results)


@dataclass
class MetricReport:
    """Per-query values plus task, micro and macro aggregates.

    micro = mean over all queries pooled; macro = unweighted mean of the
    per-task means (numbers reported per averaging style must be read
    with that in mind).
    """

    metrics: tuple[str, ...]
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)
    task_of: dict[str, str] = field(default_factory=dict)

    def task_means(self, metric: str) -> dict[str, float]:
        buckets: dict[str, list[float]] = {}
        for qid, value in self.per_query[metric].items():
            buckets.setdefault(self.task_of.get(qid, "default"), []).append(value)
        return {t: sum(v) / len(v) for t, v in sorted(buckets.items())}

    def micro(self, metric: str) -> float:
        vals = list(self.per_query[metric].values())
        return sum(vals) / len(vals) if vals else 0.0

    def macro(self, metric: str) -> float:
        means = self.task_means(metric)
        return sum(means.values()) / len(means) if means else 0.0

    def as_dict(self) -> dict:
        return {
            "metrics": list(self.metrics),
            "per_query": {m: dict(sorted(v.items())) for m, v in self.per_query.items()},
            "task_means": {m: self.task_means(m) for m in self.metrics},
            "micro": {m: self.micro(m) for m in self.metrics},
            "macro": {m: self.macro(m) for m in self.metrics},
        }


def evaluate(
    run: Run,
    qrels: Qrels,
    ndcg_ks: Sequence[int] = (10,),
    recall_ks: Sequence[int] = (2, 5),
    all_recall_ks: Sequence[int] = (5,),
    task_of: Optional[Mapping[str, str]] = None,
) -> MetricReport:
    if not run:
        raise DataFormatError("empty run")
    names: list[str] = []
    report = MetricReport(metrics=(), task_of=dict(task_of or {}))
    for k in ndcg_ks:
        name = f"ndcg@{k}"
        names.append(name)
        report.per_query[name] = ndcg_at_k(run, qrels, k)
    for k in recall_ks:
        name = f"recall@{k}"
        names.append(name)
        report.per_query[name] = recall_at_k(run, qrels, k)
    for k in all_recall_ks:
        name = f"all_recall@{k}"
        names.append(name)
        report.per_query[name] = {
            q: float(v) for q, v in all_recall_at_k(run, qrels, k).items()
        }
    report.metrics = tuple(names)
    return report


def load_qrels(path) -> Qrels:
    """TREC qrels: qid [iter] docid grade; the 3-column form is accepted."""
    qrels: Qrels = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) == 4:
                qid, _iteration, doc_id, grade_s = parts
            elif len(parts) == 3:
                qid, doc_id, grade_s = parts
            else:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 3 or 4 fields, got {len(parts)}"
                )
            try:
                grade = int(grade_s)
            except ValueError:
                raise DataFormatError(
                    f"{path}:{lineno}: grade {grade_s!r} is not an integer"
                ) from None
            if grade < 0:
                raise DataFormatError(f"{path}:{lineno}: negative grade {grade}")
            qrels.setdefault(qid, {})[doc_id] = grade
    if not qrels:
        raise DataFormatError(f"{path}: no qrels lines")
    return qrels


def load_run(path) -> Run:
    """TREC run lines: qid Q0 docid rank score tag."""
    run: Run = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 6 fields, got {len(parts)}"
                )
            qid, _q0, doc_id, _rank, score_s, _tag = parts
            try:
                score = float(score_s)
            except ValueError:
                raise DataFormatError(
                    f"{path}:{lineno}: score {score_s!r} is not a number"
                ) from None
            bucket = run.setdefault(qid, [])
            if any(d == doc_id for d, _ in bucket):
                raise DataFormatError(
                    f"{path}:{lineno}: duplicate doc {doc_id!r} for query {qid!r}"
                )
            bucket.append((doc_id, score))
    if not run:
        raise DataFormatError(f"{path}: no run lines")
    return run


def run_lines(qid: str, ranked: Sequence[tuple[str, float]], tag: str) -> list[str]:
    return [
        f"{qid} Q0 {doc_id} {i} {score:.6f} {tag}"
        for i, (doc_id, score) in enumerate(ranked, start=1)
    ]
