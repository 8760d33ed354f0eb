"""Command-line entry point.

Subcommands: rerank (score candidates into a TREC run file), layout-export
(write prompt layout JSON for external attention exporters), eval (metrics
on a run against qrels), viz (token-score heatmap HTML), validate (check
.icra dumps), bench (scaling benchmark). All randomness flows from
--seed; ICR_THREADS caps the per-query worker pool.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import complexity_bench, viz
from .attention_core import MODES, score_documents_detailed
from .backends import (
    DumpAttentionBackend,
    PlantedAttentionBackend,
    ToyAttentionBackend,
    mix_seed,
)
from .data import (
    docs_for_query,
    load_candidates,
    load_corpus,
    load_queries,
    load_tasks,
)
from .errors import DataFormatError, IcrError, IoFailure
from .eval_metrics import evaluate, load_qrels, load_run, run_lines
from .prompt_layout import (
    ORDER_MODES,
    STYLES,
    ModelProfile,
    build_calibration_layout,
    build_prompt,
    layout_to_dict,
)
from .tokenizers import WhitespaceTokenizer
from .toy_backend import ToyConfig


def _int_list(text: str) -> list[int]:
    try:
        values = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("k values must be positive")
    return values


def _workers(n_items: int) -> int:
    cap = os.environ.get("ICR_THREADS", "")
    limit = int(cap) if cap.isdigit() and int(cap) > 0 else 4
    return max(1, min(limit, n_items))


def _make_backend(args):
    if args.backend == "toy":
        return ToyAttentionBackend(
            ToyConfig(layers=args.layers, heads=args.heads, seed=args.seed)
        )
    if args.backend == "planted":
        return PlantedAttentionBackend(
            seed=args.seed,
            layers=args.layers,
            heads=args.heads,
            boost=args.boost,
            bias=args.bias,
            target_rank=args.planted_target_rank,
            bias_rank=args.planted_bias_rank,
        )
    if args.backend == "dump":
        if not args.dump_dir:
            raise DataFormatError("--backend dump requires --dump-dir")
        return DumpAttentionBackend(args.dump_dir)
    raise DataFormatError(f"unknown backend {args.backend!r}")


def _profile(args) -> ModelProfile:
    return ModelProfile(
        name=args.backend,
        layers=args.layers,
        heads=args.heads,
        tokenizer=WhitespaceTokenizer(),
    )


def _build_layouts(record, docs, profile, args):
    order_seed = (
        mix_seed(args.seed, record.qid) if args.order == "random" else None
    )
    layout = build_prompt(
        docs,
        record.query,
        profile,
        order_mode=args.order,
        order_seed=order_seed,
        max_doc_words=args.max_doc_words,
    )
    return layout, build_calibration_layout(layout, profile)


def _tokens_for(view, layout, doc_id: str):
    side = getattr(view, "doc_tokens", None)
    if isinstance(side, dict):
        return side.get(doc_id)
    if view is layout:
        return layout.doc_tokens(doc_id)
    s, e = view.doc_spans[doc_id]
    return [f"t{i}" for i in range(s, e)]


def cmd_rerank(args) -> int:
    corpus = load_corpus(args.corpus)
    records = load_queries(args.queries, style_override=args.style)
    candidates = load_candidates(args.candidates)
    backend = _make_backend(args)
    profile = _profile(args)
    need_cal = args.mode in ("full", "last_token_only")

    def one(record):
        if record.qid not in candidates:
            raise DataFormatError(f"no candidate list for query {record.qid!r}")
        docs = docs_for_query(corpus, candidates[record.qid], record.qid)
        layout, cal_layout = _build_layouts(record, docs, profile, args)
        view_q, view_c = backend.resolve_layouts(record.qid, layout, cal_layout)
        q_slice, c_slice = backend.slices_for(
            layout, cal_layout, need_cal, query_id=record.qid
        )
        detail = score_documents_detailed(
            view_q, view_c, q_slice, c_slice, mode=args.mode
        )
        ranked = [(e.doc_id, e.score) for e in detail.ranking.entries]
        by_doc = {ds.doc_id: ds for ds in detail.doc_scores}
        entry = {
            "qid": record.qid,
            "mode": args.mode,
            "ranking": [d for d, _ in ranked],
            "docs": {
                doc_id: {
                    "tokens": _tokens_for(view_q, layout, doc_id),
                    "scores": [float(s) for s in detail.token_scores.scores[doc_id]],
                    "score": by_doc[doc_id].score,
                    "kept": by_doc[doc_id].kept_token_count,
                    "dropped": by_doc[doc_id].dropped_token_count,
                }
                for doc_id in detail.token_scores.scores
            },
        }
        return run_lines(record.qid, ranked, args.tag), entry

    with ThreadPoolExecutor(max_workers=_workers(len(records))) as pool:
        results = list(pool.map(one, records))

    lines = [line for chunk, _ in results for line in chunk]
    try:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {args.out}: {exc}") from exc
    if args.scores_out:
        doc = {
            "schema_version": 1,
            "mode": args.mode,
            "seed": args.seed,
            "backend": args.backend,
            "queries": [entry for _, entry in results],
        }
        try:
            with open(args.scores_out, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=1)
                fh.write("\n")
        except OSError as exc:
            raise IoFailure(f"cannot write {args.scores_out}: {exc}") from exc
    print(f"wrote {len(lines)} run lines for {len(results)} queries to {args.out}")
    return 0


def cmd_layout_export(args) -> int:
    corpus = load_corpus(args.corpus)
    records = load_queries(args.queries, style_override=args.style)
    candidates = load_candidates(args.candidates)
    profile = _profile(args)
    os.makedirs(args.out_dir, exist_ok=True)
    count = 0
    for record in records:
        if record.qid not in candidates:
            raise DataFormatError(f"no candidate list for query {record.qid!r}")
        docs = docs_for_query(corpus, candidates[record.qid], record.qid)
        layout, cal_layout = _build_layouts(record, docs, profile, args)
        for suffix, lay in (("layout", layout), ("cal.layout", cal_layout)):
            path = os.path.join(args.out_dir, f"{record.qid}.{suffix}.json")
            try:
                with open(path, "w", encoding="utf-8") as fh:
                    json.dump(layout_to_dict(lay), fh, indent=1)
                    fh.write("\n")
            except OSError as exc:
                raise IoFailure(f"cannot write {path}: {exc}") from exc
            count += 1
    print(f"wrote {count} layout files to {args.out_dir}")
    return 0


def cmd_eval(args) -> int:
    run = load_run(args.run)
    qrels = load_qrels(args.qrels)
    task_of = load_tasks(args.tasks) if args.tasks else None
    report = evaluate(
        run,
        qrels,
        ndcg_ks=args.k,
        recall_ks=args.recall_k,
        all_recall_ks=args.all_recall_k,
        task_of=task_of,
    )
    width = max(len(m) for m in report.metrics)
    print(f"{'metric'.ljust(width)}  micro   macro")
    for metric in report.metrics:
        print(
            f"{metric.ljust(width)}  {report.micro(metric):.4f}  "
            f"{report.macro(metric):.4f}"
        )
    tasks = sorted({report.task_of.get(q, 'default') for m in report.per_query.values() for q in m})
    if len(tasks) > 1:
        print("per task:")
        for metric in report.metrics:
            means = report.task_means(metric)
            cells = "  ".join(f"{t}={v:.4f}" for t, v in means.items())
            print(f"  {metric.ljust(width)}  {cells}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(report.as_dict(), fh, indent=1)
            fh.write("\n")
    return 0


def cmd_viz(args) -> int:
    viz.write_heatmap(args.scores, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_validate(args) -> int:
    from .attention_io import validate_dump

    names = sorted(n for n in os.listdir(args.dir) if n.endswith(".icra"))
    if not names:
        raise DataFormatError(f"no .icra files in {args.dir}")
    bad = 0
    for name in names:
        report = validate_dump(os.path.join(args.dir, name), row_sum_tol=args.tol)
        shape = (
            f"{report.layers}x{report.heads}x{report.num_rows}x{report.context_len}"
        )
        if report.ok:
            print(f"OK   {name} ({shape}, model {report.model_name!r})")
        else:
            bad += 1
            print(f"FAIL {name} ({shape}): " + "; ".join(report.violations))
    print(f"{len(names) - bad}/{len(names)} dumps clean")
    return 1 if bad else 0


def cmd_bench(args) -> int:
    backend = _make_backend(args)
    report = complexity_bench.bench_pipeline(
        backend,
        k_values=args.k_values,
        trials=args.trials,
        seed=args.seed,
        parallel=args.parallel,
    )
    print("K      median_ms  context_tokens  acquisitions/query")
    for k in report.k_values:
        print(
            f"{k:<6d} {report.median_ms(k):>9.3f}  "
            f"{report.context_tokens[k]:>14d}  {report.acquisitions_per_query[k]:>5d}"
        )
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=1)
            fh.write("\n")
    return 0


def _add_common_model_flags(p):
    p.add_argument("--layers", type=int, default=2, help="toy/planted layer count")
    p.add_argument("--heads", type=int, default=2, help="toy/planted head count")
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness")


def _add_backend_flags(p):
    p.add_argument(
        "--backend", choices=("toy", "planted", "dump"), default="toy"
    )
    p.add_argument("--dump-dir", help="directory of .icra dumps (backend=dump)")
    p.add_argument("--boost", type=float, default=6.0,
                   help="planted: extra mass on the target doc (query pass)")
    p.add_argument("--bias", type=float, default=40.0,
                   help="planted: extra mass on the bias doc (both passes)")
    p.add_argument("--planted-target-rank", type=int, default=None,
                   help="planted: retriever rank of the target doc (default last)")
    p.add_argument("--planted-bias-rank", type=int, default=1,
                   help="planted: retriever rank of the bias doc")


def _add_dataset_flags(p):
    p.add_argument("--corpus", required=True, help="corpus JSONL")
    p.add_argument("--queries", required=True, help="queries JSONL")
    p.add_argument("--candidates", required=True, help="candidate lists JSONL")
    p.add_argument("--order", choices=ORDER_MODES, default="reversed",
                   help="document presentation order in the prompt")
    p.add_argument("--style", choices=STYLES, default=None,
                   help="override per-query prompt style")
    p.add_argument("--max-doc-words", type=int, default=None,
                   help="truncate documents to this many words")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icr",
        description="Attention-based in-context re-ranking toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rerank", help="score candidates into a TREC run file")
    _add_dataset_flags(p)
    _add_backend_flags(p)
    _add_common_model_flags(p)
    p.add_argument("--mode", choices=MODES, default="full")
    p.add_argument("--out", required=True, help="output run file")
    p.add_argument("--scores-out", help="output token-score JSON")
    p.add_argument("--tag", default="icr", help="run tag column")
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser(
        "layout-export", help="write layout JSON for external exporters"
    )
    _add_dataset_flags(p)
    _add_common_model_flags(p)
    p.add_argument("--backend", default="toy", help=argparse.SUPPRESS)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_layout_export)

    p = sub.add_parser("eval", help="score a run file against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--k", type=_int_list, default=[10], help="nDCG cutoffs")
    p.add_argument("--recall-k", type=_int_list, default=[2, 5])
    p.add_argument("--all-recall-k", type=_int_list, default=[5])
    p.add_argument("--tasks", help="qid<TAB>task file for macro averaging")
    p.add_argument("--json", help="also write the full report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("viz", help="render token scores as an HTML heatmap")
    p.add_argument("--scores", required=True, help="token-score JSON from rerank")
    p.add_argument("--out", required=True, help="output HTML path")
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("validate", help="check .icra dumps in a directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--tol", type=float, default=1e-3, help="row-sum tolerance")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="wall-clock scaling benchmark")
    _add_backend_flags(p)
    _add_common_model_flags(p)
    p.set_defaults(backend="planted")
    p.add_argument("--k-values", type=_int_list, default=[20, 40, 60, 80, 100])
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--parallel", action="store_true",
                   help="run trials on a thread pool")
    p.add_argument("--csv", help="write method,K,trial,ms rows")
    p.add_argument("--json", help="write the summary as JSON")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IcrError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
