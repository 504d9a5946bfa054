"""Command-line entry point: ``targetspan <subcommand> [flags]``.

Primary results go to stdout (or ``--out``), diagnostics and the resolved
configuration to stderr. Exit status is 0 on success, 1 when an input fails
validation and 2 on usage errors. ``--config FILE`` supplies a JSON object of
flag defaults, either flat or keyed by subcommand; flags given on the
command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import httpx

from targetspan import agreement, bio, corpus, error_analysis, llm, metrics, pooling
from targetspan.exceptions import InputError, TargetSpanError, ValidationError
from targetspan.spans import tokenize

logger = logging.getLogger("targetspan")


def _f(x: float) -> str:
    return f"{x:.6f}"


def _tsv(rows) -> str:
    return "".join("\t".join(str(c) for c in row) + "\n" for row in rows)


# --- shared loaders -----------------------------------------------------------

def _gold_by_id(records):
    annotators, contents = pooling.annotations_from_records(records)
    return pooling.aggregate_annotations(annotators), contents


def _load_eval_pairs(gold_path, pred_path):
    gold, contents = _gold_by_id(corpus.load_jsonl(gold_path))
    preds = corpus.load_jsonl(pred_path)
    sources = {r.source for r in preds}
    if len(sources) > 1:
        raise ValidationError(f"{pred_path} holds several sources {sorted(sources)}; use pool-rank instead")
    pred = {}
    for r in preds:
        if r.id not in gold:
            raise ValidationError("prediction for a sample that has no gold record", r.id, pred_path)
        if r.content.text != contents[r.id].text:
            raise ValidationError("prediction text differs from gold text", r.id, pred_path)
        pred[r.id] = r.span_set
    missing = sorted(set(gold) - set(pred))
    if missing:
        raise ValidationError(f"no prediction for gold samples {missing}", path=pred_path)
    return [(s, gold[s], pred[s], contents[s]) for s in sorted(gold)]


def _parallel_map(fn, items, jobs):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(fn, items))


# --- subcommands ---------------------------------------------------------------

def cmd_tokenize(args) -> str:
    if args.text is not None:
        content = tokenize(args.text)
        return _tsv([("index", "start", "end", "token")] +
                    [(i, t.char_start, t.char_end, t.surface) for i, t in enumerate(content.tokens)])
    if args.input is None:
        raise InputError("tokenize needs --text or --input")
    rows = [("id", "index", "start", "end", "token")]
    for r in corpus.load_jsonl(args.input):
        rows += [(r.id, i, t.char_start, t.char_end, t.surface) for i, t in enumerate(r.content.tokens)]
    return _tsv(rows)


def cmd_eval(args) -> str:
    pairs = _load_eval_pairs(args.gold, args.pred)
    mode = metrics.MatchMode(args.mode)
    reports = _parallel_map(lambda p: metrics.f1_m(p[1], p[2], p[3], mode), pairs, args.jobs)
    if args.micro:
        summary = metrics.pool_reports(reports, mode)
    else:
        summary = metrics.average_reports(reports, mode)
    rows = [
        ("mode", mode.value),
        ("average", summary.average),
        ("n_samples", summary.n_samples),
        ("f1_m", _f(summary.f1_m)),
        ("rec_m", _f(summary.rec_m)),
        ("prec_m", _f(summary.prec_m)),
    ]
    out = _tsv(rows)
    if args.per_sample:
        out += "\n" + _tsv([("id", "f1_m", "rec_m", "prec_m")] +
                           [(p[0], _f(r.f1_m), _f(r.rec_m), _f(r.prec_m)) for p, r in zip(pairs, reports)])
    return out


def cmd_tag_eval(args) -> str:
    gold = bio.read_conll(args.gold)
    pred = bio.read_conll(args.pred)
    if len(gold) != len(pred):
        raise ValidationError(f"{len(gold)} gold samples but {len(pred)} predicted samples")
    for i, (g, p) in enumerate(zip(gold, pred)):
        if g.tokens != p.tokens:
            raise ValidationError("token sequences differ", g.id or str(i), args.pred)
    m = bio.corpus_tag_metrics((p.tags, g.tags) for g, p in zip(gold, pred))
    return _tsv([
        ("n_samples", len(gold)),
        ("f1", _f(m.f1)),
        ("precision", _f(m.precision)),
        ("recall", _f(m.recall)),
        ("accuracy", _f(m.accuracy)),
    ])


def cmd_convert(args) -> str:
    if args.to == "conll":
        samples = []
        for r in corpus.load_jsonl(args.input):
            tags = bio.encode_bio(r.content, r.span_set)
            samples.append(bio.ConllSample(tuple(r.content.surfaces), tuple(tags), r.id))
        return bio.dumps_conll(samples)
    records = []
    for i, sample in enumerate(bio.read_conll(args.input)):
        text = " ".join(sample.tokens)
        spans = bio.decode_bio(sample.tags)
        records.append(corpus.make_record(sample.id if sample.id is not None else str(i), text, spans, args.source))
    return corpus.dumps_jsonl(records)


def cmd_agree(args) -> str:
    annotations, contents = pooling.annotations_from_records(corpus.load_jsonl(args.input))
    reports = agreement.pairwise_agreement(annotations, contents)
    return _tsv([("annotator_a", "annotator_b", "dsc", "lcs", "n_samples")] +
                [(*r.pair, _f(r.dsc), _f(r.lcs), r.n_samples) for r in reports])


def _load_pool(args):
    return pooling.pool_from_records(corpus.load_jsonl(args.gold), corpus.load_jsonl(args.pool))


def cmd_pool_rank(args) -> str:
    mode = metrics.MatchMode(args.mode)
    pool = _load_pool(args)
    out = pooling.format_ranking_tsv(pooling.rank_pool(pool, mode, jobs=args.jobs))
    if args.with_annotators:
        annotators, _ = pooling.annotations_from_records(corpus.load_jsonl(args.gold))
        scores = pooling.annotator_vs_pool(annotators, mode)
        out += "\n" + _tsv([("annotator", "f1_m", "rec_m", "prec_m")] +
                           [(a, _f(r.f1_m), _f(r.rec_m), _f(r.prec_m)) for a, r in scores.items()])
    return out


def cmd_pool_select(args) -> str:
    if args.ranking:
        ranked = pooling.parse_ranking_tsv(Path(args.ranking).read_text(encoding="utf-8"))
    elif args.gold and args.pool:
        ranked = pooling.rank_pool(_load_pool(args), metrics.MatchMode(args.mode), jobs=args.jobs)
    else:
        raise InputError("pool-select needs --ranking, or --gold and --pool")
    best = pooling.select_best(ranked)
    return _tsv([("system", "prompt", "f1_m"), (best.system, best.prompt, _f(ranked[0].f1_m))])


def _offline_transport():
    def refuse(request):
        raise httpx.ConnectError("offline mode: cache miss", request=request)
    return httpx.MockTransport(refuse)


def cmd_annotate(args) -> str:
    records = corpus.load_jsonl(args.input)
    samples = list({r.id: r for r in records}.values())
    prompts = []
    for pid in args.prompt or []:
        if pid not in llm.BUILTIN_PROMPTS:
            raise InputError(f"unknown built-in prompt {pid!r}; choose from {sorted(llm.BUILTIN_PROMPTS)}")
        prompts.append(llm.BUILTIN_PROMPTS[pid])
    if args.prompts_file:
        prompts += llm.load_prompts(args.prompts_file)
    if not prompts:
        prompts = list(llm.BUILTIN_PROMPTS.values())
    if not args.model:
        raise InputError("annotate needs at least one --model")
    configs = [
        llm.ModelConfig(args.endpoint, m, args.temperature, 0 if args.offline else args.max_retries,
                        args.timeout, args.api_key_env)
        for m in args.model
    ]
    transport = _offline_transport() if args.offline else None
    with llm.Annotator(llm.ResponseCache(args.cache_dir), transport=transport) as annotator:
        run = llm.run_pool(samples, prompts, configs, annotator, args.concurrency)
        logger.info("annotate: %d network requests", annotator.network_calls)
    for f in run.failures:
        print(f"failure\t{f.candidate.system}\t{f.candidate.prompt}\t{f.sample_id}\t{f.error}\t{f.message}",
              file=sys.stderr)
    for (cid, sample_id), quotes in sorted(run.unmatched.items()):
        for q in quotes:
            print(f"unmatched\t{cid.system}\t{cid.prompt}\t{sample_id}\t{q}", file=sys.stderr)
    if args.failures:
        Path(args.failures).write_text(
            _tsv([("system", "prompt", "sample_id", "error", "message")] +
                 [(f.candidate.system, f.candidate.prompt, f.sample_id, f.error, f.message) for f in run.failures]),
            encoding="utf-8")
    if not run.pool.candidates:
        raise ValidationError("every candidate failed; see failure manifest")
    return corpus.dumps_jsonl(pooling.pool_to_records(run.pool))


def cmd_stats(args) -> str:
    records = corpus.load_jsonl(args.input)
    rows = [("source", "n_samples", "tpc", "alt")]
    for source, by_id in sorted(corpus.group_by_source(records).items()):
        s = corpus.stats([by_id[i].span_set for i in sorted(by_id)], pooled_alt=not args.alt_per_sample)
        rows.append((source, s.n_samples,
                     corpus.format_mean_std(s.tpc_mean, s.tpc_std, args.digits),
                     corpus.format_mean_std(s.alt_mean, s.alt_std, args.digits)))
    return _tsv(rows)


def cmd_split(args) -> str:
    records = corpus.load_jsonl(args.input)
    ids = list(dict.fromkeys(r.id for r in records))
    folds = corpus.split(ids, tuple(args.ratios), args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [("fold", "n_samples")]
    for name, fold in zip(("train", "dev", "test"), folds):
        members = set(fold)
        corpus.write_jsonl(out_dir / f"{name}.jsonl", [r for r in records if r.id in members])
        rows.append((name, len(fold)))
    return _tsv(rows)


def cmd_error_report(args) -> str:
    pairs = _load_eval_pairs(args.gold, args.pred)
    report = error_analysis.error_report([(p, g, c) for _, g, p, c in pairs], notes=args.notes)
    if args.format == "text":
        lines = [f"samples: {report.n_samples}", f"failed: {report.n_failed}"]
        if report.no_failures:
            lines.append("no failures")
        else:
            lines += [
                f"boundary errors: {report.boundary_rate:.1%} of failed samples "
                f"({report.boundary_rate_all:.1%} of all samples)",
                f"span count: {report.count_over:.1%} too many, {report.count_under:.1%} too few, "
                f"{report.count_equal:.1%} right number",
            ]
        if report.notes:
            lines.append(f"notes: {report.notes}")
        return "\n".join(lines) + "\n"
    rows = [
        ("n_samples", report.n_samples),
        ("n_failed", report.n_failed),
        ("boundary_rate", _f(report.boundary_rate)),
        ("boundary_rate_all", _f(report.boundary_rate_all)),
        ("count_over", _f(report.count_over)),
        ("count_under", _f(report.count_under)),
        ("count_equal", _f(report.count_equal)),
    ]
    if report.no_failures:
        rows.append(("status", "no failures"))
    out = _tsv(rows)
    if args.per_sample:
        out += "\n" + _tsv([("id", "failed", "f1", "boundary_errors", "count", "note")] + [
            (sid, int(d.failed), _f(d.f1), len(d.boundary_pairs), d.discrepancy.value, d.note)
            for (sid, *_), d in zip(pairs, report.samples)
        ])
    return out


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="targetspan", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of flag defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--out", help="write the result here instead of stdout")
        return p

    def mode_flag(p):
        p.add_argument("--mode", choices=[m.value for m in metrics.MatchMode], default="strict")
        p.add_argument("--jobs", type=int, default=1)

    p = add("tokenize", cmd_tokenize, "show whitespace tokens with character offsets")
    p.add_argument("--text")
    p.add_argument("--input")

    p = add("eval", cmd_eval, "F1_M of predicted spans against gold spans")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--micro", action="store_true", help="pool credit over the corpus instead of averaging samples")
    p.add_argument("--per-sample", action="store_true")
    mode_flag(p)

    p = add("tag-eval", cmd_tag_eval, "entity-level BIO metrics on CoNLL files")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)

    p = add("convert", cmd_convert, "convert JSONL spans to CoNLL BIO or back")
    p.add_argument("--input", required=True)
    p.add_argument("--to", choices=["conll", "jsonl"], required=True)
    p.add_argument("--source", default="bio", help="source label for records read from CoNLL")

    p = add("agree", cmd_agree, "pairwise inter-annotator agreement")
    p.add_argument("--input", required=True, help="JSONL with one record per (sample, annotator)")

    p = add("pool-rank", cmd_pool_rank, "rank candidate systems against merged human gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--with-annotators", action="store_true", help="also score each annotator against the merge")
    mode_flag(p)

    p = add("pool-select", cmd_pool_select, "pick the best candidate")
    p.add_argument("--ranking", help="TSV with system, prompt, f1_m columns")
    p.add_argument("--gold")
    p.add_argument("--pool")
    mode_flag(p)

    p = add("annotate", cmd_annotate, "run prompts over samples with one or more chat models")
    p.add_argument("--input", required=True)
    p.add_argument("--endpoint", default="https://api.openai.com/v1")
    p.add_argument("--model", action="append")
    p.add_argument("--prompt", action="append", help="built-in prompt id (prompt1, prompt2)")
    p.add_argument("--prompts-file")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--api-key-env", default="OPENAI_API_KEY")
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--cache-dir", required=True)
    p.add_argument("--offline", action="store_true", help="serve from cache only")
    p.add_argument("--failures", help="write the failure manifest TSV here")

    p = add("stats", cmd_stats, "targets per content and target length")
    p.add_argument("--input", required=True)
    p.add_argument("--alt-per-sample", action="store_true")
    p.add_argument("--digits", type=int, default=1)

    p = add("split", cmd_split, "random train/dev/test split by sample id")
    p.add_argument("--input", required=True)
    p.add_argument("--ratios", type=float, nargs=3, default=[0.8, 0.1, 0.1])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = add("error-report", cmd_error_report, "boundary and span-count error analysis")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--format", choices=["tsv", "text"], default="tsv")
    p.add_argument("--per-sample", action="store_true")
    p.add_argument("--notes", default="")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> None:
    """Install ``--config`` values as subcommand defaults before the real parse."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return
    data = json.loads(Path(known.config).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        parser.error("--config must hold a JSON object")
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in rest if a in choices), None)
    if command is None:
        return
    defaults = {k: v for k, v in data.items() if not isinstance(v, dict)}
    defaults.update(data.get(command, {}))
    subparser = choices[command]
    known_dests = {a.dest for a in subparser._actions}
    unknown = sorted(set(defaults) - known_dests)
    if unknown:
        parser.error(f"unknown keys in --config for {command}: {unknown}")
    for action in subparser._actions:
        if action.dest in defaults:
            action.required = False
    subparser.set_defaults(**defaults)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"targetspan: cannot read --config: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print("config " + json.dumps(resolved, sort_keys=True), file=sys.stderr)
    try:
        output = args.func(args)
    except FileNotFoundError as exc:
        print(f"targetspan: {exc}", file=sys.stderr)
        return 2
    except (TargetSpanError, OSError) as exc:
        print(f"targetspan: {exc}", file=sys.stderr)
        return 1
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(output)
    else:
        sys.stdout.write(output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
