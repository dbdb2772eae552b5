"""Command-line entry point: ``anaphor-re <command> [options]``.

Output directory layout (``--out``), fixed names:

    config.json        resolved configuration echo
    train_log.jsonl    one record per step and per epoch
    checkpoint.bin     parameters with the best dev F1
    predictions.jsonl  infer / fuse output
    metrics.json       evaluate output
    sweep.tsv          sweep table

Exit codes: 0 success, 1 validation or configuration error, 2 runtime failure.
Errors go to stderr, followed by a one-line JSON trailer.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from dataclasses import asdict, fields
from pathlib import Path


from . import checks
from .corpus import (CorpusFormatError, EmptyCorpusError, ValidationError, corpus_stats, dump_corpus,
                     dump_parses, format_stats, load_corpus)
from .graph import build_graph, dump_graph, extract_anaphors
from .inference import (all_triples, evaluate, fusion_records, fusion_scores, predict_corpus,
                        prediction_records, read_predictions, train_fact_names, tune_tau, write_predictions)
from .model import CheckpointError, load_checkpoint
from .rng import stream
from .train import TrainConfig, TrainingDivergedError, coerce_config, read_config_file, train

log = logging.getLogger("anaphor_re")

SWEEP_AXES = {
    "gcn_layers": [0, 1, 2, 3, 4],
    "beta": [0.0, 0.01, 0.03, 0.05, 0.1, 0.3],
}


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _path_exists(value):
    if not Path(value).exists():
        raise argparse.ArgumentTypeError(f"path does not exist: {value}")
    return value


def _add_train_flags(p):
    g = p.add_argument_group("training configuration (config-file keys in parentheses)")
    for f in fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            g.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None,
                           help=f"({f.name}) default {f.default}")
        else:
            typ = {"int": int, "float": float}.get(f.type, str)
            g.add_argument(flag, dest=f.name, type=typ, default=None, help=f"({f.name}) default {f.default}")


def resolve_train_config(args):
    """Config file values, overridden by any flag given on the command line."""
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for f in fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    try:
        return coerce_config(values)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def build_parser():
    p = _Parser(prog="anaphor-re", description=__doc__.split("\n")[0],
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_):
        c = sub.add_parser(name, help=help_)
        c.add_argument("--config", type=_path_exists, help="flat key = value file; flags win")
        c.add_argument("--out", default=".", help="output directory")
        c.add_argument("--threads", type=int, default=1, help="worker cap for prediction")
        c.add_argument("-v", "--verbose", action="store_true")
        return c

    def corpus_args(c, required=True):
        c.add_argument("--corpus", type=_path_exists, required=required, help="DocRED JSON file")
        c.add_argument("--parses", type=_path_exists, help="parse sidecar (JSON lines)")

    c = cmd("ingest", "validate a corpus and write its relation vocabulary")
    corpus_args(c)

    c = cmd("stats", "per-document corpus averages")
    corpus_args(c)
    c.add_argument("--name", default="corpus")

    c = cmd("extract-anaphors", "rule-based anaphors as a JSON sidecar")
    corpus_args(c)
    c.add_argument("--include-mention-overlap", action="store_true")
    c.add_argument("--output", help="default <out>/anaphors.json")

    c = cmd("build-graph", "dump the document graph of one document")
    corpus_args(c)
    c.add_argument("--doc-id", help="default: first document")
    c.add_argument("--variant", choices=["full", "no-anaphor", "random-replace"], default="full")
    c.add_argument("--seed", type=int, default=42)
    c.add_argument("--output", help="default <out>/graph.json")

    c = cmd("train", "train a model; writes checkpoint.bin and train_log.jsonl")
    corpus_args(c)
    c.add_argument("--dev", type=_path_exists)
    c.add_argument("--dev-parses", type=_path_exists)
    _add_train_flags(c)

    c = cmd("infer", "threshold predictions for a corpus")
    corpus_args(c)
    c.add_argument("--checkpoint", type=_path_exists, required=True)
    c.add_argument("--output", help="default <out>/predictions.jsonl")

    c = cmd("fuse", "ISF / ISCF fused predictions")
    corpus_args(c)
    c.add_argument("--checkpoint", type=_path_exists, required=True)
    c.add_argument("--secondary", type=_path_exists, help="checkpoint trained with beta=0 (ISCF)")
    c.add_argument("--mode", choices=["ISF", "ISCF", "none"], default="ISCF")
    c.add_argument("--evidence-threshold", type=float, default=0.2)
    tau = c.add_mutually_exclusive_group()
    tau.add_argument("--tau", type=float)
    tau.add_argument("--tune-on", type=_path_exists, help="dev corpus for the tau grid search")
    c.add_argument("--tune-parses", type=_path_exists)
    c.add_argument("--output", help="default <out>/predictions.jsonl")

    c = cmd("evaluate", "F1 / Ign-F1 / Intra-F1 / Inter-F1")
    c.add_argument("--predictions", type=_path_exists, required=True)
    c.add_argument("--gold", type=_path_exists, required=True)
    c.add_argument("--train-corpus", type=_path_exists, help="facts ignored by Ign-F1")
    c.add_argument("--output", help="default <out>/metrics.json")

    c = cmd("sweep", "train/evaluate over GCN depth or the evidence coefficient")
    corpus_args(c)
    c.add_argument("--dev", type=_path_exists, required=True)
    c.add_argument("--dev-parses", type=_path_exists)
    c.add_argument("--axis", choices=sorted(SWEEP_AXES), required=True)
    _add_train_flags(c)

    c = cmd("gradcheck", "finite-difference gradient suite; non-zero exit on failure")
    c.add_argument("--seeds", type=int, default=20)

    c = cmd("synth", "write a generated corpus and its parse sidecar")
    c.add_argument("--kind", choices=["relation", "bridge"], default="relation")
    c.add_argument("--n-docs", type=int, default=32)
    c.add_argument("--n-relations", type=int, default=5)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--output", required=True, help="corpus JSON path; parses go next to it")
    return p


def _out(args, name, override=None):
    path = Path(override) if override else Path(args.out) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _load(path, parses=None, relations=None):
    return load_corpus(path, relations=relations, parses=parses)


def cmd_ingest(args):
    corpus = _load(args.corpus, args.parses)
    n_parsed = sum(d.parse is not None for d in corpus)
    path = _out(args, "relations.json")
    path.write_text(json.dumps(corpus.relations, indent=1))
    print(f"{len(corpus)} documents valid; {len(corpus.relations)} relations; {n_parsed} with parses")
    print(f"relation vocabulary written to {path}")


def cmd_stats(args):
    corpus = _load(args.corpus, args.parses)
    anaphors = [extract_anaphors(d) if d.parse is not None else [] for d in corpus]
    print(format_stats([(args.name, corpus_stats(corpus, anaphors))]))


def cmd_extract_anaphors(args):
    corpus = _load(args.corpus, args.parses)
    diag = Counter()
    out = {}
    for d in corpus:
        if d.parse is None:
            raise ValidationError(f"{d.doc_id}: no parse record in the sidecar")
        anas = extract_anaphors(d, not args.include_mention_overlap, diag)
        out[d.doc_id] = [{"kind": a.kind, "span": [a.sent_id, a.start, a.end], "surface": a.surface}
                         for a in anas]
    path = _out(args, "anaphors.json", args.output)
    path.write_text(json.dumps(out, indent=1, sort_keys=True))
    for k, v in sorted(diag.items()):
        log.info("skipped %d candidates: %s", v, k)
    print(f"{sum(len(v) for v in out.values())} anaphors in {len(out)} documents -> {path}")


def cmd_build_graph(args):
    corpus = _load(args.corpus, args.parses)
    docs = {d.doc_id: d for d in corpus}
    doc = docs.get(args.doc_id) if args.doc_id else corpus[0]
    if doc is None:
        raise ValidationError(f"no document with id {args.doc_id!r}")
    anas = extract_anaphors(doc) if doc.parse is not None else []
    graph = build_graph(doc, anas, args.variant, stream(args.seed, "graph", 0))
    path = _out(args, "graph.json", args.output)
    dump_graph(graph, path)
    print(f"{graph.n} nodes, {len(graph.edges())} edges -> {path}")


def cmd_train(args):
    cfg = resolve_train_config(args)
    corpus = _load(args.corpus, args.parses)
    dev = _load(args.dev, args.dev_parses, corpus.relations) if args.dev else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(asdict(cfg), indent=1, sort_keys=True))
    res = train(corpus, cfg, dev=dev, log_path=out / "train_log.jsonl", checkpoint_path=out / "checkpoint.bin")
    print(f"best epoch {res.best_epoch}, dev F1 {res.best_dev_f1}; checkpoint -> {out / 'checkpoint.bin'}")


def _model_anaphor_mode(model):
    return model.extra.get("train_config", {}).get("anaphor_mode", "full")


def cmd_infer(args):
    model = load_checkpoint(args.checkpoint)
    corpus = _load(args.corpus, args.parses, model.relations)
    preds = predict_corpus(corpus, model, _model_anaphor_mode(model), threads=args.threads)
    path = _out(args, "predictions.jsonl", args.output)
    recs = prediction_records(preds, corpus)
    write_predictions(path, recs)
    print(f"{len(recs)} triples -> {path}")


def cmd_fuse(args):
    primary = load_checkpoint(args.checkpoint)
    secondary = load_checkpoint(args.secondary) if args.secondary else None
    if args.mode == "ISCF" and secondary is None:
        raise ConfigError("--mode ISCF requires --secondary (a checkpoint trained with beta=0)")
    mode_a = _model_anaphor_mode(primary)

    def scores_for(corpus):
        return [fusion_scores(d, primary, secondary, args.mode, args.evidence_threshold, mode_a) for d in corpus]

    tau = args.tau if args.tau is not None else 0.0
    if args.tune_on:
        dev = _load(args.tune_on, args.tune_parses, primary.relations)
        tau = tune_tau(scores_for(dev), dev)
        log.info("tuned tau = %s", tau)
    corpus = _load(args.corpus, args.parses, primary.relations)
    recs = fusion_records(scores_for(corpus), tau, corpus)
    path = _out(args, "predictions.jsonl", args.output)
    write_predictions(path, recs)
    print(f"tau={tau}: {len(recs)} fused triples -> {path}")


def cmd_evaluate(args):
    gold = _load(args.gold)
    preds = read_predictions(args.predictions, gold)
    train_facts = train_fact_names(_load(args.train_corpus)) if args.train_corpus else ()
    metrics = evaluate(preds, gold, train_facts)
    path = _out(args, "metrics.json", args.output)
    path.write_text(json.dumps(metrics, indent=1, sort_keys=True))
    print(json.dumps(metrics, sort_keys=True))


def cmd_sweep(args):
    base = resolve_train_config(args)
    corpus = _load(args.corpus, args.parses)
    dev = _load(args.dev, args.dev_parses, corpus.relations)
    key = args.axis
    rows = []
    for value in SWEEP_AXES[key]:
        cfg = coerce_config({**asdict(base), key: value})
        res = train(corpus, cfg, dev=dev)
        m = evaluate(all_triples(predict_corpus(dev, res.model, cfg.anaphor_mode, threads=args.threads)), dev)
        rows.append((value, m))
        print(f"{key}={value}: F1={m['F1']:.4f}", flush=True)
    header = [key, "F1", "Ign_F1", "Intra_F1", "Inter_F1", "P", "R"]
    lines = ["\t".join(header)] + ["\t".join([str(v)] + [f"{m[h]:.4f}" for h in header[1:]]) for v, m in rows]
    path = _out(args, "sweep.tsv")
    path.write_text("\n".join(lines) + "\n")
    print("\n".join(lines))


def cmd_gradcheck(args):
    results = checks.run_suite(seeds=args.seeds)
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise GradcheckFailure(f"gradient check failed for: {', '.join(failed)}")


class GradcheckFailure(RuntimeError):
    pass


def cmd_synth(args):
    from . import synthetic
    make = synthetic.relation_corpus if args.kind == "relation" else synthetic.bridge_corpus
    corpus = make(n_docs=args.n_docs, n_relations=args.n_relations, seed=args.seed)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    dump_corpus(corpus, out)
    parses = out.with_name(out.stem + ".parses.jsonl")
    dump_parses({d.doc_id: d.parse for d in corpus}, parses)
    print(f"{len(corpus)} documents -> {out}; parses -> {parses}")


COMMANDS = {
    "ingest": cmd_ingest, "stats": cmd_stats, "extract-anaphors": cmd_extract_anaphors,
    "build-graph": cmd_build_graph, "train": cmd_train, "infer": cmd_infer, "fuse": cmd_fuse,
    "evaluate": cmd_evaluate, "sweep": cmd_sweep, "gradcheck": cmd_gradcheck, "synth": cmd_synth,
}

_VALIDATION = (ConfigError, CorpusFormatError, ValidationError, EmptyCorpusError, CheckpointError,
               FileNotFoundError, json.JSONDecodeError, KeyError)


def _fail(exc, code):
    print(f"error: {exc}", file=sys.stderr)
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def run(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as e:
        return _fail(e, 1)
    except SystemExit as e:  # --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except _VALIDATION as e:
        return _fail(e, 1)
    except (TrainingDivergedError, GradcheckFailure, Exception) as e:  # noqa: B014
        return _fail(e, 2)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
