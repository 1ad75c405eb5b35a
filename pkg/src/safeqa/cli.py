"""Operator tooling: ingest, index, calibrate, eval, serve, ask.

Exit codes: 0 success, 1 domain error, 2 usage error. With --json each
subcommand emits exactly one JSON document on stdout; everything else goes
to stderr.
"""
from __future__ import annotations

import json
import math
import statistics
from pathlib import Path
from typing import Optional

import click

from .bootstrap import build_corpus, build_engine, build_retriever
from .config import ServiceConfig, load_config, write_config_value
from .errors import SafeqaError
from .evaluation import retrieval_eval, robustness_eval, scalability_eval
from .evaluation import bert_score, bleu, rouge_l
from .pipeline import AskRequest
from .providers import MockEmbeddingProvider
from .reporting import (plot_calibration_sweep, plot_metric_bars,
                        plot_rank_histogram, plot_scalability, render_table,
                        write_csv, write_json)
from .retrieval import Retriever
from .synthetic import scale_corpus


def _load(config_path: Optional[str]) -> ServiceConfig:
    try:
        return load_config(config_path)
    except SafeqaError as exc:
        raise click.ClickException(str(exc))


def _emit(doc: dict, as_json: bool, human: Optional[str] = None) -> None:
    if as_json:
        click.echo(json.dumps(doc, ensure_ascii=False))
    else:
        click.echo(human if human is not None
                   else json.dumps(doc, ensure_ascii=False, indent=2))


def _open_store(config: ServiceConfig, store_dir: Optional[str]):
    if store_dir:
        config.store_dir = store_dir
    if not config.store_dir:
        raise click.ClickException("no corpus store: pass --store or set store_dir")
    return build_corpus(config)


def _split_and_index(corpus, config: ServiceConfig, seed: int, fraction: float):
    """Index the train side of a holdout split; return (retriever, holdout)."""
    try:
        train_ids, held_ids = corpus.holdout_split(seed, fraction)
    except SafeqaError as exc:
        raise click.ClickException(str(exc))
    by_id = {r.id: r for r in corpus.records()}
    retriever = build_retriever(config)
    retriever.add_documents([(i, by_id[i].sanitized_question, by_id[i].group_id)
                             for i in train_ids
                             if by_id[i].status == "published"])
    holdout = [(by_id[i].sanitized_question, by_id[i].group_id)
               for i in held_ids]
    return retriever, holdout


@click.group()
def main():
    """Staged question answering for sensitive-topic helplines."""


@main.command()
@click.option("--input", "input_path", required=True,
              help="JSONL corpus file to load.")
@click.option("--out", "store_dir", default=None,
              help="Corpus store directory (created if missing).")
@click.option("--config", "config_path", default=None)
@click.option("--json", "as_json", is_flag=True)
def ingest(input_path, store_dir, config_path, as_json):
    """Load a JSONL corpus file into the record store."""
    config = _load(config_path)
    if store_dir:
        config.store_dir = store_dir
    corpus = build_corpus(config)
    try:
        report = corpus.ingest_jsonl(input_path)
    except SafeqaError as exc:
        raise click.ClickException(str(exc))
    for lineno, reason in report.rejection_reasons:
        click.echo(f"line {lineno}: rejected ({reason})", err=True)
    click.echo(json.dumps(report.to_dict(), ensure_ascii=False))


@main.command()
@click.option("--store", "store_dir", default=None)
@click.option("--out", "out_path", default="index.json",
              help="Where to save the index snapshot.")
@click.option("--config", "config_path", default=None)
@click.option("--json", "as_json", is_flag=True)
def index(store_dir, out_path, config_path, as_json):
    """Build the hybrid retrieval index from the store and save it."""
    config = _load(config_path)
    corpus = _open_store(config, store_dir)
    published = corpus.published()
    if not published:
        raise click.ClickException("corpus store has no published records")
    retriever = build_retriever(config)
    try:
        version = retriever.add_documents(
            [(r.id, r.sanitized_question, r.group_id) for r in published])
        retriever.save(out_path)
    except SafeqaError as exc:
        raise click.ClickException(str(exc))
    doc = {"docs": len(published), "index_version": version,
           "path": str(out_path)}
    _emit(doc, as_json,
          human=f"indexed {len(published)} docs (version {version}) -> {out_path}")


@main.command()
@click.option("--store", "store_dir", default=None)
@click.option("--seed", default=7, type=int)
@click.option("--fraction", default=0.2, type=float)
@click.option("--out", "out_dir", default="reports/calibrate",
              help="Directory for report.json, sweep.csv, sweep.png.")
@click.option("--write", "write_path", default=None,
              help="Persist the chosen tau into this JSON config file.")
@click.option("--config", "config_path", default=None)
@click.option("--json", "as_json", is_flag=True)
def calibrate(store_dir, seed, fraction, out_dir, write_path, config_path,
              as_json):
    """Pick the acceptance threshold on a per-group holdout split."""
    config = _load(config_path)
    corpus = _open_store(config, store_dir)
    retriever, holdout = _split_and_index(corpus, config, seed, fraction)
    try:
        result = retriever.calibrate(holdout)
    except SafeqaError as exc:
        raise click.ClickException(str(exc))

    doc = result.to_dict()
    doc.update({"seed": seed, "fraction": fraction, "n_holdout": len(holdout)})
    sweep_rows = doc["sweep"]
    out = Path(out_dir)
    doc["artifacts"] = {
        "report": str(write_json(doc, out / "report.json")),
        "sweep_csv": str(write_csv(sweep_rows, out / "sweep.csv")),
        "sweep_png": str(plot_calibration_sweep(
            sweep_rows, out / "sweep.png",
            chosen_tau=result.tau if math.isfinite(result.tau) else None)),
    }
    if write_path:
        tau = result.tau
        if not math.isfinite(tau):
            # config taus live in [0, 1]; a never-accept sweep clamps to the top
            tau = 1.0
            click.echo("calibration chose never-accept; writing tau=1.0",
                       err=True)
        write_config_value(write_path, "tau", tau)
        click.echo(f"wrote tau={tau} to {write_path}", err=True)

    human = "\n".join([
        f"tau={doc['tau']} f1={doc['f1']:.4f} never_accept={doc['never_accept']}",
        render_table(sweep_rows),
    ])
    _emit(doc, as_json, human=human)


def _eval_retrieval(config, store_dir, seed, fraction, k, tau, out):
    corpus = _open_store(config, store_dir)
    retriever, holdout = _split_and_index(corpus, config, seed, fraction)
    report = retrieval_eval(holdout, retriever, k=k, tau=tau)
    report["artifacts"] = {
        "report": str(write_json(report, out / "report.json")),
        "per_item_csv": str(write_csv(report["per_item"], out / "per_item.csv")),
        "ranks_png": str(plot_rank_histogram(report["per_item"],
                                             out / "ranks.png")),
    }
    human = (f"top1_group_accuracy={report['top1_group_accuracy']:.4f} "
             f"mrr={report['mrr']:.4f} "
             f"acceptance_rate_at_tau={report['acceptance_rate_at_tau']:.4f} "
             f"(n={report['n']})")
    return report, human


def _eval_text(input_path, out):
    if not input_path:
        raise click.UsageError("--suite text requires --input (JSONL of "
                               "{id, candidate, reference} rows)")
    try:
        lines = Path(input_path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise click.ClickException(f"unreadable input: {exc}")
    embedder = MockEmbeddingProvider()
    per_item = []
    for line in lines:
        if not line.strip():
            continue
        row = json.loads(line)
        refs = row.get("references") or [row["reference"]]
        per_item.append({
            "id": row.get("id", str(len(per_item) + 1)),
            "bleu": bleu(row["candidate"], refs),
            "rouge_l_f1": rouge_l(row["candidate"], refs[0])[2],
            "bert_score_f1": bert_score(row["candidate"], refs[0], embedder)[2],
        })
    if not per_item:
        raise click.ClickException("no candidate/reference pairs in input")
    means = {m: statistics.fmean(r[m] for r in per_item)
             for m in ("bleu", "rouge_l_f1", "bert_score_f1")}
    report = {"suite": "text", "n": len(per_item), **means,
              "per_item": per_item}
    report["artifacts"] = {
        "report": str(write_json(report, out / "report.json")),
        "per_item_csv": str(write_csv(per_item, out / "per_item.csv")),
        "metrics_png": str(plot_metric_bars(means, out / "metrics.png")),
    }
    human = " ".join(f"{m}={v:.4f}" for m, v in means.items())
    return report, human


def _eval_robustness(config, store_dir, seed, fraction, k, tau, noise, out):
    corpus = _open_store(config, store_dir)
    retriever, holdout = _split_and_index(corpus, config, seed, fraction)
    try:
        report = robustness_eval(holdout, retriever, p=noise, seed=seed,
                                 k=k, tau=tau)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    report["artifacts"] = {
        "report": str(write_json(report, out / "report.json")),
        "noisy_csv": str(write_csv(report["noisy"]["per_item"],
                                   out / "noisy_per_item.csv")),
        "ranks_png": str(plot_rank_histogram(report["noisy"]["per_item"],
                                             out / "noisy_ranks.png")),
    }
    human = (f"baseline_accuracy={report['baseline']['top1_group_accuracy']:.4f} "
             f"noisy_accuracy={report['noisy']['top1_group_accuracy']:.4f} "
             f"delta={report['accuracy_delta']:.4f} at p={noise}")
    return report, human


def _eval_scalability(seed, sizes_text, probes, k, out):
    try:
        sizes = [int(s) for s in sizes_text.split(",") if s.strip()]
    except ValueError:
        raise click.UsageError(f"bad --sizes value: {sizes_text!r}")
    if not sizes:
        raise click.UsageError("--sizes must list at least one corpus size")
    try:
        report = scalability_eval(sizes, seed, scale_corpus,
                                  probes_per_size=probes, k=k)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    report["artifacts"] = {
        "report": str(write_json(report, out / "report.json")),
        "sizes_csv": str(write_csv(report["sizes"], out / "sizes.csv")),
        "latency_png": str(plot_scalability(report["sizes"],
                                            out / "latency.png")),
    }
    human = render_table(report["sizes"])
    return report, human


@main.command("eval")
@click.option("--suite", required=True,
              type=click.Choice(["retrieval", "text", "robustness",
                                 "scalability"]))
@click.option("--store", "store_dir", default=None)
@click.option("--input", "input_path", default=None,
              help="text suite: JSONL of {id, candidate, reference} rows.")
@click.option("--out", "out_dir", default=None,
              help="Artifact directory; defaults to reports/<suite>.")
@click.option("--seed", default=7, type=int)
@click.option("--fraction", default=0.2, type=float)
@click.option("--k", default=None, type=int)
@click.option("--tau", default=None, type=float)
@click.option("--noise", default=0.1, type=float,
              help="robustness suite: character noise level in [0, 0.3].")
@click.option("--sizes", "sizes_text", default="1000,2000,5000",
              help="scalability suite: comma-separated corpus sizes.")
@click.option("--probes", default=50, type=int,
              help="scalability suite: searches timed per size.")
@click.option("--config", "config_path", default=None)
@click.option("--json", "as_json", is_flag=True)
def eval_cmd(suite, store_dir, input_path, out_dir, seed, fraction, k, tau,
             noise, sizes_text, probes, config_path, as_json):
    """Run an evaluation suite and write JSON + CSV + PNG artifacts."""
    config = _load(config_path)
    k = k if k is not None else config.search_k
    tau = tau if tau is not None else config.tau
    out = Path(out_dir) if out_dir else Path("reports") / suite

    if suite == "retrieval":
        report, human = _eval_retrieval(config, store_dir, seed, fraction,
                                        k, tau, out)
    elif suite == "text":
        report, human = _eval_text(input_path, out)
    elif suite == "robustness":
        report, human = _eval_robustness(config, store_dir, seed, fraction,
                                         k, tau, noise, out)
    else:
        report, human = _eval_scalability(seed, sizes_text, probes, k, out)
    _emit(report, as_json, human=human)


@main.command()
@click.option("--config", "config_path", default=None)
def serve(config_path):
    """Run the HTTP service until interrupted."""
    from . import service

    try:
        service.run(config_path)
    except SafeqaError as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.option("--text", required=True, help="The question to answer.")
@click.option("--lang", default=None)
@click.option("--session", "session_id", default="cli")
@click.option("--store", "store_dir", default=None)
@click.option("--config", "config_path", default=None)
@click.option("--json", "as_json", is_flag=True)
def ask(text, lang, session_id, store_dir, config_path, as_json):
    """Answer one question through the full in-process pipeline."""
    config = _load(config_path)
    if store_dir:
        config.store_dir = store_dir
    try:
        engine = build_engine(config)
        envelope = engine.answer(AskRequest(
            query_text=text, language=lang or config.source_lang,
            session_id=session_id))
    except SafeqaError as exc:
        raise click.ClickException(str(exc))
    triggered = list(envelope.rail_report.input_verdict.triggered)
    if envelope.rail_report.output_verdict:
        triggered += list(envelope.rail_report.output_verdict.triggered)
    human = "\n".join(filter(None, [
        f"route: {envelope.route_taken}",
        f"rails: {', '.join(triggered)}" if triggered else "",
        envelope.answer_text,
    ]))
    _emit(envelope.to_dict(), as_json, human=human)


if __name__ == "__main__":
    main()
