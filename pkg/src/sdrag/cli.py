"""Operator command line: every pipeline stage behind one entry point."""

from __future__ import annotations

import itertools
import json
import sys
import time
from pathlib import Path

import click

from .errors import SdragError, StageError
from .evaluation import evaluate_suite, load_cases
from .index import index_load
from .pipeline import (
    PipelineConfig,
    build_layout_backend,
    build_providers,
    answer_query,
    index_corpus,
    ingest_document,
    load_config,
)
from .providers import MockScript
from .raft import RaftConfig, build_dataset, emit_jsonl, format_chat, split_train_test
from . import pipeline as _pipeline
from .chunking import chunk_text
from .ingest import load_corpus


def _shared_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True),
                      default=None, help="YAML pipeline config.")(fn)
    fn = click.option("--mock-script", "mock_path", type=click.Path(exists=True),
                      default=None,
                      help="JSON mock script; makes the command network-free.")(fn)
    fn = click.option("--json", "as_json", is_flag=True,
                      help="Emit machine-readable JSON on stdout.")(fn)
    return fn


def _load_setup(config_path: str | None, mock_path: str | None):
    cfg = load_config(config_path) if config_path else None
    script = MockScript.from_file(mock_path) if mock_path else None
    if cfg is None:
        cfg = _default_config()
    providers = build_providers(cfg if not script else None, mock_script=script)
    clock = _counter_clock() if script else time.perf_counter
    return cfg, script, providers, clock


def _default_config() -> PipelineConfig:
    from .providers import ProviderConfig

    placeholder = ProviderConfig(endpoint_url="http://localhost:0/unconfigured",
                                 model_name="unconfigured")
    return PipelineConfig(
        providers={role: placeholder for role in _pipeline.PROVIDER_ROLES})


def _counter_clock():
    counter = itertools.count()
    return lambda: float(next(counter))


def _fail(exc: SdragError) -> None:
    stage = exc.stage if isinstance(exc, StageError) else exc.__class__.__name__
    click.echo(f"error[{stage}]: {exc}", err=True)
    sys.exit(1)


@click.group()
def main() -> None:
    """Structured-data-aware retrieval-augmented generation engine."""


@main.command()
@click.argument("pdf", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Corpus output directory.")
@_shared_options
def ingest(pdf: str, out_dir: str, config_path, mock_path, as_json) -> None:
    """Build a corpus bundle (base + table/image descriptions) from PDF."""
    try:
        cfg, script, providers, _ = _load_setup(config_path, mock_path)
        backend = build_layout_backend(cfg if not script else None, script)
        bundle = ingest_document(pdf, cfg, providers, backend, out_dir=out_dir)
    except SdragError as exc:
        _fail(exc)
        return
    payload = {
        "directory": str(bundle.directory),
        "elements": len(bundle.manifest),
        "partial": bundle.partial,
    }
    click.echo(json.dumps(payload) if as_json
               else f"corpus written to {bundle.directory} "
                    f"({len(bundle.manifest)} structured elements)")


@main.command()
@click.argument("corpus_dir", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Index output file.")
@_shared_options
def index(corpus_dir: str, out_path: str, config_path, mock_path, as_json) -> None:
    """Chunk, embed, and index a corpus directory."""
    try:
        cfg, _, providers, _ = _load_setup(config_path, mock_path)
        idx = index_corpus(corpus_dir, cfg, providers, out_path=out_path)
    except SdragError as exc:
        _fail(exc)
        return
    payload = {"index": str(out_path), "entries": len(idx), "dimension": idx.dimension}
    click.echo(json.dumps(payload) if as_json
               else f"indexed {len(idx)} chunks (dim {idx.dimension}) -> {out_path}")


@main.command()
@click.argument("index_path", type=click.Path())
@click.argument("question")
@_shared_options
def query(index_path: str, question: str, config_path, mock_path, as_json) -> None:
    """Answer one question against a persisted index."""
    try:
        cfg, _, providers, clock = _load_setup(config_path, mock_path)
        idx = index_load(index_path)
        result = answer_query(question, cfg, providers, index=idx, clock=clock)
    except SdragError as exc:
        _fail(exc)
        return
    if as_json:
        click.echo(json.dumps(result.to_dict(), ensure_ascii=False, sort_keys=True))
    else:
        click.echo(result.answer.text)
        for ctx in result.contexts:
            click.echo(f"  [{ctx.stage2_rank}] {ctx.chunk.chunk_id} "
                       f"(sim {ctx.stage1_similarity:.4f}, {ctx.rerank_source})")


@main.command()
@click.argument("index_path", type=click.Path())
@_shared_options
def chat(index_path: str, config_path, mock_path, as_json) -> None:
    """REPL: one question per line, EOF exits."""
    try:
        cfg, _, providers, clock = _load_setup(config_path, mock_path)
        idx = index_load(index_path)
    except SdragError as exc:
        _fail(exc)
        return
    for line in sys.stdin:
        question = line.strip()
        if not question:
            continue
        try:
            result = answer_query(question, cfg, providers, index=idx, clock=clock)
        except SdragError as exc:
            _fail(exc)
            return
        click.echo(json.dumps(result.to_dict(), ensure_ascii=False, sort_keys=True)
                   if as_json else result.answer.text)


@main.command("raft-gen")
@click.argument("corpus_dir", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Raw-record JSONL output path.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--ratio", type=float, default=0.9, show_default=True,
              help="Train fraction of the train/test split.")
@click.option("--num-distract", type=int, default=2, show_default=True)
@_shared_options
def raft_gen(corpus_dir: str, out_path: str, seed: int, ratio: float,
             num_distract: int, config_path, mock_path, as_json) -> None:
    """Build RAFT datasets: raw records, chat format, and the split."""
    try:
        cfg, _, providers, _ = _load_setup(config_path, mock_path)
        base, tables, images, _ = load_corpus(corpus_dir)
        chunks = []
        chunks += chunk_text("base", "\n".join(base.per_page_text),
                             cfg.chunk_max_tokens, document="base.pdf")
        chunks += chunk_text("table_desc", tables, cfg.chunk_max_tokens,
                             document="tables.txt")
        chunks += chunk_text("image_desc", images, cfg.chunk_max_tokens,
                             document="images.txt")
        raft_cfg = RaftConfig(num_distract_docs=num_distract, split_ratio=ratio,
                              rng_seed=seed)
        records = build_dataset(chunks, providers.generator_llm, raft_cfg)
        examples = [format_chat(r) for r in records]
        import random as _random
        train, test = split_train_test(records, ratio=ratio,
                                       rng=_random.Random(seed))
        out = Path(out_path)
        chat_path = out.with_suffix(".chat.jsonl")
        train_path = out.with_suffix(".train.jsonl")
        test_path = out.with_suffix(".test.jsonl")
        emit_jsonl(records, out)
        emit_jsonl(examples, chat_path)
        emit_jsonl([format_chat(r) for r in train], train_path)
        emit_jsonl([format_chat(r) for r in test], test_path)
    except SdragError as exc:
        _fail(exc)
        return
    payload = {
        "records": len(records),
        "train": len(train),
        "test": len(test),
        "raw": str(out),
        "chat": str(chat_path),
        "train_file": str(train_path),
        "test_file": str(test_path),
    }
    click.echo(json.dumps(payload) if as_json
               else f"{len(records)} records -> {out} "
                    f"(split {len(train)}/{len(test)})")


@main.command("eval")
@click.argument("cases_path", type=click.Path(exists=True))
@click.option("--out", "report_path", required=True, type=click.Path(),
              help="JSON report output path.")
@click.option("--judge-provider", default="judge_llm", show_default=True,
              help="Provider role used as the judge.")
@_shared_options
def eval_cmd(cases_path: str, report_path: str, judge_provider: str,
             config_path, mock_path, as_json) -> None:
    """Run the four-metric judge suite over a JSONL test set."""
    try:
        _, _, providers, _ = _load_setup(config_path, mock_path)
        cases = load_cases(cases_path)
        report = evaluate_suite(cases, providers.role(judge_provider),
                                providers.embedder)
        Path(report_path).write_text(
            json.dumps(report.to_dict(), ensure_ascii=False, indent=2,
                       sort_keys=True) + "\n",
            encoding="utf-8")
    except SdragError as exc:
        _fail(exc)
        return
    click.echo(json.dumps(report.to_dict(), ensure_ascii=False, sort_keys=True)
               if as_json else report.to_text_table())


@main.command()
@click.argument("index_path", type=click.Path())
@_shared_options
def inspect(index_path: str, config_path, mock_path, as_json) -> None:
    """Print index statistics."""
    try:
        idx = index_load(index_path)
    except SdragError as exc:
        _fail(exc)
        return
    roles: dict[str, int] = {}
    for c in idx.chunks:
        roles[c.doc_role] = roles.get(c.doc_role, 0) + 1
    payload = {
        "path": str(index_path),
        "entries": len(idx),
        "dimension": idx.dimension,
        "doc_roles": dict(sorted(roles.items())),
    }
    if as_json:
        click.echo(json.dumps(payload, sort_keys=True))
    else:
        click.echo(f"index {index_path}: {len(idx)} entries, "
                   f"dimension {idx.dimension}")
        for role, count in sorted(roles.items()):
            click.echo(f"  {role}: {count}")


if __name__ == "__main__":
    main()
