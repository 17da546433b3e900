"""Command-line interface for the contract revision engine.

Every subcommand operates on a workspace directory, writes its JSON
artifact (report paths add CSV + figures), and prints a one-line JSON
summary to stdout. Exit codes: 0 success, 2 validation error, 1 runtime
error; errors are emitted as structured JSON on stderr.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .. import metrics as metrics_mod
from .. import retrieval as retrieval_mod
from .. import synthgen as synthgen_mod
from ..corpus import (
    Contract,
    ContractKind,
    DocumentFormat,
    Revision,
    parse_contract,
    weak_label,
)
from ..errors import EmptyStore, RevkitError, ValidationError
from .config import generation_config, load_config
from .engine import Engine
from .report import (
    classifier_report,
    fid_report,
    flags_report,
    optimization_report,
    retrieval_report,
)
from .workspace import FlagStatus, Workspace

import numpy as np


def _emit(data: dict) -> None:
    click.echo(json.dumps(data, ensure_ascii=False, default=str))


def _fail(exc: Exception, code: int) -> None:
    click.echo(
        json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True
    )
    sys.exit(code)


def engine_command(fn):
    """Wrap a command body with the exit-code and stderr-JSON contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            _fail(exc, 2)
        except RevkitError as exc:
            _fail(exc, 1)
        except OSError as exc:
            _fail(exc, 1)

    return wrapper


@click.group()
@click.option(
    "--workspace", "-w", type=click.Path(path_type=Path), default=Path("workspace"),
    help="Workspace directory (created on demand).",
)
@click.option(
    "--config", "-c", "config_path", type=click.Path(path_type=Path), default=None,
    help="Config file; defaults to <workspace>/config.json.",
)
@click.pass_context
def main(ctx: click.Context, workspace: Path, config_path: Path | None):
    """Contract revision engine: flag, retrieve, rewrite, review."""
    ctx.ensure_object(dict)
    config = load_config(config_path or workspace / "config.json")
    ws = Workspace.init(workspace)
    ctx.obj["engine"] = Engine(ws, config)
    ctx.obj["workspace"] = ws
    ctx.obj["config"] = config


def _load_contract(path: Path, fmt: str, contract_id: str | None, kind: str) -> Contract:
    raw = path.read_text(encoding="utf-8")
    if fmt == "auto":
        fmt = "structured" if path.suffix == ".json" else "plain"
    document_format = (
        DocumentFormat.STRUCTURED if fmt == "structured" else DocumentFormat.PLAIN_TEXT
    )
    return parse_contract(
        raw, document_format, contract_id=contract_id, kind=ContractKind(kind)
    )


@main.command()
@click.option("--contract", "contract_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--format", "fmt", type=click.Choice(["auto", "plain", "structured"]), default="auto")
@click.option("--template", "template_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--id", "contract_id", default=None, help="Contract id for plain-text input.")
@click.option("--kind", type=click.Choice([k.value for k in ContractKind]), default="Other")
@click.option("--weak-label/--no-weak-label", "do_weak_label", default=True,
              help="Derive labeled revisions when a template is given.")
@click.pass_context
@engine_command
def ingest(ctx, contract_path, fmt, template_path, contract_id, kind, do_weak_label):
    """Parse a contract, store it, and weak-label against a template."""
    engine: Engine = ctx.obj["engine"]
    contract = _load_contract(contract_path, fmt, contract_id, kind)
    added = 0
    if template_path is not None:
        template = _load_contract(template_path, fmt, None, kind)
        if do_weak_label:
            revisions = weak_label(contract, template)
            existing = {r.id for r in engine.workspace.load_revisions()}
            fresh = [r for r in revisions if r.id not in existing]
            engine.workspace.append_revisions(fresh)
            added = len(fresh)
    current = engine.extract_current_revisions(contract)
    engine.workspace.save_contract_doc(Workspace.contract_doc(contract, current, []))
    _emit(
        {
            "contract_id": contract.id,
            "provisions": len(contract.provisions),
            "current_revisions": len(current),
            "labeled_revisions_added": added,
        }
    )


@main.command()
@click.pass_context
@engine_command
def embed(ctx):
    """Embed labeled revisions that are not yet in the vector store."""
    engine: Engine = ctx.obj["engine"]
    count = engine.embed_missing()
    _emit({"embedded": count, "store_size": len(engine.store)})


@main.command("synth-generate")
@click.option("--provisions", "provisions_path", type=click.Path(exists=True, path_type=Path), required=True,
              help="Contract file whose provisions are the generation queries.")
@click.option("--demos", "demos_path", type=click.Path(exists=True, path_type=Path), required=True,
              help="JSON list of demonstration pair objects.")
@click.option("--rounds", type=int, default=1, help="Generation rounds over the provision list.")
@click.option("--filter/--no-filter", "use_filter", default=True,
              help="Apply the kNN label-agreement filter against the labeled store.")
@click.option("--output", type=click.Path(path_type=Path), default=None)
@click.pass_context
@engine_command
def synth_generate(ctx, provisions_path, demos_path, rounds, use_filter, output):
    """Generate labeled synthetic revisions with the configured LLM."""
    engine: Engine = ctx.obj["engine"]
    contract = _load_contract(provisions_path, "auto", None, "Other")
    demos = [
        synthgen_mod.DemonstrationPair(**d)
        for d in json.loads(Path(demos_path).read_text(encoding="utf-8"))
    ]
    provisions = list(contract.provisions) * max(1, rounds)
    store = engine.store if use_filter and len(engine.store) else None
    report = synthgen_mod.generate_dataset(
        engine.llm,
        provisions,
        demos,
        generation_config(ctx.obj["config"]),
        store,
        embedder=engine.embedder if store is not None else None,
    )
    output = output or engine.workspace.root / "synthetic.jsonl"
    output.parent.mkdir(parents=True, exist_ok=True)
    with output.open("w", encoding="utf-8") as fh:
        for revision in report.kept:
            fh.write(json.dumps(revision.to_dict(), ensure_ascii=False) + "\n")
    manifest_path = output.with_suffix(".manifest.json")
    manifest_path.write_text(json.dumps(report.manifest, indent=2), encoding="utf-8")
    _emit(
        {
            "kept": len(report.kept),
            "discarded": report.discarded_count,
            "malformed": report.malformed_count,
            "errors": report.error_count,
            "output": str(output),
            "manifest": str(manifest_path),
        }
    )


@main.command("synth-filter")
@click.option("--input", "input_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--output", type=click.Path(path_type=Path), default=None)
@click.option("--k", type=int, default=20, help="Neighbors consulted per candidate.")
@click.pass_context
@engine_command
def synth_filter(ctx, input_path, output, k):
    """Filter a synthetic revision JSONL by kNN label agreement."""
    engine: Engine = ctx.obj["engine"]
    revisions = [
        Revision.from_dict(json.loads(line))
        for line in Path(input_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    if not revisions:
        raise ValidationError(f"{input_path} holds no revisions")
    kept, discarded = [], 0
    for revision in revisions:
        decision = synthgen_mod.knn_filter(
            revision, engine.store, k, provider=engine.embedder
        )
        if decision is synthgen_mod.FilterDecision.KEEP:
            kept.append(revision)
        else:
            discarded += 1
    output = output or input_path.with_suffix(".kept.jsonl")
    with output.open("w", encoding="utf-8") as fh:
        for revision in kept:
            fh.write(json.dumps(revision.to_dict(), ensure_ascii=False) + "\n")
    _emit({"kept": len(kept), "discarded": discarded, "output": str(output)})


@main.command("train-classifier")
@click.option("--clusters", "-k", "k_override", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
@engine_command
def train_classifier(ctx, k_override, seed):
    """Train a new classifier version on the labeled embedding store."""
    engine: Engine = ctx.obj["engine"]
    overrides = {}
    if k_override is not None:
        overrides["K"] = k_override
    if seed is not None:
        overrides["seed"] = seed
    result = engine.train_model(**overrides)
    _emit(result)


@main.command()
@click.option("--contract", "contract_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--contract-id", default=None, help="Re-classify an already ingested contract.")
@click.option("--format", "fmt", type=click.Choice(["auto", "plain", "structured"]), default="auto")
@click.option("--outdir", type=click.Path(path_type=Path), default=None)
@click.pass_context
@engine_command
def classify(ctx, contract_path, contract_id, fmt, outdir):
    """Flag likely-unacceptable revisions in a contract."""
    engine: Engine = ctx.obj["engine"]
    if contract_path is not None:
        contract = _load_contract(contract_path, fmt, None, "Other")
    elif contract_id is not None:
        contract = engine.workspace.load_contract(contract_id)
        if contract is None:
            raise ValidationError(f"unknown contract {contract_id!r}")
    else:
        raise ValidationError("pass --contract or --contract-id")
    flags = engine.ingest_contract(contract)
    outdir = outdir or engine.workspace.root / "reports" / "classify"
    written = flags_report([f.to_dict() for f in flags], outdir)
    _emit(
        {
            "contract_id": contract.id,
            "flagged": len(flags),
            "flag_ids": [f.revision_id for f in flags],
            "artifacts": [str(p) for p in written],
        }
    )


@main.command()
@click.option("--query", default=None, help="Free-text query.")
@click.option("--revision-id", default=None, help="Use a stored revision as the query.")
@click.option("--top-k", type=int, default=None)
@click.option("--rerank/--no-rerank", "do_rerank", default=False)
@click.option("--keep", type=int, default=None)
@click.option("--output", type=click.Path(path_type=Path), default=None)
@click.pass_context
@engine_command
def retrieve(ctx, query, revision_id, top_k, do_rerank, keep, output):
    """Retrieve precedent revisions for a query."""
    engine: Engine = ctx.obj["engine"]
    config = ctx.obj["config"]
    top_k = top_k or int(config["retrieval"]["top_k"])
    texts = engine.workspace.revision_texts()
    if query is None and revision_id is None:
        raise ValidationError("pass --query or --revision-id")
    if revision_id is not None:
        query_text = texts.get(revision_id)
        if query_text is None:
            raise ValidationError(f"unknown revision {revision_id!r}")
        stored = engine.store.get(revision_id)
        vec = stored.vector if stored else engine.embedder.embed([query_text])[0]
        hits = engine.store.query(
            vec, top_k=top_k, filter=lambda r: r.revision_id != revision_id
        )
    else:
        query_text = query
        vec = engine.embedder.embed([query])[0]
        hits = engine.store.query(vec, top_k=top_k)
    candidates = [
        retrieval_mod.RankedCandidate(
            h.record.revision_id, texts.get(h.record.revision_id, ""), h.score
        )
        for h in hits
    ]
    if do_rerank:
        keep = keep or min(int(config["retrieval"]["rerank_keep"]), len(candidates))
        candidates = retrieval_mod.rerank(engine.scorer, query_text, candidates, keep)
    results = [
        {"revision_id": c.revision_id, "score": c.score, "text": c.text}
        for c in candidates
    ]
    if output:
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(json.dumps({"query": query_text, "results": results}, indent=2))
    _emit({"query": query_text, "results": results})


@main.command()
@click.option("--contract-id", required=True, help="Previously classified contract.")
@click.option("--best-of-n", type=int, default=None)
@click.option("--outdir", type=click.Path(path_type=Path), default=None)
@click.pass_context
@engine_command
def optimize(ctx, contract_id, best_of_n, outdir):
    """Rewrite every open flag of a contract via best-of-N reward selection."""
    engine: Engine = ctx.obj["engine"]
    flags = engine.flags_for(contract_id)
    overrides = {"best_of_n": best_of_n} if best_of_n else {}
    results, errors = [], []
    for flag in flags:
        if flag.status is FlagStatus.DECIDED:
            continue
        try:
            results.append(engine.optimize_revision(flag.revision_id, **overrides))
        except RevkitError as exc:
            errors.append(
                {"revision_id": flag.revision_id, "error": type(exc).__name__, "message": str(exc)}
            )
    doc = engine.workspace.load_contract_doc(contract_id)
    _version, model = engine.current_model()
    from ..classifier import predict as predict_fn

    def rate(texts_list):
        if not texts_list:
            return None
        from ..corpus import Label

        vecs = engine.embedder.embed(texts_list)
        return sum(
            1 for v in vecs if predict_fn(model, v).label is Label.ACCEPTABLE
        ) / len(texts_list)

    originals = [
        doc["revisions"][f.revision_id]["text"]
        for f in flags
        if f.revision_id in doc.get("revisions", {})
    ]
    chosen = [r["candidates"][r["chosen_index"]]["text"] for r in results]
    report = {
        "contract_id": contract_id,
        "results": results,
        "errors": errors,
        "success_rate_before": rate(originals),
        "success_rate_after": rate(chosen),
    }
    outdir = outdir or engine.workspace.root / "reports" / "optimize"
    written = optimization_report(report, outdir)
    _emit(
        {
            "contract_id": contract_id,
            "optimized": len(results),
            "errors": len(errors),
            "success_rate_before": report["success_rate_before"],
            "success_rate_after": report["success_rate_after"],
            "artifacts": [str(p) for p in written],
        }
    )


@main.command()
@click.option("--what", type=click.Choice(["classifier", "retrieval", "fid"]), default="classifier")
@click.option("--pairs", "pairs_path", type=click.Path(exists=True, path_type=Path), default=None,
              help="Retrieval eval pairs JSONL: {query, gold_id}.")
@click.option("--ks", default="1,5,10", help="Comma-separated k values for retrieval.")
@click.option("--rerank/--no-rerank", "do_rerank", default=False)
@click.option("--real", "real_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--synth", "synth_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--outdir", type=click.Path(path_type=Path), default=None)
@click.pass_context
@engine_command
def evaluate(ctx, what, pairs_path, ks, do_rerank, real_path, synth_path, outdir):
    """Evaluate the classifier, retrieval quality, or dataset FID."""
    engine: Engine = ctx.obj["engine"]
    outdir = outdir or engine.workspace.root / "reports" / f"evaluate-{what}"
    if what == "classifier":
        records = engine._labeled_records()
        if not records:
            raise EmptyStore("no labeled embeddings in store")
        _version, model = engine.current_model()
        from ..classifier import evaluate_classifier

        metrics = evaluate_classifier(model, records)
        written = classifier_report(metrics, outdir)
        _emit({"metrics": metrics, "artifacts": [str(p) for p in written]})
    elif what == "retrieval":
        if pairs_path is None:
            raise ValidationError("--pairs is required for retrieval evaluation")
        pairs = [
            (row["query"], row["gold_id"])
            for row in map(
                json.loads,
                filter(None, Path(pairs_path).read_text(encoding="utf-8").splitlines()),
            )
        ]
        texts = engine.workspace.revision_texts()
        result = retrieval_mod.evaluate_retrieval(
            engine.store,
            pairs,
            [int(k) for k in ks.split(",")],
            provider=engine.embedder,
            scorer=engine.scorer if do_rerank else None,
            texts=texts if do_rerank else None,
        )
        written = retrieval_report(result, outdir)
        _emit({"metrics": result, "artifacts": [str(p) for p in written]})
    else:
        if real_path is None or synth_path is None:
            raise ValidationError("--real and --synth exports are required for FID")
        real = _load_export_vectors(real_path)
        synth = _load_export_vectors(synth_path)
        fid = metrics_mod.fid_datasets(real, synth)
        written = fid_report({"fid": fid, "real": str(real_path), "synth": str(synth_path)}, outdir)
        _emit({"fid": fid, "artifacts": [str(p) for p in written]})


def _load_export_vectors(path: Path) -> np.ndarray:
    rows = [
        json.loads(line)
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    if not rows:
        raise ValidationError(f"{path} holds no embedding rows")
    return np.asarray([row["vector"] for row in rows], dtype=np.float64)


@main.command("export-embeddings")
@click.option("--output", type=click.Path(path_type=Path), required=True)
@click.pass_context
@engine_command
def export_embeddings(ctx, output):
    """Dump the vector store as JSONL for external visualization."""
    engine: Engine = ctx.obj["engine"]
    count = metrics_mod.export_embeddings(engine.store, output)
    _emit({"exported": count, "output": str(output)})


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8321)
@click.pass_context
@engine_command
def serve(ctx, host, port):
    """Start the HTTP review service over this workspace."""
    import uvicorn

    from .app import create_app

    engine: Engine = ctx.obj["engine"]
    app = create_app(engine.workspace.root, config=ctx.obj["config"])
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
