"""Administrative command line: import, index, search, validate, stats, serve.

Exit codes: 0 success, 1 validation findings (inadmissible or quarantined
entries), 2 usage error (bad flags, malformed query), 3 runtime failure
(unreadable files, lock contention, broken index).
"""

from __future__ import annotations

import json
import sys
import time

import click

from . import bibtex, importer, taxonomy
from .index import IndexBuildError, IndexFormatError, build_index, load_index, save_index
from .query import QueryParseError, run_query
from .service import ConfigError, LogKeyError, load_config

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def _fail(message: str) -> "SystemExit":
    click.echo(f"error: {message}", err=True)
    return SystemExit(EXIT_RUNTIME)


def _read_corpus(path: str):
    try:
        return bibtex.load_corpus(path)
    except OSError as exc:
        raise _fail(f"cannot read corpus {path}: {exc}") from exc


@click.group()
def main():
    """Administrative interface for the bibliographic search service."""


# ---------------------------------------------------------------------------

@main.command("import")
@click.option("--source", "source_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True, help="machine-readable report")
def import_cmd(source_dir, corpus_path, as_json):
    """One-way sync from a source directory into the corpus file."""
    client = importer.DirectorySource(source_dir)
    try:
        report = importer.sync(client, corpus_path)
    except importer.SyncError as exc:
        raise _fail(str(exc))
    if as_json:
        click.echo(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    else:
        click.echo(
            f"fetched {report.fetched}, accepted {report.accepted} "
            f"(replaced {report.replaced}), deduplicated {report.deduplicated}, "
            f"quarantined {report.quarantined}"
        )
        for decision in report.decisions:
            if decision.verdict == "quarantined":
                click.echo(f"  quarantined {decision.citation_key}: {decision.reason}")
    sys.exit(EXIT_FINDINGS if report.quarantined else EXIT_OK)


@main.command("index")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
def index_cmd(corpus_path, out_path, as_json):
    """Build the index file from a corpus; inadmissible entries are excluded."""
    entries, diagnostics = _read_corpus(corpus_path)
    admissible, quarantined = [], []
    for entry in entries:
        report = taxonomy.validate_entry(entry)
        if report.is_admissible_for_index:
            admissible.append(entry)
        else:
            missing = ", ".join(sorted(c.value for c in report.missing_classes))
            quarantined.append((entry.citation_key, f"missing tag class: {missing}"))

    started = time.perf_counter()
    try:
        snapshot = build_index(admissible)
        save_index(snapshot, out_path)
    except (IndexBuildError, OSError) as exc:
        raise _fail(str(exc))
    elapsed = time.perf_counter() - started

    if as_json:
        click.echo(json.dumps({
            "doc_count": snapshot.doc_count,
            "generation": snapshot.generation,
            "build_seconds": round(elapsed, 3),
            "quarantined": [{"citation_key": k, "reason": r} for k, r in quarantined],
            "parse_diagnostics": [
                {"severity": d.severity, "message": d.message, "line": d.line, "column": d.column}
                for d in diagnostics
            ],
        }, indent=2, sort_keys=True))
    else:
        click.echo(f"indexed {snapshot.doc_count} entries in {elapsed:.2f}s -> {out_path}")
        for key, reason in quarantined:
            click.echo(f"  excluded {key}: {reason}")
    sys.exit(EXIT_FINDINGS if quarantined else EXIT_OK)


@main.command("search")
@click.argument("query")
@click.option("--index", "index_path", required=True, type=click.Path())
@click.option("--offset", default=0, show_default=True)
@click.option("--limit", default=10, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def search_cmd(query, index_path, offset, limit, as_json):
    """Run a query against an index file."""
    try:
        snapshot = load_index(index_path)
    except (OSError, IndexFormatError) as exc:
        raise _fail(str(exc))
    try:
        response = run_query(snapshot, query, offset=offset, limit=limit)
    except QueryParseError as exc:
        raise click.UsageError(str(exc))  # exit code 2

    if as_json:
        click.echo(json.dumps({
            "hits": [
                {
                    "citation_key": h.citation_key,
                    "title": snapshot.entries[h.doc_id].fields.get("title", ""),
                    "year": snapshot.entries[h.doc_id].fields.get("year", ""),
                    "score": h.score,
                    "highlights": h.highlights,
                }
                for h in response.hits
            ],
            "total": response.total,
            "suggestions": [
                {"kind": s.kind, "original_term": s.original_term,
                 "suggested_term": s.suggested_term, "score": s.score}
                for s in response.suggestions
            ],
            "elapsed_ms": response.elapsed_ms,
        }, indent=2, sort_keys=True))
        sys.exit(EXIT_OK)

    if response.hits:
        width = max(len(h.citation_key) for h in response.hits)
        for hit in response.hits:
            entry = snapshot.entries[hit.doc_id]
            click.echo(
                f"{hit.citation_key:<{width}}  {entry.fields.get('year', '----'):>4}  "
                f"{hit.score:8.3f}  {entry.fields.get('title', '')}"
            )
    click.echo(f"{response.total} result(s) in {response.elapsed_ms:.1f} ms")
    if response.total == 0:
        spelling = [s for s in response.suggestions if s.kind == "spelling"]
        if spelling:
            best = max(spelling, key=lambda s: s.score)
            click.echo(f"Did you mean {best.suggested_term}?")
    sys.exit(EXIT_OK)


@main.command("validate")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
def validate_cmd(corpus_path, as_json):
    """Check every entry against the taxonomy completeness rule."""
    entries, diagnostics = _read_corpus(corpus_path)
    reports = [taxonomy.validate_entry(e) for e in entries]
    findings = [r for r in reports if not r.is_admissible_for_index]

    if as_json:
        click.echo(json.dumps({
            "entries": len(entries),
            "inadmissible": [
                {
                    "citation_key": r.citation_key,
                    "missing_classes": sorted(c.value for c in r.missing_classes),
                    "warnings": list(r.warnings),
                }
                for r in findings
            ],
            "parse_diagnostics": [
                {"severity": d.severity, "message": d.message, "line": d.line, "column": d.column}
                for d in diagnostics
            ],
        }, indent=2, sort_keys=True))
    else:
        for d in diagnostics:
            click.echo(f"{d.severity} {d.line}:{d.column} {d.message}")
        for r in findings:
            missing = ", ".join(sorted(c.value for c in r.missing_classes))
            click.echo(f"{r.citation_key}: missing tag class: {missing}")
        click.echo(f"{len(entries)} entries, {len(findings)} inadmissible")
    sys.exit(EXIT_FINDINGS if findings else EXIT_OK)


@main.command("stats")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["json", "text"]), default="text",
              show_default=True)
def stats_cmd(corpus_path, fmt):
    """Corpus statistics: years, tags per entry, popular tags, flavors."""
    entries, _ = _read_corpus(corpus_path)
    stats = taxonomy.corpus_statistics(entries).as_dict()
    if fmt == "json":
        click.echo(json.dumps(stats, indent=2, sort_keys=True))
        sys.exit(EXIT_OK)
    click.echo(f"entries: {stats['total_entries']}")
    click.echo("flavors: " + ", ".join(f"{k}={v}" for k, v in stats["flavors"].items()))
    click.echo("years: " + ", ".join(f"{y}:{c}" for y, c in stats["years"].items()))
    click.echo("tags per entry: " + ", ".join(f"{n}:{c}" for n, c in stats["tags_per_entry"].items()))
    for tag_class, ranked in stats["popular_tags"].items():
        top = ", ".join(f"{item['tag']}({item['count']})" for item in ranked[:5])
        click.echo(f"top {tag_class}: {top}")
    sys.exit(EXIT_OK)


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def serve_cmd(config_path):
    """Start the HTTP service (config file + DONUT_* environment)."""
    from . import service

    try:
        config = load_config(config_path)
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    try:
        service.run(config)
    except LogKeyError as exc:
        raise _fail(str(exc))


if __name__ == "__main__":
    main()
