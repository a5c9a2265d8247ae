"""One-way synchronization from an external source into the BibTeX corpus.

The pipeline: fetch every page, map raw records to entries, filter by
admissibility, deduplicate (DOI first, then folded title + year), apply
preprint-to-published replacement, and write the corpus atomically.
Direction is strictly source to corpus.

The reference SourceClient reads a local directory of JSON page files
(pages/0000.json, 0001.json, ...), emulating a paginated API so tests
run offline; a remote client is an adapter behind the same interface.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from dataclasses import dataclass, field as dc_field
from typing import Protocol

from .bibtex import (
    BibEntry,
    FingerprintError,
    entry_fingerprint,
    parse_bibtex,
    serialize_bibtex,
)
from .taxonomy import split_keywords, validate_entry
from .textnorm import fold

LOCK_NAME = "corpus.lock"

# hosts whose URLs count as open-access preprint links
DEFAULT_OA_HOSTS = frozenset({"arxiv.org", "biorxiv.org", "medrxiv.org"})


class SourceClient(Protocol):
    def fetch_page(self, cursor):
        """Return (records, next_cursor); next_cursor None means done."""

    def library_version(self) -> str: ...


class SyncError(RuntimeError):
    pass


class LockHeldError(SyncError):
    """Another sync holds the corpus lock."""


class DirectorySource:
    """SourceClient over a directory of `pages/NNNN.json` files."""

    def __init__(self, root: str):
        self.root = root
        self.pages_dir = os.path.join(root, "pages")

    def _pages(self) -> list[str]:
        if not os.path.isdir(self.pages_dir):
            return []
        names = [n for n in os.listdir(self.pages_dir) if re.fullmatch(r"\d{4}\.json", n)]
        return sorted(names)

    def fetch_page(self, cursor):
        pages = self._pages()
        i = 0 if cursor is None else cursor
        if i >= len(pages):
            return [], None
        with open(os.path.join(self.pages_dir, pages[i]), encoding="utf-8") as handle:
            records = json.load(handle)
        if not isinstance(records, list):
            raise SyncError(f"page {pages[i]} is not a JSON list")
        nxt = i + 1 if i + 1 < len(pages) else None
        return records, nxt

    def library_version(self) -> str:
        digest = hashlib.sha256()
        for name in self._pages():
            digest.update(name.encode())
            with open(os.path.join(self.pages_dir, name), "rb") as handle:
                digest.update(handle.read())
        return digest.hexdigest()


# ---------------------------------------------------------------------------
# Record mapping and admissibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Decision:
    citation_key: str
    verdict: str  # accepted | replaced | deduplicated | quarantined
    reason: str = ""


@dataclass
class ImportReport:
    fetched: int = 0
    accepted: int = 0
    quarantined: int = 0
    replaced: int = 0
    deduplicated: int = 0
    decisions: list = dc_field(default_factory=list)
    source_version: str = ""

    def consistent(self) -> bool:
        # replaced events are a subset of accepted ones
        return (
            self.fetched == self.accepted + self.quarantined + self.deduplicated
            and self.replaced <= self.accepted
        )

    def as_dict(self) -> dict:
        return {
            "fetched": self.fetched,
            "accepted": self.accepted,
            "quarantined": self.quarantined,
            "replaced": self.replaced,
            "deduplicated": self.deduplicated,
            "source_version": self.source_version,
            "decisions": [
                {"citation_key": d.citation_key, "verdict": d.verdict, "reason": d.reason}
                for d in self.decisions
            ],
        }


def map_record(raw) -> tuple[BibEntry | None, str]:
    """Raw source record -> entry, or (None, reason) when malformed."""
    if not isinstance(raw, dict):
        return None, "record is not an object"
    key = raw.get("key")
    if not isinstance(key, str) or not key.strip() or re.search(r"\s", key.strip()):
        return None, f"missing or malformed record key: {key!r}"
    fields_raw = raw.get("fields")
    if not isinstance(fields_raw, dict):
        return None, f"record {key!r} has no field map"
    fields = {}
    for name, value in fields_raw.items():
        if not isinstance(name, str):
            return None, f"record {key!r} has a non-string field name"
        fields[name.lower()] = value if isinstance(value, str) else str(value)
    entry_type = raw.get("type", "misc")
    if not isinstance(entry_type, str) or not entry_type.strip():
        entry_type = "misc"
    tags, flavors, _ = split_keywords(fields.get("keywords", ""))
    return BibEntry(entry_type.strip().lower(), key.strip(), fields, tags, flavors), ""


def admissibility_filter(entry: BibEntry) -> Decision:
    """Accept or quarantine one entry per the corpus inclusion policy.

    Accepted entries have a venue or an eprint marker, are fully tagged
    (one tag per class, no unknown tag classes), and are not abstract-only
    conference items. A missing DOI never rejects.
    """
    _, _, keyword_problems = split_keywords(entry.fields.get("keywords", ""))
    if keyword_problems:
        return Decision(entry.citation_key, "quarantined", keyword_problems[0])
    report = validate_entry(entry)
    if not report.is_admissible_for_index:
        missing = ", ".join(sorted(c.value for c in report.missing_classes))
        return Decision(entry.citation_key, "quarantined", f"missing tag class: {missing}")
    venue = entry.fields.get("journal", "").strip() or entry.fields.get("booktitle", "").strip()
    eprint = entry.fields.get("eprint", "").strip()
    if not venue and not eprint:
        return Decision(entry.citation_key, "quarantined", "neither a publication venue nor an eprint")
    if entry.entry_type == "inproceedings":
        note = entry.fields.get("note", "").strip().lower()
        pages = entry.fields.get("pages", "").strip().lower()
        if note == "abstract" or pages == "abstract":
            return Decision(entry.citation_key, "quarantined", "abstract-only conference item")
    return Decision(entry.citation_key, "accepted")


# ---------------------------------------------------------------------------
# Preprint replacement
# ---------------------------------------------------------------------------

def _url_host(url: str) -> str:
    from urllib.parse import urlparse

    host = urlparse(url.strip()).netloc.lower()
    return host[4:] if host.startswith("www.") else host


def is_open_access(entry: BibEntry, oa_hosts=DEFAULT_OA_HOSTS) -> bool:
    if entry.fields.get("oa", "").strip().lower() == "true":
        return True
    url = entry.fields.get("url", "").strip()
    return bool(url) and _url_host(url) in oa_hosts


def _preprint_link(entry: BibEntry) -> str:
    carried = entry.fields.get("preprint_url", "").strip()
    if carried:
        return carried
    url = entry.fields.get("url", "").strip()
    if url:
        return url
    eprint = entry.fields.get("eprint", "").strip()
    if eprint:
        return f"https://arxiv.org/abs/{eprint}"
    return ""


def _doi_of(entry: BibEntry) -> str:
    return entry.fields.get("doi", "").strip().lower()


def _title_fingerprint(entry: BibEntry) -> str | None:
    title = entry.fields.get("title", "").strip()
    if not title:
        return None
    return " ".join(fold(title).split()) + "|" + entry.fields.get("year", "").strip()


def _is_published(entry: BibEntry) -> bool:
    return bool(entry.fields.get("journal", "").strip() or entry.fields.get("booktitle", "").strip())


def _merge(preprint: BibEntry, published: BibEntry, oa_hosts=DEFAULT_OA_HOSTS) -> BibEntry:
    """Published side wins; preprint link and tag/flavor union survive."""
    fields = dict(published.fields)
    if not is_open_access(published, oa_hosts) and "preprint_url" not in fields:
        link = _preprint_link(preprint)
        if link and link != published.fields.get("url", "").strip():
            fields["preprint_url"] = link
    tags = preprint.tags | published.tags
    flavors = preprint.flavors | published.flavors
    if tags == published.tags and flavors == published.flavors:
        # nothing gained: keep the published keywords verbatim for stability
        return BibEntry(published.entry_type, published.citation_key, fields, tags, flavors)
    return BibEntry.make(published.entry_type, published.citation_key, fields, tags, flavors)


def replace_preprint(existing: BibEntry, published: BibEntry, oa_hosts=DEFAULT_OA_HOSTS) -> BibEntry:
    """Substitute the published version for its preprint.

    The two must agree on fingerprint or DOI. When the published version
    is not open access, the public preprint link is preserved in a
    `preprint_url` field; tags and flavors are the union of both sides.
    Replacing an entry by itself is the identity.
    """
    same_doi = _doi_of(existing) and _doi_of(existing) == _doi_of(published)
    try:
        same_fp = entry_fingerprint(existing) == entry_fingerprint(published)
    except FingerprintError:
        same_fp = False
    if not same_doi and not same_fp:
        raise ValueError(
            f"refusing to replace {existing.citation_key!r} with {published.citation_key!r}: "
            "fingerprints disagree"
        )
    return _merge(existing, published, oa_hosts)


def _resolve_pair(a: BibEntry, b: BibEntry, oa_hosts) -> tuple[BibEntry, bool]:
    """Merge two same-identity entries; returns (survivor, was_replacement)."""
    a_pub, b_pub = _is_published(a), _is_published(b)
    if b_pub and not a_pub:
        return _merge(a, b, oa_hosts), True
    if a_pub and not b_pub:
        return _merge(b, a, oa_hosts), True
    return _merge(a, b, oa_hosts), False  # same kind: later one refreshes


# ---------------------------------------------------------------------------
# Sync
# ---------------------------------------------------------------------------

class _CorpusLock:
    def __init__(self, corpus_path: str):
        directory = os.path.dirname(os.path.abspath(corpus_path))
        os.makedirs(directory, exist_ok=True)
        self.path = os.path.join(directory, LOCK_NAME)
        self.fd = None

    def __enter__(self):
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockHeldError(
                f"corpus lock {self.path} is held by another sync; remove it if stale"
            ) from None
        os.write(self.fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc):
        if self.fd is not None:
            os.close(self.fd)
        if os.path.exists(self.path):
            os.unlink(self.path)
        return False


def _group_by_identity(entries: list) -> list[list]:
    """Group same-work entries (shared DOI, else shared title+year)."""
    groups: list[list] = []
    group_of: dict = {}
    for entry in entries:
        keys = []
        doi = _doi_of(entry)
        if doi:
            keys.append(("doi", doi))
        tfp = _title_fingerprint(entry)
        if tfp is not None:
            keys.append(("tfp", tfp))
        if not keys:
            keys.append(("key", entry.citation_key))
        hits = sorted({group_of[k] for k in keys if k in group_of})
        if not hits:
            target = len(groups)
            groups.append([])
        else:
            target = hits[0]
            for other in hits[1:]:  # a record can bridge two groups
                groups[target].extend(groups[other])
                groups[other] = []
                for k, g in list(group_of.items()):
                    if g == other:
                        group_of[k] = target
        groups[target].append(entry)
        for k in keys:
            group_of[k] = target
    return [g for g in groups if g]


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".corpus-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sync(client: SourceClient, corpus_path: str, oa_hosts=DEFAULT_OA_HOSTS) -> ImportReport:
    """Pull every page from the client and fold it into the corpus file.

    All-or-nothing: any client failure leaves the corpus untouched. The
    write is atomic (temp file + rename) and deterministic (entries
    sorted by citation key), so re-running an identical sync produces a
    byte-identical corpus and an all-deduplicated report.
    """
    report = ImportReport()
    with _CorpusLock(corpus_path):
        # fetch everything up front so a mid-sync failure cannot leave
        # a partially applied corpus
        raw_records = []
        cursor = None
        while True:
            records, cursor = client.fetch_page(cursor)
            raw_records.extend(records)
            if cursor is None:
                break
        report.source_version = client.library_version()
        report.fetched = len(raw_records)

        if os.path.exists(corpus_path):
            with open(corpus_path, encoding="utf-8") as handle:
                old_text = handle.read()
            corpus, _ = parse_bibtex(old_text)
        else:
            old_text = ""
            corpus = []

        admissible: list[BibEntry] = []
        for i, raw in enumerate(raw_records):
            entry, problem = map_record(raw)
            if entry is None:
                report.quarantined += 1
                key = raw.get("key") if isinstance(raw, dict) else None
                report.decisions.append(
                    Decision(str(key or f"<record {i}>"), "quarantined", problem)
                )
                continue
            decision = admissibility_filter(entry)
            if decision.verdict == "quarantined":
                report.quarantined += 1
                report.decisions.append(decision)
            else:
                admissible.append(entry)
        admissible.sort(key=lambda e: e.citation_key)

        by_doi = {_doi_of(e): i for i, e in enumerate(corpus) if _doi_of(e)}
        by_tfp = {}
        for i, e in enumerate(corpus):
            tfp = _title_fingerprint(e)
            if tfp is not None:
                by_tfp[tfp] = i
        by_key = {e.citation_key: i for i, e in enumerate(corpus)}

        for group in _group_by_identity(admissible):
            # collapse in-batch duplicates; published versions win
            winner = group[0]
            group_replaced = False
            for member in group[1:]:
                survivor, was_replacement = _resolve_pair(winner, member, oa_hosts)
                loser = member if survivor.citation_key == winner.citation_key else winner
                report.deduplicated += 1
                report.decisions.append(
                    Decision(loser.citation_key, "deduplicated",
                             f"superseded in batch by {survivor.citation_key!r}")
                )
                winner = survivor
                group_replaced = group_replaced or was_replacement

            match = by_doi.get(_doi_of(winner)) if _doi_of(winner) else None
            if match is None:
                tfp = _title_fingerprint(winner)
                match = by_tfp.get(tfp) if tfp is not None else None
            if match is None:
                match = by_key.get(winner.citation_key)

            if match is None:
                corpus.append(winner)
                match = len(corpus) - 1
                report.accepted += 1
                if group_replaced:
                    report.replaced += 1
                    report.decisions.append(
                        Decision(winner.citation_key, "replaced", "published version replaces its preprint")
                    )
                else:
                    report.decisions.append(Decision(winner.citation_key, "accepted"))
            else:
                existing = corpus[match]
                merged, _ = _resolve_pair(existing, winner, oa_hosts)
                if merged == existing:
                    report.deduplicated += 1
                    report.decisions.append(
                        Decision(winner.citation_key, "deduplicated",
                                 f"already present as {existing.citation_key!r}")
                    )
                else:
                    corpus[match] = merged
                    report.accepted += 1
                    report.replaced += 1
                    report.decisions.append(
                        Decision(winner.citation_key, "replaced",
                                 f"supersedes {existing.citation_key!r}")
                    )
            final = corpus[match]
            if _doi_of(final):
                by_doi[_doi_of(final)] = match
            tfp = _title_fingerprint(final)
            if tfp is not None:
                by_tfp[tfp] = match
            by_key[final.citation_key] = match

        corpus.sort(key=lambda e: e.citation_key)
        new_text = serialize_bibtex(corpus)
        if new_text != old_text:
            _atomic_write(corpus_path, new_text)
    return report
