"""Inverted index with field-prefixed postings and snapshot semantics.

Two posting layers share one position space: a folded layer (exact
normalized tokens, used for phrase matching) and a stem layer (stemmed
tokens for the free-text fields, used to widen term recall). Snapshots
are immutable; updates produce a new snapshot with generation + 1 by
re-deriving postings from the patched document list, which makes delta
application equivalent to a fresh rebuild by construction.

Persistence is a single self-contained file: magic, then four
length-prefixed JSON sections (header, document store, postings,
vocabulary) with little-endian u64 lengths, then a SHA-256 checksum of
everything before it. Writers are deterministic byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import tempfile
from dataclasses import dataclass, field as dc_field
from enum import Enum

from .bibtex import BibEntry, FingerprintError, entry_fingerprint
from .taxonomy import Flavor, Tag, validate_entry
from .textnorm import fold, stem, tokenize

log = logging.getLogger(__name__)

_MAGIC = b"DNUTIDX1"
_FORMAT_VERSION = 1

# position gap between concatenated blocks (fields in `all`, names in
# author); anything >= 2 is enough to break phrase contiguity
_BLOCK_GAP = 100

# free-text fields get stemmed forms; structured ones do not
_STEMMED = frozenset({"title", "abstract", "venue", "all"})


class FieldPrefix(str, Enum):
    TITLE = "title"
    AUTHOR = "author"
    TAG = "tag"
    ABSTRACT = "abstract"
    YEAR = "year"
    VENUE = "venue"
    DOI = "doi"
    ALL = "all"


# prefix -> {term -> {doc_id -> (positions...)}}
PostingMap = dict

@dataclass(frozen=True)
class Posting:
    term: str
    prefix: FieldPrefix
    doc_id: int
    positions: tuple

    def __post_init__(self):
        assert self.positions == tuple(sorted(set(self.positions)))


class IndexBuildError(ValueError):
    """Corpus cannot be indexed (duplicate keys or inadmissible entries)."""


class IndexFormatError(ValueError):
    """On-disk index file is malformed or fails its checksum."""


@dataclass(frozen=True)
class IndexSnapshot:
    """Immutable, queryable generation of the index."""

    generation: int
    entries: tuple  # BibEntry, position == doc_id
    postings: PostingMap          # folded layer
    postings_stem: PostingMap     # stem layer (free-text prefixes only)
    lengths: dict                 # prefix -> tuple of per-doc token counts
    vocabulary: dict              # prefix -> {term -> df}, folded layer
    vocabulary_stem: dict
    key_to_doc: dict = dc_field(repr=False, compare=False, default_factory=dict)
    avg_length: dict = dc_field(repr=False, compare=False, default_factory=dict)

    @property
    def doc_count(self) -> int:
        return len(self.entries)

    def entry(self, doc_id: int) -> BibEntry:
        return self.entries[doc_id]

    def by_key(self, citation_key: str):
        doc = self.key_to_doc.get(citation_key)
        return None if doc is None else self.entries[doc]


def venue_of(entry: BibEntry) -> str:
    return entry.fields.get("journal") or entry.fields.get("booktitle") or ""


# ---------------------------------------------------------------------------
# Tokenization of one document into (prefix, layer) -> [(term, position)]
# ---------------------------------------------------------------------------

def _text_block(text: str) -> tuple[list, list, int]:
    """Folded and stemmed (term, position) emissions plus the block span."""
    tokens = tokenize(text)
    folded = [(t.folded, t.position) for t in tokens]
    stemmed = [(stem(t.folded), t.position) for t in tokens]
    span = max((t.position for t in tokens), default=-1) + 1
    return folded, stemmed, span


def _shift(emissions: list, offset: int) -> list:
    return [(term, pos + offset) for term, pos in emissions]


def document_emissions(entry: BibEntry) -> tuple[dict, dict, dict]:
    """Map one entry to its postings contributions.

    Returns (folded, stemmed, lengths): the first two map prefix value ->
    list of (term, position); lengths maps prefix value -> token count.
    The `all` prefix mirrors the free-text fields (title, abstract,
    venue, author) with a position gap between blocks so phrases cannot
    match across field boundaries. Author tokens are never stemmed.
    """
    folded: dict[str, list] = {}
    stemmed: dict[str, list] = {}
    lengths: dict[str, int] = {}
    mirror_folded: list = []
    mirror_stemmed: list = []
    offset = 0

    def mirror(folded_block, stemmed_block, span):
        nonlocal offset
        if span == 0:
            return
        mirror_folded.extend(_shift(folded_block, offset))
        if stemmed_block is not None:
            mirror_stemmed.extend(_shift(stemmed_block, offset))
        offset += span + _BLOCK_GAP

    for prefix, text in (
        ("title", entry.fields.get("title", "")),
        ("abstract", entry.fields.get("abstract", "")),
        ("venue", venue_of(entry)),
    ):
        f, s, span = _text_block(text)
        if f:
            folded[prefix] = f
            stemmed[prefix] = s
            lengths[prefix] = len(f)
        mirror(f, s, span)

    author = entry.fields.get("author", "")
    if author.strip():
        name_folded: list = []
        base = 0
        for name in author.split(" and "):
            f, _, span = _text_block(name)
            name_folded.extend(_shift(f, base))
            base += span + _BLOCK_GAP
            mirror(f, None, span)
        if name_folded:
            folded["author"] = name_folded
            lengths["author"] = len(name_folded)

    year = entry.fields.get("year", "").strip()
    if year:
        folded["year"] = [(year, 0)]
        lengths["year"] = 1
    doi = entry.fields.get("doi", "").strip()
    if doi:
        folded["doi"] = [(fold(doi), 0)]
        lengths["doi"] = 1

    tag_terms = []
    counter = 0
    for tag in sorted(entry.tags):
        for depth in range(1, len(tag.path) + 1):
            tag_terms.append((":".join(tag.path[:depth]), counter))
            counter += 1
    if tag_terms:
        folded["tag"] = tag_terms
        lengths["tag"] = len(tag_terms)

    if mirror_folded:
        folded["all"] = mirror_folded
        stemmed["all"] = mirror_stemmed
        lengths["all"] = len(mirror_folded)
    return folded, stemmed, lengths


# ---------------------------------------------------------------------------
# Building
# ---------------------------------------------------------------------------

def _derive(entries: tuple, generation: int) -> IndexSnapshot:
    postings: PostingMap = {}
    postings_stem: PostingMap = {}
    lengths = {p.value: [0] * len(entries) for p in FieldPrefix}

    def add(layer: PostingMap, prefix: str, term: str, doc_id: int, position: int):
        layer.setdefault(prefix, {}).setdefault(term, {}).setdefault(doc_id, set()).add(position)

    for doc_id, entry in enumerate(entries):
        folded, stemmed, doc_lengths = document_emissions(entry)
        for prefix, emissions in folded.items():
            for term, position in emissions:
                add(postings, prefix, term, doc_id, position)
        for prefix, emissions in stemmed.items():
            for term, position in emissions:
                add(postings_stem, prefix, term, doc_id, position)
        for prefix, count in doc_lengths.items():
            lengths[prefix][doc_id] = count

    def freeze(layer: PostingMap) -> PostingMap:
        return {
            prefix: {
                term: {doc: tuple(sorted(positions)) for doc, positions in sorted(docs.items())}
                for term, docs in sorted(terms.items())
            }
            for prefix, terms in sorted(layer.items())
        }

    postings = freeze(postings)
    postings_stem = freeze(postings_stem)
    vocabulary = {p: {t: len(d) for t, d in terms.items()} for p, terms in postings.items()}
    vocabulary_stem = {p: {t: len(d) for t, d in terms.items()} for p, terms in postings_stem.items()}
    frozen_lengths = {prefix: tuple(counts) for prefix, counts in lengths.items()}
    return IndexSnapshot(
        generation=generation,
        entries=entries,
        postings=postings,
        postings_stem=postings_stem,
        lengths=frozen_lengths,
        vocabulary=vocabulary,
        vocabulary_stem=vocabulary_stem,
        key_to_doc={e.citation_key: i for i, e in enumerate(entries)},
        avg_length={
            prefix: (sum(counts) / len(counts) if counts else 0.0)
            for prefix, counts in frozen_lengths.items()
        },
    )


def _check_admissible(entries) -> None:
    seen: dict[str, int] = {}
    duplicates = []
    for entry in entries:
        if entry.citation_key in seen:
            duplicates.append(entry.citation_key)
        seen[entry.citation_key] = 1
    if duplicates:
        raise IndexBuildError(f"duplicate citation keys: {sorted(set(duplicates))}")
    rejected = []
    for entry in entries:
        report = validate_entry(entry)
        if not report.is_admissible_for_index:
            missing = ",".join(sorted(c.value for c in report.missing_classes))
            rejected.append(f"{entry.citation_key} (missing tag class: {missing})")
    if rejected:
        raise IndexBuildError(f"inadmissible entries: {rejected}")


def build_index(corpus: list) -> IndexSnapshot:
    """Index a corpus. Doc ids are dense, assigned in citation-key order.

    Raises IndexBuildError on duplicate keys or entries failing the
    taxonomy completeness rule; same corpus always yields an identical
    snapshot.
    """
    _check_admissible(corpus)
    entries = tuple(sorted(corpus, key=lambda e: e.citation_key))
    return _derive(entries, generation=1)


def apply_delta(snapshot: IndexSnapshot, upserts: list, deletions: list) -> IndexSnapshot:
    """New snapshot with upserts applied and keys deleted; generation + 1.

    An upsert matching an existing document by citation key or by
    fingerprint replaces it (through the preprint-replacement policy
    when fingerprints agree); unknown deletions only log a warning. The
    input snapshot is not touched and stays fully queryable.
    """
    from .importer import replace_preprint  # no cycle: importer never imports index

    entries = list(snapshot.entries)
    for key in deletions:
        doc = next((i for i, e in enumerate(entries) if e.citation_key == key), None)
        if doc is None:
            log.warning("delete of unknown citation key %r ignored", key)
        else:
            del entries[doc]

    def fingerprint_or_none(entry):
        try:
            return entry_fingerprint(entry)
        except FingerprintError:
            return None

    for upsert in upserts:
        fp = fingerprint_or_none(upsert)
        replaced = False
        for i, existing in enumerate(entries):
            if existing.citation_key == upsert.citation_key or (
                fp is not None and fingerprint_or_none(existing) == fp
            ):
                if fp is not None and fingerprint_or_none(existing) == fp:
                    entries[i] = replace_preprint(existing, upsert)
                else:
                    entries[i] = upsert
                replaced = True
                break
        if not replaced:
            entries.append(upsert)

    _check_admissible(entries)
    return _derive(tuple(sorted(entries, key=lambda e: e.citation_key)), snapshot.generation + 1)


def lookup(snapshot: IndexSnapshot, term: str, prefix: FieldPrefix) -> list:
    """Postings for an already-normalized term, folded and stem layers merged."""
    merged: dict[int, set] = {}
    for layer in (snapshot.postings, snapshot.postings_stem):
        for doc_id, positions in layer.get(prefix.value, {}).get(term, {}).items():
            merged.setdefault(doc_id, set()).update(positions)
    return [
        Posting(term, prefix, doc_id, tuple(sorted(positions)))
        for doc_id, positions in sorted(merged.items())
    ]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _entry_to_record(entry: BibEntry) -> dict:
    return {
        "entry_type": entry.entry_type,
        "citation_key": entry.citation_key,
        "fields": [[name, value] for name, value in entry.fields.items()],
        "tags": sorted(t.canonical for t in entry.tags),
        "flavors": sorted(f.value for f in entry.flavors),
    }


def _entry_from_record(record: dict) -> BibEntry:
    from .taxonomy import parse_tag

    return BibEntry(
        entry_type=record["entry_type"],
        citation_key=record["citation_key"],
        fields={name: value for name, value in record["fields"]},
        tags={parse_tag(raw) for raw in record["tags"]},
        flavors={Flavor(raw) for raw in record["flavors"]},
    )


def _layer_to_json(layer: PostingMap) -> dict:
    return {
        prefix: {term: [[doc, list(pos)] for doc, pos in docs.items()] for term, docs in terms.items()}
        for prefix, terms in layer.items()
    }


def _layer_from_json(data: dict) -> PostingMap:
    return {
        prefix: {term: {doc: tuple(pos) for doc, pos in docs} for term, docs in terms.items()}
        for prefix, terms in data.items()
    }


def _dump(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def save_index(snapshot: IndexSnapshot, path: str) -> None:
    """Write the snapshot atomically (temp file + rename), deterministically."""
    sections = [
        _dump({"format": _FORMAT_VERSION, "generation": snapshot.generation,
               "doc_count": snapshot.doc_count}),
        _dump([_entry_to_record(e) for e in snapshot.entries]),
        _dump({
            "folded": _layer_to_json(snapshot.postings),
            "stem": _layer_to_json(snapshot.postings_stem),
            "lengths": {prefix: list(counts) for prefix, counts in snapshot.lengths.items()},
        }),
        _dump({"folded": snapshot.vocabulary, "stem": snapshot.vocabulary_stem}),
    ]
    blob = bytearray(_MAGIC)
    for section in sections:
        blob += struct.pack("<Q", len(section))
        blob += section
    blob += hashlib.sha256(blob).digest()

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".index-", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(blob)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_index(path: str) -> IndexSnapshot:
    """Read and verify an index file; raises IndexFormatError when corrupt."""
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < len(_MAGIC) + 32 or not blob.startswith(_MAGIC):
        raise IndexFormatError("not an index file (bad magic)")
    body, checksum = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != checksum:
        raise IndexFormatError("index file failed checksum verification")

    sections = []
    pos = len(_MAGIC)
    while pos < len(body):
        if pos + 8 > len(body):
            raise IndexFormatError("truncated section header")
        (length,) = struct.unpack_from("<Q", body, pos)
        pos += 8
        if pos + length > len(body):
            raise IndexFormatError("truncated section payload")
        sections.append(body[pos:pos + length])
        pos += length
    if len(sections) != 4:
        raise IndexFormatError(f"expected 4 sections, found {len(sections)}")

    try:
        header = json.loads(sections[0])
        docstore = json.loads(sections[1])
        posting_data = json.loads(sections[2])
        vocab_data = json.loads(sections[3])
    except json.JSONDecodeError as exc:
        raise IndexFormatError(f"undecodable section: {exc}") from exc
    if header.get("format") != _FORMAT_VERSION:
        raise IndexFormatError(f"unsupported format version {header.get('format')!r}")

    entries = tuple(_entry_from_record(r) for r in docstore)
    if len(entries) != header.get("doc_count"):
        raise IndexFormatError("doc_count header does not match document store")
    lengths = {prefix: tuple(counts) for prefix, counts in posting_data["lengths"].items()}
    return IndexSnapshot(
        generation=header["generation"],
        entries=entries,
        postings=_layer_from_json(posting_data["folded"]),
        postings_stem=_layer_from_json(posting_data["stem"]),
        lengths=lengths,
        vocabulary=vocab_data["folded"],
        vocabulary_stem=vocab_data["stem"],
        key_to_doc={e.citation_key: i for i, e in enumerate(entries)},
        avg_length={
            prefix: (sum(counts) / len(counts) if counts else 0.0)
            for prefix, counts in lengths.items()
        },
    )
