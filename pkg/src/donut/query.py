"""Query language: parsing, conjunctive execution with BM25, suggestions.

Grammar (the public contract, see QUERY_SYNTAX.md):

    query   := clause+
    clause  := prefix ":" value | prefix ":" quoted | quoted | word
    prefix  := title|author|tag|abstract|year|venue|doi|all
    quoted  := '"' ... '"'

All clauses are conjoined. A value after a known prefix runs to the next
whitespace, so colons stay inside tag values (tag:graphs:directed). An
unknown prefix is not an error: the whole token is searched literally
under `all` and a diagnostic is attached. Suggestions never rewrite the
query; they are advisory data on the response.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field

from .index import FieldPrefix, IndexSnapshot, _STEMMED
from .textnorm import fold, stem, tokenize

K1 = 1.2
B = 0.75

# prefixes whose values are single structured terms, folded but never tokenized
_STRUCTURED = frozenset({"tag", "doi", "year"})

_PREFIX_NAMES = {p.value for p in FieldPrefix}


class QueryParseError(ValueError):
    pass


@dataclass(frozen=True)
class Term:
    prefix: FieldPrefix
    text: str  # folded


@dataclass(frozen=True)
class Phrase:
    prefix: FieldPrefix
    texts: tuple  # folded tokens, in order

    def __post_init__(self):
        assert self.texts


@dataclass(frozen=True)
class QueryAst:
    clauses: tuple
    diagnostics: tuple = ()


@dataclass(frozen=True)
class Suggestion:
    kind: str  # spelling | related
    original_term: str
    suggested_term: str
    score: float


@dataclass
class Hit:
    citation_key: str
    doc_id: int
    score: float
    highlights: dict  # field name -> sorted matched terms


@dataclass
class SearchResponse:
    hits: list
    total: int
    suggestions: list
    elapsed_ms: float
    generation: int = 0


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _folded_parts(text: str) -> list[str]:
    """Folded tokens at distinct positions (hyphen duals collapsed to parts)."""
    parts = []
    last = -1
    for token in tokenize(text):
        if token.position > last:
            parts.append(token.folded)
            last = token.position
    return parts


def _free_text_clause(prefix: FieldPrefix, text: str, diagnostics: list):
    parts = _folded_parts(text)
    if not parts:
        diagnostics.append(f"term {text!r} contains no searchable characters")
        return None
    if len(parts) == 1:
        return Term(prefix, parts[0])
    # multi-token input (hyphenation, punctuation) behaves as a phrase
    return Phrase(prefix, tuple(parts))


def _phrase_clause(prefix: FieldPrefix, text: str, diagnostics: list):
    parts = _folded_parts(text)
    if not parts:
        diagnostics.append(f"phrase {text!r} contains no searchable characters")
        return None
    return Phrase(prefix, tuple(parts))


def parse_query(q: str) -> QueryAst:
    """Parse the query language; raises QueryParseError on empty input or
    an unterminated quote. Unknown prefixes degrade to literal terms with
    a diagnostic instead of failing."""
    if not q or not q.strip():
        raise QueryParseError("query is empty")

    clauses: list = []
    diagnostics: list = []
    pos, n = 0, len(q)

    def read_quoted(start: int) -> tuple[str, int]:
        end = q.find('"', start + 1)
        if end < 0:
            raise QueryParseError(f"unterminated quote at position {start}")
        return q[start + 1:end], end + 1

    while pos < n:
        if q[pos].isspace():
            pos += 1
            continue
        if q[pos] == '"':
            content, pos = read_quoted(pos)
            clause = _phrase_clause(FieldPrefix.ALL, content, diagnostics)
            if clause:
                clauses.append(clause)
            continue

        # bare word or prefix:value
        start = pos
        while pos < n and not q[pos].isspace() and q[pos] not in ':"':
            pos += 1
        head = q[start:pos]
        if pos < n and q[pos] == ":" and head.lower() in _PREFIX_NAMES:
            prefix = FieldPrefix(head.lower())
            pos += 1
            if pos < n and q[pos] == '"':
                content, pos = read_quoted(pos)
                if prefix.value in _STRUCTURED:
                    # structured values are single exact terms even when
                    # quoted: tag:"point cloud" must match that one tag
                    value = " ".join(fold(content).split())
                    if value:
                        clauses.append(Phrase(prefix, (value,)))
                    else:
                        diagnostics.append(f"field prefix {head!r} has no value; ignored")
                else:
                    clause = _phrase_clause(prefix, content, diagnostics)
                    if clause:
                        clauses.append(clause)
                continue
            vstart = pos
            while pos < n and not q[pos].isspace() and q[pos] != '"':
                pos += 1
            value = q[vstart:pos]
            if not value:
                diagnostics.append(f"field prefix {head!r} has no value; ignored")
                continue
            if prefix.value in _STRUCTURED:
                clauses.append(Term(prefix, fold(value)))
            else:
                clause = _free_text_clause(prefix, value, diagnostics)
                if clause:
                    clauses.append(clause)
            continue

        # not a known prefix: consume the rest of the whitespace-delimited
        # token (colons included) and treat it as one literal term
        while pos < n and not q[pos].isspace() and q[pos] != '"':
            pos += 1
        token = q[start:pos]
        if ":" in token:
            diagnostics.append(
                f"unknown field prefix in {token!r}; searched literally"
            )
            clauses.append(Term(FieldPrefix.ALL, fold(token)))
        else:
            clause = _free_text_clause(FieldPrefix.ALL, token, diagnostics)
            if clause:
                clauses.append(clause)

    if not clauses:
        raise QueryParseError("query contains no searchable terms")
    return QueryAst(tuple(clauses), tuple(diagnostics))


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

def _term_occurrences(snapshot: IndexSnapshot, prefix: str, text: str) -> dict:
    """doc_id -> match positions (a deduplicated tuple), both layers united.

    Both layers emit from the same token stream, so the stem posting for
    stem(text) already covers every folded occurrence of text; the only
    folded-exclusive positions are author-block ones inside the `all`
    mirror (author names are never stemmed). The union therefore needs a
    real merge only for docs where the two position lists differ.
    """
    folded = snapshot.postings.get(prefix, {}).get(text, {})
    if prefix not in _STEMMED:
        return folded
    stemmed = snapshot.postings_stem.get(prefix, {}).get(stem(text), {})
    if not folded:
        return stemmed
    if not stemmed:
        return folded
    matches = dict(stemmed)
    for doc, positions in folded.items():
        known = matches.get(doc)
        if known is None:
            matches[doc] = positions
        elif known != positions:
            matches[doc] = tuple(sorted({*known, *positions}))
    return matches


def _phrase_occurrences(snapshot: IndexSnapshot, prefix: str, texts: tuple) -> dict:
    """doc_id -> set of phrase start positions (contiguous folded tokens)."""
    layer = snapshot.postings.get(prefix, {})
    part_postings = [layer.get(t, {}) for t in texts]
    if not all(part_postings):
        return {}
    candidates = set(part_postings[0])
    for postings in part_postings[1:]:
        candidates &= set(postings)
    matches = {}
    for doc in candidates:
        starts = {
            p for p in part_postings[0][doc]
            if all(p + i in part_postings[i][doc] for i in range(1, len(texts)))
        }
        if starts:
            matches[doc] = starts
    return matches


def _clause_matches(snapshot: IndexSnapshot, clause) -> dict:
    if isinstance(clause, Term):
        return _term_occurrences(snapshot, clause.prefix.value, clause.text)
    return _phrase_occurrences(snapshot, clause.prefix.value, clause.texts)


# concrete fields behind the `all` mirror, for highlight attribution
_MIRRORED = ("title", "abstract", "venue", "author")


def _term_present(snapshot: IndexSnapshot, prefix: str, text: str, doc: int) -> bool:
    if doc in snapshot.postings.get(prefix, {}).get(text, {}):
        return True
    if prefix not in _STEMMED:
        return False
    return doc in snapshot.postings_stem.get(prefix, {}).get(stem(text), {})


def _phrase_present(snapshot: IndexSnapshot, prefix: str, texts: tuple, doc: int) -> bool:
    layer = snapshot.postings.get(prefix, {})
    parts = []
    for text in texts:
        positions = layer.get(text, {}).get(doc)
        if not positions:
            return False
        parts.append(positions)
    rest = [set(p) for p in parts[1:]]
    return any(
        all(start + i + 1 in rest[i] for i in range(len(rest)))
        for start in parts[0]
    )


def _highlights(snapshot: IndexSnapshot, clauses, doc: int) -> dict:
    found: dict[str, set] = {}
    for clause in clauses:
        prefixes = _MIRRORED if clause.prefix is FieldPrefix.ALL else (clause.prefix.value,)
        for prefix in prefixes:
            if isinstance(clause, Term):
                if _term_present(snapshot, prefix, clause.text, doc):
                    found.setdefault(prefix, set()).add(clause.text)
            else:
                if _phrase_present(snapshot, prefix, clause.texts, doc):
                    found.setdefault(prefix, set()).add(" ".join(clause.texts))
    return {field: sorted(terms) for field, terms in sorted(found.items())}


def execute(snapshot: IndexSnapshot, ast: QueryAst, offset: int = 0, limit: int = 10) -> SearchResponse:
    """Run a parsed query: conjunction of clauses, BM25 ranking, stable
    citation-key tie-break, offset/limit pagination."""
    started = time.perf_counter()
    per_clause = []
    survivors = None
    for clause in ast.clauses:
        matches = _clause_matches(snapshot, clause)
        per_clause.append(matches)
        survivors = set(matches) if survivors is None else survivors & matches.keys()
        if not survivors:
            break

    # hoist the per-clause BM25 constants out of the per-document loop
    n = snapshot.doc_count
    scoring = []
    for clause, matches in zip(ast.clauses, per_clause):
        prefix = clause.prefix.value
        df = len(matches)
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        scoring.append(
            (matches, idf, snapshot.lengths.get(prefix), snapshot.avg_length.get(prefix, 0.0))
        )

    entries = snapshot.entries
    scored = []
    for doc in survivors or ():
        score = 0.0
        for matches, idf, lengths, avg in scoring:
            tf = len(matches[doc])
            dl = lengths[doc] if lengths else 0
            norm = 1.0 - B + B * (dl / avg) if avg > 0 else 1.0
            score += idf * (tf * (K1 + 1.0)) / (tf + K1 * norm)
        scored.append((-score, entries[doc].citation_key, doc))
    scored.sort()

    hits = [
        Hit(key, doc, -negated, _highlights(snapshot, ast.clauses, doc))
        for negated, key, doc in scored[offset:offset + limit]
    ]
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    return SearchResponse(
        hits=hits,
        total=len(scored),
        suggestions=[],
        elapsed_ms=elapsed_ms,
        generation=snapshot.generation,
    )


# ---------------------------------------------------------------------------
# Suggestions
# ---------------------------------------------------------------------------

def damerau_levenshtein(a: str, b: str, cap: int = 2) -> int:
    """Restricted Damerau-Levenshtein (adjacent transposition counts 1).

    Returns cap + 1 as soon as the distance provably exceeds cap.
    """
    if a == b:
        return 0
    if abs(len(a) - len(b)) > cap:
        return cap + 1
    if not a or not b:
        return max(len(a), len(b))
    prev2 = None
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        row = [i] + [0] * len(b)
        for j, cb in enumerate(b, 1):
            cost = 0 if ca == cb else 1
            best = min(prev[j] + 1, row[j - 1] + 1, prev[j - 1] + cost)
            if prev2 is not None and i > 1 and j > 1 and ca == b[j - 2] and a[i - 2] == cb:
                best = min(best, prev2[j - 2] + 1)
            row[j] = best
        if min(row) > cap:
            return cap + 1
        prev2, prev = prev, row
    return min(prev[len(b)], cap + 1)


def _query_terms(ast: QueryAst):
    """(prefix value, folded term) pairs in query order, deduplicated."""
    seen = set()
    out = []
    for clause in ast.clauses:
        texts = (clause.text,) if isinstance(clause, Term) else clause.texts
        for text in texts:
            pair = (clause.prefix.value, text)
            if pair not in seen:
                seen.add(pair)
                out.append(pair)
    return out


def suggest(snapshot: IndexSnapshot, q: str, results_total: int) -> list:
    """Advisory spelling/related terms near the query's terms.

    Candidates come from the folded vocabulary of each term's own field
    prefix, within Damerau-Levenshtein distance 2; scored by normalized
    edit similarity times a normalized log-document-frequency weight.
    Top 3 per term. Never re-runs the query (results_total is reporting
    context only).
    """
    if snapshot.doc_count == 0:
        return []
    ast = parse_query(q)
    suggestions = []
    log_n = math.log(1.0 + snapshot.doc_count)
    for prefix, text in _query_terms(ast):
        vocabulary = snapshot.vocabulary.get(prefix, {})
        own_df = vocabulary.get(text, 0)
        kind = "spelling" if own_df == 0 else "related"
        candidates = []
        for term, df in vocabulary.items():
            if term == text or abs(len(term) - len(text)) > 2:
                continue
            distance = damerau_levenshtein(text, term, cap=2)
            if distance > 2:
                continue
            similarity = 1.0 - distance / max(len(text), len(term))
            weight = math.log(1.0 + df) / log_n
            score = similarity * min(weight, 1.0)
            if score > 0.0:
                candidates.append(Suggestion(kind, text, term, score))
        candidates.sort(key=lambda s: (-s.score, s.suggested_term))
        suggestions.extend(candidates[:3])
    return suggestions


def run_query(snapshot: IndexSnapshot, q: str, offset: int = 0, limit: int = 10,
              with_suggestions: bool = True) -> SearchResponse:
    """parse + execute + suggest in one call; the service and CLI entry point."""
    ast = parse_query(q)
    response = execute(snapshot, ast, offset=offset, limit=limit)
    if with_suggestions:
        response.suggestions = suggest(snapshot, q, response.total)
    return response
