import random

import pytest

from donut.index import FieldPrefix, build_index
from donut.query import (
    Phrase,
    QueryParseError,
    Term,
    damerau_levenshtein,
    execute,
    parse_query,
    run_query,
    suggest,
)
from oracles import edit_distance, matching_keys, reference_scores
from synth import make_corpus, random_query


class TestParse:
    def test_title_phrase(self):
        ast = parse_query('title:"general"')
        assert ast.clauses == (Phrase(FieldPrefix.TITLE, ("general",)),)

    def test_bare_term_vs_tag_term(self):
        assert parse_query("epilepsy").clauses == (Term(FieldPrefix.ALL, "epilepsy"),)
        assert parse_query("tag:epilepsy").clauses == (Term(FieldPrefix.TAG, "epilepsy"),)

    def test_tag_value_keeps_colons(self):
        ast = parse_query("tag:graphs:directed persistent")
        assert ast.clauses == (
            Term(FieldPrefix.TAG, "graphs:directed"),
            Term(FieldPrefix.ALL, "persistent"),
        )

    def test_bare_quoted_phrase(self):
        ast = parse_query('"high dimensional data"')
        assert ast.clauses == (Phrase(FieldPrefix.ALL, ("high", "dimensional", "data")),)

    def test_unknown_prefix_is_literal_with_diagnostic(self):
        ast = parse_query("foo:bar")
        assert ast.clauses == (Term(FieldPrefix.ALL, "foo:bar"),)
        assert any("foo:bar" in d for d in ast.diagnostics)

    def test_empty_query_raises(self):
        with pytest.raises(QueryParseError):
            parse_query("")
        with pytest.raises(QueryParseError):
            parse_query("   ")

    def test_unterminated_quote_raises(self):
        with pytest.raises(QueryParseError, match="unterminated"):
            parse_query('title:"general')

    def test_terms_are_folded(self):
        assert parse_query("PAWEŁ").clauses == (Term(FieldPrefix.ALL, "pawel"),)
        assert parse_query("author:Müller").clauses == (Term(FieldPrefix.AUTHOR, "muller"),)

    def test_hyphenated_terms_become_phrases(self):
        ast = parse_query("high-dimensional")
        assert ast.clauses == (Phrase(FieldPrefix.ALL, ("high", "dimensional")),)

    def test_structured_quoted_value_is_single_text(self):
        ast = parse_query('tag:"point cloud"')
        assert ast.clauses == (Phrase(FieldPrefix.TAG, ("point cloud",)),)

    def test_empty_prefix_value_diagnostic(self):
        ast = parse_query("title: general")
        assert ast.clauses == (Term(FieldPrefix.ALL, "general"),)
        assert any("title" in d for d in ast.diagnostics)


@pytest.fixture(scope="module")
def corpus():
    return make_corpus(101, 30)


@pytest.fixture(scope="module")
def snapshot(corpus):
    return build_index(corpus)


class TestGoldenBehavior:
    def test_title_general_exactly_one(self, golden_snapshot):
        response = run_query(golden_snapshot, 'title:"general"')
        assert [h.citation_key for h in response.hits] == ["dlotko2019euler"]
        assert response.total == 1

    def test_bare_general_title_and_abstracts(self, golden_snapshot):
        response = run_query(golden_snapshot, "general")
        assert {h.citation_key for h in response.hits} == {
            "dlotko2019euler", "ramirez2018seizure", "watts2021motifs"
        }

    def test_author_pawel(self, golden_snapshot):
        response = run_query(golden_snapshot, "author:pawel")
        assert [h.citation_key for h in response.hits] == ["dlotko2019euler"]

    def test_homollogy_zero_hits_spelling_suggestion(self, golden_snapshot):
        response = run_query(golden_snapshot, "homollogy")
        assert response.total == 0
        spelling = [s for s in response.suggestions if s.kind == "spelling"]
        assert spelling and spelling[0].suggested_term == "homology"
        assert 0.0 < spelling[0].score <= 1.0

    def test_homotopy_hits_plus_related_homology(self, golden_snapshot):
        response = run_query(golden_snapshot, "homotopy")
        assert {h.citation_key for h in response.hits} == {"ghrist2017homotopy"}
        related = [s for s in response.suggestions if s.kind == "related"]
        assert any(s.suggested_term == "homology" for s in related)

    def test_hyphen_spellings_match_each_other(self, golden_snapshot):
        hyphenated = run_query(golden_snapshot, "high-dimensional")
        spaced = run_query(golden_snapshot, '"high dimensional"')
        keys = lambda r: {h.citation_key for h in r.hits}
        assert keys(hyphenated) == keys(spaced) == {"huang2015highdim"}

    def test_stem_recall(self, golden_snapshot):
        response = run_query(golden_snapshot, "graph")
        assert "mueller2016graphs" in {h.citation_key for h in response.hits}

    def test_tag_hierarchy_prefix(self, golden_snapshot):
        directed = run_query(golden_snapshot, "tag:graphs:directed")
        assert {h.citation_key for h in directed.hits} == {"watts2021motifs"}
        parent = run_query(golden_snapshot, "tag:graphs")
        assert {h.citation_key for h in parent.hits} == {
            "watts2021motifs", "mueller2016graphs"
        }

    def test_year_and_doi_terms(self, golden_snapshot):
        assert {h.citation_key for h in run_query(golden_snapshot, "year:2019").hits} == {
            "dlotko2019euler"
        }
        assert {h.citation_key for h in run_query(
            golden_snapshot, "doi:10.1093/brain/awy123").hits} == {"ramirez2018seizure"}


class TestExecute:
    def test_empty_snapshot(self):
        empty = build_index([])
        response = execute(empty, parse_query("anything"))
        assert response.total == 0 and response.hits == []

    def test_scores_nonincreasing_and_ties_by_key(self, snapshot):
        response = execute(snapshot, parse_query("the"), limit=100)
        scores = [h.score for h in response.hits]
        assert scores == sorted(scores, reverse=True)
        for a, b in zip(response.hits, response.hits[1:]):
            if a.score == b.score:
                assert a.citation_key < b.citation_key

    def test_pagination(self, snapshot):
        full = execute(snapshot, parse_query("the"), limit=1000)
        page1 = execute(snapshot, parse_query("the"), offset=0, limit=3)
        page2 = execute(snapshot, parse_query("the"), offset=3, limit=3)
        assert [h.citation_key for h in page1.hits + page2.hits] == [
            h.citation_key for h in full.hits[:6]
        ]
        assert page1.total == page2.total == full.total

    def test_offset_beyond_total(self, snapshot):
        full = execute(snapshot, parse_query("the"), limit=1000)
        beyond = execute(snapshot, parse_query("the"), offset=full.total + 5, limit=3)
        assert beyond.hits == [] and beyond.total == full.total

    def test_identical_query_identical_order(self, snapshot):
        first = execute(snapshot, parse_query("stable metric"), limit=50)
        second = execute(snapshot, parse_query("stable metric"), limit=50)
        assert [h.citation_key for h in first.hits] == [h.citation_key for h in second.hits]

    def test_conjunction_semantics(self, snapshot, corpus):
        ast = parse_query("barcode filtration")
        got = {h.citation_key for h in execute(snapshot, ast, limit=1000).hits}
        left = {h.citation_key for h in execute(snapshot, parse_query("barcode"), limit=1000).hits}
        right = {h.citation_key for h in execute(snapshot, parse_query("filtration"), limit=1000).hits}
        assert got == left & right

    def test_phrase_subset_of_conjunction(self, snapshot):
        phrase = {h.citation_key for h in execute(
            snapshot, parse_query('"persistent homology"'), limit=1000).hits}
        conjunction = {h.citation_key for h in execute(
            snapshot, parse_query("persistent homology"), limit=1000).hits}
        assert phrase <= conjunction

    def test_field_monotonicity(self, snapshot):
        for word in ("barcode", "euler", "noise", "graph"):
            title_hits = {h.citation_key for h in execute(
                snapshot, parse_query(f"title:{word}"), limit=1000).hits}
            all_hits = {h.citation_key for h in execute(
                snapshot, parse_query(word), limit=1000).hits}
            assert title_hits <= all_hits

    def test_highlights_name_matched_fields(self, golden_snapshot):
        response = run_query(golden_snapshot, "homotopy")
        highlights = response.hits[0].highlights
        assert "title" in highlights and "abstract" in highlights
        assert highlights["title"] == ["homotopy"]


class TestOracleEquivalence:
    @pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
    def test_match_sets_and_scores(self, seed):
        corpus = make_corpus(seed + 200, 20)
        snapshot = build_index(corpus)
        rng = random.Random(seed)
        for _ in range(50):
            q = random_query(rng, corpus)
            try:
                ast = parse_query(q)
            except QueryParseError:
                continue
            response = execute(snapshot, ast, limit=1000)
            got = {h.citation_key for h in response.hits}
            want = matching_keys(corpus, ast)
            assert got == want, q
            reference = reference_scores(corpus, ast)
            for hit in response.hits:
                assert hit.score == pytest.approx(reference[hit.citation_key]), q


class TestSuggest:
    def test_no_rewrite_guarantee(self, snapshot):
        ast = parse_query("homolgy barcode")
        before = execute(snapshot, ast, limit=1000)
        suggest(snapshot, "homolgy barcode", before.total)
        after = execute(snapshot, ast, limit=1000)
        assert [h.citation_key for h in before.hits] == [h.citation_key for h in after.hits]

    def test_soundness(self, snapshot):
        rng = random.Random(7)
        for _ in range(40):
            q = random_query(rng, snapshot.entries)
            try:
                suggestions = suggest(snapshot, q, 0)
            except QueryParseError:
                continue
            for s in suggestions:
                vocabulary = snapshot.vocabulary.get(
                    next(c.prefix.value for c in parse_query(q).clauses
                         for t in ((c.text,) if isinstance(c, Term) else c.texts)
                         if t == s.original_term),
                    {},
                )
                assert s.suggested_term in vocabulary
                assert s.suggested_term != s.original_term
                assert damerau_levenshtein(s.original_term, s.suggested_term) <= 2
                assert 0.0 < s.score <= 1.0

    def test_top_three_per_term(self, snapshot):
        suggestions = suggest(snapshot, "metri", 0)
        originals = {}
        for s in suggestions:
            originals.setdefault(s.original_term, []).append(s)
        for batch in originals.values():
            assert len(batch) <= 3
            scores = [s.score for s in batch]
            assert scores == sorted(scores, reverse=True)

    def test_term_with_no_neighbors(self, golden_snapshot):
        assert suggest(golden_snapshot, "connectomics", 1) == [] or all(
            s.original_term != "connectomics" or s.suggested_term != "connectomics"
            for s in suggest(golden_snapshot, "connectomics", 1)
        )

    def test_empty_snapshot_no_suggestions(self):
        assert suggest(build_index([]), "anything", 0) == []


class TestEditDistance:
    def test_known_distances(self):
        assert damerau_levenshtein("homollogy", "homology") == 1
        assert damerau_levenshtein("homotopy", "homology") == 2
        assert damerau_levenshtein("abc", "acb") == 1  # transposition
        assert damerau_levenshtein("abc", "abc") == 0

    def test_cap_early_abandon(self):
        assert damerau_levenshtein("aaaaaaaa", "bbbbbbbb", cap=2) == 3

    def test_against_dp_oracle(self):
        rng = random.Random(13)
        alphabet = "abcdef"
        for _ in range(500):
            a = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 9)))
            b = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 9)))
            want = edit_distance(a, b)
            got = damerau_levenshtein(a, b, cap=2)
            if want <= 2:
                assert got == want, (a, b)
            else:
                assert got == 3, (a, b)
