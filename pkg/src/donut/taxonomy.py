"""Tag classes, flavors, hierarchical tag paths, and corpus statistics.

Tags are classified labels: every tag belongs to one of three closed
classes (area, tool, input) and carries a general-to-specific path, e.g.
``area:medicine:neurology:epilepsy``. An entry is admissible for indexing
only when it has at least one tag of every class. Flavors (innovate,
confirm) are optional labels and never affect admissibility.

In BibTeX form, tags and flavors travel in the ``keywords`` field,
semicolon-separated, each item in canonical ``class:seg1:seg2`` form
(flavors as ``flavor:innovate`` / ``flavor:confirm``).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable

from .textnorm import fold

if TYPE_CHECKING:
    from .bibtex import BibEntry

__all__ = [
    "TagClass", "Tag", "Flavor", "TagError", "ValidationReport",
    "parse_tag", "split_keywords", "join_keywords", "validate_entry",
    "TagNode", "tag_tree", "CorpusStatistics", "corpus_statistics",
]


class TagClass(str, Enum):
    AREA = "area"
    TOOL = "tool"
    INPUT = "input"


class Flavor(str, Enum):
    INNOVATE = "innovate"
    CONFIRM = "confirm"


class TagError(ValueError):
    """Raised for strings that do not denote a valid tag."""


_SEGMENT_RE = re.compile(r"[a-z0-9][a-z0-9 _-]*\Z")


@dataclass(frozen=True, order=True)
class Tag:
    """A classified hierarchical label: class plus path segments."""

    tag_class: TagClass
    path: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.path:
            raise TagError("tag path must have at least one segment")
        for segment in self.path:
            if not _SEGMENT_RE.match(segment):
                raise TagError(f"invalid tag segment: {segment!r}")

    @property
    def canonical(self) -> str:
        """String form with the class prefix, e.g. 'tool:graphs:directed'."""
        return ":".join((self.tag_class.value, *self.path))

    @property
    def path_string(self) -> str:
        return ":".join(self.path)

    def prefixes(self) -> Iterable[Tag]:
        """Every ancestor-or-self tag, shortest first (hierarchy closure)."""
        for i in range(1, len(self.path) + 1):
            yield Tag(self.tag_class, self.path[:i])

    def __str__(self) -> str:
        return self.canonical


def parse_tag(raw: str) -> Tag:
    """Parse 'class:seg1:seg2' into a Tag; trims and case-folds segments.

    The first segment must name one of the three tag classes. Flavors are
    not tags and are rejected here; the importer splits them out upstream.
    """
    if not raw or not raw.strip():
        raise TagError("empty tag")
    segments = [fold(part.strip()) for part in raw.split(":")]
    class_name, path = segments[0], segments[1:]
    try:
        tag_class = TagClass(class_name)
    except ValueError:
        raise TagError(f"unknown tag class: {class_name!r}") from None
    if not path:
        raise TagError(f"tag {raw!r} has no path after its class")
    if any(not segment for segment in path):
        raise TagError(f"empty segment in tag {raw!r}")
    return Tag(tag_class, tuple(path))


def split_keywords(value: str) -> tuple[set[Tag], set[Flavor], list[str]]:
    """Split a keywords field into tags, flavors, and per-item warnings."""
    tags: set[Tag] = set()
    flavors: set[Flavor] = set()
    warnings: list[str] = []
    for item in value.split(";"):
        item = item.strip()
        if not item:
            continue
        head = fold(item.split(":", 1)[0].strip())
        if head == "flavor":
            name = fold(item.split(":", 1)[1].strip()) if ":" in item else ""
            try:
                flavors.add(Flavor(name))
            except ValueError:
                warnings.append(f"unknown flavor: {item!r}")
            continue
        try:
            tags.add(parse_tag(item))
        except TagError as exc:
            warnings.append(str(exc))
    return tags, flavors, warnings


def join_keywords(tags: Iterable[Tag], flavors: Iterable[Flavor]) -> str:
    """Canonical keywords field value: sorted tags, then sorted flavors."""
    items = sorted(tag.canonical for tag in tags)
    items += [f"flavor:{flavor.value}" for flavor in sorted(flavors, key=lambda f: f.value)]
    return "; ".join(items)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    """Outcome of the one-tag-per-class completeness check for one entry."""

    citation_key: str
    missing_classes: frozenset[TagClass]
    warnings: list[str] = field(default_factory=list)

    @property
    def is_admissible_for_index(self) -> bool:
        return not self.missing_classes


def validate_entry(entry: "BibEntry") -> ValidationReport:
    """Check the hard per-class rule; flavors never affect the outcome."""
    present = {tag.tag_class for tag in entry.tags}
    missing = frozenset(c for c in TagClass if c not in present)
    return ValidationReport(entry.citation_key, missing)


# ---------------------------------------------------------------------------
# Tag tree
# ---------------------------------------------------------------------------

@dataclass
class TagNode:
    """One segment in the hierarchy; count = entries at or below this node."""

    segment: str
    count: int
    children: list["TagNode"] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "segment": self.segment,
            "count": self.count,
            "children": [child.as_dict() for child in self.children],
        }


def tag_tree(corpus: Iterable["BibEntry"]) -> dict[TagClass, list[TagNode]]:
    """Per-class hierarchy with distinct-entry counts on every node.

    An entry tagged both 'tool:graphs' and 'tool:graphs:directed' counts
    once on the 'graphs' node; children are sorted by segment.
    """
    # node key -> set of entry ids, so multi-tagged entries count once
    members: dict[TagClass, dict[tuple[str, ...], set[int]]] = {c: {} for c in TagClass}
    for entry_id, entry in enumerate(corpus):
        for tag in entry.tags:
            per_class = members[tag.tag_class]
            for depth in range(1, len(tag.path) + 1):
                per_class.setdefault(tag.path[:depth], set()).add(entry_id)

    def build(per_class: dict[tuple[str, ...], set[int]], prefix: tuple[str, ...]) -> list[TagNode]:
        child_segments = sorted(
            {path[len(prefix)] for path in per_class if len(path) > len(prefix) and path[: len(prefix)] == prefix}
        )
        nodes = []
        for segment in child_segments:
            path = prefix + (segment,)
            nodes.append(TagNode(segment, len(per_class[path]), build(per_class, path)))
        return nodes

    return {tag_class: build(members[tag_class], ()) for tag_class in TagClass}


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass
class CorpusStatistics:
    total_entries: int
    years: dict[int, int]
    tags_per_entry: dict[int, int]
    popular_tags: dict[TagClass, list[tuple[str, int]]]
    flavors: dict[str, int]

    def as_dict(self) -> dict:
        return {
            "total_entries": self.total_entries,
            "years": {str(year): count for year, count in sorted(self.years.items())},
            "tags_per_entry": {str(n): count for n, count in sorted(self.tags_per_entry.items())},
            "popular_tags": {
                tag_class.value: [{"tag": path, "count": count} for path, count in ranked]
                for tag_class, ranked in self.popular_tags.items()
            },
            "flavors": dict(sorted(self.flavors.items())),
        }


def corpus_statistics(corpus: list["BibEntry"]) -> CorpusStatistics:
    """Histograms of year and tags-per-entry, popular tags, flavor counts."""
    years: Counter[int] = Counter()
    tags_per_entry: Counter[int] = Counter()
    per_class: dict[TagClass, Counter[str]] = {c: Counter() for c in TagClass}
    flavors = {flavor.value: 0 for flavor in Flavor}

    for entry in corpus:
        year = entry.fields.get("year", "")
        if year.isdigit() and len(year) == 4:
            years[int(year)] += 1
        tags_per_entry[len(entry.tags)] += 1
        for tag in entry.tags:
            per_class[tag.tag_class][tag.path_string] += 1
        for flavor in entry.flavors:
            flavors[flavor.value] += 1

    popular = {
        tag_class: sorted(counts.items(), key=lambda item: (-item[1], item[0]))
        for tag_class, counts in per_class.items()
    }
    return CorpusStatistics(
        total_entries=len(corpus),
        years=dict(years),
        tags_per_entry=dict(tags_per_entry),
        popular_tags=popular,
        flavors=flavors,
    )
