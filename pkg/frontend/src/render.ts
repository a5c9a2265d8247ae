/** DOM rendering. Everything is built from text nodes and elements; no
 * markup strings, so API content can never inject HTML. */

import type { EntryDetail, Hit, SearchResponse, TagNode, TagTree } from "./api.js";

type Child = Node | string;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: Child[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [name, value] of Object.entries(attrs)) node.setAttribute(name, value);
  for (const child of children) node.append(child);
  return node;
}

function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

export interface ResultHandlers {
  onSuggestion(query: string): void;
  onOpenEntry(citationKey: string): void;
  onTagClick(path: string): void;
  onPage(offset: number): void;
}

/** Title text with case-insensitive `<mark>` wraps for matched terms. */
function markedText(text: string, terms: string[]): Node {
  const fragment = document.createDocumentFragment();
  const cleaned = terms.filter((t) => t.length > 0);
  if (!cleaned.length) {
    fragment.append(text);
    return fragment;
  }
  const pattern = cleaned.map((t) => t.replace(/[.*+?^${}()|[\]\\]/g, "\\$&")).join("|");
  const matcher = new RegExp(pattern, "gi");
  let consumed = 0;
  for (const match of text.matchAll(matcher)) {
    const start = match.index ?? 0;
    const hit = match[0] ?? "";
    if (start > consumed) fragment.append(text.slice(consumed, start));
    fragment.append(el("mark", {}, [hit]));
    consumed = start + hit.length;
  }
  if (consumed < text.length) fragment.append(text.slice(consumed));
  return fragment;
}

/** One tag as breadcrumb chips: every path prefix is clickable. */
function tagCrumbs(tag: string, onTagClick: (path: string) => void): HTMLElement {
  const [tagClass, ...segments] = tag.split(":");
  const group = el("span", {
    class: "tag-crumbs",
    "data-tag": tag,
    role: "group",
    "aria-label": `tag ${tag}`,
  });
  group.append(el("span", { class: "tag-class" }, [tagClass ?? ""]));
  segments.forEach((segment, i) => {
    const path = segments.slice(0, i + 1).join(":");
    const crumb = el(
      "button",
      {
        type: "button",
        class: "tag-crumb",
        "data-path": path,
        "aria-label": `filter by tag ${path}`,
      },
      [segment],
    );
    crumb.addEventListener("click", () => onTagClick(path));
    if (i > 0) group.append(el("span", { class: "crumb-sep", "aria-hidden": "true" }, ["›"]));
    group.append(crumb);
  });
  return group;
}

function hitCard(hit: Hit, handlers: ResultHandlers): HTMLElement {
  const card = el("article", { class: "hit", "data-key": hit.citation_key });

  const titleButton = el(
    "button",
    {
      type: "button",
      class: "hit-title",
      "aria-label": `open details for ${hit.title || hit.citation_key}`,
    },
    [markedText(hit.title || hit.citation_key, hit.highlights["title"] ?? [])],
  );
  titleButton.addEventListener("click", () => handlers.onOpenEntry(hit.citation_key));
  card.append(el("h3", {}, [titleButton]));

  const meta: string[] = [];
  if (hit.authors.length) meta.push(hit.authors.join(", "));
  if (hit.year) meta.push(hit.year);
  card.append(el("p", { class: "hit-meta" }, [meta.join(" · ")]));

  if (hit.tags.length) {
    const tags = el("p", { class: "hit-tags" });
    for (const tag of hit.tags) tags.append(tagCrumbs(tag, handlers.onTagClick));
    card.append(tags);
  }

  const snippetFields = Object.keys(hit.highlights)
    .filter((field) => field !== "title")
    .sort();
  if (snippetFields.length) {
    const snippets = el("p", { class: "hit-snippets" });
    for (const field of snippetFields) {
      const terms = hit.highlights[field] ?? [];
      const span = el("span", { class: "snippet", "data-field": field });
      span.append(el("span", { class: "snippet-field" }, [`${field}: `]));
      terms.forEach((term, i) => {
        if (i > 0) span.append(", ");
        span.append(el("mark", {}, [term]));
      });
      snippets.append(span);
    }
    card.append(snippets);
  }
  return card;
}

function suggestionChips(response: SearchResponse, handlers: ResultHandlers): HTMLElement {
  const strip = el("div", { class: "suggestions", role: "group", "aria-label": "suggestions" });
  for (const suggestion of response.suggestions) {
    const label =
      suggestion.kind === "spelling"
        ? `Did you mean ${suggestion.suggested_term}?`
        : `Related: ${suggestion.suggested_term}`;
    const chip = el(
      "button",
      {
        type: "button",
        class: `chip chip-${suggestion.kind}`,
        "data-term": suggestion.suggested_term,
        "aria-label": `search for ${suggestion.suggested_term}`,
      },
      [label],
    );
    chip.addEventListener("click", () => handlers.onSuggestion(suggestion.suggested_term));
    strip.append(chip);
  }
  return strip;
}

export function renderResults(
  container: HTMLElement,
  response: SearchResponse,
  offset: number,
  pageSize: number,
  handlers: ResultHandlers,
): void {
  clear(container);

  if (response.total === 0) {
    container.append(el("p", { class: "empty" }, ["No results."]));
    if (response.suggestions.length) container.append(suggestionChips(response, handlers));
    return;
  }

  const shownTo = Math.min(offset + response.hits.length, response.total);
  container.append(
    el("p", { class: "result-count" }, [
      `${response.total} result${response.total === 1 ? "" : "s"}` +
        ` · showing ${offset + 1}–${shownTo}` +
        ` · ${response.elapsed_ms.toFixed(1)} ms`,
    ]),
  );
  if (response.suggestions.length) container.append(suggestionChips(response, handlers));

  for (const hit of response.hits) container.append(hitCard(hit, handlers));

  if (response.total > pageSize) {
    const pager = el("nav", { class: "pager", "aria-label": "pagination" });
    const previous = el(
      "button",
      { type: "button", class: "page-prev", "aria-label": "previous page" },
      ["‹ previous"],
    );
    previous.disabled = offset === 0;
    previous.addEventListener("click", () => handlers.onPage(Math.max(0, offset - pageSize)));
    const next = el(
      "button",
      { type: "button", class: "page-next", "aria-label": "next page" },
      ["next ›"],
    );
    next.disabled = offset + pageSize >= response.total;
    next.addEventListener("click", () => handlers.onPage(offset + pageSize));
    pager.append(previous, next);
    container.append(pager);
  }
}

export function renderError(banner: HTMLElement, message: string): void {
  clear(banner);
  banner.append(message);
  banner.hidden = false;
}

export function clearError(banner: HTMLElement): void {
  clear(banner);
  banner.hidden = true;
}

function treeNode(
  node: TagNode,
  parentPath: string,
  onTagClick: (path: string) => void,
): HTMLElement {
  const path = parentPath ? `${parentPath}:${node.segment}` : node.segment;
  const item = el("li", { role: "treeitem", "data-path": path, "aria-expanded": "false" });
  const row = el("span", { class: "tree-row" });

  if (node.children.length) {
    const toggle = el(
      "button",
      {
        type: "button",
        class: "tree-toggle",
        "aria-label": `expand ${node.segment}`,
        "aria-expanded": "false",
      },
      ["▸"],
    );
    // children are built lazily, on the first expand
    let childList: HTMLElement | null = null;
    toggle.addEventListener("click", () => {
      const expanded = toggle.getAttribute("aria-expanded") === "true";
      if (!expanded && childList === null) {
        childList = el("ul", { role: "group" });
        for (const child of node.children) childList.append(treeNode(child, path, onTagClick));
        item.append(childList);
      }
      if (childList) childList.hidden = expanded;
      toggle.setAttribute("aria-expanded", String(!expanded));
      toggle.setAttribute("aria-label", `${expanded ? "expand" : "collapse"} ${node.segment}`);
      toggle.textContent = expanded ? "▸" : "▾";
      item.setAttribute("aria-expanded", String(!expanded));
    });
    row.append(toggle);
  } else {
    row.append(el("span", { class: "tree-leaf-pad", "aria-hidden": "true" }, ["•"]));
  }

  const name = el(
    "button",
    {
      type: "button",
      class: "tree-name",
      "aria-label": `filter by tag ${path}`,
    },
    [node.segment],
  );
  name.addEventListener("click", () => onTagClick(path));
  row.append(name, el("span", { class: "tree-count" }, [String(node.count)]));
  item.prepend(row);
  return item;
}

export function renderTagTree(
  container: HTMLElement,
  tree: TagTree,
  onTagClick: (path: string) => void,
): void {
  clear(container);
  const classes = Object.keys(tree).sort();
  const total = classes.reduce((sum, c) => sum + (tree[c]?.length ?? 0), 0);
  if (total === 0) {
    container.append(el("p", { class: "empty" }, ["No tags yet."]));
    return;
  }
  for (const tagClass of classes) {
    const nodes = tree[tagClass] ?? [];
    if (!nodes.length) continue;
    container.append(el("h3", { class: "tree-class" }, [tagClass]));
    const list = el("ul", { role: "tree", "aria-label": `${tagClass} tags` });
    for (const node of nodes) list.append(treeNode(node, "", onTagClick));
    container.append(list);
  }
}

export function renderTagTreeFailure(panel: HTMLElement, container: HTMLElement): void {
  clear(container);
  container.append(el("p", { class: "empty" }, ["Tag browser unavailable."]));
  panel.dataset["state"] = "failed";
}

export function renderEntryDetail(
  container: HTMLElement,
  detail: EntryDetail,
  onClose: () => void,
  onTagClick: (path: string) => void,
): void {
  clear(container);
  const close = el(
    "button",
    { type: "button", class: "detail-close", "aria-label": "close entry details" },
    ["× close"],
  );
  close.addEventListener("click", onClose);
  container.append(close);

  container.append(
    el("h2", { class: "detail-title" }, [detail.fields["title"] ?? detail.citation_key]),
  );
  container.append(
    el("p", { class: "detail-meta" }, [`${detail.entry_type} · ${detail.citation_key}`]),
  );

  if (detail.tags.length) {
    const tags = el("p", { class: "detail-tags" });
    for (const tag of detail.tags) tags.append(tagCrumbs(tag, onTagClick));
    container.append(tags);
  }

  const table = el("table", { class: "detail-fields" });
  const orderedNames = Object.keys(detail.fields);
  for (const name of orderedNames) {
    if (name === "title") continue;
    table.append(
      el("tr", {}, [
        el("th", { scope: "row" }, [name]),
        el("td", {}, [detail.fields[name] ?? ""]),
      ]),
    );
  }
  container.append(table);
  container.append(el("pre", { class: "detail-bibtex" }, [detail.bibtex]));
  container.hidden = false;
  close.focus();
}
