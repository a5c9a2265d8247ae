// @vitest-environment jsdom
import { beforeEach, describe, expect, it, vi } from "vitest";

import type { EntryDetail, Hit, SearchResponse, TagTree } from "../src/api.js";
import {
  clearError,
  renderEntryDetail,
  renderError,
  renderResults,
  renderTagTree,
  type ResultHandlers,
} from "../src/render.js";

function makeHandlers(): ResultHandlers {
  return {
    onSuggestion: vi.fn(),
    onOpenEntry: vi.fn(),
    onTagClick: vi.fn(),
    onPage: vi.fn(),
  };
}

function makeHit(overrides: Partial<Hit> = {}): Hit {
  return {
    citation_key: "dlotko2019euler",
    title: "A General Framework for Euler Characteristic Curves",
    authors: ["Pawel Dlotko", "Davide Gurnari"],
    year: "2019",
    tags: ["area:medicine:neurology:epilepsy"],
    score: 3.14,
    highlights: { title: ["general"] },
    ...overrides,
  };
}

function makeResponse(overrides: Partial<SearchResponse> = {}): SearchResponse {
  return {
    hits: [makeHit()],
    total: 1,
    suggestions: [],
    elapsed_ms: 2.5,
    generation: 1,
    ...overrides,
  };
}

let container: HTMLElement;

beforeEach(() => {
  document.body.innerHTML = "";
  container = document.createElement("section");
  document.body.append(container);
});

describe("renderResults", () => {
  it("renders one card per hit with title, authors and year", () => {
    renderResults(container, makeResponse(), 0, 10, makeHandlers());
    const cards = container.querySelectorAll("article.hit");
    expect(cards).toHaveLength(1);
    const card = cards[0]!;
    expect(card.querySelector(".hit-title")!.textContent).toBe(
      "A General Framework for Euler Characteristic Curves",
    );
    expect(card.querySelector(".hit-meta")!.textContent).toBe(
      "Pawel Dlotko, Davide Gurnari · 2019",
    );
  });

  it("marks matched terms in the title without altering the text", () => {
    renderResults(container, makeResponse(), 0, 10, makeHandlers());
    const marks = container.querySelectorAll(".hit-title mark");
    expect(marks).toHaveLength(1);
    expect(marks[0]!.textContent).toBe("General");
  });

  it("opens the entry when the title is clicked", () => {
    const handlers = makeHandlers();
    renderResults(container, makeResponse(), 0, 10, handlers);
    (container.querySelector(".hit-title") as HTMLButtonElement).click();
    expect(handlers.onOpenEntry).toHaveBeenCalledWith("dlotko2019euler");
  });

  it("renders every tag path prefix as its own clickable crumb", () => {
    const handlers = makeHandlers();
    renderResults(container, makeResponse(), 0, 10, handlers);
    const crumbs = container.querySelectorAll(".tag-crumb");
    expect([...crumbs].map((c) => c.getAttribute("data-path"))).toEqual([
      "medicine",
      "medicine:neurology",
      "medicine:neurology:epilepsy",
    ]);
    (crumbs[1] as HTMLButtonElement).click();
    expect(handlers.onTagClick).toHaveBeenCalledWith("medicine:neurology");
  });

  it("shows non-title highlights as labelled snippets", () => {
    const hit = makeHit({ highlights: { title: ["general"], abstract: ["euler", "curves"] } });
    renderResults(container, makeResponse({ hits: [hit] }), 0, 10, makeHandlers());
    const snippet = container.querySelector(".snippet[data-field='abstract']")!;
    expect(snippet.textContent).toBe("abstract: euler, curves");
    expect(snippet.querySelectorAll("mark")).toHaveLength(2);
  });

  it("offers a spelling chip on zero hits", () => {
    const handlers = makeHandlers();
    const response = makeResponse({
      hits: [],
      total: 0,
      suggestions: [
        { kind: "spelling", original_term: "homollogy", suggested_term: "homology", score: 0.9 },
      ],
    });
    renderResults(container, response, 0, 10, handlers);
    expect(container.querySelector(".empty")!.textContent).toBe("No results.");
    const chip = container.querySelector(".chip-spelling") as HTMLButtonElement;
    expect(chip.textContent).toBe("Did you mean homology?");
    chip.click();
    expect(handlers.onSuggestion).toHaveBeenCalledWith("homology");
  });

  it("labels related suggestions differently from spelling fixes", () => {
    const response = makeResponse({
      suggestions: [
        { kind: "related", original_term: "homotopy", suggested_term: "homology", score: 0.4 },
      ],
    });
    renderResults(container, response, 0, 10, makeHandlers());
    expect(container.querySelector(".chip-related")!.textContent).toBe("Related: homology");
  });

  it("pages forward and back through large result sets", () => {
    const handlers = makeHandlers();
    const response = makeResponse({ hits: [makeHit()], total: 25 });
    renderResults(container, response, 10, 10, handlers);
    const previous = container.querySelector(".page-prev") as HTMLButtonElement;
    const next = container.querySelector(".page-next") as HTMLButtonElement;
    expect(previous.disabled).toBe(false);
    expect(next.disabled).toBe(false);
    next.click();
    expect(handlers.onPage).toHaveBeenCalledWith(20);
    previous.click();
    expect(handlers.onPage).toHaveBeenCalledWith(0);
  });

  it("disables the previous button on the first page", () => {
    renderResults(container, makeResponse({ total: 25 }), 0, 10, makeHandlers());
    expect((container.querySelector(".page-prev") as HTMLButtonElement).disabled).toBe(true);
  });

  it("gives every interactive element an accessible label", () => {
    const response = makeResponse({
      suggestions: [
        { kind: "spelling", original_term: "homollogy", suggested_term: "homology", score: 0.9 },
      ],
    });
    renderResults(container, response, 0, 10, makeHandlers());
    for (const button of container.querySelectorAll("button")) {
      expect(button.getAttribute("aria-label"), button.outerHTML).toBeTruthy();
    }
  });
});

describe("error banner", () => {
  it("shows the message and never leaves the page blank", () => {
    const banner = document.createElement("div");
    banner.setAttribute("role", "alert");
    banner.hidden = true;
    renderError(banner, "query parse failed: unbalanced quote");
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toContain("unbalanced quote");
    clearError(banner);
    expect(banner.hidden).toBe(true);
    expect(banner.textContent).toBe("");
  });
});

describe("renderTagTree", () => {
  const TREE: TagTree = {
    area: [],
    input: [],
    tool: [
      {
        segment: "graphs",
        count: 2,
        children: [{ segment: "directed", count: 1, children: [] }],
      },
    ],
  };

  it("shows count badges on the roots", () => {
    renderTagTree(container, TREE, vi.fn());
    const badge = container.querySelector("li[data-path='graphs'] .tree-count")!;
    expect(badge.textContent).toBe("2");
  });

  it("builds children lazily, only on first expand", () => {
    renderTagTree(container, TREE, vi.fn());
    expect(container.querySelector("li[data-path='graphs:directed']")).toBeNull();
    const toggle = container.querySelector(".tree-toggle") as HTMLButtonElement;
    expect(toggle.getAttribute("aria-expanded")).toBe("false");
    toggle.click();
    const child = container.querySelector("li[data-path='graphs:directed']")!;
    expect(child.querySelector(".tree-count")!.textContent).toBe("1");
    expect(toggle.getAttribute("aria-expanded")).toBe("true");
  });

  it("collapses without destroying the built children", () => {
    renderTagTree(container, TREE, vi.fn());
    const toggle = container.querySelector(".tree-toggle") as HTMLButtonElement;
    toggle.click();
    toggle.click();
    const list = container.querySelector("li[data-path='graphs'] ul") as HTMLElement;
    expect(list.hidden).toBe(true);
    toggle.click();
    expect(list.hidden).toBe(false);
  });

  it("reports the clicked node's full path", () => {
    const onTagClick = vi.fn();
    renderTagTree(container, TREE, onTagClick);
    (container.querySelector(".tree-toggle") as HTMLButtonElement).click();
    const names = container.querySelectorAll(".tree-name");
    (names[1] as HTMLButtonElement).click();
    expect(onTagClick).toHaveBeenCalledWith("graphs:directed");
  });

  it("shows an empty-state message when there are no tags", () => {
    renderTagTree(container, { area: [], input: [], tool: [] }, vi.fn());
    expect(container.textContent).toContain("No tags yet.");
  });

  it("omits headings for empty classes", () => {
    renderTagTree(container, TREE, vi.fn());
    const headings = [...container.querySelectorAll(".tree-class")].map((h) => h.textContent);
    expect(headings).toEqual(["tool"]);
  });
});

describe("renderEntryDetail", () => {
  const DETAIL: EntryDetail = {
    citation_key: "dlotko2019euler",
    entry_type: "article",
    fields: {
      title: "A General Framework for Euler Characteristic Curves",
      author: "Pawel Dlotko",
      year: "2019",
      journal: "Journal of Applied Topology",
    },
    tags: ["tool:graphs:directed"],
    flavors: ["innovate"],
    bibtex: "@article{dlotko2019euler,\n  title = {...},\n}\n",
  };

  it("renders the fields table and the raw bibtex", () => {
    renderEntryDetail(container, DETAIL, vi.fn(), vi.fn());
    expect(container.hidden).toBe(false);
    expect(container.querySelector(".detail-title")!.textContent).toContain("General Framework");
    const rows = [...container.querySelectorAll(".detail-fields th")].map((n) => n.textContent);
    expect(rows).toEqual(["author", "year", "journal"]);
    expect(container.querySelector("pre.detail-bibtex")!.textContent).toContain(
      "@article{dlotko2019euler",
    );
  });

  it("invokes the close callback", () => {
    const onClose = vi.fn();
    renderEntryDetail(container, DETAIL, onClose, vi.fn());
    (container.querySelector(".detail-close") as HTMLButtonElement).click();
    expect(onClose).toHaveBeenCalledTimes(1);
  });

  it("renders tag crumbs that filter", () => {
    const onTagClick = vi.fn();
    renderEntryDetail(container, DETAIL, vi.fn(), onTagClick);
    const crumbs = container.querySelectorAll(".tag-crumb");
    (crumbs[crumbs.length - 1] as HTMLButtonElement).click();
    expect(onTagClick).toHaveBeenCalledWith("graphs:directed");
  });
});
