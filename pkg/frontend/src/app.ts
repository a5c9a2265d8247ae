/** Application wiring: builds the page skeleton, owns the UI state, and
 * keeps at most one search request in flight at a time. */

import { ApiError, entry, search, stats, tagTree } from "./api.js";
import {
  PAGE_SIZE,
  type UiState,
  appendTagFilter,
  initialState,
  withOffset,
  withQuery,
  withResponse,
} from "./state.js";
import {
  clearError,
  renderEntryDetail,
  renderError,
  renderResults,
  renderTagTree,
  renderTagTreeFailure,
  type ResultHandlers,
} from "./render.js";

// Static markup only; everything dynamic goes through render.ts.
const SKELETON = `
<header class="top">
  <h1>donut</h1>
  <form id="search-form" role="search">
    <label for="query-box" class="visually-hidden">Search query</label>
    <input id="query-box" name="q" type="search" autocomplete="off" spellcheck="false"
           placeholder="try: homology tag:graphs author:kerber" />
    <button type="submit" id="search-button">Search</button>
  </form>
</header>
<div id="error-banner" role="alert" hidden></div>
<main class="layout">
  <aside id="tag-panel" aria-label="browse by tag">
    <h2>Tags</h2>
    <div id="tag-tree"><p class="empty">Loading…</p></div>
  </aside>
  <div class="content">
    <section id="detail" aria-label="entry details" hidden></section>
    <section id="results" aria-label="search results" aria-live="polite"></section>
  </div>
</main>
<footer id="stats-line"></footer>
`;

const DEBOUNCE_MS = 300;

export interface AppHandle {
  runSearch(query: string, offset?: number, updateBox?: boolean): Promise<void>;
  getState(): UiState;
  /** Resolves once the boot-time loads (tree, stats, ?q= search) settle. */
  booted: Promise<void>;
}

function must<T extends Element>(root: ParentNode, selector: string): T {
  const node = root.querySelector(selector);
  if (!node) throw new Error(`bootstrap: missing ${selector}`);
  return node as T;
}

function isAbort(error: unknown): boolean {
  return error instanceof Error && error.name === "AbortError";
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return error.message;
  return "Cannot reach the search service.";
}

export function bootstrap(doc: Document): AppHandle {
  const view = doc.defaultView;
  if (!view) throw new Error("bootstrap: document has no window");
  const win = view;

  const root = must<HTMLElement>(doc, "#app");
  root.innerHTML = SKELETON;

  const form = must<HTMLFormElement>(root, "#search-form");
  const queryBox = must<HTMLInputElement>(root, "#query-box");
  const banner = must<HTMLElement>(root, "#error-banner");
  const tagPanel = must<HTMLElement>(root, "#tag-panel");
  const tagTreeBox = must<HTMLElement>(root, "#tag-tree");
  const resultsBox = must<HTMLElement>(root, "#results");
  const detailBox = must<HTMLElement>(root, "#detail");
  const statsLine = must<HTMLElement>(root, "#stats-line");

  let state = initialState();
  let inFlight: AbortController | null = null;
  let searchSeq = 0;
  let debounce: ReturnType<typeof setTimeout> | undefined;

  function syncUrl(query: string): void {
    const url = new URL(win.location.href);
    if (query) url.searchParams.set("q", query);
    else url.searchParams.delete("q");
    win.history.replaceState(null, "", url.toString());
  }

  function closeDetail(): void {
    detailBox.hidden = true;
    while (detailBox.firstChild) detailBox.removeChild(detailBox.firstChild);
  }

  async function openEntry(citationKey: string): Promise<void> {
    try {
      const detail = await entry(citationKey);
      clearError(banner);
      renderEntryDetail(detailBox, detail, closeDetail, onTagClick);
    } catch (error) {
      renderError(banner, describe(error));
    }
  }

  function onTagClick(path: string): void {
    state = appendTagFilter(state, path);
    void runSearch(state.query, 0, true);
  }

  const handlers: ResultHandlers = {
    // a chip click is the user asking a new question, so the box follows
    onSuggestion: (term) => void runSearch(term, 0, true),
    onOpenEntry: (key) => void openEntry(key),
    onTagClick,
    onPage: (offset) => void runSearch(state.query, offset, false),
  };

  async function runSearch(query: string, offset = 0, updateBox = false): Promise<void> {
    if (debounce !== undefined) {
      clearTimeout(debounce);
      debounce = undefined;
    }
    if (updateBox) queryBox.value = query;
    state = withOffset(withQuery(state, query), offset);
    const trimmed = query.trim();
    syncUrl(trimmed);
    closeDetail();

    if (!trimmed) {
      if (inFlight) inFlight.abort();
      inFlight = null;
      searchSeq += 1;
      while (resultsBox.firstChild) resultsBox.removeChild(resultsBox.firstChild);
      clearError(banner);
      return;
    }

    if (inFlight) inFlight.abort();
    const controller = new AbortController();
    inFlight = controller;
    const seq = ++searchSeq;
    try {
      const response = await search(trimmed, offset, PAGE_SIZE, controller.signal);
      if (seq !== searchSeq) return; // a newer search superseded this one
      state = withResponse(state, response);
      clearError(banner);
      renderResults(resultsBox, response, offset, PAGE_SIZE, handlers);
    } catch (error) {
      if (isAbort(error) || seq !== searchSeq) return;
      renderError(banner, describe(error));
    } finally {
      if (inFlight === controller) inFlight = null;
    }
  }

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void runSearch(queryBox.value, 0, false);
  });

  queryBox.addEventListener("input", () => {
    if (debounce !== undefined) clearTimeout(debounce);
    debounce = setTimeout(() => {
      debounce = undefined;
      void runSearch(queryBox.value, 0, false);
    }, DEBOUNCE_MS);
  });

  const treeLoad = tagTree().then(
    (tree) => renderTagTree(tagTreeBox, tree, onTagClick),
    () => renderTagTreeFailure(tagPanel, tagTreeBox),
  );
  const statsLoad = stats().then(
    (s) => {
      statsLine.textContent = `${s.total_entries} entries · index generation ${s.generation}`;
    },
    () => {
      statsLine.textContent = "";
    },
  );

  const initialQuery = new URL(win.location.href).searchParams.get("q") ?? "";
  const initialSearch = initialQuery ? runSearch(initialQuery, 0, true) : Promise.resolve();

  const booted = Promise.allSettled([treeLoad, statsLoad, initialSearch]).then(() => undefined);

  return {
    runSearch,
    getState: () => state,
    booted,
  };
}
