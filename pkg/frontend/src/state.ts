/** The whole UI state. Transitions are pure; rendering happens elsewhere.
 *
 * Invariant: `query` changes only through an explicit user action (typing,
 * submitting, clicking a suggestion chip or a tag node). Arriving responses
 * and suggestions never touch it.
 */

import type { SearchResponse } from "./api.js";

export const PAGE_SIZE = 10;

export interface UiState {
  query: string;
  response: SearchResponse | null;
  tagFilters: string[];
  offset: number;
}

export function initialState(): UiState {
  return { query: "", response: null, tagFilters: [], offset: 0 };
}

export function withQuery(state: UiState, query: string): UiState {
  return { ...state, query, offset: 0 };
}

/** Record a response; the query string is deliberately left alone. */
export function withResponse(state: UiState, response: SearchResponse | null): UiState {
  return { ...state, response };
}

export function withOffset(state: UiState, offset: number): UiState {
  return { ...state, offset: Math.max(0, offset) };
}

/** Clicking a tag node appends `tag:<path>` to whatever is in the box. */
export function appendTagFilter(state: UiState, path: string): UiState {
  const clause = `tag:${path}`;
  const trimmed = state.query.trim();
  const query = trimmed ? `${trimmed} ${clause}` : clause;
  return {
    ...state,
    query,
    tagFilters: state.tagFilters.includes(path)
      ? state.tagFilters
      : [...state.tagFilters, path],
    offset: 0,
  };
}
