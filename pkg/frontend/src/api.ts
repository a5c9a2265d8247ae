/** Typed client for the JSON search API. All requests are same-origin. */

export interface Suggestion {
  kind: "spelling" | "related";
  original_term: string;
  suggested_term: string;
  score: number;
}

export interface Hit {
  citation_key: string;
  title: string;
  authors: string[];
  year: string;
  tags: string[];
  score: number;
  highlights: Record<string, string[]>;
}

export interface SearchResponse {
  hits: Hit[];
  total: number;
  suggestions: Suggestion[];
  elapsed_ms: number;
  generation: number;
}

export interface EntryDetail {
  citation_key: string;
  entry_type: string;
  fields: Record<string, string>;
  tags: string[];
  flavors: string[];
  bibtex: string;
}

export interface TagNode {
  segment: string;
  count: number;
  children: TagNode[];
}

export type TagTree = Record<string, TagNode[]>;

export interface Stats {
  total_entries: number;
  doc_count: number;
  generation: number;
  flavors: Record<string, number>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function request<T>(path: string, signal?: AbortSignal): Promise<T> {
  const response = await fetch(path, { signal, credentials: "omit" });
  let body: unknown = null;
  try {
    body = await response.json();
  } catch {
    body = null;
  }
  if (!response.ok) {
    const envelope = body as { error?: { code?: string; message?: string } } | null;
    throw new ApiError(
      response.status,
      envelope?.error?.code ?? "http_error",
      envelope?.error?.message ?? `request failed with status ${response.status}`,
    );
  }
  return body as T;
}

export function search(
  q: string,
  offset: number,
  limit: number,
  signal?: AbortSignal,
): Promise<SearchResponse> {
  const params = new URLSearchParams({
    q,
    offset: String(offset),
    limit: String(limit),
  });
  return request<SearchResponse>(`/search?${params.toString()}`, signal);
}

export function entry(citationKey: string): Promise<EntryDetail> {
  return request<EntryDetail>(`/entry/${encodeURIComponent(citationKey)}`);
}

export function tagTree(): Promise<TagTree> {
  return request<TagTree>("/tags/tree");
}

export function stats(): Promise<Stats> {
  return request<Stats>("/stats");
}
