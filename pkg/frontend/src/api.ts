/** Typed client for the review service JSON API. */

export interface SceneInfo {
  id: string;
  frames: number;
  has_clusters: boolean;
  has_parts: boolean;
}

export interface ClusterInfo {
  index: number;
  count: number;
  montage: string;
}

export interface Selection {
  cluster: number;
  part: string;
}

export interface ClustersPayload {
  scene: string;
  k: number;
  clusters: ClusterInfo[];
  selection: Selection | null;
  container_class: string | null;
}

export interface SelectionResult {
  ok: boolean;
  scene: string;
  cluster: number;
  part: string;
  mask_count: number;
}

export type Verdict = 0 | 1;

export interface EpisodePayload {
  id: string;
  scene: string;
  seed: number;
  target_name: string;
  start: [number, number];
  goal: [number, number] | null;
  stop: [number, number];
  cost: number;
  success: boolean;
  reason: string;
  map_render: string;
  final_view: string | null;
  review: Verdict | null;
}

export interface AvgSr {
  mean: number;
  std: number;
}

export interface ReviewSummary {
  automatic: Record<string, number | AvgSr> | null;
  manual: { reviewed: number; sr: number | null };
  episodes: number;
  coverage: number;
}

export interface EpisodesPayload {
  episodes: EpisodePayload[];
  summary: ReviewSummary;
}

export interface ReviewResult {
  ok: boolean;
  episode: string;
  success: Verdict;
  summary: ReviewSummary;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  let resp: Response;
  try {
    resp = await fetch(path, init);
  } catch (err) {
    throw new ApiError(0, `server unreachable: ${String(err)}`);
  }
  let body: unknown = null;
  try {
    body = await resp.json();
  } catch {
    // non-JSON body; fall through to the status check
  }
  if (!resp.ok) {
    const detail =
      body && typeof body === "object" && "error" in body
        ? String((body as { error: unknown }).error)
        : resp.statusText;
    throw new ApiError(resp.status, detail);
  }
  return body as T;
}

function post<T>(path: string, payload: unknown): Promise<T> {
  return request<T>(path, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(payload),
  });
}

export const api = {
  listScenes: () => request<{ scenes: SceneInfo[] }>("/api/scenes"),
  getClusters: (sceneId: string) =>
    request<ClustersPayload>(`/api/scenes/${encodeURIComponent(sceneId)}/clusters`),
  postSelection: (sceneId: string, selection: Selection) =>
    post<SelectionResult>(
      `/api/scenes/${encodeURIComponent(sceneId)}/cluster-selection`,
      selection
    ),
  listEpisodes: () => request<EpisodesPayload>("/api/episodes"),
  getEpisode: (id: string) =>
    request<EpisodePayload>(`/api/episodes/${encodeURIComponent(id)}`),
  postReview: (id: string, success: Verdict) =>
    post<ReviewResult>(
      `/api/episodes/${encodeURIComponent(id)}/review`,
      { success }
    ),
};
