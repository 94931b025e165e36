/** Pure view-state helpers, kept framework-free so they unit-test cleanly. */

import type { AvgSr, EpisodePayload, ReviewSummary, Selection, Verdict } from "./api";

/** Manual success rate over reviewed episodes only. */
export function manualStats(episodes: EpisodePayload[]): {
  reviewed: number;
  sr: number | null;
  coverage: number;
} {
  const reviewed = episodes.filter((e) => e.review !== null);
  const sr = reviewed.length
    ? (100 * reviewed.filter((e) => e.review === 1).length) / reviewed.length
    : null;
  const coverage = episodes.length ? (100 * reviewed.length) / episodes.length : 0;
  return { reviewed: reviewed.length, sr, coverage };
}

/** Automatic success rate straight from the episode results. */
export function automaticSr(episodes: EpisodePayload[]): number | null {
  if (!episodes.length) return null;
  return (100 * episodes.filter((e) => e.success).length) / episodes.length;
}

/** Optimistic verdict application; the server response reconciles later. */
export function withVerdict(
  episodes: EpisodePayload[],
  id: string,
  verdict: Verdict
): EpisodePayload[] {
  return episodes.map((e) => (e.id === id ? { ...e, review: verdict } : e));
}

export function validateSelection(cluster: number, part: string): Selection {
  if (!Number.isInteger(cluster) || cluster < 0) {
    throw new Error(`cluster index must be a non-negative integer, got ${cluster}`);
  }
  const trimmed = part.trim();
  if (!trimmed) {
    throw new Error("part name must be non-empty");
  }
  return { cluster, part: trimmed };
}

export function formatPercent(value: number | null): string {
  return value === null ? "n/a" : `${value.toFixed(1)}%`;
}

export function formatAvgSr(value: AvgSr | number | undefined | null): string {
  if (value === null || value === undefined) return "n/a";
  if (typeof value === "number") return value.toFixed(1);
  return `${value.mean.toFixed(1)} ± ${value.std.toFixed(1)}`;
}

/** Rows for the side-by-side automatic vs manual summary table. */
export function summaryRows(
  summary: ReviewSummary,
  episodes: EpisodePayload[]
): Array<[string, string, string]> {
  const manual = manualStats(episodes);
  const auto = summary.automatic;
  const rows: Array<[string, string, string]> = [];
  if (auto) {
    for (const key of Object.keys(auto).filter((k) => /^R\d+$/.test(k)).sort()) {
      rows.push([key, formatAvgSr(auto[key] as number), "—"]);
    }
    rows.push(["Avg-SR", formatAvgSr(auto["Avg-SR"] as AvgSr), "—"]);
  }
  rows.push([
    "overall",
    formatPercent(automaticSr(episodes)),
    `${formatPercent(manual.sr)} (${manual.reviewed}/${episodes.length} reviewed)`,
  ]);
  return rows;
}
