import { describe, expect, it } from "vitest";

import type { EpisodePayload, ReviewSummary } from "../src/api";
import {
  automaticSr,
  formatAvgSr,
  formatPercent,
  manualStats,
  summaryRows,
  validateSelection,
  withVerdict,
} from "../src/state";

function episode(id: string, success: boolean, review: 0 | 1 | null): EpisodePayload {
  return {
    id,
    scene: "s",
    seed: 1,
    target_name: "sofa",
    start: [0, 0],
    goal: [1, 1],
    stop: [1, 1],
    cost: 1.0,
    success,
    reason: "",
    map_render: "/artifacts/nav/renders/x.png",
    final_view: null,
    review,
  };
}

describe("manualStats", () => {
  it("excludes unreviewed episodes from the denominator", () => {
    const stats = manualStats([
      episode("a", true, 1),
      episode("b", true, 0),
      episode("c", true, null),
    ]);
    expect(stats.reviewed).toBe(2);
    expect(stats.sr).toBe(50);
    expect(stats.coverage).toBeCloseTo(100 * 2 / 3);
  });

  it("reports null SR with no reviews", () => {
    const stats = manualStats([episode("a", true, null)]);
    expect(stats.sr).toBeNull();
    expect(stats.coverage).toBe(0);
  });

  it("reaches full coverage when everything is reviewed", () => {
    const stats = manualStats([episode("a", true, 1), episode("b", false, 1)]);
    expect(stats.coverage).toBe(100);
    expect(stats.sr).toBe(100);
  });
});

describe("withVerdict", () => {
  it("updates only the targeted episode and keeps automatic flags", () => {
    const before = [episode("a", true, null), episode("b", false, null)];
    const after = withVerdict(before, "b", 0);
    expect(after[0].review).toBeNull();
    expect(after[1].review).toBe(0);
    expect(after[1].success).toBe(false); // automatic result untouched
    expect(before[1].review).toBeNull(); // immutability
  });

  it("marking a verdict never changes the automatic SR", () => {
    const before = [episode("a", true, null), episode("b", false, null)];
    const auto = automaticSr(before);
    expect(automaticSr(withVerdict(before, "a", 0))).toBe(auto);
  });
});

describe("validateSelection", () => {
  it("accepts and trims a proper selection", () => {
    expect(validateSelection(2, "  cabinet handle ")).toEqual({
      cluster: 2,
      part: "cabinet handle",
    });
  });

  it("rejects empty part names and bad indices", () => {
    expect(() => validateSelection(2, "   ")).toThrowError(/non-empty/);
    expect(() => validateSelection(-1, "x")).toThrowError(/non-negative/);
    expect(() => validateSelection(1.5, "x")).toThrowError(/integer/);
  });
});

describe("formatting", () => {
  it("formats percentages and avg-sr values", () => {
    expect(formatPercent(94.736842)).toBe("94.7%");
    expect(formatPercent(null)).toBe("n/a");
    expect(formatAvgSr({ mean: 78.9, std: 5.3 })).toBe("78.9 ± 5.3");
    expect(formatAvgSr(84.2)).toBe("84.2");
    expect(formatAvgSr(null)).toBe("n/a");
  });
});

describe("summaryRows", () => {
  it("shows automatic and manual columns side by side", () => {
    const summary: ReviewSummary = {
      automatic: { R1: 100.0, R2: 100.0, "Avg-SR": { mean: 100.0, std: 0.0 } },
      manual: { reviewed: 1, sr: 0.0 },
      episodes: 2,
      coverage: 50.0,
    };
    const eps = [episode("a", true, 0), episode("b", true, null)];
    const rows = summaryRows(summary, eps);
    expect(rows[0]).toEqual(["R1", "100.0", "—"]);
    expect(rows[1]).toEqual(["R2", "100.0", "—"]);
    expect(rows[2]).toEqual(["Avg-SR", "100.0 ± 0.0", "—"]);
    const overall = rows[rows.length - 1];
    expect(overall[0]).toBe("overall");
    expect(overall[1]).toBe("100.0%");
    expect(overall[2]).toContain("0.0%");
    expect(overall[2]).toContain("1/2 reviewed");
  });

  it("omits automatic seed rows when no suite summary exists", () => {
    const summary: ReviewSummary = {
      automatic: null,
      manual: { reviewed: 0, sr: null },
      episodes: 0,
      coverage: 0,
    };
    const rows = summaryRows(summary, []);
    expect(rows).toHaveLength(1);
    expect(rows[0][1]).toBe("n/a");
  });
});
