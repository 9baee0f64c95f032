import { describe, expect, it } from "vitest";

import type { CategoryRow, StudyReport } from "../src/api.js";
import { comparisonRows, formatPct, sortCategories } from "../src/report.js";

function reportWith(overrides: Partial<StudyReport>): StudyReport {
  return {
    session_id: "s",
    condition: "bg",
    answered: 4,
    human_top1: 0.5,
    human_top5: 0.75,
    network_id: null,
    network_top1: null,
    network_top5: null,
    per_category: [],
    trials: [],
    ...overrides,
  };
}

describe("comparison rows", () => {
  it("renders payload numbers exactly", () => {
    const rows = comparisonRows(
      reportWith({ human_top1: 0.1836, human_top5: 0.3984 }),
    );
    expect(formatPct(rows[0].human)).toBe("18.36%");
    expect(formatPct(rows[1].human)).toBe("39.84%");
    expect(rows[0].network).toBeNull();
    expect(formatPct(rows[0].network)).toBe("-");
  });

  it("highlights the larger value per column (network-dominant fixture)", () => {
    // large-scale background-condition reference shape: the network wins both
    const rows = comparisonRows(
      reportWith({
        human_top1: 0.1836,
        human_top5: 0.3984,
        network_id: "bg127",
        network_top1: 0.4165,
        network_top5: 0.7379,
      }),
    );
    expect(rows.map((r) => r.winner)).toEqual(["network", "network"]);
  });

  it("highlights the human side when people win", () => {
    const rows = comparisonRows(
      reportWith({
        human_top1: 0.8125,
        human_top5: 0.9583,
        network_id: "fg127",
        network_top1: 0.7532,
        network_top5: 0.9387,
      }),
    );
    expect(rows.map((r) => r.winner)).toEqual(["human", "human"]);
  });

  it("marks exact ties", () => {
    const rows = comparisonRows(
      reportWith({
        network_id: "n",
        network_top1: 0.5,
        network_top5: 0.9,
      }),
    );
    expect(rows[0].winner).toBe("tie");
    expect(rows[1].winner).toBe("network");
  });
});

describe("per-category sorting", () => {
  const rows: CategoryRow[] = [
    { label: "b", display: "bird", n: 3, human_top1: 0.3, human_top5: 0.6 },
    { label: "a", display: "apple", n: 5, human_top1: 0.8, human_top5: 0.9 },
    { label: "c", display: "chair", n: 1, human_top1: 0.3, human_top5: 1.0 },
  ];

  it("sorts by any key with stable display tie-break", () => {
    expect(sortCategories(rows, "display", false).map((r) => r.label)).toEqual(
      ["a", "b", "c"],
    );
    expect(sortCategories(rows, "n", true).map((r) => r.label)).toEqual(
      ["a", "b", "c"],
    );
    expect(
      sortCategories(rows, "human_top1", false).map((r) => r.label),
    ).toEqual(["b", "c", "a"]);
  });

  it("single-row table stays itself", () => {
    expect(sortCategories([rows[0]], "human_top5", true)).toEqual([rows[0]]);
  });

  it("does not mutate its input", () => {
    const before = rows.map((r) => r.label);
    sortCategories(rows, "n", false);
    expect(rows.map((r) => r.label)).toEqual(before);
  });
});
