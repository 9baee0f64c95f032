/**
 * Pure helpers for the results screen: the human-vs-network comparison
 * rows and the sortable per-category table. Kept DOM-free so they are
 * unit-testable in node.
 */

import type { CategoryRow, StudyReport } from "./api.js";

export type ComparisonRow = {
  metric: string;
  human: number;
  network: number | null;
  /** which column holds the larger value; ties favor neither */
  winner: "human" | "network" | "tie" | null;
};

export function formatPct(x: number | null): string {
  if (x === null) return "-";
  return `${(100 * x).toFixed(2)}%`;
}

export function comparisonRows(report: StudyReport): ComparisonRow[] {
  const rows: ComparisonRow[] = [];
  const pairs: Array<[string, number, number | null]> = [
    ["top-1", report.human_top1, report.network_top1],
    ["top-5", report.human_top5, report.network_top5],
  ];
  for (const [metric, human, network] of pairs) {
    let winner: ComparisonRow["winner"] = null;
    if (network !== null) {
      winner = human > network ? "human" : network > human ? "network" : "tie";
    }
    rows.push({ metric, human, network, winner });
  }
  return rows;
}

export type CategorySortKey = "display" | "n" | "human_top1" | "human_top5";

export function sortCategories(
  rows: CategoryRow[],
  key: CategorySortKey,
  descending: boolean,
): CategoryRow[] {
  const sorted = [...rows].sort((a, b) => {
    const va = a[key];
    const vb = b[key];
    const cmp =
      typeof va === "string"
        ? va.localeCompare(vb as string)
        : (va as number) - (vb as number);
    // stable tie-break on the display name keeps re-sorts deterministic
    return cmp !== 0 ? cmp : a.display.localeCompare(b.display);
  });
  return descending ? sorted.reverse() : sorted;
}
