/**
 * Ordered top-5 pick assembly. Selection order is rank order (first pick
 * is the rank-1 guess); duplicates are ignored at the interaction level
 * and the list never exceeds five entries. Reordering and removal are
 * allowed up until submission.
 */

export const MAX_PICKS = 5;

export class PickList {
  private items: string[] = [];

  /** Append a pick; returns false (unchanged) on duplicates or overflow. */
  add(label: string): boolean {
    if (this.items.includes(label)) return false;
    if (this.items.length >= MAX_PICKS) return false;
    this.items.push(label);
    return true;
  }

  remove(label: string): boolean {
    const at = this.items.indexOf(label);
    if (at < 0) return false;
    this.items.splice(at, 1);
    return true;
  }

  /** Move a pick up (delta < 0) or down (delta > 0) in rank order. */
  move(label: string, delta: number): boolean {
    const from = this.items.indexOf(label);
    if (from < 0) return false;
    const to = Math.min(Math.max(from + delta, 0), this.items.length - 1);
    if (to === from) return false;
    this.items.splice(from, 1);
    this.items.splice(to, 0, label);
    return true;
  }

  clear(): void {
    this.items = [];
  }

  has(label: string): boolean {
    return this.items.includes(label);
  }

  get ordered(): string[] {
    return [...this.items];
  }

  get size(): number {
    return this.items.length;
  }

  get full(): boolean {
    return this.items.length >= MAX_PICKS;
  }

  /** Submission is blocked without at least one pick. */
  get submittable(): boolean {
    return this.items.length >= 1;
  }
}
