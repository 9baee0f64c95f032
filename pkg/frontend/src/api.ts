/**
 * Typed client for the study service HTTP endpoints. These five calls are
 * the only backend surface the UI consumes.
 */

export type RosterEntry = {
  label: string;
  display: string;
};

export type SessionInfo = {
  session_id: string;
  condition: string;
  trial_count: number;
  roster: RosterEntry[];
};

export type NextTrial = {
  trial_id: string | null;
  image_url: string | null;
  remaining: number;
};

export type SubmitResult = {
  accepted: boolean;
  remaining: number;
};

export type CategoryRow = {
  label: string;
  display: string;
  n: number;
  human_top1: number;
  human_top5: number;
};

export type TrialOutcome = {
  trial_id: string;
  source_id: string;
  label: string;
  picks: string[];
};

export type StudyReport = {
  session_id: string;
  condition: string;
  answered: number;
  human_top1: number;
  human_top5: number;
  network_id: string | null;
  network_top1: number | null;
  network_top5: number | null;
  per_category: CategoryRow[];
  trials: TrialOutcome[];
};

export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const res = await fetch(url, init);
  if (!res.ok) {
    const body = await res.json().catch(() => ({}) as Record<string, string>);
    throw new ApiError(
      (body as { code?: string }).code ?? "http_error",
      (body as { message?: string }).message ?? `HTTP ${res.status}`,
      res.status,
    );
  }
  return (await res.json()) as T;
}

export function createSession(
  base: string,
  condition: "fg" | "bg",
  trialCount: number,
  seed: number,
): Promise<SessionInfo> {
  return request<SessionInfo>(`${base}/sessions`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ condition, trial_count: trialCount, seed }),
  });
}

export function nextTrial(base: string, sessionId: string): Promise<NextTrial> {
  return request<NextTrial>(`${base}/sessions/${sessionId}/next`);
}

export function submitResponse(
  base: string,
  sessionId: string,
  trialId: string,
  picks: string[],
  elapsedMs?: number,
): Promise<SubmitResult> {
  return request<SubmitResult>(`${base}/sessions/${sessionId}/responses`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({
      trial_id: trialId,
      picks,
      elapsed_ms: elapsedMs ?? null,
    }),
  });
}

export function fetchReport(
  base: string,
  sessionId: string,
  netId?: string,
): Promise<StudyReport> {
  const query = netId ? `?net=${encodeURIComponent(netId)}` : "";
  return request<StudyReport>(`${base}/sessions/${sessionId}/report${query}`);
}
