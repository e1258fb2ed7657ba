// Pure projections of server state into what the page shows. No client-side
// bookkeeping lives here: every number is derived from the latest server
// responses, so a page reload reproduces identical state.

import type { Candidate, SeedSummary } from "./api.js";

export const QUOTA = 4;

export interface ScopeOption {
  condition: string;
  group: string;
}

export function scopeOptions(seeds: SeedSummary[]): ScopeOption[] {
  const seen = new Map<string, ScopeOption>();
  for (const seed of seeds) {
    seen.set(`${seed.condition}|${seed.group}`, {
      condition: seed.condition,
      group: seed.group,
    });
  }
  return [...seen.values()].sort(
    (a, b) => a.condition.localeCompare(b.condition) || a.group.localeCompare(b.group),
  );
}

export function acceptedCount(candidates: Candidate[]): number {
  return candidates.filter((c) => c.review === "accepted").length;
}

/** Accept buttons lock as soon as the server-side count reaches the quota. */
export function canAccept(candidates: Candidate[], candidate: Candidate, finalized: boolean): boolean {
  if (finalized || candidate.review === "accepted") return false;
  return acceptedCount(candidates) < QUOTA;
}

export function canReject(candidate: Candidate, finalized: boolean): boolean {
  return !finalized && candidate.review !== "rejected";
}

export interface Progress {
  done: number;
  total: number;
}

export function seedProgress(seeds: SeedSummary[]): Progress {
  return {
    done: seeds.filter((s) => s.accepted_count === QUOTA).length,
    total: seeds.length,
  };
}

export function exportEnabled(seeds: SeedSummary[]): boolean {
  if (seeds.length === 0) return false;
  return seeds.every((s) => s.accepted_count === QUOTA);
}

export function incompleteSeeds(seeds: SeedSummary[]): SeedSummary[] {
  return seeds.filter((s) => s.accepted_count !== QUOTA);
}

export function counterLabel(candidates: Candidate[]): string {
  return `${acceptedCount(candidates)} of ${QUOTA} accepted`;
}

/** Candidate id to highlight after moving by `delta` from the current one. */
export function neighbourCandidate(
  candidates: Candidate[],
  currentId: string | null,
  delta: number,
): string | null {
  if (candidates.length === 0) return null;
  const index = candidates.findIndex((c) => c.candidate_id === currentId);
  if (index < 0) return candidates[0].candidate_id;
  const next = Math.min(Math.max(index + delta, 0), candidates.length - 1);
  return candidates[next].candidate_id;
}
