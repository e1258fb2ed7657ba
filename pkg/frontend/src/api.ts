// Thin typed client over the curation service HTTP API. The server is the
// single source of truth; callers re-fetch after every write.

export interface SeedSummary {
  seed_id: string;
  condition: string;
  group: string;
  prompt: string;
  image_url: string | null;
  accepted_count: number;
  candidate_count: number;
  finalized: boolean;
}

export interface Candidate {
  candidate_id: string;
  seed_id: string;
  prompt: string;
  review: "pending" | "accepted" | "rejected";
  reject_reason: string | null;
  image_url: string;
}

export interface ReviewResult {
  candidate_id: string;
  review: string;
  reject_reason: string | null;
  accepted_count: number;
  seed_id: string;
}

export interface SelectionManifest {
  condition: string;
  target_group: string;
  entries: Record<string, string[]>;
  finalized: boolean;
}

export type ApiOutcome<T> =
  | { kind: "ok"; data: T }
  | { kind: "conflict"; detail: string }
  | { kind: "invalid"; detail: string };

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export const REJECT_REASONS = [
  "anatomy_change",
  "artifact",
  "pathology_misplaced",
  "other",
] as const;

function detailText(payload: unknown): string {
  if (payload && typeof payload === "object" && "detail" in payload) {
    const detail = (payload as { detail: unknown }).detail;
    return typeof detail === "string" ? detail : JSON.stringify(detail);
  }
  return JSON.stringify(payload);
}

export class CurationApi {
  constructor(
    private readonly fetchFn: FetchLike,
    private readonly base: string = "",
  ) {}

  async seeds(condition?: string, group?: string): Promise<SeedSummary[]> {
    const params = new URLSearchParams();
    if (condition) params.set("condition", condition);
    if (group) params.set("group", group);
    const query = params.toString();
    const response = await this.fetchFn(`${this.base}/api/seeds${query ? "?" + query : ""}`);
    if (!response.ok) throw new Error(`seed listing failed (${response.status})`);
    return (await response.json()) as SeedSummary[];
  }

  async candidates(seedId: string): Promise<Candidate[]> {
    const response = await this.fetchFn(
      `${this.base}/api/candidates?seed_id=${encodeURIComponent(seedId)}`,
    );
    if (!response.ok) throw new Error(`candidate listing failed (${response.status})`);
    return (await response.json()) as Candidate[];
  }

  async review(
    candidateId: string,
    decision: "accept" | "reject",
    reason?: string,
    reviewer = "ui",
  ): Promise<ApiOutcome<ReviewResult>> {
    const response = await this.fetchFn(`${this.base}/api/review`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ candidate_id: candidateId, decision, reason, reviewer }),
    });
    const payload = await response.json();
    if (response.ok) return { kind: "ok", data: payload as ReviewResult };
    if (response.status === 409) return { kind: "conflict", detail: detailText(payload) };
    return { kind: "invalid", detail: detailText(payload) };
  }

  async exportSelection(
    condition: string,
    group: string,
  ): Promise<ApiOutcome<SelectionManifest>> {
    const response = await this.fetchFn(`${this.base}/api/export`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ condition, group }),
    });
    const payload = await response.json();
    if (response.ok) return { kind: "ok", data: payload as SelectionManifest };
    if (response.status === 409) return { kind: "conflict", detail: detailText(payload) };
    return { kind: "invalid", detail: detailText(payload) };
  }
}
