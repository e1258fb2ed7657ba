// DOM controller. Every mutation round-trips through the server and the page
// re-renders from the response, so concurrent tabs and reloads always agree
// with the store. Keyboard: arrows move the highlight, "a" accepts, "x"
// rejects with the card's selected reason.

import { CurationApi, REJECT_REASONS } from "./api.js";
import type { Candidate, SeedSummary } from "./api.js";
import {
  canAccept,
  canReject,
  counterLabel,
  exportEnabled,
  incompleteSeeds,
  neighbourCandidate,
  scopeOptions,
  seedProgress,
} from "./state.js";

function element<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function slug(text: string): string {
  return text.replace(/ /g, "_");
}

export class CurationApp {
  private seeds: SeedSummary[] = [];
  private candidates: Candidate[] = [];
  private condition = "";
  private group = "";
  private selectedSeed: string | null = null;
  private highlighted: string | null = null;

  constructor(
    private readonly api: CurationApi,
    private readonly root: HTMLElement,
    private readonly doc: Document,
  ) {}

  async init(): Promise<void> {
    this.renderSkeleton();
    this.doc.addEventListener("keydown", (event) => this.onKey(event as KeyboardEvent));
    await this.withBanner(async () => {
      const allSeeds = await this.api.seeds();
      const scopes = scopeOptions(allSeeds);
      const select = this.pick<HTMLSelectElement>("#scope");
      select.innerHTML = "";
      for (const scope of scopes) {
        const option = this.doc.createElement("option");
        option.value = `${scope.condition}|${scope.group}`;
        option.textContent = `${scope.condition} — FST ${scope.group}`;
        select.appendChild(option);
      }
      if (scopes.length > 0) {
        this.condition = scopes[0].condition;
        this.group = scopes[0].group;
        select.value = `${this.condition}|${this.group}`;
      }
      await this.refresh();
    });
  }

  /** Re-fetch everything for the current scope; the server recount is the
   * only bookkeeping. */
  async refresh(): Promise<void> {
    if (!this.condition) return;
    this.seeds = await this.api.seeds(this.condition, this.group);
    if (!this.seeds.some((s) => s.seed_id === this.selectedSeed)) {
      const pending = incompleteSeeds(this.seeds);
      this.selectedSeed = (pending[0] ?? this.seeds[0])?.seed_id ?? null;
    }
    this.candidates = this.selectedSeed ? await this.api.candidates(this.selectedSeed) : [];
    if (!this.candidates.some((c) => c.candidate_id === this.highlighted)) {
      this.highlighted = this.candidates[0]?.candidate_id ?? null;
    }
    this.renderSeedList();
    this.renderReviewPane();
    this.renderHeader();
  }

  async selectScope(value: string): Promise<void> {
    const [condition, group] = value.split("|");
    this.condition = condition;
    this.group = group;
    this.selectedSeed = null;
    this.setError("");
    await this.withBanner(() => this.refresh());
  }

  async selectSeed(seedId: string): Promise<void> {
    this.selectedSeed = seedId;
    this.highlighted = null;
    this.setError("");
    await this.withBanner(() => this.refresh());
  }

  async review(candidateId: string, decision: "accept" | "reject", reason?: string): Promise<void> {
    this.setError("");
    await this.withBanner(async () => {
      const outcome = await this.api.review(candidateId, decision, reason);
      if (outcome.kind !== "ok") this.setError(outcome.detail);
      // no optimistic state: whatever happened, resync from the server
      await this.refresh();
    });
  }

  async exportSelection(): Promise<void> {
    this.setError("");
    await this.withBanner(async () => {
      const outcome = await this.api.exportSelection(this.condition, this.group);
      if (outcome.kind === "ok") {
        this.pick("#export-result").textContent =
          `written: selection.${slug(this.condition)}.${this.group}.json`;
      } else {
        this.setError(outcome.detail);
      }
      await this.refresh();
    });
  }

  // ---- rendering ----

  private renderSkeleton(): void {
    this.root.innerHTML = `
      <header>
        <select id="scope"></select>
        <span id="progress"></span>
        <button id="export" disabled>Export selection</button>
        <span id="export-result"></span>
      </header>
      <div id="banner" hidden></div>
      <div id="error" hidden></div>
      <main>
        <aside id="seed-list"></aside>
        <section id="review">
          <div id="seed-panel"></div>
          <div id="counter"></div>
          <div id="grid"></div>
        </section>
      </main>`;
    this.pick<HTMLSelectElement>("#scope").addEventListener("change", (event) => {
      void this.selectScope((event.target as HTMLSelectElement).value);
    });
    this.pick<HTMLButtonElement>("#export").addEventListener("click", () => {
      void this.exportSelection();
    });
  }

  private renderHeader(): void {
    const progress = seedProgress(this.seeds);
    this.pick("#progress").textContent = `seeds complete: ${progress.done} / ${progress.total}`;
    this.pick<HTMLButtonElement>("#export").disabled = !exportEnabled(this.seeds);
  }

  private renderSeedList(): void {
    const list = this.pick("#seed-list");
    list.innerHTML = "";
    for (const seed of this.seeds) {
      const row = element(this.doc, "button", "seed-row");
      row.dataset.seedId = seed.seed_id;
      if (seed.seed_id === this.selectedSeed) row.classList.add("selected");
      if (seed.accepted_count !== 4) row.classList.add("incomplete");
      row.textContent = `${seed.seed_id.slice(0, 8)} — ${seed.accepted_count}/4`;
      row.addEventListener("click", () => void this.selectSeed(seed.seed_id));
      list.appendChild(row);
    }
  }

  private renderReviewPane(): void {
    const seed = this.seeds.find((s) => s.seed_id === this.selectedSeed);
    const panel = this.pick("#seed-panel");
    panel.innerHTML = "";
    if (!seed) return;
    const figure = element(this.doc, "figure", "seed-figure");
    if (seed.image_url) {
      const img = element(this.doc, "img", "seed-image");
      img.src = seed.image_url;
      img.alt = `seed ${seed.seed_id}`;
      figure.appendChild(img);
    }
    const caption = element(this.doc, "figcaption");
    caption.textContent = `${seed.condition} · FST ${seed.group} · seed ${seed.seed_id.slice(0, 12)}`;
    const prompt = element(this.doc, "div", "prompt", seed.prompt);
    figure.appendChild(caption);
    panel.appendChild(figure);
    panel.appendChild(prompt);

    this.pick("#counter").textContent = counterLabel(this.candidates);

    const grid = this.pick("#grid");
    grid.innerHTML = "";
    for (const candidate of this.candidates) {
      grid.appendChild(this.renderCard(candidate, seed));
    }
  }

  private renderCard(candidate: Candidate, seed: SeedSummary): HTMLElement {
    const card = element(this.doc, "div", `card ${candidate.review}`);
    card.dataset.candidateId = candidate.candidate_id;
    if (candidate.candidate_id === this.highlighted) card.classList.add("highlighted");
    card.addEventListener("click", () => {
      this.highlighted = candidate.candidate_id;
      this.renderReviewPane();
    });

    const img = element(this.doc, "img", "candidate-image");
    img.src = candidate.image_url;
    img.alt = candidate.candidate_id;
    card.appendChild(img);
    card.appendChild(element(this.doc, "div", "review-state", candidate.review));

    const controls = element(this.doc, "div", "controls");
    const acceptButton = element(this.doc, "button", "accept", "accept (a)");
    acceptButton.disabled = !canAccept(this.candidates, candidate, seed.finalized);
    acceptButton.addEventListener("click", (event) => {
      event.stopPropagation();
      void this.review(candidate.candidate_id, "accept");
    });

    const reasonSelect = element(this.doc, "select", "reason");
    for (const reason of REJECT_REASONS) {
      const option = this.doc.createElement("option");
      option.value = reason;
      option.textContent = reason.replace(/_/g, " ");
      reasonSelect.appendChild(option);
    }

    const rejectButton = element(this.doc, "button", "reject", "reject (x)");
    rejectButton.disabled = !canReject(candidate, seed.finalized);
    rejectButton.addEventListener("click", (event) => {
      event.stopPropagation();
      void this.review(candidate.candidate_id, "reject", reasonSelect.value);
    });

    controls.appendChild(acceptButton);
    controls.appendChild(rejectButton);
    controls.appendChild(reasonSelect);
    card.appendChild(controls);
    return card;
  }

  private onKey(event: KeyboardEvent): void {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === "SELECT" || target.tagName === "INPUT")) return;
    if (event.key === "ArrowRight" || event.key === "ArrowLeft") {
      this.highlighted = neighbourCandidate(
        this.candidates,
        this.highlighted,
        event.key === "ArrowRight" ? 1 : -1,
      );
      this.renderReviewPane();
      return;
    }
    const highlighted = this.candidates.find((c) => c.candidate_id === this.highlighted);
    if (!highlighted) return;
    if (event.key === "a") {
      void this.review(highlighted.candidate_id, "accept");
    } else if (event.key === "x") {
      const card = this.root.querySelector(
        `.card[data-candidate-id="${highlighted.candidate_id}"] select.reason`,
      ) as HTMLSelectElement | null;
      void this.review(highlighted.candidate_id, "reject", card?.value ?? "other");
    }
  }

  // ---- chrome ----

  private setError(text: string): void {
    const node = this.pick("#error");
    node.textContent = text;
    node.hidden = text === "";
  }

  /** Network failures show a retry banner; no state is kept client-side, so
   * retrying is always just another refresh. */
  private async withBanner(action: () => Promise<void>): Promise<void> {
    const banner = this.pick("#banner");
    try {
      await action();
      banner.hidden = true;
      banner.innerHTML = "";
    } catch (error) {
      banner.hidden = false;
      banner.innerHTML = "";
      banner.appendChild(
        element(this.doc, "span", "", `connection lost (${String(error)}) `),
      );
      const retry = element(this.doc, "button", "", "retry");
      retry.addEventListener("click", () => void this.withBanner(() => this.refresh()));
      banner.appendChild(retry);
    }
  }

  private pick<T extends HTMLElement = HTMLElement>(selector: string): T {
    const node = this.root.querySelector(selector);
    if (!node) throw new Error(`missing element ${selector}`);
    return node as T;
  }
}
