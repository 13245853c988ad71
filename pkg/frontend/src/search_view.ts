/** Policy search: one text input, facet tabs, k selector, judgeable cards.
 *
 * Submitting issues one POST /search per facet against a single model tag
 * picked from the server's shuffled tag list, renders both lists in server
 * rank order, and restores previously recorded decisions. Every number and
 * string on a card comes verbatim from the API response. Judging posts a
 * judgment with a client-generated id, updates the card optimistically and
 * rolls back with a toast if the server refuses. In blind mode the model
 * tag stays hidden until every card of the current query is judged.
 */

import { Api, ApiError } from "./api.js";
import type { Decision, Facet, SearchHit } from "./api.js";
import type { CachedSearch, SearchCache } from "./cache.js";
import type { JudgmentRegistry } from "./judgments.js";

export interface SearchViewOptions {
  api: Api;
  cache: SearchCache;
  registry: JudgmentRegistry;
  /** Current reviewer name; read at judgment time. */
  reviewer: () => string;
  /** Whether blind review is active; read whenever visibility updates. */
  blind: () => boolean;
  /** Client judgment-id generator; injectable for tests. */
  newId?: () => string;
  onToast?: (message: string) => void;
}

type CardPhase = "unjudged" | "pending" | "judged";

interface CardState {
  facet: Facet;
  hit: SearchHit;
  el: HTMLLIElement;
  badge: HTMLElement;
  buttons: HTMLButtonElement[];
  phase: CardPhase;
  decision: Decision | null;
}

interface QueryState {
  policyText: string;
  k: number;
  modelTag: string;
  cards: CardState[];
}

const FACETS: readonly Facet[] = ["compliant", "noncompliant"];
const K_CHOICES = [1, 3, 5, 10, 20];

export class SearchView {
  readonly el: HTMLElement;
  readonly input: HTMLInputElement;
  readonly kSelect: HTMLSelectElement;
  readonly submitButton: HTMLButtonElement;

  private readonly errorEl: HTMLElement;
  private readonly statusEl: HTMLElement;
  private readonly modelLine: HTMLElement;
  private readonly tagLabel: HTMLElement;
  private readonly lists: Record<Facet, HTMLOListElement>;
  private readonly tabs: Record<Facet, HTMLButtonElement>;
  private readonly panels: Record<Facet, HTMLElement>;

  private readonly newId: () => string;
  private query: QueryState | null = null;
  private inFlight = false;

  constructor(private readonly opts: SearchViewOptions) {
    this.newId = opts.newId ?? (() => crypto.randomUUID());

    this.el = document.createElement("section");
    this.el.className = "search-view";

    const form = document.createElement("form");
    form.className = "query-form";
    this.input = document.createElement("input");
    this.input.type = "text";
    this.input.className = "policy-input";
    this.input.placeholder = "Enter a coding policy…";
    this.kSelect = document.createElement("select");
    this.kSelect.className = "k-select";
    for (const k of K_CHOICES) {
      const option = document.createElement("option");
      option.value = String(k);
      option.textContent = `top ${k}`;
      if (k === 5) option.selected = true;
      this.kSelect.appendChild(option);
    }
    this.submitButton = document.createElement("button");
    this.submitButton.type = "submit";
    this.submitButton.className = "submit";
    this.submitButton.textContent = "Search";
    this.submitButton.disabled = true;
    form.append(this.input, this.kSelect, this.submitButton);

    this.errorEl = document.createElement("p");
    this.errorEl.className = "query-error";
    this.errorEl.setAttribute("role", "alert");
    this.errorEl.hidden = true;
    this.statusEl = document.createElement("p");
    this.statusEl.className = "query-status";
    this.statusEl.hidden = true;

    this.modelLine = document.createElement("p");
    this.modelLine.className = "model-line";
    this.modelLine.hidden = true;
    this.modelLine.append("served by ");
    this.tagLabel = document.createElement("span");
    this.tagLabel.className = "model-tag-label";
    this.modelLine.appendChild(this.tagLabel);

    const tabBar = document.createElement("div");
    tabBar.className = "facet-tabs";
    tabBar.setAttribute("role", "tablist");
    const columns = document.createElement("div");
    columns.className = "facet-panels";
    this.tabs = {} as Record<Facet, HTMLButtonElement>;
    this.panels = {} as Record<Facet, HTMLElement>;
    this.lists = {} as Record<Facet, HTMLOListElement>;
    for (const facet of FACETS) {
      const tab = document.createElement("button");
      tab.type = "button";
      tab.className = "facet-tab";
      tab.dataset.facet = facet;
      tab.setAttribute("role", "tab");
      tab.textContent = facet === "compliant" ? "compliant" : "non-compliant";
      tab.addEventListener("click", () => this.activateTab(facet));
      tabBar.appendChild(tab);
      this.tabs[facet] = tab;

      const panel = document.createElement("section");
      panel.className = "facet-panel";
      panel.dataset.facet = facet;
      panel.setAttribute("role", "tabpanel");
      const list = document.createElement("ol");
      list.className = "cards";
      panel.appendChild(list);
      columns.appendChild(panel);
      this.panels[facet] = panel;
      this.lists[facet] = list;
    }
    this.activateTab("compliant");

    this.el.append(form, this.errorEl, this.statusEl, this.modelLine, tabBar, columns);

    this.input.addEventListener("input", () => this.syncSubmitDisabled());
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submit();
    });
  }

  private syncSubmitDisabled(): void {
    this.submitButton.disabled = this.inFlight || this.input.value.trim() === "";
  }

  private activateTab(facet: Facet): void {
    for (const f of FACETS) {
      const active = f === facet;
      this.tabs[f].setAttribute("aria-selected", String(active));
      this.panels[f].hidden = !active;
    }
  }

  private showError(message: string): void {
    this.errorEl.textContent = message;
    this.errorEl.hidden = false;
  }

  /** Run the query in the input box: both facets, one model, cache-aware. */
  async submit(): Promise<void> {
    const policyText = this.input.value.trim();
    if (policyText === "" || this.inFlight) return;
    const k = Number(this.kSelect.value);

    this.inFlight = true;
    this.syncSubmitDisabled();
    this.errorEl.hidden = true;
    this.statusEl.textContent = "Searching…";
    this.statusEl.hidden = false;
    try {
      const health = await this.opts.api.health();
      let entry = this.opts.cache.get(policyText, k, health.model_hash);
      if (entry === null) {
        const tags = await this.opts.api.modelTags();
        const tag = tags[0];
        if (tag === undefined) throw new ApiError(503, "no models served");
        const [plus, minus] = await Promise.all([
          this.opts.api.search(policyText, "compliant", k, tag),
          this.opts.api.search(policyText, "noncompliant", k, tag),
        ]);
        entry = {
          modelHash: plus.model_hash,
          modelTag: plus.model_tag,
          compliant: plus.results,
          noncompliant: minus.results,
        };
        this.opts.cache.put(policyText, k, entry);
      }
      this.renderResults(policyText, k, entry);
    } catch (error) {
      const message =
        error instanceof ApiError
          ? `search failed (${error.status}): ${error.message}`
          : `search failed: ${String(error)}`;
      this.showError(message);
    } finally {
      this.statusEl.hidden = true;
      this.inFlight = false;
      this.syncSubmitDisabled();
    }
  }

  private renderResults(policyText: string, k: number, entry: CachedSearch): void {
    const query: QueryState = { policyText, k, modelTag: entry.modelTag, cards: [] };
    for (const facet of FACETS) {
      const list = this.lists[facet];
      list.textContent = "";
      for (const hit of entry[facet]) {
        const card = this.buildCard(query, facet, hit);
        query.cards.push(card);
        list.appendChild(card.el);
      }
    }
    this.query = query;
    this.modelLine.hidden = false;
    this.refreshTagVisibility();
  }

  private buildCard(query: QueryState, facet: Facet, hit: SearchHit): CardState {
    const el = document.createElement("li");
    el.className = "card";
    el.dataset.snippetId = hit.snippet_id;
    el.dataset.facet = facet;

    const head = document.createElement("div");
    head.className = "card-head";
    const rank = document.createElement("span");
    rank.className = "rank";
    rank.textContent = `#${hit.rank}`;
    const id = document.createElement("span");
    id.className = "snippet-id";
    id.textContent = hit.snippet_id;
    const distance = document.createElement("span");
    distance.className = "distance";
    distance.textContent = String(hit.distance);
    const badge = document.createElement("span");
    badge.className = "badge";
    head.append(rank, id, distance, badge);

    const pre = document.createElement("pre");
    pre.className = "code";
    const codeEl = document.createElement("code");
    codeEl.textContent = hit.code;
    pre.appendChild(codeEl);

    const actions = document.createElement("div");
    actions.className = "actions";
    const buttons: HTMLButtonElement[] = [];
    const card: CardState = { facet, hit, el, badge, buttons, phase: "unjudged", decision: null };
    for (const decision of ["accept", "reject"] as const) {
      const button = document.createElement("button");
      button.type = "button";
      button.className = decision;
      button.textContent = decision;
      button.addEventListener("click", () => void this.judge(query, card, decision));
      buttons.push(button);
      actions.appendChild(button);
    }
    el.append(head, pre, actions);

    const recorded = this.opts.registry.get(query.modelTag, query.policyText, facet, hit.snippet_id);
    if (recorded !== null) {
      this.applyDecision(card, recorded.decision, "judged");
    } else {
      el.dataset.state = "unjudged";
    }
    return card;
  }

  private applyDecision(card: CardState, decision: Decision, phase: CardPhase): void {
    card.phase = phase;
    card.decision = decision;
    card.el.dataset.state = decision === "accept" ? "accepted" : "rejected";
    card.badge.textContent = decision === "accept" ? "accepted" : "rejected";
    for (const button of card.buttons) button.disabled = true;
  }

  private revertCard(card: CardState): void {
    card.phase = "unjudged";
    card.decision = null;
    card.el.dataset.state = "unjudged";
    card.badge.textContent = "";
    for (const button of card.buttons) button.disabled = false;
  }

  private async judge(query: QueryState, card: CardState, decision: Decision): Promise<void> {
    if (card.phase !== "unjudged") return;
    this.applyDecision(card, decision, "pending");
    const judgmentId = this.newId();
    try {
      await this.opts.api.judge({
        id: judgmentId,
        policy_text: query.policyText,
        snippet_id: card.hit.snippet_id,
        facet: card.facet,
        model_tag: query.modelTag,
        decision,
        reviewer: this.opts.reviewer(),
      });
      card.phase = "judged";
      this.opts.registry.record(query.modelTag, query.policyText, card.facet, card.hit.snippet_id, {
        decision,
        judgmentId,
      });
      this.refreshTagVisibility();
    } catch (error) {
      this.revertCard(card);
      const message =
        error instanceof ApiError
          ? `judgment failed (${error.status}): ${error.message}`
          : `judgment failed: ${String(error)}`;
      this.opts.onToast?.(message);
    }
  }

  private allJudged(): boolean {
    const query = this.query;
    return query !== null && query.cards.length > 0 && query.cards.every((c) => c.phase === "judged");
  }

  /** Blind mode keeps the model tag out of the DOM entirely until every
   * card of the current query is judged. */
  refreshTagVisibility(): void {
    if (this.query === null) return;
    const masked = this.opts.blind() && !this.allJudged();
    if (masked) {
      this.tagLabel.textContent = "(masked)";
      this.tagLabel.setAttribute("data-masked", "true");
    } else {
      this.tagLabel.textContent = this.query.modelTag;
      this.tagLabel.removeAttribute("data-masked");
    }
  }
}
