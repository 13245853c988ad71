/** Application shell: search / dashboard views, reviewer name, blind toggle. */

import { Api } from "./api.js";
import { SearchCache } from "./cache.js";
import { Dashboard } from "./dashboard.js";
import { JudgmentRegistry } from "./judgments.js";
import type { KeyValueStore } from "./judgments.js";
import { SearchView } from "./search_view.js";
import { Toaster } from "./toast.js";

export interface AppOptions {
  api?: Api;
  storage?: KeyValueStore;
  newId?: () => string;
}

export class App {
  readonly el: HTMLElement;
  readonly search: SearchView;
  readonly dashboard: Dashboard;
  readonly blindToggle: HTMLInputElement;
  readonly reviewerInput: HTMLInputElement;

  constructor(options: AppOptions = {}) {
    const api = options.api ?? new Api();
    const toaster = new Toaster();

    this.el = document.createElement("div");
    this.el.className = "app";

    const header = document.createElement("header");
    const title = document.createElement("h1");
    title.textContent = "compliance review";

    const reviewerLabel = document.createElement("label");
    reviewerLabel.append("reviewer ");
    this.reviewerInput = document.createElement("input");
    this.reviewerInput.type = "text";
    this.reviewerInput.className = "reviewer-input";
    this.reviewerInput.value = "anonymous";
    reviewerLabel.appendChild(this.reviewerInput);

    const blindLabel = document.createElement("label");
    this.blindToggle = document.createElement("input");
    this.blindToggle.type = "checkbox";
    this.blindToggle.className = "blind-toggle";
    this.blindToggle.checked = true;
    blindLabel.append(this.blindToggle, " blind review");

    const nav = document.createElement("nav");
    const searchTab = document.createElement("button");
    searchTab.type = "button";
    searchTab.textContent = "search";
    searchTab.className = "view-tab";
    searchTab.dataset.view = "search";
    const dashboardTab = document.createElement("button");
    dashboardTab.type = "button";
    dashboardTab.textContent = "acceptance rates";
    dashboardTab.className = "view-tab";
    dashboardTab.dataset.view = "dashboard";
    nav.append(searchTab, dashboardTab);

    header.append(title, reviewerLabel, blindLabel, nav);

    this.search = new SearchView({
      api,
      cache: new SearchCache(),
      registry: new JudgmentRegistry(options.storage ?? window.localStorage),
      reviewer: () => this.reviewerInput.value.trim() || "anonymous",
      blind: () => this.blindToggle.checked,
      newId: options.newId,
      onToast: (message) => toaster.show(message),
    });
    this.dashboard = new Dashboard(api);

    searchTab.addEventListener("click", () => this.show("search"));
    dashboardTab.addEventListener("click", () => {
      this.show("dashboard");
      void this.dashboard.refresh();
    });
    this.blindToggle.addEventListener("change", () => this.search.refreshTagVisibility());

    this.el.append(header, this.search.el, this.dashboard.el, toaster.el);
    this.show("search");
  }

  show(view: "search" | "dashboard"): void {
    this.search.el.hidden = view !== "search";
    this.dashboard.el.hidden = view !== "dashboard";
  }
}
