/** Full review workflow against a stateful double of the HTTP service:
 * submitted policies render both facet lists exactly as returned, judgments
 * flow into the acceptance metrics, and blind mode masks model identity
 * until the query is fully judged. */

import { beforeEach, describe, expect, it } from "vitest";

import { Api } from "../src/api.js";
import { App } from "../src/app.js";
import { FakeService, MemoryStorage, defaultHits, flush, sequentialIds } from "./support.js";

const POLICY = "always verify TLS certificates";

function makeApp(fake: FakeService): App {
  const app = new App({
    api: new Api(fake.fetch),
    storage: new MemoryStorage(),
    newId: sequentialIds(),
  });
  document.body.appendChild(app.el);
  return app;
}

async function submitQuery(app: App, text: string, k: string): Promise<void> {
  app.search.input.value = text;
  app.search.input.dispatchEvent(new Event("input"));
  app.search.kSelect.value = k;
  app.search.el.querySelector("form")!.dispatchEvent(new Event("submit", { cancelable: true }));
  await flush();
}

function cardsOf(app: App, facet: string): HTMLElement[] {
  return [...app.el.querySelectorAll<HTMLElement>(`.facet-panel[data-facet="${facet}"] .card`)];
}

function dashboardCells(app: App): string[] {
  const row = app.dashboard.el.querySelector<HTMLTableRowElement>("tbody tr")!;
  return [...row.querySelectorAll("td")].map((td) => td.textContent ?? "");
}

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("review round trip", () => {
  it("renders both facet lists exactly as the API returned them", async () => {
    const fake = new FakeService();
    const app = makeApp(fake);

    await submitQuery(app, POLICY, "5");

    for (const facet of ["compliant", "noncompliant"] as const) {
      const rendered = cardsOf(app, facet);
      const served = defaultHits(POLICY, facet, 5);
      expect(rendered.map((c) => c.dataset.snippetId)).toEqual(served.map((h) => h.snippet_id));
      expect(rendered.map((c) => c.querySelector(".code")?.textContent)).toEqual(
        served.map((h) => h.code),
      );
      expect(rendered.map((c) => c.querySelector(".distance")?.textContent)).toEqual(
        served.map((h) => String(h.distance)),
      );
      expect(rendered.map((c) => c.querySelector(".rank")?.textContent)).toEqual(
        served.map((h) => `#${h.rank}`),
      );
    }
  });

  it("feeds judgments into the acceptance metrics the dashboard shows", async () => {
    const fake = new FakeService();
    const app = makeApp(fake);
    await submitQuery(app, POLICY, "1");

    await app.dashboard.refresh();
    expect(dashboardCells(app)).toEqual(["m-aaaaaaaaaa", "—", "—", "—", "0"]);

    cardsOf(app, "compliant")[0]!.querySelector<HTMLButtonElement>(".accept")!.click();
    await flush();
    cardsOf(app, "noncompliant")[0]!.querySelector<HTMLButtonElement>(".reject")!.click();
    await flush();

    await app.dashboard.refresh();
    expect(dashboardCells(app)).toEqual(["m-aaaaaaaaaa", "100%", "0%", "50%", "2"]);
  });

  it("masks the model tag until every card of the query is judged", async () => {
    const fake = new FakeService();
    const app = makeApp(fake);
    expect(app.blindToggle.checked).toBe(true);

    await submitQuery(app, POLICY, "3");
    const label = app.el.querySelector<HTMLElement>(".model-tag-label")!;
    expect(label.dataset.masked).toBe("true");
    expect(app.search.el.innerHTML).not.toContain("m-aaaaaaaaaa");

    const all = [...cardsOf(app, "compliant"), ...cardsOf(app, "noncompliant")];
    for (const [i, card] of all.entries()) {
      expect(label.dataset.masked).toBe("true");
      card.querySelector<HTMLButtonElement>(i % 2 === 0 ? ".accept" : ".reject")!.click();
      await flush();
    }

    expect(label.dataset.masked).toBeUndefined();
    expect(label.textContent).toBe("m-aaaaaaaaaa");
  });

  it("lets the reviewer rename themselves between judgments", async () => {
    const fake = new FakeService();
    const app = makeApp(fake);
    await submitQuery(app, POLICY, "1");

    app.reviewerInput.value = "expert-7";
    cardsOf(app, "compliant")[0]!.querySelector<HTMLButtonElement>(".accept")!.click();
    await flush();

    expect([...fake.judgments.values()][0]?.reviewer).toBe("expert-7");
  });

  it("switches between search and dashboard views", async () => {
    const fake = new FakeService();
    const app = makeApp(fake);

    expect(app.search.el.hidden).toBe(false);
    expect(app.dashboard.el.hidden).toBe(true);

    app.el.querySelector<HTMLButtonElement>('.view-tab[data-view="dashboard"]')!.click();
    await flush();

    expect(app.search.el.hidden).toBe(true);
    expect(app.dashboard.el.hidden).toBe(false);
    expect(app.dashboard.el.querySelectorAll("tbody tr")).toHaveLength(1);
  });
});
