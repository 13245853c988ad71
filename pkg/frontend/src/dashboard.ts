/** Acceptance dashboard: one row per served model tag.
 *
 * Every cell is the server's number rendered verbatim — the client never
 * recomputes a rate. Facets with no judgments arrive as null and render as
 * a dash. Tags are sorted lexicographically so the table order is stable
 * even though the server shuffles its tag list on every request.
 */

import { Api, ApiError } from "./api.js";
import type { AcceptanceMetrics } from "./api.js";

const COLUMNS = ["model", "compliant %", "non-compliant %", "overall %", "judgments"] as const;

function cell(value: number | null): string {
  return value === null ? "—" : `${value}%`;
}

export class Dashboard {
  readonly el: HTMLElement;
  private readonly errorEl: HTMLElement;
  private readonly body: HTMLTableSectionElement;

  constructor(private readonly api: Api) {
    this.el = document.createElement("section");
    this.el.className = "dashboard";

    this.errorEl = document.createElement("p");
    this.errorEl.className = "dashboard-error";
    this.errorEl.setAttribute("role", "alert");
    this.errorEl.hidden = true;

    const table = document.createElement("table");
    table.className = "acceptance-table";
    const head = document.createElement("thead");
    const headRow = document.createElement("tr");
    for (const column of COLUMNS) {
      const th = document.createElement("th");
      th.textContent = column;
      headRow.appendChild(th);
    }
    head.appendChild(headRow);
    this.body = document.createElement("tbody");
    table.append(head, this.body);

    this.el.append(this.errorEl, table);
  }

  /** Re-fetch metrics for every served model and rebuild the table. */
  async refresh(): Promise<void> {
    this.errorEl.hidden = true;
    try {
      const tags = [...(await this.api.modelTags())].sort();
      const metrics = await Promise.all(tags.map((tag) => this.api.acceptance(tag)));
      this.render(tags, metrics);
    } catch (error) {
      const message =
        error instanceof ApiError
          ? `metrics unavailable (${error.status}): ${error.message}`
          : `metrics unavailable: ${String(error)}`;
      this.errorEl.textContent = message;
      this.errorEl.hidden = false;
    }
  }

  private render(tags: string[], metrics: AcceptanceMetrics[]): void {
    this.body.textContent = "";
    tags.forEach((tag, i) => {
      const m = metrics[i];
      if (m === undefined) return;
      const row = document.createElement("tr");
      row.dataset.modelTag = tag;
      const cells = [tag, cell(m.compliant), cell(m.noncompliant), cell(m.overall), String(m.n_judgments)];
      for (const text of cells) {
        const td = document.createElement("td");
        td.textContent = text;
        row.appendChild(td);
      }
      this.body.appendChild(row);
    });
  }
}
