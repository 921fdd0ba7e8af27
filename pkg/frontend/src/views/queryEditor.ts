/** Query editor pane: list, add, edit, delete queries; preview the
 * calibrated values of one query on a small document sample. */

import { WorkbenchApi, QueryModel } from "../api.js";
import { clear, el, formatNumber } from "../dom.js";
import { PREVIEW_DOC_LIMIT, QueryEditorViewModel } from "../viewmodels.js";

export class QueryEditorView {
  readonly vm: QueryEditorViewModel;
  private root: HTMLElement;
  private status: HTMLElement;

  constructor(private api: WorkbenchApi, container: HTMLElement) {
    this.vm = new QueryEditorViewModel(api);
    this.root = container;
    this.status = el("div", { class: "status" });
  }

  async render(): Promise<void> {
    await this.vm.load();
    clear(this.root);
    this.root.append(
      el("h2", {}, [`Queries (version ${this.vm.version})`]),
      this.status,
      this.table(),
      this.addForm(),
    );
  }

  private table(): HTMLElement {
    const header = el("tr", {}, [
      el("th", {}, ["id"]),
      el("th", {}, ["question"]),
      el("th", {}, ["template"]),
      el("th", {}, ["custom"]),
      el("th", {}, ["actions"]),
    ]);
    const rows = this.vm.queries.map((query) => this.row(query));
    return el("table", { class: "query-table" }, [header, ...rows]);
  }

  private row(query: QueryModel): HTMLElement {
    const question = el("input", { value: query.question, size: "60" });
    const save = el("button", {}, ["save"]);
    save.onclick = () =>
      this.guard(async () => {
        await this.vm.update(query.query_id, {
          question: (question as HTMLInputElement).value,
          template_id: query.template_id,
          custom: query.custom,
          expected_support: query.expected_support,
        });
        await this.render();
      });
    const remove = el("button", {}, ["delete"]);
    remove.onclick = () =>
      this.guard(async () => {
        await this.vm.remove(query.query_id);
        await this.render();
      });
    const preview = el("button", {}, ["preview"]);
    preview.onclick = () => this.guard(() => this.showPreview(query.query_id));
    return el("tr", {}, [
      el("td", {}, [query.query_id]),
      el("td", {}, [question]),
      el("td", {}, [query.template_id]),
      el("td", {}, [query.custom ? "yes" : "no"]),
      el("td", {}, [save, remove, preview]),
    ]);
  }

  private addForm(): HTMLElement {
    const id = el("input", { placeholder: "query_id" });
    const question = el("input", { placeholder: "Does the patient have ...?", size: "60" });
    const custom = el("input", { type: "checkbox" });
    const add = el("button", {}, ["add query"]);
    add.onclick = () =>
      this.guard(async () => {
        await this.vm.add({
          query_id: (id as HTMLInputElement).value,
          question: (question as HTMLInputElement).value,
          template_id: "clinical-note",
          custom: (custom as HTMLInputElement).checked,
          expected_support: {},
        });
        await this.render();
      });
    return el("div", { class: "add-form" }, [id, question, el("label", {}, [custom, "custom"]), add]);
  }

  private async showPreview(queryId: string): Promise<void> {
    const docs = await this.api.listDocuments({ limit: Math.min(3, PREVIEW_DOC_LIMIT) });
    const cells = await this.vm.preview(queryId, docs.map((d) => d.doc_id));
    this.status.textContent =
      `preview ${queryId}: ` +
      cells.map((cell) => `${cell.doc_id}=${formatNumber(cell.value, 3)}`).join("  ");
  }

  private async guard(work: () => Promise<void>): Promise<void> {
    try {
      this.status.textContent = "";
      await work();
    } catch (error) {
      // surface inline; the edit is never silently dropped
      this.status.textContent = `error: ${(error as Error).message}`;
    }
  }
}
