/** Coefficient inspector: bars sorted by weight, a-priori badges, expert
 * annotation capture, live P@k/AUC that re-renders on every toggle, and a
 * save that cross-checks the client preview against the service. */

import { WorkbenchApi } from "../api.js";
import { clear, el, formatNumber } from "../dom.js";
import { CoefficientInspectorViewModel } from "../viewmodels.js";

export class CoefficientInspectorView {
  readonly vm: CoefficientInspectorViewModel;
  private root: HTMLElement;
  private rankingPane = el("div", { class: "ranking" });
  private status = el("div", { class: "status" });

  constructor(api: WorkbenchApi, container: HTMLElement) {
    this.vm = new CoefficientInspectorViewModel(api);
    this.root = container;
  }

  async render(modelId: string): Promise<void> {
    await this.vm.load(modelId);
    clear(this.root);
    const title = el("h2", {}, [`Coefficients for ${this.vm.task} (${modelId})`]);
    if (this.vm.stale) {
      this.root.append(
        el("div", { class: "banner stale" },
           ["query set has changed since this model was trained; retrain to refresh"]),
      );
    }
    this.root.append(title, this.status, this.bars(), this.rankingPane);
    this.renderRanking();
  }

  private bars(): HTMLElement {
    const maxAbs = Math.max(...this.vm.entries.map((e) => Math.abs(e.weight)), 1e-9);
    const rows = this.vm.entries.map((entry) => {
      const width = Math.round((Math.abs(entry.weight) / maxAbs) * 240);
      const bar = el("div", {
        class: `bar ${entry.weight >= 0 ? "positive" : "negative"}`,
        style: `width:${width}px`,
      });
      const annotation = this.vm.currentAnnotation(entry.query_id);
      const toggle = el("button", { class: "annotation" }, [annotation ?? "unannotated"]);
      toggle.onclick = () => {
        const next = this.vm.toggle(entry.query_id);
        toggle.textContent = next ?? "unannotated";
        this.renderRanking();
      };
      const badge = entry.expected_support
        ? el("span", { class: `badge ${entry.expected_support}` }, [entry.expected_support])
        : el("span", { class: "badge none" }, ["no prior"]);
      return el("tr", {}, [
        el("td", {}, [String(entry.rank)]),
        el("td", { title: entry.question }, [entry.query_id]),
        el("td", {}, [formatNumber(entry.weight)]),
        el("td", {}, [bar]),
        el("td", {}, [badge]),
        el("td", {}, [toggle]),
        el("td", { class: `alignment ${entry.alignment}` }, [entry.alignment]),
      ]);
    });
    return el("table", { class: "coefficients" }, rows);
  }

  /** Pure recompute from current annotations; no retraining, no fetch. */
  private renderRanking(): void {
    const preview = this.vm.livePreview();
    clear(this.rankingPane);
    const precisions = Object.entries(preview.precisionAt)
      .map(([k, value]) => `P@${k}=${formatNumber(value, 2)}`)
      .join("  ");
    const save = el("button", {}, ["save annotations"]);
    save.onclick = async () => {
      const check = await this.vm.save();
      this.status.textContent = check.consistent
        ? `saved; ranking AUC ${formatNumber(check.serverAuc)} (live preview agreed)`
        : `saved, but live AUC ${formatNumber(check.liveAuc)} != server ` +
          `${formatNumber(check.serverAuc)}; showing server value`;
      await this.render(this.vm.modelId);
    };
    this.rankingPane.append(
      el("div", {}, [`ranking vs current judgements: ${precisions}  AUC=${formatNumber(preview.auc)}`]),
      save,
    );
  }
}
