/** What-if pruning pane: pick features to drop, run the prune on the
 * server, compare before/after AUROC and weights, inspect per-document
 * explanations side by side, and adopt the new model for the next round. */

import { ExplanationResponse, WorkbenchApi } from "../api.js";
import { clear, el, formatNumber } from "../dom.js";
import { WhatIfPruneViewModel } from "../viewmodels.js";

export class WhatIfPruneView {
  readonly vm: WhatIfPruneViewModel;
  private root: HTMLElement;
  private resultPane = el("div", { class: "what-if-result" });
  private status = el("div", { class: "status" });
  private onAdopt: (modelId: string) => void;

  constructor(private api: WorkbenchApi, container: HTMLElement,
              onAdopt: (modelId: string) => void = () => {}) {
    this.vm = new WhatIfPruneViewModel(api);
    this.root = container;
    this.onAdopt = onAdopt;
  }

  async render(modelId: string): Promise<void> {
    await this.vm.load(modelId);
    const detail = await this.api.getModel(modelId);
    clear(this.root);
    const retrain = el("input", { type: "checkbox" });
    const run = el("button", {}, ["prune"]);
    run.onclick = async () => {
      try {
        const result = await this.vm.run((retrain as HTMLInputElement).checked);
        await this.renderResult(result.newModelId);
      } catch (error) {
        this.status.textContent = `error: ${(error as Error).message}`;
      }
    };
    const checkboxes = detail.query_ids.map((queryId) => {
      const box = el("input", { type: "checkbox" });
      box.onchange = () => this.vm.toggleDrop(queryId);
      return el("label", { class: "drop-choice" }, [box, queryId]);
    });
    this.root.append(
      el("h2", {}, [`What-if pruning for ${detail.task} (${modelId})`]),
      this.status,
      el("div", { class: "drop-choices" }, checkboxes),
      el("label", {}, [retrain, "retrain on kept features"]),
      run,
      this.resultPane,
    );
  }

  private async renderResult(newModelId: string): Promise<void> {
    const result = this.vm.lastResult!;
    clear(this.resultPane);
    const changed = result.coefficientDiff.filter((row) => row.before !== row.after);
    const diffRows = changed.map((row) =>
      el("tr", {}, [
        el("td", {}, [row.query_id]),
        el("td", {}, [formatNumber(row.before)]),
        el("td", {}, [formatNumber(row.after)]),
      ]),
    );
    const adopt = el("button", {}, ["iterate on this model"]);
    adopt.onclick = () => {
      this.vm.iterateOn(newModelId);
      this.onAdopt(newModelId);
    };
    const explainId = el("input", { placeholder: "doc_id for explanation diff" });
    const explain = el("button", {}, ["explain"]);
    const explanationPane = el("div", { class: "explanations" });
    explain.onclick = async () => {
      const docId = (explainId as HTMLInputElement).value;
      const { before, after } = await this.vm.explanationDiff(docId, newModelId);
      clear(explanationPane);
      explanationPane.append(
        this.explanationTable("before", before),
        this.explanationTable("after", after),
      );
    };
    this.resultPane.append(
      el("div", {}, [
        `AUROC before ${formatNumber(result.before.auroc)} vs after ${formatNumber(result.after.auroc)} ` +
        `(test, n=${result.after.n})`,
      ]),
      el("table", { class: "diff" }, [
        el("tr", {}, [el("th", {}, ["feature"]), el("th", {}, ["before"]), el("th", {}, ["after"])]),
        ...diffRows,
      ]),
      adopt,
      el("div", {}, [explainId, explain]),
      explanationPane,
    );
  }

  private explanationTable(label: string, explanation: ExplanationResponse): HTMLElement {
    const rows = explanation.items.map((item) =>
      el("tr", {}, [
        el("td", { title: item.question }, [item.query_id]),
        el("td", {}, [formatNumber(item.feature_value, 3)]),
        el("td", {}, [formatNumber(item.score)]),
      ]),
    );
    return el("div", { class: "explanation" }, [
      el("h3", {}, [
        `${label}: p=${formatNumber(explanation.predicted_probability)} ` +
        `(predicted ${explanation.predicted_label}, reference ${explanation.reference_label ?? "?"})`,
      ]),
      el("table", {}, [
        el("tr", {}, [el("th", {}, ["feature"]), el("th", {}, ["value"]), el("th", {}, ["score"])]),
        ...rows,
      ]),
    ]);
  }
}
