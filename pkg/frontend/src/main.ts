/** App shell: session header, model picker, and the three panes. The page
 * holds no state beyond the selected model id; reloading reconstructs every
 * view from service GETs. */

import { WorkbenchApi } from "./api.js";
import { clear, el } from "./dom.js";
import { CoefficientInspectorView } from "./views/coefficientInspector.js";
import { QueryEditorView } from "./views/queryEditor.js";
import { WhatIfPruneView } from "./views/whatIfPrune.js";

const BASE_URL = (window as unknown as { QUERYFEAT_API?: string }).QUERYFEAT_API
  ?? "http://127.0.0.1:8000";

async function boot(): Promise<void> {
  const api = new WorkbenchApi(BASE_URL);
  const header = document.getElementById("header")!;
  const controls = document.getElementById("controls")!;
  const pane = document.getElementById("pane")!;

  const session = await api.session();
  header.textContent =
    `dataset ${session.dataset_id} | ${session.n_documents} documents ` +
    `(${session.n_train} train / ${session.n_test} test) | ` +
    `query-set v${session.query_set_version} | scorer ${session.scorer_identity}`;

  const queryEditor = new QueryEditorView(api, pane);
  const inspector = new CoefficientInspectorView(api, pane);
  const whatIf = new WhatIfPruneView(api, pane, (modelId) => {
    modelPicker.value = modelId;
    void refreshModels(modelId);
  });

  const modelPicker = el("select", { class: "model-picker" });
  const labelPicker = el("select", { class: "label-picker" });
  for (const task of session.tasks) {
    for (const label of task.labels) {
      labelPicker.append(el("option", { value: label }, [label]));
    }
  }
  const trainButton = el("button", {}, ["train"]);
  trainButton.onclick = async () => {
    const summary = await api.train({
      task: (labelPicker as HTMLSelectElement).value,
      variant: "continuous",
    });
    await refreshModels(summary.model_id);
  };

  async function refreshModels(selected?: string): Promise<void> {
    const models = await api.listModels();
    clear(modelPicker);
    for (const model of models) {
      const text = `${model.task} ${model.variant} ${model.model_id}` +
        (model.stale ? " (stale)" : "");
      modelPicker.append(el("option", { value: model.model_id }, [text]));
    }
    if (selected) (modelPicker as HTMLSelectElement).value = selected;
  }

  const tabs = el("nav", {}, []);
  const openQueries = el("button", {}, ["queries"]);
  openQueries.onclick = () => void queryEditor.render();
  const openInspector = el("button", {}, ["coefficients"]);
  openInspector.onclick = () => {
    const modelId = (modelPicker as HTMLSelectElement).value;
    if (modelId) void inspector.render(modelId);
  };
  const openWhatIf = el("button", {}, ["what-if"]);
  openWhatIf.onclick = () => {
    const modelId = (modelPicker as HTMLSelectElement).value;
    if (modelId) void whatIf.render(modelId);
  };
  tabs.append(openQueries, openInspector, openWhatIf);

  controls.append(tabs, labelPicker, trainButton, modelPicker);
  await refreshModels();
  await queryEditor.render();
}

document.addEventListener("DOMContentLoaded", () => {
  void boot().catch((error) => {
    document.getElementById("header")!.textContent =
      `cannot reach the workbench service: ${(error as Error).message}`;
  });
});
