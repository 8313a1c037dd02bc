// Top-level wiring: one editor pane, one results pane, a two-slot run store
// for comparisons, and a banner for transport-level failures.  One request
// is in flight at a time; a response only renders if its token is still the
// newest one issued.

import { ApiError, createRequestGate, type ApiClient } from "./api.js";
import { createRunStore, defaultDraft, draftIsValid, toRequest, type ScenarioDraft } from "./draft.js";
import { renderScenarioEditor, type EditorHandle } from "./editor.js";
import { renderResults } from "./results.js";
import { fromPredictResponse, fromSimulationRecord } from "./runview.js";

export type SubmitKind = "simulate" | "predict";

export interface AppHandle {
  draft: ScenarioDraft;
  editor: EditorHandle;
  submit(kind: SubmitKind): Promise<void>;
  reloadTopologies(): Promise<void>;
  root: HTMLElement;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export async function startApp(root: HTMLElement, api: ApiClient): Promise<AppHandle> {
  root.textContent = "";
  const bannerSlot = el("div", "banner-slot");
  const layout = el("div", "layout");
  const editorPane = el("div", "editor-pane");
  const resultsPane = el("div", "results-pane");
  const toolbar = el("div", "toolbar");
  const resultsEl = el("div", "results");
  resultsEl.dataset.role = "results";
  resultsPane.append(toolbar, resultsEl);
  layout.append(editorPane, resultsPane);
  root.append(bannerSlot, layout);

  const draft = defaultDraft();
  const runs = createRunStore();
  const gate = createRequestGate();
  let editor: EditorHandle;
  let runCounter = 0;

  function showBanner(message: string, retry?: () => void) {
    bannerSlot.textContent = "";
    const banner = el("div", "banner", message);
    banner.dataset.role = "banner";
    if (retry) {
      const btn = el("button", "retry", "Retry");
      btn.type = "button";
      btn.addEventListener("click", () => {
        clearBanner();
        retry();
      });
      banner.append(btn);
    }
    bannerSlot.append(banner);
  }

  function clearBanner() {
    bannerSlot.textContent = "";
  }

  function updateToolbar() {
    toolbar.textContent = "";
    if (!runs.current) {
      toolbar.append(el("span", "hint", "run a scenario to see results"));
      return;
    }
    const pinBtn = el("button", undefined, "Pin current run for comparison");
    pinBtn.type = "button";
    pinBtn.dataset.role = "pin";
    pinBtn.addEventListener("click", () => {
      runs.pin();
      rerender();
    });
    toolbar.append(pinBtn);
    if (runs.pinned) {
      const unpinBtn = el("button", undefined, `Unpin ${runs.pinned.label}`);
      unpinBtn.type = "button";
      unpinBtn.dataset.role = "unpin";
      unpinBtn.addEventListener("click", () => {
        runs.unpin();
        rerender();
      });
      toolbar.append(unpinBtn);
    }
  }

  function rerender() {
    if (runs.current) {
      renderResults(resultsEl, runs.current, runs.pinned !== runs.current ? runs.pinned : null);
    }
    updateToolbar();
  }

  async function submit(kind: SubmitKind): Promise<void> {
    if (!draftIsValid(draft)) {
      editor.refresh();
      return;
    }
    const request = toRequest(draft);
    const token = gate.issue();
    editor.setBusy(true);
    try {
      const view =
        kind === "simulate"
          ? fromSimulationRecord(await api.simulate(request))
          : fromPredictResponse(await api.predict(request));
      if (!gate.isCurrent(token)) {
        return; // a newer submission superseded this one
      }
      clearBanner();
      runCounter += 1;
      runs.push({ label: `run #${runCounter} (${kind})`, request, view });
      rerender();
    } catch (err) {
      if (!gate.isCurrent(token)) {
        return;
      }
      if (err instanceof ApiError) {
        if (err.status === 400) {
          editor.showServerErrors(err.errors);
        } else {
          showBanner(`service error ${err.status}: ${err.message}`, () => void submit(kind));
        }
      } else {
        showBanner("service unreachable; edits are kept", () => void submit(kind));
      }
    } finally {
      if (gate.isCurrent(token)) {
        editor.setBusy(false);
      }
    }
  }

  function mountEditor(topologyIds: string[]) {
    editor = renderScenarioEditor(editorPane, draft, topologyIds, {
      onSimulate: () => void submit("simulate"),
      onPredict: () => void submit("predict"),
    });
  }

  async function reloadTopologies(): Promise<void> {
    try {
      const topologies = await api.topologies();
      const ids = topologies.map((t) => t.id);
      if (ids.length > 0 && !ids.includes(draft.topology)) {
        draft.topology = ids[0];
      }
      clearBanner();
      mountEditor(ids.length > 0 ? ids : [draft.topology]);
    } catch {
      // keep the form editable with the default topology
      mountEditor([draft.topology]);
      showBanner("service unreachable; topology list unavailable", () => void reloadTopologies());
    }
  }

  await reloadTopologies();
  updateToolbar();
  return { draft, editor: editor!, submit, reloadTopologies, root };
}
