// Explorer app: ingredient toggles, seed and truncation controls with live
// (debounced) regeneration, and a two-endpoint interpolation grid. All
// images come from the service; the UI only displays response payloads.

import {
  ApiError,
  EndpointParams,
  GenerateResult,
  InterpolateCell,
  InterpolateResult,
  ServiceClient,
} from "./api.js";
import { DEBOUNCE_MS, LatestWins } from "./scheduler.js";
import {
  ExplorerState,
  MAX_SEED,
  MAX_STEPS,
  MIN_STEPS,
  clampSeed,
  clampSteps,
  clampTruncation,
  stateFromQuery,
  stateToQuery,
} from "./state.js";

export interface UrlHost {
  read(): string;
  write(query: string): void;
}

export function windowUrlHost(win: Window): UrlHost {
  return {
    read: () => win.location.search,
    write: (query) =>
      win.history.replaceState(null, "", query ? "?" + query : win.location.pathname),
  };
}

export interface ExplorerApp {
  readonly state: ExplorerState;
  readonly online: boolean;
  readonly generateRequests: number;
  readonly gridRequests: number;
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

function pngUrl(base64: string): string {
  return "data:image/png;base64," + base64;
}

export async function initExplorer(
  root: HTMLElement,
  client: ServiceClient,
  url: UrlHost,
): Promise<ExplorerApp> {
  root.textContent = "";
  const banner = el("div", "banner hidden");
  root.appendChild(banner);

  let vocabulary: string[] = [];
  let online = true;
  try {
    await client.health();
    vocabulary = await client.vocabulary();
  } catch {
    online = false;
    banner.textContent =
      "service unreachable: start it with `mlcgan serve` and reload";
    banner.classList.remove("hidden");
  }

  const state = stateFromQuery(online ? url.read() : "", vocabulary);
  const generateScheduler = new LatestWins(DEBOUNCE_MS);
  const gridScheduler = new LatestWins(0); // explicit button, still serialized

  // ---- controls ----------------------------------------------------------

  const controls = el("section", "controls");
  root.appendChild(controls);

  const vocabSection = el("fieldset", "vocabulary");
  vocabSection.appendChild(el("legend", undefined, "ingredients"));
  const checkboxes = new Map<string, HTMLInputElement>();
  for (const name of vocabulary) {
    const label = el("label", "toggle");
    const box = el("input");
    box.type = "checkbox";
    box.dataset.name = name;
    box.checked = state.ingredients.includes(name);
    label.appendChild(box);
    label.appendChild(document.createTextNode(name));
    vocabSection.appendChild(label);
    checkboxes.set(name, box);
  }
  const vocabError = el("div", "inline-error hidden");
  vocabSection.appendChild(vocabError);
  controls.appendChild(vocabSection);

  const seedRow = el("div", "control-row");
  seedRow.appendChild(el("span", "control-label", "seed"));
  const seedInput = el("input", "seed-input");
  seedInput.type = "number";
  seedInput.min = "0";
  seedInput.max = String(MAX_SEED);
  seedInput.step = "1";
  seedInput.value = String(state.seed);
  seedRow.appendChild(seedInput);
  const randomSeed = el("button", "random-seed", "randomize");
  randomSeed.type = "button";
  seedRow.appendChild(randomSeed);
  const seedError = el("div", "inline-error hidden");
  seedRow.appendChild(seedError);
  controls.appendChild(seedRow);

  const psiRow = el("div", "control-row");
  psiRow.appendChild(el("span", "control-label", "truncation"));
  const psiInput = el("input", "psi-input");
  psiInput.type = "range";
  psiInput.min = "0";
  psiInput.max = "1";
  psiInput.step = "0.01";
  psiInput.value = String(state.truncation);
  const psiValue = el("span", "psi-value", state.truncation.toFixed(2));
  psiRow.appendChild(psiInput);
  psiRow.appendChild(psiValue);
  const psiError = el("div", "inline-error hidden");
  psiRow.appendChild(psiError);
  controls.appendChild(psiRow);

  const tabs = el("div", "mode-tabs");
  const singleTab = el("button", "mode-tab", "single");
  singleTab.type = "button";
  singleTab.dataset.mode = "single";
  const interpTab = el("button", "mode-tab", "interpolate");
  interpTab.type = "button";
  interpTab.dataset.mode = "interpolate";
  tabs.appendChild(singleTab);
  tabs.appendChild(interpTab);
  controls.appendChild(tabs);

  const requestError = el("div", "inline-error request-error hidden");
  controls.appendChild(requestError);

  // ---- single view -------------------------------------------------------

  const singlePanel = el("section", "single-panel");
  const preview = el("img", "preview");
  preview.alt = "generated image";
  singlePanel.appendChild(preview);
  const metadata = el("dl", "metadata");
  singlePanel.appendChild(metadata);
  root.appendChild(singlePanel);

  // ---- interpolate view --------------------------------------------------

  const interpPanel = el("section", "interp-panel");

  function endpointEditor(which: "a" | "b") {
    const box = el("div", "endpoint");
    box.id = "endpoint-" + which;
    box.appendChild(el("strong", undefined, which.toUpperCase()));
    const summary = el("span", "endpoint-summary");
    box.appendChild(summary);
    const seed = el("input", "endpoint-seed");
    seed.type = "number";
    seed.min = "0";
    seed.step = "1";
    box.appendChild(seed);
    const capture = el("button", "capture", "use current selection");
    capture.type = "button";
    box.appendChild(capture);
    return { box, summary, seed, capture };
  }

  const editorA = endpointEditor("a");
  const editorB = endpointEditor("b");
  const swap = el("button", "swap", "swap A/B");
  swap.type = "button";

  const stepsInput = el("input", "steps-input");
  stepsInput.type = "number";
  stepsInput.min = String(MIN_STEPS);
  stepsInput.max = String(MAX_STEPS);
  stepsInput.value = String(state.steps);
  const gridButton = el("button", "grid-generate", "generate grid");
  gridButton.type = "button";
  const gridError = el("div", "inline-error hidden");
  const gridAxes = el("div", "grid-axes");
  const grid = el("div", "grid");

  const interpControls = el("div", "interp-controls");
  interpControls.appendChild(editorA.box);
  interpControls.appendChild(editorB.box);
  interpControls.appendChild(swap);
  interpControls.appendChild(el("span", "control-label", "steps"));
  interpControls.appendChild(stepsInput);
  interpControls.appendChild(gridButton);
  interpPanel.appendChild(interpControls);
  interpPanel.appendChild(gridError);
  interpPanel.appendChild(gridAxes);
  interpPanel.appendChild(grid);
  root.appendChild(interpPanel);

  // ---- state plumbing ----------------------------------------------------

  const errorSlots: Record<string, HTMLElement> = {
    unknown_ingredient: vocabError,
    invalid_seed: seedError,
    invalid_truncation: psiError,
    invalid_steps: gridError,
  };

  function clearErrors() {
    for (const slot of [vocabError, seedError, psiError, gridError, requestError]) {
      slot.classList.add("hidden");
      slot.textContent = "";
    }
  }

  function showError(err: unknown) {
    if (err instanceof DOMException && err.name === "AbortError") return;
    const slot =
      err instanceof ApiError ? (errorSlots[err.code] ?? requestError) : requestError;
    slot.textContent = err instanceof Error ? err.message : String(err);
    slot.classList.remove("hidden");
  }

  function syncEndpointEditors() {
    editorA.summary.textContent = state.a.ingredients.join(", ") || "[empty]";
    editorA.seed.value = String(state.a.seed);
    editorB.summary.textContent = state.b.ingredients.join(", ") || "[empty]";
    editorB.seed.value = String(state.b.seed);
  }

  function syncMode() {
    singleTab.classList.toggle("active", state.mode === "single");
    interpTab.classList.toggle("active", state.mode === "interpolate");
    singlePanel.classList.toggle("hidden", state.mode !== "single");
    interpPanel.classList.toggle("hidden", state.mode !== "interpolate");
  }

  function showMetadata(result: GenerateResult) {
    metadata.textContent = "";
    const rows: [string, string][] = [
      ["ingredients", result.ingredients.join(", ") || "[empty]"],
      ["labels", result.labels.join("")],
      ["seed", String(result.seed)],
      ["truncation", String(result.truncation)],
      ["resolution", String(result.resolution)],
      ["sha256", result.sha256],
    ];
    for (const [key, value] of rows) {
      metadata.appendChild(el("dt", undefined, key));
      metadata.appendChild(el("dd", undefined, value));
    }
  }

  function regenerate() {
    generateScheduler.schedule(async (signal) => {
      clearErrors();
      try {
        const result = await client.generate(
          {
            ingredients: state.ingredients,
            seed: state.seed,
            truncation: state.truncation,
          },
          signal,
        );
        preview.src = pngUrl(result.png_base64);
        showMetadata(result);
      } catch (err) {
        showError(err);
      }
    });
  }

  function renderGrid(result: InterpolateResult) {
    gridAxes.textContent =
      "rows: " + result.axes.rows + " (A to B), cols: " + result.axes.cols;
    grid.textContent = "";
    grid.style.gridTemplateColumns = "repeat(" + result.steps + ", 1fr)";
    for (const cell of result.cells) {
      const img = el("img", "cell");
      img.src = pngUrl(cell.png_base64);
      img.dataset.row = String(cell.row);
      img.dataset.col = String(cell.col);
      img.dataset.alpha = String(cell.alpha);
      img.dataset.beta = String(cell.beta);
      img.dataset.sha = cell.sha256;
      img.title =
        "alpha " + cell.alpha.toFixed(2) + ", beta " + cell.beta.toFixed(2) +
        ", click to make this endpoint A";
      img.addEventListener("click", () => promote(cell, result));
      grid.appendChild(img);
    }
  }

  function refreshGrid() {
    gridScheduler.schedule(async (signal) => {
      clearErrors();
      try {
        const result = await client.interpolate(
          state.a,
          state.b,
          state.steps,
          state.truncation,
          signal,
        );
        renderGrid(result);
      } catch (err) {
        showError(err);
      }
    });
  }

  // The API addresses images by (ingredients, seed), so a blended cell snaps
  // to its nearest representable endpoint on each axis: rows blend the label
  // embedding, columns the style noise.
  function promote(cell: InterpolateCell, result: InterpolateResult) {
    const labels: EndpointParams = cell.alpha < 0.5 ? result.a : result.b;
    const noise: EndpointParams = cell.beta < 0.5 ? result.a : result.b;
    state.a = { ingredients: [...labels.ingredients], seed: noise.seed };
    syncEndpointEditors();
    pushUrl();
    refreshGrid();
  }

  function pushUrl() {
    url.write(stateToQuery(state));
  }

  function changed() {
    pushUrl();
    if (state.mode === "single") regenerate();
  }

  // ---- event wiring ------------------------------------------------------

  for (const [, box] of checkboxes) {
    box.addEventListener("change", () => {
      state.ingredients = vocabulary.filter((n) => checkboxes.get(n)!.checked);
      changed();
    });
  }

  seedInput.addEventListener("change", () => {
    state.seed = clampSeed(seedInput.valueAsNumber);
    seedInput.value = String(state.seed);
    changed();
  });

  randomSeed.addEventListener("click", () => {
    state.seed = Math.floor(Math.random() * 2 ** 32);
    seedInput.value = String(state.seed);
    changed();
  });

  psiInput.addEventListener("input", () => {
    state.truncation = clampTruncation(psiInput.valueAsNumber);
    psiValue.textContent = state.truncation.toFixed(2);
    changed();
  });

  for (const tab of [singleTab, interpTab]) {
    tab.addEventListener("click", () => {
      state.mode = tab.dataset.mode as ExplorerState["mode"];
      syncMode();
      changed();
    });
  }

  for (const [editor, key] of [
    [editorA, "a"],
    [editorB, "b"],
  ] as const) {
    editor.capture.addEventListener("click", () => {
      state[key] = { ingredients: [...state.ingredients], seed: state.seed };
      syncEndpointEditors();
      pushUrl();
    });
    editor.seed.addEventListener("change", () => {
      state[key] = { ...state[key], seed: clampSeed(editor.seed.valueAsNumber) };
      syncEndpointEditors();
      pushUrl();
    });
  }

  swap.addEventListener("click", () => {
    [state.a, state.b] = [state.b, state.a];
    syncEndpointEditors();
    pushUrl();
  });

  stepsInput.addEventListener("change", () => {
    state.steps = clampSteps(stepsInput.valueAsNumber);
    stepsInput.value = String(state.steps);
    pushUrl();
  });

  gridButton.addEventListener("click", refreshGrid);

  // ---- boot --------------------------------------------------------------

  syncEndpointEditors();
  syncMode();
  if (online) {
    pushUrl();
    if (state.mode === "single") regenerate();
  } else {
    for (const input of controls.querySelectorAll("input, button")) {
      (input as HTMLInputElement | HTMLButtonElement).disabled = true;
    }
    for (const input of interpPanel.querySelectorAll("input, button")) {
      (input as HTMLInputElement | HTMLButtonElement).disabled = true;
    }
  }

  return {
    get state() {
      return state;
    },
    get online() {
      return online;
    },
    get generateRequests() {
      return generateScheduler.requestCount;
    },
    get gridRequests() {
      return gridScheduler.requestCount;
    },
  };
}
