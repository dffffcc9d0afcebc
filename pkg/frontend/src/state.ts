// Explorer state and its URL round trip. parse(serialize(s)) must equal s
// for every valid state so sessions are shareable as plain links.

export type Mode = "single" | "interpolate";

export interface EndpointState {
  ingredients: string[];
  seed: number;
}

export interface ExplorerState {
  mode: Mode;
  ingredients: string[];
  seed: number;
  truncation: number;
  a: EndpointState;
  b: EndpointState;
  steps: number;
}

// Seeds stay inside JS safe-integer range; the service accepts 64-bit seeds
// but JSON numbers above 2^53 would silently lose precision in the browser.
export const MAX_SEED = Number.MAX_SAFE_INTEGER;
export const MIN_STEPS = 2;
export const MAX_STEPS = 16;

export function defaultState(): ExplorerState {
  return {
    mode: "single",
    ingredients: [],
    seed: 0,
    truncation: 1.0,
    a: { ingredients: [], seed: 0 },
    b: { ingredients: [], seed: 1 },
    steps: 8,
  };
}

export function clampTruncation(psi: number): number {
  if (!Number.isFinite(psi)) return 1.0;
  return Math.min(1.0, Math.max(0.0, psi));
}

export function clampSeed(seed: number): number {
  if (!Number.isFinite(seed)) return 0;
  return Math.min(MAX_SEED, Math.max(0, Math.round(seed)));
}

export function clampSteps(steps: number): number {
  if (!Number.isFinite(steps)) return 8;
  return Math.min(MAX_STEPS, Math.max(MIN_STEPS, Math.round(steps)));
}

// Ingredient names contain spaces but never commas, so a comma join is an
// unambiguous list encoding once URLSearchParams has percent-escaped it.
function joinNames(names: string[]): string {
  return names.join(",");
}

function splitNames(value: string | null, vocabulary: string[]): string[] {
  if (!value) return [];
  const known = new Set(vocabulary);
  const seen = new Set<string>();
  const out: string[] = [];
  for (const name of value.split(",")) {
    if (known.has(name) && !seen.has(name)) {
      seen.add(name);
      out.push(name);
    }
  }
  return out;
}

export function stateToQuery(state: ExplorerState): string {
  const q = new URLSearchParams();
  q.set("mode", state.mode);
  q.set("i", joinNames(state.ingredients));
  q.set("seed", String(state.seed));
  q.set("psi", String(state.truncation));
  q.set("ai", joinNames(state.a.ingredients));
  q.set("as", String(state.a.seed));
  q.set("bi", joinNames(state.b.ingredients));
  q.set("bs", String(state.b.seed));
  q.set("steps", String(state.steps));
  return q.toString();
}

export function stateFromQuery(query: string, vocabulary: string[]): ExplorerState {
  const q = new URLSearchParams(query);
  const state = defaultState();
  if (q.get("mode") === "interpolate") state.mode = "interpolate";
  state.ingredients = splitNames(q.get("i"), vocabulary);
  state.seed = clampSeed(Number(q.get("seed") ?? "0"));
  state.truncation = clampTruncation(Number(q.get("psi") ?? "1"));
  state.a = {
    ingredients: splitNames(q.get("ai"), vocabulary),
    seed: clampSeed(Number(q.get("as") ?? "0")),
  };
  state.b = {
    ingredients: splitNames(q.get("bi"), vocabulary),
    seed: clampSeed(Number(q.get("bs") ?? "1")),
  };
  state.steps = clampSteps(Number(q.get("steps") ?? "8"));
  return state;
}
