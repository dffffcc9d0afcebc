// In-memory stand-in for the generation service, faithful to its JSON
// contract. Image hashes are deterministic functions of the logical
// parameters, and grid corners reuse the single-generate hash, mirroring the
// real service where corner cells are bitwise equal to /generate output.

import type { EndpointParams, GenerateParams } from "../src/api.js";

export interface FakeOptions {
  offline?: boolean;
  rejectIngredient?: string; // the service refuses this name with a 400
}

interface LoggedCall {
  url: string;
  method: string;
  body: any;
  signal?: AbortSignal | null;
}

function hash(payload: unknown): string {
  const text = JSON.stringify(payload);
  let h = 5381 >>> 0;
  for (let i = 0; i < text.length; i++) {
    h = (Math.imul(h, 33) ^ text.charCodeAt(i)) >>> 0;
  }
  return h.toString(16).padStart(8, "0");
}

export function fakeService(vocabulary: string[], opts: FakeOptions = {}) {
  const log: LoggedCall[] = [];
  const issuedPngs = new Set<string>();

  const singleSha = (p: GenerateParams) =>
    hash([p.ingredients, p.seed, p.truncation]);
  const png = (sha: string) => {
    const b64 = btoa("png:" + sha);
    issuedPngs.add(b64);
    return b64;
  };

  const ok = (data: unknown) => ({ ok: true, status: 200, json: async () => data });
  const bad = (code: string, message: string, extra: Record<string, unknown> = {}) => ({
    ok: false,
    status: 400,
    json: async () => ({ detail: { code, message, ...extra } }),
  });

  function validate(ingredients: string[], seed: number, truncation: number) {
    for (const name of ingredients) {
      if (!vocabulary.includes(name) || name === opts.rejectIngredient) {
        return bad("unknown_ingredient", `unknown ingredient name: '${name}'`, {
          ingredient: name,
        });
      }
    }
    if (!Number.isInteger(seed) || seed < 0) {
      return bad("invalid_seed", "seed must fit in 64 bits unsigned");
    }
    if (!(truncation >= 0 && truncation <= 1)) {
      return bad("invalid_truncation", "truncation must lie in [0, 1]");
    }
    return null;
  }

  async function route(url: string, init?: RequestInit) {
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    log.push({ url, method: init?.method ?? "GET", body, signal: init?.signal });
    if (opts.offline) throw new TypeError("fetch failed");

    if (url.endsWith("/health")) {
      return ok({ status: "ok", resolution: 64, C: vocabulary.length });
    }
    if (url.endsWith("/vocabulary")) {
      return ok([...vocabulary]);
    }
    if (url.endsWith("/generate.json")) {
      const problem = validate(body.ingredients, body.seed, body.truncation);
      if (problem) return problem;
      const sha = singleSha(body);
      return ok({
        ingredients: [...body.ingredients],
        labels: vocabulary.map((n) => (body.ingredients.includes(n) ? 1 : 0)),
        seed: body.seed,
        truncation: body.truncation,
        resolution: 64,
        sha256: sha,
        png_base64: png(sha),
      });
    }
    if (url.endsWith("/interpolate")) {
      const { a, b, steps, truncation } = body as {
        a: EndpointParams;
        b: EndpointParams;
        steps: number;
        truncation: number;
      };
      if (!(steps >= 2 && steps <= 16)) {
        return bad("invalid_steps", "steps must lie in [2, 16]");
      }
      for (const end of [a, b]) {
        const problem = validate(end.ingredients, end.seed, truncation);
        if (problem) return problem;
      }
      const cells = [];
      for (let i = 0; i < steps; i++) {
        for (let j = 0; j < steps; j++) {
          const alpha = i / (steps - 1);
          const beta = j / (steps - 1);
          const corner =
            (alpha === 0 || alpha === 1) && (beta === 0 || beta === 1);
          const sha = corner
            ? singleSha({
                ingredients: (alpha ? b : a).ingredients,
                seed: (beta ? b : a).seed,
                truncation,
              })
            : hash([a, b, alpha, beta, truncation]);
          cells.push({
            row: i,
            col: j,
            alpha,
            beta,
            sha256: sha,
            png_base64: png(sha),
          });
        }
      }
      return ok({
        steps,
        truncation,
        a,
        b,
        axes: { rows: "label embedding", cols: "style noise" },
        cells,
      });
    }
    throw new Error("unrouted url: " + url);
  }

  return {
    fetch: ((url: unknown, init?: RequestInit) =>
      route(String(url), init)) as typeof fetch,
    log,
    issuedPngs,
    singleSha,
    singlePng: (p: GenerateParams) => btoa("png:" + singleSha(p)),
    calls: (path: string) => log.filter((c) => c.url.endsWith(path)),
  };
}
