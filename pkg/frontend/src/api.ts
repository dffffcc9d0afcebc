// Typed client for the generation service. Every pixel the UI shows came out
// of one of these calls; nothing is rendered locally.

export interface HealthInfo {
  status: string;
  resolution: number;
  C: number;
}

export interface GenerateParams {
  ingredients: string[];
  seed: number;
  truncation: number;
}

export interface GenerateResult {
  ingredients: string[];
  labels: number[];
  seed: number;
  truncation: number;
  resolution: number;
  sha256: string;
  png_base64: string;
}

export interface EndpointParams {
  ingredients: string[];
  seed: number;
}

export interface InterpolateCell {
  row: number;
  col: number;
  alpha: number;
  beta: number;
  sha256: string;
  png_base64: string;
}

export interface InterpolateResult {
  steps: number;
  truncation: number;
  a: EndpointParams;
  b: EndpointParams;
  axes: { rows: string; cols: string };
  cells: InterpolateCell[];
}

// Structured 400s arrive as {detail: {code, message, ...}}; anything else
// becomes code "http_error".
export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly ingredient?: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorFrom(resp: Response, url: string): Promise<ApiError> {
  try {
    const detail = (await resp.json()).detail;
    if (detail && typeof detail.code === "string") {
      return new ApiError(detail.code, detail.message, detail.ingredient);
    }
  } catch {
    // body was not the structured form
  }
  return new ApiError("http_error", `${url} failed with status ${resp.status}`);
}

export class ServiceClient {
  constructor(private readonly baseUrl: string = "") {}

  private async get<T>(path: string): Promise<T> {
    const url = this.baseUrl + path;
    const resp = await fetch(url);
    if (!resp.ok) throw await errorFrom(resp, url);
    return (await resp.json()) as T;
  }

  private async post<T>(path: string, body: unknown, signal?: AbortSignal): Promise<T> {
    const url = this.baseUrl + path;
    const resp = await fetch(url, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    if (!resp.ok) throw await errorFrom(resp, url);
    return (await resp.json()) as T;
  }

  health(): Promise<HealthInfo> {
    return this.get("/health");
  }

  vocabulary(): Promise<string[]> {
    return this.get("/vocabulary");
  }

  generate(params: GenerateParams, signal?: AbortSignal): Promise<GenerateResult> {
    return this.post("/generate.json", params, signal);
  }

  interpolate(
    a: EndpointParams,
    b: EndpointParams,
    steps: number,
    truncation: number,
    signal?: AbortSignal,
  ): Promise<InterpolateResult> {
    return this.post("/interpolate", { a, b, steps, truncation }, signal);
  }
}
