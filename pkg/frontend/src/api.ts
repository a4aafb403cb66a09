// Typed client for the prediction service. The UI performs no model math:
// everything it displays comes back from these two endpoints.

export interface MetaGrid {
  l_min: number;
  l_max: number;
  points: number[];
  tau: number;
}

export interface CategoricalEntry {
  name: string;
  kind: "categorical";
  levels: string[];
  reference: string;
}

export interface NumericEntry {
  name: string;
  kind: "numeric";
}

export type SchemaEntry = CategoricalEntry | NumericEntry;

export interface MetaResponse {
  format_version: number;
  link: string;
  grid: MetaGrid;
  schema: { entries: SchemaEntry[] };
  design_names: string[];
  n_subjects: number;
}

export interface TrajectoryDto {
  horizons: number[];
  values: number[];
  se: number[];
  ci_lower: number[];
  ci_upper: number[];
  label?: string;
}

export interface EffectDto {
  covariate: string;
  horizons: number[];
  values: number[];
  se: number[];
  ci_lower: number[];
  ci_upper: number[];
  slopes: number[];
}

export interface PredictResponse {
  predictions: TrajectoryDto[];
  effects?: EffectDto[];
}

export interface FieldError {
  field: string;
  message: string;
}

export interface ErrorResponse {
  errors: FieldError[];
}

/** Covariate values for one profile, in no particular order. */
export interface ProfileValues {
  label?: string;
  values: Record<string, string | number>;
}

/**
 * The one canonical serialization of a predict request. Covariate keys
 * follow schema order and the optional label comes last, so identical
 * inputs always produce identical bytes (the form round-trip contract).
 */
export function canonicalRequestBody(
  schema: SchemaEntry[],
  profiles: ProfileValues[],
  grid: number[],
  effects?: true | string[],
): string {
  const body: Record<string, unknown> = {
    profiles: profiles.map((p) => {
      const out: Record<string, string | number> = {};
      for (const entry of schema) out[entry.name] = p.values[entry.name];
      if (p.label) out["label"] = p.label;
      return out;
    }),
    grid,
  };
  if (effects !== undefined) body["effects"] = effects;
  return JSON.stringify(body);
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export async function fetchMeta(fetchImpl: FetchLike, base = ""): Promise<MetaResponse> {
  const resp = await fetchImpl(`${base}/api/meta`);
  if (!resp.ok) throw new Error(`meta request failed with status ${resp.status}`);
  return (await resp.json()) as MetaResponse;
}

export interface PredictOutcome {
  status: number;
  doc: PredictResponse | ErrorResponse;
  /** A newer request was started while this one was in flight. */
  stale: boolean;
}

/**
 * Serializes access to /api/predict: at most one request in flight, and
 * starting a new one aborts the old (latest wins). An aborted call
 * rejects with an AbortError from fetch; callers drop those silently.
 */
export class PredictGate {
  private current: AbortController | null = null;

  constructor(private fetchImpl: FetchLike, private base = "") {}

  async predict(body: string): Promise<PredictOutcome> {
    this.current?.abort();
    const mine = new AbortController();
    this.current = mine;
    const resp = await this.fetchImpl(`${this.base}/api/predict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body,
      signal: mine.signal,
    });
    const doc = (await resp.json()) as PredictResponse | ErrorResponse;
    const stale = this.current !== mine;
    if (this.current === mine) this.current = null;
    return { status: resp.status, doc, stale };
  }
}
