import type {
  EffectDto,
  FetchLike,
  MetaResponse,
  PredictResponse,
  TrajectoryDto,
} from "../src/api.js";
import { fmt, fmtHorizon } from "../src/format.js";

/** Mirror of the bundled breast-cancer model's /api/meta payload. */
export const FIXTURE_META: MetaResponse = {
  format_version: 1,
  link: "identity",
  grid: {
    l_min: 2.5,
    l_max: 10.5,
    points: [2.5, 3, 3.5, 4, 4.5, 5, 5.5, 6, 6.5, 7, 7.5, 8, 8.5, 9, 9.5, 10, 10.5],
    tau: 10.5,
  },
  schema: {
    entries: [
      { name: "age", kind: "categorical", levels: ["55-74", "75+"], reference: "55-74" },
      { name: "t_stage", kind: "categorical", levels: ["T1", "T2"], reference: "T1" },
      { name: "n_stage", kind: "categorical", levels: ["N1", "N2", "N3"], reference: "N1" },
      { name: "grade", kind: "categorical", levels: ["I", "II", "III & IV"], reference: "I" },
      { name: "er", kind: "categorical", levels: ["negative", "positive"], reference: "negative" },
      { name: "pr", kind: "categorical", levels: ["negative", "positive"], reference: "negative" },
      {
        name: "surgery",
        kind: "categorical",
        levels: ["mastectomy", "BCS"],
        reference: "mastectomy",
      },
      { name: "chemotherapy", kind: "categorical", levels: ["no", "yes"], reference: "no" },
    ],
  },
  design_names: [
    "age=75+", "t_stage=T2", "n_stage=N2", "n_stage=N3", "grade=II",
    "grade=III & IV", "er=positive", "pr=positive", "surgery=BCS", "chemotherapy=yes",
  ],
  n_subjects: 3892,
};

export const TINY_META: MetaResponse = {
  format_version: 1,
  link: "identity",
  grid: { l_min: 1, l_max: 10, points: [1, 5, 10], tau: 10 },
  schema: {
    entries: [
      { name: "arm", kind: "categorical", levels: ["control", "treated"], reference: "control" },
      { name: "dose", kind: "numeric" },
    ],
  },
  design_names: ["arm=treated", "dose"],
  n_subjects: 100,
};

/** Linear fake trajectory through the full fixture grid, exact at 5 and 10. */
export function trajectory(label: string, v5: number, v10: number, se: number): TrajectoryDto {
  const horizons = FIXTURE_META.grid.points;
  const values = horizons.map((l) => v5 + ((v10 - v5) * (l - 5)) / 5);
  const ses = horizons.map(() => se);
  return {
    label,
    horizons,
    values,
    se: ses,
    ci_lower: values.map((v) => v - 1.96 * se),
    ci_upper: values.map((v) => v + 1.96 * se),
  };
}

export function effectDto(covariate: string, base: number, slope: number): EffectDto {
  const horizons = FIXTURE_META.grid.points;
  const values = horizons.map((l) => base + slope * (l - horizons[0]));
  return {
    covariate,
    horizons,
    values,
    se: horizons.map(() => 0.05),
    ci_lower: values.map((v) => v - 0.098),
    ci_upper: values.map((v) => v + 0.098),
    slopes: horizons.map(() => slope),
  };
}

export interface MockRoutes {
  meta?: MetaResponse | (() => Response | Promise<Response>);
  predict?: (body: string) => Response | Promise<Response>;
}

export function jsonResponse(doc: unknown, status = 200): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export function mockFetch(routes: MockRoutes): FetchLike {
  return async (url, init) => {
    if (url.endsWith("/api/meta")) {
      const meta = routes.meta;
      if (meta === undefined) throw new Error("no meta route");
      return typeof meta === "function" ? meta() : jsonResponse(meta);
    }
    if (url.endsWith("/api/predict")) {
      if (!routes.predict) throw new Error("no predict route");
      return routes.predict(String(init?.body ?? ""));
    }
    throw new Error(`unexpected url ${url}`);
  };
}

/**
 * Every numeric token the UI is allowed to render for a given exchange:
 * each response field through the shared formatters, plus same-horizon
 * between-profile differences (the one sanctioned derived column), with
 * signs stripped the same way the extractor strips them.
 */
export function allowedTokens(meta: MetaResponse, response: PredictResponse): Set<string> {
  const out = new Set<string>();
  const addValue = (x: number) => {
    out.add(fmt(x).replace(/^-/, ""));
  };
  const addHorizon = (l: number) => {
    out.add(fmtHorizon(l).replace(/^-/, ""));
  };
  addHorizon(meta.grid.l_min);
  addHorizon(meta.grid.l_max);
  for (const pred of response.predictions) {
    pred.horizons.forEach(addHorizon);
    pred.values.forEach(addValue);
    pred.se.forEach(addValue);
    pred.ci_lower.forEach(addValue);
    pred.ci_upper.forEach(addValue);
  }
  const first = response.predictions[0];
  for (const pred of response.predictions.slice(1)) {
    pred.values.forEach((v, j) => addValue(v - first.values[j]));
  }
  for (const eff of response.effects ?? []) {
    eff.horizons.forEach(addHorizon);
    eff.values.forEach(addValue);
    eff.se.forEach(addValue);
    eff.ci_lower.forEach(addValue);
    eff.ci_upper.forEach(addValue);
    eff.slopes.forEach(addValue);
  }
  return out;
}

/** Response-provided strings that may legitimately contain digits. */
export function responseStrings(meta: MetaResponse, response: PredictResponse): string[] {
  const strings: string[] = [];
  for (const entry of meta.schema.entries) {
    strings.push(entry.name);
    if (entry.kind === "categorical") strings.push(...entry.levels);
  }
  strings.push(...meta.design_names);
  for (const pred of response.predictions) if (pred.label) strings.push(pred.label);
  for (const eff of response.effects ?? []) strings.push(eff.covariate);
  strings.sort((a, b) => b.length - a.length); // longest first so substrings survive
  return strings;
}

/** All numeric tokens in rendered text, after removing response strings. */
export function renderedNumericTokens(root: HTMLElement, knownStrings: string[]): string[] {
  const tokens: string[] = [];
  const walker = root.ownerDocument.createTreeWalker(root, NodeFilter.SHOW_TEXT);
  while (walker.nextNode()) {
    let text = walker.currentNode.textContent ?? "";
    for (const s of knownStrings) text = text.split(s).join(" ");
    for (const match of text.matchAll(/\d+(?:\.\d+)?/g)) tokens.push(match[0]);
  }
  return tokens;
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
