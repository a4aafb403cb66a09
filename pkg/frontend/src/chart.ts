import { fmtHorizon } from "./format.js";

// Dependency-free SVG line chart. It scales service-returned points into
// pixels and nothing else; the only numeric text it emits is the x-axis
// tick labels, which are horizons taken verbatim from the response.

export interface ChartSeries {
  label: string;
  color: string;
  horizons: number[];
  values: number[];
  lower?: number[];
  upper?: number[];
  dashed?: boolean;
}

const NS = "http://www.w3.org/2000/svg";
const WIDTH = 640;
const HEIGHT = 300;
const PAD = { left: 14, right: 14, top: 12, bottom: 30 };

function el<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string>,
): SVGElementTagNameMap[K] {
  const node = document.createElementNS(NS, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

export function buildChart(series: ChartSeries[], xTickCount = 5): SVGSVGElement {
  const svg = el("svg", {
    viewBox: `0 0 ${WIDTH} ${HEIGHT}`,
    class: "chart",
    role: "img",
  });
  if (series.length === 0) return svg;

  const xs = series.flatMap((s) => s.horizons);
  const ys = series.flatMap((s) => [...s.values, ...(s.lower ?? []), ...(s.upper ?? [])]);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  let yMin = Math.min(...ys);
  let yMax = Math.max(...ys);
  if (yMax === yMin) {
    yMin -= 0.5;
    yMax += 0.5;
  }
  const xSpan = xMax === xMin ? 1 : xMax - xMin;
  const sx = (x: number) =>
    PAD.left + ((x - xMin) / xSpan) * (WIDTH - PAD.left - PAD.right);
  const sy = (y: number) =>
    HEIGHT - PAD.bottom - ((y - yMin) / (yMax - yMin)) * (HEIGHT - PAD.top - PAD.bottom);

  // confidence bands first so curves draw on top
  for (const s of series) {
    if (!s.lower || !s.upper) continue;
    const forward = s.horizons.map((x, i) => `${sx(x)},${sy(s.upper![i])}`);
    const back = [...s.horizons.keys()].reverse().map(
      (i) => `${sx(s.horizons[i])},${sy(s.lower![i])}`,
    );
    svg.appendChild(
      el("polygon", {
        points: [...forward, ...back].join(" "),
        fill: s.color,
        "fill-opacity": "0.14",
        stroke: "none",
        class: "ci-band",
      }),
    );
  }

  for (const s of series) {
    const line = el("polyline", {
      points: s.horizons.map((x, i) => `${sx(x)},${sy(s.values[i])}`).join(" "),
      fill: "none",
      stroke: s.color,
      "stroke-width": "2",
      class: s.dashed ? "series dashed" : "series",
    });
    if (s.dashed) line.setAttribute("stroke-dasharray", "6 4");
    line.dataset.label = s.label;
    svg.appendChild(line);
  }

  // x axis with tick labels at a spread of returned horizons
  const axisY = HEIGHT - PAD.bottom;
  svg.appendChild(
    el("line", {
      x1: String(PAD.left),
      y1: String(axisY),
      x2: String(WIDTH - PAD.right),
      y2: String(axisY),
      stroke: "currentColor",
      "stroke-width": "1",
    }),
  );
  const ticks = series[0].horizons;
  const step = Math.max(1, Math.ceil(ticks.length / xTickCount));
  for (let i = 0; i < ticks.length; i += step) {
    const x = sx(ticks[i]);
    svg.appendChild(
      el("line", {
        x1: String(x), y1: String(axisY),
        x2: String(x), y2: String(axisY + 5),
        stroke: "currentColor", "stroke-width": "1",
      }),
    );
    const text = el("text", {
      x: String(x),
      y: String(axisY + 20),
      "text-anchor": "middle",
      class: "tick",
    });
    text.textContent = fmtHorizon(ticks[i]);
    svg.appendChild(text);
  }
  return svg;
}

export const PALETTE = ["#335c81", "#a23e48", "#2e7d5b"];
