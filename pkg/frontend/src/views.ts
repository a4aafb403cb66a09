import type { EffectDto, TrajectoryDto } from "./api.js";
import { buildChart, PALETTE, type ChartSeries } from "./chart.js";
import { fmt, fmtHorizon, fmtSigned } from "./format.js";

function h<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

export function profileLetter(i: number): string {
  return String.fromCharCode(65 + i);
}

export function displayLabel(pred: TrajectoryDto, i: number): string {
  return pred.label || `Profile ${profileLetter(i)}`;
}

/** Index of a summary horizon inside the response horizon array. */
function horizonIndex(pred: TrajectoryDto, l: number): number {
  const idx = pred.horizons.indexOf(l);
  if (idx < 0) throw new Error(`horizon ${l} missing from the service response`);
  return idx;
}

export function buildTrajectoryChart(predictions: TrajectoryDto[]): SVGSVGElement {
  const series: ChartSeries[] = predictions.map((p, i) => ({
    label: displayLabel(p, i),
    color: PALETTE[i % PALETTE.length],
    horizons: p.horizons,
    values: p.values,
    lower: p.ci_lower,
    upper: p.ci_upper,
  }));
  return buildChart(series);
}

export function buildLegend(predictions: TrajectoryDto[]): HTMLElement {
  const legend = h("div", "legend");
  predictions.forEach((p, i) => {
    const item = h("span", "legend-item");
    const swatch = h("span", "swatch");
    swatch.style.background = PALETTE[i % PALETTE.length];
    item.append(swatch, h("span", "", displayLabel(p, i)));
    legend.appendChild(item);
  });
  return legend;
}

/**
 * Years-of-life-lost summary at the chosen horizons. Values and bands are
 * copied from the response; the only arithmetic is the between-profile
 * difference column, each entry the subtraction of two response values at
 * the same horizon.
 */
export function buildSummaryTable(
  predictions: TrajectoryDto[],
  summaryHorizons: number[],
): HTMLTableElement {
  const table = h("table", "summary");
  const head = table.createTHead().insertRow();
  head.appendChild(h("th", "", "profile"));
  for (const l of summaryHorizons) {
    head.appendChild(h("th", "", `RMTL at l=${fmtHorizon(l)} (CI)`));
  }
  const showDiff = predictions.length > 1;
  if (showDiff) {
    for (const l of summaryHorizons) {
      head.appendChild(h("th", "", `vs ${displayLabel(predictions[0], 0)} at l=${fmtHorizon(l)}`));
    }
  }
  const body = table.createTBody();
  predictions.forEach((pred, i) => {
    const row = body.insertRow();
    row.appendChild(h("th", "", displayLabel(pred, i)));
    for (const l of summaryHorizons) {
      const j = horizonIndex(pred, l);
      const cell = row.insertCell();
      cell.className = "value-cell";
      cell.textContent = `${fmt(pred.values[j])} (${fmt(pred.ci_lower[j])} to ${fmt(pred.ci_upper[j])})`;
    }
    if (showDiff) {
      for (const l of summaryHorizons) {
        const cell = row.insertCell();
        cell.className = "diff-cell";
        if (i === 0) {
          cell.textContent = "reference";
        } else {
          const j = horizonIndex(pred, l);
          const j0 = horizonIndex(predictions[0], l);
          cell.textContent = `${fmtSigned(pred.values[j] - predictions[0].values[j0])} years`;
        }
      }
    }
  });
  return table;
}

/**
 * One covariate's cumulative-effect curve with its CI band, optionally
 * overlaid with the dashed slope-magnitude series, plus a numeric readout
 * at the summary horizons.
 */
export function buildEffectPanel(
  effect: EffectDto,
  summaryHorizons: number[],
  showSlope: boolean,
): HTMLElement {
  const panel = h("div", "effect-panel");
  const series: ChartSeries[] = [
    {
      label: effect.covariate,
      color: PALETTE[0],
      horizons: effect.horizons,
      values: effect.values,
      lower: effect.ci_lower,
      upper: effect.ci_upper,
    },
  ];
  if (showSlope) {
    series.push({
      label: "slope magnitude",
      color: PALETTE[1],
      horizons: effect.horizons,
      values: effect.slopes.map(Math.abs),
      dashed: true,
    });
  }
  panel.appendChild(buildChart(series));

  const readout = h("dl", "effect-readout");
  for (const l of summaryHorizons) {
    const j = effect.horizons.indexOf(l);
    if (j < 0) continue;
    readout.appendChild(h("dt", "", `at l=${fmtHorizon(l)}`));
    readout.appendChild(
      h(
        "dd",
        "",
        `cumulative effect ${fmt(effect.values[j])} ` +
          `(${fmt(effect.ci_lower[j])} to ${fmt(effect.ci_upper[j])}), ` +
          `current slope ${fmt(effect.slopes[j])} per year`,
      ),
    );
  }
  panel.appendChild(readout);
  return panel;
}
