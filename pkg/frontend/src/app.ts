import {
  canonicalRequestBody,
  fetchMeta,
  PredictGate,
  type ErrorResponse,
  type FetchLike,
  type MetaResponse,
  type PredictResponse,
} from "./api.js";
import {
  isSubmittable,
  profileValid,
  profileValues,
  setField,
  templateFromMeta,
  type ProfileFormState,
} from "./formState.js";
import { fmtHorizon } from "./format.js";
import {
  buildEffectPanel,
  buildLegend,
  buildSummaryTable,
  buildTrajectoryChart,
  profileLetter,
} from "./views.js";

export const MAX_PROFILES = 3;
const DEFAULT_SUMMARY = "5, 10";

export interface AppOptions {
  fetchImpl: FetchLike;
  base?: string;
}

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

function isAbort(err: unknown): boolean {
  return err instanceof Error && err.name === "AbortError";
}

/**
 * The what-if tool: up to three profiles side by side, one predict call
 * per comparison, everything rendered from the service response.
 */
export class App {
  meta: MetaResponse | null = null;
  metaError = false;
  profiles: ProfileFormState[] = [];
  profileErrors: (string | null)[] = [];
  summaryRaw = DEFAULT_SUMMARY;
  summaryError: string | null = null;
  banner: string | null = null;
  lastResponse: PredictResponse | null = null;
  effectCovariate: string | null = null;
  showSlope = false;

  private gate: PredictGate;
  private fetchImpl: FetchLike;
  private base: string;
  private root: HTMLElement | null = null;

  constructor(options: AppOptions) {
    this.fetchImpl = options.fetchImpl;
    this.base = options.base ?? "";
    this.gate = new PredictGate(options.fetchImpl, this.base);
  }

  async mount(root: HTMLElement): Promise<void> {
    this.root = root;
    await this.loadMeta();
  }

  async loadMeta(): Promise<void> {
    try {
      this.meta = await fetchMeta(this.fetchImpl, this.base);
      this.metaError = false;
      if (this.profiles.length === 0) this.profiles = [templateFromMeta(this.meta)];
    } catch {
      this.meta = null;
      this.metaError = true;
    }
    this.render();
  }

  addProfile(): void {
    if (!this.meta || this.profiles.length >= MAX_PROFILES) return;
    this.profiles.push(templateFromMeta(this.meta));
    this.render();
  }

  removeProfile(i: number): void {
    if (this.profiles.length <= 1) return;
    this.profiles.splice(i, 1);
    this.profileErrors = [];
    this.render();
  }

  setFieldValue(profileIndex: number, name: string, raw: string): void {
    setField(this.profiles[profileIndex], name, raw);
    this.render();
  }

  setLabel(profileIndex: number, label: string): void {
    this.profiles[profileIndex].label = label;
    this.render();
  }

  setSummary(raw: string): void {
    this.summaryRaw = raw;
    this.summaryError = null;
    this.render();
  }

  /** User-chosen table horizons; null when the input does not parse. */
  summaryHorizons(): number[] | null {
    if (!this.meta) return null;
    const parts = this.summaryRaw.split(",").map((s) => s.trim()).filter((s) => s !== "");
    if (parts.length === 0) return null;
    const out: number[] = [];
    for (const part of parts) {
      const l = Number(part);
      if (!Number.isFinite(l)) return null;
      if (l < this.meta.grid.l_min || l > this.meta.grid.l_max) return null;
      out.push(l);
    }
    return out;
  }

  /** Dense request grid: the model's own horizons plus the table horizons. */
  requestGrid(summary: number[]): number[] {
    const all = new Set<number>([...this.meta!.grid.points, ...summary]);
    return [...all].sort((a, b) => a - b);
  }

  requestBody(): string | null {
    if (!this.meta || !isSubmittable(this.profiles)) return null;
    const summary = this.summaryHorizons();
    if (summary === null) return null;
    return canonicalRequestBody(
      this.meta.schema.entries,
      this.profiles.map(profileValues),
      this.requestGrid(summary),
      true,
    );
  }

  async submit(): Promise<void> {
    const body = this.requestBody();
    if (body === null) {
      if (this.summaryHorizons() === null) {
        this.summaryError = "horizons must be numbers inside the model range";
        this.render();
      }
      return;
    }
    this.banner = null;
    let outcome;
    try {
      outcome = await this.gate.predict(body);
    } catch (err) {
      if (isAbort(err)) return; // a newer comparison superseded this one
      this.banner = "prediction request failed; the service may be down";
      this.render();
      return;
    }
    if (outcome.stale) return;
    if (outcome.status === 200) {
      this.lastResponse = outcome.doc as PredictResponse;
      this.profileErrors = [];
      const effects = this.lastResponse.effects ?? [];
      if (!effects.some((e) => e.covariate === this.effectCovariate)) {
        this.effectCovariate = effects.length > 0 ? effects[0].covariate : null;
      }
    } else {
      this.applyErrors((outcome.doc as ErrorResponse).errors ?? []);
    }
    this.render();
  }

  private applyErrors(errors: { field: string; message: string }[]): void {
    this.profileErrors = this.profiles.map(() => null);
    const leftovers: string[] = [];
    for (const err of errors) {
      const fieldMatch = /^profiles\[(\d+)\]\.(.+)$/.exec(err.field);
      if (fieldMatch) {
        const idx = Number(fieldMatch[1]);
        const name = fieldMatch[2];
        const state = this.profiles[idx];
        const field = state?.fields.find((f) => f.entry.name === name);
        if (field) {
          field.error = err.message;
          continue;
        }
      }
      const profileMatch = /^profiles\[(\d+)\]$/.exec(err.field);
      if (profileMatch && this.profiles[Number(profileMatch[1])]) {
        this.profileErrors[Number(profileMatch[1])] = err.message;
        continue;
      }
      if (err.field === "grid" || err.field.startsWith("grid[")) {
        this.summaryError = err.message;
        continue;
      }
      leftovers.push(err.message);
    }
    if (leftovers.length > 0) this.banner = leftovers.join("; ");
  }

  // ---- rendering ----------------------------------------------------

  render(): void {
    if (!this.root) return;
    this.root.textContent = "";
    if (this.metaError) {
      this.root.appendChild(this.renderRetryBanner());
    }
    if (this.banner) {
      this.root.appendChild(h("div", "banner error", this.banner));
    }
    this.root.appendChild(this.renderProfiles());
    this.root.appendChild(this.renderControls());
    if (this.lastResponse) {
      this.root.appendChild(this.renderResults());
      this.root.appendChild(this.renderEffects());
    }
  }

  private renderRetryBanner(): HTMLElement {
    const banner = h("div", "banner error retry-banner");
    banner.appendChild(h("span", "", "the prediction service is unreachable"));
    const retry = h("button", "", "retry");
    retry.addEventListener("click", () => void this.loadMeta());
    banner.appendChild(retry);
    return banner;
  }

  private renderProfiles(): HTMLElement {
    const section = h("section", "profiles");
    const fieldset = h("fieldset");
    if (!this.meta) fieldset.disabled = true;
    this.profiles.forEach((state, i) => fieldset.appendChild(this.renderProfileCard(state, i)));
    section.appendChild(fieldset);

    const add = h("button", "add-profile", "add profile");
    add.disabled = !this.meta || this.profiles.length >= MAX_PROFILES;
    add.addEventListener("click", () => this.addProfile());
    section.appendChild(add);
    return section;
  }

  private renderProfileCard(state: ProfileFormState, i: number): HTMLElement {
    const card = h("div", "profile-card");
    card.dataset.index = String(i);
    const header = h("div", "card-header");
    header.appendChild(h("h3", "", `Profile ${profileLetter(i)}`));
    if (this.profiles.length > 1) {
      const remove = h("button", "remove", "remove");
      remove.addEventListener("click", () => this.removeProfile(i));
      header.appendChild(remove);
    }
    card.appendChild(header);
    if (this.profileErrors[i]) {
      card.appendChild(h("div", "field-error", this.profileErrors[i]!));
    }

    const labelRow = h("label", "field");
    labelRow.appendChild(h("span", "", "label"));
    const labelInput = h("input");
    labelInput.type = "text";
    labelInput.value = state.label;
    labelInput.name = "label";
    labelInput.addEventListener("change", () => this.setLabel(i, labelInput.value));
    labelRow.appendChild(labelInput);
    card.appendChild(labelRow);

    for (const field of state.fields) {
      const row = h("label", field.valid ? "field" : "field invalid");
      row.appendChild(h("span", "", field.entry.name));
      if (field.entry.kind === "categorical") {
        const select = h("select");
        select.name = field.entry.name;
        for (const level of field.entry.levels) {
          const option = document.createElement("option");
          option.value = level;
          option.textContent = level;
          option.selected = level === field.raw;
          select.appendChild(option);
        }
        select.addEventListener("change", () => this.setFieldValue(i, select.name, select.value));
        row.appendChild(select);
      } else {
        const input = h("input");
        input.type = "number";
        input.step = "any";
        input.name = field.entry.name;
        input.value = field.raw;
        input.addEventListener("change", () => this.setFieldValue(i, input.name, input.value));
        row.appendChild(input);
        row.appendChild(h("span", "hint", "numeric; any real value"));
      }
      if (field.error) row.appendChild(h("span", "field-error", field.error));
      card.appendChild(row);
    }
    return card;
  }

  private renderControls(): HTMLElement {
    const controls = h("section", "controls");
    const horizonRow = h("label", "field");
    horizonRow.appendChild(h("span", "", "table horizons (years, comma separated)"));
    const input = h("input");
    input.type = "text";
    input.name = "summary-horizons";
    input.value = this.summaryRaw;
    input.addEventListener("change", () => this.setSummary(input.value));
    horizonRow.appendChild(input);
    if (this.summaryError) horizonRow.appendChild(h("span", "field-error", this.summaryError));
    controls.appendChild(horizonRow);

    const compare = h("button", "compare", "compare profiles");
    compare.disabled =
      !this.meta || !isSubmittable(this.profiles) || this.summaryHorizons() === null;
    compare.addEventListener("click", () => void this.submit());
    controls.appendChild(compare);

    if (this.meta) {
      const range = this.meta.grid;
      controls.appendChild(
        h(
          "p",
          "hint",
          `predictions span l=${fmtHorizon(range.l_min)} to l=${fmtHorizon(range.l_max)} years`,
        ),
      );
    }
    return controls;
  }

  private renderResults(): HTMLElement {
    const section = h("section", "results");
    section.appendChild(h("h2", "", "predicted life lost"));
    const preds = this.lastResponse!.predictions;
    section.appendChild(buildLegend(preds));
    section.appendChild(buildTrajectoryChart(preds));
    const summary = this.summaryHorizons();
    if (summary !== null) {
      section.appendChild(buildSummaryTable(preds, summary));
    }
    return section;
  }

  private renderEffects(): HTMLElement {
    const section = h("section", "effects");
    const effects = this.lastResponse!.effects ?? [];
    if (effects.length === 0 || this.effectCovariate === null) return section;
    section.appendChild(h("h2", "", "covariate effect over time"));

    const picker = h("label", "field");
    picker.appendChild(h("span", "", "covariate"));
    const select = h("select");
    select.name = "effect-covariate";
    for (const eff of effects) {
      const option = document.createElement("option");
      option.value = eff.covariate;
      option.textContent = eff.covariate;
      option.selected = eff.covariate === this.effectCovariate;
      select.appendChild(option);
    }
    select.addEventListener("change", () => {
      this.effectCovariate = select.value;
      this.render();
    });
    picker.appendChild(select);
    section.appendChild(picker);

    const toggle = h("label", "field slope-toggle");
    const checkbox = h("input");
    checkbox.type = "checkbox";
    checkbox.checked = this.showSlope;
    checkbox.addEventListener("change", () => {
      this.showSlope = checkbox.checked;
      this.render();
    });
    toggle.appendChild(checkbox);
    toggle.appendChild(h("span", "", "overlay slope magnitude"));
    section.appendChild(toggle);

    const chosen = effects.find((e) => e.covariate === this.effectCovariate)!;
    const summary = this.summaryHorizons() ?? [];
    section.appendChild(buildEffectPanel(chosen, summary, this.showSlope));
    return section;
  }
}
