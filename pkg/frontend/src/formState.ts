import type { MetaResponse, ProfileValues, SchemaEntry } from "./api.js";

/** One form field: the schema entry it renders plus the raw input text. */
export interface FieldState {
  entry: SchemaEntry;
  raw: string;
  valid: boolean;
  /** Server-side complaint for this field from the last 400, if any. */
  error: string | null;
}

export interface ProfileFormState {
  label: string;
  fields: FieldState[];
}

function validate(entry: SchemaEntry, raw: string): boolean {
  if (entry.kind === "categorical") return entry.levels.includes(raw);
  return raw.trim() !== "" && Number.isFinite(Number(raw));
}

export function makeField(entry: SchemaEntry, raw: string): FieldState {
  return { entry, raw, valid: validate(entry, raw), error: null };
}

/** Fresh profile with every categorical field preset to its reference level. */
export function templateFromMeta(meta: MetaResponse, label = ""): ProfileFormState {
  return {
    label,
    fields: meta.schema.entries.map((entry) =>
      makeField(entry, entry.kind === "categorical" ? entry.reference : ""),
    ),
  };
}

export function setField(state: ProfileFormState, name: string, raw: string): void {
  const field = state.fields.find((f) => f.entry.name === name);
  if (!field) throw new Error(`no form field named ${name}`);
  field.raw = raw;
  field.valid = validate(field.entry, raw);
  field.error = null;
}

export function profileValid(state: ProfileFormState): boolean {
  return state.fields.every((f) => f.valid);
}

/** Submit is allowed only when every field of every profile is valid. */
export function isSubmittable(states: ProfileFormState[]): boolean {
  return states.length > 0 && states.every(profileValid);
}

export function profileValues(state: ProfileFormState): ProfileValues {
  const values: Record<string, string | number> = {};
  for (const f of state.fields) {
    values[f.entry.name] = f.entry.kind === "numeric" ? Number(f.raw) : f.raw;
  }
  return { label: state.label || undefined, values };
}

/** Persistable snapshot: raw inputs only, schema comes back from /api/meta. */
export function serializeState(state: ProfileFormState): string {
  const raw: Record<string, string> = {};
  for (const f of state.fields) raw[f.entry.name] = f.raw;
  return JSON.stringify({ label: state.label, raw });
}

export function restoreState(snapshot: string, meta: MetaResponse): ProfileFormState {
  const doc = JSON.parse(snapshot) as { label: string; raw: Record<string, string> };
  const state = templateFromMeta(meta, doc.label);
  for (const f of state.fields) {
    if (doc.raw[f.entry.name] !== undefined) {
      setField(state, f.entry.name, doc.raw[f.entry.name]);
    }
  }
  return state;
}
