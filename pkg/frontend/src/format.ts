// Every number shown in the DOM goes through one of these three, so the
// contract tests can map any rendered token back to a response field.

/** RMTL values, effects, SEs, slopes: fixed three decimals. */
export function fmt(x: number): string {
  return x.toFixed(3);
}

/** Horizons print the way JSON wrote them: 5, 7.5, 10. */
export function fmtHorizon(l: number): string {
  return String(l);
}

/** Between-profile differences carry an explicit sign. */
export function fmtSigned(x: number): string {
  const s = x.toFixed(3);
  return x >= 0 ? `+${s}` : s;
}
