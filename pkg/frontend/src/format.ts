// Display formatting. These are the only transformations applied to
// server numbers before they reach the page, so contract tests can
// string-compare rendered values against raw payload fields.

import type { RatioEstimate } from "./types.js"

export const fmt3 = (value: number): string => value.toFixed(3)

export const fmt2 = (value: number): string => value.toFixed(2)

export const fmtRatio = (ratio: RatioEstimate): string =>
  ratio.ase === null ? `${fmt3(ratio.estimate)} (se pending)` : `${fmt3(ratio.estimate)} +/- ${fmt3(ratio.ase)}`

export const fmtCount = (value: number): string => String(value)

export const escapeHtml = (text: string): string =>
  text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
