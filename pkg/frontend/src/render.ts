// Pure HTML builders. Every rendered number sits in an element tagged
// with data-field naming the service payload path it came from, which is
// what the contract tests key on.

import { escapeHtml, fmt2, fmt3, fmtCount, fmtRatio } from "./format.js"
import type { AssignmentCard, ConsoleState } from "./model.js"
import type { CompareResult, StateSnapshot } from "./types.js"

const CELL_ORDER = ["AA", "AC", "AD", "BB", "BE", "BF"] as const
const DTR_ORDER = ["d1", "d2", "d3", "d4"] as const

const field = (path: string, text: string): string =>
  `<span data-field="${path}">${text}</span>`

export const sparklineSvg = (series: number[]): string => {
  if (series.length === 0) {
    return `<svg class="spark" viewBox="0 0 120 32"><text x="4" y="20" font-size="10">no outcomes yet</text></svg>`
  }
  const step = series.length > 1 ? 116 / (series.length - 1) : 0
  const points = series
    .map((value, i) => `${(2 + i * step).toFixed(2)},${(30 - 28 * value).toFixed(2)}`)
    .join(" ")
  return (
    `<svg class="spark" viewBox="0 0 120 32" data-points="${series.length}">` +
    `<polyline fill="none" stroke="currentColor" stroke-width="1.2" points="${points}" />` +
    `</svg>`
  )
}

export const dashboardHtml = (snapshot: StateSnapshot): string => {
  const cells = CELL_ORDER.map((name) => {
    const cell = snapshot.cells[name] ?? { count: 0, successes: 0 }
    return (
      `<tr><td>${name}</td>` +
      `<td>${field(`cells.${name}.count`, fmtCount(cell.count))}</td>` +
      `<td>${field(`cells.${name}.successes`, fmtCount(cell.successes))}</td></tr>`
    )
  }).join("")
  const dtr = DTR_ORDER.map((name) => {
    const row = snapshot.dtr_counts[name] ?? { patients: 0, failures: 0 }
    return (
      `<tr><td>${name}</td>` +
      `<td>${field(`dtr_counts.${name}.patients`, fmtCount(row.patients))}</td>` +
      `<td>${field(`dtr_counts.${name}.failures`, fmtCount(row.failures))}</td></tr>`
    )
  }).join("")
  const ratios = (["tau_a", "tau_ac", "tau_be"] as const)
    .map((name) => {
      const ratio = snapshot.ratios[name]
      return (
        `<div class="ratio"><label>${name}</label>` +
        `${field(`ratios.${name}.estimate`, fmt3(ratio.estimate))}` +
        `<small>${escapeHtml(fmtRatio(ratio))}</small></div>`
      )
    })
    .join("")
  const completeness = snapshot.estimates_complete
    ? ""
    : `<p class="hint">some cells have no outcomes yet; estimates are provisional</p>`
  return `
    <section class="card" id="dashboard">
      <h2>Trial ${escapeHtml(snapshot.trial_id)}</h2>
      <p>
        enrolled ${field("patients_enrolled", fmtCount(snapshot.patients_enrolled))},
        outcomes ${field("outcomes_recorded", fmtCount(snapshot.outcomes_recorded))},
        burn-in ${field("config.burn_in", fmtCount(snapshot.config.burn_in))},
        objective ${field("config.objective", escapeHtml(snapshot.config.objective))}
      </p>
      <div class="stage1">next arm-A probability:
        <strong>${field("stage1_probability", fmt3(snapshot.stage1_probability))}</strong>
      </div>
      <div class="ratios">${ratios}</div>
      ${completeness}
      <div class="spark-wrap">failure share ${sparklineSvg(snapshot.failure_series)}</div>
      <table class="cells"><thead><tr><th>cell</th><th>outcomes</th><th>successes</th></tr></thead>
        <tbody>${cells}</tbody></table>
      <table class="dtr"><thead><tr><th>regime</th><th>patients</th><th>failures</th></tr></thead>
        <tbody>${dtr}</tbody></table>
    </section>`
}

export const assignmentCardHtml = (card: AssignmentCard | null): string => {
  if (!card) return `<section class="card muted">no assignment yet</section>`
  const stage2 =
    card.stage2 === undefined
      ? `<p class="hint">awaiting responder status</p>`
      : card.stage2 === "CONT"
        ? `<p>responder: continues first-stage care (${field("response.stage2", "CONT")})</p>`
        : `<p>non-responder: assigned ${field("response.stage2", escapeHtml(card.stage2))}` +
          (card.stage2Probability === undefined
            ? ""
            : ` with probability ${field("response.probability", fmt2(card.stage2Probability))}`) +
          `</p>`
  return `
    <section class="card" id="assignment">
      <h3>Patient ${field("enroll.patient_id", fmtCount(card.patientId))}</h3>
      <p>first stage: <strong>${field("enroll.stage1", escapeHtml(card.stage1))}</strong>
        (probability ${field("enroll.probability", fmt2(card.stage1Probability))})</p>
      ${stage2}
    </section>`
}

export const compareCardHtml = (
  result: CompareResult | null,
  blocked: string | null,
): string => {
  if (blocked !== null) {
    return `<section class="card muted" id="compare">comparison unavailable: ${escapeHtml(blocked)}</section>`
  }
  if (!result) return `<section class="card muted" id="compare">pick two regimes to compare</section>`
  return `
    <section class="card" id="compare">
      <h3>${escapeHtml(result.di)} vs ${escapeHtml(result.dj)}</h3>
      <p>Z = ${field("compare.z", fmt3(result.z))},
         p = ${field("compare.p_value", fmt3(result.p_value))}</p>
      <p>success shares: ${field("compare.p_di", fmt3(result.p_di))}
         vs ${field("compare.p_dj", fmt3(result.p_dj))}
         (se ${field("compare.se_diff", fmt3(result.se_diff))})</p>
    </section>`
}

export const bannerHtml = (state: ConsoleState): string => {
  if (state.serviceDown) {
    return `<div class="banner down">service unreachable; retrying on the next refresh</div>`
  }
  if (state.error) {
    return `<div class="banner error">${escapeHtml(state.error.code)}: ${escapeHtml(state.error.detail)}</div>`
  }
  return ""
}

export const consoleHtml = (state: ConsoleState): string => {
  const dashboard = state.snapshot
    ? dashboardHtml(state.snapshot)
    : `<section class="card muted">no trial loaded</section>`
  return (
    bannerHtml(state) +
    dashboard +
    assignmentCardHtml(state.lastAssignment) +
    compareCardHtml(state.compare, state.compareBlocked)
  )
}
