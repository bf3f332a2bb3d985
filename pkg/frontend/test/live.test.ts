// End-to-end contract against a live service instance: the dashboard
// must display exactly the GET /state payload (after fixed 3-decimal
// formatting), and an enroll -> response -> outcome flow must update the
// displayed first-stage probability within one refresh cycle.

import { spawn, type ChildProcess } from "node:child_process"
import { mkdtempSync } from "node:fs"
import { tmpdir } from "node:os"
import { join } from "node:path"
import { afterAll, beforeAll, describe, expect, it } from "vitest"

import { ApiClient } from "../src/api.js"
import { fmt3 } from "../src/format.js"
import { TrialConsole } from "../src/model.js"
import { consoleHtml, dashboardHtml } from "../src/render.js"

const PORT = 8613
const BASE = `http://127.0.0.1:${PORT}`

let server: ChildProcess

const waitForService = async (timeoutMs = 30_000): Promise<void> => {
  const deadline = Date.now() + timeoutMs
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${BASE}/trials/probe/state`)
      if (response.status === 404) return
    } catch {
      // not listening yet
    }
    await new Promise((resolve) => setTimeout(resolve, 200))
  }
  throw new Error("trial service did not come up")
}

const until = async (check: () => boolean, timeoutMs = 10_000): Promise<void> => {
  const deadline = Date.now() + timeoutMs
  while (Date.now() < deadline) {
    if (check()) return
    await new Promise((resolve) => setTimeout(resolve, 25))
  }
  throw new Error("condition not reached")
}

const extractField = (html: string, path: string): string | undefined =>
  html.match(new RegExp(`<span data-field="${path.replace(/\./g, "\\.")}">([^<]*)</span>`))?.[1]

beforeAll(async () => {
  const dataDir = mkdtempSync(join(tmpdir(), "smart-alloc-console-"))
  const script = [
    "import uvicorn",
    "from smart_alloc.service import create_app",
    `uvicorn.run(create_app(${JSON.stringify(dataDir)}), host="127.0.0.1", port=${PORT}, log_level="error")`,
  ].join("; ")
  server = spawn("python3", ["-c", script], { stdio: "ignore" })
  await waitForService()
}, 40_000)

afterAll(() => {
  server?.kill()
})

describe("live service contract", () => {
  it("displays exactly what GET /state returns and tracks the flow", { timeout: 30_000 }, async () => {
    const client = new ApiClient(BASE)
    const created = await client.createTrial({
      gamma_a: 0.4,
      gamma_b: 0.3,
      burn_in: 4,
      seed: 20_260_810,
      objective: "diff",
    })
    const trialId = created.trial_id

    // seed the trial past its burn-in with a deterministic pattern
    const pattern: Array<[boolean, boolean]> = [
      [true, true], [false, false], [false, true], [true, false],
      [false, true], [true, true], [false, false], [false, true],
      [true, true], [false, false],
    ]
    for (const [responder, success] of pattern) {
      const enrolled = await client.enroll(trialId)
      await client.postResponse(trialId, enrolled.patient_id, responder)
      await client.postOutcome(trialId, enrolled.patient_id, success)
    }

    // dashboard values string-match the payload after 3-decimal formatting
    const state = await client.getState(trialId)
    const html = dashboardHtml(state)
    expect(extractField(html, "ratios.tau_a.estimate")).toBe(fmt3(state.ratios.tau_a.estimate))
    expect(extractField(html, "ratios.tau_ac.estimate")).toBe(fmt3(state.ratios.tau_ac.estimate))
    expect(extractField(html, "ratios.tau_be.estimate")).toBe(fmt3(state.ratios.tau_be.estimate))
    expect(extractField(html, "stage1_probability")).toBe(fmt3(state.stage1_probability))
    expect(extractField(html, "outcomes_recorded")).toBe(String(state.outcomes_recorded))

    // drive one complete patient through the console's queue
    const view = new TrialConsole(client, trialId)
    await view.refresh()
    const before = extractField(consoleHtml(view.state), "stage1_probability")
    expect(before).toBe(fmt3(state.stage1_probability))

    view.enroll()
    await until(() => view.pendingCount === 0 && view.state.lastAssignment !== null)
    const assignment = view.state.lastAssignment!
    view.recordResponse(assignment.patientId, false)
    await until(() => view.pendingCount === 0 && view.state.lastAssignment?.stage2 !== undefined)
    expect(["OPT1", "OPT2"]).toContain(view.state.lastAssignment!.stage2)
    view.recordOutcome(assignment.patientId, true)
    await until(() => view.pendingCount === 0 && view.state.snapshot!.outcomes_recorded === 11)

    // within one refresh cycle the displayed probability equals the
    // service's current value
    const displayed = extractField(consoleHtml(view.state), "stage1_probability")
    const fresh = await client.getState(trialId)
    expect(displayed).toBe(fmt3(fresh.stage1_probability))
    expect(displayed).not.toBe(before)
  })

  it("surfaces machine-readable errors verbatim", { timeout: 15_000 }, async () => {
    const client = new ApiClient(BASE)
    const created = await client.createTrial({ gamma_a: 0.4, gamma_b: 0.3, burn_in: 4 })
    const view = new TrialConsole(client, created.trial_id)
    view.recordOutcome(999, true)
    await until(() => view.state.error !== null)
    expect(view.state.error!.code).toBe("unknown_patient")
  })
})
