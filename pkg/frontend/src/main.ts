// Browser wiring: forms dispatch into the view model, the page re-renders
// from acknowledged state, and a poll loop (never faster than 2 s)
// refreshes the dashboard.

import { ApiClient } from "./api.js"
import { TrialConsole } from "./model.js"
import { consoleHtml } from "./render.js"

const REFRESH_MS = 2000

const byId = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id)
  if (!el) throw new Error(`missing element #${id}`)
  return el as T
}

let active: TrialConsole | null = null
let pollTimer: number | undefined

const render = () => {
  if (active) byId("console").innerHTML = consoleHtml(active.state)
}

const attach = (client: ApiClient, trialId: string) => {
  active = new TrialConsole(client, trialId, render)
  void active.refresh()
  if (pollTimer !== undefined) window.clearInterval(pollTimer)
  pollTimer = window.setInterval(() => void active?.refresh(), REFRESH_MS)
}

const setup = () => {
  const baseUrl = byId<HTMLInputElement>("base-url")
  const trialInput = byId<HTMLInputElement>("trial-id")
  const status = byId<HTMLElement>("status")

  byId<HTMLButtonElement>("create-trial").addEventListener("click", async () => {
    const client = new ApiClient(baseUrl.value.replace(/\/$/, ""))
    try {
      const created = await client.createTrial({
        gamma_a: Number(byId<HTMLInputElement>("gamma-a").value),
        gamma_b: Number(byId<HTMLInputElement>("gamma-b").value),
        burn_in: Number(byId<HTMLInputElement>("burn-in").value),
        objective: byId<HTMLSelectElement>("objective").value,
      })
      trialInput.value = created.trial_id
      status.textContent = `created trial ${created.trial_id}`
      attach(client, created.trial_id)
    } catch (err) {
      status.textContent = String(err)
    }
  })

  byId<HTMLButtonElement>("attach-trial").addEventListener("click", () => {
    const client = new ApiClient(baseUrl.value.replace(/\/$/, ""))
    attach(client, trialInput.value.trim())
    status.textContent = `watching trial ${trialInput.value.trim()}`
  })

  byId<HTMLButtonElement>("enroll").addEventListener("click", () => {
    active?.enroll()
  })

  byId<HTMLButtonElement>("record-response").addEventListener("click", () => {
    const pid = Number(byId<HTMLInputElement>("response-pid").value)
    const responder = byId<HTMLSelectElement>("responder").value === "yes"
    if (Number.isFinite(pid) && pid > 0) active?.recordResponse(pid, responder)
  })

  byId<HTMLButtonElement>("record-outcome").addEventListener("click", () => {
    const pid = Number(byId<HTMLInputElement>("outcome-pid").value)
    const success = byId<HTMLSelectElement>("outcome").value === "success"
    if (Number.isFinite(pid) && pid > 0) active?.recordOutcome(pid, success)
  })

  byId<HTMLButtonElement>("run-compare").addEventListener("click", () => {
    const di = byId<HTMLSelectElement>("compare-di").value
    const dj = byId<HTMLSelectElement>("compare-dj").value
    void active?.runCompare(di, dj)
  })
}

document.addEventListener("DOMContentLoaded", setup)
