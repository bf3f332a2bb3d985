// View model: server-acknowledged state plus a queue of pending actions.
// At most one mutation is ever in flight; allocations always come from the
// server's draws, so nothing is rendered optimistically.

import { ApiClient, ApiError, ServiceUnreachable, nextRequestId } from "./api.js"
import type { CompareResult, EnrollAck, OutcomeAck, ResponseAck, StateSnapshot } from "./types.js"

export type ActionSpec =
  | { kind: "enroll" }
  | { kind: "response"; patientId: number; responder: boolean }
  | { kind: "outcome"; patientId: number; success: boolean }

export type PendingAction = ActionSpec & { requestId: string }

export interface AssignmentCard {
  patientId: number
  stage1: string
  stage1Probability: number
  stage2?: string
  stage2Probability?: number
}

export interface ConsoleState {
  snapshot: StateSnapshot | null
  lastAssignment: AssignmentCard | null
  lastOutcome: OutcomeAck | null
  compare: CompareResult | null
  compareBlocked: string | null
  error: { code: string; detail: string } | null
  serviceDown: boolean
  busy: boolean
}

export class TrialConsole {
  readonly state: ConsoleState = {
    snapshot: null,
    lastAssignment: null,
    lastOutcome: null,
    compare: null,
    compareBlocked: null,
    error: null,
    serviceDown: false,
    busy: false,
  }

  private queue: PendingAction[] = []
  private inFlight = false
  private current: PendingAction | null = null

  constructor(
    private readonly client: ApiClient,
    private readonly trialId: string,
    private readonly onChange: () => void = () => {},
  ) {}

  get pendingCount(): number {
    return this.queue.length + (this.inFlight ? 1 : 0)
  }

  /** Queue an action; identical consecutive submissions are dropped. */
  submit(action: ActionSpec): boolean {
    const last = this.queue[this.queue.length - 1] ?? this.current
    if (last && sameAction(last, action)) return false
    this.queue.push({ ...action, requestId: nextRequestId() })
    void this.pump()
    return true
  }

  enroll(): boolean {
    return this.submit({ kind: "enroll" })
  }

  recordResponse(patientId: number, responder: boolean): boolean {
    return this.submit({ kind: "response", patientId, responder })
  }

  recordOutcome(patientId: number, success: boolean): boolean {
    return this.submit({ kind: "outcome", patientId, success })
  }

  async refresh(): Promise<void> {
    try {
      this.state.snapshot = await this.client.getState(this.trialId)
      this.state.serviceDown = false
    } catch (err) {
      this.fail(err)
    }
    this.onChange()
  }

  async runCompare(di: string, dj: string): Promise<void> {
    this.state.compare = null
    this.state.compareBlocked = null
    try {
      this.state.compare = await this.client.compare(this.trialId, di, dj)
      this.state.serviceDown = false
    } catch (err) {
      if (err instanceof ApiError && err.code === "insufficient_data") {
        this.state.compareBlocked = err.detail
      } else {
        this.fail(err)
      }
    }
    this.onChange()
  }

  /** Drain the queue one mutation at a time, refreshing after each ack. */
  private async pump(): Promise<void> {
    if (this.inFlight) return
    const action = this.queue.shift()
    if (!action) return
    this.current = action
    this.inFlight = true
    this.state.busy = true
    this.state.error = null
    this.onChange()
    try {
      await this.execute(action)
      this.state.serviceDown = false
      // one refresh cycle after every acknowledged mutation
      this.state.snapshot = await this.client.getState(this.trialId)
    } catch (err) {
      this.fail(err)
    } finally {
      this.current = null
      this.inFlight = false
      this.state.busy = this.queue.length > 0
      this.onChange()
      void this.pump()
    }
  }

  private async execute(action: PendingAction): Promise<void> {
    if (action.kind === "enroll") {
      const ack: EnrollAck = await this.client.enroll(this.trialId, action.requestId)
      this.state.lastAssignment = {
        patientId: ack.patient_id,
        stage1: ack.stage1,
        stage1Probability: ack.probability,
      }
    } else if (action.kind === "response") {
      const ack: ResponseAck = await this.client.postResponse(
        this.trialId, action.patientId, action.responder, action.requestId,
      )
      const card = this.state.lastAssignment
      if (card && card.patientId === ack.patient_id) {
        card.stage2 = ack.stage2
        card.stage2Probability = ack.probability
      } else {
        this.state.lastAssignment = {
          patientId: ack.patient_id,
          stage1: "?",
          stage1Probability: Number.NaN,
          stage2: ack.stage2,
          stage2Probability: ack.probability,
        }
      }
    } else {
      this.state.lastOutcome = await this.client.postOutcome(
        this.trialId, action.patientId, action.success, action.requestId,
      )
    }
  }

  private fail(err: unknown): void {
    if (err instanceof ApiError) {
      this.state.error = { code: err.code, detail: err.detail }
    } else if (err instanceof ServiceUnreachable) {
      this.state.serviceDown = true
    } else {
      this.state.error = { code: "client_error", detail: String(err) }
    }
  }
}

const sameAction = (a: PendingAction, b: ActionSpec): boolean => {
  if (a.kind === "enroll" || b.kind === "enroll") return a.kind === b.kind
  if (a.kind === "response" && b.kind === "response") {
    return a.patientId === b.patientId && a.responder === b.responder
  }
  if (a.kind === "outcome" && b.kind === "outcome") {
    return a.patientId === b.patientId && a.success === b.success
  }
  return false
}
