// Typed client for the trial service. Every mutation carries a
// client-generated request id so retries and duplicate submissions are
// traceable end to end.

import type {
  ApiErrorBody,
  CompareResult,
  CreatedTrial,
  EnrollAck,
  OutcomeAck,
  ResponseAck,
  StateSnapshot,
} from "./types.js"

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly detail: string,
  ) {
    super(`${code}: ${detail}`)
  }
}

export class ServiceUnreachable extends Error {}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>

let requestCounter = 0

export const nextRequestId = (): string => {
  requestCounter += 1
  return `req-${Date.now().toString(36)}-${requestCounter}`
}

export interface CreateTrialRequest {
  objective?: string
  burn_in?: number
  gamma_a: number
  gamma_b: number
  gamma_source?: string
  seed?: number
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown, requestId?: string): Promise<T> {
    const headers: Record<string, string> = {}
    if (body !== undefined) headers["content-type"] = "application/json"
    if (requestId !== undefined) headers["x-request-id"] = requestId
    let response: Response
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      })
    } catch (err) {
      throw new ServiceUnreachable(String(err))
    }
    if (!response.ok) {
      let parsed: Partial<ApiErrorBody> = {}
      try {
        parsed = (await response.json()) as ApiErrorBody
      } catch {
        // non-JSON error body; fall through to the generic code
      }
      throw new ApiError(response.status, parsed.code ?? "unknown_error", parsed.detail ?? response.statusText)
    }
    return (await response.json()) as T
  }

  createTrial(body: CreateTrialRequest, requestId?: string): Promise<CreatedTrial> {
    return this.request("POST", "/trials", body, requestId)
  }

  enroll(trialId: string, requestId?: string): Promise<EnrollAck> {
    return this.request("POST", `/trials/${trialId}/patients`, undefined, requestId)
  }

  postResponse(trialId: string, patientId: number, responder: boolean, requestId?: string): Promise<ResponseAck> {
    return this.request("POST", `/trials/${trialId}/patients/${patientId}/response`, { responder }, requestId)
  }

  postOutcome(trialId: string, patientId: number, success: boolean, requestId?: string): Promise<OutcomeAck> {
    return this.request("POST", `/trials/${trialId}/patients/${patientId}/outcome`, { success }, requestId)
  }

  getState(trialId: string): Promise<StateSnapshot> {
    return this.request("GET", `/trials/${trialId}/state`)
  }

  compare(trialId: string, di: string, dj: string): Promise<CompareResult> {
    return this.request("GET", `/trials/${trialId}/compare?di=${di}&dj=${dj}`)
  }
}
