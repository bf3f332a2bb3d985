// Mirrors of the trial service's JSON payloads. The console never derives
// numbers of its own: everything rendered comes from these shapes.

export interface RatioEstimate {
  estimate: number
  ase: number | null
}

export interface CellCounts {
  count: number
  successes: number
}

export interface DtrCount {
  patients: number
  failures: number
}

export interface TrialConfig {
  objective: string
  burn_in: number
  gamma_a: number | null
  gamma_b: number | null
  gamma_source: string
  seed: number
}

export interface StateSnapshot {
  trial_id: string
  created_at: string
  updated_at: string
  last_seq: number
  config: TrialConfig
  patients_enrolled: number
  outcomes_recorded: number
  cells: Record<string, CellCounts>
  ratios: {
    tau_a: RatioEstimate
    tau_ac: RatioEstimate
    tau_be: RatioEstimate
  }
  estimates_complete: boolean
  stage1_probability: number
  failure_series: number[]
  dtr_counts: Record<string, DtrCount>
}

export interface CreatedTrial {
  trial_id: string
  config: TrialConfig
}

export interface EnrollAck {
  patient_id: number
  stage1: string
  probability: number
}

export interface ResponseAck {
  patient_id: number
  responder: boolean
  stage2: string
  probability?: number
}

export interface OutcomeAck {
  patient_id: number
  recorded: boolean
  cell: string
}

export interface CompareResult {
  di: string
  dj: string
  z: number
  p_value: number
  p_di: number
  p_dj: number
  se_diff: number
}

export interface ApiErrorBody {
  code: string
  detail: string
}
