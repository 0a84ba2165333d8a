/** Typed client for the debugging service. The UI never derives dialogue
 *  state itself: everything rendered comes from these responses. */

export interface RegistryOption {
  name: string
  config: Record<string, unknown>
}

export interface RegistryView {
  packs: string[]
  stages: Record<string, RegistryOption[]>
  schemas: Record<string, unknown>
}

export interface StageTrace {
  turn_index: number
  observation: string
  nlu_acts: string[] | null
  belief: BeliefState | null
  policy_acts: string[]
  response: string | null
  overridden_stage: string | null
}

export interface DomainBelief {
  constraints: Record<string, string>
  requested: string[]
  recommended: boolean
}

export interface BeliefState {
  active_domain: string | null
  domains: Record<string, DomainBelief>
}

export interface SessionHistory {
  id: string
  status: string
  pack: string
  selections: Record<string, string>
  turns: StageTrace[]
}

export interface ApiErrorBody {
  code: string
  message: string
  field_path?: string
}

export class ServiceError extends Error {
  readonly code: string
  readonly fieldPath?: string

  constructor(body: ApiErrorBody, readonly status: number) {
    super(body.message)
    this.code = body.code
    this.fieldPath = body.field_path
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(base + path, {
    headers: { 'Content-Type': 'application/json' },
    ...init,
  })
  const text = await response.text()
  const body = text ? JSON.parse(text) : null
  if (!response.ok) {
    throw new ServiceError(body as ApiErrorBody, response.status)
  }
  return body as T
}

export class ServiceClient {
  constructor(readonly base: string = '') {}

  getRegistry(): Promise<RegistryView> {
    return request(this.base, '/registry')
  }

  createSession(selections: Record<string, string>, pack: string): Promise<{ id: string }> {
    return request(this.base, '/sessions', {
      method: 'POST',
      body: JSON.stringify({ selections, pack }),
    })
  }

  postTurn(sessionId: string, utterance: string): Promise<StageTrace> {
    return request(this.base, `/sessions/${sessionId}/turns`, {
      method: 'POST',
      body: JSON.stringify({ utterance }),
    })
  }

  overrideStage(sessionId: string, stage: string, output: unknown): Promise<StageTrace> {
    return request(this.base, `/sessions/${sessionId}/turns/last/override`, {
      method: 'POST',
      body: JSON.stringify({ stage, output }),
    })
  }

  getHistory(sessionId: string): Promise<SessionHistory> {
    return request(this.base, `/sessions/${sessionId}/history`)
  }

  closeSession(sessionId: string): Promise<{ id: string; status: string }> {
    return request(this.base, `/sessions/${sessionId}`, { method: 'DELETE' })
  }
}
