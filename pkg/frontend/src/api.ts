// Typed client for the /v1 workbench service. The console renders only
// what the server reports; every call here maps 1:1 to a documented endpoint.

export interface BBox {
  x: number
  y: number
  w: number
  h: number
}

export interface Candidate {
  id: number
  cx: number
  cy: number
  z_mm: number
  area_px: number
  bbox: BBox
}

export interface PlanRow {
  index: number
  category: string
  pick: { x_mm: number; y_mm: number; z_mm: number }
  slot: string
}

export interface Binding {
  statement: string
  candidate_id: number
}

export interface Association {
  bindings: Binding[]
  unmatched: string[]
  unclaimed: number[]
}

export interface SessionSnapshot {
  id: string
  phase: string
  candidates: Candidate[]
  d_s: number | null
  classification_text: string | null
  assoc: Association | null
  assoc_error: { code: string; message: string; candidate_ids?: number[] } | null
  plan: { subtasks: PlanRow[]; provenance: string; latency_ms: number | null } | null
  events: ExecutionEvent[]
}

export interface ExecutionEvent {
  timestamp: number
  kind: string
  subtask_index: number
  payload: Record<string, unknown>
}

export interface ApiError {
  code: string
  message: string
  detail?: unknown
}

export class ServiceError extends Error {
  constructor(public status: number, public body: ApiError) {
    super(`${body.code}: ${body.message}`)
  }
}

async function expect<T>(resp: Response): Promise<T> {
  const body = await resp.json()
  if (!resp.ok) throw new ServiceError(resp.status, body as ApiError)
  return body as T
}

export class WorkbenchClient {
  constructor(public base: string, private fetchFn: typeof fetch = fetch) {}

  health(): Promise<{ status: string; version: string }> {
    return this.fetchFn(`${this.base}/v1/health`).then(r => expect(r))
  }

  createFromScene(sceneJson: string): Promise<{ id: string; phase: string }> {
    return this.fetchFn(`${this.base}/v1/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: sceneJson,
    }).then(r => expect(r))
  }

  createFromFrame(frame: ArrayBuffer): Promise<{ id: string; phase: string }> {
    return this.fetchFn(`${this.base}/v1/sessions`, {
      method: "POST",
      headers: { "content-type": "application/octet-stream" },
      body: frame,
    }).then(r => expect(r))
  }

  snapshot(sid: string): Promise<SessionSnapshot> {
    return this.fetchFn(`${this.base}/v1/sessions/${sid}`).then(r => expect(r))
  }

  async frame(sid: string): Promise<ArrayBuffer> {
    const resp = await this.fetchFn(`${this.base}/v1/sessions/${sid}/frame`)
    if (!resp.ok) throw new ServiceError(resp.status, await resp.json())
    return resp.arrayBuffer()
  }

  localize(sid: string): Promise<{ candidates: Candidate[]; d_s: number }> {
    return this.fetchFn(`${this.base}/v1/sessions/${sid}/localize`, {
      method: "POST",
    }).then(r => expect(r))
  }

  classify(sid: string, text: string): Promise<{ assoc: Association | null; error: ApiError | null }> {
    return this.fetchFn(`${this.base}/v1/sessions/${sid}/classify`, {
      method: "POST",
      headers: { "content-type": "text/plain" },
      body: text,
    }).then(r => expect(r))
  }

  plan(sid: string, instruction: string, mode: "deterministic" | "llm" = "deterministic"):
      Promise<{ plan: { subtasks: PlanRow[] }; provenance: string; latency_ms: number | null }> {
    return this.fetchFn(`${this.base}/v1/sessions/${sid}/plan`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ instruction, mode }),
    }).then(r => expect(r))
  }

  step(sid: string): Promise<{ events: ExecutionEvent[]; phase: string }> {
    return this.fetchFn(`${this.base}/v1/sessions/${sid}/step`, {
      method: "POST",
    }).then(r => expect(r))
  }

  eventsUrl(sid: string, after?: number): string {
    const suffix = after === undefined ? "" : `?after=${after}`
    return `${this.base}/v1/sessions/${sid}/events${suffix}`
  }
}
