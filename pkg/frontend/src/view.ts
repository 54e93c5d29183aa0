// Pure view-model builders: session snapshot in, render-ready rows out.
// All domain state comes from the server; re-fetching the snapshot rebuilds
// the identical view.

import type { Association, PlanRow, SessionSnapshot } from "./api.js"
import type { FeedEvent } from "./events.js"

export type RowTone = "ok" | "warn" | "error" | "muted"

export interface StatementRow {
  text: string
  tone: RowTone
  candidateId: number | null
}

export function classificationRows(
  assoc: Association | null,
  assocError: SessionSnapshot["assoc_error"],
): StatementRow[] {
  if (assocError) {
    return [{ text: assocError.message, tone: "error", candidateId: null }]
  }
  if (!assoc) return []
  const rows: StatementRow[] = assoc.bindings.map(b => ({
    text: `${b.statement} -> #${b.candidate_id}`,
    tone: "ok",
    candidateId: b.candidate_id,
  }))
  for (const s of assoc.unmatched) {
    rows.push({ text: `${s} (unmatched)`, tone: "warn", candidateId: null })
  }
  for (const id of assoc.unclaimed) {
    rows.push({ text: `candidate #${id} unclaimed`, tone: "muted", candidateId: id })
  }
  return rows
}

export interface PlanTableRow {
  index: number
  category: string
  pick: string
  slot: string
}

export function planRows(rows: PlanRow[]): PlanTableRow[] {
  return rows.map(r => ({
    index: r.index,
    category: r.category,
    pick: `(${r.pick.x_mm.toFixed(1)}, ${r.pick.y_mm.toFixed(1)}, ${r.pick.z_mm.toFixed(1)})`,
    slot: r.slot,
  }))
}

export function provenanceBadge(provenance: string, latencyMs: number | null): string {
  const lat = latencyMs === null ? "" : ` · ${latencyMs.toFixed(0)} ms`
  return `${provenance}${lat}`
}

/** Slots flip to occupied as place events arrive on the feed. */
export function occupiedSlots(events: FeedEvent[]): Set<string> {
  const slots = new Set<string>()
  for (const e of events) {
    if (e.kind === "place") slots.add(String(e.data["payload"] !== undefined
      ? (e.data["payload"] as Record<string, unknown>)["slot"]
      : e.data["slot"]))
  }
  return slots
}

export function eventRow(evt: FeedEvent): { text: string; tone: RowTone } {
  const d = evt.data
  const payload = (d["payload"] ?? {}) as Record<string, unknown>
  const detail = evt.kind === "error"
    ? String(payload["message"] ?? "")
    : JSON.stringify(payload)
  return {
    text: `[${evt.index}] t=${d["timestamp"]} ${evt.kind} #${d["subtask_index"]} ${detail}`,
    tone: evt.kind === "error" ? "error" : "ok",
  }
}

export const ACTIONABLE: Record<string, string[]> = {
  created: ["localize"],
  localized: ["classify"],
  classified: ["classify", "plan"],
  planned: ["plan", "step", "watch"],
  executing: ["step", "watch"],
  done: [],
  failed: [],
}

export function enabledActions(phase: string): string[] {
  return ACTIONABLE[phase] ?? []
}
