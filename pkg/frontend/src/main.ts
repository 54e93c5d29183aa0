// Browser wiring: one session per tab, every button a single API call.

import { WorkbenchClient, type Candidate, type SessionSnapshot } from "./api.js"
import { decodeFrame, toHeatmapRgba } from "./cvlm.js"
import { EventFeed, subscribe } from "./events.js"
import { drawOverlay, hitTest, overlayBoxes, prefillLine } from "./overlay.js"
import { classificationRows, enabledActions, eventRow, occupiedSlots,
         planRows, provenanceBadge } from "./view.js"

const client = new WorkbenchClient("")
let sid: string | null = null
let candidates: Candidate[] = []
let feed = new EventFeed()

const $ = (id: string) => document.getElementById(id) as HTMLElement
const input = (id: string) => document.getElementById(id) as HTMLInputElement
const area = (id: string) => document.getElementById(id) as HTMLTextAreaElement

function setStatus(text: string, isError = false): void {
  const el = $("status")
  el.textContent = text
  el.className = isError ? "error" : ""
}

function syncButtons(phase: string): void {
  const actions = enabledActions(phase)
  for (const name of ["localize", "classify", "plan", "step", "watch"]) {
    const btn = document.getElementById(`btn-${name}`) as HTMLButtonElement | null
    if (btn) btn.disabled = !actions.includes(name)
  }
  $("phase").textContent = phase
}

async function refresh(): Promise<void> {
  if (!sid) return
  const snap = await client.snapshot(sid)
  renderSnapshot(snap)
}

function renderSnapshot(snap: SessionSnapshot): void {
  candidates = snap.candidates
  syncButtons(snap.phase)
  renderOverlays()
  renderClassification(snap)
  renderPlan(snap)
  $("banner").textContent =
    snap.phase !== "created" && snap.candidates.length === 0
      ? "no objects detected" : ""
}

async function renderFrame(): Promise<void> {
  if (!sid) return
  const frame = decodeFrame(await client.frame(sid))
  const canvas = $("scene") as unknown as HTMLCanvasElement
  canvas.width = frame.width
  canvas.height = frame.height
  const ctx = canvas.getContext("2d")!
  ctx.putImageData(new ImageData(toHeatmapRgba(frame), frame.width, frame.height), 0, 0)
  renderOverlays()
}

function renderOverlays(): void {
  const canvas = $("scene") as unknown as HTMLCanvasElement
  const ctx = canvas.getContext("2d")
  if (!ctx) return
  for (const box of overlayBoxes(candidates)) drawOverlay(ctx, box)
}

function renderClassification(snap: SessionSnapshot): void {
  const list = $("bindings")
  list.replaceChildren()
  for (const row of classificationRows(snap.assoc, snap.assoc_error)) {
    const li = document.createElement("li")
    li.textContent = row.text
    li.className = row.tone
    list.appendChild(li)
  }
}

function renderPlan(snap: SessionSnapshot): void {
  const tbody = $("plan-rows")
  tbody.replaceChildren()
  if (!snap.plan) {
    $("provenance").textContent = ""
    return
  }
  $("provenance").textContent =
    provenanceBadge(snap.plan.provenance, snap.plan.latency_ms)
  for (const row of planRows(snap.plan.subtasks)) {
    const tr = document.createElement("tr")
    for (const cell of [String(row.index), row.category, row.pick, row.slot]) {
      const td = document.createElement("td")
      td.textContent = cell
      tr.appendChild(td)
    }
    tbody.appendChild(tr)
  }
}

function renderFeed(): void {
  const list = $("events")
  list.replaceChildren()
  for (const evt of feed.events) {
    const row = eventRow(evt)
    const li = document.createElement("li")
    li.textContent = row.text
    li.className = row.tone
    list.appendChild(li)
  }
  const occupied = occupiedSlots(feed.events)
  for (const cell of document.querySelectorAll<HTMLElement>("#board [data-slot]")) {
    cell.classList.toggle("occupied", occupied.has(cell.dataset.slot!))
  }
}

async function guard(work: () => Promise<void>): Promise<void> {
  try {
    await work()
  } catch (err) {
    setStatus(String(err), true)
  }
}

function wire(): void {
  $("btn-create").addEventListener("click", () => guard(async () => {
    const created = await client.createFromScene(area("scene-json").value)
    sid = created.id
    feed = new EventFeed()
    setStatus(`session ${sid}`)
    await refresh()
  }))
  $("btn-localize").addEventListener("click", () => guard(async () => {
    await client.localize(sid!)
    await renderFrame()
    await refresh()
  }))
  $("btn-classify").addEventListener("click", () => guard(async () => {
    const result = await client.classify(sid!, area("classification").value)
    if (result.error) setStatus(result.error.message, true)
    await refresh()
  }))
  $("btn-plan").addEventListener("click", () => guard(async () => {
    const mode = input("mode-llm").checked ? "llm" : "deterministic"
    await client.plan(sid!, input("instruction").value, mode)
    await refresh()
  }))
  $("btn-step").addEventListener("click", () => guard(async () => {
    const result = await client.step(sid!)
    feed.pushAll(result.events.map((e, i) => ({
      index: (feed.resumeAfter ?? -1) + 1 + i,
      kind: e.kind,
      data: e as unknown as Record<string, unknown>,
    })))
    renderFeed()
    await refresh()
  }))
  $("btn-watch").addEventListener("click", () => {
    subscribe(after => client.eventsUrl(sid!, after), feed,
      () => renderFeed(),
      phase => { syncButtons(phase); void refresh() })
  })
  ;($("scene") as unknown as HTMLCanvasElement).addEventListener("click", e => {
    const rect = (e.target as HTMLCanvasElement).getBoundingClientRect()
    const hit = hitTest(candidates, e.clientX - rect.left, e.clientY - rect.top)
    if (hit) {
      const box = area("classification")
      box.value = (box.value ? box.value.replace(/\n?$/, "\n") : "")
        + prefillLine(candidates, hit)
    }
  })
}

wire()
syncButtons("created")
